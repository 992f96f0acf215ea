//! Ground-truth 6-DOF multirotor model.
//!
//! State layout used throughout the crate (12-vector):
//!
//! | index | symbol        | frame    |
//! |-------|---------------|----------|
//! | 0..3  | x, y, z       | NED      |
//! | 3..6  | ẋ, ẏ, ż       | NED      |
//! | 6..9  | φ, θ, ψ       | Euler    |
//! | 9..12 | p, q, r       | body     |
//!
//! Inputs are the wrench `(f_z, L, M, N)`. `f_z` acts along body z, which points
//! down, so lift is a negative `f_z` and hover is `f_z = -m_t g`.

use nalgebra::{Matrix3, Matrix4, SVector, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type StateVector = SVector<f64, 12>;
pub type InputVector = Vector4<f64>;

/// Default distance from ±π/2 pitch at which attitude is declared singular.
pub const SINGULARITY_MARGIN: f64 = 1e-3;

/// Wrap an angle into (-π, π].
pub fn wrap_angle(angle: f64) -> f64 {
    use std::f64::consts::PI;
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Pose and velocity of the vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidBodyState {
    /// Position in the inertial NED frame, m.
    pub position: Vector3<f64>,
    /// Inertial-frame velocity, m/s.
    pub velocity: Vector3<f64>,
    /// Roll, pitch, yaw, rad.
    pub euler: Vector3<f64>,
    /// Body rates p, q, r, rad/s.
    pub body_rates: Vector3<f64>,
}

impl Default for RigidBodyState {
    fn default() -> Self {
        Self::at_rest(Vector3::zeros(), 0.0)
    }
}

impl RigidBodyState {
    /// Level, motionless state at `position` with heading `yaw`.
    pub fn at_rest(position: Vector3<f64>, yaw: f64) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            euler: Vector3::new(0.0, 0.0, yaw),
            body_rates: Vector3::zeros(),
        }
    }

    pub fn to_vector(&self) -> StateVector {
        let mut x = StateVector::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&self.position);
        x.fixed_rows_mut::<3>(3).copy_from(&self.velocity);
        x.fixed_rows_mut::<3>(6).copy_from(&self.euler);
        x.fixed_rows_mut::<3>(9).copy_from(&self.body_rates);
        x
    }

    pub fn from_vector(x: &StateVector) -> Self {
        Self {
            position: x.fixed_rows::<3>(0).into_owned(),
            velocity: x.fixed_rows::<3>(3).into_owned(),
            euler: x.fixed_rows::<3>(6).into_owned(),
            body_rates: x.fixed_rows::<3>(9).into_owned(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }

    /// Checks finiteness and the pitch-singularity margin.
    pub fn validate(&self, margin: f64) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::InvalidParameter("state has non-finite components".into()));
        }
        check_pitch(self.euler.y, margin)
    }
}

/// Collective body-z force and body moments.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Wrench {
    /// Body z-axis force, N. Negative lifts the vehicle.
    pub fz: f64,
    /// Roll moment, N·m.
    pub l: f64,
    /// Pitch moment, N·m.
    pub m: f64,
    /// Yaw moment, N·m.
    pub n: f64,
}

impl Wrench {
    pub const fn new(fz: f64, l: f64, m: f64, n: f64) -> Self {
        Self { fz, l, m, n }
    }

    pub fn to_vector(&self) -> InputVector {
        InputVector::new(self.fz, self.l, self.m, self.n)
    }

    pub fn from_vector(u: &InputVector) -> Self {
        Self::new(u[0], u[1], u[2], u[3])
    }

    pub fn is_finite(&self) -> bool {
        self.fz.is_finite() && self.l.is_finite() && self.m.is_finite() && self.n.is_finite()
    }
}

/// Per-rotor thrusts T1..T4, N.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MotorThrusts(pub [f64; 4]);

/// Result of allocating a wrench to the four rotors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation {
    pub thrusts: MotorThrusts,
    /// True when at least one rotor had to be clamped into `[0, T_max]`.
    pub saturated: bool,
}

/// Physical parameters of the vehicle and its payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams {
    /// Vehicle mass m_m, kg.
    pub mass_vehicle: f64,
    /// Payload mass m_p, kg.
    pub mass_payload: f64,
    /// Diagonal vehicle inertia, kg·m².
    pub inertia_vehicle: [f64; 3],
    /// Diagonal payload inertia, kg·m².
    pub inertia_payload: [f64; 3],
    /// Arm offset d_x, m.
    pub arm_x: f64,
    /// Arm offset d_y, m.
    pub arm_y: f64,
    /// Thrust-to-yaw-torque coefficient c_T, m.
    pub torque_coefficient: f64,
    /// Translational drag K_F, N/(m/s).
    pub drag_force: [f64; 3],
    /// Rotational drag K_M, N·m/(rad/s).
    pub drag_moment: [f64; 3],
    /// Gravitational acceleration, m/s².
    pub gravity: f64,
    /// Rotor inertia J_r, kg·m². Zero disables the gyroscopic term.
    pub rotor_inertia: f64,
    /// Thrust per squared rotor speed k_ω, N/(rad/s)²; rotor speed is `sqrt(T/k_ω)`.
    pub rotor_thrust_coefficient: f64,
    /// Per-rotor thrust limit, N.
    pub max_thrust: f64,
    /// Pitch margin from ±π/2 treated as singular, rad.
    pub singularity_margin: f64,
}

impl Default for VehicleParams {
    /// Total mass 1.3 kg, of which one sixth is payload (a 20 % increase over the
    /// bare vehicle), and total inertia (0.031, 0.038, 0.063) kg·m².
    fn default() -> Self {
        let inertia_vehicle = [0.0281, 0.0286, 0.0551];
        let inertia_total = [0.031, 0.038, 0.063];
        let mass_vehicle = 1.3 / 1.2;
        Self {
            mass_vehicle,
            mass_payload: 1.3 - mass_vehicle,
            inertia_vehicle,
            inertia_payload: [
                inertia_total[0] - inertia_vehicle[0],
                inertia_total[1] - inertia_vehicle[1],
                inertia_total[2] - inertia_vehicle[2],
            ],
            arm_x: 0.165,
            arm_y: 0.165,
            torque_coefficient: 0.0135,
            drag_force: [1.0; 3],
            drag_moment: [0.001; 3],
            gravity: 9.807,
            rotor_inertia: 6.8e-4,
            rotor_thrust_coefficient: 0.01,
            max_thrust: 10.0,
            singularity_margin: SINGULARITY_MARGIN,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        let all_finite = [
            self.mass_vehicle,
            self.mass_payload,
            self.arm_x,
            self.arm_y,
            self.torque_coefficient,
            self.gravity,
            self.rotor_inertia,
            self.rotor_thrust_coefficient,
            self.max_thrust,
            self.singularity_margin,
        ]
        .iter()
        .chain(&self.inertia_vehicle)
        .chain(&self.inertia_payload)
        .chain(&self.drag_force)
        .chain(&self.drag_moment)
        .all(|v| v.is_finite());
        if !all_finite {
            return bad("vehicle parameters must be finite");
        }
        if self.mass_vehicle <= 0.0 || self.mass_payload < 0.0 {
            return bad("mass_vehicle must be > 0 and mass_payload >= 0");
        }
        if self.inertia_vehicle.iter().any(|&i| i <= 0.0)
            || self.inertia_payload.iter().any(|&i| i < 0.0)
        {
            return bad("inertia entries must be positive");
        }
        if self.arm_x <= 0.0 || self.arm_y <= 0.0 || self.torque_coefficient <= 0.0 {
            return bad("arm offsets and torque coefficient must be positive");
        }
        if self.drag_force.iter().chain(&self.drag_moment).any(|&k| k < 0.0) {
            return bad("drag coefficients must be non-negative");
        }
        if self.rotor_inertia < 0.0 || self.rotor_thrust_coefficient <= 0.0 {
            return bad("rotor_inertia must be >= 0 and rotor_thrust_coefficient > 0");
        }
        if self.max_thrust <= 0.0 || self.singularity_margin <= 0.0 {
            return bad("max_thrust and singularity_margin must be positive");
        }
        Ok(())
    }

    pub fn total_mass(&self) -> f64 {
        self.mass_vehicle + self.mass_payload
    }

    pub fn total_inertia(&self) -> Vector3<f64> {
        Vector3::from(self.inertia_vehicle) + Vector3::from(self.inertia_payload)
    }

    /// The same airframe with the payload removed.
    pub fn without_payload(&self) -> Self {
        Self {
            mass_payload: 0.0,
            inertia_payload: [0.0; 3],
            ..self.clone()
        }
    }

    /// Hover wrench of the true vehicle: `(-m_t g, 0, 0, 0)`.
    pub fn hover_wrench(&self) -> Wrench {
        Wrench::new(-self.total_mass() * self.gravity, 0.0, 0.0, 0.0)
    }
}

/// Total mass and diagonal inertia of vehicle plus payload.
pub fn combined_mass_inertia(params: &VehicleParams) -> (f64, Vector3<f64>) {
    (params.total_mass(), params.total_inertia())
}

/// Body-to-inertial rotation for Z-Y-X Euler angles.
pub fn rotation_body_to_inertial(euler: &Vector3<f64>) -> Matrix3<f64> {
    let (sf, cf) = euler.x.sin_cos();
    let (st, ct) = euler.y.sin_cos();
    let (sp, cp) = euler.z.sin_cos();
    Matrix3::new(
        ct * cp,
        sf * st * cp - cf * sp,
        cf * st * cp + sf * sp,
        ct * sp,
        sf * st * sp + cf * cp,
        cf * st * sp - sf * cp,
        -st,
        sf * ct,
        cf * ct,
    )
}

fn check_pitch(theta: f64, margin: f64) -> Result<()> {
    if !theta.is_finite() || theta.abs() >= std::f64::consts::FRAC_PI_2 - margin {
        return Err(Error::SingularAttitude {
            pitch: theta,
            margin,
        });
    }
    Ok(())
}

/// Maps body rates to Euler-angle rates: `Ω̇ = R_ω ω`.
pub fn euler_rate_matrix(euler: &Vector3<f64>, margin: f64) -> Result<Matrix3<f64>> {
    check_pitch(euler.y, margin)?;
    let (sf, cf) = euler.x.sin_cos();
    let ct = euler.y.cos();
    let tt = euler.y.tan();
    Ok(Matrix3::new(
        1.0,
        sf * tt,
        cf * tt,
        0.0,
        cf,
        -sf,
        0.0,
        sf / ct,
        cf / ct,
    ))
}

/// The rotor-to-wrench matrix.
pub fn mixer_matrix(params: &VehicleParams) -> Matrix4<f64> {
    let (dx, dy, c) = (params.arm_x, params.arm_y, params.torque_coefficient);
    Matrix4::new(
        -1.0, -1.0, -1.0, -1.0, //
        -dx, dx, dx, -dx, //
        dy, dy, -dy, -dy, //
        c, -c, c, -c,
    )
}

/// Exact inverse of [`mixer_matrix`]. The rows of the mixer are mutually
/// orthogonal, so the inverse is its transpose scaled by the row norms.
pub fn inverse_mixer_matrix(params: &VehicleParams) -> Matrix4<f64> {
    let m = mixer_matrix(params);
    let mut inv = m.transpose();
    for j in 0..4 {
        let norm2 = m.row(j).norm_squared();
        inv.column_mut(j).scale_mut(1.0 / norm2);
    }
    inv
}

pub fn mixer(thrusts: &MotorThrusts, params: &VehicleParams) -> Wrench {
    Wrench::from_vector(&(mixer_matrix(params) * Vector4::from(thrusts.0)))
}

/// Rotor thrusts realizing `wrench`, clamped into `[0, T_max]`.
pub fn inverse_mixer(wrench: &Wrench, params: &VehicleParams) -> Allocation {
    let raw = inverse_mixer_matrix(params) * wrench.to_vector();
    let mut saturated = false;
    let mut thrusts = [0.0; 4];
    for (t, &r) in thrusts.iter_mut().zip(raw.iter()) {
        *t = r.clamp(0.0, params.max_thrust);
        saturated |= *t != r;
    }
    Allocation {
        thrusts: MotorThrusts(thrusts),
        saturated,
    }
}

/// Summed rotor speed Ω_r synthesized from the unclamped allocation of `wrench`.
pub fn rotor_speed_sum(wrench: &Wrench, params: &VehicleParams) -> f64 {
    let raw = inverse_mixer_matrix(params) * wrench.to_vector();
    raw.iter()
        .map(|&t| (t.max(0.0) / params.rotor_thrust_coefficient).sqrt())
        .sum()
}

/// Lumped drag: force in the inertial frame, moment in the body frame.
pub fn aero_wrench(state: &RigidBodyState, params: &VehicleParams) -> (Vector3<f64>, Vector3<f64>) {
    let force = -Vector3::from(params.drag_force).component_mul(&state.velocity);
    let moment = -Vector3::from(params.drag_moment).component_mul(&state.body_rates);
    (force, moment)
}

/// Continuous-time dynamics of the true vehicle.
pub fn state_derivative(
    state: &RigidBodyState,
    wrench: &Wrench,
    params: &VehicleParams,
) -> Result<StateVector> {
    let (mass, inertia) = combined_mass_inertia(params);
    let euler_rates = euler_rate_matrix(&state.euler, params.singularity_margin)? * state.body_rates;

    let rotation = rotation_body_to_inertial(&state.euler);
    let (drag_force, drag_moment) = aero_wrench(state, params);
    let accel = (rotation * Vector3::new(0.0, 0.0, wrench.fz) + drag_force) / mass
        + Vector3::new(0.0, 0.0, params.gravity);

    let w = state.body_rates;
    let torque = Vector3::new(wrench.l, wrench.m, wrench.n) + drag_moment;
    let mut rate_dot = (torque - w.cross(&inertia.component_mul(&w))).component_div(&inertia);
    if params.rotor_inertia > 0.0 {
        let omega_r = rotor_speed_sum(wrench, params);
        rate_dot.x -= params.rotor_inertia / inertia.x * w.y * omega_r;
        rate_dot.y -= params.rotor_inertia / inertia.y * w.x * omega_r;
    }

    let mut dx = StateVector::zeros();
    dx.fixed_rows_mut::<3>(0).copy_from(&state.velocity);
    dx.fixed_rows_mut::<3>(3).copy_from(&accel);
    dx.fixed_rows_mut::<3>(6).copy_from(&euler_rates);
    dx.fixed_rows_mut::<3>(9).copy_from(&rate_dot);
    Ok(dx)
}

/// The true vehicle as a [`crate::sim::Dynamics`] implementation.
#[derive(Debug, Clone)]
pub struct Plant {
    pub params: VehicleParams,
}

impl Plant {
    pub fn new(params: VehicleParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }
}

impl crate::sim::Dynamics for Plant {
    fn derivative(&self, x: &StateVector, u: &InputVector) -> Result<StateVector> {
        state_derivative(&RigidBodyState::from_vector(x), &Wrench::from_vector(u), &self.params)
    }
}
