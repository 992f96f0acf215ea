//! Cascade PID used to fly data-collection missions.
//!
//! The outer loop turns position error into a desired acceleration, which is
//! inverted through the translational dynamics into a tilt command and a
//! collective force. The inner loop regulates Euler angles with rate damping
//! and scales the angular-acceleration command by an inertia estimate.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::{wrap_angle, RigidBodyState, Wrench};
use crate::error::{Error, Result};
use crate::sim::reference::ReferenceSample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PidGains {
    /// Position proportional gain per axis, 1/s².
    pub position_kp: [f64; 3],
    /// Position integral gain per axis, 1/s³.
    pub position_ki: [f64; 3],
    /// Velocity-error gain per axis, 1/s.
    pub position_kd: [f64; 3],
    /// Angle proportional gain (φ, θ, ψ), 1/s².
    pub attitude_kp: [f64; 3],
    /// Angle integral gain, 1/s³.
    pub attitude_ki: [f64; 3],
    /// Body-rate damping gain, 1/s.
    pub attitude_kd: [f64; 3],
    /// Tilt command limit for roll and pitch, rad.
    pub max_tilt: f64,
    /// Largest collective force magnitude, N.
    pub max_collective: f64,
    /// Body moment limits, N·m.
    pub max_moment: [f64; 3],
    /// Clamp on each position integrator state, m·s.
    pub position_integral_limit: f64,
    /// Clamp on each attitude integrator state, rad·s.
    pub attitude_integral_limit: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            position_kp: [1.2, 1.2, 4.0],
            position_ki: [0.15, 0.15, 1.5],
            position_kd: [1.8, 1.8, 3.5],
            attitude_kp: [120.0, 120.0, 20.0],
            attitude_ki: [5.0, 5.0, 2.0],
            attitude_kd: [18.0, 18.0, 8.0],
            max_tilt: 0.35,
            max_collective: 30.0,
            max_moment: [0.5, 0.5, 0.08],
            position_integral_limit: 3.0,
            attitude_integral_limit: 0.2,
        }
    }
}

impl PidGains {
    pub fn validate(&self) -> Result<()> {
        let gains_ok = self
            .position_kp
            .iter()
            .chain(&self.position_ki)
            .chain(&self.position_kd)
            .chain(&self.attitude_kp)
            .chain(&self.attitude_ki)
            .chain(&self.attitude_kd)
            .all(|g| g.is_finite() && *g >= 0.0);
        let limits_ok = [
            self.max_tilt,
            self.max_collective,
            self.position_integral_limit,
            self.attitude_integral_limit,
        ]
        .iter()
        .chain(&self.max_moment)
        .all(|l| l.is_finite() && *l > 0.0);
        if !gains_ok || !limits_ok {
            return Err(Error::InvalidParameter(
                "PID gains must be >= 0 and limits > 0".into(),
            ));
        }
        if self.max_tilt >= std::f64::consts::FRAC_PI_2 {
            return Err(Error::InvalidParameter("max_tilt must be below π/2".into()));
        }
        Ok(())
    }

    /// All gains zeroed, limits kept.
    pub fn zeroed() -> Self {
        Self {
            position_kp: [0.0; 3],
            position_ki: [0.0; 3],
            position_kd: [0.0; 3],
            attitude_kp: [0.0; 3],
            attitude_ki: [0.0; 3],
            attitude_kd: [0.0; 3],
            ..Self::default()
        }
    }
}

/// Integrator memory of the cascade.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PidState {
    pub position_integral: Vector3<f64>,
    pub attitude_integral: Vector3<f64>,
}

/// What the controller knows about the vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerModel {
    pub mass: f64,
    pub inertia: Vector3<f64>,
    pub gravity: f64,
}

/// Desired roll, pitch, and collective force realizing acceleration `accel` at heading `yaw`.
fn tilt_for_acceleration(
    accel: &Vector3<f64>,
    yaw: f64,
    model: &ControllerModel,
) -> (f64, f64, Vector3<f64>) {
    let force = model.mass * (accel - Vector3::new(0.0, 0.0, model.gravity));
    let (sy, cy) = yaw.sin_cos();
    let fx = cy * force.x + sy * force.y;
    let fy = -sy * force.x + cy * force.y;
    let pitch = (-fx).atan2(-force.z);
    let roll = fy.atan2((fx * fx + force.z * force.z).sqrt());
    (roll, pitch, force)
}

fn clamp_vec(v: Vector3<f64>, limit: f64) -> Vector3<f64> {
    v.map(|x| x.clamp(-limit, limit))
}

/// One update of the cascade. Returns the wrench command and the new integrator state.
pub fn pid_cascade_update(
    state: &RigidBodyState,
    reference: &ReferenceSample,
    gains: &PidGains,
    model: &ControllerModel,
    dt: f64,
    memory: &PidState,
) -> (Wrench, PidState) {
    debug_assert!(dt > 0.0);
    let kp = Vector3::from(gains.position_kp);
    let ki = Vector3::from(gains.position_ki);
    let kd = Vector3::from(gains.position_kd);

    let pos_err = reference.position - state.position;
    let vel_err = reference.velocity - state.velocity;
    let position_integral = clamp_vec(
        memory.position_integral + pos_err * dt,
        gains.position_integral_limit,
    );
    let accel = kp.component_mul(&pos_err)
        + ki.component_mul(&position_integral)
        + kd.component_mul(&vel_err);

    let yaw = state.euler.z;
    let (roll_cmd, pitch_cmd, force) = tilt_for_acceleration(&accel, yaw, model);
    let roll_cmd = roll_cmd.clamp(-gains.max_tilt, gains.max_tilt);
    let pitch_cmd = pitch_cmd.clamp(-gains.max_tilt, gains.max_tilt);

    // Keep the vertical force component at its commanded value under the current tilt.
    let tilt_cos = state.euler.x.cos() * state.euler.y.cos();
    let fz = (force.z / tilt_cos).clamp(-gains.max_collective, 0.0);

    let angle_err = Vector3::new(
        roll_cmd - state.euler.x,
        pitch_cmd - state.euler.y,
        wrap_angle(reference.yaw - state.euler.z),
    );
    let attitude_integral = clamp_vec(
        memory.attitude_integral + angle_err * dt,
        gains.attitude_integral_limit,
    );
    let alpha = Vector3::from(gains.attitude_kp).component_mul(&angle_err)
        + Vector3::from(gains.attitude_ki).component_mul(&attitude_integral)
        - Vector3::from(gains.attitude_kd).component_mul(&state.body_rates);
    let moment = model.inertia.component_mul(&alpha);
    let max_moment = Vector3::from(gains.max_moment);
    let moment = moment.zip_map(&max_moment, |m, lim| m.clamp(-lim, lim));

    (
        Wrench::new(fz, moment.x, moment.y, moment.z),
        PidState {
            position_integral,
            attitude_integral,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{inverse_mixer, mixer, Plant, VehicleParams};
    use crate::sim::integrator::rk4_step;

    fn model_of(params: &VehicleParams) -> ControllerModel {
        ControllerModel {
            mass: params.mass_vehicle,
            inertia: Vector3::from(params.inertia_vehicle),
            gravity: params.gravity,
        }
    }

    fn at(position: Vector3<f64>) -> ReferenceSample {
        ReferenceSample {
            position,
            yaw: 0.0,
            velocity: Vector3::zeros(),
        }
    }

    #[test]
    fn zero_error_gives_feedforward_hover() {
        let p = VehicleParams::default();
        let m = model_of(&p);
        let s = RigidBodyState::at_rest(Vector3::new(1.0, 2.0, -5.0), 0.0);
        let (w, mem) = pid_cascade_update(&s, &at(s.position), &PidGains::default(), &m, 0.002, &PidState::default());
        assert!((w.fz + p.mass_vehicle * p.gravity).abs() < 1e-12);
        assert_eq!((w.l, w.m, w.n), (0.0, 0.0, 0.0));
        assert_eq!(mem, PidState::default());
    }

    #[test]
    fn vehicle_below_reference_pulls_harder() {
        let p = VehicleParams::default();
        let m = model_of(&p);
        // +1 m position error along z: the vehicle sits 1 m deeper (lower) than the reference.
        let s = RigidBodyState::at_rest(Vector3::new(0.0, 0.0, -4.0), 0.0);
        let (w, _) = pid_cascade_update(&s, &at(Vector3::new(0.0, 0.0, -5.0)), &PidGains::default(), &m, 0.002, &PidState::default());
        assert!(w.fz < -p.mass_vehicle * p.gravity);
    }

    #[test]
    fn forward_step_tilts_toward_travel() {
        let p = VehicleParams::default();
        let m = model_of(&p);
        let gains = PidGains::default();
        let s = RigidBodyState::at_rest(Vector3::new(0.0, 0.0, -5.0), 0.0);
        let target = at(Vector3::new(1.0, 0.0, -5.0));
        let accel = Vector3::from(gains.position_kp).component_mul(&(target.position - s.position));
        let (_, pitch, _) = tilt_for_acceleration(&accel, 0.0, &m);
        // Nose down (negative pitch in NED) accelerates north.
        assert!(pitch < 0.0 && pitch.abs() <= gains.max_tilt);

        let plant = Plant::new(p.clone()).unwrap();
        let mut state = s;
        let mut mem = PidState::default();
        let dt = 0.002;
        let mut max_x: f64 = 0.0;
        for _ in 0..(25.0 / dt) as usize {
            let (w, next) = pid_cascade_update(&state, &target, &gains, &m, dt, &mem);
            mem = next;
            let realized = mixer(&inverse_mixer(&w, &p).thrusts, &p);
            state = rk4_step(&plant, &state, &realized, dt).unwrap();
            max_x = max_x.max(state.position.x);
        }
        assert!((state.position - target.position).norm() < 0.05, "{:?}", state.position);
        assert!(max_x < 1.5, "overshoot {max_x}");
    }

    #[test]
    fn outputs_are_clamped() {
        let p = VehicleParams::default();
        let m = model_of(&p);
        let gains = PidGains::default();
        let s = RigidBodyState::at_rest(Vector3::new(0.0, 0.0, -5.0), 0.0);
        let (w, mem) = pid_cascade_update(&s, &at(Vector3::new(500.0, -500.0, 100.0)), &gains, &m, 0.1, &PidState::default());
        assert!(w.fz <= 0.0 && w.fz >= -gains.max_collective);
        assert!(w.l.abs() <= gains.max_moment[0] && w.m.abs() <= gains.max_moment[1]);
        assert!(mem.position_integral.abs().max() <= gains.position_integral_limit);
    }
}
