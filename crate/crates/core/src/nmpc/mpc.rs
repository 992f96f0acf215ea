//! Receding-horizon control of the multirotor over a [`SparseModel`].
//!
//! Decision variables are the wrenches `(f_z, L, M, N)` over the horizon,
//! tracked outputs are `(x, y, z, ψ)`, and the input cost penalizes deviation
//! from the model's own hover wrench.

use nalgebra::{Matrix4, SMatrix, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::dynamics::{wrap_angle, InputVector, RigidBodyState, StateVector, Wrench};
use crate::error::{Error, Result};
use crate::sim::{rk4_vector, ReferenceSample};
use crate::sindy::{InputJacobian, SparseModel, StateJacobian};

use super::obstacle::ObstacleSpec;
use super::ocp::{self, OcpDynamics, OcpSolution, OcpSpec, SolverSettings};

pub type OutputVector = Vector4<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpcConfig {
    /// Prediction steps N.
    pub horizon: usize,
    /// Prediction step, s.
    pub dt: f64,
    /// Output weights on (x, y, z, ψ).
    pub q: [f64; 4],
    /// Input weights on (f_z, L, M, N) deviation from hover.
    pub r: [f64; 4],
    pub u_min: [f64; 4],
    pub u_max: [f64; 4],
    /// Added to every keep-out radius inside the predictor, m. Covers the
    /// gap between predicted and flown paths.
    pub obstacle_buffer: f64,
    pub solver: SolverSettings,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 20,
            dt: 0.05,
            q: [20.0, 20.0, 20.0, 2.0],
            r: [0.1, 1.0, 1.0, 1.0],
            u_min: [-25.0, -0.5, -0.5, -0.1],
            u_max: [-2.0, 0.5, 0.5, 0.1],
            obstacle_buffer: 0.02,
            solver: SolverSettings::default(),
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("mpc: {m}")));
        if self.horizon < 2 || !(self.dt > 0.0) {
            return bad("horizon must be >= 2 and dt > 0");
        }
        if self.q.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return bad("q entries must be finite and >= 0");
        }
        if self.r.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return bad("r entries must be finite and > 0");
        }
        if (0..4).any(|i| !(self.u_min[i] < self.u_max[i])) {
            return bad("u_min must be below u_max componentwise");
        }
        if !(self.obstacle_buffer >= 0.0) || !self.obstacle_buffer.is_finite() {
            return bad("obstacle_buffer must be finite and >= 0");
        }
        self.solver.validate()
    }

    fn spec(&self, hover: &Wrench, obstacles: &[ObstacleSpec]) -> OcpSpec<4, 4> {
        OcpSpec {
            q: Vector4::from(self.q),
            r: Vector4::from(self.r),
            u_ref: hover.to_vector(),
            u_min: Vector4::from(self.u_min),
            u_max: Vector4::from(self.u_max),
            obstacles: obstacles
                .iter()
                .map(|o| ObstacleSpec {
                    radius: o.radius + self.obstacle_buffer,
                    ..*o
                })
                .collect(),
        }
    }
}

/// One RK4 step of `model` with the chain-rule sensitivities of the step.
pub fn rk4_with_sensitivities(
    model: &SparseModel,
    x: &StateVector,
    u: &InputVector,
    h: f64,
) -> Result<(StateVector, StateJacobian, InputJacobian)> {
    let eye = StateJacobian::identity();
    let (k1, a1, b1) = model.derivative_with_jacobians(x, u)?;
    let x2 = x + k1 * (0.5 * h);
    let (k2, a2, b2) = model.derivative_with_jacobians(&x2, u)?;
    let dk2_dx = a2 * (eye + a1 * (0.5 * h));
    let dk2_du = a2 * b1 * (0.5 * h) + b2;
    let x3 = x + k2 * (0.5 * h);
    let (k3, a3, b3) = model.derivative_with_jacobians(&x3, u)?;
    let dk3_dx = a3 * (eye + dk2_dx * (0.5 * h));
    let dk3_du = a3 * dk2_du * (0.5 * h) + b3;
    let x4 = x + k3 * h;
    let (k4, a4, b4) = model.derivative_with_jacobians(&x4, u)?;
    let dk4_dx = a4 * (eye + dk3_dx * h);
    let dk4_du = a4 * dk3_du * h + b4;

    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    let dx = eye + (a1 + dk2_dx * 2.0 + dk3_dx * 2.0 + dk4_dx) * (h / 6.0);
    let du = (b1 + dk2_du * 2.0 + dk3_du * 2.0 + dk4_du) * (h / 6.0);
    Ok((next, dx, du))
}

/// The vehicle tracking problem as seen by the generic solver.
struct VehicleOcp<'a> {
    model: &'a SparseModel,
    dt: f64,
}

impl OcpDynamics<12, 4, 4> for VehicleOcp<'_> {
    fn step(&self, x: &StateVector, u: &InputVector) -> Result<StateVector> {
        rk4_vector(self.model, x, u, self.dt)
    }

    fn step_with_sensitivity(&self, x: &StateVector, u: &InputVector) -> Result<(StateVector, StateJacobian, InputJacobian)> {
        rk4_with_sensitivities(self.model, x, u, self.dt)
    }

    fn output_error(&self, x: &StateVector, r: &OutputVector) -> (OutputVector, SMatrix<f64, 4, 12>) {
        let e = Vector4::new(r[0] - x[0], r[1] - x[1], r[2] - x[2], wrap_angle(r[3] - x[8]));
        let mut de = SMatrix::<f64, 4, 12>::zeros();
        de[(0, 0)] = -1.0;
        de[(1, 1)] = -1.0;
        de[(2, 2)] = -1.0;
        de[(3, 8)] = -1.0;
        (e, de)
    }

    fn position(&self, x: &StateVector) -> Option<(Vector3<f64>, SMatrix<f64, 3, 12>)> {
        let mut dp = SMatrix::<f64, 3, 12>::zeros();
        dp.fixed_view_mut::<3, 3>(0, 0).fill_with_identity();
        Some((x.fixed_rows::<3>(0).into_owned(), dp))
    }
}

fn output_of(r: &ReferenceSample) -> OutputVector {
    Vector4::new(r.position.x, r.position.y, r.position.z, r.yaw)
}

/// States reached by applying `inputs` in turn from `x_init` (N+1 states).
pub fn rollout(model: &SparseModel, x_init: &RigidBodyState, inputs: &[Wrench], dt: f64) -> Result<Vec<RigidBodyState>> {
    let mut x = x_init.to_vector();
    let mut out = Vec::with_capacity(inputs.len() + 1);
    out.push(*x_init);
    for u in inputs {
        x = rk4_vector(model, &x, &u.to_vector(), dt)?;
        out.push(RigidBodyState::from_vector(&x));
    }
    Ok(out)
}

/// Tracking cost of `inputs` with the obstacle penalty at the initial weight.
pub fn ocp_cost(
    model: &SparseModel,
    x_init: &RigidBodyState,
    inputs: &[Wrench],
    refs: &[ReferenceSample],
    config: &MpcConfig,
    obstacles: &[ObstacleSpec],
) -> Result<f64> {
    if inputs.len() != refs.len() {
        return Err(Error::ShapeMismatch(format!("{} inputs for {} references", inputs.len(), refs.len())));
    }
    let hover = model.hover_wrench()?;
    let spec = config.spec(&hover, obstacles);
    let ocp = VehicleOcp { model, dt: config.dt };
    let states = rollout(model, x_init, inputs, config.dt)?;
    let mut total = 0.0;
    for (k, r) in refs.iter().enumerate() {
        let x = states[k + 1].to_vector();
        let (e, _) = ocp.output_error(&x, &output_of(r));
        total += e.component_mul(&e).dot(&spec.q);
        let du = inputs[k].to_vector() - spec.u_ref;
        total += du.component_mul(&du).dot(&spec.r);
        for o in &spec.obstacles {
            let v = (-super::obstacle_margin(&states[k + 1].position, o)).max(0.0);
            total += config.solver.penalty_weight * v * v;
        }
    }
    Ok(total)
}

fn solve_with_hover(
    model: &SparseModel,
    hover: &Wrench,
    x_init: &RigidBodyState,
    refs: &[ReferenceSample],
    config: &MpcConfig,
    obstacles: &[ObstacleSpec],
    warm_start: Option<&[InputVector]>,
) -> Result<OcpSolution<12, 4>> {
    let refs: Vec<OutputVector> = refs.iter().map(output_of).collect();
    let warm: Vec<InputVector> = match warm_start {
        Some(w) => w.to_vec(),
        None => vec![hover.to_vector(); refs.len()],
    };
    let ocp = VehicleOcp { model, dt: config.dt };
    ocp::solve(&ocp, &x_init.to_vector(), &refs, &config.spec(hover, obstacles), &config.solver, &warm)
}

/// Solves one horizon from `x_init`. Without a warm start the solver begins
/// from the hover wrench at every step.
pub fn solve_ocp(
    model: &SparseModel,
    x_init: &RigidBodyState,
    refs: &[ReferenceSample],
    config: &MpcConfig,
    obstacles: &[ObstacleSpec],
    warm_start: Option<&[Wrench]>,
) -> Result<OcpSolution<12, 4>> {
    config.validate()?;
    let hover = model.hover_wrench()?;
    let warm: Option<Vec<InputVector>> = warm_start.map(|w| w.iter().map(Wrench::to_vector).collect());
    solve_with_hover(model, &hover, x_init, refs, config, obstacles, warm.as_deref())
}

/// Receding-horizon controller holding the shifted previous solution.
#[derive(Debug, Clone)]
pub struct MpcController {
    model: SparseModel,
    config: MpcConfig,
    obstacles: Vec<ObstacleSpec>,
    hover: Wrench,
    warm: Option<Vec<InputVector>>,
    /// Escalations already applied to the penalty weight, carried between steps.
    penalty_level: usize,
}

impl MpcController {
    pub fn new(model: SparseModel, config: MpcConfig, obstacles: Vec<ObstacleSpec>) -> Result<Self> {
        config.validate()?;
        for o in &obstacles {
            o.validate()?;
        }
        let hover = model.hover_wrench()?;
        Ok(Self {
            model,
            config,
            obstacles,
            hover,
            warm: None,
            penalty_level: 0,
        })
    }

    pub fn config(&self) -> &MpcConfig {
        &self.config
    }

    pub fn model(&self) -> &SparseModel {
        &self.model
    }

    pub fn obstacles(&self) -> &[ObstacleSpec] {
        &self.obstacles
    }

    /// Hover wrench of the prediction model.
    pub fn hover(&self) -> Wrench {
        self.hover
    }

    /// Inputs the next call will start from, if any.
    pub fn warm_start(&self) -> Option<Vec<Wrench>> {
        self.warm.as_ref().map(|w| w.iter().map(Wrench::from_vector).collect())
    }

    /// Solves from `x_now` over `refs` (the references at the next N prediction
    /// steps) and returns the first input. The solution, shifted by one step
    /// with its last entry repeated, seeds the next call.
    ///
    /// The obstacle penalty weight also carries over: a step that had to
    /// escalate starts the next one at the escalated weight, and a step with
    /// no contact relaxes it by one factor. The total never exceeds the
    /// configured number of escalations.
    ///
    /// When the solver stops at its iteration cap, the best input found is
    /// still returned; the solution's status records it.
    pub fn step(&mut self, x_now: &RigidBodyState, refs: &[ReferenceSample]) -> Result<(Wrench, OcpSolution<12, 4>)> {
        if refs.len() != self.config.horizon {
            return Err(Error::ShapeMismatch(format!(
                "reference window of {} for horizon {}",
                refs.len(),
                self.config.horizon
            )));
        }
        let base = &self.config.solver;
        let level = self.penalty_level.min(base.max_escalations);
        let config = MpcConfig {
            solver: SolverSettings {
                penalty_weight: base.penalty_weight * base.penalty_growth.powi(level as i32),
                max_escalations: base.max_escalations - level,
                ..base.clone()
            },
            ..self.config.clone()
        };
        let sol = solve_with_hover(
            &self.model,
            &self.hover,
            x_now,
            refs,
            &config,
            &self.obstacles,
            self.warm.as_deref(),
        )?;
        self.penalty_level = if sol.escalations == 0 && sol.max_penetration == 0.0 {
            level.saturating_sub(1)
        } else {
            level + sol.escalations
        };
        let mut shifted: Vec<InputVector> = sol.inputs[1..].to_vec();
        shifted.push(*sol.inputs.last().expect("horizon >= 2"));
        self.warm = Some(shifted);
        Ok((Wrench::from_vector(&sol.inputs[0]), sol))
    }

    /// Forgets the warm start and the penalty level.
    pub fn reset(&mut self) {
        self.warm = None;
        self.penalty_level = 0;
    }
}

/// Free-function form of [`MpcController::step`].
pub fn mpc_step(
    controller: &mut MpcController,
    x_now: &RigidBodyState,
    refs: &[ReferenceSample],
) -> Result<(Wrench, OcpSolution<12, 4>)> {
    controller.step(x_now, refs)
}

impl OcpSolution<12, 4> {
    pub fn wrenches(&self) -> Vec<Wrench> {
        self.inputs.iter().map(Wrench::from_vector).collect()
    }

    pub fn predicted_states(&self) -> Vec<RigidBodyState> {
        self.states.iter().map(RigidBodyState::from_vector).collect()
    }
}

/// Diagonal weight matrix, handy for reporting.
pub fn weight_matrix(w: &[f64; 4]) -> Matrix4<f64> {
    Matrix4::from_diagonal(&Vector4::from(*w))
}
