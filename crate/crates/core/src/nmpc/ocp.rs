//! Single-shooting Gauss–Newton SQP for tracking problems of the form
//!
//! ```text
//! min  Σₖ₌₁..N ‖√Q ⊙ e(xₖ, rₖ)‖² + ‖√R ⊙ (uₖ₋₁ − u_ref)‖² + μ Σₖ Σⱼ max(0, −marginⱼ(xₖ))²
//! s.t. xₖ₊₁ = F(xₖ, uₖ),  u_min ≤ uₖ ≤ u_max
//! ```
//!
//! The obstacle term is a soft penalty whose weight is escalated until the
//! predicted trajectory clears every sphere to a tolerance.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::obstacle::{obstacle_margin, obstacle_margin_gradient, ObstacleSpec};
use super::qp::solve_box_qp;

/// Discrete-time dynamics and output map of an optimal control problem.
pub trait OcpDynamics<const NX: usize, const NU: usize, const NY: usize> {
    fn step(&self, x: &SVector<f64, NX>, u: &SVector<f64, NU>) -> Result<SVector<f64, NX>>;

    /// Next state with `∂F/∂x` and `∂F/∂u`.
    #[allow(clippy::type_complexity)]
    fn step_with_sensitivity(
        &self,
        x: &SVector<f64, NX>,
        u: &SVector<f64, NU>,
    ) -> Result<(SVector<f64, NX>, SMatrix<f64, NX, NX>, SMatrix<f64, NX, NU>)>;

    /// Tracking error `r − y(x)` and its Jacobian with respect to `x`.
    fn output_error(&self, x: &SVector<f64, NX>, reference: &SVector<f64, NY>) -> (SVector<f64, NY>, SMatrix<f64, NY, NX>);

    /// Position used for obstacle clearance, with its Jacobian. `None` if the
    /// problem has no spatial position.
    fn position(&self, _x: &SVector<f64, NX>) -> Option<(Vector3<f64>, SMatrix<f64, 3, NX>)> {
        None
    }
}

/// Weights, bounds, and obstacles of one problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct OcpSpec<const NU: usize, const NY: usize> {
    /// Diagonal output weights.
    pub q: SVector<f64, NY>,
    /// Diagonal input weights, on the deviation from `u_ref`.
    pub r: SVector<f64, NU>,
    pub u_ref: SVector<f64, NU>,
    pub u_min: SVector<f64, NU>,
    pub u_max: SVector<f64, NU>,
    pub obstacles: Vec<ObstacleSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    /// Gauss–Newton iterations per penalty weight.
    pub max_iters: usize,
    /// Converged once the accepted step's ∞-norm drops below this.
    pub tolerance: f64,
    /// Initial obstacle penalty weight μ₀.
    pub penalty_weight: f64,
    pub penalty_growth: f64,
    pub max_escalations: usize,
    /// Largest predicted penetration accepted without escalating, m.
    pub feasibility_tolerance: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Step shrink factor per backtrack.
    pub backtrack: f64,
    /// Smallest step fraction tried before the line search gives up.
    pub min_step: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iters: 30,
            tolerance: 1e-6,
            penalty_weight: 100.0,
            penalty_growth: 10.0,
            max_escalations: 3,
            feasibility_tolerance: 0.01,
            armijo: 1e-4,
            backtrack: 0.5,
            min_step: 1e-6,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_iters >= 1
            && self.tolerance > 0.0
            && self.penalty_weight >= 0.0
            && self.penalty_growth >= 1.0
            && self.feasibility_tolerance > 0.0
            && self.armijo > 0.0
            && self.armijo < 0.5
            && self.backtrack > 0.0
            && self.backtrack < 1.0
            && self.min_step > 0.0
            && self.min_step < 1.0;
        if !ok {
            return Err(Error::InvalidParameter(format!("invalid solver settings {self:?}")));
        }
        Ok(())
    }
}

/// How the final Gauss–Newton stage ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Converged,
    /// Iteration cap reached; the best iterate is returned.
    MaxIterations,
    /// No step along the Gauss–Newton direction decreased the cost.
    LineSearchStalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcpSolution<const NX: usize, const NU: usize> {
    /// u₀ … u_{N−1}.
    pub inputs: Vec<SVector<f64, NU>>,
    /// x₀ … x_N from one rollout of `inputs`.
    pub states: Vec<SVector<f64, NX>>,
    /// Penalized cost at the final penalty weight.
    pub cost: f64,
    /// Largest predicted obstacle penetration over x₁ … x_N, m (0 if clear).
    pub max_penetration: f64,
    pub penalty_weight: f64,
    pub escalations: usize,
    /// Gauss–Newton iterations over all penalty stages.
    pub iterations: usize,
    pub status: SolveStatus,
    pub solve_time_s: f64,
    /// Accepted costs of each penalty stage, starting from its initial cost.
    pub cost_history: Vec<Vec<f64>>,
}

struct Problem<'a, M, const NX: usize, const NU: usize, const NY: usize> {
    model: &'a M,
    x0: SVector<f64, NX>,
    refs: &'a [SVector<f64, NY>],
    spec: &'a OcpSpec<NU, NY>,
}

impl<M, const NX: usize, const NU: usize, const NY: usize> Problem<'_, M, NX, NU, NY>
where
    M: OcpDynamics<NX, NU, NY>,
{
    fn horizon(&self) -> usize {
        self.refs.len()
    }

    fn rollout(&self, inputs: &[SVector<f64, NU>]) -> Result<Vec<SVector<f64, NX>>> {
        let mut states = Vec::with_capacity(inputs.len() + 1);
        states.push(self.x0);
        for u in inputs {
            let next = self.model.step(states.last().expect("non-empty"), u)?;
            states.push(next);
        }
        Ok(states)
    }

    fn penetration(&self, x: &SVector<f64, NX>) -> f64 {
        match self.model.position(x) {
            Some((p, _)) => self
                .spec
                .obstacles
                .iter()
                .map(|o| (-obstacle_margin(&p, o)).max(0.0))
                .fold(0.0, f64::max),
            None => 0.0,
        }
    }

    fn cost(&self, inputs: &[SVector<f64, NU>], states: &[SVector<f64, NX>], mu: f64) -> f64 {
        let mut total = 0.0;
        for k in 1..=self.horizon() {
            let (e, _) = self.model.output_error(&states[k], &self.refs[k - 1]);
            total += e.component_mul(&e).dot(&self.spec.q);
            let du = inputs[k - 1] - self.spec.u_ref;
            total += du.component_mul(&du).dot(&self.spec.r);
            if let Some((p, _)) = self.model.position(&states[k]) {
                for o in &self.spec.obstacles {
                    let v = (-obstacle_margin(&p, o)).max(0.0);
                    total += mu * v * v;
                }
            }
        }
        total
    }

    /// Gauss–Newton normal equations `(JᵀJ, Jᵀr)` of the stacked residual
    /// `r` with Jacobian `J` with respect to the inputs, accumulated stage by
    /// stage so that `J` itself is never formed.
    fn normal_equations(&self, inputs: &[SVector<f64, NU>], mu: f64) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let n = self.horizon();
        let nv = n * NU;
        let mut h = DMatrix::zeros(nv, nv);
        let mut g = DVector::zeros(nv);

        // Φ = ∂xₖ/∂U, propagated forward; only its first k·NU columns are nonzero.
        let mut phi = DMatrix::<f64>::zeros(NX, nv);
        let mut x = self.x0;
        for k in 0..n {
            let (next, a, b) = self.model.step_with_sensitivity(&x, &inputs[k])?;
            let active = k * NU;
            let propagated = a * phi.columns(0, active);
            phi.columns_mut(0, active).copy_from(&propagated);
            phi.fixed_view_mut::<NX, NU>(0, active).copy_from(&b);
            x = next;
            let used = active + NU;

            let (e, de) = self.model.output_error(&x, &self.refs[k]);
            let de_du = de * phi.columns(0, used);
            let weighted = DMatrix::from_fn(NY, used, |i, c| self.spec.q[i] * de_du[(i, c)]);
            h.view_mut((0, 0), (used, used)).gemm_tr(1.0, &de_du, &weighted, 1.0);
            g.rows_mut(0, used).gemv_tr(1.0, &weighted, &e, 1.0);

            let du = inputs[k] - self.spec.u_ref;
            for i in 0..NU {
                h[(active + i, active + i)] += self.spec.r[i];
                g[active + i] += self.spec.r[i] * du[i];
            }

            if !self.spec.obstacles.is_empty() {
                let (p, dp) = self
                    .model
                    .position(&x)
                    .ok_or_else(|| Error::InvalidParameter("obstacles need a position output".into()))?;
                for o in &self.spec.obstacles {
                    let margin = obstacle_margin(&p, o);
                    if margin < 0.0 {
                        let grad = obstacle_margin_gradient(&p, o).transpose() * dp;
                        let g_u = (grad * phi.columns(0, used)).transpose();
                        h.view_mut((0, 0), (used, used)).ger(mu, &g_u, &g_u, 1.0);
                        g.rows_mut(0, used).axpy(mu * margin, &g_u, 1.0);
                    }
                }
            }
        }
        Ok((h, g))
    }
}

fn flatten<const NU: usize>(inputs: &[SVector<f64, NU>]) -> DVector<f64> {
    DVector::from_iterator(inputs.len() * NU, inputs.iter().flat_map(|u| u.iter().copied()))
}

fn unflatten<const NU: usize>(v: &DVector<f64>) -> Vec<SVector<f64, NU>> {
    (0..v.len() / NU)
        .map(|k| SVector::from_fn(|i, _| v[k * NU + i]))
        .collect()
}

/// Solves the tracking problem from `x0` for the references `refs` (one per
/// step, applied to x₁ … x_N), starting from `warm_start`.
pub fn solve<M, const NX: usize, const NU: usize, const NY: usize>(
    model: &M,
    x0: &SVector<f64, NX>,
    refs: &[SVector<f64, NY>],
    spec: &OcpSpec<NU, NY>,
    settings: &SolverSettings,
    warm_start: &[SVector<f64, NU>],
) -> Result<OcpSolution<NX, NU>>
where
    M: OcpDynamics<NX, NU, NY>,
{
    let started = Instant::now();
    settings.validate()?;
    let n = refs.len();
    if n == 0 || warm_start.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "horizon {n} with a warm start of length {}",
            warm_start.len()
        )));
    }
    if (0..NU).any(|i| !(spec.u_min[i] < spec.u_max[i])) {
        return Err(Error::InvalidParameter("input bounds need u_min < u_max".into()));
    }
    if let Some((p, _)) = model.position(x0) {
        for o in &spec.obstacles {
            let margin = obstacle_margin(&p, o);
            if margin < -0.5 * o.radius {
                return Err(Error::InfeasibleStart { margin, radius: o.radius });
            }
        }
    }

    let problem = Problem { model, x0: *x0, refs, spec };
    let lo = flatten(&vec![spec.u_min; n]);
    let hi = flatten(&vec![spec.u_max; n]);
    let mut u = flatten(warm_start).zip_zip_map(&lo, &hi, |v, l, h| v.clamp(l, h));
    let mut states = problem.rollout(&unflatten::<NU>(&u))?;

    let mut mu = settings.penalty_weight;
    let mut escalations = 0;
    let mut iterations = 0;
    let mut history = Vec::new();
    let mut status;
    loop {
        let mut cost = problem.cost(&unflatten::<NU>(&u), &states, mu);
        let mut stage = vec![cost];
        status = SolveStatus::MaxIterations;
        for _ in 0..settings.max_iters {
            iterations += 1;
            let (h, g) = problem.normal_equations(&unflatten::<NU>(&u), mu)?;
            let Some(d) = solve_box_qp(&h, &g, &(&lo - &u), &(&hi - &u)) else {
                status = SolveStatus::LineSearchStalled;
                break;
            };
            if d.amax() < settings.tolerance {
                status = SolveStatus::Converged;
                break;
            }
            // Directional derivative of the cost ‖res‖² along d.
            let slope = 2.0 * g.dot(&d);
            let mut alpha = 1.0;
            let mut accepted = None;
            while alpha >= settings.min_step {
                let trial = (&u + &d * alpha).zip_zip_map(&lo, &hi, |v, l, h| v.clamp(l, h));
                let trial_inputs = unflatten::<NU>(&trial);
                if let Ok(trial_states) = problem.rollout(&trial_inputs) {
                    let c = problem.cost(&trial_inputs, &trial_states, mu);
                    if c.is_finite() && c <= cost + settings.armijo * alpha * slope {
                        accepted = Some((trial, trial_states, c));
                        break;
                    }
                }
                alpha *= settings.backtrack;
            }
            let Some((trial, trial_states, c)) = accepted else {
                status = SolveStatus::LineSearchStalled;
                break;
            };
            let step = (&trial - &u).amax();
            u = trial;
            states = trial_states;
            cost = c;
            stage.push(c);
            if step < settings.tolerance {
                status = SolveStatus::Converged;
                break;
            }
        }
        history.push(stage);
        let penetration = states[1..].iter().map(|x| problem.penetration(x)).fold(0.0, f64::max);
        if penetration <= settings.feasibility_tolerance
            || escalations >= settings.max_escalations
            || spec.obstacles.is_empty()
        {
            let inputs = unflatten::<NU>(&u);
            return Ok(OcpSolution {
                cost: problem.cost(&inputs, &states, mu),
                inputs,
                states,
                max_penetration: penetration,
                penalty_weight: mu,
                escalations,
                iterations,
                status,
                solve_time_s: started.elapsed().as_secs_f64(),
                cost_history: history,
            });
        }
        mu *= settings.penalty_growth;
        escalations += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Vector1, Vector2};

    /// Planar single integrator x⁺ = x + h·u, output = position.
    struct SingleIntegrator {
        h: f64,
    }

    impl OcpDynamics<2, 2, 2> for SingleIntegrator {
        fn step(&self, x: &Vector2<f64>, u: &Vector2<f64>) -> Result<Vector2<f64>> {
            Ok(x + u * self.h)
        }
        fn step_with_sensitivity(&self, x: &Vector2<f64>, u: &Vector2<f64>) -> Result<(Vector2<f64>, SMatrix<f64, 2, 2>, SMatrix<f64, 2, 2>)> {
            Ok((x + u * self.h, SMatrix::identity(), SMatrix::identity() * self.h))
        }
        fn output_error(&self, x: &Vector2<f64>, r: &Vector2<f64>) -> (Vector2<f64>, SMatrix<f64, 2, 2>) {
            (r - x, -SMatrix::<f64, 2, 2>::identity())
        }
        fn position(&self, x: &Vector2<f64>) -> Option<(Vector3<f64>, SMatrix<f64, 3, 2>)> {
            Some((Vector3::new(x[0], x[1], 0.0), SMatrix::<f64, 3, 2>::new(1.0, 0.0, 0.0, 1.0, 0.0, 0.0)))
        }
    }

    /// Double integrator [position, velocity] with exact zero-order-hold discretization.
    struct DoubleIntegrator {
        h: f64,
    }

    impl DoubleIntegrator {
        fn matrices(&self) -> (SMatrix<f64, 2, 2>, SMatrix<f64, 2, 1>) {
            let h = self.h;
            (SMatrix::<f64, 2, 2>::new(1.0, h, 0.0, 1.0), SMatrix::<f64, 2, 1>::new(0.5 * h * h, h))
        }
    }

    impl OcpDynamics<2, 1, 1> for DoubleIntegrator {
        fn step(&self, x: &Vector2<f64>, u: &Vector1<f64>) -> Result<Vector2<f64>> {
            let (a, b) = self.matrices();
            Ok(a * x + b * u)
        }
        fn step_with_sensitivity(&self, x: &Vector2<f64>, u: &Vector1<f64>) -> Result<(Vector2<f64>, SMatrix<f64, 2, 2>, SMatrix<f64, 2, 1>)> {
            let (a, b) = self.matrices();
            Ok((a * x + b * u, a, b))
        }
        fn output_error(&self, x: &Vector2<f64>, r: &Vector1<f64>) -> (Vector1<f64>, SMatrix<f64, 1, 2>) {
            (Vector1::new(r[0] - x[0]), SMatrix::<f64, 1, 2>::new(-1.0, 0.0))
        }
    }

    fn planar_spec(obstacles: Vec<ObstacleSpec>) -> OcpSpec<2, 2> {
        OcpSpec {
            q: Vector2::new(1.0, 1.0),
            r: Vector2::new(0.01, 0.01),
            u_ref: Vector2::zeros(),
            u_min: Vector2::new(-3.0, -3.0),
            u_max: Vector2::new(3.0, 3.0),
            obstacles,
        }
    }

    fn assert_monotone<const NX: usize, const NU: usize>(sol: &OcpSolution<NX, NU>) {
        for stage in &sol.cost_history {
            for w in stage.windows(2) {
                assert!(w[1] <= w[0], "cost increased: {stage:?}");
            }
        }
    }

    #[test]
    fn equilibrium_is_optimal_immediately() {
        let model = SingleIntegrator { h: 0.5 };
        let x0 = Vector2::new(1.0, 2.0);
        let refs = vec![x0; 5];
        let sol = solve(&model, &x0, &refs, &planar_spec(vec![]), &SolverSettings::default(), &[Vector2::zeros(); 5]).unwrap();
        assert_eq!(sol.status, SolveStatus::Converged);
        assert!(sol.cost < 1e-12);
        assert!(sol.inputs.iter().all(|u| u.amax() < 1e-12));
    }

    #[test]
    fn single_step_cost_arithmetic() {
        // Output error 2 with unit weight and zero input cost: cost 4.
        let model = DoubleIntegrator { h: 1.0 };
        let spec = OcpSpec { q: Vector1::new(1.0), r: Vector1::new(0.0), u_ref: Vector1::zeros(), u_min: Vector1::new(-1.0), u_max: Vector1::new(1.0), obstacles: vec![] };
        let problem = Problem { model: &model, x0: Vector2::zeros(), refs: &[Vector1::new(2.0)], spec: &spec };
        let inputs = [Vector1::zeros()];
        let states = problem.rollout(&inputs).unwrap();
        assert_eq!(problem.cost(&inputs, &states, 0.0), 4.0);
    }

    #[test]
    fn double_integrator_matches_grid_search() {
        let model = DoubleIntegrator { h: 0.5 };
        let spec = OcpSpec {
            q: Vector1::new(1.0),
            r: Vector1::new(0.1),
            u_ref: Vector1::zeros(),
            u_min: Vector1::new(-2.0),
            u_max: Vector1::new(2.0),
            obstacles: vec![],
        };
        let x0 = Vector2::new(0.0, 0.3);
        let refs = [Vector1::new(0.6), Vector1::new(1.5)];
        let sol = solve(&model, &x0, &refs, &spec, &SolverSettings::default(), &[Vector1::zeros(); 2]).unwrap();
        assert_monotone(&sol);
        let problem = Problem { model: &model, x0, refs: &refs, spec: &spec };
        let step = 0.001;
        let mut best = (f64::INFINITY, 0.0, 0.0);
        let grid = (0..=4000).map(|i| -2.0 + step * i as f64);
        for a in grid.clone() {
            for b in grid.clone() {
                let inputs = [Vector1::new(a), Vector1::new(b)];
                let c = problem.cost(&inputs, &problem.rollout(&inputs).unwrap(), 0.0);
                if c < best.0 {
                    best = (c, a, b);
                }
            }
        }
        assert!((sol.inputs[0][0] - best.1).abs() <= step);
        assert!((sol.inputs[1][0] - best.2).abs() <= step);
        assert!(sol.cost <= best.0 + 1e-12);
    }

    #[test]
    fn double_integrator_respects_active_bounds() {
        let model = DoubleIntegrator { h: 0.5 };
        let spec = OcpSpec { q: Vector1::new(1.0), r: Vector1::new(0.0), u_ref: Vector1::zeros(), u_min: Vector1::new(-0.5), u_max: Vector1::new(0.5), obstacles: vec![] };
        let refs = [Vector1::new(10.0), Vector1::new(10.0)];
        let sol = solve(&model, &Vector2::zeros(), &refs, &spec, &SolverSettings::default(), &[Vector1::zeros(); 2]).unwrap();
        assert_eq!(sol.inputs[0][0], 0.5);
        assert_eq!(sol.inputs[1][0], 0.5);
    }

    #[test]
    fn planar_obstacle_matches_grid_search() {
        // Straight path along x through a unit sphere centered slightly off the line.
        let model = SingleIntegrator { h: 1.0 };
        let obstacle = ObstacleSpec::new([1.0, 0.1, 0.0], 1.0).unwrap();
        let spec = planar_spec(vec![obstacle]);
        let x0 = Vector2::new(-1.0, 0.0);
        let refs = [Vector2::new(1.0, 0.0), Vector2::new(3.0, 0.0)];
        let sol = solve(&model, &x0, &refs, &spec, &SolverSettings::default(), &[Vector2::new(2.0, 0.0); 2]).unwrap();
        assert_monotone(&sol);
        assert!(sol.max_penetration < 0.01, "{}", sol.max_penetration);
        // The vehicle sidesteps: away from the center's offset, i.e. toward −y.
        assert!(sol.states[1][1] < -0.5);

        // Dense search over the four inputs at the final penalty weight:
        // a 0.1 grid over the whole box, then a 0.01 grid around its best point.
        let problem = Problem { model: &model, x0, refs: &refs, spec: &spec };
        let mu = sol.penalty_weight;
        let search = |center: [f64; 4], half: f64, h: f64| {
            let n = (2.0 * half / h).round() as usize;
            let axis = |c: f64| (0..=n).map(move |i| (c - half + h * i as f64).clamp(-3.0, 3.0));
            let mut best = (f64::INFINITY, [0.0; 4]);
            for a in axis(center[0]) {
                for b in axis(center[1]) {
                    for c in axis(center[2]) {
                        for d in axis(center[3]) {
                            let inputs = [Vector2::new(a, b), Vector2::new(c, d)];
                            let cost = problem.cost(&inputs, &problem.rollout(&inputs).unwrap(), mu);
                            if cost < best.0 {
                                best = (cost, [a, b, c, d]);
                            }
                        }
                    }
                }
            }
            best
        };
        let coarse = search([0.0; 4], 3.0, 0.1);
        let fine_step = 0.01;
        let best = search(coarse.1, 0.2, fine_step);
        let found = [sol.inputs[0][0], sol.inputs[0][1], sol.inputs[1][0], sol.inputs[1][1]];
        for (f, g) in found.iter().zip(best.1) {
            assert!((f - g).abs() <= fine_step, "{found:?} vs grid {:?}", best.1);
        }
        assert!(sol.cost <= best.0 + 1e-9);
    }

    #[test]
    fn stationarity_at_known_optimum() {
        let model = SingleIntegrator { h: 0.2 };
        let x0 = Vector2::new(0.5, -0.5);
        let refs = vec![x0; 4];
        let problem = Problem { model: &model, x0, refs: &refs, spec: &planar_spec(vec![]) };
        let (h, g) = problem.normal_equations(&[Vector2::zeros(); 4], 0.0).unwrap();
        let step = h.cholesky().unwrap().solve(&g);
        assert!(step.amax() < 1e-6);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        // Path crossing the obstacle so the penalty rows are active.
        let model = SingleIntegrator { h: 0.5 };
        let spec = planar_spec(vec![ObstacleSpec::new([0.6, 0.2, 0.0], 0.8).unwrap()]);
        let x0 = Vector2::new(-0.5, 0.0);
        let refs = [Vector2::new(0.5, 0.0), Vector2::new(1.5, 0.1), Vector2::new(2.0, -0.3)];
        let problem = Problem { model: &model, x0, refs: &refs, spec: &spec };
        let inputs = [Vector2::new(1.5, 0.3), Vector2::new(0.7, -0.4), Vector2::new(1.1, 0.2)];
        let mu = 50.0;
        let (h, g) = problem.normal_equations(&inputs, mu).unwrap();
        let cost = |u: &[Vector2<f64>]| problem.cost(u, &problem.rollout(u).unwrap(), mu);
        let eps = 1e-6;
        for k in 0..3 {
            for i in 0..2 {
                let (mut up, mut dn) = (inputs, inputs);
                up[k][i] += eps;
                dn[k][i] -= eps;
                let fd = (cost(&up) - cost(&dn)) / (2.0 * eps);
                assert!((fd - 2.0 * g[2 * k + i]).abs() < 1e-6, "{fd} vs {}", 2.0 * g[2 * k + i]);
            }
        }
        assert!((&h - h.transpose()).amax() < 1e-12);
        assert!(h.clone().cholesky().is_some());
    }

    #[test]
    fn start_deep_inside_obstacle_is_infeasible() {
        let model = SingleIntegrator { h: 1.0 };
        let spec = planar_spec(vec![ObstacleSpec::new([0.0; 3], 1.0).unwrap()]);
        let r = solve(&model, &Vector2::new(0.1, 0.0), &[Vector2::zeros()], &spec, &SolverSettings::default(), &[Vector2::zeros()]);
        assert!(matches!(r, Err(Error::InfeasibleStart { .. })));
    }

    #[test]
    fn wrong_warm_start_length_is_rejected() {
        let model = SingleIntegrator { h: 1.0 };
        let r = solve(&model, &Vector2::zeros(), &[Vector2::zeros(); 3], &planar_spec(vec![]), &SolverSettings::default(), &[Vector2::zeros()]);
        assert!(matches!(r, Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn solution_states_match_a_fresh_rollout() {
        let model = SingleIntegrator { h: 0.3 };
        let spec = planar_spec(vec![ObstacleSpec::new([1.0, 0.0, 0.0], 0.4).unwrap()]);
        let x0 = Vector2::zeros();
        let refs: Vec<_> = (1..=6).map(|k| Vector2::new(0.4 * k as f64, 0.0)).collect();
        let sol = solve(&model, &x0, &refs, &spec, &SolverSettings::default(), &[Vector2::zeros(); 6]).unwrap();
        let problem = Problem { model: &model, x0, refs: &refs, spec: &spec };
        let again = problem.rollout(&sol.inputs).unwrap();
        for (a, b) in again.iter().zip(&sol.states) {
            assert!((a - b).amax() < 1e-12);
        }
        for u in &sol.inputs {
            assert!(u.iter().zip(spec.u_min.iter().zip(spec.u_max.iter())).all(|(v, (l, h))| v >= l && v <= h));
        }
    }
}
