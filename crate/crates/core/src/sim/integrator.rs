use nalgebra::SVector;

use crate::dynamics::{wrap_angle, InputVector, RigidBodyState, StateVector, Wrench};
use crate::error::Result;

/// Continuous-time dynamics `ẋ = f(x, u)` over the 12-state vector.
pub trait Dynamics {
    fn derivative(&self, x: &StateVector, u: &InputVector) -> Result<StateVector>;
}

impl<F> Dynamics for F
where
    F: Fn(&StateVector, &InputVector) -> Result<StateVector>,
{
    fn derivative(&self, x: &StateVector, u: &InputVector) -> Result<StateVector> {
        self(x, u)
    }
}

/// One classical Runge–Kutta step of `ẋ = f(x)`.
pub fn rk4_integrate<const D: usize, F>(mut f: F, x: &SVector<f64, D>, dt: f64) -> Result<SVector<f64, D>>
where
    F: FnMut(&SVector<f64, D>) -> Result<SVector<f64, D>>,
{
    let k1 = f(x)?;
    let k2 = f(&(x + k1 * (0.5 * dt)))?;
    let k3 = f(&(x + k2 * (0.5 * dt)))?;
    let k4 = f(&(x + k3 * dt))?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// RK4 over the vehicle state with the input held constant; no angle wrapping.
pub fn rk4_vector<M: Dynamics + ?Sized>(
    model: &M,
    x: &StateVector,
    u: &InputVector,
    dt: f64,
) -> Result<StateVector> {
    rk4_integrate(|s| model.derivative(s, u), x, dt)
}

/// Advances `state` by `dt` under a constant `wrench` and wraps yaw into (-π, π].
pub fn rk4_step<M: Dynamics + ?Sized>(
    model: &M,
    state: &RigidBodyState,
    wrench: &Wrench,
    dt: f64,
) -> Result<RigidBodyState> {
    debug_assert!(dt > 0.0);
    let next = rk4_vector(model, &state.to_vector(), &wrench.to_vector(), dt)?;
    let mut out = RigidBodyState::from_vector(&next);
    out.euler.z = wrap_angle(out.euler.z);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Plant, VehicleParams};
    use nalgebra::{Vector1, Vector3};

    fn decay(x: &Vector1<f64>) -> Result<Vector1<f64>> {
        Ok(-x)
    }

    #[test]
    fn exponential_decay_single_step() {
        let x = rk4_integrate(decay, &Vector1::new(1.0), 0.1).unwrap();
        assert!((x[0] - (-0.1f64).exp()).abs() < 1e-7);
        assert!((x[0] - 0.90483742).abs() < 1e-7);
    }

    fn global_error(steps: usize) -> f64 {
        let dt = 1.0 / steps as f64;
        let mut x = Vector1::new(1.0);
        for _ in 0..steps {
            x = rk4_integrate(decay, &x, dt).unwrap();
        }
        (x[0] - (-1.0f64).exp()).abs()
    }

    #[test]
    fn fourth_order_convergence() {
        for steps in [10, 20, 40] {
            let order = (global_error(steps) / global_error(2 * steps)).log2();
            assert!(order >= 3.9, "observed order {order} at {steps} steps");
        }
    }

    #[test]
    fn zero_dynamics_leave_state_unchanged() {
        let zero = |_: &StateVector, _: &InputVector| Ok(StateVector::zeros());
        let mut s = RigidBodyState::at_rest(Vector3::new(1.0, 2.0, 3.0), 0.3);
        s.velocity = Vector3::new(0.1, 0.2, 0.3);
        let next = rk4_step(&zero, &s, &Wrench::default(), 0.01).unwrap();
        assert_eq!(next, s);
    }

    #[test]
    fn hover_is_a_fixed_point() {
        let params = VehicleParams::default();
        let plant = Plant::new(params.clone()).unwrap();
        let s = RigidBodyState::at_rest(Vector3::new(0.0, 0.0, -5.0), -0.4);
        for dt in [0.002, 0.05, 0.5] {
            let next = rk4_step(&plant, &s, &params.hover_wrench(), dt).unwrap();
            assert!((next.to_vector() - s.to_vector()).abs().max() < 1e-12);
        }
    }

    #[test]
    fn yaw_is_wrapped() {
        let spin = |_: &StateVector, _: &InputVector| {
            let mut d = StateVector::zeros();
            d[8] = 1.0;
            Ok(d)
        };
        let s = RigidBodyState::at_rest(Vector3::zeros(), 3.1);
        let next = rk4_step(&spin, &s, &Wrench::default(), 0.1).unwrap();
        assert!((next.euler.z - (3.2 - 2.0 * std::f64::consts::PI)).abs() < 1e-12);
    }
}
