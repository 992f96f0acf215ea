use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::sim::SnapshotSet;

/// Second-order finite differences down each column of `x`.
///
/// Central differences on interior rows and one-sided three-point stencils
/// at both ends, so the result is exact for quadratics.
pub fn differentiate(x: &DMatrix<f64>, dt: f64) -> Result<DMatrix<f64>> {
    let w = x.nrows();
    if w < 3 {
        return Err(Error::TooFewSamples { rows: w, required: 3 });
    }
    let inv = 1.0 / (2.0 * dt);
    let mut d = DMatrix::zeros(w, x.ncols());
    for j in 0..x.ncols() {
        let c = x.column(j);
        d[(0, j)] = (4.0 * (c[1] - c[0]) - (c[2] - c[0])) * inv;
        for i in 1..w - 1 {
            d[(i, j)] = (c[i + 1] - c[i - 1]) * inv;
        }
        d[(w - 1, j)] = (4.0 * (c[w - 1] - c[w - 2]) - (c[w - 1] - c[w - 3])) * inv;
    }
    Ok(d)
}

/// Fills `velocity_dot` and `rates_dot`.
pub fn estimate_derivatives(set: &SnapshotSet) -> Result<SnapshotSet> {
    if set.len() < 3 {
        return Err(Error::TooFewSamples {
            rows: set.len(),
            required: 3,
        });
    }
    set.validate()?;
    let dt = set.dt();
    let mut out = set.clone();
    out.velocity_dot = Some(differentiate(&set.velocity, dt)?);
    out.rates_dot = Some(differentiate(&set.rates, dt)?);
    Ok(out)
}

/// Replaces each logged input with its mean over the differencing window.
///
/// Inputs are held constant between samples, so a central difference at row
/// `i` averages the response to the inputs of rows `i-1` and `i`. Pairing it
/// with the row-`i` input alone leaves an O(dt·u̇) bias that is large next to
/// weakly excited terms. Every library term is linear in the input channels
/// for fixed state, so averaging the channels is exact to the same order as
/// the difference itself. End rows use the two inputs their one-sided
/// stencil spans.
pub fn align_held_inputs(set: &SnapshotSet) -> Result<SnapshotSet> {
    let w = set.len();
    if w < 3 {
        return Err(Error::TooFewSamples { rows: w, required: 3 });
    }
    let pair = |i: usize| match i {
        0 => (0, 1),
        i if i == w - 1 => (w - 3, w - 2),
        i => (i - 1, i),
    };
    let average = |m: &DMatrix<f64>| {
        DMatrix::from_fn(w, m.ncols(), |i, j| {
            let (a, b) = pair(i);
            0.5 * (m[(a, j)] + m[(b, j)])
        })
    };
    let mut out = set.clone();
    out.thrust_input = average(&set.thrust_input);
    out.moments = average(&set.moments);
    out.rotor_speed = set.rotor_speed.as_ref().map(|r| {
        nalgebra::DVector::from_fn(w, |i, _| {
            let (a, b) = pair(i);
            0.5 * (r[a] + r[b])
        })
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sampled(f: impl Fn(f64) -> f64, w: usize, dt: f64) -> DMatrix<f64> {
        DMatrix::from_fn(w, 1, |i, _| f(i as f64 * dt))
    }

    #[test]
    fn constant_has_zero_derivative() {
        let d = differentiate(&sampled(|_| 4.2, 10, 0.1), 0.1).unwrap();
        assert!(d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_is_exact() {
        let d = differentiate(&sampled(|t| 3.0 * t, 25, 0.002), 0.002).unwrap();
        assert!(d.iter().all(|&v| (v - 3.0).abs() < 1e-10));
    }

    #[test]
    fn quadratic_is_exact_at_both_ends() {
        let dt = 0.01;
        let d = differentiate(&sampled(|t| t * t - 2.0 * t, 30, dt), dt).unwrap();
        for i in 0..30 {
            let t = i as f64 * dt;
            assert!((d[(i, 0)] - (2.0 * t - 2.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn sine_error_within_truncation_bound() {
        let dt = 0.002;
        let w = 5000;
        let d = differentiate(&sampled(f64::sin, w, dt), dt).unwrap();
        let max_err = (0..w)
            .map(|i| (d[(i, 0)] - (i as f64 * dt).cos()).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 1e-5, "{max_err}");
    }

    #[test]
    fn aligned_inputs_average_adjacent_rows() {
        use crate::dynamics::{RigidBodyState, Wrench};
        use crate::sim::SnapshotRecorder;
        let mut rec = SnapshotRecorder::default();
        for i in 0..5 {
            let s = RigidBodyState::default();
            rec.push(0.1 * i as f64, &s, &Wrench::new(-(i as f64), i as f64, 0.0, 0.0), i as f64);
        }
        let set = rec.finish().unwrap();
        let aligned = align_held_inputs(&set).unwrap();
        let l: Vec<f64> = aligned.moments.column(0).iter().copied().collect();
        assert_eq!(l, vec![0.5, 0.5, 1.5, 2.5, 2.5]);
        assert_eq!(aligned.rotor_speed.unwrap()[2], 1.5);
        assert_eq!(aligned.velocity, set.velocity);
    }

    #[test]
    fn two_rows_are_too_few() {
        assert!(matches!(
            differentiate(&DMatrix::zeros(2, 3), 0.1),
            Err(Error::TooFewSamples { rows: 2, .. })
        ));
    }
}
