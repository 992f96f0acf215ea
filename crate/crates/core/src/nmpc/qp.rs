//! Box-constrained convex quadratic programs.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bound {
    Free,
    Lower,
    Upper,
}

/// Minimizes `½ dᵀ H d + gᵀ d` subject to `lo ≤ d ≤ hi` for symmetric
/// positive-definite `H`, with a primal active-set method.
///
/// Each pass solves the equality-constrained problem on the free variables by
/// Cholesky, pins variables that leave the box, and releases pinned variables
/// whose multiplier has the wrong sign. Returns `None` if `H` restricted to the
/// free set is not positive definite.
pub fn solve_box_qp(h: &DMatrix<f64>, g: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> Option<DVector<f64>> {
    let n = g.len();
    let mut state = vec![Bound::Free; n];
    let mut d = DVector::zeros(n);
    for _ in 0..(4 * n + 10) {
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == Bound::Free).collect();
        for i in 0..n {
            match state[i] {
                Bound::Lower => d[i] = lo[i],
                Bound::Upper => d[i] = hi[i],
                Bound::Free => {}
            }
        }
        if !free.is_empty() {
            let mut rhs = DVector::from_fn(free.len(), |a, _| -g[free[a]]);
            for (a, &i) in free.iter().enumerate() {
                for j in 0..n {
                    if state[j] != Bound::Free {
                        rhs[a] -= h[(i, j)] * d[j];
                    }
                }
            }
            let hff = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
            let sol = hff.cholesky()?.solve(&rhs);
            for (a, &i) in free.iter().enumerate() {
                d[i] = sol[a];
            }
        }

        let mut changed = false;
        for &i in &free {
            if d[i] < lo[i] {
                state[i] = Bound::Lower;
                changed = true;
            } else if d[i] > hi[i] {
                state[i] = Bound::Upper;
                changed = true;
            }
        }
        if changed {
            continue;
        }
        // Multipliers of the pinned variables: the gradient there.
        let grad = h * &d + g;
        let mut worst: Option<(usize, f64)> = None;
        for i in 0..n {
            let violation = match state[i] {
                Bound::Lower => -grad[i],
                Bound::Upper => grad[i],
                Bound::Free => 0.0,
            };
            if violation > 1e-12 * (1.0 + grad.amax()) && worst.is_none_or(|(_, v)| violation > v) {
                worst = Some((i, violation));
            }
        }
        match worst {
            Some((i, _)) => state[i] = Bound::Free,
            None => break,
        }
    }
    Some(d.zip_zip_map(lo, hi, |v, l, u| v.clamp(l, u)))
}
