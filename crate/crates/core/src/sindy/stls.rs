use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::library::Library;

/// Diagonal entries of R below this fraction of the largest one mark a
/// column as linearly dependent on its predecessors.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StlsOptions {
    /// Coefficients smaller than this in magnitude (physical units) are zeroed.
    pub threshold: f64,
    pub max_iters: usize,
}

impl Default for StlsOptions {
    fn default() -> Self {
        Self {
            threshold: 0.005,
            max_iters: 10,
        }
    }
}

impl StlsOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold >= 0.0) || !self.threshold.is_finite() || self.max_iters == 0 {
            return Err(Error::InvalidParameter(
                "stls: threshold must be finite and >= 0, max_iters >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StlsFit {
    /// k×m coefficients, exact zeros off the support.
    pub coefficients: DMatrix<f64>,
    /// Least-squares solves used per output column.
    pub iterations: Vec<usize>,
    /// ‖Ψσ − ẋ‖₂ per output column.
    pub residual_norms: Vec<f64>,
}

impl StlsFit {
    pub fn support(&self, output: usize) -> Vec<bool> {
        self.coefficients.column(output).iter().map(|&c| c != 0.0).collect()
    }
}

/// Least squares over the columns flagged in `active`, with each column
/// scaled to unit RMS. Returns full-length coefficients in physical units.
fn solve_on_support(
    psi: &DMatrix<f64>,
    target: &DVector<f64>,
    active: &[bool],
    names: &[String],
    output: &str,
) -> Result<DVector<f64>> {
    let k = psi.ncols();
    let mut coef = DVector::zeros(k);
    let cols: Vec<usize> = (0..k).filter(|&j| active[j]).collect();
    if cols.is_empty() {
        return Ok(coef);
    }
    let w = psi.nrows();
    if w < cols.len() {
        return Err(Error::TooFewSamples {
            rows: w,
            required: cols.len(),
        });
    }
    let scale: Vec<f64> = cols
        .iter()
        .map(|&j| (psi.column(j).norm_squared() / w as f64).sqrt())
        .collect();
    let zero_cols: Vec<String> = cols
        .iter()
        .zip(&scale)
        .filter(|(_, &s)| !(s > 0.0) || !s.is_finite())
        .map(|(&j, _)| names[j].clone())
        .collect();
    if !zero_cols.is_empty() {
        return Err(Error::RankDeficient {
            output: output.to_string(),
            terms: zero_cols,
        });
    }
    let a = DMatrix::from_fn(w, cols.len(), |i, c| psi[(i, cols[c])] / scale[c]);
    let qr = a.qr();
    let r = qr.r();
    let max_diag = r.diagonal().amax();
    let dependent: Vec<String> = (0..cols.len())
        .filter(|&c| r[(c, c)].abs() <= RANK_TOLERANCE * max_diag)
        .map(|c| names[cols[c]].clone())
        .collect();
    if !dependent.is_empty() {
        return Err(Error::RankDeficient {
            output: output.to_string(),
            terms: dependent,
        });
    }
    let mut rhs = target.clone();
    qr.q_tr_mul(&mut rhs);
    let rhs = rhs.rows(0, cols.len()).into_owned();
    let z = r
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::RankDeficient {
            output: output.to_string(),
            terms: cols.iter().map(|&j| names[j].clone()).collect(),
        })?;
    for (c, &j) in cols.iter().enumerate() {
        coef[j] = z[c] / scale[c];
    }
    Ok(coef)
}

fn stls_column(
    psi: &DMatrix<f64>,
    target: &DVector<f64>,
    opts: &StlsOptions,
    names: &[String],
    output: &str,
) -> Result<(DVector<f64>, usize)> {
    let mut active = vec![true; psi.ncols()];
    let mut coef = DVector::zeros(psi.ncols());
    let mut iterations = 0;
    let mut settled = false;
    while iterations < opts.max_iters {
        coef = solve_on_support(psi, target, &active, names, output)?;
        iterations += 1;
        let next: Vec<bool> = coef.iter().map(|c| c.abs() >= opts.threshold && *c != 0.0).collect();
        if next == active {
            settled = true;
            break;
        }
        active = next;
    }
    if !settled {
        // Out of iterations: solve once more on the last support and zero
        // whatever still falls under the threshold.
        coef = solve_on_support(psi, target, &active, names, output)?;
        iterations += 1;
        coef.iter_mut().filter(|c| c.abs() < opts.threshold).for_each(|c| *c = 0.0);
    }
    Ok((coef, iterations))
}

/// Sequential thresholded least squares, solved independently for each column
/// of `targets`.
///
/// `output_names` label the target columns in [`Error::RankDeficient`].
pub fn stls(
    library: &Library,
    targets: &DMatrix<f64>,
    output_names: &[&str],
    opts: &StlsOptions,
) -> Result<StlsFit> {
    opts.validate()?;
    let psi = &library.matrix;
    if targets.nrows() != psi.nrows() || output_names.len() != targets.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "library has {} rows, targets {}×{}, {} output names",
            psi.nrows(),
            targets.nrows(),
            targets.ncols(),
            output_names.len()
        )));
    }
    let mut coefficients = DMatrix::zeros(psi.ncols(), targets.ncols());
    let mut iterations = Vec::with_capacity(targets.ncols());
    let mut residual_norms = Vec::with_capacity(targets.ncols());
    for (m, output) in output_names.iter().enumerate() {
        let target = targets.column(m).into_owned();
        let (coef, iters) = stls_column(psi, &target, opts, &library.names, output)?;
        residual_norms.push((psi * &coef - &target).norm());
        coefficients.set_column(m, &coef);
        iterations.push(iters);
    }
    Ok(StlsFit {
        coefficients,
        iterations,
        residual_norms,
    })
}
