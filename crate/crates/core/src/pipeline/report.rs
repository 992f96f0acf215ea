use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::nmpc::{FlightLog, SolveTimeStats};
use crate::sindy::{CoefficientBlock, SparseModel, ROTATIONAL_OUTPUTS, TRANSLATIONAL_OUTPUTS};

/// One coefficient of the identified model next to its true value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryRow {
    pub block: &'static str,
    pub output: &'static str,
    pub term: String,
    pub true_value: f64,
    pub identified: f64,
    /// Signed percent error; absent when the true value is zero.
    pub percent_error: Option<f64>,
}

impl RecoveryRow {
    /// A true zero identified as exactly zero, or a nonzero within `tol_percent`.
    pub fn within(&self, tol_percent: f64) -> bool {
        match self.percent_error {
            Some(e) => e.abs() <= tol_percent,
            None => self.identified == 0.0,
        }
    }
}

/// Side-by-side comparison of identified and true coefficients, listing every
/// term that is nonzero in either model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub rows: Vec<RecoveryRow>,
}

fn block_rows(
    block: &'static str,
    outputs: [&'static str; 3],
    identified: &CoefficientBlock,
    truth: &CoefficientBlock,
    rows: &mut Vec<RecoveryRow>,
) {
    let mut terms: Vec<String> = truth.library.names();
    for name in identified.library.names() {
        if !terms.contains(&name) {
            terms.push(name);
        }
    }
    for (o, output) in outputs.into_iter().enumerate() {
        for term in &terms {
            let (t, i) = (truth.get(term, o), identified.get(term, o));
            if t == 0.0 && i == 0.0 {
                continue;
            }
            rows.push(RecoveryRow {
                block,
                output,
                term: term.clone(),
                true_value: t,
                identified: i,
                percent_error: (t != 0.0).then(|| 100.0 * (i - t) / t),
            });
        }
    }
}

impl RecoveryReport {
    pub fn new(identified: &SparseModel, truth: &SparseModel) -> Self {
        let mut rows = Vec::new();
        block_rows("translational", TRANSLATIONAL_OUTPUTS, &identified.translational, &truth.translational, &mut rows);
        block_rows("rotational", ROTATIONAL_OUTPUTS, &identified.rotational, &truth.rotational, &mut rows);
        Self { rows }
    }

    pub fn row(&self, output: &str, term: &str) -> Option<&RecoveryRow> {
        self.rows.iter().find(|r| r.output == output && r.term == term)
    }

    /// Terms identified as nonzero whose true value is zero.
    pub fn spurious(&self) -> impl Iterator<Item = &RecoveryRow> {
        self.rows.iter().filter(|r| r.true_value == 0.0)
    }

    /// True terms driven to zero.
    pub fn missed(&self) -> impl Iterator<Item = &RecoveryRow> {
        self.rows.iter().filter(|r| r.true_value != 0.0 && r.identified == 0.0)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut block = "";
        for r in &self.rows {
            if r.block != block {
                block = r.block;
                let _ = writeln!(s, "\n{block}\n{:<8} {:<12} {:>12} {:>12} {:>9}", "output", "term", "true", "identified", "error %");
            }
            let err = r.percent_error.map_or_else(|| "-".to_string(), |e| format!("{e:.3}"));
            let _ = writeln!(s, "{:<8} {:<12} {:>12.5} {:>12.5} {:>9}", r.output, r.term, r.true_value, r.identified, err);
        }
        if let Some(r) = self.row("pdot", "q*r") {
            let _ = writeln!(
                s,
                "\nnote: pdot q*r follows Euler's equation, (I_yy - I_zz)/I_xx = {:.4}; \
                 tables quoting +{:.4} use the opposite sign, so its magnitude is what is compared",
                r.true_value,
                r.true_value.abs()
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_rows(path, &self.rows)
    }
}

/// Summary of one closed-loop run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackReport {
    pub label: String,
    pub model: String,
    pub rmse_x: f64,
    pub rmse_y: f64,
    pub rmse_z: f64,
    pub min_obstacle_margin: f64,
    pub mean_solve_time_s: f64,
    pub max_solve_time_s: f64,
    pub solves: usize,
    pub unconverged_solves: usize,
}

impl TrackReport {
    pub fn new(label: &str, model: &str, log: &FlightLog) -> Self {
        let [rmse_x, rmse_y, rmse_z] = log.position_rmse();
        let SolveTimeStats { mean_s, max_s, count } = log.solve_time_stats();
        Self {
            label: label.to_string(),
            model: model.to_string(),
            rmse_x,
            rmse_y,
            rmse_z,
            min_obstacle_margin: log.min_obstacle_margin,
            mean_solve_time_s: mean_s,
            max_solve_time_s: max_s,
            solves: count,
            unconverged_solves: log.unconverged_solves(),
        }
    }

    pub fn rmse(&self) -> [f64; 3] {
        [self.rmse_x, self.rmse_y, self.rmse_z]
    }

    pub fn to_text(&self) -> String {
        format!(
            "{:<10} rmse x {:.4} y {:.4} z {:.4} m | min margin {:.4} m | solve mean {:.2} ms max {:.2} ms ({} solves, {} unconverged)",
            self.label,
            self.rmse_x,
            self.rmse_y,
            self.rmse_z,
            self.min_obstacle_margin,
            1e3 * self.mean_solve_time_s,
            1e3 * self.max_solve_time_s,
            self.solves,
            self.unconverged_solves
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

/// Identified model against the nominal baseline on one scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub sindy: TrackReport,
    pub nominal: TrackReport,
    /// Smallest obstacle margin along the reference itself; negative means
    /// the reference path enters a keep-out sphere.
    pub reference_min_margin: f64,
    pub recovery: Option<RecoveryReport>,
    pub checks: Vec<Check>,
}

impl ComparisonReport {
    /// Builds the report and its threshold checks: lower RMSE on every axis,
    /// a z improvement above `min_z_gain`, clearance of at least
    /// `-feasibility_tol`, and solves faster than `deadline_s`.
    pub fn new(
        sindy: TrackReport,
        nominal: TrackReport,
        reference_min_margin: f64,
        recovery: Option<RecoveryReport>,
        min_z_gain: f64,
        feasibility_tol: f64,
        deadline_s: f64,
    ) -> Self {
        let mut checks = Vec::new();
        for (axis, (s, n)) in ["x", "y", "z"].iter().zip(sindy.rmse().into_iter().zip(nominal.rmse())) {
            checks.push(Check::new(&format!("rmse_{axis}_lower"), s < n, format!("{s:.4} vs {n:.4} m")));
        }
        let gain = 1.0 - sindy.rmse_z / nominal.rmse_z;
        checks.push(Check::new(
            "z_improvement",
            gain > min_z_gain,
            format!("{:.1} % (need > {:.0} %)", 100.0 * gain, 100.0 * min_z_gain),
        ));
        for run in [&sindy, &nominal] {
            checks.push(Check::new(
                &format!("{}_clearance", run.label),
                run.min_obstacle_margin >= -feasibility_tol,
                format!("{:.4} m (need >= {:.3})", run.min_obstacle_margin, -feasibility_tol),
            ));
            checks.push(Check::new(
                &format!("{}_real_time", run.label),
                run.max_solve_time_s < deadline_s,
                format!("max {:.2} ms (need < {:.0})", 1e3 * run.max_solve_time_s, 1e3 * deadline_s),
            ));
        }
        Self {
            sindy,
            nominal,
            reference_min_margin,
            recovery,
            checks,
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("closed-loop tracking\n");
        let _ = writeln!(s, "{}", self.sindy.to_text());
        let _ = writeln!(s, "{}", self.nominal.to_text());
        let _ = writeln!(s, "reference path min margin {:.4} m", self.reference_min_margin);
        let _ = writeln!(s, "\nchecks");
        for c in &self.checks {
            let _ = writeln!(s, "{} {:<20} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        if let Some(r) = &self.recovery {
            let _ = write!(s, "\ncoefficient recovery{}", r.to_text());
        }
        s
    }

    /// Writes the per-variant table to `path`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_rows(path, &[&self.sindy, &self.nominal])
    }
}

pub(crate) fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let data_err = |e: csv::Error| Error::Data {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(data_err)?;
    for r in rows {
        w.serialize(r).map_err(data_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::VehicleParams;

    #[test]
    fn exact_model_recovers_itself() {
        let m = SparseModel::from_physics(&VehicleParams::default()).unwrap();
        let r = RecoveryReport::new(&m, &m);
        assert_eq!(r.rows.len(), m.nonzero_count());
        assert!(r.rows.iter().all(|row| row.percent_error == Some(0.0)));
        assert_eq!(r.spurious().count(), 0);
        assert!(r.to_text().contains("note: pdot q*r follows Euler's equation, (I_yy - I_zz)/I_xx = -0.8065"));
    }

    #[test]
    fn percent_error_only_for_nonzero_truth() {
        let truth = SparseModel::from_physics(&VehicleParams::default()).unwrap();
        let none = SparseModel::nominal(&VehicleParams::default()).unwrap();
        let r = RecoveryReport::new(&none, &truth);
        let drag = r.row("xddot", "xdot").unwrap();
        assert_eq!(drag.identified, 0.0);
        assert_eq!(drag.percent_error, Some(-100.0));
        assert!(!drag.within(3.0));
        let thrust = r.row("zddot", "u_tr3").unwrap();
        assert!((thrust.percent_error.unwrap() - 20.0).abs() < 1e-9);
    }

    fn run(label: &str, rmse: [f64; 3], margin: f64, max: f64) -> TrackReport {
        TrackReport {
            label: label.into(),
            model: label.into(),
            rmse_x: rmse[0],
            rmse_y: rmse[1],
            rmse_z: rmse[2],
            min_obstacle_margin: margin,
            mean_solve_time_s: max / 2.0,
            max_solve_time_s: max,
            solves: 10,
            unconverged_solves: 0,
        }
    }

    #[test]
    fn checks_follow_thresholds() {
        let r = ComparisonReport::new(run("sindy", [0.1, 0.1, 0.3], 0.0, 0.01), run("nominal", [0.2, 0.2, 0.4], 0.1, 0.01), -0.5, None, 0.2, 0.01, 0.05);
        assert!(r.passed());
        let r = ComparisonReport::new(run("sindy", [0.1, 0.1, 0.35], -0.02, 0.01), run("nominal", [0.2, 0.2, 0.4], 0.1, 0.01), -0.5, None, 0.2, 0.01, 0.05);
        let failed: Vec<&str> = r.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        assert_eq!(failed, ["z_improvement", "sindy_clearance"]);
        assert!(r.to_text().contains("FAIL z_improvement"));
    }
}
