use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sim::{rk4_vector, Dynamics, SnapshotSet};

pub const VALIDATION_CHANNELS: [&str; 6] = ["xddot", "yddot", "zddot", "pdot", "qdot", "rdot"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelError {
    pub channel: String,
    pub rmse: f64,
    pub max_abs: f64,
    /// Standard deviation of the measured signal, for relative comparisons.
    pub signal_std: f64,
}

impl ChannelError {
    pub fn relative_rmse(&self) -> f64 {
        self.rmse / self.signal_std
    }
}

/// One-step prediction errors and the traces behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub channels: Vec<ChannelError>,
    pub times: Vec<f64>,
    /// (w-1)×6 predicted accelerations.
    pub predicted: DMatrix<f64>,
    /// (w-1)×6 accelerations measured from the log.
    pub actual: DMatrix<f64>,
}

/// Integrates the model one sample from every logged state under the logged
/// input and compares the implied mean acceleration with the log.
///
/// Both sides are forward differences over the same interval, `(v̂ᵢ₊₁ − vᵢ)/dt`
/// against `(vᵢ₊₁ − vᵢ)/dt`, so a model equal to the plant is limited only by
/// the integrator's local error. The logged input is held over the interval,
/// as it was during collection.
pub fn one_step_validate<M: Dynamics + ?Sized>(model: &M, set: &SnapshotSet) -> Result<ValidationReport> {
    if set.len() < 2 {
        return Err(Error::TooFewSamples { rows: set.len(), required: 2 });
    }
    set.validate()?;
    let dt = set.dt();
    let rows = set.len() - 1;
    let mut predicted = DMatrix::zeros(rows, 6);
    let mut actual = DMatrix::zeros(rows, 6);
    for i in 0..rows {
        let x = set.state(i).to_vector();
        let next = set.state(i + 1).to_vector();
        let u = set.wrench(i).to_vector();
        let stepped = rk4_vector(model, &x, &u, dt)?;
        for (c, k) in [3usize, 4, 5, 9, 10, 11].into_iter().enumerate() {
            predicted[(i, c)] = (stepped[k] - x[k]) / dt;
            actual[(i, c)] = (next[k] - x[k]) / dt;
        }
    }
    let channels = VALIDATION_CHANNELS
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let err = predicted.column(c) - actual.column(c);
            let mean = actual.column(c).mean();
            let var = actual.column(c).iter().map(|a| (a - mean).powi(2)).sum::<f64>() / rows as f64;
            ChannelError {
                channel: name.to_string(),
                rmse: (err.norm_squared() / rows as f64).sqrt(),
                max_abs: err.amax(),
                signal_std: var.sqrt(),
            }
        })
        .collect();
    Ok(ValidationReport {
        channels,
        times: set.times[..rows].to_vec(),
        predicted,
        actual,
    })
}

impl ValidationReport {
    pub fn channel(&self, name: &str) -> Option<&ChannelError> {
        self.channels.iter().find(|c| c.channel == name)
    }

    /// Predicted-versus-actual traces, one row per interval.
    pub fn write_traces(&self, path: &Path) -> Result<()> {
        let mut out = csv::Writer::from_path(path).map_err(|e| Error::Data {
            path: path.into(),
            message: e.to_string(),
        })?;
        let mut header = vec!["t".to_string()];
        for name in VALIDATION_CHANNELS {
            header.push(format!("{name}_pred"));
            header.push(format!("{name}_actual"));
        }
        let to_data = |e: csv::Error| Error::Data { path: path.into(), message: e.to_string() };
        out.write_record(&header).map_err(to_data)?;
        for (i, t) in self.times.iter().enumerate() {
            let mut record = vec![t.to_string()];
            for c in 0..6 {
                record.push(self.predicted[(i, c)].to_string());
                record.push(self.actual[(i, c)].to_string());
            }
            out.write_record(&record).map_err(to_data)?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    /// Per-channel summary as CSV text.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("channel,rmse,max_abs,signal_std\n");
        for c in &self.channels {
            s.push_str(&format!("{},{},{},{}\n", c.channel, c.rmse, c.max_abs, c.signal_std));
        }
        s
    }
}
