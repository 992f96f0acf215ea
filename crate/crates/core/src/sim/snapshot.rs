//! Logged flight data arranged as snapshot matrices, plus its CSV form.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector3};

use crate::dynamics::{rotation_body_to_inertial, RigidBodyState, Wrench};
use crate::error::{Error, Result};

/// Column names of the snapshot CSV, in order.
pub const SNAPSHOT_HEADER: [&str; 17] = [
    "t", "xdot", "ydot", "zdot", "phi", "theta", "psi", "p", "q", "r", "u_tr1", "u_tr2", "u_tr3",
    "L", "M", "N", "omega_r",
];

/// Relative tolerance on sample spacing.
const SPACING_TOLERANCE: f64 = 1e-9;

/// Time-aligned state, input, and (once estimated) derivative matrices.
///
/// Every matrix has one row per snapshot and three columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub times: Vec<f64>,
    /// Inertial velocities (ẋ, ẏ, ż).
    pub velocity: DMatrix<f64>,
    /// Rotated collective force `R(:,3) f_z`.
    pub thrust_input: DMatrix<f64>,
    /// Euler angles (φ, θ, ψ).
    pub euler: DMatrix<f64>,
    /// Body rates (p, q, r).
    pub rates: DMatrix<f64>,
    /// Body moments (L, M, N).
    pub moments: DMatrix<f64>,
    pub rotor_speed: Option<DVector<f64>>,
    /// Time derivative of `velocity`.
    pub velocity_dot: Option<DMatrix<f64>>,
    /// Time derivative of `rates`.
    pub rates_dot: Option<DMatrix<f64>>,
}

/// Incremental builder used while simulating.
#[derive(Debug, Default)]
pub struct SnapshotRecorder {
    times: Vec<f64>,
    rows: Vec<[f64; 16]>,
}

impl SnapshotRecorder {
    pub fn with_capacity(rows: usize) -> Self {
        Self {
            times: Vec::with_capacity(rows),
            rows: Vec::with_capacity(rows),
        }
    }

    /// Records the state at `t` and the wrench applied from `t` onward.
    pub fn push(&mut self, t: f64, state: &RigidBodyState, wrench: &Wrench, rotor_speed: f64) {
        let u_tr = thrust_input(&state.euler, wrench.fz);
        let v = state.velocity;
        let e = state.euler;
        let w = state.body_rates;
        self.times.push(t);
        self.rows.push([
            v.x, v.y, v.z, e.x, e.y, e.z, w.x, w.y, w.z, u_tr.x, u_tr.y, u_tr.z, wrench.l, wrench.m,
            wrench.n, rotor_speed,
        ]);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn finish(self) -> Result<SnapshotSet> {
        SnapshotSet::from_rows(self.times, &self.rows, true)
    }
}

/// `R_B^I(:,3) · f_z`, the translational input channel.
pub fn thrust_input(euler: &Vector3<f64>, fz: f64) -> Vector3<f64> {
    rotation_body_to_inertial(euler).column(2) * fz
}

impl SnapshotSet {
    fn from_rows(times: Vec<f64>, rows: &[[f64; 16]], has_rotor: bool) -> Result<Self> {
        let w = times.len();
        let block = |offset: usize| DMatrix::from_fn(w, 3, |i, j| rows[i][offset + j]);
        let set = SnapshotSet {
            velocity: block(0),
            euler: block(3),
            rates: block(6),
            thrust_input: block(9),
            moments: block(12),
            rotor_speed: has_rotor.then(|| DVector::from_fn(w, |i, _| rows[i][15])),
            velocity_dot: None,
            rates_dot: None,
            times,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Sample spacing (first interval).
    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.len();
        if w < 2 {
            return Err(Error::TooFewSamples { rows: w, required: 2 });
        }
        let mut matrices = vec![&self.velocity, &self.thrust_input, &self.euler, &self.rates, &self.moments];
        matrices.extend(self.velocity_dot.iter());
        matrices.extend(self.rates_dot.iter());
        let shapes_ok = matrices.iter().all(|m| m.nrows() == w && m.ncols() == 3)
            && self.rotor_speed.as_ref().is_none_or(|r| r.len() == w);
        if !shapes_ok {
            return Err(Error::ShapeMismatch(format!(
                "every snapshot matrix must have {w} rows and 3 columns"
            )));
        }
        let dt = self.dt();
        if !(dt > 0.0) {
            return Err(Error::NonUniformSampling { row: 1 });
        }
        for (i, pair) in self.times.windows(2).enumerate() {
            if ((pair[1] - pair[0]) - dt).abs() > SPACING_TOLERANCE * dt.max(pair[1].abs()) {
                return Err(Error::NonUniformSampling { row: i + 1 });
            }
        }
        Ok(())
    }

    /// Vehicle state at row `i` (position is not logged and is set to zero).
    pub fn state(&self, i: usize) -> RigidBodyState {
        let row3 = |m: &DMatrix<f64>| Vector3::new(m[(i, 0)], m[(i, 1)], m[(i, 2)]);
        RigidBodyState {
            position: Vector3::zeros(),
            velocity: row3(&self.velocity),
            euler: row3(&self.euler),
            body_rates: row3(&self.rates),
        }
    }

    /// Wrench at row `i`, recovering `f_z` from the rotated thrust channel.
    pub fn wrench(&self, i: usize) -> Wrench {
        let euler = Vector3::new(self.euler[(i, 0)], self.euler[(i, 1)], self.euler[(i, 2)]);
        let axis = rotation_body_to_inertial(&euler).column(2).into_owned();
        let u_tr = Vector3::new(
            self.thrust_input[(i, 0)],
            self.thrust_input[(i, 1)],
            self.thrust_input[(i, 2)],
        );
        Wrench::new(
            axis.dot(&u_tr),
            self.moments[(i, 0)],
            self.moments[(i, 1)],
            self.moments[(i, 2)],
        )
    }

    /// Contiguous sub-range of rows; derivative matrices are carried along.
    pub fn slice(&self, start: usize, len: usize) -> SnapshotSet {
        let rows = |m: &DMatrix<f64>| m.rows(start, len).into_owned();
        SnapshotSet {
            times: self.times[start..start + len].to_vec(),
            velocity: rows(&self.velocity),
            thrust_input: rows(&self.thrust_input),
            euler: rows(&self.euler),
            rates: rows(&self.rates),
            moments: rows(&self.moments),
            rotor_speed: self.rotor_speed.as_ref().map(|r| r.rows(start, len).into_owned()),
            velocity_dot: self.velocity_dot.as_ref().map(rows),
            rates_dot: self.rates_dot.as_ref().map(rows),
        }
    }
}

/// Writes the snapshot CSV. Floats use the shortest representation that
/// parses back to the identical `f64`.
pub fn write_snapshots(set: &SnapshotSet, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "{}", SNAPSHOT_HEADER.join(",")).map_err(io)?;
    let mut line = String::with_capacity(512);
    for i in 0..set.len() {
        use std::fmt::Write as _;
        line.clear();
        let _ = write!(line, "{}", set.times[i]);
        for m in [&set.velocity, &set.euler, &set.rates, &set.thrust_input, &set.moments] {
            for j in 0..3 {
                let _ = write!(line, ",{}", m[(i, j)]);
            }
        }
        match &set.rotor_speed {
            Some(r) => {
                let _ = write!(line, ",{}", r[i]);
            }
            None => line.push(','),
        }
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_snapshots(path: &Path) -> Result<SnapshotSet> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let data_err = |message: String| Error::Data {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(file));
    let header = reader
        .headers()
        .map_err(|e| data_err(e.to_string()))?
        .iter()
        .map(str::trim)
        .collect::<Vec<_>>();
    if header != SNAPSHOT_HEADER {
        return Err(data_err(format!("unexpected header {header:?}")));
    }
    let mut times = Vec::new();
    let mut rows = Vec::new();
    let mut has_rotor = true;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| data_err(e.to_string()))?;
        let parse = |k: usize| -> Result<f64> {
            record[k].trim().parse::<f64>().map_err(|e| {
                data_err(format!("line {}: column `{}`: {e}", line + 2, SNAPSHOT_HEADER[k]))
            })
        };
        times.push(parse(0)?);
        let mut row = [0.0; 16];
        for (k, slot) in row.iter_mut().enumerate().take(15) {
            *slot = parse(k + 1)?;
        }
        if record[16].trim().is_empty() {
            has_rotor = false;
        } else {
            row[15] = parse(16)?;
        }
        rows.push(row);
    }
    SnapshotSet::from_rows(times, &rows, has_rotor)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_set(rows: usize) -> SnapshotSet {
        let mut rec = SnapshotRecorder::default();
        for i in 0..rows {
            let t = i as f64 * 0.002;
            let mut s = RigidBodyState::at_rest(Vector3::zeros(), 0.1 * t);
            s.velocity = Vector3::new(t.sin(), 1.0 / 3.0, -t);
            s.euler.x = 0.01 * t;
            s.body_rates = Vector3::new(1e-17, 2.0, std::f64::consts::PI);
            rec.push(t, &s, &Wrench::new(-12.0 - t, 0.1, -0.2, 1e-3 * t), 70.0 + t);
        }
        rec.finish().unwrap()
    }

    #[test]
    fn write_then_read_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.csv");
        let set = tiny_set(50);
        write_snapshots(&set, &path).unwrap();
        let back = read_snapshots(&path).unwrap();
        assert_eq!(set, back);
    }

    #[test]
    fn minimal_set_has_three_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.csv");
        write_snapshots(&tiny_set(2), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert_eq!(text.lines().next().unwrap(), SNAPSHOT_HEADER.join(","));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn single_row_is_rejected() {
        let mut rec = SnapshotRecorder::default();
        rec.push(0.0, &RigidBodyState::default(), &Wrench::default(), 0.0);
        assert!(matches!(rec.finish(), Err(Error::TooFewSamples { rows: 1, .. })));
    }

    #[test]
    fn wrench_is_recovered_from_thrust_channel() {
        let set = tiny_set(10);
        for i in 0..10 {
            let t = set.times[i];
            assert!((set.wrench(i).fz - (-12.0 - t)).abs() < 1e-12);
        }
    }

    #[test]
    fn non_uniform_times_are_rejected() {
        let mut set = tiny_set(5);
        set.times[3] += 1e-4;
        assert!(matches!(set.validate(), Err(Error::NonUniformSampling { .. })));
    }

    #[test]
    fn bad_header_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.csv");
        std::fs::write(&path, "t,a,b\n0,1,2\n").unwrap();
        assert!(matches!(read_snapshots(&path), Err(Error::Data { .. })));
    }
}
