//! Identified continuous-time model and its analytic linearization.
//!
//! The state derivative combines known kinematics (position rate is velocity,
//! Euler rates from body rates) with the two identified blocks:
//! `[ẍ ÿ z̈] = ψ_tr(x, u)ᵀ Σ_tr` and `[ṗ q̇ ṙ] = ψ_ro(x, u)ᵀ Σ_ro`.

use std::path::Path;

use nalgebra::{DMatrix, Matrix3, SMatrix, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    euler_rate_matrix, inverse_mixer_matrix, rotation_body_to_inertial, InputVector, StateVector,
    VehicleParams, Wrench, SINGULARITY_MARGIN,
};
use crate::error::{Error, Result};
use crate::sim::{Dynamics, SnapshotSet};

use super::derivative::{align_held_inputs, estimate_derivatives};
use super::library::{build_library, Channel, LibrarySpec, Term};
use super::stls::{stls, StlsOptions};

pub const TRANSLATIONAL_OUTPUTS: [&str; 3] = ["xddot", "yddot", "zddot"];
pub const ROTATIONAL_OUTPUTS: [&str; 3] = ["pdot", "qdot", "rdot"];

pub type StateJacobian = SMatrix<f64, 12, 12>;
pub type InputJacobian = SMatrix<f64, 12, 4>;

/// Geometry needed to synthesize the summed rotor speed Ω_r from a wrench.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotorSpeedMap {
    pub arm_x: f64,
    pub arm_y: f64,
    pub torque_coefficient: f64,
    pub rotor_thrust_coefficient: f64,
}

impl RotorSpeedMap {
    pub fn from_params(params: &VehicleParams) -> Self {
        Self {
            arm_x: params.arm_x,
            arm_y: params.arm_y,
            torque_coefficient: params.torque_coefficient,
            rotor_thrust_coefficient: params.rotor_thrust_coefficient,
        }
    }

    fn allocation(&self) -> nalgebra::Matrix4<f64> {
        inverse_mixer_matrix(&VehicleParams {
            arm_x: self.arm_x,
            arm_y: self.arm_y,
            torque_coefficient: self.torque_coefficient,
            ..VehicleParams::default()
        })
    }

    /// Ω_r and its gradient with respect to the wrench.
    pub fn evaluate(&self, u: &InputVector) -> (f64, Vector4<f64>) {
        let alloc = self.allocation();
        let thrusts = alloc * u;
        let k = self.rotor_thrust_coefficient;
        let mut omega = 0.0;
        let mut grad = Vector4::zeros();
        for i in 0..4 {
            let t = thrusts[i];
            if t > 0.0 {
                let s = (t / k).sqrt();
                omega += s;
                grad += alloc.row(i).transpose() * (0.5 / (k * s));
            }
        }
        (omega, grad)
    }

    /// Summed rotor speed alone, without its gradient.
    pub fn speed(&self, u: &InputVector) -> f64 {
        let k = self.rotor_thrust_coefficient;
        (self.allocation() * u).iter().filter(|&&t| t > 0.0).map(|t| (t / k).sqrt()).sum()
    }
}

/// Coefficients for one block of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientBlock {
    pub library: LibrarySpec,
    /// k×3, row order matches `library.terms`.
    pub coefficients: DMatrix<f64>,
}

impl CoefficientBlock {
    pub fn zeros(library: LibrarySpec) -> Self {
        let k = library.len();
        Self {
            library,
            coefficients: DMatrix::zeros(k, 3),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.library.validate()?;
        if self.coefficients.nrows() != self.library.len() || self.coefficients.ncols() != 3 {
            return Err(Error::ShapeMismatch(format!(
                "{} library terms but {}×{} coefficients",
                self.library.len(),
                self.coefficients.nrows(),
                self.coefficients.ncols()
            )));
        }
        if self.coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("non-finite model coefficient".into()));
        }
        Ok(())
    }

    /// Coefficient of `term` in output column `output`, 0 if the term is absent.
    pub fn get(&self, term: &str, output: usize) -> f64 {
        self.library
            .index_of(term)
            .map_or(0.0, |j| self.coefficients[(j, output)])
    }

    fn set(&mut self, term: &str, output: usize, value: f64) {
        let j = self
            .library
            .index_of(term)
            .unwrap_or_else(|| panic!("term `{term}` missing from library"));
        self.coefficients[(j, output)] = value;
    }

    /// Block output and its gradient with respect to the 13 channels.
    fn value(&self, channels: &[f64; 13]) -> Vector3<f64> {
        let mut out = Vector3::zeros();
        for (j, term) in self.library.terms.iter().enumerate() {
            let row = self.coefficients.row(j);
            if row.iter().any(|&c| c != 0.0) {
                out += row.transpose() * term.evaluate(channels);
            }
        }
        out
    }

    fn evaluate(&self, channels: &[f64; 13]) -> (Vector3<f64>, SMatrix<f64, 3, 13>) {
        let mut out = Vector3::zeros();
        let mut grad = SMatrix::<f64, 3, 13>::zeros();
        for (j, term) in self.library.terms.iter().enumerate() {
            let row = self.coefficients.row(j);
            if row.iter().all(|&c| c == 0.0) {
                continue;
            }
            let value = term.evaluate(channels);
            let g = term.gradient(channels);
            for o in 0..3 {
                out[o] += row[o] * value;
                for (c, gc) in g.iter().enumerate() {
                    grad[(o, c)] += row[o] * gc;
                }
            }
        }
        (out, grad)
    }
}

/// How a model was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitMetadata {
    pub threshold: f64,
    pub max_iters: usize,
    pub rows: usize,
    pub iterations_translational: Vec<usize>,
    pub iterations_rotational: Vec<usize>,
    pub residual_norms_translational: Vec<f64>,
    pub residual_norms_rotational: Vec<f64>,
}

/// Options for [`fit_model`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SindyConfig {
    pub threshold: f64,
    pub max_iters: usize,
    pub poly_degree_tr: u32,
    pub poly_degree_ro: u32,
    /// Average held inputs over each differencing window before regression.
    pub align_inputs: bool,
}

impl Default for SindyConfig {
    fn default() -> Self {
        let stls = StlsOptions::default();
        Self {
            threshold: stls.threshold,
            max_iters: stls.max_iters,
            poly_degree_tr: 2,
            poly_degree_ro: 2,
            align_inputs: true,
        }
    }
}

impl SindyConfig {
    pub fn stls_options(&self) -> StlsOptions {
        StlsOptions {
            threshold: self.threshold,
            max_iters: self.max_iters,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.stls_options().validate()?;
        if self.poly_degree_tr == 0 || self.poly_degree_ro == 0 {
            return Err(Error::InvalidParameter("sindy: polynomial degrees must be >= 1".into()));
        }
        Ok(())
    }
}

/// Result of fitting one block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockFit {
    pub block: CoefficientBlock,
    pub iterations: Vec<usize>,
    pub residual_norms: Vec<f64>,
}

fn fit_block(
    set: &SnapshotSet,
    library: LibrarySpec,
    targets: Option<&DMatrix<f64>>,
    outputs: &[&str; 3],
    opts: &StlsOptions,
) -> Result<BlockFit> {
    let targets = targets.ok_or_else(|| {
        Error::ShapeMismatch("snapshot set has no derivative estimates".into())
    })?;
    let psi = build_library(set, &library)?;
    let fit = stls(&psi, targets, outputs, opts)?;
    Ok(BlockFit {
        block: CoefficientBlock {
            library,
            coefficients: fit.coefficients,
        },
        iterations: fit.iterations,
        residual_norms: fit.residual_norms,
    })
}

/// Fits Σ_tr against the estimated inertial accelerations.
pub fn fit_translational(set: &SnapshotSet, poly_degree: u32, opts: &StlsOptions) -> Result<BlockFit> {
    let lib = LibrarySpec::translational(poly_degree);
    fit_block(set, lib, set.velocity_dot.as_ref(), &TRANSLATIONAL_OUTPUTS, opts)
}

/// Fits Σ_ro against the estimated body angular accelerations.
pub fn fit_rotational(set: &SnapshotSet, poly_degree: u32, opts: &StlsOptions) -> Result<BlockFit> {
    let lib = LibrarySpec::rotational(poly_degree);
    fit_block(set, lib, set.rates_dot.as_ref(), &ROTATIONAL_OUTPUTS, opts)
}

/// Estimates derivatives if needed, fits both blocks and assembles the model.
pub fn fit_model(set: &SnapshotSet, config: &SindyConfig, rotor: RotorSpeedMap) -> Result<SparseModel> {
    config.validate()?;
    let mut set = if set.velocity_dot.is_some() && set.rates_dot.is_some() {
        set.clone()
    } else {
        estimate_derivatives(set)?
    };
    if config.align_inputs {
        set = align_held_inputs(&set)?;
    }
    let opts = config.stls_options();
    let tr = fit_translational(&set, config.poly_degree_tr, &opts)?;
    let ro = fit_rotational(&set, config.poly_degree_ro, &opts)?;
    let mut model = assemble_model(tr.block, ro.block, rotor)?;
    model.metadata = Some(FitMetadata {
        threshold: config.threshold,
        max_iters: config.max_iters,
        rows: set.len(),
        iterations_translational: tr.iterations,
        iterations_rotational: ro.iterations,
        residual_norms_translational: tr.residual_norms,
        residual_norms_rotational: ro.residual_norms,
    });
    Ok(model)
}

/// Combines two coefficient blocks with the known kinematics.
pub fn assemble_model(
    translational: CoefficientBlock,
    rotational: CoefficientBlock,
    rotor: RotorSpeedMap,
) -> Result<SparseModel> {
    translational.validate()?;
    rotational.validate()?;
    Ok(SparseModel {
        translational,
        rotational,
        rotor,
        singularity_margin: SINGULARITY_MARGIN,
        metadata: None,
    })
}

/// Continuous-time model `ẋ = f̂(x, u)` with identified translational and
/// rotational blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseModel {
    pub translational: CoefficientBlock,
    pub rotational: CoefficientBlock,
    pub rotor: RotorSpeedMap,
    pub singularity_margin: f64,
    pub metadata: Option<FitMetadata>,
}

/// Derivative of `R(φ,θ,ψ)·e₃` with respect to each Euler angle (columns).
fn thrust_axis_jacobian(euler: &Vector3<f64>) -> Matrix3<f64> {
    let (sf, cf) = euler.x.sin_cos();
    let (st, ct) = euler.y.sin_cos();
    let (sp, cp) = euler.z.sin_cos();
    Matrix3::new(
        -sf * st * cp + cf * sp, cf * ct * cp, -cf * st * sp + sf * cp,
        -sf * st * sp - cf * cp, cf * ct * sp, cf * st * cp + sf * sp,
        -sf * ct, -cf * st, 0.0,
    )
}

impl SparseModel {
    /// Coefficients implied exactly by the plant's equations of motion.
    pub fn from_physics(params: &VehicleParams) -> Result<Self> {
        params.validate()?;
        let mass = params.total_mass();
        let inertia = params.total_inertia();
        Self::rigid_body(
            mass,
            inertia,
            Vector3::from(params.drag_force),
            Vector3::from(params.drag_moment),
            params,
        )
    }

    /// Textbook model a designer would write without identification: bare
    /// vehicle mass and inertia, no drag, gyroscopic rotor terms kept.
    pub fn nominal(params: &VehicleParams) -> Result<Self> {
        params.validate()?;
        Self::rigid_body(
            params.mass_vehicle,
            Vector3::from(params.inertia_vehicle),
            Vector3::zeros(),
            Vector3::zeros(),
            params,
        )
    }

    fn rigid_body(
        mass: f64,
        inertia: Vector3<f64>,
        drag_force: Vector3<f64>,
        drag_moment: Vector3<f64>,
        params: &VehicleParams,
    ) -> Result<Self> {
        let mut tr = CoefficientBlock::zeros(LibrarySpec::translational(2));
        let inputs = ["u_tr1", "u_tr2", "u_tr3"];
        let velocity = ["xdot", "ydot", "zdot"];
        for o in 0..3 {
            tr.set(inputs[o], o, 1.0 / mass);
            tr.set(velocity[o], o, -drag_force[o] / mass);
        }
        tr.set("1", 2, params.gravity);

        let (ix, iy, iz) = (inertia.x, inertia.y, inertia.z);
        let mut ro = CoefficientBlock::zeros(LibrarySpec::rotational(2));
        let moments = ["L", "M", "N"];
        let rates = ["p", "q", "r"];
        for o in 0..3 {
            ro.set(moments[o], o, 1.0 / inertia[o]);
            ro.set(rates[o], o, -drag_moment[o] / inertia[o]);
        }
        ro.set("q*r", 0, (iy - iz) / ix);
        ro.set("p*r", 1, (iz - ix) / iy);
        ro.set("p*q", 2, (ix - iy) / iz);
        ro.set("q*Omega_r", 0, -params.rotor_inertia / ix);
        ro.set("p*Omega_r", 1, -params.rotor_inertia / iy);

        let mut model = assemble_model(tr, ro, RotorSpeedMap::from_params(params))?;
        model.singularity_margin = params.singularity_margin;
        Ok(model)
    }

    fn channel_values(&self, x: &StateVector, u: &InputVector) -> [f64; 13] {
        let euler = Vector3::new(x[6], x[7], x[8]);
        let axis = rotation_body_to_inertial(&euler).column(2).into_owned();
        let mut ch = [0.0; 13];
        for i in 0..3 {
            ch[Channel::ThrustX.index() + i] = axis[i] * u[0];
            ch[Channel::Xdot.index() + i] = x[3 + i];
            ch[Channel::P.index() + i] = x[9 + i];
            ch[Channel::L.index() + i] = u[1 + i];
        }
        ch[Channel::RotorSpeed.index()] = self.rotor.speed(u);
        ch
    }

    /// Library channel values at `(x, u)` and their Jacobians.
    fn channels(&self, x: &StateVector, u: &InputVector) -> ([f64; 13], SMatrix<f64, 13, 12>, SMatrix<f64, 13, 4>) {
        let euler = Vector3::new(x[6], x[7], x[8]);
        let axis = rotation_body_to_inertial(&euler).column(2).into_owned();
        let axis_jac = thrust_axis_jacobian(&euler);
        let (omega, omega_grad) = self.rotor.evaluate(u);

        let mut ch = [0.0; 13];
        let mut dx = SMatrix::<f64, 13, 12>::zeros();
        let mut du = SMatrix::<f64, 13, 4>::zeros();
        for i in 0..3 {
            ch[Channel::ThrustX.index() + i] = axis[i] * u[0];
            du[(Channel::ThrustX.index() + i, 0)] = axis[i];
            for a in 0..3 {
                dx[(Channel::ThrustX.index() + i, 6 + a)] = axis_jac[(i, a)] * u[0];
            }
            ch[Channel::Xdot.index() + i] = x[3 + i];
            dx[(Channel::Xdot.index() + i, 3 + i)] = 1.0;
            ch[Channel::P.index() + i] = x[9 + i];
            dx[(Channel::P.index() + i, 9 + i)] = 1.0;
            ch[Channel::L.index() + i] = u[1 + i];
            du[(Channel::L.index() + i, 1 + i)] = 1.0;
        }
        ch[Channel::RotorSpeed.index()] = omega;
        du.row_mut(Channel::RotorSpeed.index())
            .copy_from(&omega_grad.transpose());
        (ch, dx, du)
    }

    /// `f̂(x, u)` together with `∂f̂/∂x` and `∂f̂/∂u`.
    pub fn derivative_with_jacobians(
        &self,
        x: &StateVector,
        u: &InputVector,
    ) -> Result<(StateVector, StateJacobian, InputJacobian)> {
        let euler = Vector3::new(x[6], x[7], x[8]);
        let rates = Vector3::new(x[9], x[10], x[11]);
        let r_omega = euler_rate_matrix(&euler, self.singularity_margin)?;
        let (ch, ch_dx, ch_du) = self.channels(x, u);
        let (accel, accel_grad) = self.translational.evaluate(&ch);
        let (rate_dot, rate_grad) = self.rotational.evaluate(&ch);

        let mut f = StateVector::zeros();
        f.fixed_rows_mut::<3>(0).copy_from(&x.fixed_rows::<3>(3));
        f.fixed_rows_mut::<3>(3).copy_from(&accel);
        f.fixed_rows_mut::<3>(6).copy_from(&(r_omega * rates));
        f.fixed_rows_mut::<3>(9).copy_from(&rate_dot);

        let mut a = StateJacobian::zeros();
        let mut b = InputJacobian::zeros();
        a.fixed_view_mut::<3, 3>(0, 3).fill_with_identity();
        a.fixed_view_mut::<3, 12>(3, 0).copy_from(&(accel_grad * ch_dx));
        b.fixed_view_mut::<3, 4>(3, 0).copy_from(&(accel_grad * ch_du));
        a.fixed_view_mut::<3, 12>(9, 0).copy_from(&(rate_grad * ch_dx));
        b.fixed_view_mut::<3, 4>(9, 0).copy_from(&(rate_grad * ch_du));

        let (sf, cf) = euler.x.sin_cos();
        let (st, ct) = euler.y.sin_cos();
        let tt = st / ct;
        let sec2 = 1.0 / (ct * ct);
        let d_phi = Matrix3::new(
            0.0, cf * tt, -sf * tt,
            0.0, -sf, -cf,
            0.0, cf / ct, -sf / ct,
        );
        let d_theta = Matrix3::new(
            0.0, sf * sec2, cf * sec2,
            0.0, 0.0, 0.0,
            0.0, sf * tt / ct, cf * tt / ct,
        );
        a.fixed_view_mut::<3, 1>(6, 6).copy_from(&(d_phi * rates));
        a.fixed_view_mut::<3, 1>(6, 7).copy_from(&(d_theta * rates));
        a.fixed_view_mut::<3, 3>(6, 9).copy_from(&r_omega);
        Ok((f, a, b))
    }

    /// `f̂(x, u)` alone; cheaper than [`Self::derivative_with_jacobians`].
    pub fn evaluate(&self, x: &StateVector, u: &InputVector) -> Result<StateVector> {
        let euler = Vector3::new(x[6], x[7], x[8]);
        let rates = Vector3::new(x[9], x[10], x[11]);
        let r_omega = euler_rate_matrix(&euler, self.singularity_margin)?;
        let ch = self.channel_values(x, u);
        let mut f = StateVector::zeros();
        f.fixed_rows_mut::<3>(0).copy_from(&x.fixed_rows::<3>(3));
        f.fixed_rows_mut::<3>(3).copy_from(&self.translational.value(&ch));
        f.fixed_rows_mut::<3>(6).copy_from(&(r_omega * rates));
        f.fixed_rows_mut::<3>(9).copy_from(&self.rotational.value(&ch));
        Ok(f)
    }

    /// Wrench holding the model level and motionless, by Gauss–Newton on
    /// the translational and rotational accelerations.
    pub fn hover_wrench(&self) -> Result<Wrench> {
        let x = StateVector::zeros();
        let g = self.translational.get("1", 2);
        let gain = self.translational.get("u_tr3", 2);
        let fz0 = if gain.abs() > 1e-9 { -g / gain } else { -10.0 };
        let mut u = Vector4::new(fz0, 0.0, 0.0, 0.0);
        for _ in 0..50 {
            let (f, _, b) = self.derivative_with_jacobians(&x, &u)?;
            let r = nalgebra::Vector6::new(f[3], f[4], f[5], f[9], f[10], f[11]);
            let mut j = SMatrix::<f64, 6, 4>::zeros();
            j.fixed_view_mut::<3, 4>(0, 0).copy_from(&b.fixed_view::<3, 4>(3, 0));
            j.fixed_view_mut::<3, 4>(3, 0).copy_from(&b.fixed_view::<3, 4>(9, 0));
            let Some(step) = (j.transpose() * j).try_inverse().map(|m| m * j.transpose() * r) else {
                return Err(Error::RankDeficient {
                    output: "hover".into(),
                    terms: vec!["u_tr3".into(), "L".into(), "M".into(), "N".into()],
                });
            };
            u -= step;
            if step.norm() < 1e-12 * (1.0 + u.norm()) {
                break;
            }
        }
        Ok(Wrench::from_vector(&u))
    }

    /// Number of nonzero coefficients in both blocks.
    pub fn nonzero_count(&self) -> usize {
        self.translational
            .coefficients
            .iter()
            .chain(self.rotational.coefficients.iter())
            .filter(|&&c| c != 0.0)
            .count()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(&ModelFile::from(self))
            .map_err(|e| Error::Data { path: path.into(), message: e.to_string() })?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Data { message, .. } => Error::Data { path: path.into(), message },
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(&ModelFile::from(self)).expect("model file serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: ModelFile = toml::from_str(text).map_err(|e| Error::Data {
            path: "<model>".into(),
            message: e.to_string(),
        })?;
        file.into_model()
    }
}

impl Dynamics for SparseModel {
    fn derivative(&self, x: &StateVector, u: &InputVector) -> Result<StateVector> {
        self.evaluate(x, u)
    }
}

const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    schema_version: u32,
    singularity_margin: f64,
    rotor: RotorSpeedMap,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit: Option<FitMetadata>,
    translational: BlockFile,
    rotational: BlockFile,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockFile {
    poly_degree: u32,
    outputs: Vec<String>,
    terms: Vec<TermRow>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermRow {
    term: Term,
    coefficients: [f64; 3],
}

impl BlockFile {
    fn new(block: &CoefficientBlock, outputs: &[&str; 3]) -> Self {
        Self {
            poly_degree: block.library.poly_degree,
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
            terms: block
                .library
                .terms
                .iter()
                .enumerate()
                .map(|(j, term)| TermRow {
                    term: term.clone(),
                    coefficients: [
                        block.coefficients[(j, 0)],
                        block.coefficients[(j, 1)],
                        block.coefficients[(j, 2)],
                    ],
                })
                .collect(),
        }
    }

    fn into_block(self, outputs: &[&str; 3]) -> Result<CoefficientBlock> {
        if self.outputs != outputs {
            return Err(Error::Data {
                path: "<model>".into(),
                message: format!("expected outputs {outputs:?}, found {:?}", self.outputs),
            });
        }
        let coefficients = DMatrix::from_fn(self.terms.len(), 3, |j, o| self.terms[j].coefficients[o]);
        let library = LibrarySpec::new(self.terms.into_iter().map(|r| r.term).collect(), self.poly_degree)?;
        let block = CoefficientBlock { library, coefficients };
        block.validate()?;
        Ok(block)
    }
}

impl From<&SparseModel> for ModelFile {
    fn from(model: &SparseModel) -> Self {
        Self {
            schema_version: MODEL_SCHEMA_VERSION,
            singularity_margin: model.singularity_margin,
            rotor: model.rotor,
            fit: model.metadata.clone(),
            translational: BlockFile::new(&model.translational, &TRANSLATIONAL_OUTPUTS),
            rotational: BlockFile::new(&model.rotational, &ROTATIONAL_OUTPUTS),
        }
    }
}

impl ModelFile {
    fn into_model(self) -> Result<SparseModel> {
        if self.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Data {
                path: "<model>".into(),
                message: format!("unsupported model schema_version {}", self.schema_version),
            });
        }
        let mut model = assemble_model(
            self.translational.into_block(&TRANSLATIONAL_OUTPUTS)?,
            self.rotational.into_block(&ROTATIONAL_OUTPUTS)?,
            self.rotor,
        )?;
        model.singularity_margin = self.singularity_margin;
        model.metadata = self.fit;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{state_derivative, RigidBodyState};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_point(rng: &mut ChaCha8Rng) -> (StateVector, InputVector) {
        let mut x = StateVector::zeros();
        for i in 0..3 {
            x[i] = rng.random_range(-10.0..10.0);
            x[3 + i] = rng.random_range(-3.0..3.0);
            x[9 + i] = rng.random_range(-2.0..2.0);
        }
        x[6] = rng.random_range(-0.6..0.6);
        x[7] = rng.random_range(-0.6..0.6);
        x[8] = rng.random_range(-3.0..3.0);
        let u = Vector4::new(
            rng.random_range(-20.0..-8.0),
            rng.random_range(-0.3..0.3),
            rng.random_range(-0.3..0.3),
            rng.random_range(-0.05..0.05),
        );
        (x, u)
    }

    #[test]
    fn physics_coefficients_match_reference_tables() {
        let m = SparseModel::from_physics(&VehicleParams::default()).unwrap();
        let tr = &m.translational;
        assert!((tr.get("u_tr1", 0) - 0.7692).abs() < 1e-4);
        assert!((tr.get("xdot", 0) + 0.7692).abs() < 1e-4);
        assert_eq!(tr.get("1", 2), 9.807);
        let ro = &m.rotational;
        assert!((ro.get("L", 0) - 32.258).abs() < 1e-3);
        assert!((ro.get("M", 1) - 26.316).abs() < 1e-3);
        assert!((ro.get("N", 2) - 15.873).abs() < 1e-3);
        assert!((ro.get("q*r", 0) + 0.8065).abs() < 1e-4);
        assert!((ro.get("p*r", 1) - 0.8421).abs() < 1e-4);
        assert!((ro.get("p*q", 2) + 0.1111).abs() < 1e-4);
    }

    #[test]
    fn exact_model_matches_plant_everywhere() {
        let params = VehicleParams::default();
        let model = SparseModel::from_physics(&params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let (x, u) = random_point(&mut rng);
            let truth = state_derivative(&RigidBodyState::from_vector(&x), &Wrench::from_vector(&u), &params).unwrap();
            worst = worst.max((model.evaluate(&x, &u).unwrap() - truth).amax());
        }
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn exact_model_hovers() {
        let params = VehicleParams::default();
        let model = SparseModel::from_physics(&params).unwrap();
        let hover = model.hover_wrench().unwrap();
        assert!((hover.fz + params.total_mass() * params.gravity).abs() < 1e-9);
        let f = model.evaluate(&StateVector::zeros(), &hover.to_vector()).unwrap();
        assert!(f.amax() < 1e-12);
    }

    #[test]
    fn nominal_model_uses_bare_vehicle() {
        let params = VehicleParams::default();
        let model = SparseModel::nominal(&params).unwrap();
        assert!((model.translational.get("u_tr3", 2) - 1.0 / params.mass_vehicle).abs() < 1e-12);
        assert_eq!(model.translational.get("zdot", 2), 0.0);
        assert!(model.rotational.get("q*Omega_r", 0) < 0.0);
        let hover = model.hover_wrench().unwrap();
        assert!((hover.fz + params.mass_vehicle * params.gravity).abs() < 1e-9);
    }

    #[test]
    fn analytic_jacobians_match_finite_differences() {
        let model = SparseModel::from_physics(&VehicleParams::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let (x, u) = random_point(&mut rng);
            let (_, a, b) = model.derivative_with_jacobians(&x, &u).unwrap();
            for k in 0..16 {
                let h = 1e-6;
                let (fp, fm) = if k < 12 {
                    let mut xp = x;
                    let mut xm = x;
                    xp[k] += h;
                    xm[k] -= h;
                    (model.evaluate(&xp, &u).unwrap(), model.evaluate(&xm, &u).unwrap())
                } else {
                    let mut up = u;
                    let mut um = u;
                    up[k - 12] += h;
                    um[k - 12] -= h;
                    (model.evaluate(&x, &up).unwrap(), model.evaluate(&x, &um).unwrap())
                };
                let fd = (fp - fm) / (2.0 * h);
                let an = if k < 12 { a.column(k).into_owned() } else { b.column(k - 12).into_owned() };
                let err = (fd - an).amax() / an.amax().max(1.0);
                assert!(err < 1e-6, "column {k}: {err}");
            }
        }
    }

    #[test]
    fn value_path_agrees_with_jacobian_path() {
        let mut model = SparseModel::from_physics(&VehicleParams::default()).unwrap();
        model.translational.set("xdot*zdot", 1, 0.3);
        model.rotational.set("r^2", 0, -0.7);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let (x, u) = random_point(&mut rng);
            let fast = model.evaluate(&x, &u).unwrap();
            let (full, _, _) = model.derivative_with_jacobians(&x, &u).unwrap();
            assert!((fast - full).amax() <= 1e-12 * full.amax().max(1.0));
        }
    }

    #[test]
    fn model_file_round_trips_bit_exactly() {
        let mut model = SparseModel::from_physics(&VehicleParams::default()).unwrap();
        model.rotational.coefficients[(3, 2)] = 0.1 + 0.2;
        model.metadata = Some(FitMetadata {
            threshold: 0.005,
            max_iters: 10,
            rows: 5,
            iterations_translational: vec![2, 2, 3],
            iterations_rotational: vec![1, 2, 2],
            residual_norms_translational: vec![1e-3, 2e-3, 3e-3],
            residual_norms_rotational: vec![1e-5, 2e-5, std::f64::consts::PI],
        });
        let text = model.to_toml();
        assert!(text.contains("term = \"p*Omega_r\""));
        let back = SparseModel::from_toml(&text).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn model_file_rejects_unknown_terms() {
        let text = SparseModel::from_physics(&VehicleParams::default())
            .unwrap()
            .to_toml()
            .replace("\"p*Omega_r\"", "\"p*w\"");
        assert!(SparseModel::from_toml(&text).is_err());
    }

    #[test]
    fn singular_pitch_is_rejected() {
        let model = SparseModel::from_physics(&VehicleParams::default()).unwrap();
        let mut x = StateVector::zeros();
        x[7] = std::f64::consts::FRAC_PI_2;
        assert!(matches!(model.evaluate(&x, &InputVector::zeros()), Err(Error::SingularAttitude { .. })));
    }
}
