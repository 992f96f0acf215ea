//! Sparse identification of the vehicle dynamics.
//!
//! Derivatives are estimated from logged velocities and body rates, each
//! block is regressed onto a physics-informed candidate library with
//! sequential thresholded least squares, and the resulting coefficients are
//! assembled into a [`SparseModel`] with closed-form Jacobians.

mod derivative;
pub mod library;
mod model;
mod stls;
mod validate;

pub use derivative::{align_held_inputs, differentiate, estimate_derivatives};
pub use library::{build_library, Channel, Library, LibrarySpec, Term};
pub use model::{
    assemble_model, fit_model, fit_rotational, fit_translational, BlockFit, CoefficientBlock,
    FitMetadata, InputJacobian, RotorSpeedMap, SindyConfig, SparseModel, StateJacobian,
    ROTATIONAL_OUTPUTS, TRANSLATIONAL_OUTPUTS,
};
pub use stls::{stls, StlsFit, StlsOptions};
pub use validate::{one_step_validate, ChannelError, ValidationReport, VALIDATION_CHANNELS};
