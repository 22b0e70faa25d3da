pub mod brownian;
mod eigen;
pub mod error;
pub mod harness;
pub mod integrator;
pub mod matrix;
pub mod scalar;
pub mod model;
mod quadrature;
pub mod spectral;
pub mod cli;

pub use brownian::{coarsen, sample_increment, sample_path, Coarsener, IncrementSequence, IncrementStream};
pub use error::{Error, Result};
pub use harness::{fit_order, strong_error_study, weak_error_study, Ensemble, ErrorKind, ErrorRow, ErrorTable};
pub use integrator::{femm_step, integrate, terminal_state, Step, Trajectory};
pub use matrix::{
    abs_trace, cauchy_transform, matrix_function, normalized_trace, symmetric_eig, DenseMatrix, HermitianMatrix,
    SpectralDecomposition,
};
pub use model::{
    apply_diffusion, cir_model, gbm1_model, ou_model, Diffusion, DiffusionTerm, Drift, Factor, FsdeModel, PsdPolicy,
    ReferenceStats,
};
pub use scalar::{Real, Scalar};
pub use spectral::{
    semicircle_cauchy_transform, semicircle_density, stieltjes_invert, summarize, transform_distance, DensityCurve,
    SpectralSummary,
};

/// Double precision matrices, the default for simulation.
pub type Matrix = HermitianMatrix<f64>;
/// Single precision matrices.
pub type Matrix32 = HermitianMatrix<f32>;
/// Exact rational matrices, for checking coarsening identities.
pub type ExactMatrix = HermitianMatrix<num_rational::BigRational>;
pub type Model = FsdeModel<f64>;
pub type Increments = IncrementSequence<f64>;
pub type ExactIncrements = IncrementSequence<num_rational::BigRational>;
