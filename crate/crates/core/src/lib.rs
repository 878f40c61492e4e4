//! Expected signatures of the damped momentum process
//! `dP = -(M/m) P dt + dW` and their small-mass limit.
//!
//! The tensor algebra and the scalar closed forms are generic over the
//! floating point type; the matrix, process and Monte Carlo layers work in
//! `f64`.

pub mod closed_forms;
pub mod error;
pub mod limit;
pub mod matrix;
pub mod mc;
pub mod ou;
pub mod pde;
pub mod quadrature;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Real;

pub use closed_forms::{
    esig_1d, esig_1d_limit, exp_chain, frak_a_finite, frak_a_finite_with, frak_a_limit, phi1,
    phi2, ExpChainCoefficients, FrakA, FrakMethod, Regime,
};
pub use limit::{
    convergence_sweep, esig_good_part, esig_limit, ConvergenceReport, EsigResult, SweepStatus,
};
pub use matrix::{
    area_limit, averaged_sigma, expm, sigma_tilde, spectral_profile, stationary_c, xi,
    SpectralProfile, SquareMatrix,
};
pub use mc::{
    expected_signature_mc, expected_signature_mc_with, path_signature, simulate_path, Dynamics,
    McEstimate, PathSample,
};
pub use ou::{
    exact_step, gaussian_tensor_moment, law_at, ExactStepper, GaussianLaw, GaussianSource,
    ModelParams, PathStream, ZeroNoise,
};
pub use pde::{
    initial_condition_defect, pde_residual, pde_residual_with_step, EsigProvider, ExactLowLevels,
    OneDimClosedForm, PdeResidual, Probe,
};
pub use tensor::{
    apply_operator, linfty_norm, series_product, sym, tensor_exp, tensor_product,
    MatrixTensorOperator, Tensor, TruncatedTensorSeries,
};

/// Double precision tensor.
pub type Tensor64 = Tensor<f64>;
/// Single precision tensor.
pub type Tensor32 = Tensor<f32>;
/// Double precision truncated series.
pub type Series64 = TruncatedTensorSeries<f64>;
/// Single precision truncated series.
pub type Series32 = TruncatedTensorSeries<f32>;
/// Complex double precision tensor, used by the eigenbasis evaluators.
pub type ComplexTensor64 = Tensor<num_complex::Complex64>;
