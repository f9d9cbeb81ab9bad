//! Asymptotic linearization of two-layer nonlinear source mixtures.
//!
//! Inputs are generated as `x = B f(A s + a)` from independent sources `s`.
//! When the input dimension is large relative to the source dimension, the
//! top principal subspace of `Cov[x]` carries the linear projection `B H s`
//! of the sources, so a linear PCA -> ICA cascade recovers them with an error
//! that shrinks like `N_s / N_f + 1 / N_s`.
//!
//! The crate is organised as
//!
//! * [`spectral`]: dense symmetric eigensolver, thin SVD, pseudo-inverse.
//! * [`generative`]: the world model, sampling and the signal/noise split.
//! * [`theory`]: closed-form error predictions and eigenpair perturbation.
//! * [`encoders`]: batch PCA whitening, Oja's subspace rule, Amari's ICA.
//! * [`metrics`]: subspace error, source alignment and BSS error.
//! * [`oracles`]: numerical probes of the supporting lemmas.
//! * [`harness`]: parameter grids, figure presets and CSV output.

extern crate blas_src;

pub mod container;
pub mod encoders;
pub mod error;
pub mod generative;
pub mod harness;
pub mod metrics;
pub mod oracles;
pub mod quadrature;
pub mod rng;
pub mod spectral;
pub mod theory;

pub use error::{AslnError, Result};
pub use generative::{
    BasisMoments, GenerativeProcess, GroundTruth, Nonlinearity, SampleBatch, SourceDistribution,
};
pub use spectral::{Matrix, SpectralDecomposition, SvdDecomposition, Vector};
