//! Spectral methods for multichannel blind deconvolution.
//!
//! A common source `x ∈ ℂ^L` is observed through `M` short channels
//! (impulse responses of length `K`) with additive noise,
//! `y_m = h_m ⊛ x + w_m`, where `⊛` is circular convolution. The channels
//! are recovered (up to a global complex scale) as the smallest eigenvector
//! of a cross-correlation matrix built from the outputs alone.
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`sigops`] | signals, FFT circular convolution, restriction operators |
//! | [`xcorr`] | the cross-correlation matrix `YᴴY`: explicit, block-fast, matrix-free |
//! | [`spectral`] | Hermitian eigensolvers, spectral gaps, sin-θ checks |
//! | [`models`] | seeded generators for bases, channels, sources and noise |
//! | [`solvers`] | cross-convolution, subspace-constrained, oracle LS, linearized LS |
//! | [`metrics`] | sin-angle, SNR, flatness and correlation norms |
//! | [`harness`] | Monte Carlo sweeps and phase grids with percentile aggregation |
//! | [`check`] | named invariant suites used by `blindchan check` |
//!
//! ```
//! use blindchan::models::{SeededRng, gen_gaussian_subspace, gen_channels_in_subspace, gen_source, NormProfile, SourceKind};
//! use blindchan::{sigops, solvers, metrics};
//!
//! let seeds = SeededRng::new(7);
//! let model = gen_gaussian_subspace(16, 4, 3, &mut seeds.stream("basis", 0)).unwrap();
//! let (_u, channels) = gen_channels_in_subspace(&model, &mut seeds.stream("channels", 0), NormProfile::Flat);
//! let x = gen_source(SourceKind::Gaussian, 64, 1.0, &mut seeds.stream("source", 0)).unwrap();
//! let ys: Vec<_> = channels
//!     .filters()
//!     .iter()
//!     .map(|h| sigops::apply_t(&x, h).unwrap())
//!     .collect();
//! let est = solvers::sccc_solve(&ys, &model, 0.0, 16).unwrap();
//! assert!(metrics::sin_angle(&est.h_hat, &channels.stacked()).unwrap() < 1e-8);
//! ```

// Negated comparisons deliberately reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod check;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod par;
pub mod sigops;
pub mod solvers;
pub mod spectral;
pub mod xcorr;

pub use error::{Error, Result};

/// Double-precision complex scalar used throughout.
pub type C64 = num_complex::Complex64;
/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;
/// Dense complex column vector.
pub type CVector = nalgebra::DVector<C64>;
