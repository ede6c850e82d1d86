//! Pseudo-spectral paracontrolled calculus on the two-dimensional torus.

pub mod anderson;
pub mod besov;
pub mod config;
pub mod error;
mod fft;
pub mod field;
pub mod io;
pub mod noise;
pub mod paracalc;
pub mod regularity;
pub mod variational;

pub use anderson::{Anderson, GammaConfig, ParacontrolledTriple, RemainderForm};
pub use besov::{BesovIndex, BlockStack, DecayFit, DyadicPartition};
pub use error::{PcfError, Result};
pub use field::{Axis, GridSpec, Lp, RealField, SpectralField};
pub use paracalc::LocalizationParams;
pub use noise::NoiseEnhancement;
