//! Physics-informed neural network (PINN) toolkit for phase-field equations.
//!
//! The crate trains feed-forward tanh networks to satisfy Allen-Cahn and
//! Cahn-Hilliard dynamics on periodic domains, implements the adaptive
//! training strategies (loss weighting, mini-batching, residual-ranked
//! resampling, time-marching windows, chained per-interval networks), and
//! ships an independent Fourier-spectral solver used as the accuracy oracle.

pub mod autodiff;
pub mod cli;
pub mod config;
pub mod error;
pub mod fft;
pub mod loss;
pub mod metrics;
pub mod network;
pub mod optimize;
pub mod pde;
pub mod reference;
pub mod sampling;
pub mod trainer;

pub use error::{Error, Result};
