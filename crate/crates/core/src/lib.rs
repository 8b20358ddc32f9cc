//! Physical-layer simulation of DFT-s-OFDM with chirp modulation and its
//! baselines (DFT-s-OFDM, chirped DFT-s-OFDM, OFDM, AFDM, AFDM-CM) over a
//! delay-Doppler channel with joint ML detection, together with analytical
//! tools: PAPR, spectral efficiency, pairwise-error BER bound, diversity order
//! and the chirp-order search.

pub mod analysis;
pub mod channel;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod receiver;
pub mod waveform;

pub use error::{Error, Result};
