//! Quasi-orthogonal space-time-frequency (QOSTF) block and trellis codes for a
//! four-transmit-antenna MIMO-OFDM link.
//!
//! The crate is organised bottom-up:
//!
//! * [`constellation`] – M-PSK alphabets, rotation rule and Gray bit mapping.
//! * [`codebook`] – the 4×4 quasi-orthogonal block, the 8×4 sum/difference
//!   codeword, the two-antenna baseline and OFDM grid placement.
//! * [`code_metrics`] – distance matrices, CGD, MPD, rank and diversity bounds.
//! * [`partitioner`] – set partitioning and the 4-state trellis.
//! * [`channel`] – quasi-static frequency-selective Rayleigh channel.
//! * [`transceiver`] – frame encoder, pairwise ML block decoder and Viterbi.
//! * [`harness`] – Monte-Carlo FER sweeps, curve comparison and CSV output.
//!
//! All numerical code is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`, which is what the simulation harness uses.

pub mod channel;
pub mod code_metrics;
pub mod codebook;
pub mod constellation;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod partitioner;
pub mod scalar;
pub mod transceiver;

pub use error::{Error, Result};
pub use scalar::Real;

/// Complex baseband sample in double precision.
pub type C64 = num_complex::Complex<f64>;
pub type CMatrix64 = linalg::CMatrix<f64>;
pub type Constellation64 = constellation::Constellation<f64>;
pub type StfCodeword64 = codebook::StfCodeword<f64>;
pub type StfGrid64 = codebook::StfGrid<f64>;
pub type CodeFamily64 = codebook::CodeFamily<f64>;
pub type ChannelRealization64 = channel::ChannelRealization<f64>;
pub type PowerDelayProfile64 = channel::PowerDelayProfile<f64>;
pub type Transceiver64 = transceiver::Transceiver<f64>;

/// Single-precision variants, mostly useful for throughput experiments.
pub type C32 = num_complex::Complex<f32>;
pub type Constellation32 = constellation::Constellation<f32>;
pub type StfCodeword32 = codebook::StfCodeword<f32>;
