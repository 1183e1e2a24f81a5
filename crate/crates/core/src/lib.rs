//! Single-shot watermarking of latent tensors by phase modulation of
//! mid-band DFT coefficients.
//!
//! The embed path is: codec encode → center crop → per-channel 2D DFT →
//! block phase modulation → Hermitian restore → inverse DFT → paste back →
//! codec decode. Detection mirrors it up to block extraction and compares the
//! recovered bits against a reference message or a codebook using exact
//! binomial thresholds.

pub mod attacks;
pub mod bench;
pub mod codec;
pub mod error;
pub mod io;
pub mod layout;
pub mod message;
pub mod modem;
pub mod pipeline;
pub mod rng;
pub mod spectrum;
pub mod stats;
pub mod tensor;

pub use error::{Error, Result};
pub use layout::{BandConfig, BandParams, BlockPlan, BlockPos};
pub use message::{bit_accuracy, Message};
pub use modem::{ModemParams, Variant};
pub use spectrum::RealizeMode;
pub use tensor::{psnr, ImageBuffer, LatentTensor};
