//! Edge-guided two-stage image inpainting.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`]: a small dense NCHW tensor engine (convolutions, normalisation,
//!   activations, spectral normalisation, Gram matrices, resizing).
//! * [`edge`]: grayscale conversion, Canny edge detection and the mask
//!   composition identities used to stitch predictions into known content.
//! * [`mask`]: regular/irregular masks, dihedral augmentation and coverage buckets.
//! * [`networks`]: the edge generator, image completion generator and the two
//!   PatchGAN discriminators, with a binary weight archive.
//! * [`losses`]: adversarial, feature-matching, perceptual, style and masked ℓ1 losses.
//! * [`metrics`]: relative ℓ1, PSNR, SSIM, edge precision/recall and Fréchet distance.
//! * [`optim`]: Adam and the three-phase learning-rate schedule.
//! * [`pipeline`]: preprocessing, end-to-end inference, evaluation and σ sweeps.

pub mod edge;
pub mod error;
pub mod losses;
pub mod mask;
pub mod metrics;
pub mod networks;
pub mod optim;
pub mod pipeline;
pub mod tensor;

pub use edge::{CannyParams, EdgeMap};
pub use error::{Error, Result};
pub use mask::Mask;
pub use tensor::Tensor;

/// A value paired with a flag recording that the input made it degenerate
/// (empty mask, zero weight matrix, empty denominator).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flagged<T> {
    pub value: T,
    pub degenerate: bool,
}

impl<T> Flagged<T> {
    pub fn ok(value: T) -> Self {
        Flagged {
            value,
            degenerate: false,
        }
    }

    pub fn degenerate(value: T) -> Self {
        Flagged {
            value,
            degenerate: true,
        }
    }
}
