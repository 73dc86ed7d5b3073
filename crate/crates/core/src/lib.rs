//! panosphere: desk-scale tooling for 360° panorama outpainting.
//!
//! The crate covers the deterministic core of a two-stage outpainting
//! pipeline:
//!
//! - [`sphgeo`]: ERP pixel/sphere mapping, cubemap and tangent viewport masks
//! - [`harmonics`]: real spherical harmonics and per-pixel harmonic maps
//! - [`quantizer`]: patch codec, nearest-codebook quantization, k-means codebooks
//! - [`codeseq`]: count-based conditional code model and circular outpainting
//! - [`spectrum`]: 2D DFT, amplitude/phase, radial frequency reports, the
//!   frequency consistency loss
//! - [`refine`]: refinement-stage preprocessing and feathered upscale blending
//! - [`metrics`]: PSNR and WS-PSNR
//!
//! [`pipeline`] wires these into end-to-end commands with on-disk artifacts.

pub mod codeseq;
pub mod config;
pub mod error;
pub mod harmonics;
pub mod metrics;
pub mod pipeline;
pub mod quantizer;
pub mod raster;
pub mod refine;
pub mod rng;
pub mod spectrum;
pub mod sphgeo;
pub mod synth;

pub use error::{Error, Result};
pub use raster::{ErpImage, MaskMap, Rgb};
