//! Vector-quantized panorama latents.
//!
//! The encoder and decoder are deterministic patch codecs: each `f × f`
//! pixel block becomes one latent cell holding the flattened RGB patch,
//! optionally followed by the block means of a harmonic map. Any
//! reconstruction error therefore comes from quantization alone.

mod codebook;
mod grid;
mod kmeans;

use std::collections::HashSet;

use rayon::prelude::*;

pub use codebook::{Codebook, CodebookMeta, InitMode};
pub use grid::{seq_decode, seq_encode, CodeGrid, FeatureGrid};
pub use kmeans::{fit_codebook, fit_codebook_traced, FitConfig, FitTrace};

use crate::error::{Error, Result};
use crate::harmonics::{sh_map, ShMap};
use crate::metrics::ws_psnr;
use crate::raster::ErpImage;

/// Squared Euclidean distance, accumulated in four interleaved lanes.
#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..4 {
            let t = x[l] - y[l];
            acc[l] += t * t;
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += (x - y) * (x - y);
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn check_patch(height: usize, width: usize, f: usize) -> Result<()> {
    if f == 0 || !height.is_multiple_of(f) || !width.is_multiple_of(f) {
        return Err(Error::arg(format!(
            "scale factor {f} does not divide {width}x{height}"
        )));
    }
    Ok(())
}

/// Encodes each `f × f` block as a latent cell of `3f²` pixel components in
/// (row, col, channel) order, followed by the block means of `sh` if given.
pub fn patch_encode(image: &ErpImage, f: usize, sh: Option<&ShMap>) -> Result<FeatureGrid> {
    let (height, width) = (image.height(), image.width());
    check_patch(height, width, f)?;
    if let Some(sh) = sh {
        if sh.height() != height || sh.width() != width {
            return Err(Error::arg("harmonic map does not match image dimensions"));
        }
    }
    let (h, w) = (height / f, width / f);
    let shc = sh.map_or(0, ShMap::channels);
    let d = 3 * f * f + shc;
    let mut data = Vec::with_capacity(h * w * d);
    let inv_area = 1.0 / (f * f) as f64;
    for r in 0..h {
        for c in 0..w {
            for pj in 0..f {
                let row = (r * f + pj) * width * 3;
                let start = row + c * f * 3;
                data.extend_from_slice(&image.data()[start..start + 3 * f]);
            }
            if let Some(sh) = sh {
                let mut mean = vec![0.0; shc];
                for pj in 0..f {
                    for pi in 0..f {
                        for (m, v) in mean.iter_mut().zip(sh.at(c * f + pi, r * f + pj)) {
                            *m += v;
                        }
                    }
                }
                data.extend(mean.into_iter().map(|m| m * inv_area));
            }
        }
    }
    FeatureGrid::from_cells(h, w, d, f, shc, data)
}

/// Inverse of [`patch_encode`] on the pixel components; values are clamped
/// into `[0, 1]`.
pub fn patch_decode(grid: &FeatureGrid, f: usize) -> Result<ErpImage> {
    if f == 0 || grid.d < 3 * f * f {
        return Err(Error::arg(format!(
            "feature dimension {} too small for scale factor {f}",
            grid.d
        )));
    }
    let (height, width) = (grid.h * f, grid.w * f);
    let mut data = vec![0.0; height * width * 3];
    for r in 0..grid.h {
        for c in 0..grid.w {
            let cell = grid.cell(r, c);
            for pj in 0..f {
                let start = (r * f + pj) * width * 3 + c * f * 3;
                data[start..start + 3 * f].copy_from_slice(&cell[pj * 3 * f..(pj + 1) * 3 * f]);
            }
        }
    }
    if width != 2 * height {
        return Err(Error::arg(format!("decoded raster {width}x{height} is not equirectangular")));
    }
    Ok(ErpImage::from_clamped(height, width, data))
}

/// Index of the nearest codebook entry, lowest index on ties.
#[inline]
pub fn nearest_entry(cell: &[f64], cb: &Codebook) -> usize {
    let mut best = (0, f64::INFINITY);
    for k in 0..cb.k() {
        let d = sq_dist(cell, cb.entry(k));
        if d < best.1 {
            best = (k, d);
        }
    }
    best.0
}

/// Replaces every cell by its nearest codebook entry.
pub fn quantize(grid: &FeatureGrid, cb: &Codebook) -> Result<(CodeGrid, FeatureGrid)> {
    if grid.d != cb.d() {
        return Err(Error::arg(format!(
            "feature dimension {} does not match codebook dimension {}",
            grid.d,
            cb.d()
        )));
    }
    let indices: Vec<u32> = grid
        .data
        .par_chunks_exact(grid.d)
        .map(|cell| nearest_entry(cell, cb) as u32)
        .collect();
    let codes = CodeGrid::new(grid.h, grid.w, indices)?;
    let zq = lookup(&codes, cb, grid.patch, grid.sh_channels)?;
    Ok((codes, zq))
}

/// Feature grid holding the codebook entries named by `codes`.
pub fn lookup(codes: &CodeGrid, cb: &Codebook, patch: usize, sh_channels: usize) -> Result<FeatureGrid> {
    if let Some(m) = codes.max_index() {
        if m as usize >= cb.k() {
            return Err(Error::data(format!("code index {m} outside codebook of size {}", cb.k())));
        }
    }
    let mut data = Vec::with_capacity(codes.indices().len() * cb.d());
    for &k in codes.indices() {
        data.extend_from_slice(cb.entry(k as usize));
    }
    FeatureGrid::from_cells(codes.h(), codes.w(), cb.d(), patch, sh_channels, data)
}

/// Value-level codebook loss terms. Stop-gradient is the identity on values,
/// so both terms equal the mean per-cell squared distance; they are kept
/// apart because in training they update different parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CodebookLoss {
    pub commitment: f64,
    pub codebook: f64,
    pub total: f64,
}

pub fn codebook_loss(z_e: &FeatureGrid, z_q: &FeatureGrid) -> Result<CodebookLoss> {
    if z_e.h != z_q.h || z_e.w != z_q.w || z_e.d != z_q.d {
        return Err(Error::arg("codebook loss needs matching feature grid shapes"));
    }
    let cells = (z_e.h * z_e.w) as f64;
    let sum: f64 = z_e.cells().zip(z_q.cells()).map(|(a, b)| sq_dist(a, b)).sum();
    let term = sum / cells;
    Ok(CodebookLoss {
        commitment: term,
        codebook: term,
        total: 2.0 * term,
    })
}

/// Fraction of the `k` codebook entries selected at least once.
pub fn codebook_usage(grids: &[CodeGrid], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::arg("codebook size must be positive"));
    }
    let mut used = HashSet::new();
    for g in grids {
        for &i in g.indices() {
            if i as usize >= k {
                return Err(Error::data(format!("code index {i} outside codebook of size {k}")));
            }
            used.insert(i);
        }
    }
    Ok(used.len() as f64 / k as f64)
}

/// Encodes, quantizes and decodes `image`, returning the reconstruction and
/// its WS-PSNR against the input.
pub fn reconstruct(image: &ErpImage, cb: &Codebook, f: usize) -> Result<(ErpImage, f64)> {
    if cb.meta().patch != f {
        return Err(Error::arg(format!(
            "codebook was fit with f = {}, asked for f = {f}",
            cb.meta().patch
        )));
    }
    let sh = match cb.meta().degree {
        Some(d) => Some(sh_map(image.height(), image.width(), d)?),
        None => None,
    };
    let z_e = patch_encode(image, f, sh.as_ref())?;
    let (_, z_q) = quantize(&z_e, cb)?;
    let out = patch_decode(&z_q, f)?;
    let score = ws_psnr(&out, image)?;
    Ok((out, score))
}
