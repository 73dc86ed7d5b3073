//! Refinement stage: training-data preparation and a deterministic
//! upscale-and-blend refiner.
//!
//! The refiner keeps the stage's contract without a learned network: the
//! generated panorama is upscaled 2× and the given region is pasted back
//! through a feathered alpha, so deep given pixels are reproduced exactly
//! and the transition band mixes both sources.

use std::collections::VecDeque;

use rand::Rng;

use crate::error::{Error, Result};
use crate::metrics::mse;
use crate::quantizer::{reconstruct, Codebook};
use crate::raster::{ErpImage, MaskMap};
use crate::rng;
use crate::spectrum::{freq_consistency_loss, Scorer};

/// Default feather width in pixels at 512×1024.
pub const DEFAULT_FEATHER: usize = 8;

/// Bilinear 2× upscale. Sample positions wrap around the φ seam and are
/// clamped at the poles.
pub fn upscale2x(image: &ErpImage) -> ErpImage {
    let (h, w) = (image.height(), image.width());
    let (oh, ow) = (2 * h, 2 * w);
    let src = image.data();
    let mut out = Vec::with_capacity(oh * ow * 3);
    for oj in 0..oh {
        let y = ((oj as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (h - 1) as f64);
        let j0 = y.floor() as usize;
        let j1 = (j0 + 1).min(h - 1);
        let fy = y - j0 as f64;
        for oi in 0..ow {
            let x = (oi as f64 + 0.5) / 2.0 - 0.5;
            let xf = x.floor();
            let fx = x - xf;
            let i0 = (xf as i64).rem_euclid(w as i64) as usize;
            let i1 = (i0 + 1) % w;
            for c in 0..3 {
                let p = |i: usize, j: usize| src[(j * w + i) * 3 + c];
                let top = p(i0, j0) * (1.0 - fx) + p(i1, j0) * fx;
                let bot = p(i0, j1) * (1.0 - fx) + p(i1, j1) * fx;
                out.push(top * (1.0 - fy) + bot * fy);
            }
        }
    }
    ErpImage::from_clamped(oh, ow, out)
}

/// 2×2 box-filter downscale.
pub fn downscale2x(image: &ErpImage) -> Result<ErpImage> {
    let (h, w) = (image.height(), image.width());
    if h % 2 != 0 {
        return Err(Error::arg(format!("cannot halve a {w}x{h} panorama")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let src = image.data();
    let mut out = Vec::with_capacity(oh * ow * 3);
    for j in 0..oh {
        for i in 0..ow {
            for c in 0..3 {
                let p = |di: usize, dj: usize| src[((2 * j + dj) * w + 2 * i + di) * 3 + c];
                out.push(0.25 * (p(0, 0) + p(1, 0) + p(0, 1) + p(1, 1)));
            }
        }
    }
    Ok(ErpImage::from_clamped(oh, ow, out))
}

pub const MAX_JITTER: f64 = 0.5;

/// Colour jitter deltas, each in `[−0.5, 0.5]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JitterParams {
    brightness: f64,
    contrast: f64,
    saturation: f64,
}

impl JitterParams {
    pub fn new(brightness: f64, contrast: f64, saturation: f64) -> Result<Self> {
        for (name, v) in [("brightness", brightness), ("contrast", contrast), ("saturation", saturation)] {
            if !(-MAX_JITTER..=MAX_JITTER).contains(&v) {
                return Err(Error::arg(format!("{name} delta {v} outside [-0.5, 0.5]")));
            }
        }
        Ok(Self {
            brightness,
            contrast,
            saturation,
        })
    }

    /// Deltas drawn uniformly from `[−strength, strength]`.
    pub fn sample(seed: u64, strength: f64) -> Result<Self> {
        if !(0.0..=MAX_JITTER).contains(&strength) {
            return Err(Error::arg(format!("jitter strength {strength} outside [0, 0.5]")));
        }
        let mut r = rng::stream(rng::derive_seed(seed, 0, "jitter"));
        let mut draw = || if strength > 0.0 { r.gen_range(-strength..=strength) } else { 0.0 };
        Self::new(draw(), draw(), draw())
    }

    pub fn brightness(&self) -> f64 {
        self.brightness
    }

    pub fn contrast(&self) -> f64 {
        self.contrast
    }

    pub fn saturation(&self) -> f64 {
        self.saturation
    }
}

/// Brightness shift, then contrast around the image mean, then a blend
/// toward per-pixel luma by `|saturation|`; clamped to `[0, 1]` at the end.
pub fn color_jitter(image: &ErpImage, params: &JitterParams) -> ErpImage {
    let mut v: Vec<f64> = image.data().iter().map(|x| x + params.brightness).collect();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let gain = 1.0 + params.contrast;
    for x in &mut v {
        *x = mean + (*x - mean) * gain;
    }
    let s = params.saturation.abs();
    for px in v.chunks_exact_mut(3) {
        let luma = (px[0] + px[1] + px[2]) / 3.0;
        for x in px {
            *x = (1.0 - s) * *x + s * luma;
        }
    }
    ErpImage::from_clamped(image.height(), image.width(), v)
}

/// Downscale, reconstruct through the codebook, upscale back.
pub fn scale_cycle(image: &ErpImage, cb: &Codebook, f: usize) -> Result<ErpImage> {
    let small = downscale2x(image)?;
    if f == 0 || small.height() % f != 0 {
        return Err(Error::arg(format!(
            "scale factor {f} does not divide the halved height {}",
            small.height()
        )));
    }
    let (rec, _) = reconstruct(&small, cb, f)?;
    Ok(upscale2x(&rec))
}

/// Per-pixel 4-neighbour distance from each given pixel to the nearest
/// non-given pixel, wrapping across the φ seam; 0 on non-given pixels and
/// `usize::MAX` everywhere when nothing is masked out.
pub fn inner_distance(mask: &MaskMap) -> Vec<usize> {
    let (h, w) = (mask.height(), mask.width());
    let mut dist = vec![usize::MAX; h * w];
    let mut queue = VecDeque::new();
    for j in 0..h {
        for i in 0..w {
            if !mask.get(i, j) {
                dist[j * w + i] = 0;
                queue.push_back((i, j));
            }
        }
    }
    while let Some((i, j)) = queue.pop_front() {
        let d = dist[j * w + i] + 1;
        let mut visit = |ni: usize, nj: usize| {
            if dist[nj * w + ni] > d {
                dist[nj * w + ni] = d;
                queue.push_back((ni, nj));
            }
        };
        visit((i + 1) % w, j);
        visit((i + w - 1) % w, j);
        if j > 0 {
            visit(i, j - 1);
        }
        if j + 1 < h {
            visit(i, j + 1);
        }
    }
    dist
}

/// Blend weight of the given image: `min(d, feather) / feather` from the
/// inner distance, so given pixels at least `feather` steps from the mask
/// edge get exactly 1. `feather = 0` is a hard mask.
pub fn feather_alpha(mask: &MaskMap, feather: usize) -> Vec<f64> {
    inner_distance(mask)
        .into_iter()
        .map(|d| {
            if d == 0 {
                0.0
            } else if feather == 0 || d >= feather {
                1.0
            } else {
                d as f64 / feather as f64
            }
        })
        .collect()
}

/// `α·masked_hr + (1 − α)·gen_up` with the feathered alpha of `mask_hr`.
/// Pixels with α = 1 are copied bit-exactly from `masked_hr`.
pub fn blend_refine(gen_up: &ErpImage, masked_hr: &ErpImage, mask_hr: &MaskMap, feather: usize) -> Result<ErpImage> {
    if !gen_up.same_dims(masked_hr) || !mask_hr.matches(gen_up) {
        return Err(Error::arg("blend inputs must share dimensions"));
    }
    let alpha = feather_alpha(mask_hr, feather);
    let (g, m) = (gen_up.data(), masked_hr.data());
    let mut out = Vec::with_capacity(g.len());
    for (p, &a) in alpha.iter().enumerate() {
        for c in 0..3 {
            let k = p * 3 + c;
            out.push(if a == 1.0 {
                m[k]
            } else if a == 0.0 {
                g[k]
            } else {
                a * m[k] + (1.0 - a) * g[k]
            });
        }
    }
    Ok(ErpImage::from_clamped(gen_up.height(), gen_up.width(), out))
}

/// Refinement objective values. The adversarial term needs a trained
/// discriminator and is not part of `total`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefineObjective {
    /// RGB mean squared error.
    pub rec: f64,
    pub freq: f64,
    pub total: f64,
    pub gan: Option<f64>,
}

pub fn refine_objective(output: &ErpImage, target: &ErpImage, scorer: &dyn Scorer) -> Result<RefineObjective> {
    let rec = mse(output, target)?;
    let freq = freq_consistency_loss(output, target, scorer)?.value;
    Ok(RefineObjective {
        rec,
        freq,
        total: rec + freq,
        gan: None,
    })
}
