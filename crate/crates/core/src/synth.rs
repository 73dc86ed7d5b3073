//! Procedural outdoor-like panoramas.
//!
//! Every component is periodic in φ with integer frequencies, so the left
//! and right borders meet without a seam: a vertical sky gradient over a
//! rolling horizon, band-limited terrain texture below it, and a few thin
//! vertical "structure" strokes that carry high-frequency energy.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::ErpImage;
use crate::rng;

/// Knobs controlling the frequency content of generated panoramas.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    /// Number of sinusoids in the terrain texture.
    pub texture_terms: usize,
    /// Highest azimuthal frequency of the terrain texture.
    pub max_freq: u32,
    /// Number of structure strokes.
    pub strokes: usize,
    /// Amplitude of the terrain texture.
    pub texture_gain: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            texture_terms: 12,
            max_freq: 24,
            strokes: 6,
            texture_gain: 0.12,
        }
    }
}

struct Wave {
    freq: f64,
    vfreq: f64,
    phase: f64,
    amp: f64,
}

struct Stroke {
    center: f64,
    half_width: f64,
    top: f64,
    color: [f64; 3],
}

/// Circular angular distance.
fn ang_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// One panorama of height `height`, fully determined by `seed`.
pub fn synth_panorama(height: usize, seed: u64, params: &SynthParams) -> Result<ErpImage> {
    if height == 0 {
        return Err(Error::arg("panorama height must be positive"));
    }
    let width = 2 * height;
    let mut r = rng::stream(seed);

    let horizon: Vec<Wave> = (1..=6)
        .map(|k| Wave {
            freq: k as f64,
            vfreq: 0.0,
            phase: r.gen_range(0.0..TAU),
            amp: r.gen_range(0.0..0.12) / k as f64,
        })
        .collect();
    let texture: Vec<Wave> = (0..params.texture_terms)
        .map(|_| Wave {
            freq: r.gen_range(1..=params.max_freq.max(1)) as f64,
            vfreq: r.gen_range(2.0..24.0),
            phase: r.gen_range(0.0..TAU),
            amp: r.gen_range(0.3..1.0),
        })
        .collect();
    let tex_norm: f64 = texture.iter().map(|w| w.amp).sum::<f64>().max(1e-12);
    let clouds: Vec<Wave> = (0..4)
        .map(|_| Wave {
            freq: r.gen_range(1..=5) as f64,
            vfreq: r.gen_range(1.0..4.0),
            phase: r.gen_range(0.0..TAU),
            amp: r.gen_range(0.02..0.06),
        })
        .collect();
    let zenith = [r.gen_range(0.15..0.3), r.gen_range(0.3..0.5), r.gen_range(0.65..0.9)];
    let haze = [r.gen_range(0.7..0.85), r.gen_range(0.78..0.9), r.gen_range(0.85..0.97)];
    let ground_hue = r.gen_range(0.0..1.0f64);
    let ground = [
        0.25 + 0.2 * ground_hue,
        0.3 + 0.15 * (1.0 - ground_hue),
        0.15 + 0.1 * ground_hue,
    ];
    let strokes: Vec<Stroke> = (0..params.strokes)
        .map(|_| {
            let g = r.gen_range(0.05..0.35);
            Stroke {
                center: r.gen_range(0.0..TAU),
                half_width: r.gen_range(0.004..0.03),
                top: r.gen_range(0.25..0.45) * PI,
                color: [g, g * r.gen_range(0.8..1.1), g * r.gen_range(0.8..1.2)],
            }
        })
        .collect();

    let horizon_at = |phi: f64| -> f64 {
        PI / 2.0 + horizon.iter().map(|w| w.amp * (w.freq * phi + w.phase).sin()).sum::<f64>()
    };
    let cols: Vec<(f64, f64)> = (0..width)
        .map(|i| {
            let phi = TAU * (i as f64 + 0.5) / width as f64;
            (phi, horizon_at(phi))
        })
        .collect();

    let mut data = vec![0.0; height * width * 3];
    data.par_chunks_mut(width * 3).enumerate().for_each(|(j, row)| {
        let theta = PI * (j as f64 + 0.5) / height as f64;
        for (i, &(phi, th)) in cols.iter().enumerate() {
            let mut px = if theta < th {
                let t = (theta / th).powf(1.5);
                let cloud: f64 = clouds
                    .iter()
                    .map(|w| w.amp * (w.freq * phi + w.vfreq * theta + w.phase).sin())
                    .sum();
                [0, 1, 2].map(|c| zenith[c] + (haze[c] - zenith[c]) * t + cloud)
            } else {
                let depth = ((theta - th) / (PI - th).max(1e-9)).min(1.0);
                let tex: f64 = texture
                    .iter()
                    .map(|w| w.amp * (w.freq * phi + w.vfreq * theta + w.phase).sin())
                    .sum::<f64>()
                    / tex_norm;
                let shade = 1.0 - 0.35 * depth;
                [0, 1, 2].map(|c| ground[c] * shade + params.texture_gain * tex)
            };
            for s in &strokes {
                if theta >= s.top && theta < th + 0.02 && ang_dist(phi, s.center) < s.half_width {
                    px = s.color;
                }
            }
            for c in 0..3 {
                row[i * 3 + c] = px[c];
            }
        }
    });
    Ok(ErpImage::from_clamped(height, width, data))
}

/// `count` panoramas; image `i` uses seed `derive_seed(seed, i, "synth")`.
pub fn synth_corpus(height: usize, count: usize, seed: u64, params: &SynthParams) -> Result<Vec<ErpImage>> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| synth_panorama(height, rng::derive_seed(seed, i, "synth"), params))
        .collect()
}
