//! 2D Fourier analysis of panoramas.
//!
//! `F(u, v) = Σ_x Σ_y p(x, y) · exp(−2πi (ux/h + vy/w))` for an `h × w`
//! plane, computed with row and column FFTs. Colour images are transformed
//! one channel at a time.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::ErpImage;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    /// DC at `(0, 0)`.
    Natural,
    /// DC at `(h/2, w/2)`.
    Centered,
}

/// Complex frequency plane, row-major `h × w`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    h: usize,
    w: usize,
    re: Vec<f64>,
    im: Vec<f64>,
    layout: Layout,
}

impl Spectrum {
    pub fn from_parts(h: usize, w: usize, re: Vec<f64>, im: Vec<f64>, layout: Layout) -> Result<Self> {
        if re.len() != h * w || im.len() != h * w {
            return Err(Error::arg("spectrum planes do not match h x w"));
        }
        Ok(Self { h, w, re, im, layout })
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> &[f64] {
        &self.im
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    #[inline]
    pub fn at(&self, u: usize, v: usize) -> (f64, f64) {
        let k = u * self.w + v;
        (self.re[k], self.im[k])
    }
}

/// Forward 2D DFT of a real `h × w` plane.
pub fn dft2(plane: &[f64], h: usize, w: usize) -> Result<Spectrum> {
    if h == 0 || w == 0 {
        return Err(Error::arg("DFT input must be non-empty"));
    }
    if plane.len() != h * w {
        return Err(Error::arg(format!(
            "plane has {} samples, expected {h}x{w}",
            plane.len()
        )));
    }
    let mut buf: Vec<Complex64> = plane.iter().map(|&p| Complex64::new(p, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(w).process(&mut buf);

    let col_fft = planner.plan_fft_forward(h);
    let mut col = vec![Complex64::new(0.0, 0.0); h];
    for v in 0..w {
        for u in 0..h {
            col[u] = buf[u * w + v];
        }
        col_fft.process(&mut col);
        for u in 0..h {
            buf[u * w + v] = col[u];
        }
    }
    Ok(Spectrum {
        h,
        w,
        re: buf.iter().map(|c| c.re).collect(),
        im: buf.iter().map(|c| c.im).collect(),
        layout: Layout::Natural,
    })
}

/// One spectrum per colour channel.
pub fn dft2_rgb(image: &ErpImage) -> Result<[Spectrum; 3]> {
    let (h, w) = (image.height(), image.width());
    Ok([
        dft2(&image.channel(0), h, w)?,
        dft2(&image.channel(1), h, w)?,
        dft2(&image.channel(2), h, w)?,
    ])
}

/// Phase of a single bin: full-quadrant arctangent in `(−π, π]`, zero for a
/// zero bin.
#[inline]
pub fn bin_phase(re: f64, im: f64) -> f64 {
    if re == 0.0 && im == 0.0 {
        return 0.0;
    }
    let p = im.atan2(re);
    if p <= -PI {
        PI
    } else {
        p
    }
}

/// Amplitude `√(R² + I²)` and phase maps, in the spectrum's layout.
pub fn amp_phase(spec: &Spectrum) -> (Vec<f64>, Vec<f64>) {
    spec.re
        .iter()
        .zip(&spec.im)
        .map(|(&r, &i)| (r.hypot(i), bin_phase(r, i)))
        .unzip()
}

fn shift_plane<T: Copy>(src: &[T], h: usize, w: usize, du: usize, dv: usize) -> Vec<T> {
    let mut out = src.to_vec();
    for u in 0..h {
        for v in 0..w {
            out[((u + du) % h) * w + (v + dv) % w] = src[u * w + v];
        }
    }
    out
}

/// Moves DC from `(0, 0)` to `(⌊h/2⌋, ⌊w/2⌋)`.
pub fn center_shift(spec: &Spectrum) -> Result<Spectrum> {
    if spec.layout == Layout::Centered {
        return Err(Error::State("spectrum is already centered".into()));
    }
    Ok(Spectrum {
        h: spec.h,
        w: spec.w,
        re: shift_plane(&spec.re, spec.h, spec.w, spec.h / 2, spec.w / 2),
        im: shift_plane(&spec.im, spec.h, spec.w, spec.h / 2, spec.w / 2),
        layout: Layout::Centered,
    })
}

/// Inverse of [`center_shift`].
pub fn uncenter_shift(spec: &Spectrum) -> Result<Spectrum> {
    if spec.layout == Layout::Natural {
        return Err(Error::State("spectrum is not centered".into()));
    }
    let (du, dv) = (spec.h - spec.h / 2, spec.w - spec.w / 2);
    Ok(Spectrum {
        h: spec.h,
        w: spec.w,
        re: shift_plane(&spec.re, spec.h, spec.w, du % spec.h, dv % spec.w),
        im: shift_plane(&spec.im, spec.h, spec.w, du % spec.h, dv % spec.w),
        layout: Layout::Natural,
    })
}

/// Radial amplitude comparison of two images' centered luma spectra.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreqGapReport {
    pub bins: Vec<RadialBin>,
    pub hf_mass_a: f64,
    pub hf_mass_b: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialBin {
    pub index: usize,
    /// Normalized radius bounds in `[0, 1]`.
    pub radius_lo: f64,
    pub radius_hi: f64,
    pub amp_a: f64,
    pub amp_b: f64,
    /// `amp_a / amp_b`; 1 when both are zero, `None` when only `amp_b` is.
    pub ratio: Option<f64>,
}

/// Fraction of non-DC spectral energy at centered radius above `w/4`; zero
/// for a flat image.
pub fn hf_mass(image: &ErpImage) -> Result<f64> {
    let (h, w) = (image.height(), image.width());
    let spec = center_shift(&dft2(&image.luma(), h, w)?)?;
    let (amp, _) = amp_phase(&spec);
    Ok(hf_fraction(&amp, h, w))
}

fn hf_fraction(amp: &[f64], h: usize, w: usize) -> f64 {
    let cut = w as f64 / 4.0;
    let (mut hi, mut total) = (0.0, 0.0);
    for u in 0..h {
        for v in 0..w {
            let r = centered_radius(u, v, h, w);
            if r == 0.0 {
                continue;
            }
            let e = amp[u * w + v] * amp[u * w + v];
            total += e;
            if r > cut {
                hi += e;
            }
        }
    }
    if total > 0.0 {
        hi / total
    } else {
        0.0
    }
}

#[inline]
fn centered_radius(u: usize, v: usize, h: usize, w: usize) -> f64 {
    let du = u as f64 - (h / 2) as f64;
    let dv = v as f64 - (w / 2) as f64;
    du.hypot(dv)
}

pub const DEFAULT_BINS: usize = 32;

pub fn freq_gap(a: &ErpImage, b: &ErpImage, bins: usize) -> Result<FreqGapReport> {
    if !a.same_dims(b) {
        return Err(Error::arg("frequency gap needs equally sized images"));
    }
    if bins < 2 {
        return Err(Error::arg("frequency gap needs at least two bins"));
    }
    let (h, w) = (a.height(), a.width());
    let amp_of = |img: &ErpImage| -> Result<Vec<f64>> {
        Ok(amp_phase(&center_shift(&dft2(&img.luma(), h, w)?)?).0)
    };
    let (amp_a, amp_b) = (amp_of(a)?, amp_of(b)?);

    let mut r_max: f64 = 0.0;
    for u in 0..h {
        for v in 0..w {
            r_max = r_max.max(centered_radius(u, v, h, w));
        }
    }
    let mut sums = vec![(0.0, 0.0, 0usize); bins];
    for u in 0..h {
        for v in 0..w {
            let r = if r_max > 0.0 { centered_radius(u, v, h, w) / r_max } else { 0.0 };
            let k = ((r * bins as f64) as usize).min(bins - 1);
            let s = &mut sums[k];
            s.0 += amp_a[u * w + v];
            s.1 += amp_b[u * w + v];
            s.2 += 1;
        }
    }
    let bins_out = sums
        .iter()
        .enumerate()
        .map(|(k, &(sa, sb, n))| {
            let (ma, mb) = if n > 0 { (sa / n as f64, sb / n as f64) } else { (0.0, 0.0) };
            let ratio = if mb > 0.0 {
                Some(ma / mb)
            } else if ma == 0.0 {
                Some(1.0)
            } else {
                None
            };
            RadialBin {
                index: k,
                radius_lo: k as f64 / bins as f64,
                radius_hi: (k + 1) as f64 / bins as f64,
                amp_a: ma,
                amp_b: mb,
                ratio,
            }
        })
        .collect();
    Ok(FreqGapReport {
        bins: bins_out,
        hf_mass_a: hf_fraction(&amp_a, h, w),
        hf_mass_b: hf_fraction(&amp_b, h, w),
    })
}

impl FreqGapReport {
    /// `bin_index,radius_lo,radius_hi,amp_a,amp_b,ratio` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_index,radius_lo,radius_hi,amp_a,amp_b,ratio\n");
        for b in &self.bins {
            let ratio = b.ratio.map(|r| r.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                b.index, b.radius_lo, b.radius_hi, b.amp_a, b.amp_b, ratio
            ));
        }
        out
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&serde_json::json!({
            "hf_mass_a": self.hf_mass_a,
            "hf_mass_b": self.hf_mass_b,
        }))?)
    }

    pub fn save(&self, csv_path: impl AsRef<Path>, json_path: impl AsRef<Path>) -> Result<()> {
        let (c, j) = (csv_path.as_ref(), json_path.as_ref());
        std::fs::write(c, self.to_csv()).map_err(|e| Error::io(c, e))?;
        let mut f = std::fs::File::create(j).map_err(|e| Error::io(j, e))?;
        f.write_all(self.summary_json()?.as_bytes()).map_err(|e| Error::io(j, e))
    }
}

/// Centered luma amplitude spectrum as a grayscale PNG, `log1p`-scaled to
/// the full 8-bit range.
pub fn save_amplitude_png(image: &ErpImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (h, w) = (image.height(), image.width());
    let (amp, _) = amp_phase(&center_shift(&dft2(&image.luma(), h, w)?)?);
    let logs: Vec<f64> = amp.iter().map(|a| a.ln_1p()).collect();
    let max = logs.iter().cloned().fold(0.0, f64::max);
    let bytes: Vec<u8> = logs
        .iter()
        .map(|&v| if max > 0.0 { crate::raster::quantize_u8(v / max) } else { 0 })
        .collect();
    image::save_buffer(path, &bytes, w as u32, h as u32, image::ExtendedColorType::L8).map_err(|source| {
        Error::Image {
            path: path.to_path_buf(),
            source,
        }
    })
}

/// What a frequency map holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapKind {
    /// `log1p`-compressed amplitude.
    Amplitude,
    Phase,
}

/// A centered real-valued frequency map handed to a [`Scorer`].
#[derive(Clone, Debug, PartialEq)]
pub struct FreqMap {
    pub h: usize,
    pub w: usize,
    pub kind: MapKind,
    pub data: Vec<f64>,
}

/// Patch discriminator stand-in: a deterministic map from a frequency map to
/// a realness score in `(0, 1)`, averaged over patches.
pub trait Scorer: Sync {
    fn score(&self, map: &FreqMap) -> f64;
}

/// Returns the same score for every map.
#[derive(Clone, Copy, Debug)]
pub struct ConstantScorer(pub f64);

impl Scorer for ConstantScorer {
    fn score(&self, _map: &FreqMap) -> f64 {
        self.0
    }
}

/// Logistic of per-patch band energy: each `patch × patch` tile scores
/// `σ(weight · mean(x²) + bias)` and the tile scores are averaged.
#[derive(Clone, Copy, Debug)]
pub struct LogisticBandScorer {
    pub patch: usize,
    pub weight: f64,
    pub bias: f64,
}

impl Default for LogisticBandScorer {
    fn default() -> Self {
        Self {
            patch: 8,
            weight: 0.05,
            bias: -1.0,
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Scorer for LogisticBandScorer {
    fn score(&self, map: &FreqMap) -> f64 {
        let p = self.patch.max(1);
        let (mut total, mut tiles) = (0.0, 0usize);
        for u0 in (0..map.h).step_by(p) {
            for v0 in (0..map.w).step_by(p) {
                let (mut e, mut n) = (0.0, 0usize);
                for u in u0..(u0 + p).min(map.h) {
                    for v in v0..(v0 + p).min(map.w) {
                        let x = map.data[u * map.w + v];
                        e += x * x;
                        n += 1;
                    }
                }
                total += sigmoid(self.weight * e / n as f64 + self.bias);
                tiles += 1;
            }
        }
        total / tiles as f64
    }
}

pub const SCORE_EPS: f64 = 1e-7;

/// Frequency consistency loss value and how many scorer outputs had to be
/// clamped into `[ε, 1 − ε]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FreqLoss {
    pub value: f64,
    pub clamped: usize,
}

/// Centered `log1p` amplitude and phase maps of one spectrum.
pub fn scorer_inputs(spec: &Spectrum) -> Result<(FreqMap, FreqMap)> {
    let centered = center_shift(spec)?;
    let (amp, phase) = amp_phase(&centered);
    Ok((
        FreqMap {
            h: spec.h,
            w: spec.w,
            kind: MapKind::Amplitude,
            data: amp.into_iter().map(f64::ln_1p).collect(),
        },
        FreqMap {
            h: spec.h,
            w: spec.w,
            kind: MapKind::Phase,
            data: phase,
        },
    ))
}

/// `½·L(|F^R|, |F^C|) + ½·L(∠F^R, ∠F^C)` with `L(x, y) = log D(y) + log(1 − D(x))`,
/// evaluated per colour channel and averaged over channels.
pub fn freq_consistency_loss(refined: &ErpImage, target: &ErpImage, scorer: &dyn Scorer) -> Result<FreqLoss> {
    if !refined.same_dims(target) {
        return Err(Error::arg("frequency loss needs equally sized images"));
    }
    let r: Vec<Vec<f64>> = (0..3).map(|c| refined.channel(c)).collect();
    let t: Vec<Vec<f64>> = (0..3).map(|c| target.channel(c)).collect();
    freq_consistency_loss_planes(&r, &t, refined.height(), refined.width(), scorer)
}

/// [`freq_consistency_loss`] over arbitrary `h × w` channel planes.
pub fn freq_consistency_loss_planes(
    refined: &[Vec<f64>],
    target: &[Vec<f64>],
    h: usize,
    w: usize,
    scorer: &dyn Scorer,
) -> Result<FreqLoss> {
    if refined.is_empty() || refined.len() != target.len() {
        return Err(Error::arg("frequency loss needs the same non-zero number of channels"));
    }
    let mut clamped = 0;
    let mut d = |m: &FreqMap| {
        let s = scorer.score(m);
        if !(SCORE_EPS..=1.0 - SCORE_EPS).contains(&s) {
            clamped += 1;
        }
        if s.is_nan() {
            SCORE_EPS
        } else {
            s.clamp(SCORE_EPS, 1.0 - SCORE_EPS)
        }
    };
    let mut total = 0.0;
    for (rp, tp) in refined.iter().zip(target) {
        let (ra, rph) = scorer_inputs(&dft2(rp, h, w)?)?;
        let (ta, tph) = scorer_inputs(&dft2(tp, h, w)?)?;
        let amp_term = d(&ta).ln() + (1.0 - d(&ra)).ln();
        let phase_term = d(&tph).ln() + (1.0 - d(&rph)).ln();
        total += 0.5 * amp_term + 0.5 * phase_term;
    }
    Ok(FreqLoss {
        value: total / refined.len() as f64,
        clamped,
    })
}
