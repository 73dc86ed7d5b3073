//! Real spherical harmonics and per-pixel harmonic maps over ERP grids.
//!
//! `Y_l^m(θ, φ) = F_l^|m| · P_l^|m|(cos θ) · {sin(|m|φ), 1/√2, cos(mφ)}` for
//! m < 0, m = 0, m > 0, with `F_l^m = √((2l+1)/(2π) · (l−m)!/(l+m)!)`.
//! `P_l^m` carries the Condon–Shortley phase `(−1)^m`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sphgeo::{row_theta, SphericalCoord};

/// Largest supported degree.
pub const MAX_DEGREE: u32 = 12;

/// Degree used when none is configured.
pub const DEFAULT_DEGREE: u32 = 3;

/// Maximum harmonic degree `D`; a map of degree `D` has `(D+1)²` channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct ShDegree(u32);

impl ShDegree {
    pub fn new(d: u32) -> Result<Self> {
        if d > MAX_DEGREE {
            return Err(Error::arg(format!("harmonic degree {d} exceeds {MAX_DEGREE}")));
        }
        Ok(Self(d))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn channels(self) -> usize {
        let n = self.0 as usize + 1;
        n * n
    }

    /// Degree whose channel count is `channels`, if it is a perfect square.
    pub fn from_channels(channels: usize) -> Option<Self> {
        let n = (channels as f64).sqrt().round() as usize;
        (n >= 1 && n * n == channels).then(|| Self((n - 1) as u32)).filter(|d| d.0 <= MAX_DEGREE)
    }
}

impl Default for ShDegree {
    fn default() -> Self {
        Self(DEFAULT_DEGREE)
    }
}

impl TryFrom<u32> for ShDegree {
    type Error = Error;
    fn try_from(d: u32) -> Result<Self> {
        Self::new(d)
    }
}

impl From<ShDegree> for u32 {
    fn from(d: ShDegree) -> u32 {
        d.0
    }
}

/// Channel slot of `(l, m)`: lexicographic by l, then m = −l..l.
#[inline]
pub fn channel_index(l: u32, m: i32) -> usize {
    (l * l) as usize + (m + l as i32) as usize
}

/// Associated Legendre function `P_l^m(x)` with Condon–Shortley phase,
/// by upward recurrence from `P_m^m`.
pub fn assoc_legendre(l: u32, m: u32, x: f64) -> Result<f64> {
    if m > l || l > MAX_DEGREE {
        return Err(Error::arg(format!("invalid Legendre order (l={l}, m={m})")));
    }
    if !(-1.0..=1.0).contains(&x) {
        return Err(Error::arg(format!("Legendre argument {x} outside [-1, 1]")));
    }
    Ok(legendre_unchecked(l, m, x))
}

fn legendre_unchecked(l: u32, m: u32, x: f64) -> f64 {
    let s = ((1.0 - x) * (1.0 + x)).sqrt();
    let mut pmm = 1.0;
    let mut odd = 1.0;
    for _ in 0..m {
        pmm *= -odd * s;
        odd += 2.0;
    }
    if l == m {
        return pmm;
    }
    let mut prev = pmm;
    let mut cur = x * (2 * m + 1) as f64 * pmm;
    for ll in (m + 2)..=l {
        let next = ((2 * ll - 1) as f64 * x * cur - (ll + m - 1) as f64 * prev) / (ll - m) as f64;
        prev = cur;
        cur = next;
    }
    cur
}

/// `F_l^m = √((2l+1)/(2π) · (l−m)!/(l+m)!)`, the factorial ratio taken as a
/// running product.
pub fn rsh_norm(l: u32, m: u32) -> Result<f64> {
    if m > l || l > MAX_DEGREE {
        return Err(Error::arg(format!("invalid harmonic index (l={l}, m={m})")));
    }
    Ok(norm_unchecked(l, m))
}

fn norm_unchecked(l: u32, m: u32) -> f64 {
    let mut ratio = 1.0;
    for k in (l - m + 1)..=(l + m) {
        ratio /= k as f64;
    }
    ((2 * l + 1) as f64 / (2.0 * PI) * ratio).sqrt()
}

#[inline]
fn azimuthal(m: i32, phi: f64) -> f64 {
    match m {
        m if m < 0 => (m.unsigned_abs() as f64 * phi).sin(),
        0 => FRAC_1_SQRT_2,
        m => (m as f64 * phi).cos(),
    }
}

/// Real spherical harmonic `Y_l^m` at `coord`.
pub fn rsh(l: u32, m: i32, coord: SphericalCoord) -> Result<f64> {
    let am = m.unsigned_abs();
    if am > l || l > MAX_DEGREE {
        return Err(Error::arg(format!("invalid harmonic index (l={l}, m={m})")));
    }
    let x = coord.theta().cos();
    Ok(norm_unchecked(l, am) * legendre_unchecked(l, am, x) * azimuthal(m, coord.phi()))
}

/// Per-pixel stack of real harmonic values, `(row, col, channel)` order.
#[derive(Clone, Debug, PartialEq)]
pub struct ShMap {
    height: usize,
    width: usize,
    degree: ShDegree,
    data: Vec<f64>,
}

impl ShMap {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn degree(&self) -> ShDegree {
        self.degree
    }

    pub fn channels(&self) -> usize {
        self.degree.channels()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// All channels at pixel `(i, j)`.
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> &[f64] {
        let c = self.channels();
        let o = (j * self.width + i) * c;
        &self.data[o..o + c]
    }

    /// Flat binary export: `"SHMP"`, u32 N, u32 M, u32 channels, then
    /// little-endian f32 samples in (row, col, channel) order.
    pub fn write_binary(&self, mut out: impl Write) -> std::io::Result<()> {
        out.write_all(b"SHMP")?;
        out.write_all(&(self.height as u32).to_le_bytes())?;
        out.write_all(&(self.width as u32).to_le_bytes())?;
        out.write_all(&(self.channels() as u32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for &v in &self.data {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out.write_all(&buf)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_binary(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }
}

/// Harmonic map of an `height × width` ERP grid up to `degree`. Depends only
/// on the grid shape, never on pixel content.
pub fn sh_map(height: usize, width: usize, degree: ShDegree) -> Result<ShMap> {
    if height == 0 || width != 2 * height {
        return Err(Error::arg(format!(
            "harmonic map needs width = 2 x height, got {width}x{height}"
        )));
    }
    let d = degree.get();
    let channels = degree.channels();
    let mut data = vec![0.0; height * width * channels];
    data.par_chunks_mut(width * channels)
        .enumerate()
        .for_each(|(j, row)| {
            let x = row_theta(j, height).cos();
            // polar factor F·P per (l, |m|), shared across the row
            let mut polar = vec![0.0; channels];
            for l in 0..=d {
                for m in -(l as i32)..=(l as i32) {
                    let am = m.unsigned_abs();
                    polar[channel_index(l, m)] = norm_unchecked(l, am) * legendre_unchecked(l, am, x);
                }
            }
            for (i, px) in row.chunks_exact_mut(channels).enumerate() {
                let phi = std::f64::consts::TAU * (i as f64 + 0.5) / width as f64;
                for l in 0..=d {
                    for m in -(l as i32)..=(l as i32) {
                        let c = channel_index(l, m);
                        px[c] = polar[c] * azimuthal(m, phi);
                    }
                }
            }
        });
    Ok(ShMap {
        height,
        width,
        degree,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphgeo::erp_to_sphere;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::TAU;

    #[test]
    fn legendre_examples() {
        assert_eq!(assoc_legendre(0, 0, 0.37).unwrap(), 1.0);
        assert_eq!(assoc_legendre(1, 0, 0.5).unwrap(), 0.5);
        let x: f64 = 0.3;
        let oracle = -3.0 * x * (1.0 - x * x).sqrt();
        let v = assoc_legendre(2, 1, x).unwrap();
        assert!((v - oracle).abs() < 1e-15);
        assert!((v + 0.858_545).abs() < 1e-6);
    }

    #[test]
    fn legendre_rejects_invalid_arguments() {
        assert!(assoc_legendre(1, 2, 0.0).is_err());
        assert!(assoc_legendre(2, 1, 1.5).is_err());
        assert!(assoc_legendre(13, 0, 0.0).is_err());
    }

    #[test]
    fn norm_examples() {
        let f00 = rsh_norm(0, 0).unwrap();
        assert!((f00 - (1.0 / (2.0 * PI)).sqrt()).abs() < 1e-15);
        assert!((f00 - 0.398_942).abs() < 1e-6);
        assert!((rsh_norm(1, 0).unwrap() - (3.0 / (2.0 * PI)).sqrt()).abs() < 1e-15);
        assert!((rsh_norm(1, 1).unwrap() - (3.0 / (4.0 * PI)).sqrt()).abs() < 1e-15);
        assert!((rsh_norm(1, 1).unwrap() - 0.488_603).abs() < 1e-6);
        assert!(rsh_norm(2, 3).is_err());
    }

    #[test]
    fn norm_matches_factorials_up_to_cap() {
        fn fact(n: u32) -> f64 {
            (1..=n).map(f64::from).product()
        }
        for l in 0..=MAX_DEGREE {
            for m in 0..=l {
                let direct = ((2 * l + 1) as f64 / (2.0 * PI) * fact(l - m) / fact(l + m)).sqrt();
                let v = rsh_norm(l, m).unwrap();
                assert!(((v - direct) / direct).abs() < 1e-13, "l={l} m={m}");
            }
        }
    }

    #[test]
    fn rsh_examples() {
        let y00 = 1.0 / (2.0 * PI.sqrt());
        for (t, p) in [(0.1, 0.2), (2.0, 5.0), (PI, 0.0)] {
            let c = SphericalCoord::new(t, p).unwrap();
            assert!((rsh(0, 0, c).unwrap() - y00).abs() < 1e-15);
        }
        let pole = SphericalCoord::new(0.0, 0.0).unwrap();
        assert!((rsh(1, 0, pole).unwrap() - (3.0 / (4.0 * PI)).sqrt()).abs() < 1e-15);
        let c = SphericalCoord::new(1.1, 0.0).unwrap();
        for l in 1..=5 {
            for m in 1..=l as i32 {
                assert_eq!(rsh(l, -m, c).unwrap(), 0.0);
            }
        }
        assert!(rsh(1, 2, c).is_err());
    }

    #[test]
    fn rsh_is_bounded_by_norm_times_legendre_max() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for l in 0..=4u32 {
            for m in -(l as i32)..=(l as i32) {
                let am = m.unsigned_abs();
                let pmax = (0..=2000)
                    .map(|k| legendre_unchecked(l, am, -1.0 + k as f64 / 1000.0).abs())
                    .fold(0.0, f64::max);
                let bound = norm_unchecked(l, am) * pmax * 1.01;
                for _ in 0..200 {
                    let c = SphericalCoord::new(rng.gen_range(0.0..=PI), rng.gen_range(0.0..TAU)).unwrap();
                    assert!(rsh(l, m, c).unwrap().abs() <= bound);
                }
            }
        }
    }

    #[test]
    fn degree_channels() {
        assert_eq!(ShDegree::new(3).unwrap().channels(), 16);
        assert_eq!(ShDegree::default().get(), 3);
        assert_eq!(ShDegree::from_channels(16), Some(ShDegree::new(3).unwrap()));
        assert_eq!(ShDegree::from_channels(15), None);
        assert!(ShDegree::new(13).is_err());
    }

    #[test]
    fn sh_map_matches_pointwise_rsh() {
        let m = sh_map(8, 16, ShDegree::new(3).unwrap()).unwrap();
        assert_eq!(m.channels(), 16);
        for j in 0..8 {
            for i in 0..16 {
                let c = erp_to_sphere(i, j, 16, 8).unwrap();
                for l in 0..=3 {
                    for mm in -(l as i32)..=(l as i32) {
                        let want = rsh(l, mm, c).unwrap();
                        let got = m.at(i, j)[channel_index(l, mm)];
                        assert!((want - got).abs() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn degree_zero_map_is_constant() {
        let m = sh_map(4, 8, ShDegree::new(0).unwrap()).unwrap();
        let y00 = 1.0 / (2.0 * PI.sqrt());
        assert!(m.data().iter().all(|v| (v - y00).abs() < 1e-15));
    }

    #[test]
    fn sh_map_is_pure_and_checks_dims() {
        let d = ShDegree::default();
        assert_eq!(sh_map(16, 32, d).unwrap(), sh_map(16, 32, d).unwrap());
        assert!(sh_map(16, 30, d).is_err());
    }

    #[test]
    fn pole_values() {
        let s = SphericalCoord::new(0.0, 0.0).unwrap();
        for l in 0..=6u32 {
            for m in -(l as i32)..=(l as i32) {
                let a = rsh(l, m, s).unwrap();
                let b = rsh(l, m, SphericalCoord::new(0.0, 2.3).unwrap()).unwrap();
                if m == 0 {
                    assert!((a - b).abs() < 1e-14);
                } else {
                    assert!(a.abs() < 1e-14 && b.abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn binary_export_layout() {
        let m = sh_map(2, 4, ShDegree::new(1).unwrap()).unwrap();
        let mut buf = Vec::new();
        m.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"SHMP");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 4);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 4);
        assert_eq!(buf.len(), 16 + 2 * 4 * 4 * 4);
        let first = f32::from_le_bytes(buf[16..20].try_into().unwrap());
        assert_eq!(first, m.data()[0] as f32);
        // pixel (1, 0), channel 2 sits at index (0*4 + 1)*4 + 2
        let k = 16 + 4 * 6;
        assert_eq!(f32::from_le_bytes(buf[k..k + 4].try_into().unwrap()), m.at(1, 0)[2] as f32);
    }
}
