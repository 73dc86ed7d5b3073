use std::path::Path;

use crate::error::{Error, Result};

/// Continuous latent features: an `h × w` grid of `d`-dimensional cells.
///
/// Cells produced by the patch codec hold `3f²` pixel components followed by
/// `sh_channels` harmonic means.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureGrid {
    pub(crate) h: usize,
    pub(crate) w: usize,
    pub(crate) d: usize,
    pub(crate) patch: usize,
    pub(crate) sh_channels: usize,
    pub(crate) data: Vec<f64>,
}

impl FeatureGrid {
    /// Builds a grid from raw cells. `patch` is the scale factor the cells
    /// were encoded with and `sh_channels` the number of trailing harmonic
    /// components; `d` must be at least `3·patch² + sh_channels`.
    pub fn from_cells(
        h: usize,
        w: usize,
        d: usize,
        patch: usize,
        sh_channels: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if h == 0 || w == 0 || d == 0 {
            return Err(Error::arg("feature grid dimensions must be positive"));
        }
        if data.len() != h * w * d {
            return Err(Error::arg(format!(
                "feature grid {h}x{w}x{d} needs {} values, got {}",
                h * w * d,
                data.len()
            )));
        }
        if sh_channels > d {
            return Err(Error::arg("more harmonic channels than feature dimensions"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("feature grid holds non-finite values"));
        }
        Ok(Self {
            h,
            w,
            d,
            patch,
            sh_channels,
            data,
        })
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn patch(&self) -> usize {
        self.patch
    }

    pub fn sh_channels(&self) -> usize {
        self.sh_channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn cells(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    #[inline]
    pub fn cell(&self, r: usize, c: usize) -> &[f64] {
        let o = (r * self.w + c) * self.d;
        &self.data[o..o + self.d]
    }

    /// Trailing harmonic sub-vector of a cell.
    #[inline]
    pub fn sh_part(&self, r: usize, c: usize) -> &[f64] {
        &self.cell(r, c)[self.d - self.sh_channels..]
    }
}

/// An `h × w` grid of codebook indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CodeGrid {
    h: usize,
    w: usize,
    indices: Vec<u32>,
}

impl CodeGrid {
    pub fn new(h: usize, w: usize, indices: Vec<u32>) -> Result<Self> {
        if indices.len() != h * w {
            return Err(Error::arg(format!(
                "code grid {h}x{w} needs {} indices, got {}",
                h * w,
                indices.len()
            )));
        }
        Ok(Self { h, w, indices })
    }

    pub fn filled(h: usize, w: usize, index: u32) -> Self {
        Self {
            h,
            w,
            indices: vec![index; h * w],
        }
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u32 {
        self.indices[r * self.w + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: u32) {
        self.indices[r * self.w + c] = v;
    }

    pub fn max_index(&self) -> Option<u32> {
        self.indices.iter().copied().max()
    }

    /// Circular column shift: output column `(c + shift) mod w` holds input column `c`.
    pub fn rotate_columns(&self, shift: i64) -> CodeGrid {
        let s = shift.rem_euclid(self.w as i64) as usize;
        let mut out = self.clone();
        for r in 0..self.h {
            for c in 0..self.w {
                out.set(r, (c + s) % self.w, self.get(r, c));
            }
        }
        out
    }

    /// 16-bit grayscale PNG with one pixel per cell.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let px: Vec<u16> = self
            .indices
            .iter()
            .map(|&v| u16::try_from(v).unwrap_or(u16::MAX))
            .collect();
        let img = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(self.w as u32, self.h as u32, px)
            .ok_or_else(|| Error::arg("code grid buffer size mismatch"))?;
        img.save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })?
            .to_luma16();
        let (w, h) = (img.width() as usize, img.height() as usize);
        Self::new(h, w, img.into_raw().into_iter().map(u32::from).collect())
    }
}

/// Raster-order (row-major, top-left origin) serialization.
pub fn seq_encode(grid: &CodeGrid) -> Vec<u32> {
    grid.indices.clone()
}

pub fn seq_decode(seq: &[u32], h: usize, w: usize) -> Result<CodeGrid> {
    CodeGrid::new(h, w, seq.to_vec())
}
