//! Equirectangular rasters and per-pixel masks, plus their PNG codecs.
//!
//! An [`ErpImage`] stores interleaved RGB samples in row-major order with
//! width = 2 × height. Samples are `f64` in `[0, 1]`; PNG load maps 8-bit
//! values linearly onto that range and save rounds half up.

use std::path::Path;

use crate::error::{Error, Result};

/// An RGB triple in `[0, 1]`.
pub type Rgb = [f64; 3];

#[derive(Clone, Debug, PartialEq)]
pub struct ErpImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

fn check_erp_dims(height: usize, width: usize) -> Result<()> {
    if height == 0 {
        return Err(Error::arg("raster height must be positive"));
    }
    if width != 2 * height {
        return Err(Error::arg(format!(
            "equirectangular raster must have width = 2 x height, got {width}x{height}"
        )));
    }
    Ok(())
}

impl ErpImage {
    /// Wraps interleaved RGB data. Fails unless width = 2 × height and every
    /// sample is finite and inside `[0, 1]`.
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_erp_dims(height, width)?;
        if data.len() != height * width * 3 {
            return Err(Error::arg(format!(
                "expected {} samples for {width}x{height} RGB, got {}",
                height * width * 3,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::data(format!("sample {bad} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, rgb: Rgb) -> Result<Self> {
        Self::from_fn(height, width, |_, _| rgb)
    }

    /// Builds an image by evaluating `f(col, row)` at every pixel. Values are
    /// clamped into `[0, 1]`; non-finite values are rejected.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> Rgb) -> Result<Self> {
        check_erp_dims(height, width)?;
        let mut data = Vec::with_capacity(height * width * 3);
        for j in 0..height {
            for i in 0..width {
                for v in f(i, j) {
                    if !v.is_finite() {
                        return Err(Error::data(format!("non-finite sample at ({i}, {j})")));
                    }
                    data.push(v.clamp(0.0, 1.0));
                }
            }
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Like [`ErpImage::new`] but clamps out-of-range samples instead of failing.
    pub(crate) fn from_clamped(height: usize, width: usize, mut data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width * 3);
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, i: usize, j: usize) -> Rgb {
        let o = (j * self.width + i) * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, i: usize, j: usize, rgb: Rgb) {
        let o = (j * self.width + i) * 3;
        for (c, v) in rgb.into_iter().enumerate() {
            self.data[o + c] = v.clamp(0.0, 1.0);
        }
    }

    /// One colour channel as a row-major plane.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(3).copied().collect()
    }

    /// Per-pixel mean of the three channels.
    pub fn luma(&self) -> Vec<f64> {
        self.data
            .chunks_exact(3)
            .map(|p| (p[0] + p[1] + p[2]) / 3.0)
            .collect()
    }

    pub fn same_dims(&self, other: &ErpImage) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })?
            .to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let data = img.into_raw().into_iter().map(|b| f64::from(b) / 255.0).collect();
        Self::new(h, w, data)
    }

    /// 8-bit RGB bytes, rounding half up.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize_u8(v)).collect()
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        image::save_buffer(
            path,
            &self.to_rgb8(),
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::Rgb8,
        )
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[inline]
pub(crate) fn quantize_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Per-pixel viewport mask; `true` marks a given (visible) pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskMap {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl MaskMap {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        check_erp_dims(height, width)?;
        if data.len() != height * width {
            return Err(Error::arg(format!(
                "expected {} mask entries, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        check_erp_dims(height, width)?;
        let mut data = Vec::with_capacity(height * width);
        for j in 0..height {
            for i in 0..width {
                data.push(f(i, j));
            }
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, given: bool) -> Result<Self> {
        Self::from_fn(height, width, |_, _| given)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[j * self.width + i]
    }

    pub fn count_given(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn matches(&self, image: &ErpImage) -> bool {
        self.height == image.height() && self.width == image.width()
    }

    /// Nearest-neighbour 2x enlargement, used to lift a working-resolution
    /// mask onto the refinement resolution.
    pub fn upscale2x(&self) -> MaskMap {
        let (h, w) = (self.height * 2, self.width * 2);
        let mut data = Vec::with_capacity(h * w);
        for j in 0..h {
            for i in 0..w {
                data.push(self.get(i / 2, j / 2));
            }
        }
        MaskMap {
            height: h,
            width: w,
            data,
        }
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })?
            .to_luma8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let data = img.into_raw().into_iter().map(|b| b >= 128).collect();
        Self::new(h, w, data)
    }

    /// Single-channel PNG: 255 = given, 0 = masked.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes: Vec<u8> = self.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
        image::save_buffer(
            path,
            &bytes,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::L8,
        )
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}
