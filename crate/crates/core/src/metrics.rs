//! PSNR and weighted-to-spherically-uniform PSNR for ERP panoramas.
//!
//! Both metrics assume a peak of 1.0 unless told otherwise and report a
//! capped [`PSNR_CAP_DB`] when the two images are identical.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::ErpImage;

/// Reported for zero error.
pub const PSNR_CAP_DB: f64 = 99.0;

/// Row weights `w(j) = cos((j + 0.5 − N/2)·π/N)`; every column of a row shares its weight.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMap {
    height: usize,
    width: usize,
    rows: Vec<f64>,
}

impl WeightMap {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row_weights(&self) -> &[f64] {
        &self.rows
    }

    #[inline]
    pub fn get(&self, _i: usize, j: usize) -> f64 {
        self.rows[j]
    }

    /// Sum of the weights over every pixel.
    pub fn total(&self) -> f64 {
        self.rows.iter().sum::<f64>() * self.width as f64
    }
}

pub fn ws_weight_map(height: usize, width: usize) -> Result<WeightMap> {
    if height == 0 || width != 2 * height {
        return Err(Error::arg(format!(
            "WS-PSNR weights need width = 2 x height, got {width}x{height}"
        )));
    }
    let n = height as f64;
    let rows = (0..height)
        .map(|j| ((j as f64 + 0.5 - n / 2.0) * PI / n).cos())
        .collect();
    Ok(WeightMap {
        height,
        width,
        rows,
    })
}

fn check_pair(a: &ErpImage, b: &ErpImage) -> Result<()> {
    if !a.same_dims(b) {
        return Err(Error::arg(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB)
    }
}

/// Weighted mean squared error over all pixels and channels.
pub fn weighted_mse(a: &ErpImage, b: &ErpImage) -> Result<f64> {
    check_pair(a, b)?;
    let weights = ws_weight_map(a.height(), a.width())?;
    let row_len = a.width() * 3;
    let mut num = 0.0;
    for (j, (ra, rb)) in a
        .data()
        .chunks_exact(row_len)
        .zip(b.data().chunks_exact(row_len))
        .enumerate()
    {
        let sq: f64 = ra.iter().zip(rb).map(|(x, y)| (x - y) * (x - y)).sum();
        num += weights.rows[j] * sq;
    }
    Ok(num / (weights.total() * 3.0))
}

pub fn mse(a: &ErpImage, b: &ErpImage) -> Result<f64> {
    check_pair(a, b)?;
    let sq: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sq / a.data().len() as f64)
}

pub fn ws_psnr(a: &ErpImage, b: &ErpImage) -> Result<f64> {
    ws_psnr_with_peak(a, b, 1.0)
}

/// WS-PSNR with an explicit peak; `255.0` gives 8-bit-scale parity when the
/// images hold 8-bit values.
pub fn ws_psnr_with_peak(a: &ErpImage, b: &ErpImage, peak: f64) -> Result<f64> {
    Ok(psnr_from_mse(weighted_mse(a, b)?, peak))
}

pub fn psnr(a: &ErpImage, b: &ErpImage) -> Result<f64> {
    psnr_with_peak(a, b, 1.0)
}

pub fn psnr_with_peak(a: &ErpImage, b: &ErpImage, peak: f64) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?, peak))
}

/// Appends `(run_id, image_id, metric, value)` rows to a CSV file, writing
/// the header when the file is new.
pub fn append_metrics_csv(
    path: impl AsRef<Path>,
    run_id: &str,
    rows: &[(String, String, f64)],
) -> Result<()> {
    let path = path.as_ref();
    let fresh = !path.exists();
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut out = String::new();
    if fresh {
        out.push_str("run_id,image_id,metric,value\n");
    }
    for (image_id, metric, value) in rows {
        out.push_str(&format!("{run_id},{image_id},{metric},{value}\n"));
    }
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
