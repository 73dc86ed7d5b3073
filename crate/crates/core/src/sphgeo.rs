//! Spherical geometry for equirectangular rasters: pixel/sphere mapping,
//! cubemap faces and tangent-plane viewport masks.
//!
//! Directions use `x = sin θ cos φ`, `y = sin θ sin φ`, `z = cos θ`, with θ
//! measured from the zenith. The front face looks along `+x` (φ = 0), the
//! right face along `+y`, and the ceiling along `+z`.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ErpImage, MaskMap, Rgb};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphericalCoord {
    theta: f64,
    phi: f64,
}

impl SphericalCoord {
    /// `theta` must lie in `[0, π]`; `phi` is wrapped into `[0, 2π)`.
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        if !theta.is_finite() || !phi.is_finite() || !(0.0..=PI).contains(&theta) {
            return Err(Error::arg(format!("invalid spherical coordinate ({theta}, {phi})")));
        }
        let mut phi = phi.rem_euclid(TAU);
        if phi >= TAU {
            phi = 0.0;
        }
        Ok(Self { theta, phi })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn to_unit(&self) -> [f64; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [st * cp, st * sp, ct]
    }

    pub fn from_unit(d: [f64; 3]) -> Self {
        let r = norm(d);
        let z = (d[2] / r).clamp(-1.0, 1.0);
        let theta = z.acos();
        let mut phi = d[1].atan2(d[0]).rem_euclid(TAU);
        if phi >= TAU {
            phi = 0.0;
        }
        Self { theta, phi }
    }
}

#[inline]
fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// Center of pixel `(i, j)` on the sphere: θ = π(j + ½)/N, φ = 2π(i + ½)/M.
pub fn erp_to_sphere(i: usize, j: usize, width: usize, height: usize) -> Result<SphericalCoord> {
    if i >= width || j >= height {
        return Err(Error::Index {
            i,
            j,
            width,
            height,
        });
    }
    Ok(pixel_center(i, j, width, height))
}

#[inline]
pub(crate) fn pixel_center(i: usize, j: usize, width: usize, height: usize) -> SphericalCoord {
    SphericalCoord {
        theta: PI * (j as f64 + 0.5) / height as f64,
        phi: TAU * (i as f64 + 0.5) / width as f64,
    }
}

/// Polar angle of row `j`'s pixel centers.
#[inline]
pub fn row_theta(j: usize, height: usize) -> f64 {
    PI * (j as f64 + 0.5) / height as f64
}

/// The six cubemap faces, in tie-break priority order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CubeFace {
    Front,
    Right,
    Back,
    Left,
    Ceil,
    Floor,
}

impl CubeFace {
    pub const ALL: [CubeFace; 6] = [
        CubeFace::Front,
        CubeFace::Right,
        CubeFace::Back,
        CubeFace::Left,
        CubeFace::Ceil,
        CubeFace::Floor,
    ];

    /// (forward, right, up) orthonormal frame of the face.
    fn frame(self) -> [[f64; 3]; 3] {
        match self {
            CubeFace::Front => [[1., 0., 0.], [0., 1., 0.], [0., 0., 1.]],
            CubeFace::Right => [[0., 1., 0.], [-1., 0., 0.], [0., 0., 1.]],
            CubeFace::Back => [[-1., 0., 0.], [0., -1., 0.], [0., 0., 1.]],
            CubeFace::Left => [[0., -1., 0.], [1., 0., 0.], [0., 0., 1.]],
            CubeFace::Ceil => [[0., 0., 1.], [0., 1., 0.], [-1., 0., 0.]],
            CubeFace::Floor => [[0., 0., -1.], [0., 1., 0.], [1., 0., 0.]],
        }
    }

    pub fn axis(self) -> [f64; 3] {
        self.frame()[0]
    }

    /// The sphere point the face looks at.
    pub fn center(self) -> SphericalCoord {
        SphericalCoord::from_unit(self.axis())
    }

    pub fn name(self) -> &'static str {
        match self {
            CubeFace::Front => "front",
            CubeFace::Right => "right",
            CubeFace::Back => "back",
            CubeFace::Left => "left",
            CubeFace::Ceil => "ceil",
            CubeFace::Floor => "floor",
        }
    }
}

impl fmt::Display for CubeFace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CubeFace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CubeFace::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::arg(format!("unknown cube face {s:?}")))
    }
}

/// Face owning direction `d`: largest absolute component wins, exact ties go
/// to the face earliest in [`CubeFace::ALL`].
pub fn dominant_face(d: [f64; 3]) -> CubeFace {
    let candidates = [
        (if d[0] >= 0.0 { CubeFace::Front } else { CubeFace::Back }, d[0].abs()),
        (if d[1] >= 0.0 { CubeFace::Right } else { CubeFace::Left }, d[1].abs()),
        (if d[2] >= 0.0 { CubeFace::Ceil } else { CubeFace::Floor }, d[2].abs()),
    ];
    let mut best = candidates[0];
    for c in &candidates[1..] {
        if c.1 > best.1 || (c.1 == best.1 && c.0 < best.0) {
            best = *c;
        }
    }
    best.0
}

/// Gnomonic coordinates of a direction on its dominant cube face.
pub fn sphere_to_cube(coord: SphericalCoord) -> (CubeFace, f64, f64) {
    let d = coord.to_unit();
    let face = dominant_face(d);
    let [fwd, right, up] = face.frame();
    let depth = dot(d, fwd);
    (face, dot(d, right) / depth, dot(d, up) / depth)
}

/// Inverse of [`sphere_to_cube`].
pub fn cube_to_sphere(face: CubeFace, u: f64, v: f64) -> SphericalCoord {
    let [fwd, right, up] = face.frame();
    let d = [
        fwd[0] + u * right[0] + v * up[0],
        fwd[1] + u * right[1] + v * up[1],
        fwd[2] + u * right[2] + v * up[2],
    ];
    SphericalCoord::from_unit(d)
}

/// Pixels whose center direction lands on `face`.
pub fn cube_face_mask(face: CubeFace, height: usize, width: usize) -> Result<MaskMap> {
    MaskMap::from_fn(height, width, |i, j| {
        dominant_face(pixel_center(i, j, width, height).to_unit()) == face
    })
}

/// Pixels inside a rectangular field of view on the plane tangent to the
/// sphere at `center`. The plane's horizontal axis points east (increasing φ)
/// and its vertical axis toward the zenith; at the poles the frame is
/// continued from φ of `center`.
pub fn tangent_mask(
    center: SphericalCoord,
    fov_x: f64,
    fov_y: f64,
    height: usize,
    width: usize,
) -> Result<MaskMap> {
    for fov in [fov_x, fov_y] {
        if !(fov > 0.0 && fov < PI) {
            return Err(Error::arg(format!("field of view {fov} outside (0, pi)")));
        }
    }
    let fwd = center.to_unit();
    let (st, ct) = center.theta.sin_cos();
    let (sp, cp) = center.phi.sin_cos();
    let east = [-sp, cp, 0.0];
    let north = [-ct * cp, -ct * sp, st];
    let (half_x, half_y) = ((fov_x / 2.0).tan(), (fov_y / 2.0).tan());
    MaskMap::from_fn(height, width, |i, j| {
        let d = pixel_center(i, j, width, height).to_unit();
        let depth = dot(d, fwd);
        depth > 0.0
            && (dot(d, east) / depth).abs() <= half_x
            && (dot(d, north) / depth).abs() <= half_y
    })
}

/// A viewpoint from which the given region of a panorama is observed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViewSpec {
    CubeFace {
        face: CubeFace,
    },
    Tangent {
        center: SphericalCoord,
        fov_x: f64,
        fov_y: f64,
    },
}

impl ViewSpec {
    /// 120° × 120° tangent viewport centered on `center`.
    pub fn tangent_120(center: SphericalCoord) -> Self {
        let fov = 120f64.to_radians();
        ViewSpec::Tangent {
            center,
            fov_x: fov,
            fov_y: fov,
        }
    }

    pub fn mask(&self, height: usize, width: usize) -> Result<MaskMap> {
        match *self {
            ViewSpec::CubeFace { face } => cube_face_mask(face, height, width),
            ViewSpec::Tangent {
                center,
                fov_x,
                fov_y,
            } => tangent_mask(center, fov_x, fov_y, height, width),
        }
    }
}

/// `front`, `back`, ... for cube faces, or
/// `tangent:<theta°>,<phi°>[,<fov_x°>[,<fov_y°>]]` (field of view defaults
/// to 120°).
impl FromStr for ViewSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let Some(rest) = s.strip_prefix("tangent:") else {
            return Ok(ViewSpec::CubeFace { face: s.parse()? });
        };
        let nums = rest
            .split(',')
            .map(|t| t.trim().parse::<f64>().map(f64::to_radians))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::arg(format!("bad tangent view {s:?}: {e}")))?;
        let (theta, phi) = match nums[..] {
            [t, p, ..] if nums.len() <= 4 => (t, p),
            _ => return Err(Error::arg(format!("bad tangent view {s:?}"))),
        };
        let fov_x = nums.get(2).copied().unwrap_or(120f64.to_radians());
        let fov_y = nums.get(3).copied().unwrap_or(fov_x);
        if !(fov_x > 0.0 && fov_x < PI && fov_y > 0.0 && fov_y < PI) {
            return Err(Error::arg(format!("tangent field of view must lie in (0°, 180°): {s:?}")));
        }
        Ok(ViewSpec::Tangent {
            center: SphericalCoord::new(theta, phi)?,
            fov_x,
            fov_y,
        })
    }
}

impl Default for ViewSpec {
    fn default() -> Self {
        ViewSpec::CubeFace {
            face: CubeFace::Front,
        }
    }
}

/// Keeps given pixels and paints the rest with `fill`.
pub fn apply_mask(image: &ErpImage, mask: &MaskMap, fill: Rgb) -> Result<ErpImage> {
    if !mask.matches(image) {
        return Err(Error::arg(format!(
            "mask {}x{} does not match image {}x{}",
            mask.width(),
            mask.height(),
            image.width(),
            image.height()
        )));
    }
    let fill = fill.map(|v| v.clamp(0.0, 1.0));
    let mut data = image.data().to_vec();
    for (px, &given) in data.chunks_exact_mut(3).zip(mask.data()) {
        if !given {
            px.copy_from_slice(&fill);
        }
    }
    Ok(ErpImage::from_clamped(image.height(), image.width(), data))
}

/// Circular shift of columns: output column `(i + shift) mod M` holds input column `i`.
pub fn rotate_yaw(image: &ErpImage, shift: i64) -> ErpImage {
    let (h, w) = (image.height(), image.width());
    let s = shift.rem_euclid(w as i64) as usize;
    let mut data = vec![0.0; image.data().len()];
    let src = image.data();
    for j in 0..h {
        let row = j * w * 3;
        for i in 0..w {
            let d = row + ((i + s) % w) * 3;
            let o = row + i * 3;
            data[d..d + 3].copy_from_slice(&src[o..o + 3]);
        }
    }
    ErpImage::from_clamped(h, w, data)
}
