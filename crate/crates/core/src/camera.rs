//! Pinhole camera geometry: rays, backprojection and normals from depth.
//!
//! Pixel `(u, v)` refers to the image coordinate `u` (column) and `v` (row)
//! with no half-pixel offset: the principal point `(cx, cy)` maps to the
//! optical axis. Depth values are z-coordinates, not distances along the ray.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{depth_is_valid, DepthMap, NormalMap, RayMap};
use crate::pose::Vec3;

/// Pinhole intrinsics plus image size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IntrinsicsRepr", into = "IntrinsicsRepr")]
pub struct Intrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

#[derive(Serialize, Deserialize)]
struct IntrinsicsRepr {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let ok = fx > 0.0
            && fy > 0.0
            && fx.is_finite()
            && fy.is_finite()
            && cx > 0.0
            && cx < width as f64
            && cy > 0.0
            && cy < height as f64;
        if !ok {
            return Err(Error::Invalid(format!(
                "intrinsics fx={fx} fy={fy} cx={cx} cy={cy} for {width}x{height}"
            )));
        }
        Ok(Intrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }
    pub fn fy(&self) -> f64 {
        self.fy
    }
    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }

    /// `K^-1 [u, v, 1]^T`, unchecked.
    #[inline]
    pub fn unproject(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Pixel coordinates of a camera-frame point with `z > 0`.
    #[inline]
    pub fn project(&self, p: &Vec3) -> (f64, f64) {
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }

    fn check_bounds(&self, u: f64, v: f64) -> Result<()> {
        if self.contains(u, v) {
            Ok(())
        } else {
            Err(Error::OutOfBounds {
                u,
                v,
                width: self.width,
                height: self.height,
            })
        }
    }
}

impl TryFrom<IntrinsicsRepr> for Intrinsics {
    type Error = Error;
    fn try_from(r: IntrinsicsRepr) -> Result<Self> {
        Intrinsics::new(r.fx, r.fy, r.cx, r.cy, r.width, r.height)
    }
}

impl From<Intrinsics> for IntrinsicsRepr {
    fn from(k: Intrinsics) -> Self {
        IntrinsicsRepr {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: k.width,
            height: k.height,
        }
    }
}

/// How `K^-1 p` is normalized into a ray feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RayNormalization {
    /// Divide by the Euclidean norm (unit rays).
    #[default]
    Unit,
    /// Divide by the squared norm.
    SquaredNorm,
}

/// Unit direction from the camera center through pixel `(u, v)`.
pub fn ray_direction(k: &Intrinsics, u: f64, v: f64) -> Result<Vec3> {
    ray_direction_with(k, u, v, RayNormalization::Unit)
}

pub fn ray_direction_with(k: &Intrinsics, u: f64, v: f64, normalization: RayNormalization) -> Result<Vec3> {
    k.check_bounds(u, v)?;
    let p = k.unproject(u, v);
    Ok(match normalization {
        RayNormalization::Unit => p / p.norm(),
        RayNormalization::SquaredNorm => p / p.norm_squared(),
    })
}

/// Ray feature for every pixel of the image.
pub fn ray_map(k: &Intrinsics, normalization: RayNormalization) -> RayMap {
    RayMap::from_fn(k.width, k.height, |u, v| {
        let p = k.unproject(u as f64, v as f64);
        match normalization {
            RayNormalization::Unit => p / p.norm(),
            RayNormalization::SquaredNorm => p / p.norm_squared(),
        }
    })
}

/// Camera-frame point seen at pixel `(u, v)` with z-depth `depth`.
pub fn backproject(k: &Intrinsics, u: f64, v: f64, depth: f64) -> Result<Vec3> {
    if !(depth > 0.0) || !depth.is_finite() {
        return Err(Error::NonPositiveDepth(depth));
    }
    Ok(k.unproject(u, v) * depth)
}

/// Local geometry of the central-difference normal at one pixel, with the
/// derivative of the unit normal with respect to the four neighbour depths.
#[derive(Debug, Clone, Copy)]
pub(crate) struct NormalStencil {
    pub normal: Vec3,
    /// Flat indices of the right, left, down and up neighbours.
    pub neighbors: [usize; 4],
    /// `d normal / d depth[neighbor]` for each neighbour.
    pub jacobian: [Vec3; 4],
}

/// Central-difference normal at `(u, v)`, or `None` if the pixel or one of
/// its 4-neighbours has no valid depth, or the pixel is on the border.
pub(crate) fn normal_stencil(k: &Intrinsics, depth: &DepthMap, u: u32, v: u32) -> Option<NormalStencil> {
    let (w, h) = depth.dims();
    if u == 0 || v == 0 || u + 1 >= w || v + 1 >= h {
        return None;
    }
    if !depth_is_valid(*depth.get(u, v)) {
        return None;
    }
    let coords = [(u + 1, v), (u - 1, v), (u, v + 1), (u, v - 1)];
    let mut d = [0.0; 4];
    let mut q = [Vec3::zeros(); 4];
    for (i, &(uu, vv)) in coords.iter().enumerate() {
        d[i] = *depth.get(uu, vv);
        if !depth_is_valid(d[i]) {
            return None;
        }
        q[i] = k.unproject(uu as f64, vv as f64);
    }
    let t_u = q[0] * d[0] - q[1] * d[1];
    let t_v = q[2] * d[2] - q[3] * d[3];
    let m = t_u.cross(&t_v);
    let len = m.norm();
    if !(len > 0.0) || !len.is_finite() {
        return None;
    }
    let m_hat = m / len;
    let ray = k.unproject(u as f64, v as f64);
    let sign = if m_hat.dot(&ray) > 0.0 { -1.0 } else { 1.0 };
    let normal = m_hat * sign;

    // d(s m/|m|)/dm = s (I - m_hat m_hat^T) / |m|
    let project = |dm: Vec3| (dm - m_hat * m_hat.dot(&dm)) * (sign / len);
    let jacobian = [
        project(q[0].cross(&t_v)),
        project(-q[1].cross(&t_v)),
        project(t_u.cross(&q[2])),
        project(-t_u.cross(&q[3])),
    ];
    let neighbors = coords.map(|(uu, vv)| depth.index(uu, vv));
    Some(NormalStencil {
        normal,
        neighbors,
        jacobian,
    })
}

/// Surface normals from a depth map.
///
/// Each pixel backprojects its 4-neighbourhood, forms the tangents
/// `P(u+1,v) - P(u-1,v)` and `P(u,v+1) - P(u,v-1)`, and takes the normalized
/// cross product, flipped to face the camera. Border pixels and pixels with
/// any missing neighbour are `None`.
pub fn normals_from_depth(k: &Intrinsics, depth: &DepthMap) -> NormalMap {
    NormalMap::from_fn(depth.width(), depth.height(), |u, v| {
        normal_stencil(k, depth, u, v).map(|s| s.normal)
    })
}
