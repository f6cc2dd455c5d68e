//! Deterministic pose and scale decoding.
//!
//! Translation and scale are regressed as residuals on top of priors (the
//! centroid of the sampled points and the per-category mean box). Rotation is
//! predicted as two axes with confidences; [`orthogonalize_axes`] closes the
//! gap between them by rotating both inside their common plane, the more
//! confident axis moving less.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::camera::Intrinsics;
use crate::error::{Error, Result};
use crate::features::GeneralizedPointCloud;
use crate::grid::depth_is_valid;
use crate::pose::{Category, Mat3, Pose, Rotation, Scale, Vec3};

/// Mean of the backprojected sample points, summed in row order.
pub fn translation_prior(cloud: &GeneralizedPointCloud, k: &Intrinsics) -> Result<Vec3> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mut sum = Vec3::zeros();
    for (i, px) in cloud.pixels.iter().enumerate() {
        let d = cloud.depth(i);
        if !depth_is_valid(d) {
            return Err(Error::NonPositiveDepth(d));
        }
        sum += k.unproject(px[0] as f64, px[1] as f64) * d;
    }
    Ok(sum / cloud.len() as f64)
}

pub fn apply_translation_residual(prior: &Vec3, residual: &Vec3) -> Vec3 {
    prior + residual
}

/// Two predicted axes with non-negative confidences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisPrediction {
    pub a_x: Vec3,
    pub c_x: f64,
    pub a_z: Vec3,
    pub c_z: f64,
}

impl AxisPrediction {
    /// Normalizes both axes. Confidences must be finite and `>= 0`.
    pub fn new(a_x: Vec3, c_x: f64, a_z: Vec3, c_z: f64) -> Result<Self> {
        let unit = |a: Vec3| {
            let n = a.norm();
            if n > 0.0 && n.is_finite() {
                Ok(a / n)
            } else {
                Err(Error::NonUnitAxis { norm: n })
            }
        };
        for c in [c_x, c_z] {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::Invalid(format!("confidence {c} must be finite and >= 0")));
            }
        }
        Ok(AxisPrediction {
            a_x: unit(a_x)?,
            c_x,
            a_z: unit(a_z)?,
            c_z,
        })
    }

    /// Confidences with the `0 / 0` case replaced by an even split.
    fn weights(&self) -> (f64, f64) {
        let total = self.c_x + self.c_z;
        if total > 0.0 {
            (self.c_x / total, self.c_z / total)
        } else {
            (0.5, 0.5)
        }
    }
}

/// Output of [`orthogonalize_axes`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrthogonalAxes {
    pub a_x: Vec3,
    pub a_z: Vec3,
    /// Signed rotation applied to `a_x` towards `a_z`, radians.
    pub theta_x: f64,
    /// Signed rotation applied to `a_z` towards `a_x`, radians.
    pub theta_z: f64,
}

impl OrthogonalAxes {
    pub fn rotation(&self) -> Result<Rotation> {
        crate::pose::rotation_from_axes(&self.a_x, &self.a_z)
    }
}

/// Rotates the predicted axes inside their common plane until they are
/// perpendicular.
///
/// With `theta` the angle between the axes and `delta = theta - pi/2`,
/// `a_z` turns towards `a_x` by `theta_z = c_x / (c_x + c_z) * delta` and
/// `a_x` turns towards `a_z` by `theta_x = c_z / (c_x + c_z) * delta`
/// (negative values turn them apart). `c_x = c_z = 0` splits evenly.
pub fn orthogonalize_axes(pred: &AxisPrediction) -> Result<OrthogonalAxes> {
    let dot = pred.a_x.dot(&pred.a_z);
    if dot.abs() >= 1.0 - 1e-9 {
        return Err(Error::DegenerateAxes);
    }
    // In-plane orthonormal basis with e1 = a_x and a_z at angle theta.
    let e1 = pred.a_x;
    let perp = pred.a_z - e1 * dot;
    let e2 = perp / perp.norm();
    let theta = perp.norm().atan2(dot);

    let (w_x, w_z) = pred.weights();
    let delta = theta - FRAC_PI_2;
    let theta_z = w_x * delta;
    let theta_x = w_z * delta;

    let at = |angle: f64| e1 * angle.cos() + e2 * angle.sin();
    Ok(OrthogonalAxes {
        a_x: at(theta_x),
        a_z: at(theta - theta_z),
        theta_x,
        theta_z,
    })
}

/// Per-category mean box extents.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryPriors(pub BTreeMap<Category, Scale>);

impl CategoryPriors {
    pub fn get(&self, c: Category) -> Result<&Scale> {
        self.0
            .get(&c)
            .ok_or_else(|| Error::Invalid(format!("no scale prior for category {c}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::SchemaMismatch(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("priors serialize")
    }
}

/// `prior + residual`, rejected unless every component stays positive.
pub fn apply_scale_residual(priors: &CategoryPriors, category: Category, residual: &Vec3) -> Result<Scale> {
    Scale::new(priors.get(category)?.extents() + residual)
}

/// Similarity transform `target ~ scale * R * source + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub pose: Pose,
    pub scale: f64,
}

impl Similarity {
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.pose.rotation.apply(p) * self.scale + self.pose.translation
    }
}

/// Least-squares similarity between corresponding point sets (Umeyama).
///
/// Reflections are corrected so the rotation is proper.
pub fn umeyama_fit(source: &[Vec3], target: &[Vec3]) -> Result<Similarity> {
    if source.len() != target.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} source vs {} target points",
            source.len(),
            target.len()
        )));
    }
    let m = source.len();
    if m < 3 {
        return Err(Error::DegenerateConfiguration("need at least 3 correspondences"));
    }
    let inv = 1.0 / m as f64;
    let mu_s = source.iter().sum::<Vec3>() * inv;
    let mu_t = target.iter().sum::<Vec3>() * inv;

    let mut cov_s = Mat3::zeros();
    let mut cross = Mat3::zeros();
    for (s, t) in source.iter().zip(target) {
        let ds = s - mu_s;
        let dt = t - mu_t;
        cov_s += ds * ds.transpose();
        cross += dt * ds.transpose();
    }
    cov_s *= inv;
    cross *= inv;
    let var_s = cov_s.trace();

    let mut eig = SymmetricEigen::new(cov_s).eigenvalues.as_slice().to_vec();
    eig.sort_by(|a, b| b.total_cmp(a));
    if !(var_s > 0.0) || eig[1] <= 1e-12 * eig[0] {
        return Err(Error::DegenerateConfiguration("source points are collinear"));
    }

    let svd = cross.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let sv = svd.singular_values;
    if sv.iter().filter(|&&x| x > 1e-12 * sv.max()).count() < 2 {
        return Err(Error::DegenerateConfiguration("cross-covariance has rank < 2"));
    }
    // The reflection fix goes on the smallest singular direction.
    let weakest = sv.imin();
    let mut diag = Vec3::repeat(1.0);
    if u.determinant() * v_t.determinant() < 0.0 {
        diag[weakest] = -1.0;
    }
    let r = u * Matrix3::from_diagonal(&diag) * v_t;
    let scale = sv.dot(&diag) / var_s;
    let rotation = Rotation::from_matrix(r)?;
    let translation = mu_t - rotation.apply(&mu_s) * scale;
    Ok(Similarity {
        pose: Pose::new(rotation, translation)?,
        scale,
    })
}
