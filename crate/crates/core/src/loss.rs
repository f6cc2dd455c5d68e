//! Training losses with analytic gradients.
//!
//! Two groups live here. The dense first-stage losses compare depth maps and
//! normal maps pixel by pixel; the second-stage losses score one predicted
//! pose against its annotation and are combined by [`total_pose_loss`].
//!
//! All L1 terms use the subgradient `0` at ties.

use serde::{Deserialize, Serialize};

use crate::camera::{normal_stencil, Intrinsics};
use crate::error::{Error, Result};
use crate::grid::{depth_is_valid, DepthMap, Grid, Mask, NormalMap};
use crate::pose::{candidate_x_axes, Pose, Scale, Symmetry, Vec3};

/// Loss weights and constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Weight of the normal-consistency term of the depth loss.
    pub smooth: f64,
    pub scale: f64,
    pub translation: f64,
    pub rot_x: f64,
    pub rot_z: f64,
    pub angular: f64,
    pub conf_x: f64,
    pub conf_z: f64,
    /// Negative rate of the confidence target `exp(alpha * |a - a*|)`.
    pub alpha: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            smooth: 0.001,
            rot_x: 8e-4,
            rot_z: 8e-4,
            angular: 4e-4,
            translation: 8e-4,
            scale: 8e-4,
            conf_x: 1e-4,
            conf_z: 1e-4,
            alpha: -5.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            self.smooth,
            self.scale,
            self.translation,
            self.rot_x,
            self.rot_z,
            self.angular,
            self.conf_x,
            self.conf_z,
        ];
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::Invalid("loss weights must be finite and >= 0".into()));
        }
        if !(self.alpha < 0.0 && self.alpha.is_finite()) {
            return Err(Error::Invalid(format!("alpha must be negative, got {}", self.alpha)));
        }
        Ok(())
    }

    /// Every pose-loss weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        LossConfig {
            smooth: self.smooth,
            alpha: self.alpha,
            scale: self.scale * factor,
            translation: self.translation * factor,
            rot_x: self.rot_x * factor,
            rot_z: self.rot_z * factor,
            angular: self.angular * factor,
            conf_x: self.conf_x * factor,
            conf_z: self.conf_z * factor,
        }
    }
}

#[inline]
fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn sign_vec(v: &Vec3) -> Vec3 {
    v.map(sign0)
}

/// A scalar loss of one vector argument and its gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VecLoss {
    pub value: f64,
    pub grad: Vec3,
}

/// `|t - t*|_1`.
pub fn translation_loss(pred: &Vec3, gt: &Vec3) -> VecLoss {
    let d = pred - gt;
    VecLoss {
        value: d.abs().sum(),
        grad: sign_vec(&d),
    }
}

/// `|s - s*|_1`.
pub fn scale_loss(pred: &Vec3, gt: &Vec3) -> VecLoss {
    translation_loss(pred, gt)
}

/// `|a - a*|_1 + 1 - <a, a*>`.
pub fn axis_loss(pred: &Vec3, gt: &Vec3) -> VecLoss {
    let d = pred - gt;
    VecLoss {
        value: d.abs().sum() + 1.0 - pred.dot(gt),
        grad: sign_vec(&d) - gt,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularLoss {
    pub value: f64,
    pub grad_x: Vec3,
    pub grad_z: Vec3,
}

/// Signed `<a_x, a_z>`.
pub fn angular_loss(a_x: &Vec3, a_z: &Vec3) -> AngularLoss {
    AngularLoss {
        value: a_x.dot(a_z),
        grad_x: *a_z,
        grad_z: *a_x,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceLoss {
    pub value: f64,
    pub grad_confidence: Vec3Scalar,
    pub grad_axis: Vec3,
}

/// Plain scalar; named to read well in [`ConfidenceLoss`].
pub type Vec3Scalar = f64;

/// `|c - exp(alpha |a - a*|_2)|`.
pub fn confidence_loss(c: f64, pred: &Vec3, gt: &Vec3, alpha: f64) -> ConfidenceLoss {
    let diff = pred - gt;
    let dist = diff.norm();
    let target = (alpha * dist).exp();
    let r = c - target;
    let s = sign0(r);
    let grad_axis = if dist > 0.0 {
        diff * (-s * alpha * target / dist)
    } else {
        Vec3::zeros()
    };
    ConfidenceLoss {
        value: r.abs(),
        grad_confidence: s,
        grad_axis,
    }
}

/// Raw second-stage outputs for one instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosePrediction {
    pub translation: Vec3,
    pub a_x: Vec3,
    pub c_x: f64,
    pub a_z: Vec3,
    pub c_z: f64,
    pub scale: Vec3,
}

/// Gradient of a scalar loss with respect to every field of a
/// [`PosePrediction`].
pub type PoseGradient = PosePrediction;

impl PosePrediction {
    pub fn zeros() -> Self {
        PosePrediction {
            translation: Vec3::zeros(),
            a_x: Vec3::zeros(),
            c_x: 0.0,
            a_z: Vec3::zeros(),
            c_z: 0.0,
            scale: Vec3::zeros(),
        }
    }

    /// Prediction that reproduces `target` exactly with confidence 1.
    pub fn perfect(target: &PoseTarget) -> Self {
        PosePrediction {
            translation: target.pose.translation,
            a_x: target.pose.rotation.x_axis(),
            c_x: 1.0,
            a_z: target.pose.rotation.z_axis(),
            c_z: 1.0,
            scale: *target.scale.extents(),
        }
    }

    /// Flattened `[t(3), a_x(3), c_x, a_z(3), c_z, s(3)]`.
    pub fn to_array(&self) -> [f64; 14] {
        let mut out = [0.0; 14];
        out[0..3].copy_from_slice(self.translation.as_slice());
        out[3..6].copy_from_slice(self.a_x.as_slice());
        out[6] = self.c_x;
        out[7..10].copy_from_slice(self.a_z.as_slice());
        out[10] = self.c_z;
        out[11..14].copy_from_slice(self.scale.as_slice());
        out
    }

    pub fn from_array(a: &[f64; 14]) -> Self {
        PosePrediction {
            translation: Vec3::new(a[0], a[1], a[2]),
            a_x: Vec3::new(a[3], a[4], a[5]),
            c_x: a[6],
            a_z: Vec3::new(a[7], a[8], a[9]),
            c_z: a[10],
            scale: Vec3::new(a[11], a[12], a[13]),
        }
    }
}

/// Annotated pose and box of one instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseTarget {
    pub pose: Pose,
    pub scale: Scale,
}

/// Individual loss values. Dense terms are `None` when not evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossTerms {
    pub depth: Option<f64>,
    pub smooth_normal: Option<f64>,
    pub translation: f64,
    pub rot_x: f64,
    pub rot_z: f64,
    pub angular: f64,
    pub conf_x: f64,
    pub conf_z: f64,
    pub scale: f64,
}

impl LossTerms {
    /// Weighted pose loss.
    pub fn weighted(&self, cfg: &LossConfig) -> f64 {
        cfg.scale * self.scale
            + cfg.translation * self.translation
            + cfg.rot_x * self.rot_x
            + cfg.rot_z * self.rot_z
            + cfg.angular * self.angular
            + cfg.conf_x * self.conf_x
            + cfg.conf_z * self.conf_z
    }
}

/// Output of [`total_pose_loss`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub terms: LossTerms,
    pub total: f64,
    /// Index into the planar candidate list that won the x-axis minimum.
    pub x_candidate: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gradient: Option<PoseGradient>,
}

/// Weighted pose loss with symmetry handling.
///
/// * `Axial`: the x-axis and its confidence are ignored (terms and gradients
///   are zero).
/// * `Planar`: the x-axis term is the minimum over the candidate x-axes; the
///   winning candidate also feeds the x confidence term.
/// * `None`: the annotated x-axis is used directly.
pub fn total_pose_loss(
    pred: &PosePrediction,
    target: &PoseTarget,
    symmetry: &Symmetry,
    cfg: &LossConfig,
) -> Result<LossReport> {
    cfg.validate()?;
    let rot = &target.pose.rotation;
    let gt_z = rot.z_axis();

    let t = translation_loss(&pred.translation, &target.pose.translation);
    let s = scale_loss(&pred.scale, target.scale.extents());
    let rz = axis_loss(&pred.a_z, &gt_z);
    let ang = angular_loss(&pred.a_x, &pred.a_z);
    let cz = confidence_loss(pred.c_z, &pred.a_z, &gt_z, cfg.alpha);

    let candidates = candidate_x_axes(symmetry, rot);
    let best = candidates.iter().map(|a| axis_loss(&pred.a_x, a)).enumerate().fold(
        None::<(usize, VecLoss)>,
        |best, (i, l)| match best {
            Some((_, b)) if b.value <= l.value => best,
            _ => Some((i, l)),
        },
    );

    let mut terms = LossTerms {
        translation: t.value,
        rot_z: rz.value,
        angular: ang.value,
        conf_z: cz.value,
        scale: s.value,
        ..Default::default()
    };
    let mut g = PoseGradient {
        translation: t.grad * cfg.translation,
        a_x: ang.grad_x * cfg.angular,
        c_x: 0.0,
        a_z: rz.grad * cfg.rot_z + ang.grad_z * cfg.angular + cz.grad_axis * cfg.conf_z,
        c_z: cz.grad_confidence * cfg.conf_z,
        scale: s.grad * cfg.scale,
    };
    let mut x_candidate = None;
    if let Some((i, rx)) = best {
        let cx = confidence_loss(pred.c_x, &pred.a_x, &candidates[i], cfg.alpha);
        terms.rot_x = rx.value;
        terms.conf_x = cx.value;
        g.a_x += rx.grad * cfg.rot_x + cx.grad_axis * cfg.conf_x;
        g.c_x = cx.grad_confidence * cfg.conf_x;
        if matches!(symmetry, Symmetry::Planar(_)) {
            x_candidate = Some(i);
        }
    }
    Ok(LossReport {
        total: terms.weighted(cfg),
        terms,
        x_candidate,
        gradient: Some(g),
    })
}

/// Depth-completion loss and its gradient with respect to the prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthLoss {
    pub total: f64,
    /// Mean squared depth error over the mask.
    pub depth: f64,
    /// Mean `1 - cos` between normals of prediction and ground truth.
    pub smooth_normal: f64,
    pub gradient: DepthMap,
}

/// `L_d + smooth * L_s` over the masked pixels.
///
/// `L_d` averages the squared error over masked pixels with valid ground
/// truth. `L_s` averages `1 - <N(pred), N(gt)>` over masked pixels where both
/// normals exist, `N` being [`normals_from_depth`](crate::camera::normals_from_depth);
/// its gradient flows through the central-difference stencil into the four
/// neighbour depths of each pixel.
pub fn depth_completion_loss(
    pred: &DepthMap,
    gt: &DepthMap,
    mask: &Mask,
    k: &Intrinsics,
    smooth: f64,
) -> Result<DepthLoss> {
    pred.check_dims(gt, "depth loss prediction vs ground truth")?;
    pred.check_dims(mask, "depth loss mask")?;
    let mut gradient = DepthMap::filled(pred.width(), pred.height(), 0.0);

    let data_px: Vec<usize> = (0..pred.len())
        .filter(|&i| mask.data()[i] && depth_is_valid(gt.data()[i]))
        .collect();
    if data_px.is_empty() {
        return Err(Error::EmptyMask);
    }
    let inv_d = 1.0 / data_px.len() as f64;
    let mut depth_term = 0.0;
    for &i in &data_px {
        let e = pred.data()[i] - gt.data()[i];
        depth_term += e * e;
        gradient.data_mut()[i] += 2.0 * e * inv_d;
    }
    depth_term *= inv_d;

    let mut stencils = Vec::new();
    for &i in &data_px {
        let (u, v) = pred.coords(i);
        if let (Some(p), Some(g)) = (normal_stencil(k, pred, u, v), normal_stencil(k, gt, u, v)) {
            stencils.push((p, g.normal));
        }
    }
    let mut smooth_term = 0.0;
    if !stencils.is_empty() {
        let inv_s = 1.0 / stencils.len() as f64;
        for (p, g) in &stencils {
            smooth_term += 1.0 - p.normal.dot(g);
            for (idx, jac) in p.neighbors.iter().zip(&p.jacobian) {
                gradient.data_mut()[*idx] -= smooth * jac.dot(g) * inv_s;
            }
        }
        smooth_term *= inv_s;
    }
    Ok(DepthLoss {
        total: depth_term + smooth * smooth_term,
        depth: depth_term,
        smooth_normal: smooth_term,
        gradient,
    })
}

/// Mean cosine deficit between normal maps and its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalLoss {
    pub value: f64,
    /// Zero outside the evaluated pixels.
    pub gradient: Grid<Vec3>,
}

/// `mean(1 - cos<pred, gt>)` over `region` pixels where both are defined.
///
/// The gradient at a unit prediction is `-(gt - pred <pred, gt>) / N`, the
/// tangential part of `-gt / N`.
pub fn normal_loss(pred: &NormalMap, gt: &NormalMap, region: &Mask) -> Result<NormalLoss> {
    pred.check_dims(gt, "normal loss prediction vs ground truth")?;
    pred.check_dims(region, "normal loss region")?;
    let pairs: Vec<(usize, Vec3, Vec3)> = (0..pred.len())
        .filter(|&i| region.data()[i])
        .filter_map(|i| Some((i, pred.data()[i]?, gt.data()[i]?)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let inv = 1.0 / pairs.len() as f64;
    let mut gradient = Grid::filled(pred.width(), pred.height(), Vec3::zeros());
    let mut value = 0.0;
    for (i, p, g) in pairs {
        let (pn, gn) = (p.norm(), g.norm());
        let (ph, gh) = (p / pn, g / gn);
        let cos = ph.dot(&gh);
        value += 1.0 - cos;
        gradient.data_mut()[i] = -(gh - ph * cos) * (inv / pn);
    }
    Ok(NormalLoss {
        value: value * inv,
        gradient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_gradient, relative_error};
    use crate::pose::Rotation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn unit(rng: &mut ChaCha8Rng) -> Vec3 {
        loop {
            let v = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            if v.norm() > 0.1 && v.norm() <= 1.0 {
                return v.normalize();
            }
        }
    }

    #[test]
    fn default_weights() {
        let c = LossConfig::default();
        let got = [c.rot_x, c.rot_z, c.angular, c.translation, c.scale, c.conf_x, c.conf_z];
        let expected = [8.0, 8.0, 4.0, 8.0, 8.0, 1.0, 1.0].map(|w| w * 1e-4);
        for (g, e) in got.iter().zip(expected) {
            assert!((g - e).abs() < 1e-18);
        }
        assert_eq!(c.smooth, 0.001);
        assert_eq!(c.alpha, -5.0);
        c.validate().unwrap();
        assert!(LossConfig {
            alpha: 0.5,
            ..c.clone()
        }
        .validate()
        .is_err());
        assert!(LossConfig { rot_x: -1.0, ..c }.validate().is_err());
    }

    #[test]
    fn translation_and_scale_examples() {
        let z = Vec3::new(0.3, 0.1, 1.0);
        assert_eq!(translation_loss(&z, &z).value, 0.0);
        let l = translation_loss(&(z + Vec3::new(0.01, -0.02, 0.03)), &z);
        assert!((l.value - 0.06).abs() < 1e-12);
        assert_eq!(l.grad, Vec3::new(1.0, -1.0, 1.0));
        let s = scale_loss(&Vec3::new(0.11, 0.11, 0.22), &Vec3::new(0.1, 0.1, 0.2));
        assert!((s.value - 0.04).abs() < 1e-12);
        assert_eq!(s.grad, Vec3::new(1.0, 1.0, 1.0));
        assert_eq!(translation_loss(&z, &z).grad, Vec3::zeros());
    }

    #[test]
    fn axis_examples() {
        assert_eq!(axis_loss(&Vec3::x(), &Vec3::x()).value, 0.0);
        // |(-1, 1, 0)|_1 + 1 - 0 = 3
        assert_eq!(axis_loss(&Vec3::y(), &Vec3::x()).value, 3.0);
    }

    #[test]
    fn angular_examples() {
        assert_eq!(angular_loss(&Vec3::x(), &Vec3::z()).value, 0.0);
        assert_eq!(angular_loss(&Vec3::x(), &Vec3::x()).value, 1.0);
        let a = 120f64.to_radians();
        let l = angular_loss(&Vec3::x(), &Vec3::new(a.cos(), a.sin(), 0.0));
        assert!((l.value + 0.5).abs() < 1e-12);
    }

    #[test]
    fn confidence_examples() {
        assert_eq!(confidence_loss(1.0, &Vec3::x(), &Vec3::x(), -5.0).value, 0.0);
        // |a - a*| = 0.2 exactly.
        let gt = Vec3::x();
        let pred = gt + Vec3::new(0.0, 0.2, 0.0);
        let l = confidence_loss(0.5, &pred, &gt, -5.0);
        let expected = (0.5 - (-1.0f64).exp()).abs();
        assert!((l.value - expected).abs() < 1e-15);
        assert!((l.value - 0.13212).abs() < 1e-5);
    }

    #[test]
    fn perfect_prediction_costs_nothing() {
        let pose = Pose::new(
            Rotation::about_axis(&Vec3::new(1.0, 2.0, 0.5), 0.8),
            Vec3::new(0.1, 0.0, 1.2),
        )
        .unwrap();
        let target = PoseTarget {
            pose,
            scale: Scale::new(Vec3::new(0.1, 0.1, 0.3)).unwrap(),
        };
        for sym in [Symmetry::None, Symmetry::Axial, Symmetry::half_turn()] {
            let r = total_pose_loss(&PosePrediction::perfect(&target), &target, &sym, &LossConfig::default()).unwrap();
            let t = r.terms;
            for v in [t.translation, t.rot_x, t.rot_z, t.conf_x, t.conf_z, t.scale] {
                assert!(v.abs() < 1e-12, "{sym:?} {t:?}");
            }
            assert!(t.angular.abs() < 1e-12);
            assert!(r.total.abs() < 1e-15);
        }
    }

    #[test]
    fn planar_minimum_picks_flipped_axis() {
        let pose = Pose::new(Rotation::about_z(0.3), Vec3::new(0.0, 0.0, 1.0)).unwrap();
        let target = PoseTarget {
            pose,
            scale: Scale::new(Vec3::new(0.2, 0.1, 0.1)).unwrap(),
        };
        let mut pred = PosePrediction::perfect(&target);
        pred.a_x = -pred.a_x;
        // Brute force both candidates by hand.
        let l0 = axis_loss(&pred.a_x, &pose.rotation.x_axis()).value;
        let l1 = axis_loss(&pred.a_x, &(-pose.rotation.x_axis())).value;
        assert!(l0 > 1.0 && l1.abs() < 1e-12);
        let r = total_pose_loss(&pred, &target, &Symmetry::half_turn(), &LossConfig::default()).unwrap();
        assert!(r.terms.rot_x.abs() < 1e-12);
        assert_eq!(r.x_candidate, Some(1));
        let r = total_pose_loss(&pred, &target, &Symmetry::None, &LossConfig::default()).unwrap();
        assert!((r.terms.rot_x - l0).abs() < 1e-12);
    }

    #[test]
    fn axial_ignores_x() {
        let pose = Pose::identity();
        let target = PoseTarget {
            pose,
            scale: Scale::new(Vec3::new(0.1, 0.1, 0.1)).unwrap(),
        };
        let mut pred = PosePrediction::perfect(&target);
        pred.a_x = Vec3::y();
        pred.c_x = 0.2;
        let r = total_pose_loss(&pred, &target, &Symmetry::Axial, &LossConfig::default()).unwrap();
        assert_eq!(r.terms.rot_x, 0.0);
        assert_eq!(r.terms.conf_x, 0.0);
        assert_eq!(r.gradient.unwrap().c_x, 0.0);
    }

    #[test]
    fn weights_scale_total_linearly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pose = Pose::new(Rotation::about_axis(&unit(&mut rng), 1.0), Vec3::new(0.0, 0.1, 1.0)).unwrap();
        let target = PoseTarget {
            pose,
            scale: Scale::new(Vec3::new(0.1, 0.2, 0.3)).unwrap(),
        };
        let pred = PosePrediction {
            translation: Vec3::new(0.01, 0.12, 1.1),
            a_x: unit(&mut rng),
            c_x: 0.4,
            a_z: unit(&mut rng),
            c_z: 0.7,
            scale: Vec3::new(0.12, 0.18, 0.33),
        };
        let cfg = LossConfig::default();
        let base = total_pose_loss(&pred, &target, &Symmetry::None, &cfg).unwrap();
        let scaled = total_pose_loss(&pred, &target, &Symmetry::None, &cfg.scaled(3.5)).unwrap();
        assert!((scaled.total - 3.5 * base.total).abs() <= 1e-12 * base.total);
        assert!((base.total - base.terms.weighted(&cfg)).abs() <= 1e-12 * base.total);
    }

    #[test]
    fn pose_loss_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = LossConfig::default();
        for trial in 0..200 {
            let sym = match trial % 3 {
                0 => Symmetry::None,
                1 => Symmetry::Axial,
                _ => Symmetry::half_turn(),
            };
            let pose = Pose::new(
                Rotation::about_axis(&unit(&mut rng), rng.random_range(0.0..PI)),
                Vec3::new(0.1, -0.1, 1.0),
            )
            .unwrap();
            let target = PoseTarget {
                pose,
                scale: Scale::new(Vec3::new(0.1, 0.2, 0.3)).unwrap(),
            };
            let pred = PosePrediction {
                translation: pose.translation + unit(&mut rng) * 0.05,
                a_x: unit(&mut rng),
                c_x: rng.random_range(0.0..1.0),
                a_z: unit(&mut rng),
                c_z: rng.random_range(0.0..1.0),
                scale: Vec3::new(0.1, 0.2, 0.3) + unit(&mut rng) * 0.02,
            };
            let x = pred.to_array();
            let f = |x: &[f64]| {
                let p = PosePrediction::from_array(x.try_into().unwrap());
                total_pose_loss(&p, &target, &sym, &cfg).unwrap().total
            };
            let analytic = total_pose_loss(&pred, &target, &sym, &cfg)
                .unwrap()
                .gradient
                .unwrap()
                .to_array();
            let numeric = central_gradient(&f, &x, 1e-6);
            assert!(relative_error(&analytic, &numeric) < 1e-5, "trial {trial}");
        }
    }

    #[test]
    fn depth_loss_examples() {
        let k = Intrinsics::new(40.0, 40.0, 8.0, 8.0, 16, 16).unwrap();
        let gt = DepthMap::filled(16, 16, 2.0);
        let mask = Mask::filled(16, 16, true);
        let same = depth_completion_loss(&gt, &gt, &mask, &k, 0.001).unwrap();
        assert_eq!(same.total, 0.0);
        assert!(same.gradient.data().iter().all(|g| *g == 0.0));

        let pred = DepthMap::filled(16, 16, 2.1);
        let l = depth_completion_loss(&pred, &gt, &mask, &k, 0.001).unwrap();
        assert!((l.depth - 0.01).abs() < 1e-12);
        assert!(l.smooth_normal.abs() < 1e-12);

        let empty = Mask::filled(16, 16, false);
        assert!(matches!(
            depth_completion_loss(&pred, &gt, &empty, &k, 0.001),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn depth_loss_gradient_matches_finite_differences() {
        let k = Intrinsics::new(30.0, 30.0, 5.0, 4.0, 10, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for trial in 0..100 {
            let gt = DepthMap::from_fn(10, 8, |u, v| 1.5 + 0.05 * (u as f64 * 0.7).sin() + 0.03 * v as f64);
            let pred = gt.map(|d| d + rng.random_range(-0.05..0.05));
            let mask = Mask::from_fn(10, 8, |_, _| rng.random_bool(0.7));
            if mask.count() == 0 {
                continue;
            }
            let smooth = rng.random_range(0.0..2.0);
            let l = depth_completion_loss(&pred, &gt, &mask, &k, smooth).unwrap();
            let f = |x: &[f64]| {
                let p = DepthMap::from_vec(10, 8, x.to_vec()).unwrap();
                depth_completion_loss(&p, &gt, &mask, &k, smooth).unwrap().total
            };
            let numeric = central_gradient(&f, pred.data(), 1e-6);
            let err = relative_error(l.gradient.data(), &numeric);
            assert!(err < 1e-5, "trial {trial}: {err}");
        }
    }

    #[test]
    fn normal_loss_examples() {
        let region = Mask::filled(4, 4, true);
        let gt = NormalMap::filled(4, 4, Some(Vec3::z()));
        assert_eq!(normal_loss(&gt, &gt, &region).unwrap().value, 0.0);
        let opposite = NormalMap::filled(4, 4, Some(-Vec3::z()));
        assert!((normal_loss(&opposite, &gt, &region).unwrap().value - 2.0).abs() < 1e-15);
        let a = 60f64.to_radians();
        let tilted = NormalMap::filled(4, 4, Some(Vec3::new(a.sin(), 0.0, a.cos())));
        assert!((normal_loss(&tilted, &gt, &region).unwrap().value - 0.5).abs() < 1e-12);
        assert!(matches!(
            normal_loss(&gt, &gt, &Mask::filled(4, 4, false)),
            Err(Error::EmptyRegion)
        ));
    }

    #[test]
    fn normal_loss_gradient_is_tangential_and_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let pred = NormalMap::from_fn(3, 3, |_, _| Some(unit(&mut rng)));
            let gt = NormalMap::from_fn(3, 3, |_, _| Some(unit(&mut rng)));
            let region = Mask::from_fn(3, 3, |u, v| (u + v) % 2 == 0);
            let l = normal_loss(&pred, &gt, &region).unwrap();
            let x: Vec<f64> = pred
                .data()
                .iter()
                .flat_map(|n| n.unwrap().as_slice().to_vec())
                .collect();
            let f = |x: &[f64]| {
                let p = NormalMap::from_fn(3, 3, |u, v| {
                    let i = (v * 3 + u) as usize * 3;
                    Some(Vec3::new(x[i], x[i + 1], x[i + 2]))
                });
                normal_loss(&p, &gt, &region).unwrap().value
            };
            let numeric = central_gradient(&f, &x, 1e-6);
            let analytic: Vec<f64> = l.gradient.data().iter().flat_map(|g| g.as_slice().to_vec()).collect();
            assert!(relative_error(&analytic, &numeric) < 1e-5);
            for (g, p) in l.gradient.data().iter().zip(pred.data()) {
                assert!(g.dot(&p.unwrap()).abs() < 1e-12);
            }
        }
    }
}
