//! Central finite differences for checking analytic gradients, and the
//! suite behind the `gradcheck` command.

use std::str::FromStr;

use rand::Rng;
use serde::Serialize;

use crate::camera::Intrinsics;
use crate::estimator::{DecoderInput, LinearDecoder, GLOBAL_WIDTH, PARAM_COUNT};
use crate::grid::{DepthMap, Mask, NormalMap};
use crate::loss::{
    angular_loss, axis_loss, confidence_loss, depth_completion_loss, normal_loss, scale_loss, total_pose_loss,
    translation_loss, LossConfig, PosePrediction, PoseTarget,
};
use crate::pose::{Category, Pose, Rotation, Scale, Symmetry, Vec3};
use crate::rng::{derive_labeled, rng_from_seed};

/// Gradient of `f` at `x` by central differences with step `h`.
pub fn central_gradient(f: &impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, floor)` with Euclidean norms.
///
/// The floor keeps near-zero gradients from turning rounding noise into a
/// large ratio.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "gradient lengths differ");
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut a.iter().zip(b).map(|(x, y)| x - y));
    let scale = norm(&mut a.iter().copied()).max(norm(&mut b.iter().copied())).max(1e-8);
    diff / scale
}

/// Step of every finite difference in the suite.
pub const STEP: f64 = 1e-6;

/// Whether `f` has a kink within `h` of `x` along some coordinate, judged by
/// disagreeing one-sided differences. Central differences across an L1 tie
/// or a switch of the planar minimum are meaningless, so such draws are
/// skipped.
pub fn near_kink(f: &impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> bool {
    let f0 = f(x);
    let mut probe = x.to_vec();
    (0..x.len()).any(|i| {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = (f(&probe) - f0) / h;
        probe[i] = orig - h;
        let down = (f0 - f(&probe)) / h;
        probe[i] = orig;
        (up - down).abs() > 1e-3 * (up.abs() + down.abs()) + 1e-9
    })
}

/// A deliberate bug, used to show the suite catches one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Negates the analytic gradient of the axis loss.
    AxisSign,
}

impl FromStr for Fault {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "axis-sign" => Ok(Fault::AxisSign),
            _ => Err(format!("unknown fault {s:?} (known: axis-sign)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    /// Configurations compared.
    pub trials: usize,
    /// Draws rejected for sitting on a kink.
    pub skipped: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// One draw: the point, the analytic gradient there and the function.
type Draw = (Vec<f64>, Vec<f64>, Box<dyn Fn(&[f64]) -> f64>);

fn run_check(
    name: &'static str,
    trials: usize,
    tolerance: f64,
    seed: u64,
    kinks: bool,
    mut draw: impl FnMut(&mut crate::rng::Rng) -> Draw,
) -> CheckResult {
    let mut rng = rng_from_seed(derive_labeled(seed, name));
    let (mut done, mut skipped, mut worst) = (0, 0, 0.0f64);
    // Kinks have measure zero; the cap only guards against a broken sampler.
    while done < trials && skipped < 10 * trials.max(10) {
        let (x, analytic, f) = draw(&mut rng);
        if kinks && near_kink(&f, &x, STEP) {
            skipped += 1;
            continue;
        }
        let numeric = central_gradient(&f, &x, STEP);
        let err = relative_error(&analytic, &numeric);
        worst = if err.is_nan() { f64::NAN } else { worst.max(err) };
        done += 1;
    }
    CheckResult {
        name,
        trials: done,
        skipped,
        max_rel_error: worst,
        tolerance,
        passed: done == trials && worst <= tolerance,
    }
}

fn unit(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

fn v3(x: &[f64]) -> Vec3 {
    Vec3::new(x[0], x[1], x[2])
}

fn random_target(rng: &mut impl Rng) -> PoseTarget {
    let rot = Rotation::about_axis(&unit(rng), rng.random_range(0.0..std::f64::consts::PI));
    let t = Vec3::new(
        rng.random_range(-0.3..0.3),
        rng.random_range(-0.3..0.3),
        rng.random_range(0.4..1.5),
    );
    let s = Vec3::new(
        rng.random_range(0.03..0.3),
        rng.random_range(0.03..0.3),
        rng.random_range(0.03..0.3),
    );
    PoseTarget {
        pose: Pose::new(rot, t).expect("rotation is orthonormal"),
        scale: Scale::new(s).expect("positive extents"),
    }
}

fn random_prediction(rng: &mut impl Rng, target: &PoseTarget) -> PosePrediction {
    PosePrediction {
        translation: target.pose.translation + unit(rng) * rng.random_range(0.0..0.1),
        a_x: unit(rng) * rng.random_range(0.5..1.5),
        c_x: rng.random_range(0.0..1.0),
        a_z: unit(rng) * rng.random_range(0.5..1.5),
        c_z: rng.random_range(0.0..1.0),
        scale: target.scale.extents() + unit(rng) * rng.random_range(0.0..0.02),
    }
}

fn random_decoder_input(rng: &mut impl Rng) -> DecoderInput {
    let mut features: Vec<f64> = (0..GLOBAL_WIDTH).map(|_| rng.random_range(-1.0..1.0)).collect();
    let cat = Category::ALL[rng.random_range(0..Category::ALL.len())];
    features.extend_from_slice(&cat.one_hot());
    DecoderInput {
        features,
        translation_prior: Vec3::new(
            rng.random_range(-0.2..0.2),
            rng.random_range(-0.2..0.2),
            rng.random_range(0.5..1.2),
        ),
        scale_prior: Vec3::new(
            rng.random_range(0.05..0.2),
            rng.random_range(0.05..0.2),
            rng.random_range(0.05..0.2),
        ),
    }
}

/// Finite-difference checks of every loss gradient and of the decoder.
///
/// Losses are held to `1e-5` relative error. The last check chains the pose
/// loss through the decoder to its parameters and is held to `1e-4`.
pub fn run_suite(trials: usize, seed: u64, fault: Option<Fault>) -> Vec<CheckResult> {
    let axis_sign = if fault == Some(Fault::AxisSign) { -1.0 } else { 1.0 };
    let cfg = LossConfig::default();
    let mut out = Vec::new();

    out.push(run_check("translation_loss", trials, 1e-5, seed, true, |rng| {
        let gt = unit(rng);
        let x = (gt + unit(rng) * 0.1).as_slice().to_vec();
        let g = translation_loss(&v3(&x), &gt).grad.as_slice().to_vec();
        (x, g, Box::new(move |p: &[f64]| translation_loss(&v3(p), &gt).value))
    }));
    out.push(run_check("scale_loss", trials, 1e-5, seed, true, |rng| {
        let gt = unit(rng).abs() * 0.2;
        let x = (gt + unit(rng) * 0.02).as_slice().to_vec();
        let g = scale_loss(&v3(&x), &gt).grad.as_slice().to_vec();
        (x, g, Box::new(move |p: &[f64]| scale_loss(&v3(p), &gt).value))
    }));
    out.push(run_check("axis_loss", trials, 1e-5, seed, true, |rng| {
        let gt = unit(rng);
        let x = (unit(rng) * rng.random_range(0.5..1.5)).as_slice().to_vec();
        let g = (axis_loss(&v3(&x), &gt).grad * axis_sign).as_slice().to_vec();
        (x, g, Box::new(move |p: &[f64]| axis_loss(&v3(p), &gt).value))
    }));
    out.push(run_check("angular_loss", trials, 1e-5, seed, false, |rng| {
        let (a, b) = (unit(rng), unit(rng));
        let l = angular_loss(&a, &b);
        let x = [a.as_slice(), b.as_slice()].concat();
        let g = [l.grad_x.as_slice(), l.grad_z.as_slice()].concat();
        (x, g, Box::new(|p: &[f64]| angular_loss(&v3(p), &v3(&p[3..])).value))
    }));
    let alpha = cfg.alpha;
    out.push(run_check("confidence_loss", trials, 1e-5, seed, true, move |rng| {
        let gt = unit(rng);
        let a = gt + unit(rng) * rng.random_range(0.01..1.0);
        let c = rng.random_range(0.0..1.0);
        let l = confidence_loss(c, &a, &gt, alpha);
        let x = [&[c], a.as_slice()].concat();
        let g = [&[l.grad_confidence], l.grad_axis.as_slice()].concat();
        (
            x,
            g,
            Box::new(move |p: &[f64]| confidence_loss(p[0], &v3(&p[1..]), &gt, alpha).value),
        )
    }));
    for (name, sym) in [
        ("total_pose_loss/none", Symmetry::None),
        ("total_pose_loss/axial", Symmetry::Axial),
        ("total_pose_loss/planar", Symmetry::half_turn()),
    ] {
        let cfg = cfg.clone();
        out.push(run_check(name, trials, 1e-5, seed, true, move |rng| {
            let target = random_target(rng);
            let pred = random_prediction(rng, &target);
            let report = total_pose_loss(&pred, &target, &sym, &cfg).expect("valid loss config");
            let g = report
                .gradient
                .expect("pose loss returns a gradient")
                .to_array()
                .to_vec();
            let (sym, cfg) = (sym.clone(), cfg.clone());
            let f = move |p: &[f64]| {
                let p = PosePrediction::from_array(p.try_into().expect("14 values"));
                total_pose_loss(&p, &target, &sym, &cfg)
                    .expect("valid loss config")
                    .total
            };
            (pred.to_array().to_vec(), g, Box::new(f))
        }));
    }
    let k = Intrinsics::new(30.0, 30.0, 5.0, 4.0, 10, 8).expect("valid intrinsics");
    out.push(run_check(
        "depth_completion_loss",
        trials,
        1e-5,
        seed,
        false,
        move |rng| {
            let (a, b) = (rng.random_range(0.1..1.0), rng.random_range(-0.05..0.05));
            let gt = DepthMap::from_fn(10, 8, |u, v| 1.5 + 0.05 * (u as f64 * a).sin() + b * v as f64);
            let pred = gt.map(|d| d + rng.random_range(-0.05..0.05));
            let mut mask = Mask::from_fn(10, 8, |_, _| rng.random_bool(0.7));
            *mask.get_mut(5, 4) = true;
            let smooth = rng.random_range(0.0..2.0);
            let g = depth_completion_loss(&pred, &gt, &mask, &k, smooth)
                .expect("mask is not empty")
                .gradient;
            let f = move |p: &[f64]| {
                let p = DepthMap::from_vec(10, 8, p.to_vec()).expect("same size");
                depth_completion_loss(&p, &gt, &mask, &k, smooth)
                    .expect("mask is not empty")
                    .total
            };
            (pred.data().to_vec(), g.into_data(), Box::new(f))
        },
    ));
    out.push(run_check("normal_loss", trials, 1e-5, seed, false, |rng| {
        let pred = NormalMap::from_fn(3, 3, |_, _| Some(unit(rng) * rng.random_range(0.5..1.5)));
        let gt = NormalMap::from_fn(3, 3, |_, _| Some(unit(rng)));
        let mut region = Mask::from_fn(3, 3, |_, _| rng.random_bool(0.6));
        *region.get_mut(1, 1) = true;
        let l = normal_loss(&pred, &gt, &region).expect("region is not empty");
        let x: Vec<f64> = pred
            .data()
            .iter()
            .flat_map(|n| n.expect("all defined").as_slice().to_vec())
            .collect();
        let g: Vec<f64> = l.gradient.data().iter().flat_map(|g| g.as_slice().to_vec()).collect();
        let f = move |p: &[f64]| {
            let p = NormalMap::from_fn(3, 3, |u, v| Some(v3(&p[(v * 3 + u) as usize * 3..])));
            normal_loss(&p, &gt, &region).expect("region is not empty").value
        };
        (x, g, Box::new(f))
    }));
    out.push(run_check("decoder_jacobian", trials, 1e-5, seed, false, |rng| {
        let input = random_decoder_input(rng);
        let model = LinearDecoder::default()
            .perturbed(0.3, rng.random())
            .expect("valid model");
        let probe: [f64; 14] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let out = model.decode(&input).expect("finite output");
        let mut g = vec![0.0; PARAM_COUNT];
        model.backward(&out, &PosePrediction::from_array(&probe), &mut g);
        let x = model.params();
        let f = move |p: &[f64]| {
            let mut m = model.clone();
            m.set_params(p).expect("param count");
            let a = m.decode(&input).expect("finite output").prediction.to_array();
            a.iter().zip(&probe).map(|(a, b)| a * b).sum()
        };
        (x, g, Box::new(f))
    }));
    out.push(run_check(
        "pose_loss_wrt_decoder_params",
        trials,
        1e-4,
        seed,
        true,
        move |rng| {
            let input = random_decoder_input(rng);
            let target = random_target(rng);
            let sym = [Symmetry::None, Symmetry::Axial, Symmetry::half_turn()][rng.random_range(0..3)].clone();
            let model = LinearDecoder::default()
                .perturbed(0.05, rng.random())
                .expect("valid model");
            let out = model.decode(&input).expect("finite output");
            let pg = total_pose_loss(&out.prediction, &target, &sym, &cfg)
                .expect("valid loss config")
                .gradient
                .expect("pose loss returns a gradient");
            let mut g = vec![0.0; PARAM_COUNT];
            model.backward(&out, &pg, &mut g);
            let x = model.params();
            let cfg = cfg.clone();
            let f = move |p: &[f64]| {
                let mut m = model.clone();
                m.set_params(p).expect("param count");
                let out = m.decode(&input).expect("finite output");
                total_pose_loss(&out.prediction, &target, &sym, &cfg)
                    .expect("valid loss config")
                    .total
            };
            (x, g, Box::new(f))
        },
    ));
    out
}
