//! Depth completion and surface-normal stand-ins.
//!
//! Each estimator works on a whole frame; the pipeline crops patches
//! afterwards, so every instance of a frame sees the same estimate.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{depth_is_valid, DepthMap, NormalMap};
use crate::pose::Vec3;
use crate::rng::{derive_labeled, derive_seed, rng_from_seed};
use crate::synth::{FrameData, SmoothField};

/// Fills in depth for the transparent regions of a frame.
pub trait DepthCompleter: Sync {
    /// Completed depth for the whole frame; valid everywhere inside the
    /// transparency mask where the ground truth is.
    fn complete(&self, frame: &FrameData) -> Result<DepthMap>;
}

/// Predicts per-pixel surface normals from color.
pub trait NormalEstimator: Sync {
    fn estimate(&self, frame: &FrameData) -> Result<NormalMap>;
}

/// Ground truth inside the transparency mask, raw depth elsewhere.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleDepth;

impl DepthCompleter for OracleDepth {
    fn complete(&self, frame: &FrameData) -> Result<DepthMap> {
        let mut out = frame.depth_raw.clone();
        for (i, &id) in frame.instance_ids.data().iter().enumerate() {
            if id > 0 {
                out.data_mut()[i] = frame.depth_gt.data()[i];
            }
        }
        Ok(out)
    }
}

/// Ground truth plus Gaussian noise and a smooth bias inside the
/// transparency mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoisyDepth {
    pub sigma: f64,
    /// Peak amplitude of the smooth bias, meters.
    pub bias_amplitude: f64,
    /// Bias wavelength, pixels.
    pub bias_wavelength: f64,
    pub seed: u64,
}

impl Default for NoisyDepth {
    /// Masked depth MAE near 0.041 m, mostly from the smooth bias: completion
    /// errors are spatially correlated, and white noise alone would average
    /// out over an instance's points.
    fn default() -> Self {
        NoisyDepth {
            sigma: 0.015,
            bias_amplitude: 0.12,
            bias_wavelength: 120.0,
            seed: 0,
        }
    }
}

/// Smallest depth a completer emits, meters.
const MIN_DEPTH: f64 = 1e-3;

impl DepthCompleter for NoisyDepth {
    fn complete(&self, frame: &FrameData) -> Result<DepthMap> {
        if !(self.sigma >= 0.0 && self.bias_amplitude >= 0.0 && self.bias_wavelength > 0.0) {
            return Err(Error::Invalid("noisy depth parameters out of range".into()));
        }
        let seed = derive_seed(self.seed, frame.seed);
        let mut rng = rng_from_seed(derive_labeled(seed, "bias"));
        let bias = SmoothField::new(&mut rng, self.bias_amplitude, self.bias_wavelength);
        let mut rng = rng_from_seed(derive_labeled(seed, "noise"));
        let noise = Normal::new(0.0, self.sigma).map_err(|e| Error::Invalid(e.to_string()))?;
        let mut out = OracleDepth.complete(frame)?;
        for (i, &id) in frame.instance_ids.data().iter().enumerate() {
            if id == 0 {
                continue;
            }
            let g = frame.depth_gt.data()[i];
            let n = noise.sample(&mut rng);
            if depth_is_valid(g) {
                let (u, v) = frame.depth_gt.coords(i);
                out.data_mut()[i] = (g + n + bias.at(u, v)).max(MIN_DEPTH);
            }
        }
        Ok(out)
    }
}

/// Sensor depth passed through untouched.
#[derive(Debug, Clone, Copy, Default)]
pub struct RawDepth;

impl DepthCompleter for RawDepth {
    fn complete(&self, frame: &FrameData) -> Result<DepthMap> {
        Ok(frame.depth_raw.clone())
    }
}

/// Ground-truth normals.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleNormals;

impl NormalEstimator for OracleNormals {
    fn estimate(&self, frame: &FrameData) -> Result<NormalMap> {
        Ok(frame.normals.clone())
    }
}

/// Ground-truth normals tilted by a random angle in a random tangent
/// direction. The tilt is the norm of an isotropic 2D Gaussian of standard
/// deviation `sigma`, so its mean is `sigma * sqrt(pi / 2)` radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoisyNormals {
    pub sigma: f64,
    pub seed: u64,
}

impl Default for NoisyNormals {
    /// Mean angular error 0.1334 rad.
    fn default() -> Self {
        NoisyNormals {
            sigma: 0.1334 / std::f64::consts::FRAC_PI_2.sqrt(),
            seed: 0,
        }
    }
}

fn tangent_basis(n: &Vec3) -> (Vec3, Vec3) {
    let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = n.cross(&helper).normalize();
    (e1, n.cross(&e1))
}

impl NormalEstimator for NoisyNormals {
    fn estimate(&self, frame: &FrameData) -> Result<NormalMap> {
        if !(self.sigma >= 0.0) {
            return Err(Error::Invalid("normal noise sigma must be >= 0".into()));
        }
        let mut rng = rng_from_seed(derive_labeled(derive_seed(self.seed, frame.seed), "normals"));
        let noise = Normal::new(0.0, self.sigma).map_err(|e| Error::Invalid(e.to_string()))?;
        let k = &frame.intrinsics;
        let mut out = frame.normals.clone();
        for (i, slot) in out.data_mut().iter_mut().enumerate() {
            let Some(n) = *slot else { continue };
            let (e1, e2) = tangent_basis(&n);
            let tilt = e1 * noise.sample(&mut rng) + e2 * noise.sample(&mut rng);
            let angle = tilt.norm();
            if angle == 0.0 {
                continue;
            }
            let dir = tilt / angle;
            let (u, v) = frame.normals.coords(i);
            let view = k.unproject(u as f64, v as f64);
            let mut m = n * angle.cos() + dir * angle.sin();
            if m.dot(&view) > 0.0 {
                // Mirror the tilt so the normal keeps facing the camera.
                m = n * angle.cos() - dir * angle.sin();
            }
            *slot = Some(m.normalize());
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{depth_metrics, normal_metrics};
    use crate::synth::{generate_scene, SceneConfig};

    fn frame(seed: u64) -> FrameData {
        FrameData::from_scene(seed, &generate_scene(&SceneConfig::default(), seed).unwrap())
    }

    #[test]
    fn oracle_replaces_masked_depth_only() {
        let f = frame(2);
        let out = OracleDepth.complete(&f).unwrap();
        let m = f.transparency();
        for i in 0..out.len() {
            let expect = if m.data()[i] {
                f.depth_gt.data()[i]
            } else {
                f.depth_raw.data()[i]
            };
            assert_eq!(out.data()[i].to_bits(), expect.to_bits());
        }
        assert_eq!(depth_metrics(&out, &f.depth_gt, &m).unwrap().rmse, 0.0);
    }

    #[test]
    fn oracle_without_objects_is_raw() {
        let cfg = SceneConfig {
            instances: [0, 0],
            ..SceneConfig::default()
        };
        let f = FrameData::from_scene(0, &generate_scene(&cfg, 0).unwrap());
        assert_eq!(OracleDepth.complete(&f).unwrap(), f.depth_raw);
    }

    #[test]
    fn noiseless_noisy_depth_is_the_oracle() {
        let f = frame(3);
        let quiet = NoisyDepth {
            sigma: 0.0,
            bias_amplitude: 0.0,
            ..NoisyDepth::default()
        };
        assert_eq!(quiet.complete(&f).unwrap(), OracleDepth.complete(&f).unwrap());
    }

    #[test]
    fn pure_noise_has_half_normal_mae() {
        let sigma = 0.041;
        let noisy = NoisyDepth {
            sigma,
            bias_amplitude: 0.0,
            ..NoisyDepth::default()
        };
        let mut abs = 0.0;
        let mut n = 0usize;
        for s in 0..4 {
            let f = frame(s);
            let out = noisy.complete(&f).unwrap();
            for (i, &id) in f.instance_ids.data().iter().enumerate() {
                if id > 0 {
                    abs += (out.data()[i] - f.depth_gt.data()[i]).abs();
                    n += 1;
                }
            }
        }
        let expected = sigma * (2.0 / std::f64::consts::PI).sqrt();
        let mae = abs / n as f64;
        assert!(n > 20_000);
        assert!((mae / expected - 1.0).abs() < 0.05, "{mae} vs {expected}");
    }

    #[test]
    fn noisy_estimators_are_deterministic() {
        let f = frame(5);
        let d = NoisyDepth::default();
        assert_eq!(d.complete(&f).unwrap(), d.complete(&f).unwrap());
        let n = NoisyNormals::default();
        assert_eq!(n.estimate(&f).unwrap(), n.estimate(&f).unwrap());
    }

    #[test]
    fn noisy_normals_have_the_rayleigh_mean() {
        let f = frame(6);
        let est = NoisyNormals::default().estimate(&f).unwrap();
        let r = normal_metrics(&est, &f.normals, &f.transparency()).unwrap();
        assert!((r.mae / 0.1334 - 1.0).abs() < 0.05, "{}", r.mae);
        let k = &f.intrinsics;
        for (i, n) in est.data().iter().enumerate() {
            if let Some(n) = n {
                let (u, v) = est.coords(i);
                assert!(n.dot(&k.unproject(u as f64, v as f64)) <= 0.0);
                assert!((n.norm() - 1.0).abs() < 1e-12);
            }
        }
    }
}
