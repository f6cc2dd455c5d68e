//! Sensor failure model for transparent surfaces.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{depth_is_valid, DepthMap, Mask};
use crate::rng::{derive_labeled, rng_from_seed};

/// Corruption applied inside the transparency mask only, in this order:
/// boundary bleed, smooth warp, Gaussian offsets, dropout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptionModel {
    /// Probability that a masked pixel reads as missing.
    pub dropout: f64,
    /// Per-pixel Gaussian offset, meters.
    pub noise_sigma: f64,
    /// Peak amplitude of the low-frequency warp, meters.
    pub warp_amplitude: f64,
    /// Warp wavelength in pixels.
    pub warp_wavelength: f64,
    /// Masked pixels within this many pixels (Chebyshev) of an unmasked
    /// pixel read that pixel's depth instead.
    pub bleed_radius: u32,
}

impl Default for CorruptionModel {
    fn default() -> Self {
        CorruptionModel {
            dropout: 0.35,
            noise_sigma: 0.01,
            warp_amplitude: 0.03,
            warp_wavelength: 160.0,
            bleed_radius: 2,
        }
    }
}

impl CorruptionModel {
    /// No corruption at all.
    pub fn none() -> Self {
        CorruptionModel {
            dropout: 0.0,
            noise_sigma: 0.0,
            warp_amplitude: 0.0,
            warp_wavelength: 160.0,
            bleed_radius: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.dropout) {
            return Err(Error::Invalid(format!("dropout {} outside [0, 1]", self.dropout)));
        }
        if !(self.noise_sigma >= 0.0 && self.warp_amplitude >= 0.0) {
            return Err(Error::Invalid("noise and warp amplitudes must be >= 0".into()));
        }
        if !(self.warp_wavelength > 0.0) {
            return Err(Error::Invalid("warp wavelength must be positive".into()));
        }
        Ok(())
    }
}

/// A sum of three plane waves scaled so `|w| <= amplitude` everywhere.
#[derive(Debug, Clone)]
pub(crate) struct SmoothField {
    waves: [(f64, f64, f64, f64); 3],
    norm: f64,
}

impl SmoothField {
    pub(crate) fn new(rng: &mut impl Rng, amplitude: f64, wavelength: f64) -> Self {
        let waves = std::array::from_fn(|_| {
            let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let weight = rng.random_range(0.5..1.0);
            let k = std::f64::consts::TAU / wavelength;
            (k * theta.cos(), k * theta.sin(), phase, weight)
        });
        let total: f64 = waves.iter().map(|w: &(f64, f64, f64, f64)| w.3).sum();
        SmoothField {
            waves,
            norm: amplitude / total,
        }
    }

    pub(crate) fn at(&self, u: u32, v: u32) -> f64 {
        let (u, v) = (u as f64, v as f64);
        self.norm
            * self
                .waves
                .iter()
                .map(|&(ku, kv, p, w)| w * (ku * u + kv * v + p).sin())
                .sum::<f64>()
    }
}

fn bleed(gt: &DepthMap, mask: &Mask, radius: u32, u: u32, v: u32) -> Option<f64> {
    let (w, h) = gt.dims();
    for r in 1..=radius as i64 {
        for dv in -r..=r {
            for du in -r..=r {
                if du.abs() != r && dv.abs() != r {
                    continue;
                }
                let (x, y) = (u as i64 + du, v as i64 + dv);
                if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
                    continue;
                }
                let (x, y) = (x as u32, y as u32);
                let d = *gt.get(x, y);
                if !*mask.get(x, y) && depth_is_valid(d) {
                    return Some(d);
                }
            }
        }
    }
    None
}

/// Raw sensor depth for a frame with ground truth `gt`.
///
/// Pixels outside `transparency` are returned bit-for-bit unchanged.
pub fn corrupt_depth(gt: &DepthMap, transparency: &Mask, model: &CorruptionModel, seed: u64) -> Result<DepthMap> {
    model.validate()?;
    gt.check_dims(transparency, "corruption mask")?;
    let mut rng = rng_from_seed(derive_labeled(seed, "warp"));
    let warp = SmoothField::new(&mut rng, model.warp_amplitude, model.warp_wavelength);
    let mut rng = rng_from_seed(derive_labeled(seed, "pixels"));
    let noise = Normal::new(0.0, model.noise_sigma).map_err(|e| Error::Invalid(e.to_string()))?;
    let mut out = gt.clone();
    for i in 0..gt.len() {
        if !transparency.data()[i] {
            continue;
        }
        let (u, v) = gt.coords(i);
        let mut d = gt.data()[i];
        if model.bleed_radius > 0 {
            if let Some(b) = bleed(gt, transparency, model.bleed_radius, u, v) {
                d = b;
            }
        }
        // Draws happen for every masked pixel so the stream does not depend
        // on which pixels are valid.
        let offset = noise.sample(&mut rng);
        let drop = rng.random::<f64>() < model.dropout;
        if !depth_is_valid(d) || drop {
            out.data_mut()[i] = 0.0;
            continue;
        }
        d += warp.at(u, v) + offset;
        out.data_mut()[i] = if depth_is_valid(d) { d } else { 0.0 };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane(w: u32, h: u32) -> DepthMap {
        DepthMap::from_fn(w, h, |u, v| 0.8 + 0.001 * u as f64 + 0.0005 * v as f64)
    }

    #[test]
    fn zero_model_is_identity() {
        let gt = plane(40, 30);
        let mask = Mask::from_fn(40, 30, |u, _| u > 10);
        assert_eq!(corrupt_depth(&gt, &mask, &CorruptionModel::none(), 3).unwrap(), gt);
    }

    #[test]
    fn full_dropout_clears_the_mask() {
        let gt = plane(40, 30);
        let mask = Mask::from_fn(40, 30, |u, v| u > 10 && v < 20);
        let m = CorruptionModel {
            dropout: 1.0,
            ..CorruptionModel::default()
        };
        let out = corrupt_depth(&gt, &mask, &m, 3).unwrap();
        for i in 0..gt.len() {
            if mask.data()[i] {
                assert_eq!(out.data()[i], 0.0);
            } else {
                assert_eq!(out.data()[i].to_bits(), gt.data()[i].to_bits());
            }
        }
    }

    #[test]
    fn dropout_rate_is_binomial() {
        let gt = plane(100, 100);
        let mask = Mask::filled(100, 100, true);
        let m = CorruptionModel {
            dropout: 0.4,
            ..CorruptionModel::none()
        };
        let out = corrupt_depth(&gt, &mask, &m, 17).unwrap();
        let frac = out.data().iter().filter(|d| **d == 0.0).count() as f64 / 1e4;
        // 4 sigma of Binomial(1e4, 0.4) is 0.0196.
        assert!((frac - 0.4).abs() < 0.02, "{frac}");
    }

    #[test]
    fn deterministic_and_confined() {
        let gt = plane(64, 48);
        let mask = Mask::from_fn(64, 48, |u, v| (20..40).contains(&u) && (10..30).contains(&v));
        let m = CorruptionModel::default();
        let a = corrupt_depth(&gt, &mask, &m, 99).unwrap();
        let b = corrupt_depth(&gt, &mask, &m, 99).unwrap();
        assert_eq!(a, b);
        for i in 0..gt.len() {
            if !mask.data()[i] {
                assert_eq!(a.data()[i].to_bits(), gt.data()[i].to_bits());
            }
        }
        assert_ne!(a, corrupt_depth(&gt, &mask, &m, 100).unwrap());
    }

    #[test]
    fn bleed_copies_the_neighbouring_background() {
        let gt = DepthMap::from_fn(10, 1, |u, _| if u < 5 { 2.0 } else { 1.0 });
        let mask = Mask::from_fn(10, 1, |u, _| u >= 5);
        let m = CorruptionModel {
            bleed_radius: 2,
            ..CorruptionModel::none()
        };
        let out = corrupt_depth(&gt, &mask, &m, 0).unwrap();
        assert_eq!(&out.data()[4..9], &[2.0, 2.0, 2.0, 1.0, 1.0]);
    }

    #[test]
    fn warp_is_bounded() {
        let mut rng = rng_from_seed(5);
        let f = SmoothField::new(&mut rng, 0.03, 50.0);
        for v in 0..100 {
            for u in 0..100 {
                assert!(f.at(u, v).abs() <= 0.03 + 1e-15);
            }
        }
    }
}
