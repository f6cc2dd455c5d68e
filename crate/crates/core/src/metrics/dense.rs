//! Per-pixel depth and surface-normal accuracy.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{depth_is_valid, DepthMap, Mask, NormalMap};

/// Depth accuracy inside a mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthMetricsReport {
    /// Meters.
    pub rmse: f64,
    pub rel: f64,
    /// Meters.
    pub mae: f64,
    /// Percentages of pixels with `max(p/g, g/p) < n`.
    pub delta_105: f64,
    pub delta_110: f64,
    pub delta_125: f64,
    pub pixels: usize,
}

/// Running sums for [`DepthMetricsReport`], so several frames can be pooled
/// pixel-wise.
#[derive(Debug, Clone, Default)]
pub struct DepthAccumulator {
    n: usize,
    sq: f64,
    rel: f64,
    abs: f64,
    hits: [usize; 3],
}

const DELTAS: [f64; 3] = [1.05, 1.10, 1.25];

impl DepthAccumulator {
    /// Adds every pixel inside `mask` whose ground truth is valid. A missing
    /// prediction there counts with error `gt` and fails every `delta`.
    pub fn add(&mut self, pred: &DepthMap, gt: &DepthMap, mask: &Mask) -> Result<()> {
        pred.check_dims(gt, "depth metrics prediction vs ground truth")?;
        pred.check_dims(mask, "depth metrics mask")?;
        for ((&p, &g), &m) in pred.data().iter().zip(gt.data()).zip(mask.data()) {
            if !m || !depth_is_valid(g) {
                continue;
            }
            let p = if depth_is_valid(p) { p } else { 0.0 };
            let e = (p - g).abs();
            self.n += 1;
            self.sq += e * e;
            self.abs += e;
            self.rel += e / g;
            if p > 0.0 {
                let ratio = (p / g).max(g / p);
                for (h, d) in self.hits.iter_mut().zip(DELTAS) {
                    *h += (ratio < d) as usize;
                }
            }
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<DepthMetricsReport> {
        if self.n == 0 {
            return Err(Error::EmptyMask);
        }
        let n = self.n as f64;
        let pct = |h: usize| 100.0 * h as f64 / n;
        let r = DepthMetricsReport {
            rmse: (self.sq / n).sqrt(),
            rel: self.rel / n,
            mae: self.abs / n,
            delta_105: pct(self.hits[0]),
            delta_110: pct(self.hits[1]),
            delta_125: pct(self.hits[2]),
            pixels: self.n,
        };
        assert!(r.delta_105 <= r.delta_110 && r.delta_110 <= r.delta_125);
        Ok(r)
    }
}

pub fn depth_metrics(pred: &DepthMap, gt: &DepthMap, mask: &Mask) -> Result<DepthMetricsReport> {
    let mut acc = DepthAccumulator::default();
    acc.add(pred, gt, mask)?;
    acc.finish()
}

/// Normal accuracy inside a region. Errors are angles in radians; the
/// thresholds are percentages of pixels under 11.25, 22.5 and 30 degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalMetricsReport {
    pub rmse: f64,
    pub mae: f64,
    pub within_11_25: f64,
    pub within_22_5: f64,
    pub within_30: f64,
    pub pixels: usize,
}

#[derive(Debug, Clone, Default)]
pub struct NormalAccumulator {
    n: usize,
    sq: f64,
    abs: f64,
    hits: [usize; 3],
}

const ANGLES_DEG: [f64; 3] = [11.25, 22.5, 30.0];

impl NormalAccumulator {
    /// Adds region pixels where both maps hold a normal.
    pub fn add(&mut self, pred: &NormalMap, gt: &NormalMap, region: &Mask) -> Result<()> {
        pred.check_dims(gt, "normal metrics prediction vs ground truth")?;
        pred.check_dims(region, "normal metrics region")?;
        for ((p, g), &m) in pred.data().iter().zip(gt.data()).zip(region.data()) {
            let (Some(p), Some(g), true) = (p, g, m) else {
                continue;
            };
            let angle = p.dot(g).clamp(-1.0, 1.0).acos();
            self.n += 1;
            self.sq += angle * angle;
            self.abs += angle;
            let deg = angle.to_degrees();
            for (h, t) in self.hits.iter_mut().zip(ANGLES_DEG) {
                *h += (deg < t) as usize;
            }
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<NormalMetricsReport> {
        if self.n == 0 {
            return Err(Error::EmptyRegion);
        }
        let n = self.n as f64;
        let pct = |h: usize| 100.0 * h as f64 / n;
        let r = NormalMetricsReport {
            rmse: (self.sq / n).sqrt(),
            mae: self.abs / n,
            within_11_25: pct(self.hits[0]),
            within_22_5: pct(self.hits[1]),
            within_30: pct(self.hits[2]),
            pixels: self.n,
        };
        assert!(r.within_11_25 <= r.within_22_5 && r.within_22_5 <= r.within_30);
        Ok(r)
    }
}

pub fn normal_metrics(pred: &NormalMap, gt: &NormalMap, region: &Mask) -> Result<NormalMetricsReport> {
    let mut acc = NormalAccumulator::default();
    acc.add(pred, gt, region)?;
    acc.finish()
}

impl DepthMetricsReport {
    pub fn to_csv(&self) -> String {
        format!(
            "rmse,rel,mae,delta_1.05,delta_1.10,delta_1.25,pixels\n{:.6},{:.6},{:.6},{:.4},{:.4},{:.4},{}\n",
            self.rmse, self.rel, self.mae, self.delta_105, self.delta_110, self.delta_125, self.pixels
        )
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| RMSE | REL | MAE | δ1.05 | δ1.10 | δ1.25 |\n|---:|---:|---:|---:|---:|---:|\n");
        let _ = writeln!(
            s,
            "| {:.4} | {:.4} | {:.4} | {:.2} | {:.2} | {:.2} |",
            self.rmse, self.rel, self.mae, self.delta_105, self.delta_110, self.delta_125
        );
        s
    }
}

impl NormalMetricsReport {
    pub fn to_csv(&self) -> String {
        format!(
            "rmse_rad,mae_rad,within_11.25,within_22.5,within_30,pixels\n{:.6},{:.6},{:.4},{:.4},{:.4},{}\n",
            self.rmse, self.mae, self.within_11_25, self.within_22_5, self.within_30, self.pixels
        )
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| RMSE (rad) | MAE (rad) | 11.25° | 22.5° | 30° |\n|---:|---:|---:|---:|---:|\n");
        let _ = writeln!(
            s,
            "| {:.4} | {:.4} | {:.2} | {:.2} | {:.2} |",
            self.rmse, self.mae, self.within_11_25, self.within_22_5, self.within_30
        );
        s
    }
}
