//! Degree-centimeter and 3D-IoU pose accuracy.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::iou::oriented_iou;
use crate::error::{Error, Result};
use crate::pose::{Category, OrientedBox, Pose, Rotation, Scale, Symmetry};

/// Symmetry class per category.
pub type SymmetryMap = BTreeMap<Category, Symmetry>;

/// Each category mapped to [`Category::default_symmetry`].
pub fn default_symmetry_map() -> SymmetryMap {
    Category::ALL.iter().map(|&c| (c, c.default_symmetry())).collect()
}

/// Rotation error in degrees, reduced over the symmetry class.
///
/// `Axial` compares only the z-axes. `Planar` takes the smallest geodesic
/// angle over the candidate ground-truth rotations.
pub fn rotation_error(pred: &Rotation, gt: &Rotation, symmetry: &Symmetry) -> f64 {
    let rad = match symmetry {
        Symmetry::None => pred.angle_to(gt),
        Symmetry::Axial => {
            let (a, b) = (pred.z_axis(), gt.z_axis());
            a.cross(&b).norm().atan2(a.dot(&b))
        }
        Symmetry::Planar(angles) => angles
            .iter()
            .map(|&a| pred.angle_to(&gt.compose(&Rotation::about_z(a))))
            .fold(f64::INFINITY, f64::min),
    };
    rad.to_degrees()
}

/// One annotated or predicted object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseInstance {
    pub category: Category,
    pub pose: Pose,
    pub scale: Scale,
}

impl PoseInstance {
    pub fn oriented_box(&self) -> OrientedBox {
        OrientedBox::new(self.pose, self.scale)
    }
}

/// Box IoU after resolving the symmetry of the ground truth.
///
/// For `Axial` the predicted box is spun about its own z-axis so its x-axis
/// lies as close as possible to the ground-truth x-axis. For `Planar` the
/// best IoU over candidate ground-truth frames is taken.
pub fn symmetric_iou(pred: &PoseInstance, gt: &PoseInstance, symmetry: &Symmetry) -> f64 {
    let gt_box = gt.oriented_box();
    match symmetry {
        Symmetry::None => oriented_iou(&pred.oriented_box(), &gt_box),
        Symmetry::Axial => {
            let z = pred.pose.rotation.z_axis();
            let gx = gt.pose.rotation.x_axis();
            let x = gx - z * z.dot(&gx);
            let rotation = if x.norm() > 1e-9 {
                let x = x.normalize();
                Rotation::from_matrix(nalgebra::Matrix3::from_columns(&[x, z.cross(&x), z]))
                    .unwrap_or(pred.pose.rotation)
            } else {
                pred.pose.rotation
            };
            let spun = OrientedBox::new(Pose { rotation, ..pred.pose }, pred.scale);
            oriented_iou(&spun, &gt_box)
        }
        Symmetry::Planar(angles) => angles
            .iter()
            .map(|&a| {
                let cand = Pose {
                    rotation: gt.pose.rotation.compose(&Rotation::about_z(a)),
                    ..gt.pose
                };
                oriented_iou(&pred.oriented_box(), &OrientedBox::new(cand, gt.scale))
            })
            .fold(0.0, f64::max),
    }
}

/// Accuracy percentages, each in `[0, 100]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PoseScores {
    pub iou25: f64,
    pub iou50: f64,
    pub iou75: f64,
    pub deg5_cm2: f64,
    pub deg5_cm5: f64,
    pub deg10_cm5: f64,
    pub deg10_cm10: f64,
    pub deg5: f64,
    pub deg10: f64,
    pub cm2: f64,
    pub cm5: f64,
    pub cm10: f64,
}

impl PoseScores {
    pub const HEADERS: [&'static str; 12] = [
        "3D25",
        "3D50",
        "3D75",
        "5deg2cm",
        "5deg5cm",
        "10deg5cm",
        "10deg10cm",
        "5deg",
        "10deg",
        "2cm",
        "5cm",
        "10cm",
    ];

    pub fn values(&self) -> [f64; 12] {
        [
            self.iou25,
            self.iou50,
            self.iou75,
            self.deg5_cm2,
            self.deg5_cm5,
            self.deg10_cm5,
            self.deg10_cm10,
            self.deg5,
            self.deg10,
            self.cm2,
            self.cm5,
            self.cm10,
        ]
    }

    fn from_values(v: [f64; 12]) -> Self {
        PoseScores {
            iou25: v[0],
            iou50: v[1],
            iou75: v[2],
            deg5_cm2: v[3],
            deg5_cm5: v[4],
            deg10_cm5: v[5],
            deg10_cm10: v[6],
            deg5: v[7],
            deg10: v[8],
            cm2: v[9],
            cm5: v[10],
            cm10: v[11],
        }
    }

    fn assert_monotone(&self) {
        let ok = self.iou25 >= self.iou50
            && self.iou50 >= self.iou75
            && self.deg5_cm2 <= self.deg5_cm5
            && self.deg5_cm5 <= self.deg10_cm5
            && self.deg10_cm5 <= self.deg10_cm10
            && self.deg5 <= self.deg10
            && self.cm2 <= self.cm5
            && self.cm5 <= self.cm10;
        assert!(ok, "threshold percentages are not monotone: {self:?}");
        assert!(self.values().iter().all(|v| (0.0..=100.0).contains(v)));
    }
}

/// Per-instance outcome of every threshold test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceOutcome {
    pub rotation_deg: f64,
    pub translation_m: f64,
    pub iou: f64,
}

impl InstanceOutcome {
    /// Outcome of a missing prediction: fails every threshold.
    pub const MISSING: InstanceOutcome = InstanceOutcome {
        rotation_deg: f64::INFINITY,
        translation_m: f64::INFINITY,
        iou: 0.0,
    };

    fn hits(&self) -> [bool; 12] {
        let (r, t) = (self.rotation_deg, self.translation_m * 100.0);
        [
            self.iou > 0.25,
            self.iou > 0.5,
            self.iou > 0.75,
            r < 5.0 && t < 2.0,
            r < 5.0 && t < 5.0,
            r < 10.0 && t < 5.0,
            r < 10.0 && t < 10.0,
            r < 5.0,
            r < 10.0,
            t < 2.0,
            t < 5.0,
            t < 10.0,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricOptions {
    /// Reduce rotation error and IoU over the symmetry class of each
    /// category. With `false` every object is scored as `Symmetry::None`.
    pub symmetry_aware: bool,
}

impl Default for MetricOptions {
    fn default() -> Self {
        MetricOptions { symmetry_aware: true }
    }
}

pub fn score_instance(
    pred: &PoseInstance,
    gt: &PoseInstance,
    symmetries: &SymmetryMap,
    opts: MetricOptions,
) -> InstanceOutcome {
    let none = Symmetry::None;
    let sym = if opts.symmetry_aware {
        symmetries.get(&gt.category).unwrap_or(&none)
    } else {
        &none
    };
    InstanceOutcome {
        rotation_deg: rotation_error(&pred.pose.rotation, &gt.pose.rotation, sym),
        translation_m: (pred.pose.translation - gt.pose.translation).norm(),
        iou: symmetric_iou(pred, gt, sym),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScores {
    pub category: Category,
    pub count: usize,
    pub scores: PoseScores,
}

/// Pose accuracy per category plus the mean over categories present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseMetricsReport {
    pub per_category: Vec<CategoryScores>,
    pub mean: PoseScores,
    pub instances: usize,
}

impl PoseMetricsReport {
    /// Aggregates per-instance outcomes. Categories without instances are
    /// left out of both the table and the mean.
    pub fn from_outcomes(outcomes: &[(Category, InstanceOutcome)]) -> Self {
        let mut tally: BTreeMap<Category, (usize, [usize; 12])> = BTreeMap::new();
        for (cat, o) in outcomes {
            let entry = tally.entry(*cat).or_default();
            entry.0 += 1;
            for (slot, hit) in entry.1.iter_mut().zip(o.hits()) {
                *slot += hit as usize;
            }
        }
        let per_category: Vec<CategoryScores> = tally
            .into_iter()
            .map(|(category, (count, hits))| CategoryScores {
                category,
                count,
                scores: PoseScores::from_values(hits.map(|h| 100.0 * h as f64 / count as f64)),
            })
            .collect();
        let mean = if per_category.is_empty() {
            PoseScores::default()
        } else {
            let mut acc = [0.0; 12];
            for c in &per_category {
                for (a, v) in acc.iter_mut().zip(c.scores.values()) {
                    *a += v;
                }
            }
            PoseScores::from_values(acc.map(|a| a / per_category.len() as f64))
        };
        for c in &per_category {
            c.scores.assert_monotone();
        }
        mean.assert_monotone();
        PoseMetricsReport {
            per_category,
            mean,
            instances: outcomes.len(),
        }
    }

    /// One row per category plus a `mean` row.
    pub fn to_csv(&self) -> String {
        let mut s = format!("category,count,{}\n", PoseScores::HEADERS.join(","));
        let mut row = |name: &str, count: usize, v: [f64; 12]| {
            let cells: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
            let _ = writeln!(s, "{name},{count},{}", cells.join(","));
        };
        for c in &self.per_category {
            row(c.category.name(), c.count, c.scores.values());
        }
        row("mean", self.instances, self.mean.values());
        s
    }

    pub fn to_markdown(&self) -> String {
        let headers = [
            "3D25", "3D50", "3D75", "5°2cm", "5°5cm", "10°5cm", "10°10cm", "5°", "10°", "2cm", "5cm", "10cm",
        ];
        let mut s = format!("| Category | N | {} |\n", headers.join(" | "));
        let _ = writeln!(s, "|---|---:|{}", "---:|".repeat(headers.len()));
        let mut row = |name: &str, count: usize, v: [f64; 12]| {
            let cells: Vec<String> = v.iter().map(|x| format!("{x:.1}")).collect();
            let _ = writeln!(s, "| {name} | {count} | {} |", cells.join(" | "));
        };
        for c in &self.per_category {
            row(c.category.name(), c.count, c.scores.values());
        }
        row("**mean**", self.instances, self.mean.values());
        s
    }
}

/// Scores aligned prediction/annotation lists. `None` predictions count as
/// failures at every threshold.
pub fn pose_metrics(
    predictions: &[Option<PoseInstance>],
    ground_truth: &[PoseInstance],
    symmetries: &SymmetryMap,
    opts: MetricOptions,
) -> Result<PoseMetricsReport> {
    if predictions.len() != ground_truth.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: ground_truth.len(),
        });
    }
    let outcomes: Vec<(Category, InstanceOutcome)> = predictions
        .iter()
        .zip(ground_truth)
        .map(|(p, g)| {
            let o = p
                .as_ref()
                .map_or(InstanceOutcome::MISSING, |p| score_instance(p, g, symmetries, opts));
            (g.category, o)
        })
        .collect();
    Ok(PoseMetricsReport::from_outcomes(&outcomes))
}
