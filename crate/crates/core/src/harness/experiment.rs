//! In-memory experiments: featurizing frames under several estimator
//! conditions, training a decoder per condition and the depth/normal grid.

use rayon::prelude::*;
use serde::Serialize;

use super::config::{DepthSource, EstimatorConfig, HarnessConfig, NormalSource};
use crate::error::Result;
use crate::estimator::{train_reference, DecoderInput, LinearDecoder, TrainConfig, TrainOutcome, TrainingSample};
use crate::loss::PoseTarget;
use crate::metrics::{default_symmetry_map, pose_metrics, MetricOptions, PoseInstance, PoseMetricsReport};
use crate::pipeline::{annotation_instance, frame_features, FrameEstimates, SamplerConfig};
use crate::recovery::CategoryPriors;
use crate::rng::{derive_labeled, derive_seed};
use crate::synth::{compute_priors, generate_scene, FrameData, InstanceAnnotation, SceneConfig};

/// One annotated instance and its decoder input, `None` when nothing of it
/// could be sampled.
#[derive(Debug, Clone, PartialEq)]
pub struct Featurized {
    pub annotation: InstanceAnnotation,
    pub input: Option<DecoderInput>,
}

impl Featurized {
    pub fn training_sample(&self) -> Option<TrainingSample> {
        Some(TrainingSample {
            input: self.input.clone()?,
            target: PoseTarget {
                pose: self.annotation.pose,
                scale: self.annotation.scale,
            },
            symmetry: self.annotation.symmetry.clone(),
        })
    }
}

/// A depth source paired with a normal source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Condition {
    pub depth: DepthSource,
    pub normals: NormalSource,
}

impl Condition {
    pub const ORACLE: Condition = Condition {
        depth: DepthSource::Oracle,
        normals: NormalSource::Oracle,
    };

    /// `GT/EST` style label, depth first.
    pub fn label(&self) -> String {
        let tag = |oracle: bool, raw: bool| match (oracle, raw) {
            (true, _) => "GT",
            (_, true) => "RAW",
            _ => "EST",
        };
        format!(
            "{}/{}",
            tag(self.depth == DepthSource::Oracle, self.depth == DepthSource::Raw),
            tag(self.normals == NormalSource::Oracle, false)
        )
    }
}

/// The four rows of the grid, in report order.
pub const GRID: [Condition; 4] = [
    Condition {
        depth: DepthSource::Oracle,
        normals: NormalSource::Oracle,
    },
    Condition {
        depth: DepthSource::Oracle,
        normals: NormalSource::Noisy,
    },
    Condition {
        depth: DepthSource::Noisy,
        normals: NormalSource::Oracle,
    },
    Condition {
        depth: DepthSource::Noisy,
        normals: NormalSource::Noisy,
    },
];

/// Decoder inputs of every instance of `frame`, once per condition.
pub fn featurize_frame(
    frame: &FrameData,
    estimators: &EstimatorConfig,
    conditions: &[Condition],
    priors: &CategoryPriors,
    sampler: &SamplerConfig,
    run_seed: u64,
) -> Result<Vec<Vec<Featurized>>> {
    conditions
        .iter()
        .map(|c| {
            let depth = estimators.depth_completer(c.depth, run_seed);
            let normals = estimators.normal_estimator(c.normals, run_seed);
            let est = FrameEstimates::compute(frame, depth.as_ref(), normals.as_ref())?;
            Ok(frame_features(frame, &est, priors, sampler, run_seed)?
                .into_iter()
                .map(|(annotation, f)| Featurized {
                    annotation,
                    input: f.map(|f| f.input),
                })
                .collect())
        })
        .collect()
}

/// Renders frame `i` from seed `seeds(i)` for `i < count` and featurizes it,
/// in parallel, dropping the images as it goes. Indexed `[frame][condition]`.
pub fn featurize_synthetic(
    scene: &SceneConfig,
    seeds: impl Fn(u64) -> u64 + Sync,
    count: u64,
    cfg: &HarnessConfig,
    conditions: &[Condition],
    priors: &CategoryPriors,
) -> Result<Vec<Vec<Vec<Featurized>>>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let frame = FrameData::from_scene(i, &generate_scene(scene, seeds(i))?);
            featurize_frame(&frame, &cfg.estimators, conditions, priors, &cfg.sampler, cfg.seed)
        })
        .collect()
}

/// Mean extents over `count` synthetic frames.
pub fn synthetic_priors(scene: &SceneConfig, seeds: impl Fn(u64) -> u64 + Sync, count: u64) -> Result<CategoryPriors> {
    let anns: Vec<Vec<InstanceAnnotation>> = (0..count)
        .into_par_iter()
        .map(|i| Ok(generate_scene(scene, seeds(i))?.instances))
        .collect::<Result<_>>()?;
    compute_priors(anns.iter().flatten(), &scene.templates)
}

/// Standardizes a fresh decoder on the training inputs and fits it.
pub fn train_decoder<'a>(
    instances: impl IntoIterator<Item = &'a Featurized>,
    train: &TrainConfig,
) -> Result<TrainOutcome> {
    let samples: Vec<TrainingSample> = instances.into_iter().filter_map(Featurized::training_sample).collect();
    let inputs: Vec<&DecoderInput> = samples.iter().map(|s| &s.input).collect();
    let model = LinearDecoder::standardized_for(&inputs)?;
    train_reference(&model, &samples, train)
}

/// Scores `decoder` on every instance; instances without input count as
/// misses.
pub fn evaluate_decoder<'a>(
    decoder: &LinearDecoder,
    instances: impl IntoIterator<Item = &'a Featurized>,
    opts: MetricOptions,
) -> Result<PoseMetricsReport> {
    let mut preds = Vec::new();
    let mut gts = Vec::new();
    for f in instances {
        gts.push(annotation_instance(&f.annotation));
        let pred = match &f.input {
            None => None,
            Some(input) => {
                let (pose, scale) = decoder
                    .decode(input)?
                    .recover(&f.annotation.category.default_symmetry())?;
                Some(PoseInstance {
                    category: f.annotation.category,
                    pose,
                    scale,
                })
            }
        };
        preds.push(pred);
    }
    pose_metrics(&preds, &gts, &default_symmetry_map(), opts)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    pub label: String,
    pub condition: Condition,
    /// Loss of the condition's decoder on its training set, before and after.
    pub initial_loss: f64,
    pub final_loss: f64,
    pub report: PoseMetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendCheck {
    pub description: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridReport {
    pub train_frames: u64,
    pub test_frames: u64,
    pub rows: Vec<GridRow>,
    pub checks: Vec<TrendCheck>,
}

impl GridReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Mean scores per condition, one row each.
    pub fn to_markdown(&self) -> String {
        let mut s = String::from(
            "| depth/normals | 3D25 | 3D50 | 3D75 | 5°2cm | 5°5cm | 10°5cm | 10°10cm | 5° | 10° | 2cm | 5cm | 10cm |\n",
        );
        s.push_str("|---|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|\n");
        for r in &self.rows {
            let cells: Vec<String> = r.report.mean.values().iter().map(|v| format!("{v:.1}")).collect();
            s.push_str(&format!("| {} | {} |\n", r.label, cells.join(" | ")));
        }
        s.push('\n');
        for c in &self.checks {
            s.push_str(&format!(
                "- [{}] {}\n",
                if c.passed { "pass" } else { "FAIL" },
                c.description
            ));
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("condition,{}\n", crate::metrics::PoseScores::HEADERS.join(","));
        for r in &self.rows {
            let cells: Vec<String> = r.report.mean.values().iter().map(|v| format!("{v:.4}")).collect();
            s.push_str(&format!("{},{}\n", r.label, cells.join(",")));
        }
        s
    }
}

/// Ordering checks over the four rows of [`GRID`].
///
/// Both mixed conditions must sit between oracle/oracle and
/// estimated/estimated on 5°5cm and 10°5cm, and swapping in estimated depth
/// must cost more 2cm accuracy than swapping in estimated normals.
pub fn trend_checks(rows: &[GridRow]) -> Vec<TrendCheck> {
    let [gg, ge, eg, ee] = [0, 1, 2, 3].map(|i| &rows[i].report.mean);
    let mut out = Vec::new();
    let metrics: [(&str, fn(&crate::metrics::PoseScores) -> f64); 2] =
        [("5°5cm", |m| m.deg5_cm5), ("10°5cm", |m| m.deg10_cm5)];
    for (name, get) in metrics {
        for (mixed, label) in [(ge, "GT/EST"), (eg, "EST/GT")] {
            out.push(TrendCheck {
                description: format!("{name}: GT/GT {:.1} >= {label} {:.1}", get(gg), get(mixed)),
                passed: get(gg) >= get(mixed),
            });
            out.push(TrendCheck {
                description: format!("{name}: {label} {:.1} >= EST/EST {:.1}", get(mixed), get(ee)),
                passed: get(mixed) >= get(ee),
            });
        }
    }
    let depth_drop = gg.cm2 - eg.cm2;
    let normal_drop = gg.cm2 - ge.cm2;
    out.push(TrendCheck {
        description: format!("2cm: estimated depth costs {depth_drop:.1} points, estimated normals {normal_drop:.1}"),
        passed: depth_drop > normal_drop,
    });
    out
}

/// Trains one decoder per grid condition on `train` and scores it on `test`.
/// Both are indexed `[frame][condition]` in [`GRID`] order.
pub fn grid_from_features(
    train: &[Vec<Vec<Featurized>>],
    test: &[Vec<Vec<Featurized>>],
    cfg: &HarnessConfig,
) -> Result<GridReport> {
    let opts = MetricOptions {
        symmetry_aware: cfg.metrics.symmetry_aware,
    };
    let mut rows = Vec::with_capacity(GRID.len());
    for (c, condition) in GRID.iter().enumerate() {
        let outcome = train_decoder(train.iter().flat_map(|f| &f[c]), &cfg.train)?;
        let report = evaluate_decoder(&outcome.decoder, test.iter().flat_map(|f| &f[c]), opts)?;
        rows.push(GridRow {
            label: condition.label(),
            condition: *condition,
            initial_loss: outcome.history.first().map_or(f64::NAN, |r| r.total),
            final_loss: outcome.history.last().map_or(f64::NAN, |r| r.total),
            report,
        });
    }
    Ok(GridReport {
        train_frames: train.len() as u64,
        test_frames: test.len() as u64,
        checks: trend_checks(&rows),
        rows,
    })
}

/// Seed streams of the synthetic grid: training, test and prior frames.
pub fn grid_seeds(seed: u64) -> [u64; 3] {
    ["grid/train", "grid/test", "grid/priors"].map(|l| derive_labeled(seed, l))
}

/// Frames used for the synthetic category priors of the grid.
pub const PRIOR_FRAMES: u64 = 50;

/// The full grid on synthetic frames drawn from `cfg.scene`.
pub fn run_grid(cfg: &HarnessConfig) -> Result<GridReport> {
    cfg.validate()?;
    let [train_seed, test_seed, prior_seed] = grid_seeds(cfg.seed);
    let priors = synthetic_priors(&cfg.scene, |i| derive_seed(prior_seed, i), PRIOR_FRAMES)?;
    let train = featurize_synthetic(
        &cfg.scene,
        |i| derive_seed(train_seed, i),
        cfg.grid.train_frames,
        cfg,
        &GRID,
        &priors,
    )?;
    let test = featurize_synthetic(
        &cfg.scene,
        |i| derive_seed(test_seed, i),
        cfg.grid.test_frames,
        cfg,
        &GRID,
        &priors,
    )?;
    grid_from_features(&train, &test, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels() {
        let labels: Vec<String> = GRID.iter().map(Condition::label).collect();
        assert_eq!(labels, ["GT/GT", "GT/EST", "EST/GT", "EST/EST"]);
    }

    #[test]
    fn featurized_conditions_share_annotations() {
        let cfg = HarnessConfig::default();
        let priors = synthetic_priors(&cfg.scene, |i| i, 2).unwrap();
        let f = featurize_synthetic(&cfg.scene, |i| i + 10, 2, &cfg, &GRID, &priors).unwrap();
        assert_eq!(f.len(), 2);
        for frame in &f {
            assert_eq!(frame.len(), 4);
            for c in &frame[1..] {
                let a: Vec<_> = c.iter().map(|x| &x.annotation).collect();
                let b: Vec<_> = frame[0].iter().map(|x| &x.annotation).collect();
                assert_eq!(a, b);
            }
            // Only normals differ between the first two conditions, so the
            // translation prior (from depth) agrees.
            for (a, b) in frame[0].iter().zip(&frame[1]) {
                if let (Some(a), Some(b)) = (&a.input, &b.input) {
                    assert_eq!(a.translation_prior, b.translation_prior);
                    assert_ne!(a.features, b.features);
                }
            }
        }
    }

    #[test]
    fn small_grid_runs_and_trains() {
        let mut cfg = HarnessConfig::default();
        cfg.grid.train_frames = 4;
        cfg.grid.test_frames = 2;
        cfg.train.epochs = 200;
        let r = run_grid(&cfg).unwrap();
        assert_eq!(r.rows.len(), 4);
        assert_eq!(r.checks.len(), 9);
        for row in &r.rows {
            assert!(row.final_loss < row.initial_loss, "{}", row.label);
        }
        assert!(r.to_markdown().contains("| EST/EST |"));
    }
}
