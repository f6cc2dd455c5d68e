//! The five subcommands. Each takes the resolved configuration and returns a
//! summary; the binary prints it and maps errors to exit codes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{HarnessConfig, ReportFormat};
use super::experiment::{
    featurize_frame, featurize_synthetic, grid_from_features, grid_seeds, Condition, GridReport, GRID,
};
use crate::error::{Error, Result};
use crate::estimator::{load_checkpoint, save_checkpoint, CheckpointHeader, LinearDecoder};
use crate::features::GeneralizedPointCloud;
use crate::gradcheck::{run_suite, CheckResult, Fault};
use crate::io;
use crate::metrics::{
    default_symmetry_map, pose_metrics, DepthAccumulator, MetricOptions, NormalAccumulator, PoseInstance,
    PoseMetricsReport,
};
use crate::pipeline::{
    annotation_instance, decoder_input, frame_features, predict_instance, FrameEstimates, InstanceFeatures,
    PredictionRecord,
};
use crate::rng::derive_seed;
use crate::synth::{
    compute_priors, generate_scene, read_dataset_meta, read_frame, write_dataset_meta, write_frame, DatasetMeta,
    FrameData,
};

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Renders `count` frames into `out_dir`; frame `i` uses seed
/// `derive_seed(cfg.seed, i)`. Returns the manifest path.
pub fn cmd_generate(cfg: &HarnessConfig, out_dir: &Path, count: u64) -> Result<PathBuf> {
    cfg.validate()?;
    create_dir(out_dir)?;
    let frames = (0..count)
        .into_par_iter()
        .map(|i| {
            let scene = generate_scene(&cfg.scene, derive_seed(cfg.seed, i))?;
            Ok((write_frame(out_dir, i, &scene)?, scene.instances))
        })
        .collect::<Result<Vec<_>>>()?;
    let priors = compute_priors(frames.iter().flat_map(|f| &f.1), &cfg.scene.templates)?;
    let entries = frames.into_iter().map(|f| f.0).collect();
    write_dataset_meta(out_dir, &cfg.scene.intrinsics, &priors, cfg.seed, entries)?;
    Ok(out_dir.join("manifest.json"))
}

#[derive(Debug, Clone, Default)]
pub struct PredictOptions {
    /// Write completed depth, normals and sampled clouds under this
    /// directory, one subdirectory per frame.
    pub dump_dir: Option<PathBuf>,
    /// Read sampled clouds from an earlier dump instead of running the
    /// estimators and the sampler.
    pub from_dump: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictSummary {
    pub records: usize,
    /// `(frame, instance)` pairs with nothing to sample.
    pub skipped: Vec<(u64, u8)>,
}

fn frame_dump_dir(root: &Path, frame: u64) -> PathBuf {
    root.join(format!("frame_{frame:06}"))
}

fn cloud_file(dir: &Path, id: u8) -> PathBuf {
    dir.join(format!("cloud_{id:02}.csv"))
}

fn dump_frame(root: &Path, frame: &FrameData, est: &FrameEstimates, feats: &[InstanceFeatures]) -> Result<()> {
    let dir = frame_dump_dir(root, frame.index);
    create_dir(&dir)?;
    let (w, h) = est.depth.dims();
    io::write_raw_f64(&dir.join("depth_completed.f64"), w, h, 1, est.depth.data())?;
    let normals: Vec<f64> = est
        .normals
        .data()
        .iter()
        .flat_map(|n| n.map_or([f64::NAN; 3], |n| [n.x, n.y, n.z]))
        .collect();
    io::write_raw_f64(&dir.join("normals.f64"), w, h, 3, &normals)?;
    for f in feats {
        f.cloud.save_csv(&cloud_file(&dir, f.id))?;
    }
    Ok(())
}

/// Features of every instance, from the estimators or from a dump.
fn instance_features(
    cfg: &HarnessConfig,
    meta: &DatasetMeta,
    frame: &FrameData,
    opts: &PredictOptions,
) -> Result<Vec<(u8, Option<InstanceFeatures>)>> {
    if let Some(root) = &opts.from_dump {
        let dir = frame_dump_dir(root, frame.index);
        return frame
            .instances
            .iter()
            .map(|ann| {
                let path = cloud_file(&dir, ann.id);
                if !path.exists() {
                    return Ok((ann.id, None));
                }
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                let cloud = GeneralizedPointCloud::read_csv(&text)?;
                let input = decoder_input(&cloud, frame, ann.category, &meta.priors)?;
                let f = InstanceFeatures {
                    id: ann.id,
                    category: ann.category,
                    cloud,
                    input,
                };
                Ok((ann.id, Some(f)))
            })
            .collect();
    }
    let est = &cfg.estimators;
    let depth = est.depth_completer(est.depth, cfg.seed);
    let normals = est.normal_estimator(est.normals, cfg.seed);
    let estimates = FrameEstimates::compute(frame, depth.as_ref(), normals.as_ref())?;
    let feats = frame_features(frame, &estimates, &meta.priors, &cfg.sampler, cfg.seed)?;
    if let Some(root) = &opts.dump_dir {
        let present: Vec<InstanceFeatures> = feats.iter().filter_map(|(_, f)| f.clone()).collect();
        dump_frame(root, frame, &estimates, &present)?;
    }
    Ok(feats.into_iter().map(|(a, f)| (a.id, f)).collect())
}

/// The configured decoder: the checkpoint if one is set, otherwise the
/// untrained default.
pub fn configured_decoder(cfg: &HarnessConfig) -> Result<LinearDecoder> {
    match &cfg.estimators.checkpoint {
        Some(path) => Ok(load_checkpoint(path)?.0),
        None => Ok(LinearDecoder::default()),
    }
}

/// Runs the pipeline on every frame of `dataset` and writes one JSON line
/// per predicted instance to `out`, ordered by frame then instance.
pub fn cmd_predict(cfg: &HarnessConfig, dataset: &Path, out: &Path, opts: &PredictOptions) -> Result<PredictSummary> {
    cfg.validate()?;
    let meta = read_dataset_meta(dataset)?;
    let decoder = configured_decoder(cfg)?;
    let per_frame = meta
        .manifest
        .frames
        .par_iter()
        .map(|entry| {
            let frame = read_frame(dataset, &meta, entry)?;
            let mut records = Vec::new();
            let mut skipped = Vec::new();
            for (id, f) in instance_features(cfg, &meta, &frame, opts)? {
                let Some(f) = f else {
                    skipped.push((frame.index, id));
                    continue;
                };
                let start = Instant::now();
                let mut r = predict_instance(&decoder, frame.index, &f, &f.category.default_symmetry())?;
                if cfg.record_timing {
                    r.elapsed_us = Some(start.elapsed().as_micros() as u64);
                }
                records.push(r);
            }
            Ok((records, skipped))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut text = String::new();
    let mut summary = PredictSummary {
        records: 0,
        skipped: Vec::new(),
    };
    for (records, skipped) in per_frame {
        for r in &records {
            text.push_str(&serde_json::to_string(r).expect("record serializes"));
            text.push('\n');
        }
        summary.records += records.len();
        summary.skipped.extend(skipped);
    }
    io::write_text(out, &text)?;
    Ok(summary)
}

/// Reads a JSON-lines prediction file.
pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::SchemaMismatch(format!("{} line {}: {e}", path.display(), n + 1)))
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct EvaluateOptions {
    pub predictions: Option<PathBuf>,
    /// Also score the configured depth and normal estimators.
    pub dense: bool,
    /// Run the depth/normal grid with the dataset as test set.
    pub grid: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct EvaluateSummary {
    pub pose: Option<PoseMetricsReport>,
    pub grid: Option<GridReport>,
    pub warnings: Vec<String>,
    pub written: Vec<PathBuf>,
}

fn write_report<T: Serialize>(
    cfg: &HarnessConfig,
    dir: &Path,
    stem: &str,
    value: &T,
    csv: &str,
    markdown: &str,
    written: &mut Vec<PathBuf>,
) -> Result<()> {
    for format in &cfg.metrics.formats {
        let path = match format {
            ReportFormat::Csv => {
                let p = dir.join(format!("{stem}.csv"));
                io::write_text(&p, csv)?;
                p
            }
            ReportFormat::Markdown => {
                let p = dir.join(format!("{stem}.md"));
                io::write_text(&p, markdown)?;
                p
            }
            ReportFormat::Json => {
                let p = dir.join(format!("{stem}.json"));
                io::write_json(&p, value)?;
                p
            }
        };
        written.push(path);
    }
    Ok(())
}

/// Pose accuracy of a prediction file against the dataset annotations, plus
/// the optional dense and grid reports, written to `report_dir`.
///
/// Annotated instances without a prediction fail every threshold.
pub fn cmd_evaluate(
    cfg: &HarnessConfig,
    dataset: &Path,
    report_dir: &Path,
    opts: &EvaluateOptions,
) -> Result<EvaluateSummary> {
    cfg.validate()?;
    let meta = read_dataset_meta(dataset)?;
    create_dir(report_dir)?;
    let mut summary = EvaluateSummary::default();

    if let Some(path) = &opts.predictions {
        let records = read_predictions(path)?;
        let mut by_key: BTreeMap<(u64, u8), PoseInstance> = BTreeMap::new();
        for r in &records {
            if by_key.insert((r.frame, r.instance), r.instance()).is_some() {
                return Err(Error::SchemaMismatch(format!(
                    "duplicate prediction for frame {} instance {}",
                    r.frame, r.instance
                )));
            }
        }
        let mut preds = Vec::new();
        let mut gts = Vec::new();
        for entry in &meta.manifest.frames {
            for ann in read_frame(dataset, &meta, entry)?.instances {
                let p = by_key.remove(&(entry.index, ann.id));
                if let Some(p) = &p {
                    if p.category != ann.category {
                        return Err(Error::SchemaMismatch(format!(
                            "frame {} instance {} predicted as {} but annotated as {}",
                            entry.index, ann.id, p.category, ann.category
                        )));
                    }
                }
                preds.push(p);
                gts.push(annotation_instance(&ann));
            }
        }
        if let Some((frame, id)) = by_key.keys().next() {
            return Err(Error::SchemaMismatch(format!(
                "prediction for frame {frame} instance {id} matches no annotation"
            )));
        }
        let missing = preds.iter().filter(|p| p.is_none()).count();
        if records.is_empty() {
            summary
                .warnings
                .push("prediction file is empty; every instance scores 0".into());
        } else if missing > 0 {
            summary
                .warnings
                .push(format!("{missing} annotated instances have no prediction"));
        }
        let options = MetricOptions {
            symmetry_aware: cfg.metrics.symmetry_aware,
        };
        let report = pose_metrics(&preds, &gts, &default_symmetry_map(), options)?;
        write_report(
            cfg,
            report_dir,
            "pose_metrics",
            &report,
            &report.to_csv(),
            &report.to_markdown(),
            &mut summary.written,
        )?;
        summary.pose = Some(report);
    }

    if opts.dense {
        let est = &cfg.estimators;
        let depth = est.depth_completer(est.depth, cfg.seed);
        let normals = est.normal_estimator(est.normals, cfg.seed);
        let mut d_acc = DepthAccumulator::default();
        let mut n_acc = NormalAccumulator::default();
        for entry in &meta.manifest.frames {
            let frame = read_frame(dataset, &meta, entry)?;
            let e = FrameEstimates::compute(&frame, depth.as_ref(), normals.as_ref())?;
            let mask = frame.transparency();
            d_acc.add(&e.depth, &frame.depth_gt, &mask)?;
            n_acc.add(&e.normals, &frame.normals, &mask)?;
        }
        match (d_acc.finish(), n_acc.finish()) {
            (Ok(d), Ok(n)) => {
                write_report(
                    cfg,
                    report_dir,
                    "depth_metrics",
                    &d,
                    &d.to_csv(),
                    &d.to_markdown(),
                    &mut summary.written,
                )?;
                write_report(
                    cfg,
                    report_dir,
                    "normal_metrics",
                    &n,
                    &n.to_csv(),
                    &n.to_markdown(),
                    &mut summary.written,
                )?;
            }
            _ => summary
                .warnings
                .push("no transparent pixels; dense metrics skipped".into()),
        }
    }

    if opts.grid {
        let [train_seed, _, _] = grid_seeds(cfg.seed);
        let train = featurize_synthetic(
            &cfg.scene,
            |i| derive_seed(train_seed, i),
            cfg.grid.train_frames,
            cfg,
            &GRID,
            &meta.priors,
        )?;
        let test = meta
            .manifest
            .frames
            .par_iter()
            .map(|entry| {
                let frame = read_frame(dataset, &meta, entry)?;
                featurize_frame(&frame, &cfg.estimators, &GRID, &meta.priors, &cfg.sampler, cfg.seed)
            })
            .collect::<Result<Vec<_>>>()?;
        let report = grid_from_features(&train, &test, cfg)?;
        write_report(
            cfg,
            report_dir,
            "grid",
            &report,
            &report.to_csv(),
            &report.to_markdown(),
            &mut summary.written,
        )?;
        summary.grid = Some(report);
    }
    Ok(summary)
}

pub fn cmd_gradcheck(cfg: &HarnessConfig, trials: usize, fault: Option<Fault>) -> Result<Vec<CheckResult>> {
    if trials == 0 {
        return Err(Error::Invalid("gradcheck needs at least one trial".into()));
    }
    Ok(run_suite(trials, cfg.seed, fault))
}

/// Plain-text table of gradient check results.
pub fn format_checks(results: &[CheckResult]) -> String {
    let mut s = String::new();
    for r in results {
        let _ = writeln!(
            s,
            "{:<4} {:<30} trials {:>5}  skipped {:>4}  max rel err {:.2e}  (tol {:.0e})",
            if r.passed { "ok" } else { "FAIL" },
            r.name,
            r.trials,
            r.skipped,
            r.max_rel_error,
            r.tolerance
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub samples: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub checkpoint: PathBuf,
    pub curve: PathBuf,
    pub checkpoint_sha256: String,
}

/// Fits a decoder on `dataset` with the configured estimators and writes the
/// checkpoint plus a per-epoch loss CSV next to it.
pub fn cmd_train_ref(cfg: &HarnessConfig, dataset: &Path, out: &Path) -> Result<TrainSummary> {
    cfg.validate()?;
    let meta = read_dataset_meta(dataset)?;
    let condition = Condition {
        depth: cfg.estimators.depth,
        normals: cfg.estimators.normals,
    };
    let feats = meta
        .manifest
        .frames
        .par_iter()
        .map(|entry| {
            let frame = read_frame(dataset, &meta, entry)?;
            featurize_frame(
                &frame,
                &cfg.estimators,
                &[condition],
                &meta.priors,
                &cfg.sampler,
                cfg.seed,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let instances: Vec<_> = feats.iter().flat_map(|f| &f[0]).collect();
    let samples = instances.iter().filter(|f| f.input.is_some()).count();
    let outcome = super::experiment::train_decoder(instances, &cfg.train)?;

    let header = CheckpointHeader::new(cfg.seed, io::sha256_hex(cfg.to_toml().as_bytes()));
    save_checkpoint(out, &outcome.decoder, &header)?;
    let mut csv = String::from("epoch,total,translation,rot_x,rot_z,angular,conf_x,conf_z,scale\n");
    for r in &outcome.history {
        let t = &r.terms;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            r.epoch, r.total, t.translation, t.rot_x, t.rot_z, t.angular, t.conf_x, t.conf_z, t.scale
        );
    }
    let curve = out.with_extension("loss.csv");
    io::write_text(&curve, &csv)?;
    Ok(TrainSummary {
        samples,
        initial_loss: outcome.history.first().map_or(f64::NAN, |r| r.total),
        final_loss: outcome.history.last().map_or(f64::NAN, |r| r.total),
        checkpoint: out.to_path_buf(),
        curve,
        checkpoint_sha256: io::sha256_file(out)?,
    })
}
