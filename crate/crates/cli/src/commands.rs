use std::fs;
use std::path::{Path, PathBuf};

use occlusim::checksum::{checksum64, mix_seed};
use occlusim::dataset::{list_sequences, read_manifest, read_sequence, write_sequence};
use occlusim::metrics::{coverage_bucket, evaluate_pair, report_from_scores, BucketMetrics, SampleMetrics};
use occlusim::recon::{reconstruct, MaskSource};
use occlusim::repr::event_preview;
use occlusim::sequence::{simulate_sequence, SequenceSpec};
use occlusim::{AccumParams, Error, EventCameraParams, IntensityFrame, MetricsReport, Result, SceneConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::args::{
    AccumArgs, EvaluateArgs, GenerateArgs, PreviewArgs, ReconstructArgs, SweepArgs, COVERAGE_DECILES,
};
use crate::plot::line_plot_svg;

pub const RECON_F32: &str = "recon.f32";
pub const RECON_PNG: &str = "recon.png";
pub const RECON_JSON: &str = "recon.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const REPORT_CSV: &str = "report.csv";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_SVG: &str = "sweep.svg";

pub fn seq_id(index: usize) -> String {
    format!("seq_{index:04}")
}

/// Spec of sequence `index` in a dataset generated from `seed`.
pub fn dataset_spec(seed: u64, index: usize, scene: SceneConfig, camera: EventCameraParams) -> SequenceSpec {
    SequenceSpec::derived(seed, index as u64, scene, camera)
}

/// Spec of the `index`-th sweep sequence at one coverage decile.
pub fn sweep_spec(seed: u64, coverage: f64, index: usize, scene: SceneConfig, camera: EventCameraParams) -> SequenceSpec {
    let pct = (coverage * 100.0).round() as u64;
    let scene = SceneConfig {
        target_coverage: coverage,
        ..scene
    };
    SequenceSpec::derived(mix_seed(seed, pct), index as u64, scene, camera)
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let n = match workers {
        Some(0) => return Err(Error::Config("--workers must be at least 1".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()).min(4),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

#[derive(Debug, Clone, Serialize)]
pub struct GenerateSummary {
    pub root: PathBuf,
    pub sequences: usize,
    pub events: u64,
    pub per_bucket: Vec<(u32, usize)>,
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<GenerateSummary> {
    let n = args.sequence_count();
    let camera = args.camera.params();
    let specs: Vec<SequenceSpec> = (0..n)
        .map(|i| {
            let mut spec = dataset_spec(args.seed, i, args.scene.config(args.coverage.for_index(i)), camera);
            spec.n_repr = args.n_repr;
            spec.tau_us = args.tau_us;
            spec
        })
        .collect();
    // reject bad flags before touching the file system
    args.scene.config(args.coverage.for_index(0)).validate()?;
    camera.validate()?;
    for spec in &specs {
        spec.validate()?;
    }

    let root = &args.root.root;
    fs::create_dir_all(root)?;
    let manifests = pool(args.workers)?.install(|| {
        specs
            .par_iter()
            .enumerate()
            .map(|(i, spec)| {
                let artifacts = simulate_sequence(spec)?;
                write_sequence(root.join(seq_id(i)), spec, &artifacts)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut per_bucket: Vec<(u32, usize)> = Vec::new();
    for m in &manifests {
        let b = coverage_bucket(m.measured_coverage);
        match per_bucket.iter_mut().find(|(k, _)| *k == b) {
            Some(entry) => entry.1 += 1,
            None => per_bucket.push((b, 1)),
        }
    }
    per_bucket.sort_unstable();
    Ok(GenerateSummary {
        root: root.clone(),
        sequences: n,
        events: manifests.iter().map(|m| m.event_count).sum(),
        per_bucket,
    })
}

/// Per-sequence reconstruction record written next to the float32 output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconRecord {
    pub seq_id: String,
    pub mask_source: MaskSource,
    pub params: AccumParams,
    pub occluder_intensity: Option<f64>,
    pub mask_coverage: f64,
    pub fallback_pixels: usize,
    pub measured_coverage: f64,
    pub metrics: SampleMetrics,
    /// Hex checksum of `recon.f32`.
    pub recon_checksum: String,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes)?;
    Ok(())
}

pub fn reconstruct_one(dir: &Path, accum: &AccumArgs, threshold: Option<f64>) -> Result<ReconRecord> {
    let seq = read_sequence(dir)?;
    let camera = seq.manifest.camera;
    let params = accum.params(threshold.unwrap_or(camera.contrast_threshold), camera.log_eps);
    let mask = accum.use_gt_mask.then_some(&seq.mask);
    let rec = reconstruct(&seq.occluded, &seq.events, &params, mask)?;
    let bytes = rec.frame.to_f32_bytes();
    write_file(&dir.join(RECON_F32), &bytes)?;
    rec.frame.write_png(dir.join(RECON_PNG))?;
    let record = ReconRecord {
        seq_id: seq.manifest.seq_id.clone(),
        mask_source: rec.mask_source,
        params,
        occluder_intensity: rec.occluder_intensity,
        mask_coverage: rec.mask.coverage_ratio(),
        fallback_pixels: rec.fallback_pixels,
        measured_coverage: seq.manifest.measured_coverage,
        metrics: evaluate_pair(&rec.frame, &seq.gt)?,
        recon_checksum: format!("{:016x}", checksum64(&bytes)),
    };
    write_file(&dir.join(RECON_JSON), serde_json::to_string_pretty(&record)?.as_bytes())?;
    Ok(record)
}

#[derive(Debug, Clone, Serialize)]
pub struct ReconstructSummary {
    pub sequences: usize,
    pub mask_source: MaskSource,
    pub fallback_pixels: usize,
}

pub fn cmd_reconstruct(args: &ReconstructArgs) -> Result<ReconstructSummary> {
    if let Some(c) = args.contrast_threshold {
        AccumParams::for_threshold(c).validate()?;
    }
    let dirs = list_sequences(&args.root.root)?;
    if dirs.is_empty() {
        return Err(Error::Empty(format!("no sequences under {}", args.root.root.display())));
    }
    let records = pool(args.workers)?.install(|| {
        dirs.par_iter()
            .map(|d| reconstruct_one(d, &args.accum, args.contrast_threshold))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(ReconstructSummary {
        sequences: records.len(),
        mask_source: if args.accum.use_gt_mask {
            MaskSource::GroundTruth
        } else {
            MaskSource::Heuristic
        },
        fallback_pixels: records.iter().map(|r| r.fallback_pixels).sum(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationFile {
    pub mask_source: MaskSource,
    pub report: MetricsReport,
}

fn load_checked_f32(path: &Path, width: usize, height: usize, expected: Option<u64>) -> Result<IntensityFrame> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = fs::read(path)?;
    if let Some(expected) = expected {
        let actual = checksum64(&bytes);
        if actual != expected {
            return Err(Error::Checksum {
                path: path.to_path_buf(),
                expected,
                actual,
            });
        }
    }
    IntensityFrame::from_f32_bytes(width, height, &bytes)
}

fn score_one(dir: &Path) -> Result<(MaskSource, u32, SampleMetrics)> {
    let manifest = read_manifest(dir)?;
    let record_path = dir.join(RECON_JSON);
    if !record_path.exists() {
        return Err(Error::MissingFile(record_path));
    }
    let record: ReconRecord = serde_json::from_str(&fs::read_to_string(&record_path)?)?;
    let (w, h) = (manifest.width, manifest.height);
    let recon_sum = u64::from_str_radix(&record.recon_checksum, 16).ok();
    let pred = load_checked_f32(&dir.join(RECON_F32), w, h, recon_sum)?;
    let gt_name = &manifest.files.gt_f32;
    let gt = load_checked_f32(&dir.join(gt_name), w, h, manifest.checksum_of(gt_name))?;
    Ok((record.mask_source, coverage_bucket(manifest.measured_coverage), evaluate_pair(&pred, &gt)?))
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluateSummary {
    pub out: PathBuf,
    pub mask_source: MaskSource,
    pub report: MetricsReport,
}

pub fn mask_label(source: MaskSource) -> &'static str {
    match source {
        MaskSource::Heuristic => "Accumulation Method (similar-intensity mask)",
        MaskSource::GroundTruth => "Accumulation Method (ground-truth mask)",
    }
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<EvaluateSummary> {
    let dirs = list_sequences(&args.root.root)?;
    if dirs.is_empty() {
        return Err(Error::Empty(format!("no sequences under {}", args.root.root.display())));
    }
    let scored = pool(args.workers)?.install(|| dirs.par_iter().map(|d| score_one(d)).collect::<Result<Vec<_>>>())?;
    let mask_source = scored[0].0;
    if scored.iter().any(|(s, _, _)| *s != mask_source) {
        return Err(Error::Config(
            "reconstructions mix ground-truth and estimated masks; rerun reconstruct".into(),
        ));
    }
    let pairs: Vec<(u32, SampleMetrics)> = scored.iter().map(|&(_, b, m)| (b, m)).collect();
    let report = report_from_scores(&pairs)?;

    let out = args.out.clone().unwrap_or_else(|| args.root.root.clone());
    fs::create_dir_all(&out)?;
    let file = EvaluationFile {
        mask_source,
        report: report.clone(),
    };
    write_file(&out.join(REPORT_JSON), serde_json::to_string_pretty(&file)?.as_bytes())?;
    write_file(&out.join(REPORT_TXT), report.to_text_table(mask_label(mask_source)).as_bytes())?;
    write_file(&out.join(REPORT_CSV), report.to_csv().as_bytes())?;
    Ok(EvaluateSummary {
        out,
        mask_source,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub coverage_pct: u32,
    pub mean_coverage: f64,
    pub metrics: BucketMetrics,
}

/// One scored sweep sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSample {
    pub coverage_pct: u32,
    pub measured_coverage: f64,
    pub metrics: SampleMetrics,
}

/// Simulates, reconstructs and scores every sweep sequence in memory, in
/// decile-major order.
pub fn sweep_samples(
    seed: u64,
    per_bucket: usize,
    scene: SceneConfig,
    camera: EventCameraParams,
    accum: &AccumArgs,
) -> Result<Vec<SweepSample>> {
    if per_bucket == 0 {
        return Err(Error::Config("--sequences must be at least 1 for a sweep".into()));
    }
    let params = accum.params(camera.contrast_threshold, camera.log_eps);
    params.validate()?;
    camera.validate()?;
    let jobs: Vec<(f64, usize)> = COVERAGE_DECILES
        .iter()
        .flat_map(|&c| (0..per_bucket).map(move |k| (c, k)))
        .collect();
    for &c in &COVERAGE_DECILES {
        SceneConfig {
            target_coverage: c,
            ..scene
        }
        .validate()?;
    }
    jobs.par_iter()
        .map(|&(c, k)| {
            let spec = sweep_spec(seed, c, k, scene, camera);
            let a = simulate_sequence(&spec)?;
            let mask = accum.use_gt_mask.then_some(&a.mask);
            let rec = reconstruct(&a.occluded, &a.events, &params, mask)?;
            Ok(SweepSample {
                coverage_pct: (c * 100.0).round() as u32,
                measured_coverage: a.coverage(),
                metrics: evaluate_pair(&rec.frame, &a.gt)?,
            })
        })
        .collect()
}

/// Per-decile means; rows are keyed by target decile.
pub fn sweep_rows(samples: &[SweepSample]) -> Result<Vec<SweepRow>> {
    let pairs: Vec<(u32, SampleMetrics)> = samples.iter().map(|s| (s.coverage_pct, s.metrics)).collect();
    let report = report_from_scores(&pairs)?;
    Ok(report
        .per_bucket
        .unwrap_or_default()
        .into_iter()
        .map(|(b, metrics)| {
            let covs: Vec<f64> = samples
                .iter()
                .filter(|s| s.coverage_pct == b)
                .map(|s| s.measured_coverage)
                .collect();
            SweepRow {
                coverage_pct: b,
                mean_coverage: covs.iter().sum::<f64>() / covs.len() as f64,
                metrics,
            }
        })
        .collect())
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("coverage_pct,n,mean_coverage,psnr_db,ssim,mae\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.6},{},{:.6},{:.6}\n",
            r.coverage_pct,
            r.metrics.n_samples,
            r.mean_coverage,
            occlusim::metrics::format_db(r.metrics.psnr_db),
            r.metrics.ssim,
            r.metrics.mae
        ));
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub csv: PathBuf,
    pub svg: PathBuf,
    pub rows: Vec<SweepRow>,
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<SweepSummary> {
    let scene = args.scene.config(COVERAGE_DECILES[0]);
    let camera = args.camera.params();
    let samples = pool(args.workers)?.install(|| sweep_samples(args.seed, args.sequences, scene, camera, &args.accum))?;
    let rows = sweep_rows(&samples)?;

    let root = &args.root.root;
    fs::create_dir_all(root)?;
    let csv = root.join(SWEEP_CSV);
    let svg = root.join(SWEEP_SVG);
    write_file(&csv, sweep_csv(&rows).as_bytes())?;
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (f64::from(r.coverage_pct), r.metrics.psnr_db)).collect();
    let source = if args.accum.use_gt_mask {
        MaskSource::GroundTruth
    } else {
        MaskSource::Heuristic
    };
    write_file(
        &svg,
        line_plot_svg(mask_label(source), "coverage (%)", "PSNR (dB)", &points).as_bytes(),
    )?;
    Ok(SweepSummary { csv, svg, rows })
}

#[derive(Debug, Clone, Serialize)]
pub struct PreviewSummary {
    pub dir: PathBuf,
    pub images: Vec<PathBuf>,
}

/// Frames laid side by side with a white gap.
fn hstack(frames: &[&IntensityFrame]) -> IntensityFrame {
    const GAP: usize = 4;
    let h = frames.iter().map(|f| f.height()).max().unwrap_or(0);
    let w = frames.iter().map(|f| f.width()).sum::<usize>() + GAP * frames.len().saturating_sub(1);
    let mut out = IntensityFrame::filled(w, h, 1.0);
    let mut x0 = 0;
    for f in frames {
        for y in 0..f.height() {
            for x in 0..f.width() {
                out.set(x0 + x, y, f.get(x, y));
            }
        }
        x0 += f.width() + GAP;
    }
    out
}

pub fn cmd_preview(args: &PreviewArgs) -> Result<PreviewSummary> {
    let root = &args.root.root;
    let dir = match &args.seq {
        Some(name) => root.join(name),
        None => list_sequences(root)?
            .into_iter()
            .next()
            .ok_or_else(|| Error::Empty(format!("no sequences under {}", root.display())))?,
    };
    let seq = read_sequence(&dir)?;
    let out = dir.join("preview");
    fs::create_dir_all(&out)?;
    let mut images = Vec::new();
    for (k, frame) in seq.repr.frames.iter().enumerate() {
        let path = out.join(format!("repr_{k:02}.png"));
        event_preview(frame, args.max_count).save(&path)?;
        images.push(path);
    }
    let recon_path = dir.join(RECON_F32);
    let recon = if recon_path.exists() {
        Some(IntensityFrame::read_f32(&recon_path, seq.manifest.width, seq.manifest.height)?)
    } else {
        None
    };
    let mut panel = vec![&seq.occluded, &seq.gt];
    panel.extend(recon.as_ref());
    let path = out.join("panel.png");
    hstack(&panel).write_png(&path)?;
    images.push(path);
    Ok(PreviewSummary { dir: out, images })
}
