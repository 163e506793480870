//! One function per subcommand.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use lbvs_core::fdm::{build_fdm_with_sigma, degrees_to_pixels, fixations_for_frame, FixationWeighting};
use lbvs_core::features::{extract_frame, motion_from_residuals, BlockMatching, FeatureStack, CHANNELS};
use lbvs_core::fusion::{
    fit_lms_weights, fuse_fixed, rf_predict, rf_train, sample_pixels, FusionMethod, RandomForestModel,
    METHOD_NAMES, NUM_FEATURES,
};
use lbvs_core::io::{parse_fixation_log, read_pfm, write_map, write_points_csv, HdrFrame};
use lbvs_core::metrics::{evaluate_frames, ComparisonTable, EvaluationReport, MetricMeans, ShufflePool};
use lbvs_core::Field2D;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{CliError, StageContext};
use crate::layout::{create_dir, frame_file_name, list_files, Layout};
use crate::manifest::Manifest;

/// Frames held in memory at once by streaming stages.
const CHUNK_FRAMES: usize = 16;

/// `(x, y, weight)` per fixation.
type WeightedPoints = Vec<(usize, usize, f64)>;

/// `(features, FDM)` per frame.
type TrainingFrames = Vec<(FeatureStack<f64>, Field2D<f64>)>;

/// Everything a stage needs: the effective configuration and the sequences
/// it should touch.
#[derive(Debug, Clone)]
pub struct Context {
    pub cfg: PipelineConfig,
    pub layout: Layout,
    /// Restricts a stage to these sequences when non-empty.
    pub only: Vec<String>,
}

impl Context {
    pub fn new(cfg: PipelineConfig, only: Vec<String>) -> Self {
        let layout = Layout {
            data_dir: cfg.paths.data_dir.clone(),
            out: cfg.paths.output_dir.clone(),
        };
        Self { cfg, layout, only }
    }

    fn config_json(&self) -> String {
        self.cfg.canonical_json()
    }

    fn pick(&self, stage: &'static str, list: Vec<String>, what: &str) -> Result<Vec<String>, CliError> {
        let list = if self.only.is_empty() { list } else { self.only.clone() };
        if list.is_empty() {
            return Err(CliError::Config(format!("{stage}: no {what} sequences configured")));
        }
        Ok(list)
    }

    /// Training then validation sequences, each once.
    fn all_sequences(&self, stage: &'static str) -> Result<Vec<String>, CliError> {
        let mut seen = BTreeSet::new();
        let list = self
            .cfg
            .sequences
            .train
            .iter()
            .chain(&self.cfg.sequences.validation)
            .filter(|s| seen.insert(s.as_str()))
            .cloned()
            .collect();
        self.pick(stage, list, "")
    }

    fn train_sequences(&self, stage: &'static str) -> Result<Vec<String>, CliError> {
        self.pick(stage, self.cfg.sequences.train.clone(), "training")
    }

    fn validation_sequences(&self, stage: &'static str) -> Result<Vec<String>, CliError> {
        self.pick(stage, self.cfg.sequences.validation.clone(), "validation")
    }

    fn model_dir(&self) -> PathBuf {
        let p = self.cfg.model_path();
        p.parent().map(Path::to_path_buf).unwrap_or_default()
    }

    fn lms_weights_path(&self) -> PathBuf {
        self.model_dir().join("lms_weights.json")
    }
}

fn write_text(stage: &'static str, path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Io {
        stage,
        path: path.to_path_buf(),
        source,
    })
}

/// HDR frames → four conspicuity maps per frame.
pub fn extract_features(ctx: &Context) -> Result<String, CliError> {
    const STAGE: &str = "extract-features";
    let fcfg = ctx.cfg.feature_config()?;
    let engine = BlockMatching {
        block_size: fcfg.motion.block_size,
        search_radius: fcfg.motion.search_radius,
    };
    let root = ctx.layout.features_root();
    let mut manifest = Manifest::new(STAGE, &ctx.config_json());
    let mut summary = String::new();
    for seq in ctx.all_sequences(STAGE)? {
        let files = ctx.layout.frame_files(STAGE, &seq)?;
        for c in CHANNELS {
            create_dir(STAGE, &ctx.layout.channel_dir(&seq, c))?;
        }
        let mut carry: Option<Field2D<f64>> = None;
        let mut dims = None;
        for (chunk_no, chunk) in files.chunks(CHUNK_FRAMES).enumerate() {
            let frames: Vec<HdrFrame<f64>> = chunk.par_iter().map(|p| read_pfm(p).stage(STAGE)).collect::<Result<_, _>>()?;
            for f in &frames {
                if *dims.get_or_insert(f.dims()) != f.dims() {
                    return Err(CliError::Data {
                        stage: STAGE,
                        message: format!("sequence {seq}: frame sizes differ ({:?} vs {:?})", dims.unwrap(), f.dims()),
                    });
                }
            }
            let mut extracted: Vec<_> = frames
                .par_iter()
                .map(|f| extract_frame(f, None, &fcfg).stage(STAGE))
                .collect::<Result<_, _>>()?;
            let motions: Vec<Field2D<f64>> = (0..extracted.len())
                .into_par_iter()
                .map(|i| {
                    let prev = if i == 0 { carry.as_ref() } else { Some(&extracted[i - 1].residual) };
                    motion_from_residuals(prev, &extracted[i].residual, &engine).stage(STAGE)
                })
                .collect::<Result<_, _>>()?;
            for (e, m) in extracted.iter_mut().zip(motions) {
                e.stack.motion = m;
            }
            let base = chunk_no * CHUNK_FRAMES;
            extracted
                .par_iter()
                .enumerate()
                .try_for_each(|(i, e)| ctx.layout.write_stack(STAGE, &seq, base + i, &e.stack))?;
            carry = extracted.pop().map(|e| e.residual);
        }
        manifest.add_inputs(&files)?;
        manifest.add_output(&ctx.layout.features_root().join(&seq));
        let _ = writeln!(summary, "{seq}: {} frames", files.len());
    }
    manifest.write(&root)?;
    Ok(summary)
}

/// Fixation logs → one density map per frame plus the fixation points.
pub fn make_fdm(ctx: &Context) -> Result<String, CliError> {
    const STAGE: &str = "make-fdm";
    let geom = ctx.cfg.geometry()?;
    let sigma = degrees_to_pixels(&geom).stage(STAGE)?;
    let weighting = ctx.cfg.weighting()?;
    let fps = ctx.cfg.frame_rate()?;
    let root = ctx.layout.fdm_root();
    let mut manifest = Manifest::new(STAGE, &ctx.config_json());
    let mut summary = String::new();
    for seq in ctx.all_sequences(STAGE)? {
        let files = ctx.layout.frame_files(STAGE, &seq)?;
        let dims = read_pfm::<f32>(&files[0]).stage(STAGE)?.dims();
        let log = ctx.layout.fixation_log(&seq);
        let set = parse_fixation_log(&log, fps, files.len()).stage(STAGE)?;
        let dir = ctx.layout.fdm_dir(&seq);
        create_dir(STAGE, &dir)?;
        let per_frame: Vec<(WeightedPoints, usize)> = (0..files.len())
            .map(|k| {
                let mut outside = 0;
                let pts = fixations_for_frame(&set, k)
                    .iter()
                    .filter_map(|r| {
                        let (x, y) = r.pixel();
                        if x >= dims.0 || y >= dims.1 {
                            outside += 1;
                            return None;
                        }
                        let wt = match weighting {
                            FixationWeighting::Unit => 1.0,
                            FixationWeighting::Duration => r.duration,
                        };
                        Some((x, y, wt))
                    })
                    .collect();
                (pts, outside)
            })
            .collect();
        per_frame.par_iter().enumerate().try_for_each(|(k, (pts, _))| {
            let fdm = build_fdm_with_sigma(pts, sigma, dims).stage(STAGE)?;
            write_map(&fdm.field, dir.join(frame_file_name(k))).stage(STAGE)
        })?;
        let points: Vec<(usize, usize, usize)> = per_frame
            .iter()
            .enumerate()
            .flat_map(|(k, (pts, _))| pts.iter().map(move |&(x, y, _)| (k, x, y)))
            .collect();
        write_points_csv(&points, ctx.layout.points_file(&seq)).stage(STAGE)?;
        let outside: usize = per_frame.iter().map(|(_, o)| o).sum();
        let empty = per_frame.iter().filter(|(p, _)| p.is_empty()).count();
        manifest.add_inputs(&[log])?;
        manifest.add_output(&dir);
        let _ = writeln!(
            summary,
            "{seq}: {} frames, {} fixation-frame pairs, {empty} frames without fixations, {outside} off-frame fixations skipped, {} log rows outside the sequence",
            files.len(),
            points.len(),
            set.dropped()
        );
    }
    manifest.write(&root)?;
    Ok(summary)
}

/// Per-sequence (features, FDM) pairs for training.
fn load_training_frames(ctx: &Context, stage: &'static str, seq: &str, fraction: f64) -> Result<(TrainingFrames, Vec<PathBuf>), CliError> {
    let n_feat = ctx.layout.feature_count(stage, seq)?;
    let n_fdm = ctx.layout.fdm_count(stage, seq)?;
    if n_feat != n_fdm {
        return Err(CliError::Data {
            stage,
            message: format!("sequence {seq}: {n_feat} feature frames but {n_fdm} fixation density maps"),
        });
    }
    if n_feat == 0 {
        return Err(CliError::Data {
            stage,
            message: format!("sequence {seq}: no feature maps; run extract-features first"),
        });
    }
    // only the frames sample_pixels will keep are read from disk
    let keep = lbvs_core::fusion::sampled_frame_indices(n_feat, fraction);
    let mut inputs = Vec::new();
    let frames = keep
        .par_iter()
        .map(|&k| {
            let stack = ctx.layout.read_stack(stage, seq, k)?;
            let fdm = lbvs_core::io::read_map::<f64>(ctx.layout.fdm_dir(seq).join(frame_file_name(k))).stage(stage)?;
            Ok((stack, fdm))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    for &k in &keep {
        inputs.extend(ctx.layout.feature_files(seq, k));
        inputs.push(ctx.layout.fdm_dir(seq).join(frame_file_name(k)));
    }
    Ok((frames, inputs))
}

#[derive(Debug, Serialize, Deserialize)]
struct LmsWeights {
    channels: [String; NUM_FEATURES],
    weights: [f64; NUM_FEATURES],
}

pub fn importance_csv(importances: &[f64; NUM_FEATURES]) -> String {
    let mut out = String::from("channel,importance\n");
    for (c, v) in CHANNELS.iter().zip(importances) {
        let _ = writeln!(out, "{c},{v}");
    }
    out
}

fn importance_table(model: &RandomForestModel<f64>) -> String {
    let mut order: Vec<usize> = (0..NUM_FEATURES).collect();
    let imp = model.importances();
    order.sort_by(|&a, &b| imp[b].total_cmp(&imp[a]));
    let mut out = format!(
        "trees: {}, training samples: {}, out-of-bag MSE: {:.6}\n{:<12} {:>10}\n",
        model.trees().len(),
        model.num_train_samples(),
        model.oob_error(),
        "channel",
        "importance"
    );
    for i in order {
        let _ = writeln!(out, "{:<12} {:>10.4}", CHANNELS[i], imp[i]);
    }
    out
}

/// Samples pixels of the training sequences and fits the forest and the
/// least-squares baseline weights.
pub fn train(ctx: &Context) -> Result<String, CliError> {
    const STAGE: &str = "train";
    let params = ctx.cfg.rf_params()?;
    let sampling = ctx.cfg.sampling()?;
    let mut videos = Vec::new();
    let mut inputs = Vec::new();
    for seq in ctx.train_sequences(STAGE)? {
        let (frames, files) = load_training_frames(ctx, STAGE, &seq, sampling.frame_fraction)?;
        videos.push(frames);
        inputs.extend(files);
    }
    // frames were already thinned to the sampled subset
    let samples = sample_pixels(&videos, 1.0, sampling.pixel_stride).stage(STAGE)?;
    drop(videos);
    let model = rf_train(&samples, &params).stage(STAGE)?;
    let lms = fit_lms_weights(&samples).stage(STAGE)?;

    let model_path = ctx.cfg.model_path();
    let dir = ctx.model_dir();
    create_dir(STAGE, &dir)?;
    model.save(&model_path).stage(STAGE)?;
    write_text(STAGE, &dir.join("importance.csv"), &importance_csv(&model.importances()))?;
    let table = importance_table(&model);
    write_text(STAGE, &dir.join("importance.txt"), &table)?;
    let weights = LmsWeights {
        channels: CHANNELS.map(String::from),
        weights: lms,
    };
    let json = serde_json::to_string_pretty(&weights).expect("weights serialize") + "\n";
    write_text(STAGE, &ctx.lms_weights_path(), &json)?;

    let mut manifest = Manifest::new(STAGE, &ctx.config_json());
    manifest.add_inputs(&inputs)?;
    for name in ["importance.csv", "importance.txt", "lms_weights.json"] {
        manifest.add_output(&dir.join(name));
    }
    manifest.add_output(&model_path);
    manifest.write(&dir)?;
    Ok(table)
}

fn load_model(ctx: &Context, stage: &'static str) -> Result<Arc<RandomForestModel<f64>>, CliError> {
    let path = ctx.cfg.model_path();
    if !path.exists() {
        return Err(CliError::Data {
            stage,
            message: format!("model {} not found; run train first", path.display()),
        });
    }
    Ok(Arc::new(RandomForestModel::load(&path).stage(stage)?))
}

fn load_lms(ctx: &Context, stage: &'static str) -> Result<[f64; NUM_FEATURES], CliError> {
    let path = ctx.lms_weights_path();
    let text = std::fs::read_to_string(&path).map_err(|_| CliError::Data {
        stage,
        message: format!("least-squares weights {} not found; run train first", path.display()),
    })?;
    let w: LmsWeights = serde_json::from_str(&text).map_err(|e| CliError::Data {
        stage,
        message: format!("{}: {e}", path.display()),
    })?;
    Ok(w.weights)
}

/// Resolves a method name, loading trained parameters when needed.
pub fn resolve_method(ctx: &Context, stage: &'static str, name: &str) -> Result<FusionMethod<f64>, CliError> {
    match name {
        "random-forest" => Ok(FusionMethod::RandomForest(load_model(ctx, stage)?)),
        "lms-weighted" => Ok(FusionMethod::LmsWeighted(load_lms(ctx, stage)?)),
        other => FusionMethod::from_name(other).ok_or_else(|| {
            CliError::Usage(format!("unknown fusion method {other:?}; expected one of {}", METHOD_NAMES.join(", ")))
        }),
    }
}

/// Fuses stored features of every selected sequence into `root/<seq>/`.
fn write_fused_maps(ctx: &Context, stage: &'static str, method: &FusionMethod<f64>, root: &Path) -> Result<String, CliError> {
    let mut manifest = Manifest::new(stage, &ctx.config_json());
    let mut summary = String::new();
    for seq in ctx.validation_sequences(stage)? {
        let n = ctx.layout.feature_count(stage, &seq)?;
        let dir = root.join(&seq);
        create_dir(stage, &dir)?;
        (0..n).into_par_iter().try_for_each(|k| {
            let stack = ctx.layout.read_stack(stage, &seq, k)?;
            let map = match method {
                FusionMethod::RandomForest(model) => rf_predict(model, &stack),
                m => fuse_fixed(m, &stack).stage(stage)?,
            };
            write_map(&map, dir.join(frame_file_name(k))).stage(stage)
        })?;
        for k in 0..n {
            manifest.add_inputs(&ctx.layout.feature_files(&seq, k))?;
        }
        manifest.add_output(&dir);
        let _ = writeln!(summary, "{seq}: {n} maps ({})", method.name());
    }
    if let FusionMethod::RandomForest(_) = method {
        manifest.add_inputs(&[ctx.cfg.model_path()])?;
    }
    manifest.write(root)?;
    Ok(summary)
}

/// Forest saliency maps for the validation sequences.
pub fn predict(ctx: &Context) -> Result<String, CliError> {
    const STAGE: &str = "predict";
    let method = FusionMethod::RandomForest(load_model(ctx, STAGE)?);
    let root = ctx.layout.pred_root();
    create_dir(STAGE, &root)?;
    write_fused_maps(ctx, STAGE, &method, &root)
}

/// A named fusion scheme applied to the validation sequences.
pub fn fuse(ctx: &Context, method_name: &str) -> Result<String, CliError> {
    const STAGE: &str = "fuse";
    let method = resolve_method(ctx, STAGE, method_name)?;
    let root = ctx.layout.fused_root(method.name());
    create_dir(STAGE, &root)?;
    write_fused_maps(ctx, STAGE, &method, &root)
}

/// Fixation points of every validation sequence, pooled for shuffled AUC.
struct PooledFixations {
    pool: ShufflePool,
    /// First pool frame of each sequence.
    offsets: Vec<usize>,
    /// Per sequence, per frame.
    points: Vec<Vec<Vec<(usize, usize)>>>,
}

fn shuffle_pool(ctx: &Context, stage: &'static str, seqs: &[String]) -> Result<PooledFixations, CliError> {
    let mut pool = ShufflePool::new();
    let mut offsets = Vec::new();
    let mut points = Vec::new();
    for seq in seqs {
        let n = ctx.layout.fdm_count(stage, seq)?;
        let pts = ctx.layout.read_points(stage, seq, n)?;
        offsets.push(pool.num_frames());
        for p in &pts {
            pool.push_frame(p);
        }
        points.push(pts);
    }
    Ok(PooledFixations { pool, offsets, points })
}

/// Scores `maps(k)` against the FDMs of one sequence, a chunk at a time.
fn score_sequence(
    ctx: &Context,
    stage: &'static str,
    seq: &str,
    points: &[Vec<(usize, usize)>],
    pool: &ShufflePool,
    offset: usize,
    maps: &(dyn Fn(usize) -> Result<Field2D<f64>, CliError> + Sync),
) -> Result<EvaluationReport, CliError> {
    let cfg = ctx.cfg.metric_config()?;
    let n = points.len();
    let mut reports = Vec::new();
    for start in (0..n).step_by(CHUNK_FRAMES) {
        let end = (start + CHUNK_FRAMES).min(n);
        let preds: Vec<Field2D<f64>> = (start..end).into_par_iter().map(maps).collect::<Result<_, _>>()?;
        let fdms = (start..end)
            .into_par_iter()
            .map(|k| ctx.layout.read_fdm(stage, seq, k, points[k].clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let mut r = evaluate_frames(&preds, &fdms, pool, offset + start, &cfg).stage(stage)?;
        for f in &mut r.per_frame {
            f.frame_index += start;
        }
        reports.push(r);
    }
    Ok(EvaluationReport::merge(&reports, cfg))
}

/// Scores stored saliency maps (default: forest predictions) against the
/// fixation maps of the validation sequences.
pub fn evaluate(ctx: &Context, maps_root: Option<&Path>) -> Result<String, CliError> {
    const STAGE: &str = "evaluate";
    let cfg = ctx.cfg.metric_config()?;
    let root = maps_root.map(Path::to_path_buf).unwrap_or_else(|| ctx.layout.pred_root());
    let seqs = ctx.validation_sequences(STAGE)?;
    let PooledFixations { pool, offsets, points } = shuffle_pool(ctx, STAGE, &seqs)?;
    let out = ctx.layout.eval_dir();
    create_dir(STAGE, &out)?;
    let mut manifest = Manifest::new(STAGE, &ctx.config_json());
    let mut reports = Vec::new();
    for (i, seq) in seqs.iter().enumerate() {
        let dir = root.join(seq);
        let files = list_files(STAGE, &dir, "pgm")?;
        let n_fdm = points[i].len();
        if files.len() != n_fdm {
            return Err(CliError::Data {
                stage: STAGE,
                message: format!(
                    "sequence {seq}: {} saliency maps in {} but {n_fdm} fixation density maps",
                    files.len(),
                    dir.display()
                ),
            });
        }
        let read = |k: usize| lbvs_core::io::read_map::<f64>(dir.join(frame_file_name(k))).stage(STAGE);
        let report = score_sequence(ctx, STAGE, seq, &points[i], &pool, offsets[i], &read)?;
        report.write_csv(out.join(format!("{seq}.csv"))).stage(STAGE)?;
        manifest.add_inputs(&files)?;
        reports.push(report);
    }
    let merged = EvaluationReport::merge(&reports, cfg);
    merged.write_csv(out.join("report.csv")).stage(STAGE)?;
    let table = merged.to_table();
    write_text(STAGE, &out.join("report.txt"), &table)?;
    manifest.add_output(&out.join("report.csv"));
    manifest.write(&out)?;
    Ok(table)
}

/// Evaluates all eight fusion schemes on the validation sequences and
/// writes one comparison table.
pub fn compare_fusions(ctx: &Context) -> Result<String, CliError> {
    const STAGE: &str = "compare-fusions";
    let cfg = ctx.cfg.metric_config()?;
    let methods: Vec<FusionMethod<f64>> = METHOD_NAMES
        .iter()
        .map(|name| resolve_method(ctx, STAGE, name))
        .collect::<Result<_, _>>()?;
    let seqs = ctx.validation_sequences(STAGE)?;
    let PooledFixations { pool, offsets, points } = shuffle_pool(ctx, STAGE, &seqs)?;
    let mut manifest = Manifest::new(STAGE, &ctx.config_json());
    let mut per_method: Vec<Vec<EvaluationReport>> = vec![Vec::new(); methods.len()];
    for (i, seq) in seqs.iter().enumerate() {
        let n = ctx.layout.feature_count(STAGE, seq)?;
        if n != points[i].len() {
            return Err(CliError::Data {
                stage: STAGE,
                message: format!("sequence {seq}: {n} feature frames but {} fixation density maps", points[i].len()),
            });
        }
        for (m, method) in methods.iter().enumerate() {
            let fuse = |k: usize| {
                let stack = ctx.layout.read_stack(STAGE, seq, k)?;
                match method {
                    FusionMethod::RandomForest(model) => Ok(rf_predict(model, &stack)),
                    other => fuse_fixed(other, &stack).stage(STAGE),
                }
            };
            per_method[m].push(score_sequence(ctx, STAGE, seq, &points[i], &pool, offsets[i], &fuse)?);
        }
        for k in 0..n {
            manifest.add_inputs(&ctx.layout.feature_files(seq, k))?;
        }
    }
    manifest.add_inputs(&[ctx.cfg.model_path(), ctx.lms_weights_path()])?;
    let rows = methods
        .iter()
        .zip(&per_method)
        .map(|(method, reports)| {
            let merged = EvaluationReport::merge(reports, cfg);
            (method.label().to_string(), MetricMeans::of(&merged.per_frame))
        })
        .collect();
    let table = ComparisonTable { rows, config: cfg };
    let out = ctx.layout.compare_dir();
    create_dir(STAGE, &out)?;
    write_text(STAGE, &out.join("comparison.csv"), &table.to_csv())?;
    let text = table.to_table();
    write_text(STAGE, &out.join("comparison.txt"), &text)?;
    manifest.add_output(&out.join("comparison.csv"));
    manifest.write(&out)?;
    Ok(text)
}
