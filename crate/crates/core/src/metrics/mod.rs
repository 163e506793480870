//! Saliency scores against eye-tracking ground truth.

mod emd;
pub mod report;

use std::ops::Range;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fdm::FixationDensityMap;
use crate::field::Field2D;
use crate::scalar::Real;

pub use emd::{emd, emd_on_grid};
pub use report::{ComparisonTable, EvaluationReport, MetricMeans};

/// Regularizer added to both distributions before KL divergence, relative
/// to each field's mean value.
pub const KLD_EPSILON: f64 = 1e-12;

/// Metric names in report column order.
pub const METRIC_NAMES: [&str; 7] = ["AUC", "sAUC", "EMD", "SIM", "PCC", "KLD", "NSS"];

fn require_points(points: &[(usize, usize)]) -> Result<()> {
    if points.is_empty() {
        return Err(Error::Empty("fixation list"));
    }
    Ok(())
}

fn values_at<T: Real>(sal: &Field2D<T>, points: &[(usize, usize)]) -> Result<Vec<f64>> {
    let (w, h) = sal.dims();
    points
        .iter()
        .enumerate()
        .map(|(index, &(x, y))| {
            if x >= w || y >= h {
                return Err(Error::OutOfBounds {
                    index,
                    x,
                    y,
                    width: w,
                    height: h,
                });
            }
            Ok(sal.get(x, y).to_f64_lossy())
        })
        .collect()
}

/// `P(pos > neg) + ½·P(pos = neg)` with `negatives` sorted ascending.
fn rank_auc(positives: &[f64], negatives: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &p in positives {
        let below = negatives.partition_point(|&n| n < p);
        let not_above = negatives.partition_point(|&n| n <= p);
        wins += below as f64 + 0.5 * (not_above - below) as f64;
    }
    wins / (positives.len() as f64 * negatives.len() as f64)
}

/// ROC area with fixated pixels as positives (repeats counted each time)
/// and every other pixel as a negative.
pub fn auc_judd<T: Real>(sal: &Field2D<T>, points: &[(usize, usize)]) -> Result<f64> {
    require_points(points)?;
    let positives = values_at(sal, points)?;
    let mut fixated = vec![false; sal.len()];
    for &(x, y) in points {
        fixated[y * sal.width() + x] = true;
    }
    let mut negatives: Vec<f64> = sal
        .values()
        .iter()
        .zip(&fixated)
        .filter(|(_, &f)| !f)
        .map(|(v, _)| v.to_f64_lossy())
        .collect();
    if negatives.is_empty() {
        return Err(Error::Unscorable("every pixel is fixated"));
    }
    negatives.sort_by(f64::total_cmp);
    Ok(rank_auc(&positives, &negatives))
}

/// ROC area with saliency at fixations of other frames as negatives.
pub fn auc_shuffled<T: Real>(sal: &Field2D<T>, points: &[(usize, usize)], negative_pool: &[(usize, usize)]) -> Result<f64> {
    require_points(points)?;
    if negative_pool.is_empty() {
        return Err(Error::Unscorable("empty shuffle pool"));
    }
    let positives = values_at(sal, points)?;
    let mut negatives = values_at(sal, negative_pool)?;
    negatives.sort_by(f64::total_cmp);
    Ok(rank_auc(&positives, &negatives))
}

/// Mean z-scored saliency at fixations; 0 for a constant map.
pub fn nss<T: Real>(sal: &Field2D<T>, points: &[(usize, usize)]) -> Result<f64> {
    require_points(points)?;
    let vals = values_at(sal, points)?;
    let (mean, std) = mean_std(sal);
    if std == 0.0 {
        return Ok(0.0);
    }
    Ok(vals.iter().map(|v| (v - mean) / std).sum::<f64>() / vals.len() as f64)
}

fn mean_std<T: Real>(f: &Field2D<T>) -> (f64, f64) {
    let n = f.len() as f64;
    let mean = f.values().iter().map(|v| v.to_f64_lossy()).sum::<f64>() / n;
    let var = f
        .values()
        .iter()
        .map(|v| (v.to_f64_lossy() - mean).powi(2))
        .sum::<f64>()
        / n;
    (mean, var.sqrt())
}

/// Pearson correlation over all pixels; 0 when either field is constant.
pub fn pcc<T: Real>(sal: &Field2D<T>, fdm: &Field2D<T>) -> Result<f64> {
    sal.ensure_same_dims(fdm)?;
    let (ma, sa) = mean_std(sal);
    let (mb, sb) = mean_std(fdm);
    if sa == 0.0 || sb == 0.0 {
        return Ok(0.0);
    }
    let cov = sal
        .values()
        .iter()
        .zip(fdm.values())
        .map(|(a, b)| (a.to_f64_lossy() - ma) * (b.to_f64_lossy() - mb))
        .sum::<f64>()
        / sal.len() as f64;
    Ok((cov / (sa * sb)).clamp(-1.0, 1.0))
}

fn to_distribution<T: Real>(f: &Field2D<T>, shift: f64) -> Option<Vec<f64>> {
    let v: Vec<f64> = f.values().iter().map(|x| x.to_f64_lossy() + shift).collect();
    let total: f64 = v.iter().sum();
    (total > 0.0).then(|| v.iter().map(|x| x / total).collect())
}

fn regularized_distribution<T: Real>(f: &Field2D<T>, epsilon: f64) -> Vec<f64> {
    let mean = f.values().iter().map(|x| x.to_f64_lossy()).sum::<f64>() / f.len() as f64;
    to_distribution(f, epsilon * mean).unwrap_or_else(|| vec![1.0 / f.len() as f64; f.len()])
}

/// `KL(FDM ‖ saliency)` in nats. Each field is shifted by `ε · mean`
/// before normalizing, so zero cells stay finite and rescaling either input
/// leaves the score unchanged. An all-zero field counts as uniform.
pub fn kld<T: Real>(sal: &Field2D<T>, fdm: &Field2D<T>) -> Result<f64> {
    kld_with_epsilon(sal, fdm, KLD_EPSILON)
}

pub fn kld_with_epsilon<T: Real>(sal: &Field2D<T>, fdm: &Field2D<T>, epsilon: f64) -> Result<f64> {
    sal.ensure_same_dims(fdm)?;
    if !(epsilon > 0.0) {
        return Err(Error::param("KLD epsilon must be positive"));
    }
    let p = regularized_distribution(fdm, epsilon);
    let q = regularized_distribution(sal, epsilon);
    let d: f64 = p.iter().zip(&q).map(|(p, q)| p * (p / q).ln()).sum();
    Ok(d.max(0.0))
}

/// Histogram intersection of the two normalized fields; 0 if either has no
/// mass.
pub fn sim<T: Real>(sal: &Field2D<T>, fdm: &Field2D<T>) -> Result<f64> {
    sal.ensure_same_dims(fdm)?;
    let (Some(p), Some(q)) = (to_distribution(sal, 0.0), to_distribution(fdm, 0.0)) else {
        return Ok(0.0);
    };
    Ok(p.iter().zip(&q).map(|(a, b)| a.min(*b)).sum::<f64>().min(1.0))
}

/// Fixations of many frames, each stored once; the negatives for a frame
/// are every point belonging to other frames.
#[derive(Debug, Clone, Default)]
pub struct ShufflePool {
    points: Vec<(usize, usize)>,
    ranges: Vec<Range<usize>>,
}

impl ShufflePool {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a frame's fixations; returns its pool index.
    pub fn push_frame(&mut self, points: &[(usize, usize)]) -> usize {
        let start = self.points.len();
        self.points.extend_from_slice(points);
        self.ranges.push(start..self.points.len());
        self.ranges.len() - 1
    }

    pub fn from_frames<'a>(frames: impl IntoIterator<Item = &'a [(usize, usize)]>) -> Self {
        let mut pool = Self::new();
        for f in frames {
            pool.push_frame(f);
        }
        pool
    }

    pub fn num_frames(&self) -> usize {
        self.ranges.len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points from every frame except `frame`, limited to a `w × h` raster.
    pub fn negatives_for(&self, frame: usize, (w, h): (usize, usize)) -> Vec<(usize, usize)> {
        let own = self.ranges.get(frame).cloned().unwrap_or(0..0);
        self.points
            .iter()
            .enumerate()
            .filter(|(i, &(x, y))| !own.contains(i) && x < w && y < h)
            .map(|(_, &p)| p)
            .collect()
    }
}

/// Evaluation knobs, echoed into every report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricConfig {
    pub emd_grid: (usize, usize),
    pub kld_epsilon: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            emd_grid: (32, 32),
            kld_epsilon: KLD_EPSILON,
        }
    }
}

/// All seven scores of one frame. `sauc` is `None` when the shuffle pool
/// holds no other fixations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameScore {
    pub frame_index: usize,
    pub auc: f64,
    pub sauc: Option<f64>,
    pub emd: f64,
    pub sim: f64,
    pub pcc: f64,
    pub kld: f64,
    pub nss: f64,
}

impl FrameScore {
    /// Scores in [`METRIC_NAMES`] order.
    pub fn values(&self) -> [Option<f64>; 7] {
        [
            Some(self.auc),
            self.sauc,
            Some(self.emd),
            Some(self.sim),
            Some(self.pcc),
            Some(self.kld),
            Some(self.nss),
        ]
    }
}

/// Scores one frame.
pub fn score_frame<T: Real>(
    sal: &Field2D<T>,
    fdm: &FixationDensityMap<T>,
    negatives: &[(usize, usize)],
    cfg: &MetricConfig,
    frame_index: usize,
) -> Result<FrameScore> {
    sal.ensure_same_dims(&fdm.field)?;
    let sauc = match auc_shuffled(sal, &fdm.points, negatives) {
        Ok(v) => Some(v),
        Err(Error::Unscorable(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(FrameScore {
        frame_index,
        auc: auc_judd(sal, &fdm.points)?,
        sauc,
        emd: emd(sal, &fdm.field, cfg.emd_grid)?,
        sim: sim(sal, &fdm.field)?,
        pcc: pcc(sal, &fdm.field)?,
        kld: kld_with_epsilon(sal, &fdm.field, cfg.kld_epsilon)?,
        nss: nss(sal, &fdm.points)?,
    })
}

/// Scores every frame with at least one fixation and averages. Frame `k`
/// corresponds to pool frame `pool_offset + k`.
pub fn evaluate_frames<T: Real>(
    preds: &[Field2D<T>],
    fdms: &[FixationDensityMap<T>],
    pool: &ShufflePool,
    pool_offset: usize,
    cfg: &MetricConfig,
) -> Result<EvaluationReport> {
    if preds.len() != fdms.len() {
        return Err(Error::LengthMismatch {
            what: "predictions",
            left: preds.len(),
            right: fdms.len(),
        });
    }
    let scored: Vec<Option<FrameScore>> = preds
        .par_iter()
        .zip(fdms.par_iter())
        .enumerate()
        .map(|(k, (sal, fdm))| {
            if !fdm.has_fixations() {
                return Ok(None);
            }
            let negatives = pool.negatives_for(pool_offset + k, sal.dims());
            score_frame(sal, fdm, &negatives, cfg, k).map(Some)
        })
        .collect::<Result<_>>()?;
    let skipped = scored.iter().filter(|s| s.is_none()).count();
    Ok(EvaluationReport::new(scored.into_iter().flatten().collect(), skipped, *cfg))
}
