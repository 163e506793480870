use std::fmt::Write as _;
use std::path::Path;

use super::{FrameScore, MetricConfig, METRIC_NAMES};
use crate::error::{Error, Result};

/// Frame-averaged scores; `None` when no frame could be scored.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricMeans {
    pub auc: Option<f64>,
    pub sauc: Option<f64>,
    pub emd: Option<f64>,
    pub sim: Option<f64>,
    pub pcc: Option<f64>,
    pub kld: Option<f64>,
    pub nss: Option<f64>,
}

impl MetricMeans {
    /// Means over the frames that have each score.
    pub fn of(frames: &[FrameScore]) -> Self {
        let mut acc = [(0.0, 0usize); 7];
        for f in frames {
            for (slot, v) in acc.iter_mut().zip(f.values()) {
                if let Some(v) = v {
                    slot.0 += v;
                    slot.1 += 1;
                }
            }
        }
        let m = acc.map(|(s, n)| (n > 0).then(|| s / n as f64));
        Self {
            auc: m[0],
            sauc: m[1],
            emd: m[2],
            sim: m[3],
            pcc: m[4],
            kld: m[5],
            nss: m[6],
        }
    }

    /// Values in report column order.
    pub fn values(&self) -> [Option<f64>; 7] {
        [self.auc, self.sauc, self.emd, self.sim, self.pcc, self.kld, self.nss]
    }
}

/// Per-frame scores plus their means.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub per_frame: Vec<FrameScore>,
    pub means: MetricMeans,
    /// Frames without any fixation.
    pub frames_skipped: usize,
    pub config: MetricConfig,
}

pub const SHUFFLE_POOL_POLICY: &str = "fixations of all other frames of all evaluated sequences";

fn header_lines(cfg: &MetricConfig) -> Vec<String> {
    vec![
        format!("emd_grid={}x{}", cfg.emd_grid.0, cfg.emd_grid.1),
        format!("kld_epsilon={:e}", cfg.kld_epsilon),
        format!("shuffle_pool={SHUFFLE_POOL_POLICY}"),
    ]
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

fn short(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

impl EvaluationReport {
    pub fn new(per_frame: Vec<FrameScore>, frames_skipped: usize, config: MetricConfig) -> Self {
        Self {
            means: MetricMeans::of(&per_frame),
            per_frame,
            frames_skipped,
            config,
        }
    }

    /// Merges reports of several sequences; frame indices are kept as is.
    pub fn merge(reports: &[EvaluationReport], config: MetricConfig) -> Self {
        let per_frame: Vec<FrameScore> = reports.iter().flat_map(|r| r.per_frame.iter().copied()).collect();
        let skipped = reports.iter().map(|r| r.frames_skipped).sum();
        Self::new(per_frame, skipped, config)
    }

    pub fn frames_scored(&self) -> usize {
        self.per_frame.len()
    }

    /// `#`-prefixed settings, a header row, one row per frame and a final
    /// `mean` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for line in header_lines(&self.config) {
            let _ = writeln!(out, "# {line}");
        }
        let _ = writeln!(out, "# frames_scored={}", self.frames_scored());
        let _ = writeln!(out, "# frames_skipped={}", self.frames_skipped);
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["frame".to_string()];
        header.extend(METRIC_NAMES.iter().map(|s| s.to_string()));
        w.write_record(&header).expect("in-memory write");
        for f in &self.per_frame {
            let mut row = vec![f.frame_index.to_string()];
            row.extend(f.values().map(cell));
            w.write_record(&row).expect("in-memory write");
        }
        let mut row = vec!["mean".to_string()];
        row.extend(self.means.values().map(cell));
        w.write_record(&row).expect("in-memory write");
        out.push_str(&String::from_utf8(w.into_inner().expect("flush")).expect("utf8"));
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for line in header_lines(&self.config) {
            let _ = writeln!(out, "{line}");
        }
        let _ = writeln!(
            out,
            "frames scored: {}, skipped (no fixations): {}",
            self.frames_scored(),
            self.frames_skipped
        );
        let _ = write!(out, "{:>8}", "frame");
        for m in METRIC_NAMES {
            let _ = write!(out, " {m:>8}");
        }
        out.push('\n');
        for f in &self.per_frame {
            let _ = write!(out, "{:>8}", f.frame_index);
            for v in f.values() {
                let _ = write!(out, " {:>8}", short(v));
            }
            out.push('\n');
        }
        let _ = write!(out, "{:>8}", "mean");
        for v in self.means.values() {
            let _ = write!(out, " {:>8}", short(v));
        }
        out.push('\n');
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// One row per fusion method, mean scores as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<(String, MetricMeans)>,
    pub config: MetricConfig,
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for line in header_lines(&self.config) {
            let _ = writeln!(out, "# {line}");
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["method".to_string()];
        header.extend(METRIC_NAMES.iter().map(|s| s.to_string()));
        w.write_record(&header).expect("in-memory write");
        for (name, means) in &self.rows {
            let mut row = vec![name.clone()];
            row.extend(means.values().map(cell));
            w.write_record(&row).expect("in-memory write");
        }
        out.push_str(&String::from_utf8(w.into_inner().expect("flush")).expect("utf8"));
        out
    }

    pub fn to_table(&self) -> String {
        let width = self.rows.iter().map(|(n, _)| n.len()).max().unwrap_or(6).max(6);
        let mut out = String::new();
        for line in header_lines(&self.config) {
            let _ = writeln!(out, "{line}");
        }
        let _ = write!(out, "{:<width$}", "method");
        for m in METRIC_NAMES {
            let _ = write!(out, " {m:>7}");
        }
        out.push('\n');
        for (name, means) in &self.rows {
            let _ = write!(out, "{name:<width$}");
            for v in means.values() {
                let _ = write!(out, " {:>7}", short(v));
            }
            out.push('\n');
        }
        out
    }
}
