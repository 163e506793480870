//! Where inputs are found and outputs are written.
//!
//! ```text
//! <data_dir>/<seq>/frames/*.pfm        HDR frames, sorted by file name
//! <data_dir>/<seq>/fixations.csv       fixation log
//! <out>/features/<seq>/<channel>/frame_NNNNNN.pgm
//! <out>/fdm/<seq>/frame_NNNNNN.pgm, points.csv
//! <out>/model/model.json, importance.csv, lms_weights.json
//! <out>/pred/<seq>/frame_NNNNNN.pgm
//! <out>/fused/<method>/<seq>/frame_NNNNNN.pgm
//! <out>/eval/report.csv, report.txt, <seq>.csv
//! <out>/compare/comparison.csv, comparison.txt
//! ```
//!
//! Frames are numbered by their position in the sorted frame list.

use std::path::{Path, PathBuf};

use lbvs_core::fdm::FixationDensityMap;
use lbvs_core::features::{FeatureStack, CHANNELS};
use lbvs_core::io::{read_map, read_points_csv, write_map};
use lbvs_core::Field2D;

use crate::error::{CliError, StageContext};

pub fn frame_file_name(k: usize) -> String {
    format!("frame_{k:06}.pgm")
}

fn io_err(stage: &'static str, path: &Path) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.to_path_buf();
    move |source| CliError::Io { stage, path, source }
}

pub fn create_dir(stage: &'static str, dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(io_err(stage, dir))
}

/// Files in `dir` with the given extension, sorted by name.
pub fn list_files(stage: &'static str, dir: &Path, extension: &str) -> Result<Vec<PathBuf>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(io_err(stage, dir))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(io_err(stage, dir))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e.eq_ignore_ascii_case(extension)) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

#[derive(Debug, Clone)]
pub struct Layout {
    pub data_dir: PathBuf,
    pub out: PathBuf,
}

impl Layout {
    pub fn frames_dir(&self, seq: &str) -> PathBuf {
        self.data_dir.join(seq).join("frames")
    }

    pub fn fixation_log(&self, seq: &str) -> PathBuf {
        self.data_dir.join(seq).join("fixations.csv")
    }

    pub fn features_root(&self) -> PathBuf {
        self.out.join("features")
    }

    pub fn channel_dir(&self, seq: &str, channel: &str) -> PathBuf {
        self.features_root().join(seq).join(channel)
    }

    pub fn fdm_root(&self) -> PathBuf {
        self.out.join("fdm")
    }

    pub fn fdm_dir(&self, seq: &str) -> PathBuf {
        self.fdm_root().join(seq)
    }

    pub fn pred_root(&self) -> PathBuf {
        self.out.join("pred")
    }

    pub fn fused_root(&self, method: &str) -> PathBuf {
        self.out.join("fused").join(method)
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.out.join("eval")
    }

    pub fn compare_dir(&self) -> PathBuf {
        self.out.join("compare")
    }

    pub fn frame_files(&self, stage: &'static str, seq: &str) -> Result<Vec<PathBuf>, CliError> {
        let dir = self.frames_dir(seq);
        let files = list_files(stage, &dir, "pfm")?;
        if files.is_empty() {
            return Err(CliError::Data {
                stage,
                message: format!("sequence {seq}: no .pfm frames in {}", dir.display()),
            });
        }
        Ok(files)
    }

    /// Number of stored maps for a sequence, taken from the motion channel.
    pub fn feature_count(&self, stage: &'static str, seq: &str) -> Result<usize, CliError> {
        let counts = CHANNELS
            .iter()
            .map(|c| list_files(stage, &self.channel_dir(seq, c), "pgm").map(|f| f.len()))
            .collect::<Result<Vec<_>, _>>()?;
        if counts.iter().any(|&c| c != counts[0]) {
            return Err(CliError::Data {
                stage,
                message: format!("sequence {seq}: feature channels hold different frame counts {counts:?}"),
            });
        }
        Ok(counts[0])
    }

    pub fn feature_files(&self, seq: &str, k: usize) -> [PathBuf; 4] {
        CHANNELS.map(|c| self.channel_dir(seq, c).join(frame_file_name(k)))
    }

    pub fn read_stack(&self, stage: &'static str, seq: &str, k: usize) -> Result<FeatureStack<f64>, CliError> {
        let [m, c, i, o] = self.feature_files(seq, k).map(|p| read_map::<f64>(p).stage(stage));
        FeatureStack::new(m?, c?, i?, o?).stage(stage)
    }

    pub fn write_stack(&self, stage: &'static str, seq: &str, k: usize, stack: &FeatureStack<f64>) -> Result<(), CliError> {
        for (path, map) in self.feature_files(seq, k).iter().zip(stack.maps()) {
            write_map(map, path).stage(stage)?;
        }
        Ok(())
    }

    pub fn fdm_count(&self, stage: &'static str, seq: &str) -> Result<usize, CliError> {
        Ok(list_files(stage, &self.fdm_dir(seq), "pgm")?.len())
    }

    pub fn points_file(&self, seq: &str) -> PathBuf {
        self.fdm_dir(seq).join("points.csv")
    }

    /// Fixation pixels per frame for `count` frames.
    pub fn read_points(&self, stage: &'static str, seq: &str, count: usize) -> Result<Vec<Vec<(usize, usize)>>, CliError> {
        let mut per_frame = vec![Vec::new(); count];
        for (k, x, y) in read_points_csv(self.points_file(seq)).stage(stage)? {
            let slot = per_frame.get_mut(k).ok_or_else(|| CliError::Data {
                stage,
                message: format!("sequence {seq}: points.csv names frame {k} but only {count} maps exist"),
            })?;
            slot.push((x, y));
        }
        Ok(per_frame)
    }

    pub fn read_fdm(
        &self,
        stage: &'static str,
        seq: &str,
        k: usize,
        points: Vec<(usize, usize)>,
    ) -> Result<FixationDensityMap<f64>, CliError> {
        let field: Field2D<f64> = read_map(self.fdm_dir(seq).join(frame_file_name(k))).stage(stage)?;
        Ok(FixationDensityMap { field, points })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_and_listing() {
        assert_eq!(frame_file_name(42), "frame_000042.pgm");
        let dir = tempfile::tempdir().unwrap();
        for name in ["b.pfm", "a.pfm", "c.txt"] {
            std::fs::write(dir.path().join(name), b"").unwrap();
        }
        let files = list_files("test", dir.path(), "pfm").unwrap();
        let names: Vec<_> = files.iter().map(|p| p.file_name().unwrap().to_str().unwrap()).collect();
        assert_eq!(names, vec!["a.pfm", "b.pfm"]);
    }

    #[test]
    fn stacks_round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let layout = Layout {
            data_dir: dir.path().join("data"),
            out: dir.path().join("out"),
        };
        for c in CHANNELS {
            create_dir("test", &layout.channel_dir("s", c)).unwrap();
        }
        let f = |k: usize| Field2D::from_fn(5, 4, move |x, y| ((x + y + k) % 3) as f64 / 2.0);
        let stack = FeatureStack::new(f(0), f(1), f(2), f(3)).unwrap();
        layout.write_stack("test", "s", 3, &stack).unwrap();
        let back = layout.read_stack("test", "s", 3).unwrap();
        for (a, b) in back.maps().iter().zip(stack.maps()) {
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((x - y).abs() <= 0.5 / 65535.0 + 1e-12);
            }
        }
        assert_eq!(layout.feature_count("test", "s").unwrap(), 1);
    }
}
