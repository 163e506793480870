//! Pipeline configuration: a TOML file, then environment, then flags.

use std::path::{Path, PathBuf};

use lbvs_core::fdm::FixationWeighting;
use lbvs_core::features::{FeatureConfig, GaborParams, MotionParams};
use lbvs_core::fusion::RfParams;
use lbvs_core::hvs::{CsfModel, JndEncoding, ViewingGeometry};
use lbvs_core::metrics::{MetricConfig, KLD_EPSILON};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Environment variable that replaces `paths.output_dir`.
pub const OUTPUT_DIR_ENV: &str = "LBVS_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub sequences: Sequences,
    /// Display geometry; has no default because σ of the fixation maps and
    /// the CSF frequency axis both depend on it.
    pub geometry: Option<Geometry>,
    pub video: Video,
    pub features: Features,
    pub fdm: Fdm,
    pub forest: Forest,
    pub sampling: Sampling,
    pub fusion: Fusion,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Holds one directory per sequence with `frames/*.pfm` and
    /// `fixations.csv`.
    pub data_dir: PathBuf,
    pub output_dir: PathBuf,
    /// Model file; defaults to `<output_dir>/model/model.json`.
    pub model: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data"),
            output_dir: PathBuf::from("out"),
            model: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Sequences {
    pub train: Vec<String>,
    pub validation: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub screen_width_m: f64,
    pub viewing_distance_m: f64,
    pub horizontal_resolution: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Video {
    pub frame_rate: f64,
}

impl Default for Video {
    fn default() -> Self {
        Self { frame_rate: 30.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Features {
    pub jnd: String,
    pub csf: String,
    pub flow: String,
    pub block_size: usize,
    pub search_radius: usize,
    pub bilateral_sigma: f64,
    pub bilateral_range_fraction: f64,
    pub gabor_wavelength: f64,
    pub gabor_aspect: f64,
    pub gabor_sigma: f64,
}

impl Default for Features {
    fn default() -> Self {
        let m = MotionParams::default();
        let g = GaborParams::default();
        Self {
            jnd: JndEncoding::default().name().into(),
            csf: CsfModel::default().name().into(),
            flow: "block-matching".into(),
            block_size: m.block_size,
            search_radius: m.search_radius,
            bilateral_sigma: m.spatial_sigma,
            bilateral_range_fraction: m.range_sigma_fraction,
            gabor_wavelength: g.wavelength,
            gabor_aspect: g.aspect,
            gabor_sigma: g.sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fdm {
    /// `unit` or `duration`.
    pub weighting: String,
}

impl Default for Fdm {
    fn default() -> Self {
        Self { weighting: "unit".into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Forest {
    pub trees: usize,
    pub bootstrap_ratio: f64,
    pub min_leaf: usize,
    pub features_per_split: usize,
    pub seed: u64,
}

impl Default for Forest {
    fn default() -> Self {
        let p = RfParams::default();
        Self {
            trees: p.num_trees,
            bootstrap_ratio: p.bootstrap_ratio,
            min_leaf: p.min_leaf_samples,
            features_per_split: p.features_per_split,
            seed: p.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sampling {
    pub frame_fraction: f64,
    pub pixel_stride: usize,
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            frame_fraction: 0.1,
            pixel_stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fusion {
    /// Method used by `fuse` when no `--method` flag is given.
    pub method: String,
}

impl Default for Fusion {
    fn default() -> Self {
        Self { method: "average".into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Metrics {
    pub emd_grid: [usize; 2],
    pub kld_epsilon: f64,
}

impl Default for Metrics {
    fn default() -> Self {
        Self {
            emd_grid: [32, 32],
            kld_epsilon: KLD_EPSILON,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Canonical JSON of the effective settings; hashed into manifests.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn model_path(&self) -> PathBuf {
        self.paths
            .model
            .clone()
            .unwrap_or_else(|| self.paths.output_dir.join("model").join("model.json"))
    }

    pub fn geometry(&self) -> Result<ViewingGeometry, CliError> {
        let g = self
            .geometry
            .ok_or_else(|| CliError::Config("[geometry] is required (screen_width_m, viewing_distance_m, horizontal_resolution)".into()))?;
        ViewingGeometry::new(g.screen_width_m, g.viewing_distance_m, g.horizontal_resolution)
            .map_err(|e| CliError::Config(format!("geometry: {e}")))
    }

    pub fn feature_config(&self) -> Result<FeatureConfig, CliError> {
        let f = &self.features;
        if f.flow != "block-matching" {
            return Err(CliError::Config(format!("unknown flow engine {:?}", f.flow)));
        }
        if f.block_size == 0 {
            return Err(CliError::Config("features.block_size must be at least 1".into()));
        }
        let mut cfg = FeatureConfig::new(self.geometry()?);
        cfg.jnd = JndEncoding::from_name(&f.jnd).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.csf = CsfModel::from_name(&f.csf).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.motion = MotionParams {
            block_size: f.block_size,
            search_radius: f.search_radius,
            spatial_sigma: f.bilateral_sigma,
            range_sigma_fraction: f.bilateral_range_fraction,
        };
        cfg.gabor = GaborParams {
            wavelength: f.gabor_wavelength,
            aspect: f.gabor_aspect,
            phase: 0.0,
            sigma: f.gabor_sigma,
        };
        if !(cfg.gabor.wavelength > 0.0 && cfg.gabor.aspect > 0.0 && cfg.gabor.sigma > 0.0) {
            return Err(CliError::Config("gabor parameters must be positive".into()));
        }
        Ok(cfg)
    }

    pub fn weighting(&self) -> Result<FixationWeighting, CliError> {
        match self.fdm.weighting.as_str() {
            "unit" => Ok(FixationWeighting::Unit),
            "duration" => Ok(FixationWeighting::Duration),
            other => Err(CliError::Config(format!("unknown fdm weighting {other:?}"))),
        }
    }

    pub fn rf_params(&self) -> Result<RfParams, CliError> {
        let f = &self.forest;
        let p = RfParams {
            num_trees: f.trees,
            bootstrap_ratio: f.bootstrap_ratio,
            min_leaf_samples: f.min_leaf,
            features_per_split: f.features_per_split,
            seed: f.seed,
        };
        p.validate().map_err(|e| CliError::Config(format!("forest: {e}")))?;
        Ok(p)
    }

    pub fn sampling(&self) -> Result<Sampling, CliError> {
        let s = self.sampling;
        if !(s.frame_fraction > 0.0 && s.frame_fraction <= 1.0) {
            return Err(CliError::Config(format!(
                "sampling.frame_fraction must lie in (0, 1], got {}",
                s.frame_fraction
            )));
        }
        if s.pixel_stride == 0 {
            return Err(CliError::Config("sampling.pixel_stride must be at least 1".into()));
        }
        Ok(s)
    }

    pub fn metric_config(&self) -> Result<MetricConfig, CliError> {
        let m = self.metrics;
        if m.emd_grid.contains(&0) {
            return Err(CliError::Config("metrics.emd_grid must be positive".into()));
        }
        if !(m.kld_epsilon > 0.0) {
            return Err(CliError::Config("metrics.kld_epsilon must be positive".into()));
        }
        Ok(MetricConfig {
            emd_grid: (m.emd_grid[0], m.emd_grid[1]),
            kld_epsilon: m.kld_epsilon,
        })
    }

    pub fn frame_rate(&self) -> Result<f64, CliError> {
        let r = self.video.frame_rate;
        if !(r > 0.0 && r.is_finite()) {
            return Err(CliError::Config(format!("video.frame_rate must be positive, got {r}")));
        }
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_library() {
        let cfg = PipelineConfig::from_toml("").unwrap();
        assert_eq!(cfg.rf_params().unwrap(), RfParams::default());
        assert_eq!(cfg.sampling.frame_fraction, 0.1);
        assert_eq!(cfg.metric_config().unwrap(), MetricConfig::default());
        assert!(matches!(cfg.geometry(), Err(CliError::Config(_))));
    }

    #[test]
    fn parses_sections_and_rejects_unknown_keys() {
        let cfg = PipelineConfig::from_toml(
            r#"
            [sequences]
            train = ["a", "b"]
            validation = ["c"]
            [geometry]
            screen_width_m = 1.0
            viewing_distance_m = 3.0
            horizontal_resolution = 1024
            [forest]
            trees = 7
            "#,
        )
        .unwrap();
        assert_eq!(cfg.sequences.train, vec!["a", "b"]);
        assert_eq!(cfg.forest.trees, 7);
        assert!((cfg.geometry().unwrap().pixels_per_degree().unwrap() - 54.11).abs() < 0.01);
        assert!(PipelineConfig::from_toml("[forest]\ntreez = 3\n").is_err());
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let mut cfg = PipelineConfig::default();
        cfg.forest.bootstrap_ratio = 0.0;
        assert!(cfg.rf_params().is_err());
        cfg.sampling.frame_fraction = 1.5;
        assert!(cfg.sampling().is_err());
        cfg.features.jnd = "gamma".into();
        cfg.geometry = Some(Geometry {
            screen_width_m: 1.0,
            viewing_distance_m: 1.0,
            horizontal_resolution: 100.0,
        });
        assert!(cfg.feature_config().is_err());
    }
}
