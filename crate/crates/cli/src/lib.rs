//! The `lbvs` command-line pipeline: feature extraction, fixation maps,
//! forest training, prediction, baseline fusion and evaluation.

pub mod config;
pub mod error;
pub mod layout;
pub mod manifest;
pub mod stages;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{PipelineConfig, OUTPUT_DIR_ENV};
use crate::error::{CliError, ExitCode};
use crate::stages::Context;

#[derive(Debug, Parser)]
#[command(name = "lbvs", version, about = "Learning-based visual saliency for HDR video")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `paths.output_dir` and the LBVS_OUTPUT_DIR variable.
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// Model file used by train, predict and fuse.
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub trees: Option<usize>,
    #[arg(long, global = true)]
    pub frame_fraction: Option<f64>,
    #[arg(long, global = true)]
    pub pixel_stride: Option<usize>,
    /// Restrict the stage to one sequence; repeatable.
    #[arg(long = "sequence", global = true)]
    pub sequences: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute motion, color, intensity and orientation maps.
    ExtractFeatures,
    /// Build fixation density maps from the fixation logs.
    MakeFdm,
    /// Train the random forest on the training sequences.
    Train,
    /// Predict saliency maps for the validation sequences.
    Predict,
    /// Fuse the feature maps with one fixed scheme.
    Fuse {
        /// One of: average, multiplication, maximum, sum-plus-product,
        /// gnlns, lms-weighted, std-weighted, random-forest.
        #[arg(long)]
        method: Option<String>,
    },
    /// Score saliency maps against the fixation maps.
    Evaluate {
        /// Directory with one subdirectory of maps per sequence; defaults to
        /// the forest predictions.
        #[arg(long)]
        maps: Option<PathBuf>,
    },
    /// Score all fusion schemes and write one comparison table.
    CompareFusions,
}

/// Loads the config file and applies environment and flag overrides.
pub fn effective_config(opts: &GlobalOpts) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &opts.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV).filter(|v| !v.is_empty()) {
        cfg.paths.output_dir = PathBuf::from(dir);
    }
    if let Some(dir) = &opts.output_dir {
        cfg.paths.output_dir = dir.clone();
    }
    if let Some(dir) = &opts.data_dir {
        cfg.paths.data_dir = dir.clone();
    }
    if let Some(model) = &opts.model {
        cfg.paths.model = Some(model.clone());
    }
    if let Some(seed) = opts.seed {
        cfg.forest.seed = seed;
    }
    if let Some(trees) = opts.trees {
        cfg.forest.trees = trees;
    }
    if let Some(f) = opts.frame_fraction {
        cfg.sampling.frame_fraction = f;
    }
    if let Some(s) = opts.pixel_stride {
        cfg.sampling.pixel_stride = s;
    }
    Ok(cfg)
}

/// Runs one parsed command and returns what it prints on success.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    if let Some(jobs) = cli.global.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let cfg = effective_config(&cli.global)?;
    let ctx = Context::new(cfg, cli.global.sequences.clone());
    match &cli.command {
        Command::ExtractFeatures => stages::extract_features(&ctx),
        Command::MakeFdm => stages::make_fdm(&ctx),
        Command::Train => stages::train(&ctx),
        Command::Predict => stages::predict(&ctx),
        Command::Fuse { method } => {
            let name = method.clone().unwrap_or_else(|| ctx.cfg.fusion.method.clone());
            stages::fuse(&ctx, &name)
        }
        Command::Evaluate { maps } => stages::evaluate(&ctx, maps.as_deref()),
        Command::CompareFusions => stages::compare_fusions(&ctx),
    }
}

/// Parses `args`, runs, prints, and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::Usage } else { ExitCode::Ok };
        }
    };
    match run(&cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::Ok
        }
        Err(e) => {
            eprintln!("lbvs: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "[forest]\ntrees = 5\nseed = 1\n[paths]\noutput_dir = \"from-file\"\n").unwrap();
        let cli = Cli::try_parse_from([
            "lbvs",
            "train",
            "--config",
            path.to_str().unwrap(),
            "--trees",
            "9",
            "--output-dir",
            "from-flag",
        ])
        .unwrap();
        let cfg = effective_config(&cli.global).unwrap();
        assert_eq!(cfg.forest.trees, 9);
        assert_eq!(cfg.forest.seed, 1);
        assert_eq!(cfg.paths.output_dir, PathBuf::from("from-flag"));
    }

    #[test]
    fn usage_errors_map_to_exit_one() {
        assert_eq!(main_with_args(["lbvs", "no-such-stage"]), ExitCode::Usage);
        assert_eq!(main_with_args(["lbvs", "--help"]), ExitCode::Ok);
    }
}
