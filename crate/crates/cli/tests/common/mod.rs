//! Synthetic HDR sequences and helpers for driving the `lbvs` binary.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lbvs_core::io::{write_pfm, HdrFrame};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const FRAME_RATE: f64 = 30.0;

/// A disc moving at constant velocity.
#[derive(Debug, Clone, Copy)]
pub struct MovingDisc {
    pub start: (f64, f64),
    pub velocity: (f64, f64),
    pub radius: f64,
    /// Linear RGB in cd/m².
    pub rgb: [f64; 3],
    /// Relative chance that a subject looks at this disc.
    pub attention: f64,
}

impl MovingDisc {
    pub fn centre(&self, k: usize) -> (f64, f64) {
        (
            self.start.0 + self.velocity.0 * k as f64,
            self.start.1 + self.velocity.1 * k as f64,
        )
    }
}

pub fn default_discs(w: usize, h: usize) -> Vec<MovingDisc> {
    let (w, h) = (w as f64, h as f64);
    vec![
        MovingDisc {
            start: (0.2 * w, 0.3 * h),
            velocity: (0.025 * w, 0.0),
            radius: 0.07 * w,
            rgb: [900.0, 120.0, 80.0],
            attention: 0.55,
        },
        MovingDisc {
            start: (0.7 * w, 0.2 * h),
            velocity: (0.0, 0.02 * h),
            radius: 0.06 * w,
            rgb: [70.0, 110.0, 800.0],
            attention: 0.3,
        },
        MovingDisc {
            start: (0.35 * w, 0.75 * h),
            velocity: (0.0, 0.0),
            radius: 0.05 * w,
            rgb: [400.0, 400.0, 380.0],
            attention: 0.15,
        },
    ]
}

/// Mid-grey texture with mild tint so the background is not flat.
fn background(x: usize, y: usize, seed: u64) -> [f64; 3] {
    let (xf, yf) = (x as f64, y as f64);
    let phase = seed as f64 * 0.37;
    let t = 0.5 + 0.25 * (xf * 0.21 + phase).sin() * (yf * 0.17).cos() + 0.1 * ((xf + 2.0 * yf) * 0.05).sin();
    let base = 40.0 * t + 10.0;
    [base * 1.02, base, base * 0.95]
}

pub fn render_frame(w: usize, h: usize, k: usize, discs: &[MovingDisc], seed: u64) -> HdrFrame<f32> {
    HdrFrame::from_fn(w, h, 1.0, k, |x, y| {
        let mut px = background(x, y, seed);
        for d in discs {
            let (cx, cy) = d.centre(k);
            if (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= d.radius * d.radius {
                px = d.rgb;
            }
        }
        px.map(|v| v as f32)
    })
    .expect("valid synthetic frame")
}

/// Fixation log rows: each subject makes back-to-back 100 ms fixations on
/// a disc chosen by its attention weight, with Gaussian aim jitter.
pub fn fixation_log(w: usize, h: usize, frames: usize, discs: &[MovingDisc], subjects: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, 0.02 * w as f64).expect("valid sigma");
    let total_ms = frames as f64 * 1000.0 / FRAME_RATE;
    let weight_sum: f64 = discs.iter().map(|d| d.attention).sum();
    let mut out = String::from("subject,start_ms,duration_ms,x,y\n");
    for s in 0..subjects {
        let mut t = rng.random_range(0.0..40.0);
        while t < total_ms {
            let mut u = rng.random_range(0.0..weight_sum);
            let disc = discs
                .iter()
                .find(|d| {
                    u -= d.attention;
                    u < 0.0
                })
                .unwrap_or(&discs[0]);
            let k = ((t / 1000.0 * FRAME_RATE) as usize).min(frames - 1);
            let (cx, cy) = disc.centre(k);
            let x = (cx + jitter.sample(&mut rng)).clamp(0.0, w as f64 - 1.0);
            let y = (cy + jitter.sample(&mut rng)).clamp(0.0, h as f64 - 1.0);
            out.push_str(&format!("s{s:02},{t:.1},100,{x:.2},{y:.2}\n"));
            t += 100.0;
        }
    }
    out
}

/// Writes `<data>/<seq>/frames/*.pfm` and `<data>/<seq>/fixations.csv`.
pub fn write_sequence(data: &Path, seq: &str, w: usize, h: usize, frames: usize, seed: u64) {
    let dir = data.join(seq).join("frames");
    std::fs::create_dir_all(&dir).unwrap();
    let discs = default_discs(w, h);
    for k in 0..frames {
        write_pfm(&render_frame(w, h, k, &discs, seed), dir.join(format!("f{k:04}.pfm"))).unwrap();
    }
    let log = fixation_log(w, h, frames, &discs, 12, seed);
    std::fs::write(data.join(seq).join("fixations.csv"), log).unwrap();
}

/// Display where a 256-pixel-wide frame spans about 28°.
pub const GEOMETRY_TOML: &str = "[geometry]\nscreen_width_m = 0.5\nviewing_distance_m = 1.0\nhorizontal_resolution = 256\n";

pub fn write_config(path: &Path, data: &Path, out: &Path, train: &[&str], validation: &[&str], extra: &str) {
    let list = |v: &[&str]| v.iter().map(|s| format!("{s:?}")).collect::<Vec<_>>().join(", ");
    let text = format!(
        "[paths]\ndata_dir = {:?}\noutput_dir = {:?}\n\n[sequences]\ntrain = [{}]\nvalidation = [{}]\n\n{GEOMETRY_TOML}\n{extra}",
        data.display().to_string(),
        out.display().to_string(),
        list(train),
        list(validation),
    );
    std::fs::write(path, text).unwrap();
}

pub fn lbvs_binary() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_lbvs"))
}

pub fn run_lbvs(args: &[&str]) -> Output {
    Command::new(lbvs_binary())
        .args(args)
        .env_remove("LBVS_OUTPUT_DIR")
        .output()
        .expect("lbvs binary runs")
}

/// Runs a stage and panics with its stderr if it fails.
pub fn run_ok(args: &[&str]) -> String {
    let out = run_lbvs(args);
    assert!(
        out.status.success(),
        "lbvs {args:?} failed with {:?}:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}
