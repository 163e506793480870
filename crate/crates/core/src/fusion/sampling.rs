use crate::error::{Error, Result};
use crate::features::FeatureStack;
use crate::field::Field2D;
use crate::scalar::Real;

/// One training row: the four channel values at a pixel and the FDM value
/// there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelSample<T> {
    /// Channel order: motion, color, intensity, orientation.
    pub features: [T; 4],
    pub target: T,
}

impl<T: Real> PixelSample<T> {
    /// Checked constructor; every component must lie in `[0, 1]`.
    pub fn new(features: [T; 4], target: T) -> Result<Self> {
        let unit = |v: T| v.is_finite() && v >= T::zero() && v <= T::one();
        for (index, &v) in features.iter().chain(std::iter::once(&target)).enumerate() {
            if !unit(v) {
                return Err(Error::InvalidSample {
                    index,
                    value: v.to_f64_lossy(),
                });
            }
        }
        Ok(Self { features, target })
    }
}

/// Number of frames taken from a video of `n` frames.
pub fn sampled_frame_count(n: usize, frame_fraction: f64) -> usize {
    // guard against products like 0.1·30 landing a hair above an integer
    (((frame_fraction * n as f64) - 1e-9).ceil().max(1.0) as usize).min(n)
}

/// Evenly spaced frame indices `floor(i·n/k)`.
pub fn sampled_frame_indices(n: usize, frame_fraction: f64) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let k = sampled_frame_count(n, frame_fraction);
    (0..k).map(|i| i * n / k).collect()
}

/// Builds training rows from per-video `(features, FDM)` frame lists.
/// The same fraction of frames is taken from each video, and within a
/// frame every `pixel_stride`-th pixel in scan order.
pub fn sample_pixels<T, V>(videos: &[V], frame_fraction: f64, pixel_stride: usize) -> Result<Vec<PixelSample<T>>>
where
    T: Real,
    V: AsRef<[(FeatureStack<T>, Field2D<T>)]>,
{
    if !(frame_fraction > 0.0 && frame_fraction <= 1.0) {
        return Err(Error::param(format!("frame fraction must lie in (0, 1], got {frame_fraction}")));
    }
    if pixel_stride == 0 {
        return Err(Error::param("pixel stride must be at least 1"));
    }
    if videos.iter().all(|v| v.as_ref().is_empty()) {
        return Err(Error::Empty("no frames to sample"));
    }
    let mut out = Vec::new();
    for video in videos {
        let frames = video.as_ref();
        for k in sampled_frame_indices(frames.len(), frame_fraction) {
            let (stack, fdm) = &frames[k];
            stack.motion.ensure_same_dims(fdm)?;
            for i in (0..fdm.len()).step_by(pixel_stride) {
                out.push(PixelSample::new(stack.pixel(i), fdm.values()[i])?);
            }
        }
    }
    Ok(out)
}
