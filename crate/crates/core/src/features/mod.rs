//! Conspicuity maps: intensity, colour, orientation and motion.

pub mod gabor;
pub mod motion;
pub mod pyramid;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::Field2D;
use crate::hvs::{self, CsfModel, JndEncoding, ViewingGeometry};
use crate::io::HdrFrame;
use crate::scalar::Real;

pub use gabor::{GaborKernel, GaborParams, ORIENTATIONS_DEG};
pub use motion::{
    bilateral_filter, motion_feature, motion_from_residuals, residual_image, BlockMatching, FlowEngine,
    FlowField, MotionParams,
};
pub use pyramid::{
    across_scale_combine, center_surround, effective_levels, gaussian_pyramid, max_levels, scale_pairs,
    Pyramid,
};

/// Names of the four channels, in feature-vector order.
pub const CHANNELS: [&str; 4] = ["motion", "color", "intensity", "orientation"];

/// The four normalized conspicuity maps of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack<T> {
    pub motion: Field2D<T>,
    pub color: Field2D<T>,
    pub intensity: Field2D<T>,
    pub orientation: Field2D<T>,
}

impl<T: Real> FeatureStack<T> {
    pub fn new(
        motion: Field2D<T>,
        color: Field2D<T>,
        intensity: Field2D<T>,
        orientation: Field2D<T>,
    ) -> Result<Self> {
        let s = Self {
            motion,
            color,
            intensity,
            orientation,
        };
        for m in s.maps() {
            s.motion.ensure_same_dims(m)?;
        }
        Ok(s)
    }

    pub fn dims(&self) -> (usize, usize) {
        self.motion.dims()
    }

    /// Maps in channel order: motion, color, intensity, orientation.
    pub fn maps(&self) -> [&Field2D<T>; 4] {
        [&self.motion, &self.color, &self.intensity, &self.orientation]
    }

    /// Feature vector at flat pixel index `i`.
    #[inline]
    pub fn pixel(&self, i: usize) -> [T; 4] {
        [
            self.motion.values()[i],
            self.color.values()[i],
            self.intensity.values()[i],
            self.orientation.values()[i],
        ]
    }

    pub fn len(&self) -> usize {
        self.motion.len()
    }

    pub fn is_empty(&self) -> bool {
        self.motion.is_empty()
    }
}

fn multiscale_maps<T: Real>(f: &Field2D<T>) -> Result<Vec<Field2D<T>>> {
    let levels = effective_levels(f.width(), f.height());
    let pyr = gaussian_pyramid(f, levels)?;
    scale_pairs(levels)
        .into_iter()
        .map(|(c, d)| center_surround(&pyr, c, d))
        .collect()
}

fn combine_or_zero<T: Real>(maps: &[Field2D<T>], dims: (usize, usize)) -> Result<Field2D<T>> {
    if maps.is_empty() {
        // single-level pyramid: no scale contrast is measurable
        return Ok(Field2D::zeros(dims.0, dims.1));
    }
    across_scale_combine(maps, dims)
}

/// Intensity conspicuity of (CSF-filtered) luma.
pub fn intensity_feature<T: Real>(luma: &Field2D<T>) -> Result<Field2D<T>> {
    combine_or_zero(&multiscale_maps(luma)?, luma.dims())
}

/// Colour conspicuity: center-surround maps of both opponent signals,
/// combined together.
pub fn color_feature<T: Real>(opp: &hvs::OpponentPair<T>) -> Result<Field2D<T>> {
    opp.rg.ensure_same_dims(&opp.by)?;
    let mut maps = multiscale_maps(&opp.rg)?;
    maps.extend(multiscale_maps(&opp.by)?);
    combine_or_zero(&maps, opp.rg.dims())
}

/// Orientation conspicuity: each pyramid level is Gabor-filtered at 0°,
/// 45°, 90° and 135°, and center-surround maps are formed per orientation.
pub fn orientation_feature<T: Real>(luma: &Field2D<T>, params: &GaborParams) -> Result<Field2D<T>> {
    let levels = effective_levels(luma.width(), luma.height());
    let pyr = gaussian_pyramid(luma, levels)?;
    let pairs = scale_pairs(levels);
    let first = pairs.iter().map(|&(c, _)| c).min().unwrap_or(levels);
    let mut maps = Vec::with_capacity(pairs.len() * ORIENTATIONS_DEG.len());
    for theta in ORIENTATIONS_DEG {
        let kernel = GaborKernel::new(params, theta);
        let filtered = pyr.map_levels_from(first, |l| kernel.apply(l));
        for &(c, d) in &pairs {
            maps.push(center_surround(&filtered, c, d)?);
        }
    }
    combine_or_zero(&maps, luma.dims())
}

/// Settings for the whole per-frame extraction chain.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub geometry: ViewingGeometry,
    pub jnd: JndEncoding,
    pub csf: CsfModel,
    pub gabor: GaborParams,
    pub motion: MotionParams,
}

impl FeatureConfig {
    pub fn new(geometry: ViewingGeometry) -> Self {
        Self {
            geometry,
            jnd: JndEncoding::default(),
            csf: CsfModel::default(),
            gabor: GaborParams::default(),
            motion: MotionParams::default(),
        }
    }
}

/// Output of one extraction step; `residual` feeds the next frame's motion.
#[derive(Debug, Clone)]
pub struct FrameFeatures<T> {
    pub stack: FeatureStack<T>,
    pub residual: Field2D<T>,
}

/// HDR frame → JND luma → CSF → spatial channels; JND luma residuals →
/// motion against the previous frame's residual.
pub fn extract_frame<T: Real>(
    frame: &HdrFrame<T>,
    prev_residual: Option<&Field2D<T>>,
    cfg: &FeatureConfig,
) -> Result<FrameFeatures<T>> {
    let lum = hvs::luminance_of(frame);
    let luma = hvs::jnd_luma(&lum, cfg.jnd);
    let residual = residual_image(&luma, &cfg.motion);
    if let Some(p) = prev_residual {
        if p.dims() != residual.dims() {
            return Err(Error::DimensionMismatch {
                left: p.dims(),
                right: residual.dims(),
            });
        }
    }
    let engine = BlockMatching {
        block_size: cfg.motion.block_size,
        search_radius: cfg.motion.search_radius,
    };
    let filtered = hvs::csf_filter(&luma, &cfg.geometry, cfg.csf)?;
    let opp = hvs::cam_opponents(frame, None)?;
    let (motion, (color, (intensity, orientation))) = rayon::join(
        || motion_from_residuals(prev_residual, &residual, &engine),
        || {
            rayon::join(
                || color_feature(&opp),
                || {
                    rayon::join(
                        || intensity_feature(&filtered),
                        || orientation_feature(&filtered, &cfg.gabor),
                    )
                },
            )
        },
    );
    Ok(FrameFeatures {
        stack: FeatureStack::new(motion?, color?, intensity?, orientation?)?,
        residual,
    })
}

/// Extracts a whole sequence. Spatial work runs in parallel per frame;
/// motion pairs consecutive residuals.
pub fn extract_sequence<T: Real>(frames: &[HdrFrame<T>], cfg: &FeatureConfig) -> Result<Vec<FeatureStack<T>>> {
    let first: Vec<FrameFeatures<T>> = frames
        .par_iter()
        .map(|f| extract_frame(f, None, cfg))
        .collect::<Result<_>>()?;
    let engine = BlockMatching {
        block_size: cfg.motion.block_size,
        search_radius: cfg.motion.search_radius,
    };
    (0..first.len())
        .into_par_iter()
        .map(|k| {
            let mut stack = first[k].stack.clone();
            if k > 0 {
                stack.motion = motion_from_residuals(Some(&first[k - 1].residual), &first[k].residual, &engine)?;
            }
            Ok(stack)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disc(w: usize, h: usize, cx: f64, cy: f64, r: f64, inside: f64, outside: f64) -> Field2D<f64> {
        Field2D::from_fn(w, h, |x, y| {
            let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
            if d <= r {
                inside
            } else {
                outside
            }
        })
    }

    fn argmax(f: &Field2D<f64>) -> (usize, usize) {
        let (i, _) = f
            .values()
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        (i % f.width(), i / f.width())
    }

    #[test]
    fn constant_inputs_have_zero_conspicuity() {
        let c = Field2D::constant(64, 64, 12.0f64);
        assert!(intensity_feature(&c).unwrap().is_zero());
        assert!(orientation_feature(&c, &GaborParams::default()).unwrap().is_zero());
        let opp = hvs::OpponentPair {
            rg: Field2D::<f64>::zeros(64, 64),
            by: Field2D::zeros(64, 64),
        };
        assert!(color_feature(&opp).unwrap().is_zero());
    }

    #[test]
    fn bright_disc_peaks_near_disc() {
        let f = disc(128, 128, 40.0, 80.0, 10.0, 1.0, 0.0);
        let m = intensity_feature(&f).unwrap();
        assert!(m.is_normalized());
        let (x, y) = argmax(&m);
        let d = ((x as f64 - 40.0).powi(2) + (y as f64 - 80.0).powi(2)).sqrt();
        assert!(d <= 16.0, "peak at ({x},{y})");
    }

    #[test]
    fn color_swap_symmetry() {
        let a = disc(64, 64, 20.0, 20.0, 8.0, 0.5, -0.2);
        let b = disc(64, 64, 40.0, 44.0, 6.0, -0.4, 0.1);
        let one = color_feature(&hvs::OpponentPair { rg: a.clone(), by: b.clone() }).unwrap();
        let two = color_feature(&hvs::OpponentPair { rg: b, by: a }).unwrap();
        for (p, q) in one.values().iter().zip(two.values()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn tiny_frames_fall_back_to_shallow_pyramids() {
        let f = disc(8, 8, 4.0, 4.0, 2.0, 1.0, 0.0);
        let m = intensity_feature(&f).unwrap();
        assert!(m.is_normalized());
        assert!(!m.is_zero());
        let single = Field2D::from_fn(1, 5, |_, y| y as f64);
        assert!(intensity_feature(&single).unwrap().is_zero());
    }

    #[test]
    fn feature_stack_checks_dims() {
        let a = Field2D::<f64>::zeros(4, 4);
        let b = Field2D::<f64>::zeros(4, 3);
        assert!(FeatureStack::new(a.clone(), a.clone(), a.clone(), b).is_err());
        let s = FeatureStack::new(a.clone(), a.clone(), a.clone(), a).unwrap();
        assert_eq!(s.pixel(3), [0.0; 4]);
    }
}
