//! Fixation density maps: pooled fixations blurred by a one-degree Gaussian.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::Field2D;
use crate::hvs::ViewingGeometry;
use crate::io::{FixationRecord, FixationSet};
use crate::scalar::Real;

/// Ground-truth map for one frame, peak-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct FixationDensityMap<T> {
    pub field: Field2D<T>,
    pub points: Vec<(usize, usize)>,
}

impl<T: Real> FixationDensityMap<T> {
    pub fn has_fixations(&self) -> bool {
        !self.points.is_empty()
    }
}

/// Pixels per degree of visual angle.
pub fn degrees_to_pixels(geom: &ViewingGeometry) -> Result<f64> {
    geom.pixels_per_degree()
}

/// All subjects' fixations on frame `k`, ordered by subject then start time.
pub fn fixations_for_frame(set: &FixationSet, k: usize) -> Vec<FixationRecord> {
    let mut out: Vec<FixationRecord> = set.frame(k).cloned().collect();
    out.sort_by(|a, b| {
        a.subject_id
            .cmp(&b.subject_id)
            .then(a.start_time.total_cmp(&b.start_time))
    });
    out
}

/// How each fixation contributes to the density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FixationWeighting {
    /// Every fixation counts once per frame it overlaps.
    #[default]
    Unit,
    /// Fixations weighted by duration.
    Duration,
}

/// Builds an FDM from integer fixation pixels with σ = 1° of visual angle.
pub fn build_fdm<T: Real>(
    fixations: &[(usize, usize)],
    geom: &ViewingGeometry,
    dims: (usize, usize),
) -> Result<FixationDensityMap<T>> {
    let weighted: Vec<_> = fixations.iter().map(|&(x, y)| (x, y, T::one())).collect();
    build_fdm_weighted(&weighted, geom, dims)
}

/// Builds an FDM from weighted fixation pixels.
pub fn build_fdm_weighted<T: Real>(
    fixations: &[(usize, usize, T)],
    geom: &ViewingGeometry,
    dims: (usize, usize),
) -> Result<FixationDensityMap<T>> {
    let sigma = degrees_to_pixels(geom)?;
    build_fdm_with_sigma(fixations, sigma, dims)
}

/// Builds an FDM with an explicit Gaussian σ in pixels.
pub fn build_fdm_with_sigma<T: Real>(
    fixations: &[(usize, usize, T)],
    sigma: f64,
    dims: (usize, usize),
) -> Result<FixationDensityMap<T>> {
    let (w, h) = dims;
    if w == 0 || h == 0 {
        return Err(Error::param("FDM dimensions must be positive"));
    }
    let mut impulses = Field2D::zeros(w, h);
    for (index, &(x, y, wt)) in fixations.iter().enumerate() {
        if x >= w || y >= h {
            return Err(Error::OutOfBounds {
                index,
                x,
                y,
                width: w,
                height: h,
            });
        }
        let v = impulses.get(x, y);
        impulses.set(x, y, v + wt);
    }
    let points = fixations.iter().map(|&(x, y, _)| (x, y)).collect();
    if fixations.is_empty() {
        return Ok(FixationDensityMap { field: impulses, points });
    }
    let blurred = gaussian_blur(&impulses, sigma);
    let peak = blurred.max();
    let field = if peak > T::zero() {
        blurred.map(|v| (v / peak).max(T::zero()))
    } else {
        blurred
    };
    Ok(FixationDensityMap { field, points })
}

/// Sampled Gaussian taps `exp(−x²/2σ²)` for `|x| ≤ ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(0.0) as i64;
    (-radius..=radius)
        .map(|x| (-((x * x) as f64) / (2.0 * sigma * sigma)).exp())
        .collect()
}

/// Separable Gaussian blur with edge replication. The kernel is left
/// unnormalized; callers rescale.
pub fn gaussian_blur<T: Real>(f: &Field2D<T>, sigma: f64) -> Field2D<T> {
    if !(sigma > 0.0) {
        return f.clone();
    }
    let taps: Vec<T> = gaussian_kernel(sigma).into_iter().map(T::of).collect();
    let r = (taps.len() / 2) as isize;
    let (w, h) = f.dims();
    let mut horiz = vec![T::zero(); w * h];
    horiz.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let src = &f.values()[y * w..(y + 1) * w];
        if src.iter().all(|v| v.is_zero()) {
            return;
        }
        for (x, o) in row.iter_mut().enumerate() {
            let mut acc = T::zero();
            for (i, &k) in taps.iter().enumerate() {
                let sx = (x as isize + i as isize - r).clamp(0, w as isize - 1) as usize;
                acc += k * src[sx];
            }
            *o = acc;
        }
    });
    let horiz = Field2D::new(w, h, horiz).expect("finite");
    let mut out = vec![T::zero(); w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (i, &k) in taps.iter().enumerate() {
            let sy = (y as isize + i as isize - r).clamp(0, h as isize - 1) as usize;
            let src = &horiz.values()[sy * w..(sy + 1) * w];
            for (o, &v) in row.iter_mut().zip(src) {
                *o += k * v;
            }
        }
    });
    Field2D::new(w, h, out).expect("finite")
}

/// FDMs for every frame of a sequence.
pub fn build_sequence_fdms<T: Real>(
    set: &FixationSet,
    geom: &ViewingGeometry,
    dims: (usize, usize),
    weighting: FixationWeighting,
) -> Result<Vec<FixationDensityMap<T>>> {
    (0..set.num_frames())
        .into_par_iter()
        .map(|k| {
            let recs = fixations_for_frame(set, k);
            let pts: Vec<(usize, usize, T)> = recs
                .iter()
                .map(|r| {
                    let (x, y) = r.pixel();
                    let wt = match weighting {
                        FixationWeighting::Unit => T::one(),
                        FixationWeighting::Duration => T::of(r.duration),
                    };
                    (x, y, wt)
                })
                .collect();
            build_fdm_weighted(&pts, geom, dims)
        })
        .collect()
}
