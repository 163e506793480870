//! Residual-image block-matching motion.
//!
//! Each frame is reduced to its residual `luma − bilateral(luma)`, which
//! suppresses slowly varying illumination changes, and flow is estimated
//! on residuals with exhaustive SAD block matching.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::Field2D;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionParams {
    pub block_size: usize,
    pub search_radius: usize,
    /// Spatial σ of the bilateral filter, pixels.
    pub spatial_sigma: f64,
    /// Range σ as a fraction of the frame's dynamic range.
    pub range_sigma_fraction: f64,
}

impl Default for MotionParams {
    fn default() -> Self {
        Self {
            block_size: 16,
            search_radius: 8,
            spatial_sigma: 3.0,
            range_sigma_fraction: 0.1,
        }
    }
}

/// Edge-preserving smoothing; out-of-frame neighbours are skipped.
pub fn bilateral_filter<T: Real>(f: &Field2D<T>, spatial_sigma: f64, range_sigma: f64) -> Field2D<T> {
    if !(range_sigma > 0.0) || !(spatial_sigma > 0.0) {
        return f.clone();
    }
    let (w, h) = f.dims();
    let radius = (3.0 * spatial_sigma).ceil() as isize;
    let size = (2 * radius + 1) as usize;
    let spatial: Vec<f64> = (0..size * size)
        .map(|i| {
            let dx = (i % size) as f64 - radius as f64;
            let dy = (i / size) as f64 - radius as f64;
            (-(dx * dx + dy * dy) / (2.0 * spatial_sigma * spatial_sigma)).exp()
        })
        .collect();
    let inv_range = 1.0 / (2.0 * range_sigma * range_sigma);
    let src = f.values();
    let mut out = vec![T::zero(); w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            let centre = src[y * w + x].to_f64_lossy();
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for dy in -radius..=radius {
                let sy = y as isize + dy;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                for dx in -radius..=radius {
                    let sx = x as isize + dx;
                    if sx < 0 || sx >= w as isize {
                        continue;
                    }
                    let v = src[sy as usize * w + sx as usize].to_f64_lossy();
                    let d = v - centre;
                    let k = spatial[((dy + radius) as usize) * size + (dx + radius) as usize]
                        * (-d * d * inv_range).exp();
                    acc += k * v;
                    wsum += k;
                }
            }
            *o = T::of(acc / wsum);
        }
    });
    Field2D::new(w, h, out).expect("finite bilateral output")
}

/// `luma − bilateral(luma)`, with the range σ tied to the frame's range.
pub fn residual_image<T: Real>(luma: &Field2D<T>, params: &MotionParams) -> Field2D<T> {
    let range = (luma.max() - luma.min()).to_f64_lossy();
    let smooth = bilateral_filter(luma, params.spatial_sigma, params.range_sigma_fraction * range);
    luma.zip_with(&smooth, |a, b| a - b).expect("same dims")
}

/// Per-block displacement `d` such that `curr(p) ≈ prev(p − d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub blocks_x: usize,
    pub blocks_y: usize,
    pub block_size: usize,
    pub vectors: Vec<(i32, i32)>,
}

impl FlowField {
    pub fn vector(&self, bx: usize, by: usize) -> (i32, i32) {
        self.vectors[by * self.blocks_x + bx]
    }

    /// Displacement magnitude per block.
    pub fn magnitudes<T: Real>(&self) -> Field2D<T> {
        Field2D::from_fn(self.blocks_x, self.blocks_y, |x, y| {
            let (dx, dy) = self.vector(x, y);
            T::of(((dx * dx + dy * dy) as f64).sqrt())
        })
    }
}

/// Two-frame flow estimator.
pub trait FlowEngine<T: Real>: Sync {
    fn estimate(&self, prev: &Field2D<T>, curr: &Field2D<T>) -> Result<FlowField>;
}

/// Exhaustive SAD block matching. Ties go to the smaller displacement,
/// then to the earlier candidate in `(dy, dx)` scan order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockMatching {
    pub block_size: usize,
    pub search_radius: usize,
}

impl BlockMatching {
    fn candidates(&self) -> Vec<(i32, i32)> {
        let r = self.search_radius as i32;
        let mut c: Vec<(i32, i32)> = (-r..=r).flat_map(|dy| (-r..=r).map(move |dx| (dx, dy))).collect();
        // stable sort keeps scan order among equal magnitudes
        c.sort_by_key(|&(dx, dy)| dx * dx + dy * dy);
        c
    }
}

impl<T: Real> FlowEngine<T> for BlockMatching {
    fn estimate(&self, prev: &Field2D<T>, curr: &Field2D<T>) -> Result<FlowField> {
        prev.ensure_same_dims(curr)?;
        if self.block_size == 0 {
            return Err(Error::param("block size must be positive"));
        }
        let (w, h) = curr.dims();
        let bs = self.block_size;
        let blocks_x = w.div_ceil(bs);
        let blocks_y = h.div_ceil(bs);
        let candidates = self.candidates();
        let vectors = (0..blocks_x * blocks_y)
            .into_par_iter()
            .map(|b| {
                let (bx, by) = (b % blocks_x, b / blocks_x);
                let (x0, y0) = (bx * bs, by * bs);
                let (x1, y1) = ((x0 + bs).min(w), (y0 + bs).min(h));
                let mut best = (0, 0);
                let mut best_cost: Option<T> = None;
                for &(dx, dy) in &candidates {
                    let px0 = x0 as i64 - dx as i64;
                    let py0 = y0 as i64 - dy as i64;
                    let px1 = x1 as i64 - dx as i64;
                    let py1 = y1 as i64 - dy as i64;
                    if px0 < 0 || py0 < 0 || px1 > w as i64 || py1 > h as i64 {
                        continue;
                    }
                    let mut cost = T::zero();
                    for y in y0..y1 {
                        let sy = (y as i64 - dy as i64) as usize;
                        for x in x0..x1 {
                            let sx = (x as i64 - dx as i64) as usize;
                            cost += (curr.get(x, y) - prev.get(sx, sy)).abs();
                        }
                    }
                    if best_cost.is_none_or(|bc| cost < bc) {
                        best_cost = Some(cost);
                        best = (dx, dy);
                    }
                }
                best
            })
            .collect();
        Ok(FlowField {
            blocks_x,
            blocks_y,
            block_size: bs,
            vectors,
        })
    }
}

/// Motion conspicuity from two residual images: per-block flow magnitude,
/// upsampled to frame size and normalized.
pub fn motion_from_residuals<T: Real>(
    prev_residual: Option<&Field2D<T>>,
    curr_residual: &Field2D<T>,
    engine: &dyn FlowEngine<T>,
) -> Result<Field2D<T>> {
    let (w, h) = curr_residual.dims();
    let Some(prev) = prev_residual else {
        return Ok(Field2D::zeros(w, h));
    };
    let flow = engine.estimate(prev, curr_residual)?;
    let mags: Field2D<T> = flow.magnitudes();
    Ok(mags.resize_bilinear(w, h).normalize01())
}

/// Motion conspicuity between two luma frames; the first frame of a
/// sequence (`prev = None`) yields a zero map.
pub fn motion_feature<T: Real>(
    prev: Option<&Field2D<T>>,
    curr: &Field2D<T>,
    params: &MotionParams,
) -> Result<Field2D<T>> {
    if let Some(p) = prev {
        p.ensure_same_dims(curr)?;
    }
    let engine = BlockMatching {
        block_size: params.block_size,
        search_radius: params.search_radius,
    };
    let prev_res = prev.map(|p| residual_image(p, params));
    let curr_res = residual_image(curr, params);
    motion_from_residuals(prev_res.as_ref(), &curr_res, &engine)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texture(w: usize, h: usize, shift: i64) -> Field2D<f64> {
        // deterministic hash texture, shifted along x
        Field2D::from_fn(w, h, |x, y| {
            let xs = (x as i64 - shift).rem_euclid(1 << 20) as u64;
            let mut v = xs.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
            v ^= v >> 29;
            v = v.wrapping_mul(0xBF58_476D_1CE4_E5B9);
            v ^= v >> 32;
            (v % 1000) as f64 / 1000.0
        })
    }

    #[test]
    fn candidate_order_prefers_small_then_scan() {
        let c = BlockMatching {
            block_size: 4,
            search_radius: 1,
        }
        .candidates();
        assert_eq!(&c[..5], &[(0, 0), (0, -1), (-1, 0), (1, 0), (0, 1)]);
    }

    #[test]
    fn identical_frames_have_zero_motion() {
        let f = texture(48, 40, 0);
        let m = motion_feature(Some(&f), &f, &MotionParams::default()).unwrap();
        assert!(m.is_zero());
    }

    #[test]
    fn first_frame_has_zero_motion() {
        let f = texture(32, 32, 0);
        assert!(motion_feature(None, &f, &MotionParams::default()).unwrap().is_zero());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = texture(32, 32, 0);
        let b = texture(32, 16, 0);
        assert!(motion_feature(Some(&a), &b, &MotionParams::default()).is_err());
    }

    #[test]
    fn bilateral_keeps_constant_and_step_edges() {
        let c = Field2D::constant(10, 10, 2.0f64);
        assert_eq!(bilateral_filter(&c, 3.0, 0.1), c);
        let step = Field2D::from_fn(20, 10, |x, _| if x < 10 { 0.0 } else { 1.0 });
        let out = bilateral_filter(&step, 3.0, 0.1);
        assert!(out.get(9, 5) < 1e-6);
        assert!(out.get(10, 5) > 1.0 - 1e-6);
    }

    #[test]
    fn block_flow_recovers_global_shift() {
        let prev = texture(64, 64, 0);
        let curr = texture(64, 64, 2);
        let flow = BlockMatching {
            block_size: 16,
            search_radius: 8,
        }
        .estimate(&prev, &curr)
        .unwrap();
        for by in 0..4 {
            for bx in 1..4 {
                assert_eq!(flow.vector(bx, by), (2, 0), "block ({bx},{by})");
            }
        }
    }
}
