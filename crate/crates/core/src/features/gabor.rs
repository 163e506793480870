use rayon::prelude::*;

use crate::field::Field2D;
use crate::scalar::Real;

/// Even-symmetric Gabor filter parameters (pixels / degrees).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaborParams {
    pub wavelength: f64,
    pub aspect: f64,
    pub phase: f64,
    pub sigma: f64,
}

impl Default for GaborParams {
    fn default() -> Self {
        Self {
            wavelength: 7.0,
            aspect: 0.5,
            phase: 0.0,
            sigma: 2.8,
        }
    }
}

pub const ORIENTATIONS_DEG: [f64; 4] = [0.0, 45.0, 90.0, 135.0];

/// Square Gabor kernel with zero mean.
#[derive(Debug, Clone)]
pub struct GaborKernel<T> {
    radius: usize,
    taps: Vec<T>,
}

impl<T: Real> GaborKernel<T> {
    pub fn new(params: &GaborParams, theta_deg: f64) -> Self {
        let extent = params.sigma / params.aspect.min(1.0);
        let radius = (3.0 * extent).ceil() as usize;
        let size = 2 * radius + 1;
        let (s, c) = theta_deg.to_radians().sin_cos();
        let r = radius as f64;
        let mut taps = Vec::with_capacity(size * size);
        for j in 0..size {
            let y = j as f64 - r;
            for i in 0..size {
                let x = i as f64 - r;
                let xr = x * c + y * s;
                let yr = -x * s + y * c;
                let env = (-(xr * xr + params.aspect * params.aspect * yr * yr)
                    / (2.0 * params.sigma * params.sigma))
                    .exp();
                taps.push(env * (2.0 * std::f64::consts::PI * xr / params.wavelength + params.phase).cos());
            }
        }
        let mean = taps.iter().sum::<f64>() / taps.len() as f64;
        let centred: Vec<f64> = taps.iter().map(|t| t - mean).collect();
        let l1: f64 = centred.iter().map(|t| t.abs()).sum();
        Self {
            radius,
            taps: centred.into_iter().map(|t| T::of(t / l1)).collect(),
        }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Correlates `f` with the kernel, replicating edges.
    pub fn apply(&self, f: &Field2D<T>) -> Field2D<T> {
        let (w, h) = f.dims();
        let size = 2 * self.radius + 1;
        let r = self.radius as isize;
        let mut out = vec![T::zero(); w * h];
        out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
            for (x, o) in row.iter_mut().enumerate() {
                let mut acc = T::zero();
                for j in 0..size {
                    let sy = y as isize + j as isize - r;
                    let krow = &self.taps[j * size..(j + 1) * size];
                    for (i, &k) in krow.iter().enumerate() {
                        acc += k * f.get_clamped(x as isize + i as isize - r, sy);
                    }
                }
                *o = acc;
            }
        });
        Field2D::new(w, h, out).expect("finite filter output")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_is_zero_mean() {
        for theta in ORIENTATIONS_DEG {
            let k = GaborKernel::<f64>::new(&GaborParams::default(), theta);
            let s: f64 = k.taps.iter().sum();
            assert!(s.abs() < 1e-12);
            assert_eq!(k.radius(), 17);
        }
    }

    #[test]
    fn constant_input_gives_no_response() {
        let k = GaborKernel::<f64>::new(&GaborParams::default(), 45.0);
        let out = k.apply(&Field2D::constant(20, 20, 3.0));
        assert!(out.values().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn tuned_orientation_responds_most() {
        // luminance varies along x: stripes run vertically
        let f = Field2D::from_fn(48, 48, |x, _| (2.0 * std::f64::consts::PI * x as f64 / 7.0).cos());
        let energy = |theta: f64| {
            let r = GaborKernel::<f64>::new(&GaborParams::default(), theta).apply(&f);
            r.get(24, 24).abs()
        };
        assert!(energy(0.0) > 5.0 * energy(90.0));
    }
}
