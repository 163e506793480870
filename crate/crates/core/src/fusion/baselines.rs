//! Reference fusion schemes the forest is compared against.

use std::sync::Arc;

use super::forest::{rf_predict, RandomForestModel, NUM_FEATURES};
use super::sampling::PixelSample;
use crate::error::{Error, Result};
use crate::features::FeatureStack;
use crate::field::Field2D;
use crate::scalar::Real;

/// Local maxima below this are ignored by [`gnlns_normalize`].
pub const GNLNS_PEAK_THRESHOLD: f64 = 0.05;

pub const LMS_RIDGE: f64 = 1e-6;

/// Global non-linear normalization: rescale to `[0, 1]`, then multiply by
/// `(1 − m̄)²` where `m̄` is the mean of the local maxima other than the
/// global one. Maps dominated by one peak keep their weight; maps with many
/// comparable peaks are suppressed.
pub fn gnlns_normalize<T: Real>(f: &Field2D<T>) -> Field2D<T> {
    let n = f.normalize01();
    if n.is_zero() {
        return n;
    }
    let (w, h) = n.dims();
    let threshold = T::of(GNLNS_PEAK_THRESHOLD);
    let mut peaks = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = n.get(x, y);
            if v <= threshold {
                continue;
            }
            let mut is_peak = true;
            'nb: for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let u = n.get(nx as usize, ny as usize);
                    // a plateau counts once, at its first pixel in scan order
                    let earlier = dy < 0 || (dy == 0 && dx < 0);
                    if u > v || (u == v && earlier) {
                        is_peak = false;
                        break 'nb;
                    }
                }
            }
            if is_peak {
                peaks.push(v);
            }
        }
    }
    // drop one instance of the global maximum (exactly 1 after normalize01)
    if let Some(pos) = peaks.iter().position(|&p| p == T::one()) {
        peaks.remove(pos);
    }
    let mean = if peaks.is_empty() {
        T::zero()
    } else {
        peaks.iter().copied().sum::<T>() / T::of_usize(peaks.len())
    };
    let gain = (T::one() - mean) * (T::one() - mean);
    n.map(|v| v * gain)
}

/// Least-squares channel weights `w` minimizing `Σ (w·x − y)²`, with a small
/// ridge term so collinear channels stay solvable.
pub fn fit_lms_weights<T: Real>(samples: &[PixelSample<T>]) -> Result<[f64; NUM_FEATURES]> {
    if samples.len() < NUM_FEATURES {
        return Err(Error::TooFewSamples {
            found: samples.len(),
            required: NUM_FEATURES,
        });
    }
    let mut a = [[0.0f64; NUM_FEATURES]; NUM_FEATURES];
    let mut b = [0.0f64; NUM_FEATURES];
    for s in samples {
        let x = s.features.map(|v| v.to_f64_lossy());
        let y = s.target.to_f64_lossy();
        for i in 0..NUM_FEATURES {
            b[i] += x[i] * y;
            for j in 0..NUM_FEATURES {
                a[i][j] += x[i] * x[j];
            }
        }
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += LMS_RIDGE;
    }
    solve4(a, b).ok_or_else(|| Error::param("normal equations are singular"))
}

/// Gaussian elimination with partial pivoting.
fn solve4(mut a: [[f64; NUM_FEATURES]; NUM_FEATURES], mut b: [f64; NUM_FEATURES]) -> Option<[f64; NUM_FEATURES]> {
    const N: usize = NUM_FEATURES;
    for col in 0..N {
        let pivot = (col..N).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..N {
            let factor = a[row][col] / a[col][col];
            for k in col..N {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0; N];
    for row in (0..N).rev() {
        let tail: f64 = (row + 1..N).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// The fusion schemes compared in the evaluation table.
#[derive(Debug, Clone, PartialEq)]
pub enum FusionMethod<T> {
    Average,
    Multiplication,
    Maximum,
    SumPlusProduct,
    Gnlns,
    LmsWeighted([f64; NUM_FEATURES]),
    StdWeighted,
    RandomForest(Arc<RandomForestModel<T>>),
}

impl<T> FusionMethod<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Average => "average",
            Self::Multiplication => "multiplication",
            Self::Maximum => "maximum",
            Self::SumPlusProduct => "sum-plus-product",
            Self::Gnlns => "gnlns",
            Self::LmsWeighted(_) => "lms-weighted",
            Self::StdWeighted => "std-weighted",
            Self::RandomForest(_) => "random-forest",
        }
    }

    /// Human-readable row label.
    pub fn label(&self) -> &'static str {
        match self {
            Self::Average => "Average",
            Self::Multiplication => "Multiplication",
            Self::Maximum => "Maximum",
            Self::SumPlusProduct => "Sum plus product",
            Self::Gnlns => "GNLNS",
            Self::LmsWeighted(_) => "LMS weighted average",
            Self::StdWeighted => "Std-dev weighted average",
            Self::RandomForest(_) => "Random forest",
        }
    }

    /// Parses a parameter-free method name.
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "average" => Self::Average,
            "multiplication" => Self::Multiplication,
            "maximum" => Self::Maximum,
            "sum-plus-product" => Self::SumPlusProduct,
            "gnlns" => Self::Gnlns,
            "std-weighted" => Self::StdWeighted,
            _ => return None,
        })
    }
}

/// Names accepted by [`FusionMethod::from_name`] plus the two trained ones.
pub const METHOD_NAMES: [&str; 8] = [
    "average",
    "multiplication",
    "maximum",
    "sum-plus-product",
    "gnlns",
    "lms-weighted",
    "std-weighted",
    "random-forest",
];

/// Applies a fusion scheme and normalizes the result to `[0, 1]`.
pub fn fuse_fixed<T: Real>(method: &FusionMethod<T>, stack: &FeatureStack<T>) -> Result<Field2D<T>> {
    let maps = stack.maps();
    for m in &maps[1..] {
        maps[0].ensure_same_dims(m)?;
    }
    let pixelwise = |f: &dyn Fn([T; 4]) -> T| {
        let (w, h) = stack.dims();
        Field2D::from_fn(w, h, |x, y| f(stack.pixel(y * w + x)))
    };
    // symmetric schemes sort first so channel order cannot change rounding
    let sorted = |mut p: [T; 4]| {
        p.sort_by(T::cmp_finite);
        p
    };
    let sum = |p: [T; 4]| sorted(p).iter().copied().sum::<T>();
    let product = |p: [T; 4]| sorted(p).iter().fold(T::one(), |a, &v| a * v);
    let raw = match method {
        FusionMethod::Average => pixelwise(&|p| sum(p) / T::of(4.0)),
        FusionMethod::Multiplication => pixelwise(&product),
        FusionMethod::Maximum => pixelwise(&|p| p.iter().copied().fold(T::neg_infinity(), T::max)),
        FusionMethod::SumPlusProduct => pixelwise(&|p| sum(p) + product(p)),
        FusionMethod::Gnlns => {
            let n: Vec<Field2D<T>> = maps.iter().map(|m| gnlns_normalize(m)).collect();
            let (w, h) = stack.dims();
            Field2D::from_fn(w, h, |x, y| n.iter().map(|m| m.get(x, y)).sum())
        }
        FusionMethod::LmsWeighted(wts) => {
            if wts.iter().any(|v| !v.is_finite()) {
                return Err(Error::param("LMS weights must be finite"));
            }
            let wts = wts.map(T::of);
            pixelwise(&|p| {
                p.iter()
                    .zip(&wts)
                    .map(|(&v, &w)| v * w)
                    .sum::<T>()
                    .max(T::zero())
            })
        }
        FusionMethod::StdWeighted => {
            let sig = maps.map(|m| m.std_dev());
            let total: T = sig.iter().copied().sum();
            let wts = if total > T::zero() {
                sig.map(|s| s / total)
            } else {
                [T::of(0.25); 4]
            };
            pixelwise(&|p| p.iter().zip(&wts).map(|(&v, &w)| v * w).sum())
        }
        FusionMethod::RandomForest(model) => return Ok(rf_predict(model, stack)),
    };
    Ok(raw.normalize01())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stack_of(maps: [Field2D<f64>; 4]) -> FeatureStack<f64> {
        let [a, b, c, d] = maps;
        FeatureStack::new(a, b, c, d).unwrap()
    }

    fn varied(seed: usize) -> Field2D<f64> {
        Field2D::from_fn(6, 5, |x, y| ((x * 5 + y * 3 + seed * 7) % 11) as f64 / 10.0)
    }

    #[test]
    fn lone_peak_is_unchanged() {
        let f = Field2D::from_fn(9, 9, |x, y| if (x, y) == (4, 4) { 1.0 } else { 0.0 });
        assert_eq!(gnlns_normalize(&f), f);
    }

    #[test]
    fn two_equal_peaks_vanish() {
        let f = Field2D::from_fn(9, 9, |x, y| if (x, y) == (2, 2) || (x, y) == (6, 6) { 1.0 } else { 0.0 });
        assert!(gnlns_normalize(&f).is_zero());
    }

    #[test]
    fn half_height_second_peak_quarters_the_map() {
        let f = Field2D::from_fn(9, 9, |x, y| match (x, y) {
            (2, 2) => 1.0,
            (6, 6) => 0.5,
            _ => 0.0,
        });
        let g = gnlns_normalize(&f);
        assert_eq!(g.get(2, 2), 0.25);
        assert_eq!(g.get(6, 6), 0.125);
    }

    #[test]
    fn plateau_counts_once() {
        let f = Field2D::from_fn(9, 3, |x, _| match x {
            1 => 1.0,
            5 | 6 => 0.5,
            _ => 0.0,
        });
        // the 0.5 plateau spans six pixels but is one maximum
        assert_eq!(gnlns_normalize(&f).get(1, 0), 0.25);
    }

    #[test]
    fn lms_recovers_single_channel_and_mixture() {
        let s: Vec<PixelSample<f64>> = (0..200)
            .map(|i| {
                let x = [
                    (i % 7) as f64 / 6.0,
                    (i % 11) as f64 / 10.0,
                    (i % 13) as f64 / 12.0,
                    (i % 5) as f64 / 4.0,
                ];
                PixelSample { features: x, target: x[1] }
            })
            .collect();
        let w = fit_lms_weights(&s).unwrap();
        for (got, want) in w.iter().zip([0.0, 1.0, 0.0, 0.0]) {
            assert!((got - want).abs() < 1e-3, "{w:?}");
        }
        let mixed: Vec<_> = s
            .iter()
            .map(|p| PixelSample {
                target: 0.3 * p.features[0] + 0.7 * p.features[1],
                ..*p
            })
            .collect();
        let w = fit_lms_weights(&mixed).unwrap();
        for (got, want) in w.iter().zip([0.3, 0.7, 0.0, 0.0]) {
            assert!((got - want).abs() < 1e-3, "{w:?}");
        }
    }

    #[test]
    fn lms_duplicate_columns_split_weight() {
        let s: Vec<PixelSample<f64>> = (0..100)
            .map(|i| {
                let a = (i % 9) as f64 / 8.0;
                PixelSample {
                    features: [a, a, ((i * 7) % 4) as f64 / 3.0, ((i * 3) % 5) as f64 / 4.0],
                    target: a,
                }
            })
            .collect();
        let w = fit_lms_weights(&s).unwrap();
        assert!(w.iter().all(|v| v.is_finite()));
        assert!((w[0] + w[1] - 1.0).abs() < 1e-3, "{w:?}");
        assert!(fit_lms_weights(&s[..3]).is_err());
    }

    #[test]
    fn average_of_quarter_steps_is_half() {
        let s = stack_of([0.2, 0.4, 0.6, 0.8].map(|v| Field2D::constant(2, 2, v)));
        let (w, h) = s.dims();
        let raw = Field2D::from_fn(w, h, |x, y| s.pixel(y * w + x).iter().sum::<f64>() / 4.0);
        assert!(raw.values().iter().all(|&v| (v - 0.5).abs() < 1e-15));
        // constant raw output normalizes to zero
        assert!(fuse_fixed(&FusionMethod::Average, &s).unwrap().is_zero());
    }

    #[test]
    fn multiplication_by_zero_map() {
        let s = stack_of([varied(1), Field2D::zeros(6, 5), varied(2), varied(3)]);
        assert!(fuse_fixed(&FusionMethod::Multiplication, &s).unwrap().is_zero());
    }

    #[test]
    fn std_weighted_picks_only_varying_map() {
        let s = stack_of([
            Field2D::constant(6, 5, 0.3),
            varied(4),
            Field2D::constant(6, 5, 0.9),
            Field2D::zeros(6, 5),
        ]);
        let fused = fuse_fixed(&FusionMethod::StdWeighted, &s).unwrap();
        assert_eq!(fused, varied(4).normalize01());
    }

    #[test]
    fn symmetric_methods_ignore_channel_order() {
        let a = stack_of([varied(0), varied(1), varied(2), varied(3)]);
        let b = stack_of([varied(2), varied(0), varied(3), varied(1)]);
        for m in [FusionMethod::Average, FusionMethod::Maximum] {
            assert_eq!(fuse_fixed(&m, &a).unwrap(), fuse_fixed(&m, &b).unwrap());
        }
    }

    #[test]
    fn lms_output_is_clamped_and_names_round_trip() {
        let s = stack_of([varied(0), varied(1), varied(2), varied(3)]);
        let f = fuse_fixed(&FusionMethod::LmsWeighted([-1.0, 0.5, 0.0, 0.0]), &s).unwrap();
        assert!(f.is_normalized());
        assert!(fuse_fixed(&FusionMethod::LmsWeighted([f64::NAN, 0.0, 0.0, 0.0]), &s).is_err());
        for name in METHOD_NAMES {
            if let Some(m) = FusionMethod::<f64>::from_name(name) {
                assert_eq!(m.name(), name);
            }
        }
    }
}
