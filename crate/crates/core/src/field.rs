//! Dense scalar rasters.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A `width × height` scalar raster stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2D<T> {
    width: usize,
    height: usize,
    values: Vec<T>,
}

impl<T: Real> Field2D<T> {
    pub fn new(width: usize, height: usize, values: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::param(format!(
                "field dimensions must be positive, got {width}x{height}"
            )));
        }
        if values.len() != width * height {
            return Err(Error::LengthMismatch {
                what: "field values",
                left: values.len(),
                right: width * height,
            });
        }
        if let Some((index, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidSample {
                index,
                value: v.to_f64_lossy(),
            });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn constant(width: usize, height: usize, value: T) -> Self {
        assert!(width > 0 && height > 0, "field dimensions must be positive");
        Self {
            width,
            height,
            values: vec![value; width * height],
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::constant(width, height, T::zero())
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(width > 0 && height > 0, "field dimensions must be positive");
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            values,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.values[y * self.width + x] = v;
    }

    /// Reads with edge replication for out-of-range coordinates.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> T {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.values[y * self.width + x]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination of two equally sized fields.
    pub fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.ensure_same_dims(other)?;
        Ok(Self {
            width: self.width,
            height: self.height,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn ensure_same_dims(&self, other: &Self) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                left: self.dims(),
                right: other.dims(),
            });
        }
        Ok(())
    }

    pub fn min(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn sum(&self) -> T {
        self.values.iter().copied().sum()
    }

    pub fn mean(&self) -> T {
        self.sum() / T::of_usize(self.values.len())
    }

    /// Population standard deviation.
    pub fn std_dev(&self) -> T {
        let mean = self.mean();
        let var = self
            .values
            .iter()
            .map(|&v| (v - mean) * (v - mean))
            .sum::<T>()
            / T::of_usize(self.values.len());
        var.sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.is_zero())
    }

    /// True when every value lies in `[0, 1]` and the maximum is exactly 1
    /// (or the field is identically zero).
    pub fn is_normalized(&self) -> bool {
        let in_range = self
            .values
            .iter()
            .all(|&v| v >= T::zero() && v <= T::one());
        in_range && (self.is_zero() || self.max() == T::one())
    }

    /// Min-max rescaling to `[0, 1]`; a constant field maps to all zeros.
    pub fn normalize01(&self) -> Self {
        let lo = self.min();
        let hi = self.max();
        let range = hi - lo;
        if !(range > T::zero()) {
            return Self::zeros(self.width, self.height);
        }
        self.map(|v| {
            if v == hi {
                T::one()
            } else {
                ((v - lo) / range).min(T::one()).max(T::zero())
            }
        })
    }

    /// Bilinear resampling with corner alignment: output pixel `x` samples
    /// source coordinate `x · (src_w − 1) / (dst_w − 1)`.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "target dimensions must be positive");
        if (width, height) == self.dims() {
            return self.clone();
        }
        let sx = axis_scale(self.width, width);
        let sy = axis_scale(self.height, height);
        let mut out = Vec::with_capacity(width * height);
        for y in 0..height {
            let (y0, y1, fy) = bilinear_taps::<T>(y, sy, self.height);
            for x in 0..width {
                let (x0, x1, fx) = bilinear_taps::<T>(x, sx, self.width);
                // lerp as a + t(b − a) so constant regions stay bit-exact
                let (a, b) = (self.get(x0, y0), self.get(x1, y0));
                let top = a + fx * (b - a);
                let (c, d) = (self.get(x0, y1), self.get(x1, y1));
                let bottom = c + fx * (d - c);
                out.push(top + fy * (bottom - top));
            }
        }
        Self {
            width,
            height,
            values: out,
        }
    }

    /// Area-averaging resample: each output cell is the overlap-weighted mean
    /// of the source pixels it covers. Targets larger than the source are
    /// clamped to the source size.
    pub fn downsample_area(&self, width: usize, height: usize) -> Self {
        let width = width.clamp(1, self.width);
        let height = height.clamp(1, self.height);
        if (width, height) == self.dims() {
            return self.clone();
        }
        let wx = area_weights::<T>(self.width, width);
        let wy = area_weights::<T>(self.height, height);
        let mut out = vec![T::zero(); width * height];
        for (oy, ty) in wy.iter().enumerate() {
            for (ox, tx) in wx.iter().enumerate() {
                let mut acc = T::zero();
                let mut wsum = T::zero();
                for &(sy, wyv) in ty {
                    for &(sx, wxv) in tx {
                        let w = wyv * wxv;
                        acc += self.get(sx, sy) * w;
                        wsum += w;
                    }
                }
                out[oy * width + ox] = acc / wsum;
            }
        }
        Self {
            width,
            height,
            values: out,
        }
    }

    /// Rotates a quarter turn: output `(x, y)` takes input `(y, W − 1 − x)`.
    pub fn rotate90(&self) -> Self {
        let (w, h) = self.dims();
        Self::from_fn(h, w, |x, y| self.get(w - 1 - y, x))
    }
}

fn axis_scale(src: usize, dst: usize) -> f64 {
    if dst <= 1 || src <= 1 {
        0.0
    } else {
        (src - 1) as f64 / (dst - 1) as f64
    }
}

#[inline]
fn bilinear_taps<T: Real>(i: usize, scale: f64, src: usize) -> (usize, usize, T) {
    let pos = i as f64 * scale;
    let i0 = (pos.floor() as usize).min(src - 1);
    let i1 = (i0 + 1).min(src - 1);
    let frac = pos - i0 as f64;
    (i0, i1, T::of(frac))
}

fn area_weights<T: Real>(src: usize, dst: usize) -> Vec<Vec<(usize, T)>> {
    let step = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let a = o as f64 * step;
            let b = (o + 1) as f64 * step;
            let first = a.floor() as usize;
            let last = (b.ceil() as usize).min(src);
            (first..last)
                .filter_map(|s| {
                    let overlap = (b.min((s + 1) as f64) - a.max(s as f64)).max(0.0);
                    (overlap > 0.0).then(|| (s, T::of(overlap)))
                })
                .collect()
        })
        .collect()
}
