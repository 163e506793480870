use crate::error::{Error, Result};
use crate::field::Field2D;
use crate::scalar::Real;

/// Number of levels in the full multiscale decomposition.
pub const FULL_LEVELS: usize = 9;
/// Center levels of the standard center-surround set.
pub const CENTER_LEVELS: [usize; 3] = [2, 3, 4];
/// Surround offsets of the standard center-surround set.
pub const SURROUND_DELTAS: [usize; 2] = [3, 4];

/// Dyadic Gaussian pyramid; level 0 is the input.
#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid<T> {
    levels: Vec<Field2D<T>>,
}

impl<T: Real> Pyramid<T> {
    pub fn levels(&self) -> &[Field2D<T>] {
        &self.levels
    }

    pub fn level(&self, k: usize) -> &Field2D<T> {
        &self.levels[k]
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Applies `f` to every level.
    pub fn map_levels(&self, f: impl Fn(&Field2D<T>) -> Field2D<T>) -> Self {
        Self {
            levels: self.levels.iter().map(f).collect(),
        }
    }

    /// Applies `f` to levels `first..`; finer levels are copied unchanged.
    pub fn map_levels_from(&self, first: usize, f: impl Fn(&Field2D<T>) -> Field2D<T>) -> Self {
        Self {
            levels: self
                .levels
                .iter()
                .enumerate()
                .map(|(k, l)| if k < first { l.clone() } else { f(l) })
                .collect(),
        }
    }
}

/// Largest level count with `min(w, h) / 2^(levels-1) >= 1`.
pub fn max_levels(width: usize, height: usize) -> usize {
    let m = width.min(height).max(1);
    (usize::BITS - m.leading_zeros()) as usize
}

/// Level count actually used for a frame: the full depth when it fits,
/// otherwise the deepest feasible pyramid.
pub fn effective_levels(width: usize, height: usize) -> usize {
    FULL_LEVELS.min(max_levels(width, height))
}

/// Center-surround `(center, delta)` pairs usable with `levels` levels.
///
/// The standard set is `c ∈ {2,3,4}`, `δ ∈ {3,4}`. When a shallow pyramid
/// admits none of them, finer pairs `c ∈ {0,1,2}`, `δ ∈ {1,2}` are used.
pub fn scale_pairs(levels: usize) -> Vec<(usize, usize)> {
    let standard: Vec<_> = CENTER_LEVELS
        .iter()
        .flat_map(|&c| SURROUND_DELTAS.iter().map(move |&d| (c, d)))
        .filter(|&(c, d)| c + d < levels)
        .collect();
    if !standard.is_empty() {
        return standard;
    }
    (0..3)
        .flat_map(|c| [1, 2].into_iter().map(move |d| (c, d)))
        .filter(|&(c, d)| c + d < levels)
        .collect()
}

/// Builds `num_levels` levels by separable `[1,4,6,4,1]/16` smoothing with
/// edge replication followed by keeping even-indexed samples; each level
/// has `ceil(n/2)` samples per axis.
pub fn gaussian_pyramid<T: Real>(f: &Field2D<T>, num_levels: usize) -> Result<Pyramid<T>> {
    if num_levels == 0 {
        return Err(Error::param("pyramid needs at least one level"));
    }
    let feasible = max_levels(f.width(), f.height());
    if num_levels > feasible {
        return Err(Error::param(format!(
            "{num_levels} pyramid levels requested but a {}x{} field supports at most {feasible}",
            f.width(),
            f.height()
        )));
    }
    let mut levels = Vec::with_capacity(num_levels);
    levels.push(f.clone());
    for _ in 1..num_levels {
        let prev = levels.last().expect("non-empty");
        levels.push(decimate(&smooth_binomial(prev)));
    }
    Ok(Pyramid { levels })
}

/// Separable 5-tap binomial blur with replicated borders.
pub fn smooth_binomial<T: Real>(f: &Field2D<T>) -> Field2D<T> {
    let horizontal = Field2D::from_fn(f.width(), f.height(), |x, y| {
        let x = x as isize;
        let y = y as isize;
        binomial5([
            f.get_clamped(x - 2, y),
            f.get_clamped(x - 1, y),
            f.get_clamped(x, y),
            f.get_clamped(x + 1, y),
            f.get_clamped(x + 2, y),
        ])
    });
    Field2D::from_fn(f.width(), f.height(), |x, y| {
        let x = x as isize;
        let y = y as isize;
        binomial5([
            horizontal.get_clamped(x, y - 2),
            horizontal.get_clamped(x, y - 1),
            horizontal.get_clamped(x, y),
            horizontal.get_clamped(x, y + 1),
            horizontal.get_clamped(x, y + 2),
        ])
    })
}

// Evaluated relative to the center tap so constant input is reproduced
// bit-for-bit.
#[inline]
fn binomial5<T: Real>(v: [T; 5]) -> T {
    let c = v[2];
    let four = T::of(4.0);
    let sixteen = T::of(16.0);
    c + ((v[0] - c) + four * (v[1] - c) + four * (v[3] - c) + (v[4] - c)) / sixteen
}

fn decimate<T: Real>(f: &Field2D<T>) -> Field2D<T> {
    let w = f.width().div_ceil(2);
    let h = f.height().div_ceil(2);
    Field2D::from_fn(w, h, |x, y| f.get(2 * x, 2 * y))
}

/// `|level_c − upsample(level_{c+δ})|` at level-c resolution.
pub fn center_surround<T: Real>(p: &Pyramid<T>, center: usize, delta: usize) -> Result<Field2D<T>> {
    if delta == 0 || center + delta >= p.len() {
        return Err(Error::param(format!(
            "center {center} + delta {delta} outside a {}-level pyramid",
            p.len()
        )));
    }
    let c = p.level(center);
    let s = p.level(center + delta).resize_bilinear(c.width(), c.height());
    c.zip_with(&s, |a, b| (a - b).abs())
}

/// Resizes every map to `out` (bilinear), sums, and normalizes to `[0, 1]`.
pub fn across_scale_combine<T: Real>(maps: &[Field2D<T>], out: (usize, usize)) -> Result<Field2D<T>> {
    let (w, h) = out;
    if maps.is_empty() {
        return Err(Error::Empty("across-scale combination needs at least one map"));
    }
    let mut acc = Field2D::zeros(w, h);
    for m in maps {
        let r = m.resize_bilinear(w, h);
        for (a, v) in acc.values_mut().iter_mut().zip(r.values()) {
            *a += *v;
        }
    }
    Ok(acc.normalize01())
}
