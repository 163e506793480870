//! Perceptual front end: absolute luminance, JND luma encoding, contrast
//! sensitivity filtering and opponent colour signals.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::field::Field2D;
use crate::io::HdrFrame;
use crate::scalar::Real;

/// BT.709 luminance weights.
pub const BT709_LUMA: [f64; 3] = [0.2126, 0.7152, 0.0722];

/// Luminances below this floor are clamped before JND encoding (cd/m²).
pub const MIN_LUMINANCE: f64 = 1e-4;

/// Display and observer geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewingGeometry {
    pub screen_width_m: f64,
    pub viewing_distance_m: f64,
    pub horizontal_resolution: f64,
}

impl ViewingGeometry {
    pub fn new(screen_width_m: f64, viewing_distance_m: f64, horizontal_resolution: f64) -> Result<Self> {
        let g = Self {
            screen_width_m,
            viewing_distance_m,
            horizontal_resolution,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(self.screen_width_m) && ok(self.viewing_distance_m) && ok(self.horizontal_resolution)) {
            return Err(Error::param(format!("degenerate viewing geometry {self:?}")));
        }
        Ok(())
    }

    /// Horizontal visual angle subtended by the screen, in degrees.
    pub fn field_of_view_deg(&self) -> f64 {
        (2.0 * (self.screen_width_m / (2.0 * self.viewing_distance_m)).atan()).to_degrees()
    }

    /// Pixels per degree of visual angle.
    pub fn pixels_per_degree(&self) -> Result<f64> {
        self.validate()?;
        let ppd = self.horizontal_resolution / self.field_of_view_deg();
        if !(ppd > 0.0) || !ppd.is_finite() {
            return Err(Error::param(format!("degenerate pixels-per-degree {ppd}")));
        }
        Ok(ppd)
    }
}

/// Absolute luminance in cd/m².
pub fn luminance_of<T: Real>(frame: &HdrFrame<T>) -> Field2D<T> {
    let [wr, wg, wb] = BT709_LUMA.map(T::of);
    let scale = frame.luminance_scale();
    let values = frame
        .rgb()
        .chunks_exact(3)
        .map(|p| (scale * (wr * p[0] + wg * p[1] + wb * p[2])).max(T::zero()))
        .collect();
    Field2D::new(frame.width(), frame.height(), values).expect("frame invariants")
}

/// Luminance-to-luma encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JndEncoding {
    /// Three-piece linear / power / logarithmic JND coding.
    #[default]
    MantiukPiecewise,
    /// `100 · log10(L / 1e-4)`.
    Log10,
}

impl JndEncoding {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "mantiuk-piecewise" => Ok(Self::MantiukPiecewise),
            "log10" => Ok(Self::Log10),
            other => Err(Error::param(format!("unknown jnd encoding {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::MantiukPiecewise => "mantiuk-piecewise",
            Self::Log10 => "log10",
        }
    }

    /// Encodes one luminance value (cd/m²).
    pub fn encode(&self, lum: f64) -> f64 {
        let l = lum.max(MIN_LUMINANCE);
        match self {
            Self::MantiukPiecewise => {
                let p = &PIECEWISE;
                if l <= p.y1 {
                    p.a * l
                } else if l <= p.y2 {
                    p.b * l.powf(p.c) + p.d
                } else {
                    p.e * l.ln() + p.f
                }
            }
            Self::Log10 => 100.0 * (l / MIN_LUMINANCE).log10(),
        }
    }
}

/// Constants of the three-piece luma coding.
#[derive(Debug, Clone, Copy)]
pub struct PiecewiseJnd {
    pub a: f64,
    pub y1: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub y2: f64,
    pub e: f64,
    pub f: f64,
}

pub const PIECEWISE: PiecewiseJnd = PiecewiseJnd {
    a: 17.554,
    y1: 5.6046,
    b: 826.81,
    c: 0.10013,
    d: -884.17,
    y2: 10469.0,
    e: 209.16,
    f: -731.28,
};

pub fn jnd_luma<T: Real>(lum: &Field2D<T>, encoding: JndEncoding) -> Field2D<T> {
    lum.map(|v| T::of(encoding.encode(v.to_f64_lossy())))
}

/// Spatial-frequency weighting applied to luma.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CsfModel {
    /// Radial band-pass `(0.0192 + 0.114 f) · exp(−(0.114 f)^1.1)`,
    /// peak-normalized, with unit DC gain.
    #[default]
    DalyBandpass,
    /// Identity filter.
    None,
}

impl CsfModel {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "daly-bandpass" => Ok(Self::DalyBandpass),
            "none" => Ok(Self::None),
            other => Err(Error::param(format!("unknown csf model {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::DalyBandpass => "daly-bandpass",
            Self::None => "none",
        }
    }

    /// Gain at radial frequency `f` (cycles/degree).
    pub fn gain(&self, f: f64) -> f64 {
        match self {
            Self::None => 1.0,
            Self::DalyBandpass => {
                if f == 0.0 {
                    return 1.0;
                }
                bandpass_raw(f) / bandpass_raw(csf_peak_frequency())
            }
        }
    }
}

fn bandpass_raw(f: f64) -> f64 {
    let u = 0.114 * f;
    (0.0192 + u) * (-u.powf(1.1)).exp()
}

/// Frequency (cycles/degree) at which the band-pass curve peaks.
pub fn csf_peak_frequency() -> f64 {
    // d/du [(0.0192 + u) e^{-u^1.1}] = 0  ⇔  1.1 u^0.1 (0.0192 + u) = 1
    let h = |u: f64| 1.1 * u.powf(0.1) * (0.0192 + u) - 1.0;
    let (mut lo, mut hi) = (1e-9, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi) / 0.114
}

/// Frequency-domain CSF filtering; the field mean is preserved.
pub fn csf_filter<T: Real>(luma: &Field2D<T>, geom: &ViewingGeometry, model: CsfModel) -> Result<Field2D<T>> {
    let ppd = geom.pixels_per_degree()?;
    if model == CsfModel::None {
        return Ok(luma.clone());
    }
    // DC passes with gain 1, so only the deviation from the mean is
    // filtered; round-off ripple then stays below the mean's precision
    if luma.min() == luma.max() {
        return Ok(luma.clone());
    }
    let (w, h) = luma.dims();
    let mean = luma.mean();
    let mut buf: Vec<Complex<T>> = luma
        .values()
        .iter()
        .map(|&v| Complex::new(v - mean, T::zero()))
        .collect();
    let mut planner = FftPlanner::<T>::new();
    fft2(&mut buf, w, h, &mut planner, false);

    let gx: Vec<f64> = (0..w).map(|k| signed_bin(k, w) / w as f64 * ppd).collect();
    let gy: Vec<f64> = (0..h).map(|k| signed_bin(k, h) / h as f64 * ppd).collect();
    for (ky, fy) in gy.iter().enumerate() {
        for (kx, fx) in gx.iter().enumerate() {
            let f = (fx * fx + fy * fy).sqrt();
            let g = T::of(model.gain(f));
            buf[ky * w + kx] *= g;
        }
    }
    fft2(&mut buf, w, h, &mut planner, true);
    let norm = T::of_usize(w * h);
    let values = buf.into_iter().map(|c| mean + c.re / norm).collect();
    Field2D::new(w, h, values)
}

fn signed_bin(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// Unnormalized in-place 2-D transform of a row-major buffer.
fn fft2<T: Real>(buf: &mut [Complex<T>], w: usize, h: usize, planner: &mut FftPlanner<T>, inverse: bool) {
    let row = if inverse {
        planner.plan_fft_inverse(w)
    } else {
        planner.plan_fft_forward(w)
    };
    for r in buf.chunks_exact_mut(w) {
        row.process(r);
    }
    let col = if inverse {
        planner.plan_fft_inverse(h)
    } else {
        planner.plan_fft_forward(h)
    };
    let mut scratch = vec![Complex::new(T::zero(), T::zero()); h];
    for x in 0..w {
        for y in 0..h {
            scratch[y] = buf[y * w + x];
        }
        col.process(&mut scratch);
        for y in 0..h {
            buf[y * w + x] = scratch[y];
        }
    }
}

/// Red–green and blue–yellow opponent signals, each in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OpponentPair<T> {
    pub rg: Field2D<T>,
    pub by: Field2D<T>,
}

/// Compression exponent of the cone response stage.
pub const CONE_EXPONENT: f64 = 0.57;

/// Linear BT.709 RGB to cone-like LMS: the XYZ→Hunt–Pointer–Estévez
/// transform composed with BT.709→XYZ, rows rescaled to unit sum so that
/// achromatic input yields equal cone excitations.
pub fn rgb_to_cone_matrix() -> [[f64; 3]; 3] {
    const RGB_TO_XYZ: [[f64; 3]; 3] = [
        [0.4124, 0.3576, 0.1805],
        [0.2126, 0.7152, 0.0722],
        [0.0193, 0.1192, 0.9505],
    ];
    const XYZ_TO_HPE: [[f64; 3]; 3] = [
        [0.38971, 0.68898, -0.07868],
        [-0.22981, 1.18340, 0.04641],
        [0.0, 0.0, 1.0],
    ];
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = (0..3).map(|k| XYZ_TO_HPE[i][k] * RGB_TO_XYZ[k][j]).sum();
        }
        let s: f64 = m[i].iter().sum();
        for v in &mut m[i] {
            *v /= s;
        }
    }
    m
}

/// Simplified colour appearance stage: cone excitations in cd/m² are
/// compressed by `xⁿ / (xⁿ + sⁿ)` with the semi-saturation `s` set to the
/// adaptation luminance, then combined into `rg = l′ − m′` and
/// `by = s′ − (l′ + m′) / 2`.
///
/// `adaptation_luminance` defaults to the frame's mean luminance.
pub fn cam_opponents<T: Real>(frame: &HdrFrame<T>, adaptation_luminance: Option<T>) -> Result<OpponentPair<T>> {
    let adapt = match adaptation_luminance {
        Some(a) => a,
        None => luminance_of(frame).mean().max(T::of(MIN_LUMINANCE)),
    };
    if !(adapt > T::zero()) || !adapt.is_finite() {
        return Err(Error::param("adaptation luminance must be positive"));
    }
    let m = rgb_to_cone_matrix().map(|r| r.map(T::of));
    let n = T::of(CONE_EXPONENT);
    let sn = adapt.powf(n);
    let scale = frame.luminance_scale();
    let compress = |x: T| {
        if x <= T::zero() {
            T::zero()
        } else {
            let xn = x.powf(n);
            xn / (xn + sn)
        }
    };
    let half = T::of(0.5);
    let (w, h) = frame.dims();
    let mut rg = Vec::with_capacity(w * h);
    let mut by = Vec::with_capacity(w * h);
    for p in frame.rgb().chunks_exact(3) {
        let cone = |row: &[T; 3]| compress(scale * (row[0] * p[0] + row[1] * p[1] + row[2] * p[2]));
        let (l, mm, s) = (cone(&m[0]), cone(&m[1]), cone(&m[2]));
        rg.push(l - mm);
        by.push(s - (l + mm) * half);
    }
    Ok(OpponentPair {
        rg: Field2D::new(w, h, rg)?,
        by: Field2D::new(w, h, by)?,
    })
}
