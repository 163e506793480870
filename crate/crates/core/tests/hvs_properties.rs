//! Perceptual front-end properties: JND coding, CSF filtering, opponents.

use lbvs_core::hvs::{
    cam_opponents, csf_filter, csf_peak_frequency, jnd_luma, luminance_of, CsfModel, JndEncoding, ViewingGeometry,
};
use lbvs_core::io::HdrFrame;
use lbvs_core::Field2D;
use proptest::prelude::*;

/// Geometry whose pixels-per-degree puts `cycles` periods across `n`
/// pixels exactly at frequency `target` (cycles/degree).
fn geometry_for(target: f64, n: usize, cycles: usize) -> ViewingGeometry {
    let resolution = 1000.0;
    let ppd = target * n as f64 / cycles as f64;
    let fov = resolution / ppd;
    let width = 2.0 * (fov.to_radians() / 2.0).tan();
    ViewingGeometry::new(width, 1.0, resolution).unwrap()
}

fn sinusoid(n: usize, cycles: usize, mean: f64, amp: f64) -> Field2D<f64> {
    Field2D::from_fn(n, 16, |x, _| {
        mean + amp * (std::f64::consts::TAU * (cycles * x) as f64 / n as f64).sin()
    })
}

/// Amplitude of the `cycles` sine component, by projection.
fn sine_amplitude(f: &Field2D<f64>, cycles: usize) -> f64 {
    let n = f.width();
    let mut acc = 0.0;
    for y in 0..f.height() {
        for x in 0..n {
            acc += f.get(x, y) * (std::f64::consts::TAU * (cycles * x) as f64 / n as f64).sin();
        }
    }
    2.0 * acc / f.len() as f64
}

#[test]
fn jnd_codings_are_strictly_monotone() {
    for enc in [JndEncoding::MantiukPiecewise, JndEncoding::Log10] {
        let values: Vec<f64> = (0..1000)
            .map(|i| enc.encode(10f64.powf(-3.0 + 8.0 * i as f64 / 999.0)))
            .collect();
        for (i, w) in values.windows(2).enumerate() {
            assert!(w[1] > w[0], "{} not increasing at step {i}", enc.name());
        }
    }
}

#[test]
fn jnd_piece_values() {
    let enc = JndEncoding::MantiukPiecewise;
    assert!((enc.encode(5.6046) - 17.554 * 5.6046).abs() < 1e-9);
    assert!(enc.encode(10.0) < enc.encode(100.0));
    let lum = Field2D::new(2, 1, vec![1e-9, 1e-4]).unwrap();
    let luma = jnd_luma(&lum, enc);
    assert_eq!(luma.get(0, 0), luma.get(1, 0));
}

#[test]
fn luminance_weights_and_scale() {
    let white = HdrFrame::new(1, 1, vec![1.0f64, 1.0, 1.0], 100.0, 0).unwrap();
    assert!((luminance_of(&white).get(0, 0) - 100.0).abs() < 1e-12);
    let red = HdrFrame::new(1, 1, vec![1.0f64, 0.0, 0.0], 1.0, 0).unwrap();
    assert!((luminance_of(&red).get(0, 0) - 0.2126).abs() < 1e-15);
}

#[test]
fn csf_passes_peak_frequency_and_attenuates_low_frequency() {
    let peak = csf_peak_frequency();
    let n = 128;
    let geom = geometry_for(peak, n, 8);
    let input = sinusoid(n, 8, 100.0, 10.0);
    let out = csf_filter(&input, &geom, CsfModel::DalyBandpass).unwrap();
    let ratio = sine_amplitude(&out, 8) / sine_amplitude(&input, 8);
    assert!((ratio - 1.0).abs() < 1e-3, "peak ratio {ratio}");

    // same geometry, a quarter of the frequency
    let low = sinusoid(n, 2, 100.0, 10.0);
    let out = csf_filter(&low, &geom, CsfModel::DalyBandpass).unwrap();
    let ratio = sine_amplitude(&out, 2) / sine_amplitude(&low, 2);
    assert!(ratio < 1.0, "low-frequency ratio {ratio}");
    assert!((out.mean() - 100.0).abs() < 1e-9);
}

#[test]
fn csf_none_is_identity() {
    let geom = ViewingGeometry::new(0.5, 1.0, 256.0).unwrap();
    let f = sinusoid(32, 3, 4.0, 1.0);
    assert_eq!(csf_filter(&f, &geom, CsfModel::None).unwrap(), f);
}

#[test]
fn pure_primaries_have_expected_opponent_signs() {
    let red = HdrFrame::from_fn(4, 4, 100.0f64, 0, |_, _| [1.0, 0.0, 0.0]).unwrap();
    assert!(cam_opponents(&red, None).unwrap().rg.values().iter().all(|&v| v > 0.0));
    let blue = HdrFrame::from_fn(4, 4, 100.0f64, 0, |_, _| [0.0, 0.0, 1.0]).unwrap();
    assert!(cam_opponents(&blue, None).unwrap().by.values().iter().all(|&v| v > 0.0));
}

fn field(w: usize, h: usize) -> impl Strategy<Value = Field2D<f64>> {
    prop::collection::vec(0.0f64..500.0, w * h).prop_map(move |v| Field2D::new(w, h, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn csf_preserves_mean_and_is_linear(a in field(24, 18), b in field(24, 18), dist in 0.5f64..4.0) {
        let geom = ViewingGeometry::new(0.6, dist, 480.0).unwrap();
        let fa = csf_filter(&a, &geom, CsfModel::DalyBandpass).unwrap();
        prop_assert!(((fa.mean() - a.mean()) / a.mean()).abs() < 1e-6);
        let sum = a.zip_with(&b, |x, y| x + y).unwrap();
        let fb = csf_filter(&b, &geom, CsfModel::DalyBandpass).unwrap();
        let fsum = csf_filter(&sum, &geom, CsfModel::DalyBandpass).unwrap();
        for i in 0..sum.len() {
            prop_assert!((fsum.values()[i] - fa.values()[i] - fb.values()[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn gray_frames_have_no_colour_opponency(levels in prop::collection::vec(0.0f64..50.0, 36), scale in 0.1f64..1000.0) {
        let frame = HdrFrame::from_fn(6, 6, scale, 0, |x, y| {
            let v = levels[y * 6 + x];
            [v, v, v]
        })
        .unwrap();
        let opp = cam_opponents(&frame, None).unwrap();
        prop_assert!(opp.rg.values().iter().all(|&v| v.abs() < 1e-12));
        prop_assert!(opp.by.values().iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn opponents_are_bounded_and_deterministic(rgb in prop::collection::vec(0.0f64..1e4, 48), scale in 0.01f64..10.0) {
        let frame = HdrFrame::new(4, 4, rgb, scale, 0).unwrap();
        let one = cam_opponents(&frame, None).unwrap();
        let two = cam_opponents(&frame, None).unwrap();
        prop_assert_eq!(&one, &two);
        prop_assert!(one.rg.values().iter().chain(one.by.values()).all(|v| (-1.0..=1.0).contains(v)));
    }
}
