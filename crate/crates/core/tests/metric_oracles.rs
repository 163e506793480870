//! Metrics checked against independent brute-force implementations.

use lbvs_core::metrics::{auc_judd, auc_shuffled, emd, emd_on_grid, kld, nss, pcc, sim, KLD_EPSILON};
use lbvs_core::Field2D;
use minilp::{ComparisonOp, OptimizationDirection, Problem};
use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_field(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Field2D<f64> {
    Field2D::from_fn(w, h, |_, _| rng.random_range(0.0..1.0))
}

/// Values on a coarse ladder so ties actually occur.
fn quantized_field(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Field2D<f64> {
    Field2D::from_fn(w, h, |_, _| rng.random_range(0..5) as f64 / 4.0)
}

fn random_points(rng: &mut ChaCha8Rng, w: usize, h: usize, n: usize) -> Vec<(usize, usize)> {
    (0..n).map(|_| (rng.random_range(0..w), rng.random_range(0..h))).collect()
}

/// ROC by sweeping every distinct threshold from the top, integrated with
/// the trapezoid rule.
fn roc_sweep_auc(positives: &[f64], negatives: &[f64]) -> f64 {
    let mut thresholds: Vec<f64> = positives.iter().chain(negatives).copied().collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let (np, nn) = (positives.len() as f64, negatives.len() as f64);
    let mut area = 0.0;
    let (mut prev_tpr, mut prev_fpr) = (0.0, 0.0);
    for t in thresholds {
        let tpr = positives.iter().filter(|&&v| v >= t).count() as f64 / np;
        let fpr = negatives.iter().filter(|&&v| v >= t).count() as f64 / nn;
        area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        prev_tpr = tpr;
        prev_fpr = fpr;
    }
    area + (1.0 - prev_fpr) * (1.0 + prev_tpr) / 2.0
}

fn judd_oracle(sal: &Field2D<f64>, points: &[(usize, usize)]) -> f64 {
    let positives: Vec<f64> = points.iter().map(|&(x, y)| sal.get(x, y)).collect();
    let mut negatives = Vec::new();
    for y in 0..sal.height() {
        for x in 0..sal.width() {
            if !points.contains(&(x, y)) {
                negatives.push(sal.get(x, y));
            }
        }
    }
    roc_sweep_auc(&positives, &negatives)
}

fn nss_oracle(sal: &Field2D<f64>, points: &[(usize, usize)]) -> f64 {
    let v = sal.values();
    let n = v.len() as f64;
    let sum: f64 = v.iter().sum();
    let sum_sq: f64 = v.iter().map(|x| x * x).sum();
    let mean = sum / n;
    let std = (sum_sq / n - mean * mean).sqrt();
    points.iter().map(|&(x, y)| (sal.get(x, y) - mean) / std).sum::<f64>() / points.len() as f64
}

fn pcc_oracle(a: &Field2D<f64>, b: &Field2D<f64>) -> f64 {
    let n = a.len() as f64;
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (x, y) in a.values().iter().zip(b.values()) {
        sa += x;
        sb += y;
        saa += x * x;
        sbb += y * y;
        sab += x * y;
    }
    (n * sab - sa * sb) / ((n * saa - sa * sa).sqrt() * (n * sbb - sb * sb).sqrt())
}

fn kld_oracle(sal: &Field2D<f64>, fdm: &Field2D<f64>) -> f64 {
    let ep = KLD_EPSILON * fdm.mean();
    let eq = KLD_EPSILON * sal.mean();
    let sp: f64 = fdm.values().iter().map(|v| v + ep).sum();
    let sq: f64 = sal.values().iter().map(|v| v + eq).sum();
    let mut d = 0.0;
    for i in 0..fdm.len() {
        let p = (fdm.values()[i] + ep) / sp;
        let q = (sal.values()[i] + eq) / sq;
        d += p * p.ln() - p * q.ln();
    }
    d
}

fn sim_oracle(a: &Field2D<f64>, b: &Field2D<f64>) -> f64 {
    let sa = a.sum();
    let sb = b.sum();
    let mut s = 0.0;
    for i in 0..a.len() {
        s += f64::min(a.values()[i] / sa, b.values()[i] / sb);
    }
    s
}

/// Transportation LP over every (source, sink) pair with Euclidean cost.
fn emd_lp(a: &[f64], b: &[f64], width: usize) -> f64 {
    let ta: f64 = a.iter().sum();
    let tb: f64 = b.iter().sum();
    let n = a.len();
    let pos = |i: usize| ((i % width) as f64, (i / width) as f64);
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let mut flow = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let (xi, yi) = pos(i);
            let (xj, yj) = pos(j);
            flow.push(lp.add_var(((xi - xj).powi(2) + (yi - yj).powi(2)).sqrt(), (0.0, f64::INFINITY)));
        }
    }
    for i in 0..n {
        let row: Vec<_> = (0..n).map(|j| (flow[i * n + j], 1.0)).collect();
        lp.add_constraint(&row[..], ComparisonOp::Eq, a[i] / ta);
    }
    // the last sink constraint is implied by the others
    for j in 0..n - 1 {
        let col: Vec<_> = (0..n).map(|i| (flow[i * n + j], 1.0)).collect();
        lp.add_constraint(&col[..], ComparisonOp::Eq, b[j] / tb);
    }
    lp.solve().expect("feasible transport").objective()
}

/// 2×2 block means of an 8×8 field.
fn block_average(f: &Field2D<f64>, factor: usize) -> Vec<f64> {
    let (w, h) = (f.width() / factor, f.height() / factor);
    let mut out = vec![0.0; w * h];
    for y in 0..f.height() {
        for x in 0..f.width() {
            out[(y / factor) * w + x / factor] += f.get(x, y) / (factor * factor) as f64;
        }
    }
    out
}

#[test]
fn all_metrics_match_oracles_on_random_8x8() {
    let mut rng = ChaCha8Rng::seed_from_u64(81);
    for trial in 0..40 {
        let sal = if trial % 2 == 0 {
            random_field(&mut rng, 8, 8)
        } else {
            quantized_field(&mut rng, 8, 8)
        };
        let fdm = random_field(&mut rng, 8, 8);
        let points = random_points(&mut rng, 8, 8, 1 + trial % 7);
        let pool = random_points(&mut rng, 8, 8, 12);

        let judd = auc_judd(&sal, &points).unwrap();
        assert!((judd - judd_oracle(&sal, &points)).abs() < 1e-6, "AUC trial {trial}");

        let pos: Vec<f64> = points.iter().map(|&(x, y)| sal.get(x, y)).collect();
        let neg: Vec<f64> = pool.iter().map(|&(x, y)| sal.get(x, y)).collect();
        let shuffled = auc_shuffled(&sal, &points, &pool).unwrap();
        assert!((shuffled - roc_sweep_auc(&pos, &neg)).abs() < 1e-6, "sAUC trial {trial}");

        assert!((nss(&sal, &points).unwrap() - nss_oracle(&sal, &points)).abs() < 1e-6);
        assert!((pcc(&sal, &fdm).unwrap() - pcc_oracle(&sal, &fdm)).abs() < 1e-6);
        assert!((kld(&sal, &fdm).unwrap() - kld_oracle(&sal, &fdm)).abs() < 1e-6);
        assert!((sim(&sal, &fdm).unwrap() - sim_oracle(&sal, &fdm)).abs() < 1e-6);

        let fast = emd(&sal, &fdm, (4, 4)).unwrap();
        let lp = emd_lp(&block_average(&sal, 2), &block_average(&fdm, 2), 4);
        assert!((fast - lp).abs() < 1e-6, "EMD trial {trial}: {fast} vs {lp}");
    }
}

#[test]
fn emd_matches_lp_on_random_3x3() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for _ in 0..100 {
        let a: Vec<f64> = (0..9).map(|_| rng.random_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..9).map(|_| rng.random_range(0.0..1.0)).collect();
        let sa: f64 = a.iter().sum();
        let sb: f64 = b.iter().sum();
        let an: Vec<f64> = a.iter().map(|v| v / sa).collect();
        let bn: Vec<f64> = b.iter().map(|v| v / sb).collect();
        let fast = emd_on_grid(&an, &bn, 3).unwrap();
        assert!((fast - emd_lp(&a, &b, 3)).abs() < 1e-6);
    }
}

#[test]
fn emd_matches_lp_with_sparse_supports() {
    // many empty cells exercise degenerate pivots
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..30 {
        let mut a = vec![0.0; 16];
        let mut b = vec![0.0; 16];
        for _ in 0..3 {
            a[rng.random_range(0..16)] += 1.0;
            b[rng.random_range(0..16)] += 1.0;
        }
        let an: Vec<f64> = a.iter().map(|v| v / 3.0).collect();
        let bn: Vec<f64> = b.iter().map(|v| v / 3.0).collect();
        assert!((emd_on_grid(&an, &bn, 4).unwrap() - emd_lp(&a, &b, 4)).abs() < 1e-9);
    }
}

#[test]
fn emd_triangle_inequality_on_random_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..100 {
        let [p, q, r] = [(); 3].map(|_| random_field(&mut rng, 3, 3));
        let pq = emd(&p, &q, (3, 3)).unwrap();
        let qr = emd(&q, &r, (3, 3)).unwrap();
        let pr = emd(&p, &r, (3, 3)).unwrap();
        assert!(pr <= pq + qr + 1e-12, "{pr} > {pq} + {qr}");
    }
}

#[test]
fn kld_is_asymmetric() {
    let a = Field2D::new(2, 1, vec![0.5, 0.5]).unwrap();
    let b = Field2D::new(2, 1, vec![0.9, 0.1]).unwrap();
    let ab = kld(&a, &b).unwrap();
    let ba = kld(&b, &a).unwrap();
    assert!((ab - ba).abs() > 1e-3, "{ab} vs {ba}");
}

#[test]
fn kld_example_values() {
    let q = Field2D::new(2, 1, vec![0.75, 0.25]).unwrap();
    let p = Field2D::new(2, 1, vec![0.5, 0.5]).unwrap();
    let expected = 0.5 * (2.0f64 / 3.0).ln() + 0.5 * 2.0f64.ln();
    assert!((kld(&q, &p).unwrap() - expected).abs() < 1e-9);
    let hole = Field2D::new(2, 1, vec![0.0, 1.0]).unwrap();
    let d = kld(&hole, &p).unwrap();
    assert!(d.is_finite() && d > 10.0);
}

#[test]
fn nss_of_uniform_random_fixations_tends_to_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let sal = random_field(&mut rng, 32, 32);
    let points = random_points(&mut rng, 32, 32, 10_000);
    assert!(nss(&sal, &points).unwrap().abs() < 0.1);
}

fn field_strategy(w: usize, h: usize) -> impl Strategy<Value = Field2D<f64>> {
    prop::collection::vec(0.05f64..1.0, w * h).prop_map(move |v| Field2D::new(w, h, v).unwrap())
}

fn points_strategy(w: usize, h: usize) -> impl Strategy<Value = Vec<(usize, usize)>> {
    prop::collection::vec((0..w, 0..h), 1..6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distribution_metrics_ignore_positive_scale(
        a in field_strategy(6, 6),
        b in field_strategy(6, 6),
        scale in 0.5f64..4.0,
    ) {
        let a2 = a.map(|v| v * scale);
        let b2 = b.map(|v| v * scale);
        prop_assert!((kld(&a, &b).unwrap() - kld(&a2, &b).unwrap()).abs() < 1e-12);
        prop_assert!((kld(&a, &b).unwrap() - kld(&a, &b2).unwrap()).abs() < 1e-12);
        prop_assert!((sim(&a, &b).unwrap() - sim(&a2, &b).unwrap()).abs() < 1e-12);
        prop_assert!((sim(&a, &b).unwrap() - sim(&a, &b2).unwrap()).abs() < 1e-12);
        prop_assert!((emd(&a, &b, (6, 6)).unwrap() - emd(&a2, &b, (6, 6)).unwrap()).abs() < 1e-12);
        prop_assert!((emd(&a, &b, (6, 6)).unwrap() - emd(&a, &b2, (6, 6)).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn sim_and_emd_are_symmetric(a in field_strategy(5, 5), b in field_strategy(5, 5)) {
        prop_assert!((sim(&a, &b).unwrap() - sim(&b, &a).unwrap()).abs() < 1e-15);
        prop_assert!((emd(&a, &b, (5, 5)).unwrap() - emd(&b, &a, (5, 5)).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn auc_ignores_monotone_transforms(sal in field_strategy(6, 6), points in points_strategy(6, 6)) {
        let base = auc_judd(&sal, &points).unwrap();
        let cubed = sal.map(|v| v * v * v + 2.0);
        let logged = sal.map(|v| v.ln());
        prop_assert_eq!(base, auc_judd(&cubed, &points).unwrap());
        prop_assert_eq!(base, auc_judd(&logged, &points).unwrap());
    }

    #[test]
    fn scores_stay_in_range(sal in field_strategy(6, 6), fdm in field_strategy(6, 6), points in points_strategy(6, 6)) {
        let auc = auc_judd(&sal, &points).unwrap();
        prop_assert!((0.0..=1.0).contains(&auc));
        let s = sim(&sal, &fdm).unwrap();
        prop_assert!((0.0..=1.0).contains(&s));
        let r = pcc(&sal, &fdm).unwrap();
        prop_assert!((-1.0..=1.0).contains(&r));
        prop_assert!(kld(&sal, &fdm).unwrap() >= 0.0);
        prop_assert!(emd(&sal, &fdm, (6, 6)).unwrap() >= 0.0);
        prop_assert!(nss(&sal, &points).unwrap().is_finite());
    }
}
