mod common;

use common::*;
use mgtpc::entropy::*;
use mgtpc::tensor::softplus;
use mgtpc::{Image, Tensor};
use proptest::prelude::*;
use rand::Rng;

/// Φ(b) − Φ(a) by composite Simpson integration of the normal density.
fn normal_mass(a: f64, b: f64) -> f64 {
    let n = 20_000;
    let h = (b - a) / n as f64;
    let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = pdf(a) + pdf(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * pdf(a + i as f64 * h);
    }
    s * h / 3.0
}

fn oracle(q: i32, sigma: f64) -> f64 {
    let lo = (q as f64 - 0.5) / sigma;
    let hi = (q as f64 + 0.5) / sigma;
    // keep the window finite for Simpson
    normal_mass(lo.max(-40.0), hi.min(40.0)).max(PROB_FLOOR)
}

#[test]
fn unit_sigma_centre_mass() {
    let p = gaussian_likelihood(0, 1.0);
    assert!((p - 0.382925).abs() < 1e-5);
    assert!((p - oracle(0, 1.0)).abs() < 1e-9);
}

#[test]
fn likelihood_matches_quadrature_oracle() {
    let mut r = rng(1);
    for _ in 0..200 {
        let q = r.gen_range(SYMBOL_MIN..=SYMBOL_MAX);
        let sigma = ScaleTable::standard().scale(r.gen_range(0..SCALE_LEVELS));
        let (got, want) = (gaussian_likelihood(q, sigma), oracle(q, sigma));
        assert!((got - want).abs() <= 1e-9 + 1e-9 * want, "q={q} σ={sigma}: {got} vs {want}");
    }
}

#[test]
fn table_mass_is_bounded() {
    for i in 0..SCALE_LEVELS {
        let s: f64 = (SYMBOL_MIN..=SYMBOL_MAX).map(|q| table_likelihood(q, i)).sum();
        assert!(s <= 1.0 + 1.0 / 256.0, "index {i}: {s}");
        let renorm: f64 = (SYMBOL_MIN..=SYMBOL_MAX).map(|q| symbol_likelihood(q, i)).sum();
        assert!((renorm - 1.0).abs() < 1e-12);
    }
}

#[test]
fn narrowest_scale_is_nearly_certain() {
    assert!(gaussian_likelihood(0, SIGMA_MIN) >= 0.99);
    assert!(table_likelihood(0, 0) >= 0.99);
}

#[test]
fn symmetry_and_monotonicity() {
    for i in 0..SCALE_LEVELS {
        for q in 1..=63 {
            assert_eq!(table_likelihood(q, i), table_likelihood(-q, i));
            assert!(table_likelihood(q, i) <= table_likelihood(q - 1, i));
        }
    }
}

#[test]
fn scale_table_is_geometric() {
    let t = ScaleTable::standard();
    let s = t.scales();
    assert_eq!(s[0], SIGMA_MIN);
    assert!((s[SCALE_LEVELS - 1] - SIGMA_MAX).abs() < 1e-9);
    let ratio = s[1] / s[0];
    for w in s.windows(2) {
        assert!(w[1] > w[0]);
        assert!((w[1] / w[0] - ratio).abs() < 1e-12);
    }
    for (i, &v) in s.iter().enumerate() {
        assert_eq!(t.index(v), i);
    }
    assert_eq!(t.index(0.0), 0);
    assert_eq!(t.index(1e9), SCALE_LEVELS - 1);
    // exact log-midpoint resolves downwards
    let mid = (s[10] * s[11]).sqrt();
    assert_eq!(t.index(mid), 10);
}

#[test]
fn gaussian_params_clamp_softplus() {
    let raw = Tensor::new([1, 1, 1, 4], vec![-50.0f64, 0.0, 3.0, 1000.0]).unwrap();
    let g = GaussianParams::new(Tensor::zeros([1, 1, 1, 4]), &raw).unwrap();
    let s = g.sigma.data();
    assert_eq!(s[0], SIGMA_MIN);
    assert_eq!(s[1], softplus(0.0));
    assert_eq!(s[2], softplus(3.0));
    assert_eq!(s[3], SIGMA_MAX);
    assert!(GaussianParams::new(Tensor::zeros([1, 1, 1, 3]), &raw).is_err());
}

#[test]
fn quantization_rules() {
    assert_eq!(quantize_residual(0.0), 0);
    assert_eq!(quantize_residual(0.5), 1);
    assert_eq!(quantize_residual(-1.5), -2);
    assert_eq!(quantize_residual(300.0), SYMBOL_MAX);
    assert_eq!(quantize_residual(-300.0), SYMBOL_MIN);
    let y = Tensor::new([1, 1, 1, 3], vec![2.0f32, 2.5, 400.0]).unwrap();
    let mu = Tensor::new([1, 1, 1, 3], vec![2.0f32, 1.0, 0.25]).unwrap();
    let (q, y_hat) = quantize_st(&y, &mu).unwrap();
    assert_eq!(q, vec![0, 2, 63]);
    assert_eq!(y_hat.data(), &[2.0, 3.0, 63.25]);
    assert!(dequantize(&q, &mu).unwrap().bit_eq(&y_hat));
}

#[test]
fn factorized_mirrors_the_gaussian() {
    let sigmas = [1.0f32, SIGMA_MIN as f32, 7.0];
    for c in 0..3 {
        let idx = factorized_index(c, &sigmas);
        let scale = ScaleTable::standard().scale(idx);
        for q in -5..=5 {
            assert_eq!(factorized_likelihood(q, c, &sigmas), gaussian_likelihood(q, scale));
        }
    }
    let centre = factorized_likelihood(0, 0, &sigmas);
    assert!((centre - oracle(0, ScaleTable::standard().scale(factorized_index(0, &sigmas)))).abs() < 1e-9);
    assert!(factorized_likelihood(0, 1, &sigmas) >= 0.99);
}

#[test]
fn rate_examples() {
    assert_eq!(rate_estimate(&[0.5; 4096], 4096), 1.0);
    assert_eq!(rate_estimate(&[1.0; 100], 100), 0.0);
    assert_eq!(rate_estimate(&[PROB_FLOOR; 10], 10), 16.0);
}

#[test]
fn rd_loss_examples() {
    assert!((rd_loss_from_mse(1.0, 0.1, 0.0483, 50.0).unwrap() - 3.515).abs() < 1e-12);
    assert!(rd_loss_from_mse(1.0, 0.1, 0.0, 1.0).is_err());
    assert!(rd_loss_from_mse(1.0, 0.1, -1.0, 1.0).is_err());
    let x = test_image(16, 8, 2);
    assert_eq!(rd_loss(&x, &x, 0.7, 0.05, 0.0130).unwrap(), 0.75);
    let y = Image::from_fn(16, 8, |xx, yy, c| x.pixel(xx, yy, c).saturating_add(3)).unwrap();
    let l1 = rd_loss(&x, &y, 0.7, 0.05, 0.01).unwrap() - 0.75;
    let l2 = rd_loss(&x, &y, 0.7, 0.05, 0.02).unwrap() - 0.75;
    assert!((l2 - 2.0 * l1).abs() < 1e-12);
}

#[test]
fn lambda_set() {
    let want = [18.0, 25.0, 35.0, 67.0, 130.0, 250.0, 483.0];
    for (l, w) in LAMBDAS.iter().zip(want) {
        assert!((l * 1e4 - w).abs() < 1e-9);
    }
}

proptest! {
    #[test]
    fn rate_is_nonnegative(ps in prop::collection::vec(PROB_FLOOR..=1.0f64, 1..200)) {
        prop_assert!(rate_estimate(&ps, ps.len()) >= 0.0);
    }

    #[test]
    fn residual_round_trip(r in -63.5f64..62.5, mu in -10.0f64..10.0) {
        let y = r + mu;
        let q = quantize_residual(y - mu);
        prop_assert!(((q as f64 + mu) - y).abs() <= 0.5 + 1e-9);
    }
}
