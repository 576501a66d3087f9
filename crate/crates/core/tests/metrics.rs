mod common;

use common::*;
use mgtpc::metrics::*;
use mgtpc::Image;
use proptest::prelude::*;

fn curve(psnrs: &[f64], log_rate: impl Fn(f64) -> f64) -> Vec<RdPoint> {
    psnrs.iter().map(|&p| RdPoint::new(log_rate(p).exp(), p).unwrap()).collect()
}

fn anchor_log_rate(p: f64) -> f64 {
    -3.0 + 0.12 * (p - 30.0) + 0.002 * (p - 30.0).powi(2)
}

/// Midpoint-rule mean of `g` over `[lo, hi]`.
fn dense_mean(g: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let n = 200_000;
    let h = (hi - lo) / n as f64;
    (0..n).map(|i| g(lo + (i as f64 + 0.5) * h)).sum::<f64>() / n as f64
}

#[test]
fn psnr_examples() {
    assert!((psnr_from_mse(1.0, 255.0) - 48.1308).abs() < 1e-3);
    assert_eq!(psnr_from_mse(255.0 * 255.0, 255.0), 0.0);
    assert_eq!(psnr_from_mse(0.0, 255.0), PSNR_CAP);
    let a = test_image(17, 9, 1);
    assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
    // every sample off by exactly one
    let b = Image::from_fn(17, 9, |x, y, c| {
        let v = a.pixel(x, y, c);
        if v == 255 {
            254
        } else {
            v + 1
        }
    })
    .unwrap();
    assert_eq!(mse(&a, &b).unwrap(), 1.0);
    assert!((psnr(&a, &b).unwrap() - 20.0 * 255f64.log10()).abs() < 1e-12);
    assert!(psnr(&a, &test_image(9, 17, 1)).is_err());
}

#[test]
fn bpp_arithmetic() {
    assert_eq!(bpp(49152, 768, 512), 1.0);
    assert_eq!(bpp(1, 1, 1), 8.0);
}

#[test]
fn identical_curves_give_zero() {
    let a = curve(&[28.0, 31.0, 34.0, 37.0, 40.0], anchor_log_rate);
    assert_eq!(bd_rate(&a, &a).unwrap(), 0.0);
}

#[test]
fn ten_percent_shift() {
    let ps = [29.0, 32.0, 35.0, 38.0];
    let a = curve(&ps, anchor_log_rate);
    let t: Vec<RdPoint> = a.iter().map(|p| RdPoint::new(p.bpp * 1.1, p.psnr).unwrap()).collect();
    assert!((bd_rate(&a, &t).unwrap() - 10.0).abs() <= 1e-6);
}

#[test]
fn known_gap_matches_quadrature() {
    let gap = |p: f64| 0.05 - 0.01 * (p - 33.0) + 0.0004 * (p - 33.0).powi(3);
    let a = curve(&[27.0, 30.0, 33.0, 36.0, 39.0, 42.0], anchor_log_rate);
    let t = curve(&[29.0, 31.5, 34.0, 37.0, 40.0], |p| anchor_log_rate(p) + gap(p));
    let want = 100.0 * dense_mean(gap, 29.0, 40.0).exp_m1();
    let got = bd_rate(&a, &t).unwrap();
    assert!((got - want).abs() <= 1e-3, "{got} vs {want}");
}

#[test]
fn bad_inputs_are_refused() {
    let a = curve(&[28.0, 31.0, 34.0, 37.0], anchor_log_rate);
    assert!(bd_rate(&a[..3], &a).is_err());
    let far = curve(&[50.0, 52.0, 54.0, 56.0], anchor_log_rate);
    assert!(bd_rate(&a, &far).is_err());
    assert!(RdPoint::new(0.0, 30.0).is_err());
    assert!(RdPoint::new(1.0, f64::NAN).is_err());
}

#[test]
fn csv_round_trip() {
    let pts = curve(&[28.0, 31.0, 34.5, 37.25], anchor_log_rate);
    let mut buf = Vec::new();
    write_rd_csv(&pts, &mut buf).unwrap();
    assert_eq!(read_rd_csv(buf.as_slice()).unwrap(), pts);
    let text = "# anchor\n0.1, 30.0\n\n0.2,32.5\n# trailing comment\n";
    let got = read_rd_csv(text.as_bytes()).unwrap();
    assert_eq!(got, vec![RdPoint::new(0.1, 30.0).unwrap(), RdPoint::new(0.2, 32.5).unwrap()]);
    assert!(read_rd_csv("0.1,x\n".as_bytes()).is_err());
    assert!(read_rd_csv("0.1,2,3\n".as_bytes()).is_err());
}

fn arb_curve() -> impl Strategy<Value = Vec<RdPoint>> {
    (
        prop::collection::vec(0.5f64..3.0, 4..7),
        -4.0f64..-1.0,
        0.05f64..0.3,
        prop::collection::vec(-0.02f64..0.02, 4..7),
    )
        .prop_map(|(steps, base, slope, noise)| {
            let mut p = 26.0;
            steps
                .iter()
                .zip(noise.iter().cycle())
                .map(|(s, n)| {
                    p += s;
                    RdPoint::new((base + slope * (p - 26.0) + n).exp(), p).unwrap()
                })
                .collect()
        })
}

fn overlaps(a: &[RdPoint], b: &[RdPoint]) -> bool {
    let lo = a[0].psnr.max(b[0].psnr);
    let hi = a.last().unwrap().psnr.min(b.last().unwrap().psnr);
    hi - lo > 0.5
}

proptest! {
    #[test]
    fn antisymmetric(a in arb_curve(), b in arb_curve()) {
        prop_assume!(overlaps(&a, &b));
        let ab = bd_rate(&a, &b).unwrap();
        let ba = bd_rate(&b, &a).unwrap();
        let want = -ba / (1.0 + ba / 100.0);
        prop_assert!((ab - want).abs() <= 1e-6 * want.abs().max(1.0));
    }

    #[test]
    fn rate_scale_invariant(a in arb_curve(), b in arb_curve(), k in 0.01f64..100.0) {
        prop_assume!(overlaps(&a, &b));
        let scale = |c: &[RdPoint]| c.iter().map(|p| RdPoint::new(p.bpp * k, p.psnr).unwrap()).collect::<Vec<_>>();
        let base = bd_rate(&a, &b).unwrap();
        prop_assert!((bd_rate(&scale(&a), &scale(&b)).unwrap() - base).abs() <= 1e-9 * base.abs().max(1.0));
    }

    #[test]
    fn dominance_is_negative(a in arb_curve(), f in 0.5f64..0.95) {
        let t: Vec<RdPoint> = a.iter().map(|p| RdPoint::new(p.bpp * f, p.psnr).unwrap()).collect();
        prop_assert!(bd_rate(&a, &t).unwrap() < 0.0);
    }
}
