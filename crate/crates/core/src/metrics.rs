//! PSNR, bits per pixel and Bjøntegaard delta rate.

use std::io::Read;

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure, Error, Result};
use crate::image::Image;

pub const PSNR_CAP: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RdPoint {
    pub bpp: f64,
    pub psnr: f64,
}

impl RdPoint {
    pub fn new(bpp: f64, psnr: f64) -> Result<Self> {
        ensure!(bpp > 0.0 && bpp.is_finite(), "bpp must be positive and finite, got {bpp}");
        ensure!(psnr.is_finite(), "psnr must be finite, got {psnr}");
        Ok(Self { bpp, psnr })
    }
}

/// Mean squared error over all samples, 0–255 scale.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    ensure!(
        a.width() == b.width() && a.height() == b.height(),
        "image sizes differ: {}x{} vs {}x{}",
        a.width(),
        a.height(),
        b.width(),
        b.height()
    );
    let sum: u64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum();
    Ok(sum as f64 / a.data().len() as f64)
}

/// `10·log₁₀(peak²/MSE)`, capped at 100 dB.
pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP;
    }
    (10.0 * (peak * peak / mse).log10()).min(PSNR_CAP)
}

pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?, 255.0))
}

pub fn bpp(bytes: usize, width: usize, height: usize) -> f64 {
    8.0 * bytes as f64 / (width * height) as f64
}

/// Least-squares cubic `ln(rate) = c0 + c1·p + c2·p² + c3·p³`. With exactly
/// four points this is the interpolating cubic.
fn fit_cubic(points: &[RdPoint]) -> Result<[f64; 4]> {
    let n = points.len();
    let a = DMatrix::from_fn(n, 4, |r, c| points[r].psnr.powi(c as i32));
    let b = DVector::from_iterator(n, points.iter().map(|p| p.bpp.ln()));
    let svd = a.svd(true, true);
    let x = svd.solve(&b, 1e-12).map_err(|e| Error::contract(format!("cubic fit failed: {e}")))?;
    Ok([x[0], x[1], x[2], x[3]])
}

/// `∫ₗʰ c0 + c1 p + c2 p² + c3 p³ dp`.
fn integrate(c: &[f64; 4], lo: f64, hi: f64) -> f64 {
    let prim = |p: f64| c[0] * p + c[1] * p * p / 2.0 + c[2] * p.powi(3) / 3.0 + c[3] * p.powi(4) / 4.0;
    prim(hi) - prim(lo)
}

fn psnr_range(points: &[RdPoint]) -> (f64, f64) {
    points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.psnr), hi.max(p.psnr)))
}

/// Average rate difference of `test` against `anchor` at equal PSNR, in
/// percent. Negative means `test` needs fewer bits.
pub fn bd_rate(anchor: &[RdPoint], test: &[RdPoint]) -> Result<f64> {
    for (name, pts) in [("anchor", anchor), ("test", test)] {
        ensure!(pts.len() >= 4, "{name} curve needs at least 4 points, got {}", pts.len());
        for p in pts {
            ensure!(p.bpp > 0.0 && p.bpp.is_finite() && p.psnr.is_finite(), "{name} curve has invalid point {:?}", p);
        }
    }
    // PSNR centring keeps the Vandermonde system well conditioned
    let (a_lo, a_hi) = psnr_range(anchor);
    let (t_lo, t_hi) = psnr_range(test);
    let lo = a_lo.max(t_lo);
    let hi = a_hi.min(t_hi);
    ensure!(hi > lo, "PSNR ranges do not overlap ([{a_lo}, {a_hi}] vs [{t_lo}, {t_hi}])");
    let centre = 0.5 * (lo + hi);
    let shift = |pts: &[RdPoint]| -> Vec<RdPoint> {
        pts.iter()
            .map(|p| RdPoint {
                bpp: p.bpp,
                psnr: p.psnr - centre,
            })
            .collect()
    };
    let ca = fit_cubic(&shift(anchor))?;
    let ct = fit_cubic(&shift(test))?;
    let (l, h) = (lo - centre, hi - centre);
    let avg = (integrate(&ct, l, h) - integrate(&ca, l, h)) / (h - l);
    Ok(100.0 * avg.exp_m1())
}

/// `bpp,psnr` rows; blank lines and `#` comments are skipped, as is a
/// leading `bpp,psnr` header.
pub fn read_rd_csv(r: impl Read) -> Result<Vec<RdPoint>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(r);
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Io(std::io::Error::other(e.to_string())),
            _ => Error::Malformed {
                what: "RD csv",
                reason: e.to_string(),
            },
        })?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if i == 0 && rec.get(0).is_some_and(|f| f.eq_ignore_ascii_case("bpp")) {
            continue;
        }
        let malformed = |reason: String| Error::Malformed { what: "RD csv", reason };
        if rec.len() != 2 {
            return Err(malformed(format!("row {} has {} fields, expected 2", i + 1, rec.len())));
        }
        let num = |j: usize| -> Result<f64> {
            rec[j]
                .parse::<f64>()
                .map_err(|_| malformed(format!("row {}: `{}` is not a number", i + 1, &rec[j])))
        };
        out.push(RdPoint::new(num(0)?, num(1)?)?);
    }
    Ok(out)
}

pub fn write_rd_csv(points: &[RdPoint], w: impl std::io::Write) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    writer
        .write_record(["bpp", "psnr"])
        .and_then(|_| {
            for p in points {
                writer.write_record([p.bpp.to_string(), p.psnr.to_string()])?;
            }
            writer.flush().map_err(csv::Error::from)
        })
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve() -> Vec<RdPoint> {
        [(0.2, 28.0), (0.4, 31.0), (0.7, 33.5), (1.1, 36.0)]
            .iter()
            .map(|&(b, p)| RdPoint::new(b, p).unwrap())
            .collect()
    }

    #[test]
    fn psnr_examples() {
        assert!((psnr_from_mse(1.0, 255.0) - 48.1308).abs() < 1e-3);
        assert_eq!(psnr_from_mse(0.0, 255.0), 100.0);
        assert!(psnr_from_mse(255.0 * 255.0, 255.0).abs() < 1e-12);
    }

    #[test]
    fn identical_curves() {
        assert_eq!(bd_rate(&curve(), &curve()).unwrap(), 0.0);
    }

    #[test]
    fn ten_percent_shift() {
        let t: Vec<_> = curve()
            .iter()
            .map(|p| RdPoint::new(p.bpp * 1.1, p.psnr).unwrap())
            .collect();
        assert!((bd_rate(&curve(), &t).unwrap() - 10.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_short_and_disjoint() {
        assert!(bd_rate(&curve()[..3], &curve()).is_err());
        let far: Vec<_> = curve()
            .iter()
            .map(|p| RdPoint::new(p.bpp, p.psnr + 50.0).unwrap())
            .collect();
        assert!(bd_rate(&curve(), &far).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let mut buf = Vec::new();
        write_rd_csv(&curve(), &mut buf).unwrap();
        let text = format!("# comment\n{}", String::from_utf8(buf).unwrap());
        assert_eq!(read_rd_csv(text.as_bytes()).unwrap(), curve());
    }
}
