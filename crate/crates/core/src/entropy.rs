//! Residual quantization and discretized-Gaussian likelihoods.
//!
//! Latents are coded as `q = round(y − μ)`, so the probability of a symbol
//! depends only on σ. σ is snapped to a fixed 64-entry geometric table; the
//! decoder rebuilds identical tables from the constants below.

use std::sync::OnceLock;

use crate::error::{ensure, Result};
use crate::scalar::Scalar;
use crate::tensor::{softplus, Tensor};

pub const SIGMA_MIN: f64 = 0.11;
pub const SIGMA_MAX: f64 = 256.0;
pub const SCALE_LEVELS: usize = 64;
pub const SYMBOL_MIN: i32 = -64;
pub const SYMBOL_MAX: i32 = 63;
/// Number of symbols in `[SYMBOL_MIN, SYMBOL_MAX]`.
pub const SYMBOLS: usize = (SYMBOL_MAX - SYMBOL_MIN + 1) as usize;
/// 2⁻¹⁶
pub const PROB_FLOOR: f64 = 1.0 / 65536.0;

#[derive(Clone, Debug, PartialEq)]
pub struct ScaleTable {
    scales: [f64; SCALE_LEVELS],
}

impl Default for ScaleTable {
    fn default() -> Self {
        Self::new()
    }
}

impl ScaleTable {
    /// `σ_i = exp(ln σ_min + i·(ln σ_max − ln σ_min)/63)`.
    pub fn new() -> Self {
        let (lo, hi) = (SIGMA_MIN.ln(), SIGMA_MAX.ln());
        let step = (hi - lo) / (SCALE_LEVELS - 1) as f64;
        let mut scales = [0.0; SCALE_LEVELS];
        for (i, s) in scales.iter_mut().enumerate() {
            *s = (lo + step * i as f64).exp();
        }
        scales[0] = SIGMA_MIN;
        scales[SCALE_LEVELS - 1] = SIGMA_MAX;
        Self { scales }
    }

    /// Shared instance.
    pub fn standard() -> &'static ScaleTable {
        static TABLE: OnceLock<ScaleTable> = OnceLock::new();
        TABLE.get_or_init(ScaleTable::new)
    }

    pub fn scales(&self) -> &[f64; SCALE_LEVELS] {
        &self.scales
    }

    pub fn scale(&self, index: usize) -> f64 {
        self.scales[index]
    }

    /// Nearest entry in the log domain; ties go to the lower index. Values
    /// outside the table clamp to its ends; NaN maps to the top.
    pub fn index(&self, sigma: f64) -> usize {
        if sigma.is_nan() {
            return SCALE_LEVELS - 1;
        }
        if sigma <= self.scales[0] {
            return 0;
        }
        if sigma >= self.scales[SCALE_LEVELS - 1] {
            return SCALE_LEVELS - 1;
        }
        // first entry strictly above sigma
        let upper = self.scales.partition_point(|&s| s <= sigma);
        let lower = upper - 1;
        let ls = sigma.ln();
        let d_lo = ls - self.scales[lower].ln();
        let d_hi = self.scales[upper].ln() - ls;
        if d_hi < d_lo {
            upper
        } else {
            lower
        }
    }
}

/// Mean and clamped scale of the conditional Gaussian for every latent.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianParams<T> {
    pub mu: Tensor<T>,
    pub sigma: Tensor<T>,
}

impl<T: Scalar> GaussianParams<T> {
    /// `σ = clamp(softplus(σ_raw), σ_min, σ_max)`.
    pub fn new(mu: Tensor<T>, sigma_raw: &Tensor<T>) -> Result<Self> {
        ensure!(
            mu.shape() == sigma_raw.shape(),
            "mean {:?} and scale {:?} shapes differ",
            mu.shape(),
            sigma_raw.shape()
        );
        let sigma = sigma_raw.map(|v| T::from_f64_round(clamp_sigma(softplus(v.to_f64_exact()))));
        Ok(Self { mu, sigma })
    }

    /// Per-element scale-table indices.
    pub fn indices(&self) -> Vec<u8> {
        let table = ScaleTable::standard();
        self.sigma.data().iter().map(|s| table.index(s.to_f64_exact()) as u8).collect()
    }
}

fn clamp_sigma(s: f64) -> f64 {
    if s.is_nan() {
        SIGMA_MAX
    } else {
        s.clamp(SIGMA_MIN, SIGMA_MAX)
    }
}

/// Round half away from zero, then clip to the symbol support.
pub fn quantize_residual(r: f64) -> i32 {
    if r.is_nan() {
        return 0;
    }
    r.round().clamp(SYMBOL_MIN as f64, SYMBOL_MAX as f64) as i32
}

/// `q = clip(round(y − μ))`, `ŷ = q + μ`.
pub fn quantize_st<T: Scalar>(y: &Tensor<T>, mu: &Tensor<T>) -> Result<(Vec<i32>, Tensor<T>)> {
    ensure!(
        y.shape() == mu.shape(),
        "quantize: latent {:?} and mean {:?} shapes differ",
        y.shape(),
        mu.shape()
    );
    let q: Vec<i32> = y
        .data()
        .iter()
        .zip(mu.data())
        .map(|(&a, &m)| quantize_residual(a.to_f64_exact() - m.to_f64_exact()))
        .collect();
    let y_hat = dequantize(&q, mu)?;
    Ok((q, y_hat))
}

/// `ŷ = q + μ`, computed in f64 and rounded once.
pub fn dequantize<T: Scalar>(q: &[i32], mu: &Tensor<T>) -> Result<Tensor<T>> {
    ensure!(q.len() == mu.len(), "dequantize: {} symbols for {} means", q.len(), mu.len());
    let data = q
        .iter()
        .zip(mu.data())
        .map(|(&s, &m)| T::from_f64_round(s as f64 + m.to_f64_exact()))
        .collect();
    Tensor::new(mu.shape(), data)
}

/// Probability mass of the unit-width bin around `q` under N(0, σ²),
/// floored at 2⁻¹⁶. Evaluated on `|q|`, so `p(q) == p(−q)` exactly.
pub fn gaussian_likelihood(q: i32, sigma: f64) -> f64 {
    let a = q.unsigned_abs() as f64;
    let k = std::f64::consts::FRAC_1_SQRT_2 / sigma;
    let mass = if a == 0.0 {
        // 1 − 2·Φ(−½/σ)
        1.0 - libm::erfc(0.5 * k)
    } else {
        // Φ((a+½)/σ) − Φ((a−½)/σ) via upper tails, accurate far out
        0.5 * (libm::erfc((a - 0.5) * k) - libm::erfc((a + 0.5) * k))
    };
    mass.max(PROB_FLOOR)
}

/// Likelihood of a latent symbol under the table scale at `index`.
pub fn table_likelihood(q: i32, index: usize) -> f64 {
    gaussian_likelihood(q, ScaleTable::standard().scale(index))
}

/// `Σ_q table_likelihood(q, index)` over the symbol support.
pub fn support_mass(index: usize) -> f64 {
    static MASS: OnceLock<Vec<f64>> = OnceLock::new();
    MASS.get_or_init(|| {
        (0..SCALE_LEVELS)
            .map(|i| (SYMBOL_MIN..=SYMBOL_MAX).map(|q| table_likelihood(q, i)).sum())
            .collect()
    })[index]
}

/// Probability the model assigns to symbol `q` within the coded alphabet:
/// the table likelihood renormalized over `[SYMBOL_MIN, SYMBOL_MAX]`. This is
/// the distribution the range-coder tables quantize, and the one rate
/// estimates are taken under.
pub fn symbol_likelihood(q: i32, index: usize) -> f64 {
    table_likelihood(q, index) / support_mass(index)
}

/// Factorized prior for the hyper-latent: zero mean, per-channel σ_c snapped
/// to the scale table.
pub fn factorized_likelihood<W: Scalar>(q_z: i32, channel: usize, sigmas: &[W]) -> f64 {
    table_likelihood(q_z, factorized_index(channel, sigmas))
}

pub fn factorized_index<W: Scalar>(channel: usize, sigmas: &[W]) -> usize {
    ScaleTable::standard().index(clamp_sigma(sigmas[channel].to_f64_exact()))
}

/// `Σ −log₂ p / pixel_count`.
pub fn rate_estimate(likelihoods: &[f64], pixel_count: usize) -> f64 {
    let bits: f64 = likelihoods.iter().map(|&p| -p.log2()).sum();
    bits / pixel_count as f64
}

/// `bpp_y + bpp_z + λ·MSE` with MSE on the 0–255 scale.
pub fn rd_loss_from_mse(bpp_y: f64, bpp_z: f64, lambda: f64, mse: f64) -> Result<f64> {
    ensure!(lambda > 0.0 && lambda.is_finite(), "lambda must be positive, got {lambda}");
    Ok(bpp_y + bpp_z + lambda * mse)
}

/// The rate-distortion objective on a pair of 8-bit images.
pub fn rd_loss(x: &crate::image::Image, x_hat: &crate::image::Image, bpp_y: f64, bpp_z: f64, lambda: f64) -> Result<f64> {
    rd_loss_from_mse(bpp_y, bpp_z, lambda, crate::metrics::mse(x, x_hat)?)
}

/// Training-time rate–distortion trade-offs.
pub const LAMBDAS: [f64; 7] = [0.0018, 0.0025, 0.0035, 0.0067, 0.0130, 0.0250, 0.0483];
