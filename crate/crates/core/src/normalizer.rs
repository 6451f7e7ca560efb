//! Table-free normalizing constant of the Bingham distribution on S³.
//!
//! `C(λ) = ∫_{S³} exp(qᵀ diag(λ) q) dq` is evaluated as a windowed
//! Fourier-type sum along the vertical line `Re s = c`:
//!
//! ```text
//! C(λ)      ≈ π e^c h Σ_{n=−N−1}^{N} w(|nh|) F(nh, λ) e^{i nh}
//! ∂C/∂λ_i   ≈ π e^c h Σ_{n=−N−1}^{N} w(|nh|) ∂F/∂λ_i(nh, λ) e^{i nh}
//! F(t, λ)   = Π_k (c − λ_k + i t)^{−1/2}
//! ∂F/∂λ_i   = ½ (c − λ_i + i t)^{−1} F(t, λ)
//! w(x)      = ½ erfc(x / p₁ − p₂)
//! ```
//!
//! with `c = N_min π / (r²(1+r) ω_d)`, `h = √(2πd(1+r)/(ω_d N))`,
//! `p₁ = √(Nh/ω_d)` and `p₂ = √(ω_d N h / 4)`. Only the real part is kept.
//!
//! Terms `n` and `−n` are complex conjugates of each other, so they are
//! accumulated as `2·Re` in ascending `|n|`; the unpaired node `n = −N−1`
//! carries the whole imaginary residual. The kernel `w(|t|) e^{it}` does not
//! depend on `λ` and is cached in [`Normalizer`].

use std::f64::consts::PI;

use nalgebra::Vector4;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{BinghamError, Result};

/// Concentrations below this are rejected.
pub const LAMBDA_FLOOR: f64 = -1e6;

/// Ratio `imag_residual / C` above which a result is reported as suspect.
pub const IMAG_WARNING_RATIO: f64 = 1e-6;

const CANONICAL_SLACK: f64 = 1e-12;

/// Controls for the quadrature. Defaults are `r = 2.5`, `ω_d = 0.5`,
/// `N_min = 15`, `N = 200`, `d = c/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureConfig {
    pub r: f64,
    pub omega_d: f64,
    pub n_min: u32,
    pub n: u32,
    pub d_frac: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            r: 2.5,
            omega_d: 0.5,
            n_min: 15,
            n: 200,
            d_frac: 0.5,
        }
    }
}

impl QuadratureConfig {
    pub fn with_n(self, n: u32) -> Self {
        QuadratureConfig { n, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.r.is_finite() && self.omega_d.is_finite() && self.d_frac.is_finite();
        if !finite {
            return Err(BinghamError::invalid("quadrature config has non-finite fields"));
        }
        if self.r < 2.0 {
            return Err(BinghamError::invalid(format!("r must be >= 2, got {}", self.r)));
        }
        if self.omega_d < 1.0 / self.r || self.omega_d > 1.0 {
            return Err(BinghamError::invalid(format!(
                "omega_d must lie in [1/r, 1] = [{}, 1], got {}",
                1.0 / self.r,
                self.omega_d
            )));
        }
        if self.n_min == 0 {
            return Err(BinghamError::invalid("n_min must be positive"));
        }
        if self.n < self.n_min {
            return Err(BinghamError::invalid(format!(
                "n ({}) must be at least n_min ({})",
                self.n, self.n_min
            )));
        }
        if !(self.d_frac > 0.0 && self.d_frac < 1.0) {
            return Err(BinghamError::invalid(format!(
                "d_frac must lie in (0, 1), got {}",
                self.d_frac
            )));
        }
        Ok(())
    }
}

/// Derived quadrature constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConstants {
    pub c: f64,
    pub d: f64,
    pub h: f64,
    pub p1: f64,
    pub p2: f64,
}

pub fn derive_constants(cfg: &QuadratureConfig) -> Result<QuadratureConstants> {
    cfg.validate()?;
    let r = cfg.r;
    let w = cfg.omega_d;
    let n = f64::from(cfg.n);
    let c = f64::from(cfg.n_min) * PI / (r * r * (1.0 + r) * w);
    let d = cfg.d_frac * c;
    let h = (2.0 * PI * d * (1.0 + r) / (w * n)).sqrt();
    let p1 = (n * h / w).sqrt();
    let p2 = (w * n * h / 4.0).sqrt();
    Ok(QuadratureConstants { c, d, h, p1, p2 })
}

/// Window `½ erfc(x/p₁ − p₂)`, decreasing from near one to zero.
pub fn weight(x: f64, p1: f64, p2: f64) -> f64 {
    0.5 * erfc(x / p1 - p2)
}

fn check_shift(lambda: &Vector4<f64>, c: f64) -> Result<()> {
    for (k, l) in lambda.iter().enumerate() {
        if !l.is_finite() {
            return Err(BinghamError::invalid(format!("lambda[{k}] is not finite")));
        }
        if !(c - l > 0.0) {
            return Err(BinghamError::invalid(format!(
                "c - lambda[{k}] = {} must be positive",
                c - l
            )));
        }
    }
    Ok(())
}

/// `F(t, λ) = Π_k (c − λ_k + i t)^{−1/2}` on the principal branch.
pub fn integrand(t: f64, lambda: &Vector4<f64>, c: f64) -> Result<Complex64> {
    check_shift(lambda, c)?;
    Ok(lambda
        .iter()
        .map(|l| Complex64::new(c - l, t).sqrt().inv())
        .product())
}

/// `∂F/∂λ_i = ½ (c − λ_i + i t)^{−1} F(t, λ)`.
pub fn integrand_dlambda(t: f64, lambda: &Vector4<f64>, c: f64, i: usize) -> Result<Complex64> {
    if i >= 4 {
        return Err(BinghamError::invalid(format!("index {i} out of range 0..4")));
    }
    let f = integrand(t, lambda, c)?;
    Ok(0.5 * f / Complex64::new(c - lambda[i], t))
}

/// `C(λ)`, `∂C/∂λ` and the largest discarded imaginary part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizerOutput {
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "dC_dlambda")]
    pub dc_dlambda: Vector4<f64>,
    pub imag_residual: f64,
}

impl NormalizerOutput {
    /// `∂ ln C / ∂λ`, which equals the second moments `E[(Dᵀq)_i²]`.
    pub fn log_gradient(&self) -> Vector4<f64> {
        self.dc_dlambda / self.c
    }

    /// Fails with [`BinghamError::NumericalWarning`] when the discarded
    /// imaginary part exceeds [`IMAG_WARNING_RATIO`] of `C`.
    pub fn check_residual(&self) -> Result<()> {
        let ratio = self.imag_residual / self.c;
        if ratio > IMAG_WARNING_RATIO {
            return Err(BinghamError::NumericalWarning { ratio });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    t: f64,
    kernel: Complex64,
}

/// Precomputed nodes for one [`QuadratureConfig`].
#[derive(Debug, Clone)]
pub struct Normalizer {
    cfg: QuadratureConfig,
    consts: QuadratureConstants,
    scale: f64,
    center: Node,
    pairs: Vec<Node>,
    endpoint: Node,
}

impl Normalizer {
    pub fn new(cfg: QuadratureConfig) -> Result<Self> {
        let consts = derive_constants(&cfg)?;
        let node = |n: i64| {
            let t = n as f64 * consts.h;
            let w = weight(t.abs(), consts.p1, consts.p2);
            Node {
                t,
                kernel: Complex64::from_polar(w, t),
            }
        };
        let pairs = (1..=i64::from(cfg.n)).map(node).collect();
        Ok(Normalizer {
            cfg,
            consts,
            scale: PI * consts.c.exp() * consts.h,
            center: node(0),
            pairs,
            endpoint: node(-i64::from(cfg.n) - 1),
        })
    }

    pub fn config(&self) -> &QuadratureConfig {
        &self.cfg
    }

    pub fn constants(&self) -> &QuadratureConstants {
        &self.consts
    }

    /// Evaluate at canonical `λ` (`λ₁ = 0`, non-increasing, `λ₄ ≥ −10⁶`).
    pub fn evaluate(&self, lambda: &Vector4<f64>) -> Result<NormalizerOutput> {
        check_canonical(lambda)?;
        self.evaluate_raw(lambda)
    }

    /// Like [`Normalizer::evaluate`] but returns the value even when the
    /// imaginary residual is large, as happens for very small `N`.
    pub fn evaluate_tolerant(&self, lambda: &Vector4<f64>) -> Result<NormalizerOutput> {
        check_canonical(lambda)?;
        self.sum(lambda)
    }

    /// Evaluate without the canonical-form check. Valid for any finite `λ`
    /// with every `λ_k < c` and `λ_k ≥ −10⁶`; the sum is symmetric in the
    /// order of the entries.
    pub fn evaluate_raw(&self, lambda: &Vector4<f64>) -> Result<NormalizerOutput> {
        let out = self.sum(lambda)?;
        out.check_residual()?;
        Ok(out)
    }

    fn sum(&self, lambda: &Vector4<f64>) -> Result<NormalizerOutput> {
        check_shift(lambda, self.consts.c)?;
        if let Some(k) = lambda.iter().position(|l| *l < LAMBDA_FLOOR) {
            return Err(BinghamError::invalid(format!(
                "lambda[{k}] = {} is below the supported floor {LAMBDA_FLOOR:e}",
                lambda[k]
            )));
        }
        let shift: [f64; 4] = std::array::from_fn(|k| self.consts.c - lambda[k]);

        // [C, ∂C/∂λ₁, …, ∂C/∂λ₄]
        let term = |node: &Node| -> [Complex64; 5] {
            let z: [Complex64; 4] = std::array::from_fn(|k| Complex64::new(shift[k], node.t));
            let f = z.iter().map(|zk| zk.sqrt().inv()).product::<Complex64>() * node.kernel;
            let half = 0.5 * f;
            [f, half / z[0], half / z[1], half / z[2], half / z[3]]
        };

        let mut real = [0.0f64; 5];
        let center = term(&self.center);
        for (acc, v) in real.iter_mut().zip(center.iter()) {
            *acc += v.re;
        }
        for node in &self.pairs {
            for (acc, v) in real.iter_mut().zip(term(node).iter()) {
                *acc += 2.0 * v.re;
            }
        }
        let end = term(&self.endpoint);
        let mut imag = 0.0f64;
        for (acc, v) in real.iter_mut().zip(end.iter()) {
            *acc += v.re;
            imag = imag.max(v.im.abs());
        }
        // the n = 0 term is real up to rounding of the kernel
        for v in center.iter() {
            imag = imag.max(v.im.abs());
        }

        let c = self.scale * real[0];
        let out = NormalizerOutput {
            c,
            dc_dlambda: Vector4::new(real[1], real[2], real[3], real[4]) * self.scale,
            imag_residual: self.scale * imag,
        };
        if !(c.is_finite() && c > 0.0) {
            return Err(BinghamError::NumericalFailure(format!(
                "normalizing constant evaluated to {c} for lambda {:?}",
                lambda.as_slice()
            )));
        }
        Ok(out)
    }
}

fn check_canonical(lambda: &Vector4<f64>) -> Result<()> {
    if !lambda.iter().all(|l| l.is_finite()) {
        return Err(BinghamError::invalid("lambda must be finite"));
    }
    if lambda[0].abs() > CANONICAL_SLACK {
        return Err(BinghamError::invalid(format!(
            "lambda is not canonical: lambda[0] = {} must be 0",
            lambda[0]
        )));
    }
    for k in 1..4 {
        if lambda[k] > lambda[k - 1] + CANONICAL_SLACK {
            return Err(BinghamError::invalid(format!(
                "lambda is not canonical: entries must be non-increasing, got {:?}",
                lambda.as_slice()
            )));
        }
    }
    Ok(())
}

/// One-shot evaluation at canonical `λ`.
pub fn normalizing_constant(
    lambda: &Vector4<f64>,
    cfg: &QuadratureConfig,
) -> Result<NormalizerOutput> {
    Normalizer::new(*cfg)?.evaluate(lambda)
}

/// Relative change in `C` when `N` is doubled.
pub fn convergence_check(lambda: &Vector4<f64>, cfg: &QuadratureConfig) -> Result<f64> {
    relative_change(lambda, cfg, &cfg.with_n(cfg.n.saturating_mul(2)))
}

/// `|C_fine − C_coarse| / C_fine` between two configurations. Residual
/// warnings are ignored so that deliberately coarse settings can be compared.
pub fn relative_change(
    lambda: &Vector4<f64>,
    coarse: &QuadratureConfig,
    fine: &QuadratureConfig,
) -> Result<f64> {
    let a = Normalizer::new(*coarse)?.evaluate_tolerant(lambda)?.c;
    let b = Normalizer::new(*fine)?.evaluate_tolerant(lambda)?.c;
    Ok((b - a).abs() / b.abs())
}
