//! Slow reference computations for validating the fast paths.
//!
//! [`brute_force_c`] integrates `exp(qᵀ diag(λ) q)` over S³ directly with a
//! composite Simpson product rule in hyperspherical coordinates
//! `q = (cos ψ, sin ψ cos θ, sin ψ sin θ cos φ, sin ψ sin θ sin φ)`, volume
//! element `sin²ψ sin θ dψ dθ dφ`. The integrand only sees squared
//! coordinates, so it is even about `ψ = π/2`, `θ = π/2` and `φ = π/2` and
//! π-periodic in `φ`; the rule runs on the first octant `[0, π/2]³` and
//! multiplies by 16.
//!
//! In `ψ` and `φ` the integrand is smooth and periodic, so Simpson converges
//! spectrally there. The `sin θ` factor is not: its endpoint term makes the
//! θ direction converge like `h⁴`. The reported value therefore applies one
//! Richardson step to the Simpson sums on the grid and its half,
//! `(16 S_h − S_2h) / 15`, which cancels that term.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fs;
use std::path::Path;

use nalgebra::Vector4;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{BinghamError, Result};

/// Smallest resolution accepted on any axis.
pub const MIN_RESOLUTION: u32 = 8;

/// Per-axis cap for [`certified_c`].
pub const MAX_RESOLUTION: u32 = 1024;

/// Default self-convergence target for [`certified_c`].
pub const CERTIFY_TOL: f64 = 1e-8;

/// Interval counts over the full ranges `ψ ∈ [0, π]`, `θ ∈ [0, π]`,
/// `φ ∈ [0, 2π)`.
///
/// The octant reduction needs `n_psi` and `n_theta` divisible by 4 and
/// `n_phi` by 8, so that each reduced axis has an even Simpson count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_psi: u32,
    pub n_theta: u32,
    pub n_phi: u32,
}

impl GridSpec {
    pub fn new(n_psi: u32, n_theta: u32, n_phi: u32) -> Result<Self> {
        let g = GridSpec {
            n_psi,
            n_theta,
            n_phi,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let axes = [("n_psi", self.n_psi, 4), ("n_theta", self.n_theta, 4), ("n_phi", self.n_phi, 8)];
        for (name, n, div) in axes {
            if n < MIN_RESOLUTION {
                return Err(BinghamError::invalid(format!(
                    "{name} = {n} is below the minimum resolution {MIN_RESOLUTION}"
                )));
            }
            if n % div != 0 {
                return Err(BinghamError::invalid(format!("{name} = {n} must be divisible by {div}")));
            }
        }
        Ok(())
    }

    /// Every axis halved; `None` when that would break [`GridSpec::validate`].
    pub fn halved(&self) -> Option<GridSpec> {
        GridSpec::new(self.n_psi / 2, self.n_theta / 2, self.n_phi / 2).ok()
    }

    /// Every axis doubled, each clamped to [`MAX_RESOLUTION`].
    pub fn doubled(&self) -> GridSpec {
        GridSpec {
            n_psi: (self.n_psi * 2).min(MAX_RESOLUTION),
            n_theta: (self.n_theta * 2).min(MAX_RESOLUTION),
            n_phi: (self.n_phi * 2).min(MAX_RESOLUTION),
        }
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            n_psi: 32,
            n_theta: 32,
            n_phi: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// Richardson-extrapolated value, or plain Simpson when the grid is too
    /// coarse to be halved.
    #[serde(rename = "C")]
    pub c: f64,
    /// Plain composite Simpson on `grid`.
    pub simpson: f64,
    pub grid: GridSpec,
    /// `|C(grid) − C(grid / 2)| / C(grid)`, both computed the same way;
    /// infinite when the comparison value cannot be formed.
    pub convergence_estimate: f64,
}

/// Simpson nodes and weights for `intervals` (even) panels on `[0, π/2]`.
fn simpson(intervals: usize) -> Vec<(f64, f64)> {
    let h = FRAC_PI_2 / intervals as f64;
    (0..=intervals)
        .map(|k| {
            let w = match k {
                0 => 1.0,
                k if k == intervals => 1.0,
                k if k % 2 == 1 => 4.0,
                _ => 2.0,
            };
            (k as f64 * h, w * h / 3.0)
        })
        .collect()
}

/// The product rule on one grid, without the convergence estimate.
fn integrate(lambda: &[f64; 4], grid: &GridSpec) -> f64 {
    let psi = simpson(grid.n_psi as usize / 2);
    // (cos², sin², weight · Jacobian factor) on each axis
    let theta: Vec<(f64, f64, f64)> = simpson(grid.n_theta as usize / 2)
        .into_iter()
        .map(|(t, w)| (t.cos().powi(2), t.sin().powi(2), w * t.sin()))
        .collect();
    let phi: Vec<(f64, f64)> = simpson(grid.n_phi as usize / 4)
        .into_iter()
        .map(|(p, w)| (lambda[2] * p.cos().powi(2) + lambda[3] * p.sin().powi(2), w))
        .collect();
    let sum: f64 = psi
        .par_iter()
        .map(|&(p, wp)| {
            let (c2, s2) = (p.cos().powi(2), p.sin().powi(2));
            let mut row = 0.0;
            for &(ct, st, wt) in &theta {
                let base = lambda[0] * c2 + s2 * lambda[1] * ct;
                let scale = s2 * st;
                let mut inner = 0.0;
                for &(e, wf) in &phi {
                    inner += wf * (base + scale * e).exp();
                }
                row += wt * inner;
            }
            wp * s2 * row
        })
        .sum();
    16.0 * sum
}

/// `C(λ)` by direct integration over S³.
///
/// Any finite `λ` is accepted; the largest entry is factored out first so the
/// integrand never overflows.
pub fn brute_force_c(lambda: &Vector4<f64>, grid: &GridSpec) -> Result<OracleResult> {
    grid.validate()?;
    if !lambda.iter().all(|l| l.is_finite()) {
        return Err(BinghamError::invalid("lambda must be finite"));
    }
    let top = lambda.max();
    let shifted: [f64; 4] = std::array::from_fn(|k| lambda[k] - top);
    let richardson = |fine: f64, coarse: f64| (16.0 * fine - coarse) / 15.0;
    let s1 = integrate(&shifted, grid);
    let half = grid.halved();
    let quarter = half.and_then(|h| h.halved());
    let s2 = half.map(|h| integrate(&shifted, &h));
    let s4 = quarter.map(|q| integrate(&shifted, &q));
    let (c, convergence_estimate) = match (s2, s4) {
        (Some(s2), Some(s4)) => {
            let (r1, r2) = (richardson(s1, s2), richardson(s2, s4));
            (r1, (r1 - r2).abs() / r1)
        }
        (Some(s2), None) => (richardson(s1, s2), f64::INFINITY),
        _ => (s1, f64::INFINITY),
    };
    let scale = top.exp();
    Ok(OracleResult {
        c: c * scale,
        simpson: s1 * scale,
        grid: *grid,
        convergence_estimate,
    })
}

/// Doubles `start` until the estimate drops below `tol` or the grid reaches
/// [`MAX_RESOLUTION`] on every axis. The last result is returned either way;
/// check its `convergence_estimate`.
pub fn certified_c(lambda: &Vector4<f64>, start: GridSpec, tol: f64) -> Result<OracleResult> {
    let mut grid = start;
    loop {
        let r = brute_force_c(lambda, &grid)?;
        let next = grid.doubled();
        if r.convergence_estimate < tol || next == grid {
            return Ok(r);
        }
        grid = next;
    }
}

/// Monte Carlo estimate of `C(λ)` with its standard error, from `n` uniform
/// points on S³ (normalized Gaussian vectors).
pub fn monte_carlo_c(lambda: &Vector4<f64>, n: usize, seed: u64) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(BinghamError::invalid("monte carlo needs at least two samples"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n {
        let v: Vector4<f64> = Vector4::from_fn(|_, _| StandardNormal.sample(&mut rng));
        let q = v / v.norm();
        let f = q.component_mul(&q).dot(lambda).exp();
        sum += f;
        sum_sq += f * f;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = (sum_sq / nf - mean * mean).max(0.0) * nf / (nf - 1.0);
    let area = 2.0 * PI * PI;
    Ok((area * mean, area * (var / nf).sqrt()))
}

/// Central differences `(f(x + s eᵢ) − f(x − s eᵢ)) / 2s` per coordinate.
pub fn finite_diff<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + step;
            let up = f(&probe);
            probe[i] = x[i] - step;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Cached oracle values keyed by `λ` at 12 significant digits.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleCache {
    pub entries: BTreeMap<String, OracleResult>,
}

impl OracleCache {
    pub fn key(lambda: &Vector4<f64>) -> String {
        lambda
            .iter()
            .map(|l| format!("{:.11e}", l + 0.0))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn get(&self, lambda: &Vector4<f64>) -> Option<&OracleResult> {
        self.entries.get(&Self::key(lambda))
    }

    pub fn insert(&mut self, lambda: &Vector4<f64>, r: OracleResult) {
        self.entries.insert(Self::key(lambda), r);
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| BinghamError::Parse {
            record: path.display().to_string(),
            field: "entries".into(),
            message: e.to_string(),
        })
    }

    /// Certifies every λ from `start` to `tol` and records the results.
    pub fn build(lambdas: &[Vector4<f64>], start: GridSpec, tol: f64) -> Result<Self> {
        let mut cache = OracleCache::default();
        for l in lambdas {
            cache.insert(l, certified_c(l, start, tol)?);
        }
        Ok(cache)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("cache serializes");
        fs::write(path, text + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn uniform_is_surface_area() {
        let area = 2.0 * PI * PI;
        let r = brute_force_c(&Vector4::zeros(), &GridSpec::new(128, 128, 256).unwrap()).unwrap();
        assert_relative_eq!(r.c, area, max_relative = 1e-9);
        // plain Simpson keeps the sin θ endpoint error of about 2e-9 here
        assert_relative_eq!(r.simpson, area, max_relative = 3e-9);
        assert!((r.simpson - area).abs() > (r.c - area).abs());
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(4, 8, 8).is_err());
        assert!(GridSpec::new(12, 8, 12).is_err());
        assert!(GridSpec::new(8, 8, 8).is_ok());
        assert!(GridSpec::new(8, 8, 8).unwrap().halved().is_none());
    }

    #[test]
    fn permutation_invariance() {
        let g = GridSpec::default();
        let a = certified_c(&Vector4::new(0.0, -1.0, -2.0, -3.0), g, CERTIFY_TOL).unwrap();
        let b = certified_c(&Vector4::new(-3.0, -1.0, 0.0, -2.0), g, CERTIFY_TOL).unwrap();
        assert_relative_eq!(a.c, b.c, max_relative = 1e-8);
    }

    #[test]
    fn shift_factors_out() {
        let g = GridSpec::default();
        let a = brute_force_c(&Vector4::new(0.0, -1.0, -2.0, -3.0), &g).unwrap();
        let b = brute_force_c(&Vector4::new(2.0, 1.0, 0.0, -1.0), &g).unwrap();
        assert_relative_eq!(b.c, a.c * 2f64.exp(), max_relative = 1e-13);
    }

    #[test]
    fn certified_reaches_tolerance() {
        let r = certified_c(&Vector4::new(0.0, -5.0, -20.0, -40.0), GridSpec::default(), CERTIFY_TOL)
            .unwrap();
        assert!(r.convergence_estimate < CERTIFY_TOL, "{r:?}");
    }

    #[test]
    fn monte_carlo_brackets_quadrature() {
        let l = Vector4::new(0.0, -1.0, -2.0, -3.0);
        let (mc, se) = monte_carlo_c(&l, 200_000, 3).unwrap();
        let exact = brute_force_c(&l, &GridSpec::new(64, 64, 128).unwrap()).unwrap().c;
        assert!((mc - exact).abs() < 4.0 * se, "{mc} ± {se} vs {exact}");
    }

    #[test]
    fn finite_diff_quadratic() {
        let g = finite_diff(|x| x.iter().map(|v| v * v).sum(), &[1.0, 2.0], 1e-4);
        assert_relative_eq!(g[0], 2.0, epsilon = 1e-8);
        assert_relative_eq!(g[1], 4.0, epsilon = 1e-8);
    }

    #[test]
    fn finite_diff_step_sensitivity() {
        let f = |x: &[f64]| x[0].exp();
        let coarse = finite_diff(f, &[0.3], 1e-2)[0];
        let fine = finite_diff(f, &[0.3], 5e-3)[0];
        let exact = 0.3f64.exp();
        // central differences lose a factor of about four per halving
        let ratio = (coarse - exact) / (fine - exact);
        assert!((ratio - 4.0).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn cache_keys_and_round_trip() {
        let mut cache = OracleCache::default();
        let l = Vector4::new(0.0, -1.0, -2.5, -3.0);
        let r = brute_force_c(&l, &GridSpec::default()).unwrap();
        cache.insert(&l, r);
        let near = Vector4::new(0.0, -1.0 - 1e-14, -2.5, -3.0);
        assert_eq!(cache.get(&near), Some(&r));
        let json = serde_json::to_string(&cache).unwrap();
        let back: OracleCache = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cache);
    }
}
