//! Analytic loss gradients against central finite differences.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use super::{nll_expression, nll_from_params, nll_grad, outer};
use crate::distribution::BinghamParams;
use crate::error::Result;
use crate::normalizer::{Normalizer, QuadratureConfig};
use crate::oracle::finite_diff;
use crate::parametrization::{canonical_eigen, encode, triu_basis, triu_inverse, Repr, SymmetricMatrix4};
use crate::quaternion::UnitQuaternion;

/// Finite-difference step used by [`check_instance`] callers by default.
pub const DEFAULT_STEP: f64 = 1e-6;

/// Relative errors `max |analytic − fd| / max |fd|` per gradient block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub lambda: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "A")]
    pub a: f64,
    /// One entry per tag in [`Repr::ALL`] order.
    pub theta: Vec<(Repr, f64)>,
    /// `|Σ grad_lambda|`, zero in exact arithmetic.
    pub lambda_sum: f64,
}

impl GradCheck {
    /// Largest relative error over all blocks.
    pub fn max_error(&self) -> f64 {
        self.theta.iter().map(|(_, e)| *e).fold(self.lambda.max(self.d).max(self.a), f64::max)
    }

    /// Elementwise maximum of two checks.
    pub fn merge(&self, other: &GradCheck) -> GradCheck {
        GradCheck {
            lambda: self.lambda.max(other.lambda),
            d: self.d.max(other.d),
            a: self.a.max(other.a),
            theta: self
                .theta
                .iter()
                .zip(&other.theta)
                .map(|((r, a), (_, b))| (*r, a.max(*b)))
                .collect(),
            lambda_sum: self.lambda_sum.max(other.lambda_sum),
        }
    }
}

/// `max |a − b| / max |b|` over a gradient block.
pub fn block_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|y| y.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Compares every gradient block of the loss at `(p, q)` with central
/// differences of step `step`.
pub fn check_instance(
    p: &BinghamParams,
    q: &UnitQuaternion,
    cfg: &QuadratureConfig,
    step: f64,
) -> Result<GradCheck> {
    let norm = Normalizer::new(*cfg)?;
    let m = outer(q);
    let r = nll_grad(p, q, cfg)?;

    let fd_lambda = finite_diff(
        |x| nll_expression(p.d(), &Vector4::from_column_slice(x), q, cfg).unwrap_or(f64::NAN),
        p.lambda().as_slice(),
        step,
    );
    let fd_d = finite_diff(
        |x| nll_expression(&Matrix4::from_column_slice(x), p.lambda(), q, cfg).unwrap_or(f64::NAN),
        p.d().as_slice(),
        step,
    );

    // L as a function of the symmetric matrix A, probed along the
    // upper-triangle basis: ∂L/∂θⱼ = tr(grad_A Bⱼ).
    let loss_at = |x: &[f64]| {
        let am = triu_inverse(x.try_into().expect("ten entries")).to_matrix();
        canonical_eigen(&am)
            .and_then(|pp| norm.evaluate(pp.lambda()).map(|o| (pp, o.c)))
            .map(|(pp, c)| -(pp.a_matrix().component_mul(&m)).sum() + c.ln())
            .unwrap_or(f64::NAN)
    };
    let x0 = SymmetricMatrix4::from_matrix(&p.a_matrix()).entries().to_vec();
    let fd_a = finite_diff(loss_at, &x0, step);
    let an_a: Vec<f64> = (0..10).map(|j| r.grad_a.component_mul(&triu_basis(j)).sum()).collect();

    let theta = Repr::ALL
        .into_iter()
        .map(|repr| {
            let theta = encode(p, repr)?;
            let an = nll_from_params(&theta, q, cfg)?
                .grad_theta
                .expect("parametrized reports carry grad_theta");
            let fd = finite_diff(
                |x| {
                    theta
                        .with_theta(x.to_vec())
                        .and_then(|t| nll_from_params(&t, q, cfg))
                        .map_or(f64::NAN, |r| r.value)
                },
                theta.theta(),
                step,
            );
            Ok((repr, block_error(&an, &fd)))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(GradCheck {
        lambda: block_error(r.grad_lambda.as_slice(), &fd_lambda),
        d: block_error(r.grad_d.as_slice(), &fd_d),
        a: block_error(&an_a, &fd_a),
        theta,
        lambda_sum: r.grad_lambda.sum().abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quaternion::Quaternion;

    #[test]
    fn block_error_scales_by_reference() {
        assert_eq!(block_error(&[1.0, 2.0], &[1.0, 4.0]), 0.5);
        assert_eq!(block_error(&[1e-3], &[0.0]), 1e-3);
    }

    #[test]
    fn gradients_agree_on_a_generic_instance() {
        let u = Quaternion::new(0.3, 0.1, -0.5, 0.8).normalize().unwrap();
        let d = u.quaternion().omega_l();
        let p = BinghamParams::new(d, Vector4::new(0.0, -1.5, -4.0, -11.0)).unwrap();
        let q = Quaternion::new(0.6, -0.2, 0.7, 0.1).normalize().unwrap();
        let c = check_instance(&p, &q, &QuadratureConfig::default(), DEFAULT_STEP).unwrap();
        assert_eq!(c.theta.len(), 5);
        assert!(c.max_error() < 1e-4, "{c:?}");
        let merged = c.merge(&c);
        assert_eq!(merged, c);
    }
}
