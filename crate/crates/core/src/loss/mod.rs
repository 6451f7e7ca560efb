//! Bingham negative log-likelihood and its gradients.
//!
//! For a ground-truth rotation `q` the loss is
//! `L = −qᵀ D diag(λ) Dᵀ q + ln C(λ)`. Everything here is written in terms
//! of a moment matrix `M`, which is `q qᵀ` for one observation and the mean
//! scatter matrix when fitting, so the same code serves both.

pub mod check;
mod fit;

use nalgebra::{Matrix4, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::BinghamParams;
use crate::error::{BinghamError, Result};
use crate::normalizer::{Normalizer, QuadratureConfig};
use crate::oracle::finite_diff;
use crate::parametrization::{
    param_jacobian, realize, triu_basis, ParamVector, Repr, EIGEN_GAP_EPS,
};
use crate::quaternion::{Quaternion, UnitQuaternion};
use crate::serde_rows;

pub use fit::{fit_mle, FitResult, OptimizerSettings, MIN_FIT_SAMPLES};

/// Loss value with gradients for every parameter block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub value: f64,
    pub grad_lambda: Vector4<f64>,
    #[serde(rename = "grad_D", with = "serde_rows")]
    pub grad_d: Matrix4<f64>,
    #[serde(rename = "grad_A", with = "serde_rows")]
    pub grad_a: Matrix4<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_theta: Option<Vec<f64>>,
    /// Set when two concentrations are closer than [`EIGEN_GAP_EPS`]. The
    /// value, `grad_lambda` and `grad_D` are unaffected; for `P10` the
    /// `grad_theta` entries then come from finite differences.
    #[serde(default)]
    pub degenerate_eigenvalues: bool,
}

/// How `P10` gradients are chained back to the raw coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum P10Path {
    /// Through `∂L/∂A`; needs no eigenvector derivatives.
    #[default]
    Symmetric,
    /// Through `∂L/∂D` and `∂L/∂λ` with a differentiated eigendecomposition.
    Eigen,
}

/// Threading for the batch functions. Items are independent, so both modes
/// give bitwise identical results; `Sequential` exists for callers that must
/// not touch the thread pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

pub(crate) fn outer(q: &UnitQuaternion) -> Matrix4<f64> {
    let v = q.to_vector();
    v * v.transpose()
}

/// Loss and `(λ, D, A)` gradients for a canonical distribution and moment `m`.
pub(crate) fn report_for_moment(
    p: &BinghamParams,
    m: &Matrix4<f64>,
    norm: &Normalizer,
) -> Result<LossReport> {
    let out = norm.evaluate(p.lambda())?;
    let d = p.d();
    let lambda = p.lambda();
    let g = out.log_gradient();
    let proj = d.transpose() * m * d;
    let value = -proj.diagonal().dot(lambda) + out.c.ln();
    let grad_lambda = -proj.diagonal() + g;
    let grad_d = -2.0 * m * d * Matrix4::from_diagonal(lambda);
    let mut grad_a = -m + d * Matrix4::from_diagonal(&g) * d.transpose();
    grad_a = (grad_a + grad_a.transpose()) * 0.5;
    Ok(LossReport {
        value,
        grad_lambda,
        grad_d,
        grad_a,
        grad_theta: None,
        degenerate_eigenvalues: p.min_eigen_gap() < EIGEN_GAP_EPS,
    })
}

/// `L(p, q_gt)`; equals `−log_pdf(p, q_gt, C)`.
pub fn nll(p: &BinghamParams, q_gt: &UnitQuaternion, cfg: &QuadratureConfig) -> Result<f64> {
    Ok(nll_grad(p, q_gt, cfg)?.value)
}

/// Loss with gradients with respect to `λ`, `D` and `A = D diag(λ) Dᵀ`.
pub fn nll_grad(
    p: &BinghamParams,
    q_gt: &UnitQuaternion,
    cfg: &QuadratureConfig,
) -> Result<LossReport> {
    report_for_moment(p, &outer(q_gt), &Normalizer::new(*cfg)?)
}

/// The loss expression for an arbitrary `(D, λ)`, without canonicalizing.
///
/// `D` need not be orthogonal. Meant for finite-difference checks of
/// `grad_D` and `grad_lambda`, which treat every entry as free.
pub fn nll_expression(
    d: &Matrix4<f64>,
    lambda: &Vector4<f64>,
    q_gt: &UnitQuaternion,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    let v = d.transpose() * q_gt.to_vector();
    let c = Normalizer::new(*cfg)?.evaluate_raw(lambda)?.c;
    Ok(-v.component_mul(&v).dot(lambda) + c.ln())
}

/// Loss of the distribution realized from `theta`, including `grad_theta`.
pub fn nll_from_params(
    theta: &ParamVector,
    q_gt: &UnitQuaternion,
    cfg: &QuadratureConfig,
) -> Result<LossReport> {
    nll_from_params_with(theta, q_gt, cfg, P10Path::default())
}

pub fn nll_from_params_with(
    theta: &ParamVector,
    q_gt: &UnitQuaternion,
    cfg: &QuadratureConfig,
    path: P10Path,
) -> Result<LossReport> {
    param_report(theta, &outer(q_gt), &Normalizer::new(*cfg)?, path)
}

pub(crate) fn param_value(
    theta: &ParamVector,
    m: &Matrix4<f64>,
    norm: &Normalizer,
) -> Result<f64> {
    let p = realize(theta)?;
    let lambda = p.lambda();
    let proj = p.d().transpose() * m * p.d();
    Ok(-proj.diagonal().dot(lambda) + norm.evaluate(lambda)?.c.ln())
}

pub(crate) fn param_report(
    theta: &ParamVector,
    m: &Matrix4<f64>,
    norm: &Normalizer,
    path: P10Path,
) -> Result<LossReport> {
    let p = realize(theta)?;
    let mut report = report_for_moment(&p, m, norm)?;
    let grad = match (theta.repr(), path) {
        (Repr::P10, P10Path::Symmetric) if report.degenerate_eigenvalues => {
            fd_grad_theta(theta, m, norm)?
        }
        (Repr::P10, P10Path::Symmetric) => (0..10)
            .map(|j| report.grad_a.component_mul(&triu_basis(j)).sum())
            .collect(),
        _ => match param_jacobian(theta) {
            Ok(jac) => jac
                .d_rotation
                .iter()
                .zip(&jac.d_lambda)
                .map(|(dd, dl)| report.grad_d.component_mul(dd).sum() + report.grad_lambda.dot(dl))
                .collect(),
            Err(BinghamError::DegenerateEigenvalues { .. }) => fd_grad_theta(theta, m, norm)?,
            Err(e) => return Err(e),
        },
    };
    report.grad_theta = Some(grad);
    Ok(report)
}

fn fd_grad_theta(theta: &ParamVector, m: &Matrix4<f64>, norm: &Normalizer) -> Result<Vec<f64>> {
    let mut failure = None;
    let grad = finite_diff(
        |x| {
            let v = theta
                .with_theta(x.to_vec())
                .and_then(|t| param_value(&t, m, norm));
            v.unwrap_or_else(|e| {
                failure.get_or_insert(e);
                f64::NAN
            })
        },
        theta.theta(),
        1e-6,
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(grad),
    }
}

/// Per-item [`nll_grad`] over `(p, q_gt)` pairs.
pub fn batch_loss(
    items: &[(BinghamParams, UnitQuaternion)],
    cfg: &QuadratureConfig,
    exec: Execution,
) -> Result<Vec<LossReport>> {
    let norm = Normalizer::new(*cfg)?;
    let one = |(p, q): &(BinghamParams, UnitQuaternion)| report_for_moment(p, &outer(q), &norm);
    match exec {
        Execution::Parallel => items.par_iter().map(one).collect(),
        Execution::Sequential => items.iter().map(one).collect(),
    }
}

/// Row-major batch of raw parameter vectors paired with ground-truth
/// quaternions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRequest {
    pub repr: Repr,
    /// `batch × repr.dim()` values.
    pub theta: Vec<f64>,
    /// `batch × 4` values, `(w, x, y, z)` per row.
    pub q_gt: Vec<f64>,
    #[serde(default)]
    pub config: QuadratureConfig,
}

/// Loss values and `grad_theta` rows, `grads` is `batch × dim` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchOutput {
    pub values: Vec<f64>,
    pub grads: Vec<f64>,
    pub dim: usize,
}

impl BatchRequest {
    pub fn len(&self) -> usize {
        self.q_gt.len() / 4
    }

    pub fn is_empty(&self) -> bool {
        self.q_gt.is_empty()
    }

    fn rows(&self) -> Result<Vec<(ParamVector, UnitQuaternion)>> {
        let dim = self.repr.dim();
        if !self.theta.len().is_multiple_of(dim) {
            return Err(BinghamError::invalid(format!(
                "theta buffer has {} values, not a multiple of {dim} for {}",
                self.theta.len(),
                self.repr
            )));
        }
        if !self.q_gt.len().is_multiple_of(4) {
            return Err(BinghamError::invalid(format!(
                "q_gt buffer has {} values, not a multiple of 4",
                self.q_gt.len()
            )));
        }
        let (n_theta, n_q) = (self.theta.len() / dim, self.q_gt.len() / 4);
        if n_theta != n_q {
            return Err(BinghamError::invalid(format!(
                "row count mismatch: {n_theta} theta rows, {n_q} q_gt rows"
            )));
        }
        self.theta
            .chunks_exact(dim)
            .zip(self.q_gt.chunks_exact(4))
            .enumerate()
            .map(|(row, (t, q))| {
                let at_row = |e: BinghamError| BinghamError::invalid(format!("row {row}: {e}"));
                let theta = ParamVector::new(self.repr, t.to_vec()).map_err(at_row)?;
                let raw = Quaternion::new(q[0], q[1], q[2], q[3]);
                let q = UnitQuaternion::coerce(raw).map_err(at_row)?;
                Ok((theta, q))
            })
            .collect()
    }
}

fn run_rows<T: Send>(
    req: &BatchRequest,
    exec: Execution,
    f: impl Fn(&ParamVector, &UnitQuaternion, &Normalizer) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    let rows = req.rows()?;
    let norm = Normalizer::new(req.config)?;
    let one = |(row, (t, q)): (usize, &(ParamVector, UnitQuaternion))| {
        f(t, q, &norm).map_err(|e| match e {
            BinghamError::InvalidParameter(msg) => {
                BinghamError::InvalidParameter(format!("row {row}: {msg}"))
            }
            other => other,
        })
    };
    match exec {
        Execution::Parallel => rows.par_iter().enumerate().map(one).collect(),
        Execution::Sequential => rows.iter().enumerate().map(one).collect(),
    }
}

/// Loss and `grad_theta` for every row; elementwise identical to
/// [`nll_from_params`]. An empty batch yields empty buffers.
pub fn batch_nll_grad(req: &BatchRequest, exec: Execution) -> Result<BatchOutput> {
    let reports = run_rows(req, exec, |t, q, norm| {
        param_report(t, &outer(q), norm, P10Path::default())
    })?;
    let dim = req.repr.dim();
    let mut values = Vec::with_capacity(reports.len());
    let mut grads = Vec::with_capacity(reports.len() * dim);
    for r in reports {
        values.push(r.value);
        grads.extend(r.grad_theta.expect("parametrized reports carry grad_theta"));
    }
    Ok(BatchOutput { values, grads, dim })
}

/// `ln B(q)` for every row of the request.
pub fn batch_log_pdf(req: &BatchRequest, exec: Execution) -> Result<Vec<f64>> {
    run_rows(req, exec, |t, q, norm| param_value(t, &outer(q), norm).map(|v| -v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::{log_pdf, mode};
    use crate::normalizer::normalizing_constant;
    use crate::parametrization::encode;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    fn unit(w: f64, x: f64, y: f64, z: f64) -> UnitQuaternion {
        Quaternion::new(w, x, y, z).normalize().unwrap()
    }

    fn rotated(lambda: [f64; 4]) -> BinghamParams {
        let d = unit(0.3, -0.5, 0.7, 0.2).quaternion().omega_r()
            * unit(0.9, 0.1, 0.2, -0.3).quaternion().omega_l();
        BinghamParams::new(d, Vector4::from(lambda)).unwrap()
    }

    #[test]
    fn uniform_value() {
        let q = unit(0.2, 0.4, -0.1, 0.8);
        let v = nll(&BinghamParams::uniform(), &q, &cfg()).unwrap();
        assert_relative_eq!(v, (2.0 * PI * PI).ln(), epsilon = 1e-8);
        let r = nll_grad(&BinghamParams::uniform(), &q, &cfg()).unwrap();
        let proj = q.to_vector();
        for i in 0..4 {
            assert_relative_eq!(r.grad_lambda[i], -proj[i] * proj[i] + 0.25, epsilon = 1e-8);
        }
        assert!(r.degenerate_eigenvalues);
    }

    #[test]
    fn value_at_mode_is_log_constant() {
        let p = rotated([0.0, -1.0, -2.0, -3.0]);
        let c = normalizing_constant(p.lambda(), &cfg()).unwrap().c;
        let v = nll(&p, &mode(&p), &cfg()).unwrap();
        assert_relative_eq!(v, c.ln(), epsilon = 1e-14);
        assert_relative_eq!(v, -log_pdf(&p, &mode(&p), c).unwrap(), epsilon = 1e-14);
    }

    #[test]
    fn mode_column_minimizes_over_axes() {
        let p = rotated([0.0, -1.0, -2.0, -3.0]);
        let values: Vec<f64> = (0..4)
            .map(|k| {
                let q = UnitQuaternion::from_vector(&p.d().column(k).into_owned()).unwrap();
                nll(&p, &q, &cfg()).unwrap()
            })
            .collect();
        assert!(values[1..].iter().all(|v| *v > values[0]));
        let neg = UnitQuaternion::from_vector(&-p.d().column(0)).unwrap();
        assert_eq!(nll(&p, &neg, &cfg()).unwrap(), values[0]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let p = rotated([0.0, -2.0, -7.5, -31.0]);
        let q = unit(0.5, 0.5, -0.2, 0.6);
        let r = nll_grad(&p, &q, &cfg()).unwrap();
        let lam = finite_diff(
            |x| nll_expression(p.d(), &Vector4::from_column_slice(x), &q, &cfg()).unwrap(),
            p.lambda().as_slice(),
            1e-5,
        );
        for i in 0..4 {
            assert_relative_eq!(r.grad_lambda[i], lam[i], epsilon = 1e-7, max_relative = 1e-5);
        }
        let dm: Vec<f64> = p.d().iter().copied().collect();
        let gd = finite_diff(
            |x| nll_expression(&Matrix4::from_column_slice(x), p.lambda(), &q, &cfg()).unwrap(),
            &dm,
            1e-6,
        );
        for (a, b) in r.grad_d.iter().zip(&gd) {
            assert_relative_eq!(*a, *b, epsilon = 1e-6, max_relative = 1e-5);
        }
        let zero_sum = r.grad_lambda.sum();
        assert!(zero_sum.abs() < 1e-7, "{zero_sum}");
    }

    #[test]
    fn grad_theta_matches_finite_differences() {
        let p = rotated([0.0, -1.5, -4.0, -9.0]);
        let q = unit(-0.3, 0.8, 0.1, 0.4);
        for repr in Repr::ALL {
            let theta = encode(&p, repr).unwrap();
            let r = nll_from_params(&theta, &q, &cfg()).unwrap();
            let fd = finite_diff(
                |x| {
                    let t = theta.with_theta(x.to_vec()).unwrap();
                    nll_from_params(&t, &q, &cfg()).unwrap().value
                },
                theta.theta(),
                1e-6,
            );
            for (a, b) in r.grad_theta.as_ref().unwrap().iter().zip(&fd) {
                assert_relative_eq!(*a, *b, epsilon = 1e-6, max_relative = 1e-4);
            }
        }
    }

    #[test]
    fn p10_paths_agree() {
        let p = rotated([0.0, -1.5, -4.0, -9.0]);
        let q = unit(0.1, 0.2, 0.3, 0.9);
        let theta = encode(&p, Repr::P10).unwrap();
        let a = nll_from_params_with(&theta, &q, &cfg(), P10Path::Symmetric).unwrap();
        let b = nll_from_params_with(&theta, &q, &cfg(), P10Path::Eigen).unwrap();
        for (x, y) in a.grad_theta.unwrap().iter().zip(&b.grad_theta.unwrap()) {
            assert_relative_eq!(*x, *y, epsilon = 1e-7);
        }
    }

    #[test]
    fn p10_value_example() {
        let theta = ParamVector::new(
            Repr::P10,
            vec![0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, -2.0, 0.0, -3.0],
        )
        .unwrap();
        let q = UnitQuaternion::IDENTITY;
        let r = nll_from_params(&theta, &q, &cfg()).unwrap();
        let c = normalizing_constant(&Vector4::new(0.0, -1.0, -2.0, -3.0), &cfg()).unwrap();
        assert_relative_eq!(r.value, c.c.ln(), epsilon = 1e-14);
    }

    #[test]
    fn degenerate_p10_falls_back() {
        let theta = ParamVector::new(
            Repr::P10,
            vec![0.0, 0.0, 0.0, 0.0, -2.0, 0.0, 0.0, -2.0, 0.0, -5.0],
        )
        .unwrap();
        let q = unit(0.4, 0.3, 0.2, 0.1);
        let r = nll_from_params(&theta, &q, &cfg()).unwrap();
        assert!(r.degenerate_eigenvalues);
        assert!(r.grad_theta.unwrap().iter().all(|g| g.is_finite()));
    }

    #[test]
    fn p4p4_uniform_example() {
        let theta = ParamVector::new(Repr::P4p4, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let r = nll_from_params(&theta, &UnitQuaternion::IDENTITY, &cfg()).unwrap();
        assert_relative_eq!(r.value, (2.0 * PI * PI).ln(), epsilon = 1e-8);
    }

    #[test]
    fn batch_matches_scalar_calls() {
        let p = rotated([0.0, -1.0, -3.0, -8.0]);
        let theta = encode(&p, Repr::P6p4).unwrap();
        let qs = [unit(1.0, 0.0, 0.0, 0.0), unit(0.2, -0.4, 0.6, 0.1)];
        let req = BatchRequest {
            repr: Repr::P6p4,
            theta: theta.theta().repeat(2),
            q_gt: qs.iter().flat_map(|q| q.to_array()).collect(),
            config: cfg(),
        };
        let par = batch_nll_grad(&req, Execution::Parallel).unwrap();
        let seq = batch_nll_grad(&req, Execution::Sequential).unwrap();
        assert_eq!(par, seq);
        for (k, q) in qs.iter().enumerate() {
            let one = nll_from_params(&theta, q, &cfg()).unwrap();
            assert_eq!(par.values[k], one.value);
            assert_eq!(&par.grads[k * 10..(k + 1) * 10], &one.grad_theta.unwrap()[..]);
        }
        let lp = batch_log_pdf(&req, Execution::Sequential).unwrap();
        assert_eq!(lp[1], -par.values[1]);
    }

    #[test]
    fn batch_shapes() {
        let empty = BatchRequest {
            repr: Repr::P10,
            theta: vec![],
            q_gt: vec![],
            config: cfg(),
        };
        let out = batch_nll_grad(&empty, Execution::Parallel).unwrap();
        assert!(out.values.is_empty() && out.grads.is_empty());

        let bad = BatchRequest {
            repr: Repr::P4p3,
            theta: vec![0.0; 14],
            q_gt: vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            config: cfg(),
        };
        let err = batch_nll_grad(&bad, Execution::Parallel).unwrap_err();
        assert!(err.to_string().contains("row"), "{err}");
    }

    #[test]
    fn report_json_round_trip() {
        let p = rotated([0.0, -1.0, -2.0, -4.0]);
        let theta = encode(&p, Repr::P4p3).unwrap();
        let r = nll_from_params(&theta, &unit(0.1, 0.9, 0.0, 0.2), &cfg()).unwrap();
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"grad_A\""));
        let back: LossReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }
}
