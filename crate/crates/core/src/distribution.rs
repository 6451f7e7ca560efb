//! The Bingham distribution on S³ in canonical form.
//!
//! Density `exp(qᵀ D diag(λ) Dᵀ q) / C(λ)` with `D` orthogonal. Adding a
//! constant to every `λ` leaves the density unchanged, so [`BinghamParams`]
//! always stores the shifted, sorted form `0 = λ₁ ≥ λ₂ ≥ λ₃ ≥ λ₄` with the
//! columns of `D` permuted to match.

use std::fmt;

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{BinghamError, Result};
use crate::quaternion::UnitQuaternion;
use crate::serde_rows;

/// Orthogonality tolerance accepted by [`sort_and_shift`].
pub const ORTHOGONALITY_INPUT_TOL: f64 = 1e-6;

/// Default absolute tolerance for [`classify_symmetry`].
pub const DEFAULT_SYMMETRY_TOL: f64 = 1e-6;

/// Canonical Bingham parameters.
///
/// Serialized as `{"D": [[row], ...], "lambda": [0, λ₂, λ₃, λ₄]}`; parsing
/// canonicalizes whatever pair it is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BinghamParamsJson", into = "BinghamParamsJson")]
pub struct BinghamParams {
    d: Matrix4<f64>,
    lambda: Vector4<f64>,
}

impl BinghamParams {
    /// Canonicalizes an arbitrary `(D, λ)` pair. Same as [`sort_and_shift`].
    pub fn new(d: Matrix4<f64>, lambda: Vector4<f64>) -> Result<Self> {
        sort_and_shift(&d, &lambda)
    }

    /// Identity orientation with the given concentrations.
    pub fn with_lambda(lambda: Vector4<f64>) -> Result<Self> {
        sort_and_shift(&Matrix4::identity(), &lambda)
    }

    pub fn uniform() -> Self {
        BinghamParams {
            d: Matrix4::identity(),
            lambda: Vector4::zeros(),
        }
    }

    /// Orthogonal matrix whose columns are the principal directions.
    pub fn d(&self) -> &Matrix4<f64> {
        &self.d
    }

    /// Concentrations, `λ[0] == 0` and non-increasing.
    pub fn lambda(&self) -> &Vector4<f64> {
        &self.lambda
    }

    /// `A = D diag(λ) Dᵀ`, the shifted parameter matrix.
    pub fn a_matrix(&self) -> Matrix4<f64> {
        let a = self.d * Matrix4::from_diagonal(&self.lambda) * self.d.transpose();
        (a + a.transpose()) * 0.5
    }

    /// Unnormalized log density `qᵀ A q`.
    pub fn exponent(&self, q: &UnitQuaternion) -> f64 {
        let proj = self.d.transpose() * q.to_vector();
        proj.component_mul(&proj).dot(&self.lambda)
    }

    /// Smallest gap between any two concentrations.
    pub fn min_eigen_gap(&self) -> f64 {
        let l = &self.lambda;
        let mut gap = f64::INFINITY;
        for i in 0..4 {
            for j in (i + 1)..4 {
                gap = gap.min((l[i] - l[j]).abs());
            }
        }
        gap
    }
}

#[derive(Serialize, Deserialize)]
struct BinghamParamsJson {
    #[serde(rename = "D")]
    d: [[f64; 4]; 4],
    lambda: [f64; 4],
}

impl TryFrom<BinghamParamsJson> for BinghamParams {
    type Error = BinghamError;

    fn try_from(raw: BinghamParamsJson) -> Result<Self> {
        let d = serde_rows::from_rows(&raw.d);
        sort_and_shift(&d, &Vector4::from(raw.lambda))
    }
}

impl From<BinghamParams> for BinghamParamsJson {
    fn from(p: BinghamParams) -> Self {
        BinghamParamsJson {
            d: serde_rows::to_rows(&p.d),
            lambda: p.lambda.into(),
        }
    }
}

/// Permute the columns of `D` into descending `λ` order and shift `λ` so the
/// largest entry is zero. Ties keep their original column order.
pub fn sort_and_shift(d: &Matrix4<f64>, lambda: &Vector4<f64>) -> Result<BinghamParams> {
    if !d.iter().chain(lambda.iter()).all(|v| v.is_finite()) {
        return Err(BinghamError::invalid("D and lambda must be finite"));
    }
    let err = (d.transpose() * d - Matrix4::identity()).amax();
    if err > ORTHOGONALITY_INPUT_TOL {
        return Err(BinghamError::invalid(format!(
            "D is not orthogonal: max |DᵀD - I| = {err:e}"
        )));
    }
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&a, &b| lambda[b].total_cmp(&lambda[a]));
    let top = lambda[order[0]];
    let mut sorted_d = Matrix4::zeros();
    let mut sorted_l = Vector4::zeros();
    for (k, &src) in order.iter().enumerate() {
        sorted_d.set_column(k, &d.column(src));
        sorted_l[k] = lambda[src] - top;
    }
    Ok(BinghamParams {
        d: sorted_d,
        lambda: sorted_l,
    })
}

/// `ln B(q) = qᵀ A q − ln C`.
pub fn log_pdf(p: &BinghamParams, q: &UnitQuaternion, c: f64) -> Result<f64> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(BinghamError::invalid(format!(
            "normalizing constant must be positive and finite, got {c}"
        )));
    }
    Ok(p.exponent(q) - c.ln())
}

/// Maximizer of the density: the first column of `D`.
pub fn mode(p: &BinghamParams) -> UnitQuaternion {
    UnitQuaternion::from_vector(&p.d.column(0).into_owned())
        .expect("columns of an orthogonal matrix have unit norm")
}

/// `tr(A_shifted) = λ₂ + λ₃ + λ₄`; more negative means more concentrated.
pub fn trace_indicator(p: &BinghamParams) -> f64 {
    p.lambda.sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SymmetryKind {
    Bipolar,
    Circular,
    Spherical,
    Uniform,
}

impl fmt::Display for SymmetryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SymmetryKind::Bipolar => "bipolar",
            SymmetryKind::Circular => "circular",
            SymmetryKind::Spherical => "spherical",
            SymmetryKind::Uniform => "uniform",
        };
        f.write_str(s)
    }
}

/// Shape class together with the margin `λ₂ + λ₃ − λ₄` it was decided on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetryClass {
    pub kind: SymmetryKind,
    pub margin: f64,
}

/// Classify the shape of a canonical distribution from its concentrations.
///
/// The uniform test runs first since `λ = 0` also satisfies the circular one.
pub fn classify_symmetry(p: &BinghamParams, tol: f64) -> SymmetryClass {
    let l = &p.lambda;
    let margin = l[1] + l[2] - l[3];
    let kind = if (l[1] - l[2]).abs() <= tol && (l[2] - l[3]).abs() <= tol {
        SymmetryKind::Uniform
    } else if margin.abs() <= tol {
        SymmetryKind::Circular
    } else if margin < 0.0 {
        SymmetryKind::Bipolar
    } else {
        SymmetryKind::Spherical
    };
    SymmetryClass { kind, margin }
}
