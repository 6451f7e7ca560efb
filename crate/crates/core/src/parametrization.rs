//! Continuous maps from unconstrained vectors to Bingham parameters.
//!
//! Two orientation maps (quaternion left multiplication, Cayley transform) and
//! two concentration maps (sorted shift, cumulative softplus) give four
//! factored parametrizations; the fifth reads a symmetric matrix directly:
//!
//! | tag    | dim | orientation | concentrations |
//! |--------|-----|-------------|----------------|
//! | `P10`  | 10  | eigenvectors of `triu⁻¹(θ)` | eigenvalues |
//! | `P4+3` | 7   | `birdal(θ[..4])` | `lambda3(θ[4..])` |
//! | `P4+4` | 8   | `birdal(θ[..4])` | `lambda4(θ[4..])` |
//! | `P6+3` | 9   | `cayley(θ[..6])` | `lambda3(θ[6..])` |
//! | `P6+4` | 10  | `cayley(θ[..6])` | `lambda4(θ[6..])` |

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use serde::{Deserialize, Serialize};

use crate::distribution::{sort_and_shift, BinghamParams};
use crate::error::{BinghamError, Result};
use crate::quaternion::{Quaternion, NORMALIZE_EPS};

/// Eigenvalue gap below which eigenvector derivatives are refused.
pub const EIGEN_GAP_EPS: f64 = 1e-8;

/// Parametrization tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Repr {
    #[serde(rename = "P10")]
    P10,
    #[serde(rename = "P4+3")]
    P4p3,
    #[serde(rename = "P4+4")]
    P4p4,
    #[serde(rename = "P6+3")]
    P6p3,
    #[serde(rename = "P6+4")]
    P6p4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Orientation {
    Birdal,
    Cayley,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Concentration {
    Softplus3,
    Sorted4,
}

impl Repr {
    pub const ALL: [Repr; 5] = [Repr::P10, Repr::P4p3, Repr::P4p4, Repr::P6p3, Repr::P6p4];

    pub fn dim(self) -> usize {
        match self {
            Repr::P10 | Repr::P6p4 => 10,
            Repr::P4p3 => 7,
            Repr::P4p4 => 8,
            Repr::P6p3 => 9,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Repr::P10 => "P10",
            Repr::P4p3 => "P4+3",
            Repr::P4p4 => "P4+4",
            Repr::P6p3 => "P6+3",
            Repr::P6p4 => "P6+4",
        }
    }

    fn factors(self) -> Option<(Orientation, Concentration)> {
        match self {
            Repr::P10 => None,
            Repr::P4p3 => Some((Orientation::Birdal, Concentration::Softplus3)),
            Repr::P4p4 => Some((Orientation::Birdal, Concentration::Sorted4)),
            Repr::P6p3 => Some((Orientation::Cayley, Concentration::Softplus3)),
            Repr::P6p4 => Some((Orientation::Cayley, Concentration::Sorted4)),
        }
    }
}

impl Orientation {
    fn dim(self) -> usize {
        match self {
            Orientation::Birdal => 4,
            Orientation::Cayley => 6,
        }
    }
}

impl fmt::Display for Repr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Repr {
    type Err = BinghamError;

    fn from_str(s: &str) -> Result<Self> {
        Repr::ALL
            .into_iter()
            .find(|r| r.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                BinghamError::invalid(format!(
                    "unknown parametrization `{s}`, expected one of P10, P4+3, P4+4, P6+3, P6+4"
                ))
            })
    }
}

/// Raw parameter vector tagged with its parametrization.
///
/// JSON form: `{"repr": "P4+4", "theta": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamVectorJson", into = "ParamVectorJson")]
pub struct ParamVector {
    repr: Repr,
    theta: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ParamVectorJson {
    repr: Repr,
    theta: Vec<f64>,
}

impl TryFrom<ParamVectorJson> for ParamVector {
    type Error = BinghamError;

    fn try_from(raw: ParamVectorJson) -> Result<Self> {
        ParamVector::new(raw.repr, raw.theta)
    }
}

impl From<ParamVector> for ParamVectorJson {
    fn from(p: ParamVector) -> Self {
        ParamVectorJson {
            repr: p.repr,
            theta: p.theta,
        }
    }
}

impl ParamVector {
    pub fn new(repr: Repr, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != repr.dim() {
            return Err(BinghamError::invalid(format!(
                "{repr} expects {} values, got {}",
                repr.dim(),
                theta.len()
            )));
        }
        if let Some(i) = theta.iter().position(|v| !v.is_finite()) {
            return Err(BinghamError::invalid(format!(
                "theta[{i}] is not finite ({})",
                theta[i]
            )));
        }
        Ok(ParamVector { repr, theta })
    }

    pub fn repr(&self) -> Repr {
        self.repr
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Same tag, new values. Used by finite differences and optimizers.
    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        ParamVector::new(self.repr, theta)
    }
}

/// Upper triangle of a symmetric 4×4 matrix, row-major:
///
/// ```text
/// θ1 θ2 θ3 θ4
///    θ5 θ6 θ7
///       θ8 θ9
///          θ10
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetricMatrix4 {
    entries: [f64; 10],
}

/// `(row, col)` of each stored entry.
const TRIU_INDEX: [(usize, usize); 10] = [
    (0, 0),
    (0, 1),
    (0, 2),
    (0, 3),
    (1, 1),
    (1, 2),
    (1, 3),
    (2, 2),
    (2, 3),
    (3, 3),
];

impl SymmetricMatrix4 {
    pub fn from_matrix(m: &Matrix4<f64>) -> Self {
        let mut entries = [0.0; 10];
        for (e, &(i, j)) in entries.iter_mut().zip(TRIU_INDEX.iter()) {
            *e = 0.5 * (m[(i, j)] + m[(j, i)]);
        }
        SymmetricMatrix4 { entries }
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        for (e, &(i, j)) in self.entries.iter().zip(TRIU_INDEX.iter()) {
            m[(i, j)] = *e;
            m[(j, i)] = *e;
        }
        m
    }

    pub fn entries(&self) -> &[f64; 10] {
        &self.entries
    }
}

/// `triu⁻¹`: place ten values into a symmetric matrix.
pub fn triu_inverse(theta: &[f64; 10]) -> SymmetricMatrix4 {
    SymmetricMatrix4 { entries: *theta }
}

/// `triu`: read the ten independent entries back.
pub fn triu(m: &SymmetricMatrix4) -> [f64; 10] {
    m.entries
}

/// `∂ triu⁻¹(θ) / ∂θ_j`, a constant symmetric basis matrix.
pub fn triu_basis(j: usize) -> Matrix4<f64> {
    let (r, c) = TRIU_INDEX[j];
    let mut m = Matrix4::zeros();
    m[(r, c)] = 1.0;
    m[(c, r)] = 1.0;
    m
}

/// Skew-symmetric matrix used by the Cayley transform.
pub fn skew(theta: &[f64; 6]) -> Matrix4<f64> {
    let [t1, t2, t3, t4, t5, t6] = *theta;
    #[rustfmt::skip]
    let s = Matrix4::new(
        0.0,  t1, -t2,  t3,
        -t1, 0.0,  t4, -t5,
        t2,  -t4, 0.0,  t6,
        -t3,  t5, -t6, 0.0,
    );
    s
}

/// Inverse of [`skew`] on skew-symmetric input (upper triangle is read).
fn unskew(s: &Matrix4<f64>) -> [f64; 6] {
    [
        s[(0, 1)],
        -s[(0, 2)],
        s[(0, 3)],
        s[(1, 2)],
        -s[(1, 3)],
        s[(2, 3)],
    ]
}

fn skew_basis(j: usize) -> Matrix4<f64> {
    let mut t = [0.0; 6];
    t[j] = 1.0;
    skew(&t)
}

/// `(I − S)⁻¹ (I + S)`; orthogonal with determinant one.
pub fn cayley(theta: &[f64; 6]) -> Matrix4<f64> {
    let s = skew(theta);
    let id = Matrix4::identity();
    // I − S is invertible for every real skew-symmetric S.
    let inv = (id - s)
        .try_inverse()
        .expect("I - S is nonsingular for skew-symmetric S");
    inv * (id + s)
}

/// `Ω_L(θ / ‖θ‖)`.
pub fn birdal(theta: &[f64; 4]) -> Result<Matrix4<f64>> {
    let u = Quaternion::new(theta[0], theta[1], theta[2], theta[3]).normalize()?;
    Ok(u.quaternion().omega_l())
}

/// Overflow-safe `ln(1 + eˣ)`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Derivative of [`softplus`].
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`softplus`] for `y > 0`: `ln(eʸ − 1)`.
pub fn softplus_inverse(y: f64) -> f64 {
    let y = y.max(1e-300);
    if y > 30.0 {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

/// Stable descending order; ties keep their input order.
fn descending_order(values: &[f64; 4]) -> [usize; 4] {
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    order
}

/// Sort descending, then shift so the first entry is zero.
pub fn lambda4(theta: &[f64; 4]) -> Vector4<f64> {
    let order = descending_order(theta);
    let top = theta[order[0]];
    Vector4::from_fn(|k, _| theta[order[k]] - top)
}

/// `(0, −φ(θ₁), −φ(θ₁)−φ(θ₂), −φ(θ₁)−φ(θ₂)−φ(θ₃))` with φ the softplus.
pub fn lambda3(theta: &[f64; 3]) -> Vector4<f64> {
    let a = softplus(theta[0]);
    let b = softplus(theta[1]);
    let c = softplus(theta[2]);
    Vector4::new(0.0, -a, -a - b, -a - b - c)
}

fn lambda4_jacobian(theta: &[f64; 4]) -> [[f64; 4]; 4] {
    let order = descending_order(theta);
    let mut jac = [[0.0; 4]; 4];
    for (k, row) in jac.iter_mut().enumerate().skip(1) {
        row[order[k]] += 1.0;
        row[order[0]] -= 1.0;
    }
    jac
}

fn lambda3_jacobian(theta: &[f64; 3]) -> [[f64; 3]; 4] {
    let mut jac = [[0.0; 3]; 4];
    for (k, row) in jac.iter_mut().enumerate().skip(1) {
        for (j, v) in row.iter_mut().enumerate().take(k) {
            *v = -sigmoid(theta[j]);
        }
    }
    jac
}

fn cayley_jacobian(theta: &[f64; 6]) -> [Matrix4<f64>; 6] {
    let s = skew(theta);
    let id = Matrix4::identity();
    let inv = (id - s)
        .try_inverse()
        .expect("I - S is nonsingular for skew-symmetric S");
    let right = inv * (id + s) + id;
    std::array::from_fn(|j| inv * skew_basis(j) * right)
}

fn birdal_jacobian(theta: &[f64; 4]) -> Result<[Matrix4<f64>; 4]> {
    let v = Vector4::from(*theta);
    let n = v.norm();
    if !(n > NORMALIZE_EPS) {
        return Err(BinghamError::DegenerateInput(format!(
            "birdal input has norm {n:e}"
        )));
    }
    let u = v / n;
    Ok(std::array::from_fn(|j| {
        let mut du = -u * u[j];
        du[j] += 1.0;
        Quaternion::from_vector(&(du / n)).omega_l()
    }))
}

fn split<const A: usize, const B: usize>(theta: &[f64]) -> ([f64; A], [f64; B]) {
    let head: [f64; A] = theta[..A].try_into().expect("length checked by ParamVector");
    let tail: [f64; B] = theta[A..A + B]
        .try_into()
        .expect("length checked by ParamVector");
    (head, tail)
}

fn orientation(kind: Orientation, theta: &[f64]) -> Result<Matrix4<f64>> {
    match kind {
        Orientation::Birdal => birdal(&theta[..4].try_into().expect("length checked")),
        Orientation::Cayley => Ok(cayley(&theta[..6].try_into().expect("length checked"))),
    }
}

fn concentrations(kind: Concentration, theta: &[f64]) -> Vector4<f64> {
    match kind {
        Concentration::Softplus3 => lambda3(&theta.try_into().expect("length checked")),
        Concentration::Sorted4 => lambda4(&theta.try_into().expect("length checked")),
    }
}

/// Eigendecomposition of a symmetric matrix in canonical form: columns in
/// descending eigenvalue order, each with its largest-magnitude entry
/// positive, eigenvalues shifted so the largest is zero.
pub fn canonical_eigen(a: &Matrix4<f64>) -> Result<BinghamParams> {
    if !a.iter().all(|v| v.is_finite()) {
        return Err(BinghamError::invalid("symmetric matrix has non-finite entries"));
    }
    let eig = SymmetricEigen::try_new(*a, f64::EPSILON, 10_000).ok_or_else(|| {
        BinghamError::NumericalFailure("symmetric eigendecomposition did not converge".into())
    })?;
    let values: [f64; 4] = eig.eigenvalues.into();
    let order = descending_order(&values);
    let mut d = Matrix4::zeros();
    let mut lambda = Vector4::zeros();
    for (k, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        let pivot = col.iamax();
        if col[pivot] < 0.0 {
            col = -col;
        }
        d.set_column(k, &col);
        lambda[k] = values[src];
    }
    sort_and_shift(&d, &lambda)
}

/// Map a parameter vector to canonical Bingham parameters.
pub fn realize(p: &ParamVector) -> Result<BinghamParams> {
    match p.repr.factors() {
        None => {
            let theta: [f64; 10] = p.theta[..].try_into().expect("length checked");
            canonical_eigen(&triu_inverse(&theta).to_matrix())
        }
        Some((o, c)) => {
            let d = orientation(o, &p.theta)?;
            let lambda = concentrations(c, &p.theta[o.dim()..]);
            sort_and_shift(&d, &lambda)
        }
    }
}

/// Derivatives of the realized `(D, λ)` with respect to each raw coordinate.
///
/// `d_rotation[j]` is `∂D/∂θ_j` and `d_lambda[j]` is `∂λ/∂θ_j`, both in the
/// canonical column order returned by [`realize`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamJacobian {
    pub d_rotation: Vec<Matrix4<f64>>,
    pub d_lambda: Vec<Vector4<f64>>,
}

/// Jacobian of [`realize`].
///
/// For `P10` this differentiates the eigendecomposition and needs every
/// eigenvalue gap to exceed [`EIGEN_GAP_EPS`]; otherwise it returns
/// [`BinghamError::DegenerateEigenvalues`].
pub fn param_jacobian(p: &ParamVector) -> Result<ParamJacobian> {
    let dim = p.repr.dim();
    let Some((o, c)) = p.repr.factors() else {
        return p10_jacobian(p);
    };
    let mut d_rotation = vec![Matrix4::zeros(); dim];
    let mut d_lambda = vec![Vector4::zeros(); dim];
    match o {
        Orientation::Birdal => {
            let (head, _) = split::<4, 0>(&p.theta);
            for (j, m) in birdal_jacobian(&head)?.into_iter().enumerate() {
                d_rotation[j] = m;
            }
        }
        Orientation::Cayley => {
            let (head, _) = split::<6, 0>(&p.theta);
            for (j, m) in cayley_jacobian(&head).into_iter().enumerate() {
                d_rotation[j] = m;
            }
        }
    }
    let off = o.dim();
    let tail = &p.theta[off..];
    match c {
        Concentration::Sorted4 => {
            let jac = lambda4_jacobian(&tail.try_into().expect("length checked"));
            for j in 0..4 {
                d_lambda[off + j] = Vector4::from_fn(|k, _| jac[k][j]);
            }
        }
        Concentration::Softplus3 => {
            let jac = lambda3_jacobian(&tail.try_into().expect("length checked"));
            for j in 0..3 {
                d_lambda[off + j] = Vector4::from_fn(|k, _| jac[k][j]);
            }
        }
    }
    Ok(ParamJacobian {
        d_rotation,
        d_lambda,
    })
}

/// First-order eigenvalue/eigenvector perturbation for the `P10` map.
fn p10_jacobian(p: &ParamVector) -> Result<ParamJacobian> {
    let params = realize(p)?;
    let gap = params.min_eigen_gap();
    if gap < EIGEN_GAP_EPS {
        return Err(BinghamError::DegenerateEigenvalues {
            gap,
            threshold: EIGEN_GAP_EPS,
        });
    }
    let d = params.d();
    let l = params.lambda();
    let mut d_rotation = Vec::with_capacity(10);
    let mut d_lambda = Vec::with_capacity(10);
    for j in 0..10 {
        let proj = d.transpose() * triu_basis(j) * d;
        d_lambda.push(Vector4::from_fn(|k, _| proj[(k, k)] - proj[(0, 0)]));
        let mut dd = Matrix4::zeros();
        for k in 0..4 {
            for m in 0..4 {
                if m != k {
                    let coef = proj[(m, k)] / (l[k] - l[m]);
                    let col = dd.column(k) + d.column(m) * coef;
                    dd.set_column(k, &col);
                }
            }
        }
        d_rotation.push(dd);
    }
    Ok(ParamJacobian {
        d_rotation,
        d_lambda,
    })
}

fn encode_cayley(d: &Matrix4<f64>) -> Result<[f64; 6]> {
    // Column sign flips leave the distribution unchanged; pick the flip with
    // positive determinant that keeps I + D best conditioned.
    let id = Matrix4::identity();
    let mut best: Option<([f64; 6], f64)> = None;
    for mask in 0u32..16 {
        let signs = Vector4::from_fn(|k, _| if mask & (1 << k) != 0 { -1.0 } else { 1.0 });
        let m = d * Matrix4::from_diagonal(&signs);
        if m.determinant() <= 0.0 {
            continue;
        }
        let Some(inv) = (m + id).try_inverse() else {
            continue;
        };
        let s = (m - id) * inv;
        let s = (s - s.transpose()) * 0.5;
        let size = s.amax();
        if best.is_none_or(|(_, b)| size < b) {
            best = Some((unskew(&s), size));
        }
    }
    best.map(|(t, _)| t).ok_or_else(|| {
        BinghamError::NumericalFailure("orthogonal matrix has no Cayley preimage".into())
    })
}

/// Inverse direction of [`realize`]: raw coordinates that reproduce `params`.
///
/// Exact for `P10`, `P6+3` and `P6+4`. The four-dimensional orientation map
/// only reaches matrices of the form `Ω_L(u)`; for those tags the mode
/// `u = D[:, 0]` is kept and the remaining columns follow from it.
pub fn encode(params: &BinghamParams, repr: Repr) -> Result<ParamVector> {
    let l = params.lambda();
    let mut theta = Vec::with_capacity(repr.dim());
    match repr.factors() {
        None => theta.extend_from_slice(&triu(&SymmetricMatrix4::from_matrix(&params.a_matrix()))),
        Some((o, c)) => {
            match o {
                Orientation::Birdal => theta.extend(params.d().column(0).iter().copied()),
                Orientation::Cayley => theta.extend_from_slice(&encode_cayley(params.d())?),
            }
            match c {
                Concentration::Sorted4 => theta.extend(l.iter().copied()),
                Concentration::Softplus3 => {
                    for k in 0..3 {
                        theta.push(softplus_inverse(l[k] - l[k + 1]));
                    }
                }
            }
        }
    }
    ParamVector::new(repr, theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::LN_2;

    fn orthogonality_error(m: &Matrix4<f64>) -> f64 {
        (m.transpose() * m - Matrix4::identity()).amax()
    }

    #[test]
    fn triu_examples() {
        let id = triu_inverse(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
        assert_eq!(id.to_matrix(), Matrix4::identity());
        assert_eq!(triu_inverse(&[0.0; 10]).to_matrix(), Matrix4::zeros());
        let theta = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        let m = triu_inverse(&theta).to_matrix();
        assert_eq!(m[(2, 1)], 6.0);
        assert_eq!(m[(3, 2)], 9.0);
        assert_eq!(triu(&SymmetricMatrix4::from_matrix(&m)), theta);
    }

    #[test]
    fn skew_layout() {
        let s = skew(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let mut expected = Matrix4::zeros();
        expected[(0, 1)] = 1.0;
        expected[(1, 0)] = -1.0;
        assert_eq!(s, expected);
        let t = [0.3, -0.2, 0.5, 1.1, -0.7, 0.05];
        assert_eq!(unskew(&skew(&t)), t);
    }

    #[test]
    fn cayley_examples() {
        assert_eq!(cayley(&[0.0; 6]), Matrix4::identity());
        let c = cayley(&[0.3, -1.2, 0.8, 2.0, -0.1, 0.6]);
        assert!(orthogonality_error(&c) < 1e-12);
        assert_relative_eq!(c.determinant(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn birdal_examples() {
        assert_eq!(birdal(&[1.0, 0.0, 0.0, 0.0]).unwrap(), Matrix4::identity());
        assert_eq!(birdal(&[2.0, 0.0, 0.0, 0.0]).unwrap(), Matrix4::identity());
        let b = birdal(&[0.3, -2.0, 0.7, 1.1]).unwrap();
        assert!(orthogonality_error(&b) < 1e-14);
        assert!(matches!(
            birdal(&[0.0, 1e-13, 0.0, 0.0]),
            Err(BinghamError::DegenerateInput(_))
        ));
    }

    #[test]
    fn lambda4_examples() {
        assert_eq!(lambda4(&[-3.0, -1.0, 0.0, -2.0]), Vector4::new(0.0, -1.0, -2.0, -3.0));
        assert_eq!(lambda4(&[5.0; 4]), Vector4::zeros());
        assert_eq!(
            lambda4(&[10.0, 0.0, -10.0, 20.0]),
            Vector4::new(0.0, -10.0, -20.0, -30.0)
        );
    }

    #[test]
    fn lambda3_examples() {
        let l = lambda3(&[0.0; 3]);
        assert_relative_eq!(l[1], -LN_2, epsilon = 1e-15);
        assert_relative_eq!(l[3], -3.0 * LN_2, epsilon = 1e-15);
        let p1 = 1.0f64.exp().ln_1p();
        let l = lambda3(&[1.0; 3]);
        assert_relative_eq!(l[2], -2.0 * p1, epsilon = 1e-15);
        let far = lambda3(&[-50.0; 3]);
        assert!(far.amax() < 1e-20);
        let mid = lambda3(&[-5.0; 3]);
        assert!(far[3] > mid[3] && mid[3] > l[3]);
    }

    #[test]
    fn softplus_is_overflow_safe() {
        assert_eq!(softplus(800.0), 800.0);
        assert_eq!(softplus(-800.0), 0.0);
        assert_relative_eq!(softplus(0.0), LN_2);
        for y in [1e-9, 0.3, 2.0, 45.0] {
            assert_relative_eq!(softplus(softplus_inverse(y)), y, max_relative = 1e-12);
        }
    }

    #[test]
    fn realize_examples() {
        let p = ParamVector::new(
            Repr::P10,
            vec![0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, -2.0, 0.0, -3.0],
        )
        .unwrap();
        let b = realize(&p).unwrap();
        assert_eq!(*b.lambda(), Vector4::new(0.0, -1.0, -2.0, -3.0));
        assert!((b.d().abs() - Matrix4::identity()).amax() < 1e-15);

        let p = ParamVector::new(Repr::P4p4, vec![1.0, 0.0, 0.0, 0.0, 0.0, -1.0, -2.0, -3.0])
            .unwrap();
        let b = realize(&p).unwrap();
        assert_eq!(*b.d(), Matrix4::identity());
        assert_eq!(*b.lambda(), Vector4::new(0.0, -1.0, -2.0, -3.0));

        let p = ParamVector::new(Repr::P6p3, vec![0.0; 9]).unwrap();
        let b = realize(&p).unwrap();
        assert_eq!(*b.d(), Matrix4::identity());
        assert_relative_eq!(b.lambda()[2], -2.0 * LN_2, epsilon = 1e-15);
    }

    #[test]
    fn p10_reconstructs_shifted_matrix() {
        let theta = vec![0.5, -1.0, 0.3, 2.0, -0.7, 0.25, 1.5, 3.0, -0.4, -2.2];
        let a = triu_inverse(&theta.clone().try_into().unwrap()).to_matrix();
        let b = realize(&ParamVector::new(Repr::P10, theta).unwrap()).unwrap();
        let top = SymmetricEigen::new(a).eigenvalues.max();
        let shifted = a - Matrix4::identity() * top;
        assert!((b.a_matrix() - shifted).amax() < 1e-9);
        for k in 0..4 {
            let col = b.d().column(k);
            assert!(col[col.iamax()] > 0.0);
        }
    }

    #[test]
    fn param_vector_validation() {
        assert!(ParamVector::new(Repr::P4p3, vec![0.0; 8]).is_err());
        assert!(ParamVector::new(Repr::P4p3, vec![f64::NAN; 7]).is_err());
        let json = r#"{"repr":"P6+4","theta":[0,0,0,0,0,0,1,2,3,4]}"#;
        let p: ParamVector = serde_json::from_str(json).unwrap();
        assert_eq!(p.repr(), Repr::P6p4);
        assert!(serde_json::from_str::<ParamVector>(r#"{"repr":"P10","theta":[1]}"#).is_err());
        assert_eq!("p4+3".parse::<Repr>().unwrap(), Repr::P4p3);
        assert!("P5".parse::<Repr>().is_err());
    }

    #[test]
    fn lambda_jacobian_examples() {
        let p = ParamVector::new(Repr::P4p4, vec![1.0, 0.0, 0.0, 0.0, -3.0, -1.0, 0.5, -2.0])
            .unwrap();
        let jac = param_jacobian(&p).unwrap();
        // sorted order is [2, 1, 3, 0] among the concentration inputs
        assert_eq!(jac.d_lambda[4], Vector4::new(0.0, 0.0, 0.0, 1.0));
        assert_eq!(jac.d_lambda[5], Vector4::new(0.0, 1.0, 0.0, 0.0));
        assert_eq!(jac.d_lambda[6], Vector4::new(0.0, -1.0, -1.0, -1.0));
        assert_eq!(jac.d_lambda[7], Vector4::new(0.0, 0.0, 1.0, 0.0));

        let p = ParamVector::new(Repr::P4p3, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let jac = param_jacobian(&p).unwrap();
        assert_eq!(jac.d_lambda[4][1], -0.5);
        assert_eq!(jac.d_lambda[4][3], -0.5);
        assert_eq!(jac.d_lambda[6][2], 0.0);
    }

    #[test]
    fn p10_jacobian_refuses_repeated_eigenvalues() {
        let p = ParamVector::new(
            Repr::P10,
            vec![0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, -1.0, 0.0, -3.0],
        )
        .unwrap();
        assert!(matches!(
            param_jacobian(&p),
            Err(BinghamError::DegenerateEigenvalues { .. })
        ));
    }

    #[test]
    fn encode_round_trips() {
        let truth = realize(
            &ParamVector::new(Repr::P6p4, vec![0.2, -0.4, 0.1, 0.9, -0.3, 0.5, 0.0, -4.0, -9.0, -1.0])
                .unwrap(),
        )
        .unwrap();
        for repr in [Repr::P10, Repr::P6p3, Repr::P6p4] {
            let back = realize(&encode(&truth, repr).unwrap()).unwrap();
            assert!((back.a_matrix() - truth.a_matrix()).amax() < 1e-9, "{repr}");
        }
        let birdal_truth = realize(
            &ParamVector::new(Repr::P4p3, vec![0.3, 0.1, -0.8, 0.2, 1.0, -0.5, 2.0]).unwrap(),
        )
        .unwrap();
        for repr in [Repr::P4p3, Repr::P4p4] {
            let back = realize(&encode(&birdal_truth, repr).unwrap()).unwrap();
            assert!((back.a_matrix() - birdal_truth.a_matrix()).amax() < 1e-9, "{repr}");
        }
    }
}
