//! Bingham distributions on the unit-quaternion sphere S³.
//!
//! The centerpiece is [`normalizer`], a table-free evaluation of the
//! normalizing constant `C(λ)` and its gradient by an erfc-windowed
//! Fourier-type quadrature. On top of it sit the negative log-likelihood
//! loss with analytic gradients ([`loss`]), five continuous parametrizations
//! ([`parametrization`]), a rejection sampler ([`sampler`]) and slow
//! brute-force references used for validation ([`oracle`]).

pub mod acceptance;
pub mod distribution;
pub mod error;
pub mod io;
pub mod loss;
pub mod normalizer;
pub mod oracle;
pub mod parametrization;
pub mod quaternion;
pub mod sampler;
mod serde_rows;

pub use distribution::{BinghamParams, SymmetryClass, SymmetryKind};
pub use error::{BinghamError, Result};
pub use loss::LossReport;
pub use normalizer::{NormalizerOutput, QuadratureConfig};
pub use parametrization::{ParamVector, Repr};
pub use quaternion::{Quaternion, UnitQuaternion};
