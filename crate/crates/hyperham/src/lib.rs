//! Quaternionic integrable systems and hyperhamiltonian dynamics.
//!
//! The crate covers four layers:
//!
//! * [`algebra`] — constant-coefficient Clifford/quaternion generator sets,
//!   their validation, the associated two-forms, SO(3) rotations of the
//!   symplectic triple, and the conserved Hopf-type map on R^4.
//! * [`oscillator`] — Clifford and quaternionic oscillators: block states,
//!   coefficient functions of the conserved radii, the closed-form flow and
//!   the gradient (hamiltonian-triple) formulation of the same field.
//! * [`hyperkahler`] — pointwise hyperkähler structures on coordinate
//!   charts: Kähler forms, Poisson tensors, structure and closedness
//!   verification, and hyperhamiltonian vector-field assembly.
//! * [`integrate`] + [`pauli`] — fixed-step RK4 and exact block propagation
//!   with conservation diagnostics, and the Pauli spin equation as a
//!   built-in system with its two-spinor representation.
//!
//! All residuals throughout the crate are measured in the max-absolute-entry
//! norm, see [`max_abs`].

pub mod algebra;
pub mod error;
pub mod hyperkahler;
pub mod integrate;
pub mod oscillator;
pub mod pauli;

pub use error::{Error, Result};

use nalgebra::{Dim, Matrix, Storage};

/// Default tolerance for validating constant matrices.
///
/// Overridable per call everywhere a tolerance is accepted.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Max-absolute-entry norm, the residual norm used by every check in the
/// crate. Cheap and scale-transparent.
pub fn max_abs<R, C, S>(m: &Matrix<f64, R, C, S>) -> f64
where
    R: Dim,
    C: Dim,
    S: Storage<f64, R, C>,
{
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}
