//! Constant-coefficient algebraic layer: Clifford generator sets and their
//! validation, the standard quaternion triple on R^4 and its commutant,
//! Kähler two-forms, SO(3) rotations of the triple, and the conserved
//! Hopf-type map.

use nalgebra::{DMatrix, DVector, Matrix3};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::{max_abs, DEFAULT_TOL};

/// Levi-Civita symbol on three 0-based indices.
pub(crate) fn levi_civita(i: usize, j: usize, k: usize) -> f64 {
    match (i, j, k) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

/// For distinct i, j in {0,1,2}, the index completing the triple.
pub(crate) fn third_index(i: usize, j: usize) -> usize {
    3 - i - j
}

/// The 2×2 symplectic matrix `J = [[0, 1], [-1, 0]]`.
///
/// Sign convention: this is the upper-left block of the first standard
/// quaternion generator, so the two-dimensional oscillator embeds as the
/// m = 2 special case of Clifford dynamics with the same orientation.
/// `J² = -I` and `Jᵀ = -J`.
pub fn standard_symplectic_2d() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])
}

/// An ordered family of m×m real antisymmetric matrices that realizes a
/// Clifford algebra: {K_α, K_β} = -2 δ_{αβ} I.
///
/// Construction only checks shapes and the count bound p ≤ m-1; the
/// algebraic relations are checked by [`GeneratorSet::validate`].
#[derive(Clone, Debug)]
pub struct GeneratorSet {
    dim: usize,
    generators: Vec<DMatrix<f64>>,
}

impl GeneratorSet {
    pub fn new(generators: Vec<DMatrix<f64>>) -> Result<Self> {
        let dim = generators.first().ok_or(Error::EmptyGeneratorSet)?.nrows();
        for g in &generators {
            if g.nrows() != dim || g.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    context: "generator set",
                    expected: dim,
                    got: if g.nrows() != dim { g.nrows() } else { g.ncols() },
                });
            }
        }
        if generators.len() > dim.saturating_sub(1) {
            return Err(Error::TooManyGenerators {
                count: generators.len(),
                dim,
                max: dim - 1,
            });
        }
        Ok(Self { dim, generators })
    }

    /// The m = 2 built-in: the single generator {J}.
    pub fn standard_symplectic() -> Self {
        Self {
            dim: 2,
            generators: vec![standard_symplectic_2d()],
        }
    }

    /// The m = 4 built-in: the standard quaternion triple.
    pub fn standard_quaternionic() -> Self {
        QuaternionTriple::standard().into_generator_set()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.generators.len()
    }

    pub fn generator(&self, alpha: usize) -> &DMatrix<f64> {
        &self.generators[alpha]
    }

    pub fn generators(&self) -> &[DMatrix<f64>] {
        &self.generators
    }

    /// Per-generator antisymmetry residuals and per-pair anticommutation
    /// residuals, in the max-abs norm. The set is valid iff every residual
    /// is at most `tol`.
    pub fn validate(&self, tol: f64) -> ValidationReport {
        let identity = DMatrix::<f64>::identity(self.dim, self.dim);
        let antisymmetry: Vec<f64> = self
            .generators
            .iter()
            .map(|k| max_abs(&(k.transpose() + k)))
            .collect();
        let mut anticommutation = Vec::new();
        for alpha in 0..self.count() {
            for beta in alpha..self.count() {
                let ka = &self.generators[alpha];
                let kb = &self.generators[beta];
                let mut anti = ka * kb + kb * ka;
                if alpha == beta {
                    anti += 2.0 * &identity;
                }
                anticommutation.push(PairResidual {
                    alpha,
                    beta,
                    residual: max_abs(&anti),
                });
            }
        }
        let worst = antisymmetry
            .iter()
            .copied()
            .chain(anticommutation.iter().map(|p| p.residual))
            .fold(0.0_f64, f64::max);
        ValidationReport {
            dim: self.dim,
            count: self.count(),
            tol,
            antisymmetry,
            anticommutation,
            max_residual: worst,
            valid: worst <= tol,
        }
    }
}

/// Residual attached to an index pair (0-based).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PairResidual {
    pub alpha: usize,
    pub beta: usize,
    pub residual: f64,
}

/// Outcome of [`GeneratorSet::validate`].
#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub dim: usize,
    pub count: usize,
    pub tol: f64,
    /// Per generator: max |K_αᵀ + K_α|.
    pub antisymmetry: Vec<f64>,
    /// Per pair α ≤ β: max |{K_α, K_β} + 2 δ_{αβ} I|.
    pub anticommutation: Vec<PairResidual>,
    pub max_residual: f64,
    pub valid: bool,
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "generator set: {} generators in dimension {} (tol {:.3e})",
            self.count, self.dim, self.tol
        )?;
        for (alpha, r) in self.antisymmetry.iter().enumerate() {
            writeln!(f, "  antisymmetry K_{}: {:.3e}", alpha + 1, r)?;
        }
        for p in &self.anticommutation {
            writeln!(
                f,
                "  anticommutation (K_{}, K_{}): {:.3e}",
                p.alpha + 1,
                p.beta + 1,
                p.residual
            )?;
        }
        writeln!(f, "  result: {}", if self.valid { "valid" } else { "INVALID" })
    }
}

/// Three 4×4 real matrices satisfying K_α K_β = ε_{αβγ} K_γ - δ_{αβ} I.
#[derive(Clone, Debug, PartialEq)]
pub struct QuaternionTriple {
    matrices: [DMatrix<f64>; 3],
}

impl QuaternionTriple {
    /// The standard representation of the quaternionic imaginary units on R^4.
    pub fn standard() -> Self {
        let k1 = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 1.0, 0.0, 0.0, //
                -1.0, 0.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, 1.0, //
                0.0, 0.0, -1.0, 0.0,
            ],
        );
        let k2 = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 0.0, 0.0, 1.0, //
                0.0, 0.0, 1.0, 0.0, //
                0.0, -1.0, 0.0, 0.0, //
                -1.0, 0.0, 0.0, 0.0,
            ],
        );
        let k3 = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 0.0, 1.0, 0.0, //
                0.0, 0.0, 0.0, -1.0, //
                -1.0, 0.0, 0.0, 0.0, //
                0.0, 1.0, 0.0, 0.0,
            ],
        );
        Self {
            matrices: [k1, k2, k3],
        }
    }

    pub fn new(matrices: [DMatrix<f64>; 3]) -> Result<Self> {
        for m in &matrices {
            if m.nrows() != 4 || m.ncols() != 4 {
                return Err(Error::DimensionMismatch {
                    context: "quaternion triple",
                    expected: 4,
                    got: m.nrows().max(m.ncols()),
                });
            }
        }
        Ok(Self { matrices })
    }

    pub fn matrix(&self, alpha: usize) -> &DMatrix<f64> {
        &self.matrices[alpha]
    }

    pub fn matrices(&self) -> &[DMatrix<f64>; 3] {
        &self.matrices
    }

    pub fn into_generator_set(self) -> GeneratorSet {
        GeneratorSet {
            dim: 4,
            generators: self.matrices.to_vec(),
        }
    }

    /// Σ_α c_α K_α.
    pub fn linear_combination(&self, coeffs: [f64; 3]) -> DMatrix<f64> {
        combine(&self.matrices, coeffs)
    }

    /// Max over (α, β) of |K_α K_β - ε_{αβγ} K_γ + δ_{αβ} I| in max-abs norm.
    pub fn relation_residual(&self) -> f64 {
        triple_relation_residual(&self.matrices)
    }

    /// Rotate the triple: K'_α = Σ_β R_{αβ} K_β. Requires R ∈ SO(3) within `tol`.
    pub fn rotated(&self, r: &Matrix3<f64>, tol: f64) -> Result<Self> {
        require_so3(r, tol)?;
        Ok(Self {
            matrices: rotate_matrices(&self.matrices, r),
        })
    }
}

/// The second su(2) factor of so(4): three 4×4 matrices that commute with
/// every matrix of the standard [`QuaternionTriple`] and satisfy the
/// quaternion relations among themselves.
#[derive(Clone, Debug)]
pub struct CommutantTriple {
    matrices: [DMatrix<f64>; 3],
}

impl CommutantTriple {
    /// The concrete commutant basis used by the spin generator assembly:
    /// Khat_α is the spin generator evaluated at the unit field along axis
    /// y, x, z respectively.
    pub fn standard() -> Self {
        let k1 = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 0.0, 1.0, 0.0, //
                0.0, 0.0, 0.0, 1.0, //
                -1.0, 0.0, 0.0, 0.0, //
                0.0, -1.0, 0.0, 0.0,
            ],
        );
        let k2 = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 0.0, 0.0, -1.0, //
                0.0, 0.0, 1.0, 0.0, //
                0.0, -1.0, 0.0, 0.0, //
                1.0, 0.0, 0.0, 0.0,
            ],
        );
        let k3 = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, -1.0, 0.0, 0.0, //
                1.0, 0.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, 1.0, //
                0.0, 0.0, -1.0, 0.0,
            ],
        );
        Self {
            matrices: [k1, k2, k3],
        }
    }

    pub fn matrix(&self, alpha: usize) -> &DMatrix<f64> {
        &self.matrices[alpha]
    }

    pub fn matrices(&self) -> &[DMatrix<f64>; 3] {
        &self.matrices
    }

    /// Σ_α c_α Khat_α.
    pub fn linear_combination(&self, coeffs: [f64; 3]) -> DMatrix<f64> {
        combine(&self.matrices, coeffs)
    }

    pub fn relation_residual(&self) -> f64 {
        triple_relation_residual(&self.matrices)
    }

    /// Max over (α, β) of |Khat_α K_β - K_β Khat_α|.
    pub fn commutation_residual(&self, triple: &QuaternionTriple) -> f64 {
        let mut worst = 0.0_f64;
        for khat in &self.matrices {
            for k in triple.matrices() {
                worst = worst.max(max_abs(&(khat * k - k * khat)));
            }
        }
        worst
    }
}

fn combine(ms: &[DMatrix<f64>; 3], coeffs: [f64; 3]) -> DMatrix<f64> {
    let mut out = coeffs[0] * &ms[0];
    out += coeffs[1] * &ms[1];
    out += coeffs[2] * &ms[2];
    out
}

fn rotate_matrices(ms: &[DMatrix<f64>; 3], r: &Matrix3<f64>) -> [DMatrix<f64>; 3] {
    std::array::from_fn(|alpha| {
        combine(ms, [r[(alpha, 0)], r[(alpha, 1)], r[(alpha, 2)]])
    })
}

/// Max over (α, β) of |M_α M_β - ε_{αβγ} M_γ + δ_{αβ} I|.
pub(crate) fn triple_relation_residual(ms: &[DMatrix<f64>; 3]) -> f64 {
    let n = ms[0].nrows();
    let identity = DMatrix::<f64>::identity(n, n);
    let mut worst = 0.0_f64;
    for alpha in 0..3 {
        for beta in 0..3 {
            let mut res = &ms[alpha] * &ms[beta];
            if alpha == beta {
                res += &identity;
            } else {
                let gamma = third_index(alpha, beta);
                res -= levi_civita(alpha, beta, gamma) * &ms[gamma];
            }
            worst = worst.max(max_abs(&res));
        }
    }
    worst
}

/// Check R ∈ SO(3) within `tol`: RᵀR = I and det R = +1.
pub fn require_so3(r: &Matrix3<f64>, tol: f64) -> Result<()> {
    let orthogonality = max_abs(&(r.transpose() * r - Matrix3::identity()));
    let det = r.determinant();
    if orthogonality > tol || (det - 1.0).abs() > tol {
        return Err(Error::NotSpecialOrthogonal {
            orthogonality,
            det,
        });
    }
    Ok(())
}

/// An antisymmetric coefficient matrix W representing the two-form
/// ω = (1/2) W_{ij} dx^i ∧ dx^j.
#[derive(Clone, Debug)]
pub struct TwoForm {
    coefficients: DMatrix<f64>,
}

impl TwoForm {
    /// The Kähler two-form associated to an antisymmetric generator: W = K.
    /// Fails if K is not antisymmetric within `tol`.
    pub fn from_generator(k: &DMatrix<f64>, tol: f64) -> Result<Self> {
        if k.nrows() != k.ncols() {
            return Err(Error::DimensionMismatch {
                context: "two-form coefficients",
                expected: k.nrows(),
                got: k.ncols(),
            });
        }
        let residual = max_abs(&(k.transpose() + k));
        if residual > tol {
            return Err(Error::NotAntisymmetric { residual, tol });
        }
        Ok(Self {
            coefficients: k.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.coefficients.nrows()
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    /// The coefficient c in ω ∧ ω = c Ω against the standard volume form of
    /// R^4, i.e. twice the Pfaffian of W. Only defined in dimension 4.
    pub fn wedge_square_coefficient(&self) -> Result<f64> {
        if self.dim() != 4 {
            return Err(Error::DimensionMismatch {
                context: "wedge square",
                expected: 4,
                got: self.dim(),
            });
        }
        let w = &self.coefficients;
        Ok(2.0 * (w[(0, 1)] * w[(2, 3)] - w[(0, 2)] * w[(1, 3)] + w[(0, 3)] * w[(1, 2)]))
    }
}

/// The conserved Hopf-type map of a generator A = Σ n_α K_α with |n| = 1:
/// μ_α(ξ) = ξᵀ (Khat_α A) ξ.
///
/// |μ(ξ)| = |ξ|² and μ is constant along the flow ξ(t) = exp(t ω A) ξ(0),
/// because the commutant matrices commute with A. Fails when A lies outside
/// the span of the standard triple or A² ≠ -I within `tol`.
pub fn hopf_map(xi: &DVector<f64>, a: &DMatrix<f64>, tol: f64) -> Result<[f64; 3]> {
    if xi.len() != 4 {
        return Err(Error::DimensionMismatch {
            context: "hopf map state",
            expected: 4,
            got: xi.len(),
        });
    }
    if a.nrows() != 4 || a.ncols() != 4 {
        return Err(Error::DimensionMismatch {
            context: "hopf map generator",
            expected: 4,
            got: a.nrows().max(a.ncols()),
        });
    }
    let triple = QuaternionTriple::standard();
    // The standard generators are orthonormal for <X, Y> = tr(XᵀY)/4.
    let coeffs: [f64; 3] =
        std::array::from_fn(|alpha| (triple.matrix(alpha).transpose() * a).trace() / 4.0);
    let span_residual = max_abs(&(a - triple.linear_combination(coeffs)));
    if span_residual > tol {
        return Err(Error::OutsideGeneratorSpan {
            residual: span_residual,
            tol,
        });
    }
    let unit_residual = max_abs(&(a * a + DMatrix::<f64>::identity(4, 4)));
    if unit_residual > tol {
        return Err(Error::NotComplexStructure {
            residual: unit_residual,
            tol,
        });
    }
    let commutant = CommutantTriple::standard();
    Ok(std::array::from_fn(|alpha| {
        (xi.transpose() * (commutant.matrix(alpha) * a) * xi)[(0, 0)]
    }))
}

/// Convenience wrapper for [`hopf_map`] with the default tolerance.
pub fn hopf_map_default(xi: &DVector<f64>, a: &DMatrix<f64>) -> Result<[f64; 3]> {
    hopf_map(xi, a, DEFAULT_TOL)
}
