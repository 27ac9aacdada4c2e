//! Pointwise hyperkähler structure handling on coordinate charts: Kähler
//! forms, Poisson tensors, structure and closedness verification, and
//! hyperhamiltonian vector-field assembly.
//!
//! Charts are pointwise evaluators — there is no global manifold
//! representation. Providers must be reentrant (pure functions of x).

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3};
use serde::Serialize;

use crate::algebra::{
    levi_civita, require_so3, third_index, PairResidual, QuaternionTriple,
};
use crate::error::{Error, Result};
use crate::max_abs;

/// Default relative step for central differences (gradients, dW, divergence).
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Reciprocal-condition threshold below which a matrix is treated as
/// singular in linear solves.
pub const RCOND_MIN: f64 = 1e-12;

/// A matrix-valued field on a chart.
pub type MatrixField = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

fn one_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0_f64, f64::max)
}

/// Dense inverse with partial pivoting, rejecting matrices whose reciprocal
/// condition estimate falls below [`RCOND_MIN`].
pub(crate) fn checked_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let norm = one_norm(m);
    let inv = m
        .clone()
        .lu()
        .try_inverse()
        .ok_or(Error::SingularMatrix { rcond: 0.0 })?;
    let rcond = 1.0 / (norm * one_norm(&inv));
    if rcond < RCOND_MIN {
        return Err(Error::SingularMatrix { rcond });
    }
    Ok(inv)
}

/// A chart of dimension 4n carrying a metric field g(x) and three complex
/// structure fields Y_α(x), all evaluated pointwise.
#[derive(Clone)]
pub struct HyperkahlerChart {
    dim: usize,
    metric: MatrixField,
    structures: [MatrixField; 3],
}

impl fmt::Debug for HyperkahlerChart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HyperkahlerChart")
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

impl HyperkahlerChart {
    pub fn new(dim: usize, metric: MatrixField, structures: [MatrixField; 3]) -> Result<Self> {
        if dim == 0 || dim % 4 != 0 {
            return Err(Error::DimensionMismatch {
                context: "chart dimension (must be a positive multiple of 4)",
                expected: 4 * (dim / 4).max(1),
                got: dim,
            });
        }
        Ok(Self {
            dim,
            metric,
            structures,
        })
    }

    /// Flat chart on R^{4n}: g = I and Y_α the standard quaternion triple
    /// repeated block-diagonally.
    pub fn flat(blocks: usize) -> Self {
        Self::flat_with_triple(QuaternionTriple::standard().matrices(), blocks)
            .expect("standard triple is 4x4")
    }

    /// Flat metric with constant Y_α given by any 4×4 triple, repeated
    /// block-diagonally over `blocks` blocks.
    pub fn flat_with_triple(triple: &[DMatrix<f64>; 3], blocks: usize) -> Result<Self> {
        let dim = 4 * blocks;
        let structures: [MatrixField; 3] = std::array::from_fn(|alpha| {
            let block = triple[alpha].clone();
            let field: MatrixField = Arc::new(move |_x: &DVector<f64>| {
                let mut y = DMatrix::zeros(dim, dim);
                for k in 0..blocks {
                    y.view_mut((4 * k, 4 * k), (4, 4)).copy_from(&block);
                }
                y
            });
            field
        });
        let metric: MatrixField = Arc::new(move |_x| DMatrix::identity(dim, dim));
        Self::new(dim, metric, structures)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric_at(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_point(x)?;
        let g = (self.metric)(x);
        self.check_shape(&g, "metric field")?;
        Ok(g)
    }

    pub fn structure_at(&self, x: &DVector<f64>, alpha: usize) -> Result<DMatrix<f64>> {
        self.check_point(x)?;
        let y = (self.structures[alpha])(x);
        self.check_shape(&y, "complex structure field")?;
        Ok(y)
    }

    /// The Kähler form coefficients W_α(x) = g(x) Y_α(x). Fails when the
    /// product is not antisymmetric within `tol` (the pair is not
    /// Kähler-compatible).
    pub fn kahler_form_at(&self, x: &DVector<f64>, alpha: usize, tol: f64) -> Result<DMatrix<f64>> {
        let w = self.metric_at(x)? * self.structure_at(x, alpha)?;
        let residual = max_abs(&(w.transpose() + &w));
        if residual > tol {
            return Err(Error::NotAntisymmetric { residual, tol });
        }
        Ok(w)
    }

    /// The Poisson tensor K_α(x) = -g⁻¹(x) Y_αᵀ(x), the inverse transpose
    /// of the Kähler form.
    pub fn poisson_tensor_at(&self, x: &DVector<f64>, alpha: usize) -> Result<DMatrix<f64>> {
        let g_inv = checked_inverse(&self.metric_at(x)?)?;
        Ok(-g_inv * self.structure_at(x, alpha)?.transpose())
    }

    /// Pointwise algebraic checks: Y_α² = -I, Y_α Y_β = ε_{αβγ} Y_γ,
    /// antisymmetry of W_α = g Y_α, and K_α g K_β = ε_{αβγ} K_γ - δ_{αβ} η
    /// with η = g⁻¹. Check failures land in the report; only evaluation
    /// failures (e.g. a singular metric) are errors.
    pub fn verify_structure_at(&self, x: &DVector<f64>, tol: f64) -> Result<StructureReport> {
        let g = self.metric_at(x)?;
        let eta = checked_inverse(&g)?;
        let y: [DMatrix<f64>; 3] = [
            self.structure_at(x, 0)?,
            self.structure_at(x, 1)?,
            self.structure_at(x, 2)?,
        ];
        let identity = DMatrix::<f64>::identity(self.dim, self.dim);

        let complex_structure: [f64; 3] =
            std::array::from_fn(|a| max_abs(&(&y[a] * &y[a] + &identity)));

        let mut quaternion_relations = Vec::new();
        for alpha in 0..3 {
            for beta in 0..3 {
                if alpha == beta {
                    continue;
                }
                let gamma = third_index(alpha, beta);
                let res = &y[alpha] * &y[beta] - levi_civita(alpha, beta, gamma) * &y[gamma];
                quaternion_relations.push(PairResidual {
                    alpha,
                    beta,
                    residual: max_abs(&res),
                });
            }
        }

        let kahler_antisymmetry: [f64; 3] = std::array::from_fn(|a| {
            let w = &g * &y[a];
            max_abs(&(w.transpose() + &w))
        });

        let k: [DMatrix<f64>; 3] = std::array::from_fn(|a| -(&eta * y[a].transpose()));
        let mut poisson_metric = Vec::new();
        for alpha in 0..3 {
            for beta in 0..3 {
                let mut res = &k[alpha] * &g * &k[beta];
                if alpha == beta {
                    res += &eta;
                } else {
                    let gamma = third_index(alpha, beta);
                    res -= levi_civita(alpha, beta, gamma) * &k[gamma];
                }
                poisson_metric.push(PairResidual {
                    alpha,
                    beta,
                    residual: max_abs(&res),
                });
            }
        }

        let max_residual = complex_structure
            .iter()
            .chain(kahler_antisymmetry.iter())
            .copied()
            .chain(quaternion_relations.iter().map(|p| p.residual))
            .chain(poisson_metric.iter().map(|p| p.residual))
            .fold(0.0_f64, f64::max);

        Ok(StructureReport {
            tol,
            complex_structure,
            quaternion_relations,
            kahler_antisymmetry,
            poisson_metric,
            max_residual,
            pass: max_residual <= tol,
        })
    }

    /// Closedness check of ω_α by central differences: at each point the
    /// 3-form coefficients (dW)_{ijk} = ∂_i W_{jk} + ∂_j W_{ki} + ∂_k W_{ij}
    /// are estimated with per-coordinate step fd_step·(1 + |x_i|).
    pub fn verify_closedness(
        &self,
        points: &[DVector<f64>],
        alpha: usize,
        fd_step: f64,
        tol: f64,
    ) -> Result<ClosednessReport> {
        let dim = self.dim;
        let mut point_residuals = Vec::with_capacity(points.len());
        for x in points {
            self.check_point(x)?;
            // W = gY at the 2·dim stencil points.
            let mut partials: Vec<DMatrix<f64>> = Vec::with_capacity(dim);
            for i in 0..dim {
                let h = fd_step * (1.0 + x[i].abs());
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let wp = self.metric_at(&xp)? * self.structure_at(&xp, alpha)?;
                let wm = self.metric_at(&xm)? * self.structure_at(&xm, alpha)?;
                partials.push((wp - wm) / (2.0 * h));
            }
            let mut worst = 0.0_f64;
            for i in 0..dim {
                for j in (i + 1)..dim {
                    for k in (j + 1)..dim {
                        let dw = partials[i][(j, k)] + partials[j][(k, i)] + partials[k][(i, j)];
                        worst = worst.max(dw.abs());
                    }
                }
            }
            point_residuals.push(worst);
        }
        let max_residual = point_residuals.iter().copied().fold(0.0_f64, f64::max);
        Ok(ClosednessReport {
            alpha,
            fd_step,
            tol,
            point_residuals,
            max_residual,
            pass: max_residual <= tol,
        })
    }

    /// Rotate the structure triple: Y'_α = Σ_β R_{αβ} Y_β. The metric is
    /// unchanged. Requires R ∈ SO(3) within `tol`.
    pub fn rotated(&self, r: &Matrix3<f64>, tol: f64) -> Result<Self> {
        require_so3(r, tol)?;
        Ok(self.rotated_unchecked(r))
    }

    fn rotated_unchecked(&self, r: &Matrix3<f64>) -> Self {
        let structures: [MatrixField; 3] = std::array::from_fn(|alpha| {
            let originals = self.structures.clone();
            let row = [r[(alpha, 0)], r[(alpha, 1)], r[(alpha, 2)]];
            let field: MatrixField = Arc::new(move |x: &DVector<f64>| {
                let mut out = row[0] * (originals[0])(x);
                out += row[1] * (originals[1])(x);
                out += row[2] * (originals[2])(x);
                out
            });
            field
        });
        Self {
            dim: self.dim,
            metric: self.metric.clone(),
            structures,
        }
    }

    fn check_point(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "chart point",
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn check_shape(&self, m: &DMatrix<f64>, context: &'static str) -> Result<()> {
        if m.nrows() != self.dim || m.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.dim,
                got: m.nrows().max(m.ncols()),
            });
        }
        Ok(())
    }
}

/// Pointwise structure residuals; `pass` iff every residual is ≤ `tol`.
#[derive(Clone, Debug, Serialize)]
pub struct StructureReport {
    pub tol: f64,
    /// Per α: max |Y_α² + I|.
    pub complex_structure: [f64; 3],
    /// Per α ≠ β: max |Y_α Y_β - ε_{αβγ} Y_γ|.
    pub quaternion_relations: Vec<PairResidual>,
    /// Per α: max |W_α + W_αᵀ| with W_α = g Y_α.
    pub kahler_antisymmetry: [f64; 3],
    /// Per (α, β): max |K_α g K_β - ε_{αβγ} K_γ + δ_{αβ} η|.
    pub poisson_metric: Vec<PairResidual>,
    pub max_residual: f64,
    pub pass: bool,
}

impl fmt::Display for StructureReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "structure residuals (tol {:.3e}):", self.tol)?;
        for (a, r) in self.complex_structure.iter().enumerate() {
            writeln!(f, "  Y_{}^2 + I: {:.3e}", a + 1, r)?;
        }
        for p in &self.quaternion_relations {
            writeln!(
                f,
                "  Y_{} Y_{} relation: {:.3e}",
                p.alpha + 1,
                p.beta + 1,
                p.residual
            )?;
        }
        for (a, r) in self.kahler_antisymmetry.iter().enumerate() {
            writeln!(f, "  W_{} antisymmetry: {:.3e}", a + 1, r)?;
        }
        for p in &self.poisson_metric {
            writeln!(
                f,
                "  K_{} g K_{} relation: {:.3e}",
                p.alpha + 1,
                p.beta + 1,
                p.residual
            )?;
        }
        writeln!(f, "  result: {}", if self.pass { "pass" } else { "FAIL" })
    }
}

/// Closedness residuals per probe point.
#[derive(Clone, Debug, Serialize)]
pub struct ClosednessReport {
    pub alpha: usize,
    pub fd_step: f64,
    pub tol: f64,
    pub point_residuals: Vec<f64>,
    pub max_residual: f64,
    pub pass: bool,
}

impl fmt::Display for ClosednessReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "closedness of ω_{} over {} points (fd step {:.1e}, tol {:.3e}): max |dW| = {:.3e} — {}",
            self.alpha + 1,
            self.point_residuals.len(),
            self.fd_step,
            self.tol,
            self.max_residual,
            if self.pass { "pass" } else { "FAIL" }
        )
    }
}

/// How a scalar function exposes its gradient.
#[derive(Clone)]
pub enum GradientProvider {
    Analytic(Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>),
    /// Central differences with per-coordinate step `step`·(1 + |x_i|).
    CentralDifference { step: f64 },
}

/// A scalar function h(x) with a gradient provider.
#[derive(Clone)]
pub struct ScalarField {
    value: Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>,
    gradient: GradientProvider,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ScalarField(..)")
    }
}

impl ScalarField {
    /// Gradient via central differences with the default step.
    pub fn new(value: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            value: Arc::new(value),
            gradient: GradientProvider::CentralDifference {
                step: DEFAULT_FD_STEP,
            },
        }
    }

    pub fn with_gradient(
        value: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Arc::new(value),
            gradient: GradientProvider::Analytic(Arc::new(gradient)),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::with_gradient(move |_| c, |x| DVector::zeros(x.len()))
    }

    /// h(x) = ½ xᵀ Q x + b·x + c with analytic gradient Q x + b. The
    /// quadratic coefficient is symmetrized.
    pub fn quadratic(q: DMatrix<f64>, b: DVector<f64>, c: f64) -> Result<Self> {
        if q.nrows() != q.ncols() || q.nrows() != b.len() {
            return Err(Error::DimensionMismatch {
                context: "quadratic hamiltonian",
                expected: q.nrows(),
                got: b.len(),
            });
        }
        let q = (q.transpose() + &q) / 2.0;
        let qv = q.clone();
        let bv = b.clone();
        Ok(Self::with_gradient(
            move |x| 0.5 * (x.transpose() * &qv * x)[(0, 0)] + bv.dot(x) + c,
            move |x| &q * x + &b,
        ))
    }

    pub fn value_at(&self, x: &DVector<f64>) -> f64 {
        (self.value)(x)
    }

    pub fn gradient_at(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.gradient {
            GradientProvider::Analytic(g) => g(x),
            GradientProvider::CentralDifference { step } => {
                let mut grad = DVector::zeros(x.len());
                for i in 0..x.len() {
                    let h = step * (1.0 + x[i].abs());
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    grad[i] = ((self.value)(&xp) - (self.value)(&xm)) / (2.0 * h);
                }
                grad
            }
        }
    }

    /// Σ_β c_β h_β with the gradient combined from the constituents.
    pub fn linear_combination(coeffs: [f64; 3], fields: &[ScalarField; 3]) -> Self {
        let for_value = fields.clone();
        let for_grad = fields.clone();
        Self {
            value: Arc::new(move |x| {
                coeffs
                    .iter()
                    .zip(&for_value)
                    .map(|(c, h)| c * h.value_at(x))
                    .sum()
            }),
            gradient: GradientProvider::Analytic(Arc::new(move |x| {
                let mut out = DVector::zeros(x.len());
                for (c, h) in coeffs.iter().zip(&for_grad) {
                    out += *c * h.gradient_at(x);
                }
                out
            })),
        }
    }
}

/// An ordered triple of scalar functions h^α with gradient providers.
#[derive(Clone, Debug)]
pub struct HamiltonianTriple {
    components: [ScalarField; 3],
}

impl HamiltonianTriple {
    pub fn new(components: [ScalarField; 3]) -> Self {
        Self { components }
    }

    /// Three quadratic-plus-linear hamiltonians, the scenario-file subset.
    pub fn quadratic(q: [DMatrix<f64>; 3], b: [DVector<f64>; 3], c: [f64; 3]) -> Result<Self> {
        let [q1, q2, q3] = q;
        let [b1, b2, b3] = b;
        Ok(Self::new([
            ScalarField::quadratic(q1, b1, c[0])?,
            ScalarField::quadratic(q2, b2, c[1])?,
            ScalarField::quadratic(q3, b3, c[2])?,
        ]))
    }

    pub fn component(&self, alpha: usize) -> &ScalarField {
        &self.components[alpha]
    }

    /// Rotate the triple: h'^α = Σ_β R_{αβ} h^β.
    fn rotated_unchecked(&self, r: &Matrix3<f64>) -> Self {
        Self {
            components: std::array::from_fn(|alpha| {
                ScalarField::linear_combination(
                    [r[(alpha, 0)], r[(alpha, 1)], r[(alpha, 2)]],
                    &self.components,
                )
            }),
        }
    }
}

/// A chart plus a hamiltonian triple.
#[derive(Clone, Debug)]
pub struct HyperhamiltonianSystem {
    pub chart: HyperkahlerChart,
    pub hamiltonians: HamiltonianTriple,
}

impl HyperhamiltonianSystem {
    pub fn new(chart: HyperkahlerChart, hamiltonians: HamiltonianTriple) -> Self {
        Self {
            chart,
            hamiltonians,
        }
    }

    /// X_α(x) = K_α(x) ∇h^α(x), the hamiltonian field of h^α with respect
    /// to ω_α (no sum over α).
    pub fn component_field_at(&self, x: &DVector<f64>, alpha: usize) -> Result<DVector<f64>> {
        let grad = self.hamiltonians.component(alpha).gradient_at(x);
        if grad.len() != self.chart.dim() {
            return Err(Error::DimensionMismatch {
                context: "hamiltonian gradient",
                expected: self.chart.dim(),
                got: grad.len(),
            });
        }
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "hamiltonian gradient",
            });
        }
        Ok(self.chart.poisson_tensor_at(x, alpha)? * grad)
    }

    /// The hyperhamiltonian field X = Σ_α X_α.
    pub fn field_at(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let mut out = self.component_field_at(x, 0)?;
        out += self.component_field_at(x, 1)?;
        out += self.component_field_at(x, 2)?;
        Ok(out)
    }

    /// Rotate structures and hamiltonians together; the flow is invariant.
    pub fn rotated(&self, r: &Matrix3<f64>, tol: f64) -> Result<Self> {
        require_so3(r, tol)?;
        Ok(Self {
            chart: self.chart.rotated_unchecked(r),
            hamiltonians: self.hamiltonians.rotated_unchecked(r),
        })
    }

    /// Max over `points` of |X'(x) - X(x)| (max-abs), where X' is the field
    /// of the system rotated by R ∈ SO(3).
    pub fn rotation_equivariance_residual(
        &self,
        r: &Matrix3<f64>,
        points: &[DVector<f64>],
        tol: f64,
    ) -> Result<f64> {
        let rotated = self.rotated(r, tol)?;
        let mut worst = 0.0_f64;
        for x in points {
            let diff = rotated.field_at(x)? - self.field_at(x)?;
            worst = worst.max(max_abs(&diff));
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::QuaternionTriple;
    use crate::DEFAULT_TOL;
    use nalgebra::dvector;

    fn probe() -> DVector<f64> {
        dvector![0.3, -1.2, 0.7, 0.4]
    }

    #[test]
    fn flat_chart_kahler_forms_are_the_generators() {
        let chart = HyperkahlerChart::flat(1);
        let t = QuaternionTriple::standard();
        for alpha in 0..3 {
            let w = chart.kahler_form_at(&probe(), alpha, DEFAULT_TOL).unwrap();
            assert_eq!(max_abs(&(w - t.matrix(alpha))), 0.0);
        }
    }

    #[test]
    fn scaled_metric_scales_the_form() {
        let t = QuaternionTriple::standard();
        let k1 = t.matrix(0).clone();
        let structures: [MatrixField; 3] = [
            Arc::new({
                let k = k1.clone();
                move |_: &DVector<f64>| k.clone()
            }),
            Arc::new({
                let k = t.matrix(1).clone();
                move |_: &DVector<f64>| k.clone()
            }),
            Arc::new({
                let k = t.matrix(2).clone();
                move |_: &DVector<f64>| k.clone()
            }),
        ];
        let chart = HyperkahlerChart::new(
            4,
            Arc::new(|_: &DVector<f64>| 2.0 * DMatrix::identity(4, 4)),
            structures,
        )
        .unwrap();
        let w = chart.kahler_form_at(&probe(), 0, DEFAULT_TOL).unwrap();
        assert_eq!(max_abs(&(w - 2.0 * &k1)), 0.0);
    }

    #[test]
    fn incompatible_metric_is_rejected() {
        // diag(1,2,1,2) does not commute with K1: g K1 loses antisymmetry.
        let mut g = DMatrix::identity(4, 4);
        g[(1, 1)] = 2.0;
        g[(3, 3)] = 2.0;
        let t = QuaternionTriple::standard();
        let structures: [MatrixField; 3] = std::array::from_fn(|a| {
            let k = t.matrix(a).clone();
            let f: MatrixField = Arc::new(move |_| k.clone());
            f
        });
        let chart =
            HyperkahlerChart::new(4, Arc::new(move |_| g.clone()), structures).unwrap();
        assert!(matches!(
            chart.kahler_form_at(&probe(), 0, DEFAULT_TOL),
            Err(Error::NotAntisymmetric { .. })
        ));
    }

    #[test]
    fn poisson_tensor_flat_and_scaled() {
        let chart = HyperkahlerChart::flat(1);
        let t = QuaternionTriple::standard();
        for alpha in 0..3 {
            let k = chart.poisson_tensor_at(&probe(), alpha).unwrap();
            assert!(max_abs(&(k - t.matrix(alpha))) <= 1e-15);
        }
        let structures: [MatrixField; 3] = std::array::from_fn(|a| {
            let k = t.matrix(a).clone();
            let f: MatrixField = Arc::new(move |_| k.clone());
            f
        });
        let chart = HyperkahlerChart::new(
            4,
            Arc::new(|_: &DVector<f64>| 4.0 * DMatrix::identity(4, 4)),
            structures,
        )
        .unwrap();
        let k = chart.poisson_tensor_at(&probe(), 0).unwrap();
        assert!(max_abs(&(k - t.matrix(0) / 4.0)) <= 1e-15);
    }

    #[test]
    fn poisson_tensor_inverts_the_form_for_generic_spd_metric() {
        // g = AAᵀ + I is SPD; K·Wᵀ = I independently of Kähler compatibility.
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.3, -0.1, 0.4, 0.2, //
                0.7, 0.5, -0.3, 0.1, //
                -0.2, 0.6, 0.2, -0.4, //
                0.1, 0.2, 0.5, 0.9,
            ],
        );
        let g = &a * a.transpose() + DMatrix::identity(4, 4);
        let t = QuaternionTriple::standard();
        let structures: [MatrixField; 3] = std::array::from_fn(|al| {
            let k = t.matrix(al).clone();
            let f: MatrixField = Arc::new(move |_| k.clone());
            f
        });
        let chart =
            HyperkahlerChart::new(4, Arc::new(move |_| g.clone()), structures).unwrap();
        let x = probe();
        for alpha in 0..3 {
            let k = chart.poisson_tensor_at(&x, alpha).unwrap();
            let w = chart.metric_at(&x).unwrap() * chart.structure_at(&x, alpha).unwrap();
            let product = &k * w.transpose();
            assert!(max_abs(&(product - DMatrix::identity(4, 4))) <= 1e-10);
        }
    }

    #[test]
    fn singular_metric_is_an_error() {
        let t = QuaternionTriple::standard();
        let structures: [MatrixField; 3] = std::array::from_fn(|a| {
            let k = t.matrix(a).clone();
            let f: MatrixField = Arc::new(move |_| k.clone());
            f
        });
        let chart = HyperkahlerChart::new(
            4,
            Arc::new(|_: &DVector<f64>| DMatrix::zeros(4, 4)),
            structures,
        )
        .unwrap();
        assert!(matches!(
            chart.poisson_tensor_at(&probe(), 0),
            Err(Error::SingularMatrix { .. })
        ));
    }

    #[test]
    fn flat_structure_verifies_exactly() {
        let chart = HyperkahlerChart::flat(2);
        let x = dvector![0.3, -1.2, 0.7, 0.4, 0.9, 0.0, -0.5, 1.1];
        let report = chart.verify_structure_at(&x, 1e-12).unwrap();
        assert!(report.pass);
        assert!(report.max_residual <= 1e-14);
    }

    #[test]
    fn stretched_structure_residual() {
        // Y1 = 1.01 K1 → |Y1² + I| = 1.01² - 1 = 0.0201.
        let t = QuaternionTriple::standard();
        let structures: [MatrixField; 3] = std::array::from_fn(|a| {
            let scale = if a == 0 { 1.01 } else { 1.0 };
            let k = scale * t.matrix(a);
            let f: MatrixField = Arc::new(move |_| k.clone());
            f
        });
        let chart = HyperkahlerChart::new(
            4,
            Arc::new(|_: &DVector<f64>| DMatrix::identity(4, 4)),
            structures,
        )
        .unwrap();
        let report = chart.verify_structure_at(&probe(), 1e-12).unwrap();
        assert!(!report.pass);
        assert!((report.complex_structure[0] - 0.0201).abs() <= 1e-12);
    }

    #[test]
    fn swapped_structures_flip_orientation() {
        let t = QuaternionTriple::standard();
        let order = [0usize, 2, 1]; // swap Y2 and Y3
        let structures: [MatrixField; 3] = std::array::from_fn(|a| {
            let k = t.matrix(order[a]).clone();
            let f: MatrixField = Arc::new(move |_| k.clone());
            f
        });
        let chart = HyperkahlerChart::new(
            4,
            Arc::new(|_: &DVector<f64>| DMatrix::identity(4, 4)),
            structures,
        )
        .unwrap();
        let report = chart.verify_structure_at(&probe(), 1e-12).unwrap();
        assert!(!report.pass);
        let worst_pair = report
            .quaternion_relations
            .iter()
            .map(|p| p.residual)
            .fold(0.0_f64, f64::max);
        assert!(worst_pair >= 2.0);
    }

    #[test]
    fn closedness_flat_and_planted_defect() {
        let chart = HyperkahlerChart::flat(1);
        let points = vec![probe(), dvector![1.0, 0.2, -0.3, 0.8]];
        let report = chart.verify_closedness(&points, 0, 1e-5, 1e-12).unwrap();
        assert!(report.pass);
        assert!(report.max_residual <= 1e-12);

        // W' = K1 + x³·E12 has (dW)_{123} = 1.
        let t = QuaternionTriple::standard();
        let k1 = t.matrix(0).clone();
        let structures: [MatrixField; 3] = [
            Arc::new(move |x: &DVector<f64>| {
                let mut w = k1.clone();
                w[(0, 1)] += x[2];
                w[(1, 0)] -= x[2];
                w
            }),
            Arc::new({
                let k = t.matrix(1).clone();
                move |_: &DVector<f64>| k.clone()
            }),
            Arc::new({
                let k = t.matrix(2).clone();
                move |_: &DVector<f64>| k.clone()
            }),
        ];
        let chart = HyperkahlerChart::new(
            4,
            Arc::new(|_: &DVector<f64>| DMatrix::identity(4, 4)),
            structures,
        )
        .unwrap();
        let report = chart
            .verify_closedness(&[probe()], 0, 1e-5, 1e-12)
            .unwrap();
        assert!(!report.pass);
        assert!((report.max_residual - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn closedness_quadratic_closed_form() {
        // W = K1 with W12 replaced by 1 + x1²: still closed, and the
        // central difference is exact on quadratics up to rounding.
        let t = QuaternionTriple::standard();
        let k1 = t.matrix(0).clone();
        let structures: [MatrixField; 3] = [
            Arc::new(move |x: &DVector<f64>| {
                let mut w = k1.clone();
                w[(0, 1)] += x[0] * x[0];
                w[(1, 0)] -= x[0] * x[0];
                w
            }),
            Arc::new({
                let k = t.matrix(1).clone();
                move |_: &DVector<f64>| k.clone()
            }),
            Arc::new({
                let k = t.matrix(2).clone();
                move |_: &DVector<f64>| k.clone()
            }),
        ];
        let chart = HyperkahlerChart::new(
            4,
            Arc::new(|_: &DVector<f64>| DMatrix::identity(4, 4)),
            structures,
        )
        .unwrap();
        let report = chart
            .verify_closedness(&[probe()], 0, 1e-5, 1e-9)
            .unwrap();
        assert!(report.pass, "max residual {}", report.max_residual);
    }

    #[test]
    fn component_field_flat_radial() {
        let sys = HyperhamiltonianSystem::new(
            HyperkahlerChart::flat(1),
            HamiltonianTriple::new([
                ScalarField::quadratic(DMatrix::identity(4, 4), DVector::zeros(4), 0.0)
                    .unwrap(), // h1 = ρ/2
                ScalarField::constant(0.0),
                ScalarField::constant(0.0),
            ]),
        );
        let x = probe();
        let expected = QuaternionTriple::standard().matrix(0) * &x;
        let field = sys.component_field_at(&x, 0).unwrap();
        assert!(max_abs(&(field - expected)) <= 1e-15);
        assert_eq!(sys.component_field_at(&x, 1).unwrap(), DVector::zeros(4));
        // X = X1 when h2 = h3 = 0.
        let full = sys.field_at(&x).unwrap();
        let again = sys.component_field_at(&x, 0).unwrap();
        assert_eq!(full, again);
    }

    #[test]
    fn contraction_recovers_the_gradient() {
        // W_αᵀ X_α = ∇h^α for random quadratic h.
        let q = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.2, 0.3, -0.1, 0.4, //
                0.3, 0.9, 0.2, -0.3, //
                -0.1, 0.2, 1.5, 0.1, //
                0.4, -0.3, 0.1, 0.8,
            ],
        );
        let b = dvector![0.2, -0.7, 0.1, 0.5];
        let sys = HyperhamiltonianSystem::new(
            HyperkahlerChart::flat(1),
            HamiltonianTriple::new([
                ScalarField::quadratic(q.clone(), b.clone(), 0.3).unwrap(),
                ScalarField::constant(0.0),
                ScalarField::constant(0.0),
            ]),
        );
        let x = probe();
        let w = sys.chart.kahler_form_at(&x, 0, DEFAULT_TOL).unwrap();
        let field = sys.component_field_at(&x, 0).unwrap();
        let grad = &q * &x + &b;
        assert!(max_abs(&(w.transpose() * field - grad)) <= 1e-10);
    }

    #[test]
    fn hyperham_field_matches_oscillator_form() {
        // h^α = (ν_α/2) ρ → X = Σ ν_α K_α ξ.
        let nu = [0.7, -1.3, 0.4];
        let qs: [DMatrix<f64>; 3] =
            std::array::from_fn(|a| nu[a] * DMatrix::identity(4, 4));
        let sys = HyperhamiltonianSystem::new(
            HyperkahlerChart::flat(1),
            HamiltonianTriple::quadratic(
                qs,
                [DVector::zeros(4), DVector::zeros(4), DVector::zeros(4)],
                [0.0; 3],
            )
            .unwrap(),
        );
        let x = probe();
        let t = QuaternionTriple::standard();
        let expected = nu[0] * (t.matrix(0) * &x)
            + nu[1] * (t.matrix(1) * &x)
            + nu[2] * (t.matrix(2) * &x);
        assert!(max_abs(&(sys.field_at(&x).unwrap() - expected)) <= 1e-13);
    }

    #[test]
    fn equivariance_identity_rotation() {
        let sys = HyperhamiltonianSystem::new(
            HyperkahlerChart::flat(1),
            HamiltonianTriple::quadratic(
                std::array::from_fn(|a| (a as f64 + 1.0) * DMatrix::identity(4, 4)),
                [DVector::zeros(4), DVector::zeros(4), DVector::zeros(4)],
                [0.0; 3],
            )
            .unwrap(),
        );
        let residual = sys
            .rotation_equivariance_residual(&Matrix3::identity(), &[probe()], DEFAULT_TOL)
            .unwrap();
        assert_eq!(residual, 0.0);
    }

    #[test]
    fn equivariance_rejects_non_rotation() {
        let sys = HyperhamiltonianSystem::new(
            HyperkahlerChart::flat(1),
            HamiltonianTriple::quadratic(
                std::array::from_fn(|_| DMatrix::identity(4, 4)),
                [DVector::zeros(4), DVector::zeros(4), DVector::zeros(4)],
                [0.0; 3],
            )
            .unwrap(),
        );
        let bad = 2.0 * Matrix3::<f64>::identity();
        assert!(matches!(
            sys.rotation_equivariance_residual(&bad, &[probe()], DEFAULT_TOL),
            Err(Error::NotSpecialOrthogonal { .. })
        ));
    }

    #[test]
    fn scaled_columns_break_invariance() {
        // Bypassing the SO(3) gate with 2R shows the residual is O(|X|).
        let sys = HyperhamiltonianSystem::new(
            HyperkahlerChart::flat(1),
            HamiltonianTriple::quadratic(
                std::array::from_fn(|a| if a == 0 { DMatrix::identity(4, 4) } else { DMatrix::zeros(4, 4) }),
                [DVector::zeros(4), DVector::zeros(4), DVector::zeros(4)],
                [0.0; 3],
            )
            .unwrap(),
        );
        let x = probe();
        let scaled = 2.0 * Matrix3::<f64>::identity();
        let broken = HyperhamiltonianSystem {
            chart: sys.chart.rotated_unchecked(&scaled),
            hamiltonians: sys.hamiltonians.rotated_unchecked(&scaled),
        };
        let field = sys.field_at(&x).unwrap();
        let diff = broken.field_at(&x).unwrap() - &field;
        assert!(max_abs(&diff) >= max_abs(&field));
    }
}
