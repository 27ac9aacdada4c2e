//! Clifford and quaternionic oscillators: block states, coefficient
//! functions of the conserved block radii, the closed-form flow, and the
//! gradient formulation of the same vector field.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::algebra::GeneratorSet;
use crate::error::{Error, Result};
use crate::integrate::Trajectory;
use crate::DEFAULT_TOL;

/// A point ξ ∈ R^{n·m} viewed as n blocks of dimension m.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockState {
    blocks: usize,
    block_dim: usize,
    xi: DVector<f64>,
}

impl BlockState {
    pub fn new(blocks: usize, block_dim: usize, xi: DVector<f64>) -> Result<Self> {
        if xi.len() != blocks * block_dim {
            return Err(Error::DimensionMismatch {
                context: "block state",
                expected: blocks * block_dim,
                got: xi.len(),
            });
        }
        Ok(Self {
            blocks,
            block_dim,
            xi,
        })
    }

    /// Infer the block count from the vector length.
    pub fn from_vector(xi: DVector<f64>, block_dim: usize) -> Result<Self> {
        if block_dim == 0 || xi.len() % block_dim != 0 {
            return Err(Error::DimensionMismatch {
                context: "block state",
                expected: block_dim.max(1),
                got: xi.len(),
            });
        }
        let blocks = xi.len() / block_dim;
        Self::new(blocks, block_dim, xi)
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.xi
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.xi
    }

    pub fn block(&self, k: usize) -> DVector<f64> {
        self.xi.rows(k * self.block_dim, self.block_dim).into_owned()
    }

    /// Squared block radii ρ_k = |ξ_k|².
    pub fn radii(&self) -> Vec<f64> {
        (0..self.blocks)
            .map(|k| self.xi.rows(k * self.block_dim, self.block_dim).norm_squared())
            .collect()
    }
}

/// Coefficient provider ν: (ρ_1, …, ρ_n) → n×p matrix of ν_{kα}.
///
/// Scenario files can express the constant and affine variants; arbitrary
/// coefficients are available through the `Custom` closure.
#[derive(Clone)]
pub enum Coefficients {
    /// ν constant in the radii.
    Constant(DMatrix<f64>),
    /// ν_{kα}(ρ) = c_{kα} + Σ_j ρ_j L_j[k, α].
    Affine {
        constant: DMatrix<f64>,
        linear: Vec<DMatrix<f64>>,
    },
    /// Arbitrary smooth coefficients.
    Custom(Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>),
}

impl fmt::Debug for Coefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficients::Constant(m) => f.debug_tuple("Constant").field(m).finish(),
            Coefficients::Affine { constant, linear } => f
                .debug_struct("Affine")
                .field("constant", constant)
                .field("linear", linear)
                .finish(),
            Coefficients::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl Coefficients {
    /// Single-block constant coefficients.
    pub fn constant_row(row: &[f64]) -> Self {
        Coefficients::Constant(DMatrix::from_row_slice(1, row.len(), row))
    }

    fn evaluate(&self, radii: &[f64]) -> DMatrix<f64> {
        match self {
            Coefficients::Constant(m) => m.clone(),
            Coefficients::Affine { constant, linear } => {
                let mut out = constant.clone();
                for (rho, l) in radii.iter().zip(linear) {
                    out += *rho * l;
                }
                out
            }
            Coefficients::Custom(f) => f(radii),
        }
    }
}

/// ω and the normalized generator of one block: ω = |ν|, A = Σ_α (ν_α/ω) K_α.
///
/// When ω = 0 the block is a rest point: `degenerate` is set, A = 0 and the
/// flow is the identity.
#[derive(Clone, Debug)]
pub struct FrequencyDecomposition {
    pub omega: f64,
    pub generator: DMatrix<f64>,
    pub degenerate: bool,
}

/// Decompose one coefficient row against a generator set.
pub fn frequency_decomposition(
    nu_row: &[f64],
    generators: &GeneratorSet,
) -> Result<FrequencyDecomposition> {
    if nu_row.len() != generators.count() {
        return Err(Error::DimensionMismatch {
            context: "coefficient row",
            expected: generators.count(),
            got: nu_row.len(),
        });
    }
    if nu_row.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "coefficient row",
        });
    }
    let omega = nu_row.iter().map(|v| v * v).sum::<f64>().sqrt();
    let m = generators.dim();
    if omega == 0.0 {
        return Ok(FrequencyDecomposition {
            omega: 0.0,
            generator: DMatrix::zeros(m, m),
            degenerate: true,
        });
    }
    let mut a = DMatrix::zeros(m, m);
    for (nu, k) in nu_row.iter().zip(generators.generators()) {
        a += (nu / omega) * k;
    }
    Ok(FrequencyDecomposition {
        omega,
        generator: a,
        degenerate: false,
    })
}

/// A Clifford oscillator: one generator set shared across n blocks and a
/// coefficient provider over the block radii.
#[derive(Clone, Debug)]
pub struct CliffordOscillator {
    generators: GeneratorSet,
    blocks: usize,
    coefficients: Coefficients,
}

impl CliffordOscillator {
    /// Validates the generator set at `tol` and the coefficient shape.
    pub fn new(
        generators: GeneratorSet,
        blocks: usize,
        coefficients: Coefficients,
        tol: f64,
    ) -> Result<Self> {
        let report = generators.validate(tol);
        if !report.valid {
            return Err(Error::OutsideGeneratorSpan {
                residual: report.max_residual,
                tol,
            });
        }
        let sys = Self {
            generators,
            blocks,
            coefficients,
        };
        // Shape and finiteness probe at unit radii.
        sys.coefficients_at(&vec![1.0; blocks])?;
        Ok(sys)
    }

    /// The p = 3, m = 4 case with the standard triple.
    pub fn quaternionic(blocks: usize, coefficients: Coefficients) -> Result<Self> {
        Self::new(
            GeneratorSet::standard_quaternionic(),
            blocks,
            coefficients,
            DEFAULT_TOL,
        )
    }

    pub fn generators(&self) -> &GeneratorSet {
        &self.generators
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn block_dim(&self) -> usize {
        self.generators.dim()
    }

    pub fn state_dim(&self) -> usize {
        self.blocks * self.generators.dim()
    }

    /// The n×p coefficient matrix at the given radii.
    pub fn coefficients_at(&self, radii: &[f64]) -> Result<DMatrix<f64>> {
        if radii.len() != self.blocks {
            return Err(Error::DimensionMismatch {
                context: "radii",
                expected: self.blocks,
                got: radii.len(),
            });
        }
        let nu = self.coefficients.evaluate(radii);
        if nu.nrows() != self.blocks || nu.ncols() != self.generators.count() {
            return Err(Error::DimensionMismatch {
                context: "coefficient matrix",
                expected: self.blocks * self.generators.count(),
                got: nu.nrows() * nu.ncols(),
            });
        }
        if nu.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "coefficient matrix",
            });
        }
        Ok(nu)
    }

    /// The frequency decomposition of block `k` at the given radii.
    pub fn block_decomposition(&self, radii: &[f64], k: usize) -> Result<FrequencyDecomposition> {
        let nu = self.coefficients_at(radii)?;
        let row: Vec<f64> = nu.row(k).iter().copied().collect();
        frequency_decomposition(&row, &self.generators)
    }

    /// Right-hand side of the evolution equation: block k evolves with
    /// Σ_α ν_{kα}(ρ) K_α ξ_k. This is what numerical integrators consume.
    pub fn field(&self, state: &BlockState) -> Result<DVector<f64>> {
        self.check_state(state)?;
        let nu = self.coefficients_at(&state.radii())?;
        let m = self.block_dim();
        let mut out = DVector::zeros(state.vector().len());
        for k in 0..self.blocks {
            let xi_k = state.vector().rows(k * m, m);
            let mut block = DVector::zeros(m);
            for alpha in 0..self.generators.count() {
                block += nu[(k, alpha)] * (self.generators.generator(alpha) * xi_k);
            }
            out.rows_mut(k * m, m).copy_from(&block);
        }
        Ok(out)
    }

    /// Closed-form flow: per block,
    /// ξ_k(t) = [cos(ω_k t) I + sin(ω_k t) A_k] ξ_k(0),
    /// with ν, ω, A evaluated at the initial radii. The radii are conserved
    /// by the dynamics, so the per-orbit frequencies are constants.
    pub fn exact_flow(&self, state: &BlockState, t: f64) -> Result<BlockState> {
        self.check_state(state)?;
        let radii = state.radii();
        let nu = self.coefficients_at(&radii)?;
        let m = self.block_dim();
        let mut out = DVector::zeros(state.vector().len());
        for k in 0..self.blocks {
            let row: Vec<f64> = nu.row(k).iter().copied().collect();
            let dec = frequency_decomposition(&row, &self.generators)?;
            let xi_k = state.vector().rows(k * m, m).into_owned();
            let propagated = if dec.degenerate {
                xi_k
            } else {
                let (s, c) = (dec.omega * t).sin_cos();
                c * &xi_k + s * (&dec.generator * &xi_k)
            };
            out.rows_mut(k * m, m).copy_from(&propagated);
        }
        BlockState::new(self.blocks, m, out)
    }

    fn check_state(&self, state: &BlockState) -> Result<()> {
        if state.blocks() != self.blocks || state.block_dim() != self.block_dim() {
            return Err(Error::DimensionMismatch {
                context: "oscillator state",
                expected: self.state_dim(),
                got: state.vector().len(),
            });
        }
        Ok(())
    }
}

/// A scalar function of the block radii together with its partial
/// derivatives ∂h/∂ρ_k.
#[derive(Clone)]
pub struct RadialHamiltonian {
    value: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    partials: Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
}

impl fmt::Debug for RadialHamiltonian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("RadialHamiltonian(..)")
    }
}

impl RadialHamiltonian {
    pub fn new(
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        partials: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Arc::new(value),
            partials: Arc::new(partials),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_| c, |radii| vec![0.0; radii.len()])
    }

    pub fn value_at(&self, radii: &[f64]) -> f64 {
        (self.value)(radii)
    }

    pub fn partials_at(&self, radii: &[f64]) -> Vec<f64> {
    (self.partials)(radii)
    }
}

/// The gradient form of the oscillator field: Σ_α K_α ∇h^α for radial
/// h^α. Since ∇ρ_k = 2 ξ_k, block k contributes Σ_α 2 (∂h^α/∂ρ_k) K_α ξ_k;
/// the result equals the coefficient form under ν_{kα} = 2 ∂h^α/∂ρ_k.
pub fn gradient_form_field(
    generators: &GeneratorSet,
    hamiltonians: &[RadialHamiltonian],
    state: &BlockState,
) -> Result<DVector<f64>> {
    if hamiltonians.len() != generators.count() {
        return Err(Error::DimensionMismatch {
            context: "radial hamiltonians",
            expected: generators.count(),
            got: hamiltonians.len(),
        });
    }
    if state.block_dim() != generators.dim() {
        return Err(Error::DimensionMismatch {
            context: "gradient form state",
            expected: generators.dim(),
            got: state.block_dim(),
        });
    }
    let radii = state.radii();
    let m = generators.dim();
    let mut out = DVector::zeros(state.vector().len());
    for (alpha, h) in hamiltonians.iter().enumerate() {
        let partials = h.partials_at(&radii);
        if partials.len() != state.blocks() {
            return Err(Error::DimensionMismatch {
                context: "radial gradient",
                expected: state.blocks(),
                got: partials.len(),
            });
        }
        if partials.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "radial gradient",
            });
        }
        for (k, df) in partials.iter().enumerate() {
            let xi_k = state.vector().rows(k * m, m);
            let contribution = 2.0 * *df * (generators.generator(alpha) * xi_k);
            let mut rows = out.rows_mut(k * m, m);
            rows += contribution;
        }
    }
    Ok(out)
}

/// Max distance of the trajectory samples from the 2-plane spanned by ξ(0)
/// and A ξ(0), for a single-block system with coefficients constant along
/// the orbit. Zero for exact constant-coefficient orbits.
pub fn great_circle_residual(sys: &CliffordOscillator, traj: &Trajectory) -> Result<f64> {
    if sys.blocks() != 1 {
        return Err(Error::DimensionMismatch {
            context: "great circle block count",
            expected: 1,
            got: sys.blocks(),
        });
    }
    let first = traj.states().first().ok_or(Error::EmptyTrajectory)?;
    let state0 = BlockState::new(1, sys.block_dim(), first.clone())?;
    let dec = sys.block_decomposition(&state0.radii(), 0)?;
    if dec.degenerate || first.norm() == 0.0 {
        return Err(Error::DegeneratePlane);
    }
    let u1 = first / first.norm();
    let v = &dec.generator * first;
    // A ξ0 ⟂ ξ0 by antisymmetry; orthonormalize anyway.
    let w = &v - u1.dot(&v) * &u1;
    if w.norm() == 0.0 {
        return Err(Error::DegeneratePlane);
    }
    let u2 = &w / w.norm();
    let mut worst = 0.0_f64;
    for x in traj.states() {
        let off_plane = x - x.dot(&u1) * &u1 - x.dot(&u2) * &u2;
        worst = worst.max(off_plane.norm());
    }
    Ok(worst)
}
