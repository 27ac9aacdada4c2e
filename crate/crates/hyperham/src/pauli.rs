//! The Pauli spin equation (spin degrees of freedom only) as a built-in
//! system: the two-spinor evolution dΨ/dt = i (B·S) Ψ, its R^4 realization
//! dξ/dt = A ξ over the commutant triple, the hyperhamiltonian triple that
//! generates it, and Bloch-vector diagnostics.
//!
//! The dimensional constant κ is set to one; with S the bare Pauli matrices
//! the Bloch vector precesses about a constant field at angular rate 2|B|.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use num_complex::Complex64;

use crate::algebra::CommutantTriple;
use crate::error::{Error, Result};
use crate::hyperkahler::{HamiltonianTriple, HyperhamiltonianSystem, HyperkahlerChart, ScalarField};
use crate::integrate::{integrate_rk4, Trajectory};

/// A magnetic field provider B(t) = (B_x, B_y, B_z).
#[derive(Clone, Debug)]
pub enum MagneticField {
    Constant([f64; 3]),
    /// B(t) = (b cos Ωt, b sin Ωt, B_z): the minimal non-integrable case.
    Rotating {
        transverse: f64,
        rate: f64,
        axial: f64,
    },
    /// Linear interpolation between samples, clamped outside the domain.
    Tabulated {
        times: Vec<f64>,
        values: Vec<[f64; 3]>,
    },
}

impl MagneticField {
    pub fn tabulated(times: Vec<f64>, values: Vec<[f64; 3]>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::InvalidTable {
                reason: "need one value per time, at least one sample",
            });
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidTable {
                reason: "times must be strictly increasing",
            });
        }
        if times.iter().any(|t| !t.is_finite())
            || values.iter().flatten().any(|v| !v.is_finite())
        {
            return Err(Error::InvalidTable {
                reason: "entries must be finite",
            });
        }
        Ok(MagneticField::Tabulated { times, values })
    }

    pub fn at(&self, t: f64) -> [f64; 3] {
        match self {
            MagneticField::Constant(b) => *b,
            MagneticField::Rotating {
                transverse,
                rate,
                axial,
            } => {
                let phase = rate * t;
                [
                    transverse * phase.cos(),
                    transverse * phase.sin(),
                    *axial,
                ]
            }
            MagneticField::Tabulated { times, values } => {
                if t <= times[0] {
                    return values[0];
                }
                if t >= *times.last().unwrap() {
                    return *values.last().unwrap();
                }
                let i = match times.binary_search_by(|probe| probe.partial_cmp(&t).unwrap()) {
                    Ok(i) => return values[i],
                    Err(i) => i,
                };
                let (t0, t1) = (times[i - 1], times[i]);
                let w = (t - t0) / (t1 - t0);
                std::array::from_fn(|c| (1.0 - w) * values[i - 1][c] + w * values[i][c])
            }
        }
    }

    /// The constant value, when the field is constant by construction.
    pub fn constant_value(&self) -> Option<[f64; 3]> {
        match self {
            MagneticField::Constant(b) => Some(*b),
            _ => None,
        }
    }

    /// Domain of a tabulated field; queries outside it clamp to the ends.
    pub fn tabulated_domain(&self) -> Option<(f64, f64)> {
        match self {
            MagneticField::Tabulated { times, .. } => {
                Some((times[0], *times.last().unwrap()))
            }
            _ => None,
        }
    }
}

/// A two-component spinor (ψ₊, ψ₋).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Spinor {
    pub plus: Complex64,
    pub minus: Complex64,
}

impl Spinor {
    pub fn new(plus: Complex64, minus: Complex64) -> Self {
        Self { plus, minus }
    }

    /// Rescale to unit norm; the evolution itself never enforces this.
    pub fn normalized(plus: Complex64, minus: Complex64) -> Result<Self> {
        let norm = (plus.norm_sqr() + minus.norm_sqr()).sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroNorm { context: "spinor" });
        }
        Ok(Self {
            plus: plus / norm,
            minus: minus / norm,
        })
    }

    pub fn norm_squared(&self) -> f64 {
        self.plus.norm_sqr() + self.minus.norm_sqr()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// ξ = (χ₊, ζ₊, χ₋, ζ₋): real and imaginary parts in the order used by
    /// the R^4 generator. Norm-preserving bijection.
    pub fn to_r4(&self) -> DVector<f64> {
        DVector::from_vec(vec![self.plus.re, self.plus.im, self.minus.re, self.minus.im])
    }

    pub fn from_r4(xi: &DVector<f64>) -> Result<Self> {
        if xi.len() != 4 {
            return Err(Error::DimensionMismatch {
                context: "spinor components",
                expected: 4,
                got: xi.len(),
            });
        }
        Ok(Self {
            plus: Complex64::new(xi[0], xi[1]),
            minus: Complex64::new(xi[2], xi[3]),
        })
    }
}

/// State labels used by spinor trajectories.
pub fn spinor_labels() -> Vec<String> {
    ["chi_p", "zeta_p", "chi_m", "zeta_m"]
        .into_iter()
        .map(String::from)
        .collect()
}

/// The antisymmetric generator A of dξ/dt = A ξ:
/// A = B_y Khat_1 + B_x Khat_2 + B_z Khat_3.
pub fn pauli_generator(b: [f64; 3]) -> DMatrix<f64> {
    let [bx, by, bz] = b;
    DMatrix::from_row_slice(
        4,
        4,
        &[
            0.0, -bz, by, -bx, //
            bz, 0.0, bx, by, //
            -by, -bx, 0.0, bz, //
            bx, -by, -bz, 0.0,
        ],
    )
}

/// The hamiltonian triple generating the spin flow over the commutant
/// structure: h¹ = ½B_y|ξ|², h² = ½B_x|ξ|², h³ = ½B_z|ξ|².
pub fn pauli_hamiltonians(b: [f64; 3]) -> HamiltonianTriple {
    let coeffs = [b[1], b[0], b[2]];
    HamiltonianTriple::new(std::array::from_fn(|alpha| {
        let c = coeffs[alpha];
        ScalarField::with_gradient(move |x: &DVector<f64>| 0.5 * c * x.norm_squared(), move |x| c * x)
    }))
}

/// The full hyperhamiltonian realization: flat metric, commutant triple as
/// the complex structures, and [`pauli_hamiltonians`]. Its field equals
/// [`pauli_generator`]`(B)·ξ`.
pub fn pauli_system(b: [f64; 3]) -> HyperhamiltonianSystem {
    let chart = HyperkahlerChart::flat_with_triple(CommutantTriple::standard().matrices(), 1)
        .expect("commutant triple is 4x4");
    HyperhamiltonianSystem::new(chart, pauli_hamiltonians(b))
}

/// The 2×2 operator M = B·S of the spinor equation.
fn spin_operator(b: [f64; 3]) -> Matrix2<Complex64> {
    let [bx, by, bz] = b;
    Matrix2::new(
        Complex64::new(bz, 0.0),
        Complex64::new(bx, -by),
        Complex64::new(bx, by),
        Complex64::new(-bz, 0.0),
    )
}

fn spinor_state(v: &Vector2<Complex64>) -> DVector<f64> {
    DVector::from_vec(vec![v[0].re, v[0].im, v[1].re, v[1].im])
}

/// Integrate dΨ/dt = i M(t) Ψ with RK4 in complex arithmetic. The returned
/// trajectory stores the real form (χ₊, ζ₊, χ₋, ζ₋) of each sample.
pub fn evolve_pauli_c2(
    field: &MagneticField,
    psi0: &Spinor,
    t0: f64,
    t1: f64,
    dt: f64,
    stride: usize,
) -> Result<Trajectory> {
    if !(dt > 0.0) {
        return Err(Error::InvalidTimeGrid {
            reason: "dt must be positive",
        });
    }
    if !(t1 > t0) {
        return Err(Error::InvalidTimeGrid {
            reason: "t1 must exceed t0",
        });
    }
    if stride == 0 {
        return Err(Error::InvalidTimeGrid {
            reason: "stride must be positive",
        });
    }
    let i_unit = Complex64::new(0.0, 1.0);
    let rhs = |t: f64, psi: &Vector2<Complex64>| -> Result<Vector2<Complex64>> {
        let b = field.at(t);
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "magnetic field",
            });
        }
        Ok(spin_operator(b) * psi * i_unit)
    };

    let span = t1 - t0;
    let mut n_full = (span / dt).floor() as u64;
    let mut remainder = span - n_full as f64 * dt;
    if remainder <= 1e-12 * dt {
        remainder = 0.0;
    } else if remainder >= dt {
        n_full += 1;
        remainder = 0.0;
    }

    let mut traj = Trajectory::with_labels(4, spinor_labels());
    let mut psi = Vector2::new(psi0.plus, psi0.minus);
    traj.push_sample(t0, spinor_state(&psi))?;
    let step = |t: f64, psi: &Vector2<Complex64>, h: f64| -> Result<Vector2<Complex64>> {
        let half = Complex64::new(0.5 * h, 0.0);
        let full = Complex64::new(h, 0.0);
        let sixth = Complex64::new(h / 6.0, 0.0);
        let two = Complex64::new(2.0, 0.0);
        let k1 = rhs(t, psi)?;
        let k2 = rhs(t + 0.5 * h, &(psi + k1 * half))?;
        let k3 = rhs(t + 0.5 * h, &(psi + k2 * half))?;
        let k4 = rhs(t + h, &(psi + k3 * full))?;
        Ok(psi + (k1 + k2 * two + k3 * two + k4) * sixth)
    };
    for i in 0..n_full {
        let t = t0 + i as f64 * dt;
        psi = step(t, &psi, dt)?;
        let is_last = i + 1 == n_full && remainder == 0.0;
        let t_next = if is_last { t1 } else { t0 + (i + 1) as f64 * dt };
        if (i + 1) % stride as u64 == 0 || is_last {
            traj.push_sample(t_next, spinor_state(&psi))?;
        }
    }
    if remainder > 0.0 {
        let t = t0 + n_full as f64 * dt;
        psi = step(t, &psi, remainder)?;
        traj.push_sample(t1, spinor_state(&psi))?;
    }
    Ok(traj)
}

/// Closed-form spinor evolution for constant B, sampled at `dt_sample`:
/// exp(i t M) = cos(|B| t) I + i sin(|B| t) M / |B|, from M² = |B|² I.
/// Each sample is computed from scratch.
pub fn evolve_pauli_c2_exact(
    b: [f64; 3],
    psi0: &Spinor,
    t0: f64,
    t1: f64,
    dt_sample: f64,
) -> Result<Trajectory> {
    let omega = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
    let m = spin_operator(b);
    let propagate = |dt: f64| -> Vector2<Complex64> {
        let psi = Vector2::new(psi0.plus, psi0.minus);
        if omega == 0.0 {
            return psi;
        }
        let (s, c) = (omega * dt).sin_cos();
        let rotated = m * psi * Complex64::new(0.0, s / omega);
        psi * Complex64::new(c, 0.0) + rotated
    };
    let mut traj = Trajectory::with_labels(4, spinor_labels());
    if t1 == t0 {
        traj.push_sample(t0, spinor_state(&propagate(0.0)))?;
        return Ok(traj);
    }
    if !(t1 > t0) || !(dt_sample > 0.0) {
        return Err(Error::InvalidTimeGrid {
            reason: "need t1 >= t0 and positive sample spacing",
        });
    }
    let mut i = 0u64;
    loop {
        let t = t0 + i as f64 * dt_sample;
        if t >= t1 - 1e-12 * dt_sample {
            break;
        }
        traj.push_sample(t, spinor_state(&propagate(t - t0)))?;
        i += 1;
    }
    traj.push_sample(t1, spinor_state(&propagate(t1 - t0)))?;
    Ok(traj)
}

/// Integrator choice for the R^4 representation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PauliMethod {
    Rk4,
    /// Closed form; only valid for a constant field.
    Exact,
}

/// Evolve the R^4 representation dξ/dt = A(B(t)) ξ.
pub fn evolve_pauli_r4(
    field: &MagneticField,
    xi0: &DVector<f64>,
    t0: f64,
    t1: f64,
    dt: f64,
    method: PauliMethod,
    stride: usize,
) -> Result<Trajectory> {
    if xi0.len() != 4 {
        return Err(Error::DimensionMismatch {
            context: "spin state",
            expected: 4,
            got: xi0.len(),
        });
    }
    match method {
        PauliMethod::Rk4 => {
            let mut traj = integrate_rk4(
                |t, x: &DVector<f64>| pauli_generator(field.at(t)) * x,
                xi0,
                t0,
                t1,
                dt,
                stride,
            )?;
            traj = relabel_spinor(traj)?;
            Ok(traj)
        }
        PauliMethod::Exact => {
            let b = field.constant_value().ok_or(Error::TimeDependentField)?;
            let omega = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
            let a = pauli_generator(b);
            let propagate = |delta: f64| -> DVector<f64> {
                if omega == 0.0 {
                    return xi0.clone();
                }
                let (s, c) = (omega * delta).sin_cos();
                c * xi0 + (s / omega) * (&a * xi0)
            };
            let mut traj = Trajectory::with_labels(4, spinor_labels());
            if t1 == t0 {
                traj.push_sample(t0, propagate(0.0))?;
                return Ok(traj);
            }
            if !(t1 > t0) || !(dt > 0.0) {
                return Err(Error::InvalidTimeGrid {
                    reason: "need t1 >= t0 and positive sample spacing",
                });
            }
            let mut i = 0u64;
            loop {
                let t = t0 + i as f64 * dt;
                if t >= t1 - 1e-12 * dt {
                    break;
                }
                traj.push_sample(t, propagate(t - t0))?;
                i += 1;
            }
            traj.push_sample(t1, propagate(t1 - t0))?;
            Ok(traj)
        }
    }
}

fn relabel_spinor(traj: Trajectory) -> Result<Trajectory> {
    let mut out = Trajectory::with_labels(4, spinor_labels());
    for (t, x) in traj.times().iter().zip(traj.states()) {
        out.push_sample(*t, x.clone())?;
    }
    Ok(out)
}

/// The spin expectation n_a = Ψ† σ_a Ψ; |n| = |Ψ|².
pub fn bloch_vector(psi: &Spinor) -> [f64; 3] {
    let cross = psi.plus.conj() * psi.minus;
    [
        2.0 * cross.re,
        2.0 * cross.im,
        psi.plus.norm_sqr() - psi.minus.norm_sqr(),
    ]
}

/// Bloch vector of a state in the real representation.
pub fn bloch_vector_r4(xi: &DVector<f64>) -> Result<[f64; 3]> {
    Ok(bloch_vector(&Spinor::from_r4(xi)?))
}

/// Attach n_x, n_y, n_z columns computed from a 4-component trajectory.
pub fn attach_bloch(traj: &mut Trajectory) -> Result<()> {
    let mut nx = Vec::with_capacity(traj.len());
    let mut ny = Vec::with_capacity(traj.len());
    let mut nz = Vec::with_capacity(traj.len());
    for x in traj.states() {
        let n = bloch_vector_r4(x)?;
        nx.push(n[0]);
        ny.push(n[1]);
        nz.push(n[2]);
    }
    traj.add_diagnostic("n_x", nx)?;
    traj.add_diagnostic("n_y", ny)?;
    traj.add_diagnostic("n_z", nz)
}

/// Signed angular rate of the Bloch vector's precession about `axis`,
/// measured from a 4-component trajectory by a least-squares fit of the
/// unwrapped transverse phase. Sampling must resolve the rotation (well
/// under half a turn between samples).
pub fn larmor_frequency(traj: &Trajectory, axis: [f64; 3]) -> Result<f64> {
    if traj.len() < 2 {
        return Err(Error::EmptyTrajectory);
    }
    let axis_norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    if axis_norm == 0.0 {
        return Err(Error::ZeroNorm { context: "axis" });
    }
    let n_hat = [axis[0] / axis_norm, axis[1] / axis_norm, axis[2] / axis_norm];
    // Orthonormal frame transverse to the axis.
    let seed = if n_hat[0].abs() <= n_hat[1].abs() && n_hat[0].abs() <= n_hat[2].abs() {
        [1.0, 0.0, 0.0]
    } else if n_hat[1].abs() <= n_hat[2].abs() {
        [0.0, 1.0, 0.0]
    } else {
        [0.0, 0.0, 1.0]
    };
    let dot = seed[0] * n_hat[0] + seed[1] * n_hat[1] + seed[2] * n_hat[2];
    let mut u = [
        seed[0] - dot * n_hat[0],
        seed[1] - dot * n_hat[1],
        seed[2] - dot * n_hat[2],
    ];
    let u_norm = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
    u = [u[0] / u_norm, u[1] / u_norm, u[2] / u_norm];
    let v = [
        n_hat[1] * u[2] - n_hat[2] * u[1],
        n_hat[2] * u[0] - n_hat[0] * u[2],
        n_hat[0] * u[1] - n_hat[1] * u[0],
    ];

    let mut phases = Vec::with_capacity(traj.len());
    for x in traj.states() {
        let n = bloch_vector_r4(x)?;
        let p = n[0] * u[0] + n[1] * u[1] + n[2] * u[2];
        let q = n[0] * v[0] + n[1] * v[1] + n[2] * v[2];
        if (p * p + q * q).sqrt() < 1e-12 {
            return Err(Error::DegeneratePlane);
        }
        phases.push(q.atan2(p));
    }
    // Unwrap.
    let mut unwrapped = Vec::with_capacity(phases.len());
    let mut offset = 0.0;
    unwrapped.push(phases[0]);
    for w in phases.windows(2) {
        let mut delta = w[1] - w[0];
        while delta > std::f64::consts::PI {
            delta -= 2.0 * std::f64::consts::PI;
        }
        while delta < -std::f64::consts::PI {
            delta += 2.0 * std::f64::consts::PI;
        }
        offset += delta;
        unwrapped.push(phases[0] + offset);
    }
    // Least-squares slope.
    let times = traj.times();
    let t_mean = times.iter().sum::<f64>() / times.len() as f64;
    let p_mean = unwrapped.iter().sum::<f64>() / unwrapped.len() as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, p) in times.iter().zip(&unwrapped) {
        num += (t - t_mean) * (p - p_mean);
        den += (t - t_mean) * (t - t_mean);
    }
    if den == 0.0 {
        return Err(Error::InvalidTimeGrid {
            reason: "need at least two distinct sample times",
        });
    }
    Ok(num / den)
}
