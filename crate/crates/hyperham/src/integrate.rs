//! Time integration and conservation diagnostics: fixed-step RK4 for any
//! field evaluator, the exact block propagator for oscillator systems, and
//! trajectory-level drift reports.
//!
//! Integration is deterministic: identical inputs produce bit-identical
//! trajectories on a fixed platform.

use std::io::{BufRead, Write};

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::oscillator::{BlockState, CliffordOscillator};

/// A time-stamped sequence of states plus optional per-sample diagnostic
/// columns. Times are strictly increasing and state dimensions uniform.
#[derive(Clone, Debug)]
pub struct Trajectory {
    state_dim: usize,
    state_labels: Vec<String>,
    times: Vec<f64>,
    states: Vec<DVector<f64>>,
    diagnostics: Vec<DiagnosticSeries>,
}

/// One named per-sample diagnostic column.
#[derive(Clone, Debug)]
pub struct DiagnosticSeries {
    pub name: String,
    pub values: Vec<f64>,
}

impl Trajectory {
    /// Empty trajectory with default state labels `x1..xm`.
    pub fn new(state_dim: usize) -> Self {
        let labels = (1..=state_dim).map(|i| format!("x{i}")).collect();
        Self::with_labels(state_dim, labels)
    }

    pub fn with_labels(state_dim: usize, state_labels: Vec<String>) -> Self {
        assert_eq!(state_labels.len(), state_dim, "one label per component");
        Self {
            state_dim,
            state_labels,
            times: Vec::new(),
            states: Vec::new(),
            diagnostics: Vec::new(),
        }
    }

    pub fn push_sample(&mut self, t: f64, state: DVector<f64>) -> Result<()> {
        if state.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                context: "trajectory sample",
                expected: self.state_dim,
                got: state.len(),
            });
        }
        if let Some(last) = self.times.last() {
            if t <= *last {
                return Err(Error::InvalidTimeGrid {
                    reason: "sample times must be strictly increasing",
                });
            }
        }
        self.times.push(t);
        self.states.push(state);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn state_labels(&self) -> &[String] {
        &self.state_labels
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn first_state(&self) -> Result<&DVector<f64>> {
        self.states.first().ok_or(Error::EmptyTrajectory)
    }

    pub fn last_state(&self) -> Result<&DVector<f64>> {
        self.states.last().ok_or(Error::EmptyTrajectory)
    }

    pub fn diagnostics(&self) -> &[DiagnosticSeries] {
        &self.diagnostics
    }

    /// Attach a diagnostic column; `values` must match the sample count.
    pub fn add_diagnostic(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::DimensionMismatch {
                context: "diagnostic column",
                expected: self.len(),
                got: values.len(),
            });
        }
        self.diagnostics.push(DiagnosticSeries {
            name: name.into(),
            values,
        });
        Ok(())
    }

    /// Compute a diagnostic column from the states and attach it.
    pub fn attach_quantity(&mut self, q: &Quantity) -> Result<()> {
        let values = self
            .states
            .iter()
            .map(|x| q.eval(x))
            .collect::<Result<Vec<f64>>>()?;
        self.add_diagnostic(q.name().to_string(), values)
    }

    /// CSV layout: header `t,<labels...>[,<diagnostic names...>]`, one row
    /// per sample, floats in round-trip scientific notation with 17
    /// significant digits. Locale-independent and byte-stable.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend(self.state_labels.iter().cloned());
        header.extend(self.diagnostics.iter().map(|d| d.name.clone()));
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.len() {
            let mut row = Vec::with_capacity(1 + self.state_dim + self.diagnostics.len());
            row.push(format_float(self.times[i]));
            row.extend(self.states[i].iter().map(|v| format_float(*v)));
            row.extend(self.diagnostics.iter().map(|d| format_float(d.values[i])));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Read the CSV layout back. The first column must be `t`; the next
    /// `state_dim` columns are state components; any remaining columns are
    /// kept as diagnostics.
    pub fn read_csv<R: BufRead>(reader: R, state_dim: usize) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::CsvFormat {
            line: 1,
            reason: "missing header".into(),
        })?;
        let header = header?;
        let columns: Vec<&str> = header.trim_end().split(',').collect();
        if columns.first() != Some(&"t") {
            return Err(Error::CsvFormat {
                line: 1,
                reason: "first column must be t".into(),
            });
        }
        if columns.len() < 1 + state_dim {
            return Err(Error::CsvFormat {
                line: 1,
                reason: format!(
                    "expected at least {} columns for {} state components, found {}",
                    1 + state_dim,
                    state_dim,
                    columns.len()
                ),
            });
        }
        let labels: Vec<String> = columns[1..=state_dim].iter().map(|s| s.to_string()).collect();
        let diag_names: Vec<String> = columns[state_dim + 1..].iter().map(|s| s.to_string()).collect();
        let mut traj = Trajectory::with_labels(state_dim, labels);
        let mut diag_values: Vec<Vec<f64>> = vec![Vec::new(); diag_names.len()];
        for (idx, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim_end().split(',').collect();
            if fields.len() != columns.len() {
                return Err(Error::CsvFormat {
                    line: idx + 1,
                    reason: format!(
                        "expected {} fields, found {}",
                        columns.len(),
                        fields.len()
                    ),
                });
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|_| Error::CsvFormat {
                    line: idx + 1,
                    reason: format!("invalid float {s:?}"),
                })
            };
            let t = parse(fields[0])?;
            let state = fields[1..=state_dim]
                .iter()
                .map(|s| parse(s))
                .collect::<Result<Vec<f64>>>()?;
            traj.push_sample(t, DVector::from_vec(state))?;
            for (j, s) in fields[state_dim + 1..].iter().enumerate() {
                diag_values[j].push(parse(s)?);
            }
        }
        for (name, values) in diag_names.into_iter().zip(diag_values) {
            traj.add_diagnostic(name, values)?;
        }
        Ok(traj)
    }
}

/// 17 significant digits, enough to round-trip any f64.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Classical fixed-step RK4 over `[t0, t1]`. The final step is shortened to
/// land exactly on `t1`; samples are recorded every `stride` steps and at
/// both endpoints. Aborts with [`Error::NonFiniteState`] (carrying the
/// partial trajectory) if the state leaves the finite range.
pub fn integrate_rk4<F>(
    field: F,
    xi0: &DVector<f64>,
    t0: f64,
    t1: f64,
    dt: f64,
    stride: usize,
) -> Result<Trajectory>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
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
    let span = t1 - t0;
    let mut n_full = (span / dt).floor() as u64;
    let mut remainder = span - n_full as f64 * dt;
    if remainder <= 1e-12 * dt {
        remainder = 0.0;
    } else if remainder >= dt {
        // Guard against floor rounding on exact multiples.
        n_full += 1;
        remainder = 0.0;
    }

    let mut traj = Trajectory::new(xi0.len());
    traj.push_sample(t0, xi0.clone())?;
    let mut x = xi0.clone();
    for i in 0..n_full {
        let t = t0 + i as f64 * dt;
        x = rk4_step(&field, t, &x, dt);
        let t_next = if i + 1 == n_full && remainder == 0.0 {
            t1
        } else {
            t0 + (i + 1) as f64 * dt
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState {
                t: t_next,
                partial: Box::new(traj),
            });
        }
        let is_last = i + 1 == n_full && remainder == 0.0;
        if (i + 1) % stride as u64 == 0 || is_last {
            traj.push_sample(t_next, x.clone())?;
        }
    }
    if remainder > 0.0 {
        let t = t0 + n_full as f64 * dt;
        x = rk4_step(&field, t, &x, remainder);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState {
                t: t1,
                partial: Box::new(traj),
            });
        }
        traj.push_sample(t1, x)?;
    }
    Ok(traj)
}

fn rk4_step<F>(field: &F, t: f64, x: &DVector<f64>, h: f64) -> DVector<f64>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let k1 = field(t, x);
    let k2 = field(t + 0.5 * h, &(x + 0.5 * h * &k1));
    let k3 = field(t + 0.5 * h, &(x + 0.5 * h * &k2));
    let k4 = field(t + h, &(x + h * &k3));
    x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// Sample the closed-form oscillator flow at a fixed cadence. Each sample is
/// computed from scratch via cos/sin of ω·(t - t0), so no error accumulates
/// over long horizons. `t0 == t1` produces a single sample.
pub fn integrate_exact_blocks(
    sys: &CliffordOscillator,
    xi0: &BlockState,
    t0: f64,
    t1: f64,
    dt_sample: f64,
) -> Result<Trajectory> {
    let mut traj = Trajectory::new(sys.state_dim());
    if t1 == t0 {
        traj.push_sample(t0, xi0.vector().clone())?;
        return Ok(traj);
    }
    if !(t1 > t0) {
        return Err(Error::InvalidTimeGrid {
            reason: "t1 must not precede t0",
        });
    }
    if !(dt_sample > 0.0) {
        return Err(Error::InvalidTimeGrid {
            reason: "sample spacing must be positive",
        });
    }
    let mut i = 0u64;
    loop {
        let t = t0 + i as f64 * dt_sample;
        if t >= t1 - 1e-12 * dt_sample {
            break;
        }
        traj.push_sample(t, sys.exact_flow(xi0, t - t0)?.into_vector())?;
        i += 1;
    }
    traj.push_sample(t1, sys.exact_flow(xi0, t1 - t0)?.into_vector())?;
    Ok(traj)
}

/// A named scalar function of the state, evaluated along trajectories.
pub struct Quantity {
    name: String,
    eval: Box<dyn Fn(&DVector<f64>) -> Result<f64> + Send + Sync>,
}

impl Quantity {
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            eval: Box::new(move |x| Ok(f(x))),
        }
    }

    pub fn try_new(
        name: impl Into<String>,
        f: impl Fn(&DVector<f64>) -> Result<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            eval: Box::new(f),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<f64> {
        (self.eval)(x)
    }
}

impl std::fmt::Debug for Quantity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Quantity({:?})", self.name)
    }
}

/// Per-quantity drift of a trajectory: max_t |Q(ξ(t)) - Q(ξ(0))|. A quantity
/// passes iff its drift is at most tol·(1 + |Q(ξ(0))|).
pub fn conservation_report(
    traj: &Trajectory,
    quantities: &[Quantity],
    tol: f64,
) -> Result<ConservationReport> {
    let first = traj.first_state()?;
    let mut entries = Vec::with_capacity(quantities.len());
    for q in quantities {
        let initial = q.eval(first)?;
        let mut drift = 0.0_f64;
        for x in traj.states() {
            drift = drift.max((q.eval(x)? - initial).abs());
        }
        entries.push(DriftEntry {
            name: q.name().to_string(),
            initial,
            max_drift: drift,
            pass: drift <= tol * (1.0 + initial.abs()),
        });
    }
    let pass = entries.iter().all(|e| e.pass);
    Ok(ConservationReport { tol, entries, pass })
}

#[derive(Clone, Debug, Serialize)]
pub struct DriftEntry {
    pub name: String,
    pub initial: f64,
    pub max_drift: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConservationReport {
    pub tol: f64,
    pub entries: Vec<DriftEntry>,
    pub pass: bool,
}

impl std::fmt::Display for ConservationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "conservation drifts (tol {:.3e}):", self.tol)?;
        for e in &self.entries {
            writeln!(
                f,
                "  {:<12} initial {:+.6e}  drift {:.3e}  {}",
                e.name,
                e.initial,
                e.max_drift,
                if e.pass { "pass" } else { "FAIL" }
            )?;
        }
        writeln!(f, "  result: {}", if self.pass { "pass" } else { "FAIL" })
    }
}

/// Central-difference estimate of the divergence Σ_i ∂_i X^i at `x`, with
/// per-coordinate step fd_step·(1 + |x_i|).
pub fn divergence_residual<F>(field: F, x: &DVector<f64>, fd_step: f64) -> f64
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut div = 0.0;
    for i in 0..x.len() {
        let h = fd_step * (1.0 + x[i].abs());
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        div += (field(&xp)[i] - field(&xm)[i]) / (2.0 * h);
    }
    div
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oscillator::Coefficients;
    use nalgebra::dvector;

    #[test]
    fn trajectory_invariants() {
        let mut traj = Trajectory::new(2);
        traj.push_sample(0.0, dvector![1.0, 0.0]).unwrap();
        assert!(traj.push_sample(0.0, dvector![1.0, 0.0]).is_err());
        assert!(traj.push_sample(1.0, dvector![1.0, 0.0, 0.0]).is_err());
        traj.push_sample(1.0, dvector![0.5, 0.5]).unwrap();
        assert_eq!(traj.len(), 2);
        assert!(traj.add_diagnostic("d_n", vec![1.0]).is_err());
        traj.add_diagnostic("d_n", vec![1.0, 1.0]).unwrap();
    }

    #[test]
    fn rk4_zero_field_is_constant() {
        let xi0 = dvector![1.0, 2.0];
        let traj = integrate_rk4(
            |_, x: &DVector<f64>| DVector::zeros(x.len()),
            &xi0,
            0.0,
            1.0,
            0.1,
            1,
        )
        .unwrap();
        assert_eq!(traj.len(), 11);
        for x in traj.states() {
            assert_eq!(x, &xi0);
        }
        assert_eq!(*traj.times().last().unwrap(), 1.0);
    }

    #[test]
    fn rk4_partial_final_step() {
        // span 1.05, dt 0.1 → 10 full steps plus a 0.05 step landing on t1.
        let traj = integrate_rk4(
            |_, x: &DVector<f64>| x.clone(),
            &dvector![1.0],
            0.0,
            1.05,
            0.1,
            1,
        )
        .unwrap();
        assert_eq!(*traj.times().last().unwrap(), 1.05);
        let expected = 1.05_f64.exp();
        assert!((traj.last_state().unwrap()[0] - expected).abs() <= 1e-5);
    }

    #[test]
    fn rk4_stride_samples() {
        let traj = integrate_rk4(
            |_, x: &DVector<f64>| -x,
            &dvector![1.0],
            0.0,
            1.0,
            0.01,
            10,
        )
        .unwrap();
        // initial + every 10th of 100 steps
        assert_eq!(traj.len(), 11);
        assert!((traj.times()[1] - 0.1).abs() <= 1e-12);
    }

    #[test]
    fn rk4_aborts_on_blowup() {
        // ẋ = x² blows up at t = 1 for x(0) = 1.
        let err = integrate_rk4(
            |_, x: &DVector<f64>| x.component_mul(x),
            &dvector![1.0],
            0.0,
            2.0,
            0.01,
            1,
        )
        .unwrap_err();
        match err {
            Error::NonFiniteState { partial, .. } => assert!(!partial.is_empty()),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn exact_block_sampling() {
        let sys =
            CliffordOscillator::quaternionic(1, Coefficients::constant_row(&[3.0, 0.0, 4.0]))
                .unwrap();
        let xi0 = BlockState::new(1, 4, dvector![1.0, 0.0, 0.0, 0.0]).unwrap();
        let traj = integrate_exact_blocks(&sys, &xi0, 0.0, 1.0, 0.25).unwrap();
        assert_eq!(traj.times(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        for (t, x) in traj.times().iter().zip(traj.states()) {
            let direct = sys.exact_flow(&xi0, *t).unwrap();
            assert!((x - direct.vector()).norm() <= 1e-14);
        }
        // ν = (3,0,4): period 2π/5 from first return.
        let period = 2.0 * std::f64::consts::PI / 5.0;
        let back = integrate_exact_blocks(&sys, &xi0, 0.0, period, period).unwrap();
        assert!((back.last_state().unwrap() - xi0.vector()).norm() <= 1e-10);
        // Single sample when t0 == t1.
        let single = integrate_exact_blocks(&sys, &xi0, 2.0, 2.0, 0.25).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single.first_state().unwrap(), xi0.vector());
    }

    #[test]
    fn conservation_detects_planted_jump() {
        let sys =
            CliffordOscillator::quaternionic(1, Coefficients::constant_row(&[1.0, 0.0, 0.0]))
                .unwrap();
        let xi0 = BlockState::new(1, 4, dvector![1.0, 0.0, 0.0, 0.0]).unwrap();
        let clean = integrate_exact_blocks(&sys, &xi0, 0.0, 5.0, 0.1).unwrap();
        let rho = Quantity::new("rho_1", |x: &DVector<f64>| x.norm_squared());
        let report = conservation_report(&clean, &[rho], 1e-12).unwrap();
        assert!(report.pass);
        assert!(report.entries[0].max_drift <= 1e-12);

        // Rebuild with a 0.1 jump in ρ on one sample.
        let mut corrupted = Trajectory::new(4);
        for (i, (t, x)) in clean.times().iter().zip(clean.states()).enumerate() {
            let mut x = x.clone();
            if i == 20 {
                x *= (x.norm_squared() + 0.1).sqrt() / x.norm();
            }
            corrupted.push_sample(*t, x).unwrap();
        }
        let rho = Quantity::new("rho_1", |x: &DVector<f64>| x.norm_squared());
        let report = conservation_report(&corrupted, &[rho], 1e-12).unwrap();
        assert!(!report.pass);
        assert!(report.entries[0].max_drift >= 0.1 - 1e-9);
    }

    #[test]
    fn divergence_of_identity_field() {
        let x = dvector![0.3, -0.2, 0.5, 0.1];
        let div = divergence_residual(|x: &DVector<f64>| x.clone(), &x, 1e-5);
        assert!((div - 4.0).abs() <= 1e-9);
    }

    #[test]
    fn csv_round_trip() {
        let mut traj = Trajectory::new(2);
        traj.push_sample(0.0, dvector![1.0, -0.25]).unwrap();
        traj.push_sample(0.5, dvector![0.3333333333333333, 17.0])
            .unwrap();
        traj.add_diagnostic("d_norm", vec![1.0307764064044151, 17.003267961911])
            .unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,x1,x2,d_norm\n"));
        let back = Trajectory::read_csv(std::io::BufReader::new(&buf[..]), 2).unwrap();
        assert_eq!(back.times(), traj.times());
        for (a, b) in back.states().iter().zip(traj.states()) {
            assert_eq!(a, b);
        }
        assert_eq!(back.diagnostics()[0].values, traj.diagnostics()[0].values);
        // Byte-identical on re-write.
        let mut buf2 = Vec::new();
        back.write_csv(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn csv_missing_columns() {
        let text = "t,x1\n0.0,1.0\n";
        let err = Trajectory::read_csv(std::io::BufReader::new(text.as_bytes()), 4).unwrap_err();
        assert!(matches!(err, Error::CsvFormat { line: 1, .. }));
    }
}
