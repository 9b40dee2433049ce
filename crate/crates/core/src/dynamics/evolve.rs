use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::hamiltonian::{CompiledHamiltonian, HamiltonianSpec};
use super::pauli::{ObservableSet, PauliMasks};
use super::series::ObservableSeries;
use super::state::{expect_mixed, expect_pure, l2_norm, real_part, DensityMatrix, QuantumState};
use crate::{Error, Result};

pub const DEFAULT_SUBSTEPS: usize = 20;
/// Drift beyond this aborts a run.
pub const DRIFT_ABORT: f64 = 1e-6;
/// Largest `h·‖H‖` handled by one Taylor expansion.
const TAYLOR_STEP_BOUND: f64 = 0.5;
const TAYLOR_MAX_TERMS: usize = 48;
const EIGEN_MAX_QUBITS: usize = 4;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Uniform recording grid `t_start + k·dt`, `k = 0..=n_steps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_start: f64,
    pub dt: f64,
    pub n_steps: usize,
    #[serde(default = "default_substeps")]
    pub substeps_per_dt: usize,
}

fn default_substeps() -> usize {
    DEFAULT_SUBSTEPS
}

impl TimeGrid {
    pub fn new(t_start: f64, dt: f64, n_steps: usize) -> Result<Self> {
        let g = Self { t_start, dt, n_steps, substeps_per_dt: DEFAULT_SUBSTEPS };
        g.validate()?;
        Ok(g)
    }

    pub fn with_substeps(mut self, substeps_per_dt: usize) -> Result<Self> {
        self.substeps_per_dt = substeps_per_dt;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite() && self.t_start.is_finite()) {
            return Err(Error::InvalidArgument(format!("bad time step {}", self.dt)));
        }
        if self.n_steps == 0 || self.substeps_per_dt == 0 {
            return Err(Error::InvalidArgument("n_steps and substeps_per_dt must be at least 1".into()));
        }
        Ok(())
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| self.time(k)).collect()
    }
}

/// How each piecewise-constant substep is propagated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Propagator {
    /// `Eigen` up to four qubits, `Taylor` beyond.
    #[default]
    Auto,
    /// Dense eigendecomposition of `H`, exact exponential.
    Eigen,
    /// Taylor series of the exponential summed to machine precision.
    Taylor,
    /// Classical fourth-order Runge–Kutta.
    Rk4,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvolveOptions {
    pub propagator: Propagator,
    /// Per-step propagation times replacing `dt`; fields are still sampled
    /// on the nominal grid.
    pub durations: Option<Vec<f64>>,
}

impl EvolveOptions {
    pub fn with_propagator(propagator: Propagator) -> Self {
        Self { propagator, durations: None }
    }
}

/// Largest deviation from unit norm (pure) or unit trace (mixed) observed
/// at the recorded times.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EvolutionStats {
    pub max_drift: f64,
}

pub fn evolve_schrodinger(
    state0: &QuantumState,
    spec: &HamiltonianSpec,
    grid: &TimeGrid,
    obs: &ObservableSet,
) -> Result<ObservableSeries> {
    evolve_schrodinger_with(state0, spec, grid, obs, &EvolveOptions::default()).map(|(s, _)| s)
}

pub fn evolve_schrodinger_with(
    state0: &QuantumState,
    spec: &HamiltonianSpec,
    grid: &TimeGrid,
    obs: &ObservableSet,
    opts: &EvolveOptions,
) -> Result<(ObservableSeries, EvolutionStats)> {
    check_observables(obs, spec.n_qubits())?;
    let masks: Vec<PauliMasks> = obs.entries().iter().map(|p| p.masks()).collect();
    let mut rows = Vec::with_capacity(grid.n_steps + 1);
    let stats = run_pure(state0, spec, grid, opts, |_, psi| {
        rows.push(masks.iter().map(|m| real_part(expect_pure(psi, m))).collect::<Result<Vec<_>>>()?);
        Ok(())
    })?;
    Ok((ObservableSeries::new(grid.times(), rows, obs.clone())?, stats))
}

/// States at every grid point, including the initial one.
pub fn schrodinger_states(
    state0: &QuantumState,
    spec: &HamiltonianSpec,
    grid: &TimeGrid,
    opts: &EvolveOptions,
) -> Result<Vec<QuantumState>> {
    let n = spec.n_qubits();
    let mut out = Vec::with_capacity(grid.n_steps + 1);
    run_pure(state0, spec, grid, opts, |_, psi| {
        out.push(QuantumState::from_raw(psi.to_vec(), n));
        Ok(())
    })?;
    Ok(out)
}

pub fn evolve_lindblad(
    rho0: &DensityMatrix,
    spec: &HamiltonianSpec,
    grid: &TimeGrid,
    obs: &ObservableSet,
    gamma: f64,
) -> Result<ObservableSeries> {
    evolve_lindblad_with(rho0, spec, grid, obs, gamma, &EvolveOptions::default()).map(|(s, _)| s)
}

pub fn evolve_lindblad_with(
    rho0: &DensityMatrix,
    spec: &HamiltonianSpec,
    grid: &TimeGrid,
    obs: &ObservableSet,
    gamma: f64,
    opts: &EvolveOptions,
) -> Result<(ObservableSeries, EvolutionStats)> {
    check_observables(obs, spec.n_qubits())?;
    let masks: Vec<PauliMasks> = obs.entries().iter().map(|p| p.masks()).collect();
    let dim = rho0.dim();
    let mut rows = Vec::with_capacity(grid.n_steps + 1);
    let stats = run_mixed(rho0, spec, grid, gamma, opts, |_, rho| {
        rows.push(masks.iter().map(|m| real_part(expect_mixed(rho, dim, m))).collect::<Result<Vec<_>>>()?);
        Ok(())
    })?;
    Ok((ObservableSeries::new(grid.times(), rows, obs.clone())?, stats))
}

/// Density matrices at every grid point, including the initial one.
pub fn lindblad_states(
    rho0: &DensityMatrix,
    spec: &HamiltonianSpec,
    grid: &TimeGrid,
    gamma: f64,
    opts: &EvolveOptions,
) -> Result<Vec<DensityMatrix>> {
    let (n, dim) = (rho0.n_qubits(), rho0.dim());
    let mut out = Vec::with_capacity(grid.n_steps + 1);
    run_mixed(rho0, spec, grid, gamma, opts, |_, rho| {
        out.push(DensityMatrix::from_raw(DMatrix::from_column_slice(dim, dim, rho), n));
        Ok(())
    })?;
    Ok(out)
}

/// `exp(−iHt)` by dense eigendecomposition of a Hermitian `H`.
pub fn unitary_propagator(h: &DMatrix<C64>, t: f64) -> Result<DMatrix<C64>> {
    let eig = SymmetricEigen::try_new(h.clone(), 1e-15, 10_000)
        .ok_or_else(|| Error::Eigen("Hermitian eigendecomposition did not converge".into()))?;
    let phases = eig.eigenvalues.map(|l| C64::from_polar(1.0, -l * t));
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&phases) * v.adjoint())
}

fn check_observables(obs: &ObservableSet, n_qubits: usize) -> Result<()> {
    match obs.entries().iter().find(|p| p.n_qubits() != n_qubits) {
        Some(p) => Err(Error::Dimension(format!("observable {p} does not act on {n_qubits} qubits"))),
        None => Ok(()),
    }
}

/// Substep schedule: `(propagation time, field sample time)` for every
/// substep of grid step `k`.
fn substeps(grid: &TimeGrid, durations: Option<&[f64]>, k: usize) -> impl Iterator<Item = (f64, f64)> {
    let s = grid.substeps_per_dt;
    let tau = durations.map_or(grid.dt, |d| d[k]);
    let t0 = grid.time(k);
    let dt = grid.dt;
    (0..s).map(move |j| (tau / s as f64, t0 + (j as f64 + 0.5) * dt / s as f64))
}

fn check_durations(grid: &TimeGrid, opts: &EvolveOptions) -> Result<()> {
    grid.validate()?;
    if let Some(d) = &opts.durations {
        if d.len() != grid.n_steps {
            return Err(Error::Shape(format!("{} durations for {} steps", d.len(), grid.n_steps)));
        }
        if d.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite step duration".into()));
        }
    }
    Ok(())
}

fn run_pure<F>(
    state0: &QuantumState,
    spec: &HamiltonianSpec,
    grid: &TimeGrid,
    opts: &EvolveOptions,
    mut record: F,
) -> Result<EvolutionStats>
where
    F: FnMut(usize, &[C64]) -> Result<()>,
{
    check_durations(grid, opts)?;
    if state0.n_qubits() != spec.n_qubits() {
        return Err(Error::Dimension(format!(
            "state on {} qubits, Hamiltonian on {}",
            state0.n_qubits(),
            spec.n_qubits()
        )));
    }
    let propagator = match opts.propagator {
        Propagator::Auto if spec.n_qubits() <= EIGEN_MAX_QUBITS => Propagator::Eigen,
        Propagator::Auto => Propagator::Taylor,
        p => p,
    };
    let h = CompiledHamiltonian::new(spec, propagator == Propagator::Eigen)?;
    let dim = h.dim();
    let mut psi = state0.amplitudes().to_vec();
    let mut work = Workspace::new(dim);
    let mut coeffs = Vec::new();
    let mut cache: Option<(Vec<f64>, f64, DMatrix<C64>)> = None;
    let mut stats = EvolutionStats::default();
    record(0, &psi)?;
    for k in 0..grid.n_steps {
        for (tau, ts) in substeps(grid, opts.durations.as_deref(), k) {
            h.coefficients_at(ts, &mut coeffs)?;
            match propagator {
                Propagator::Eigen => {
                    let hit = matches!(&cache, Some((c, t, _)) if *c == coeffs && *t == tau);
                    if !hit {
                        cache = Some((coeffs.clone(), tau, unitary_propagator(&h.dense(&coeffs), tau)?));
                    }
                    let u = &cache.as_ref().expect("propagator cached").2;
                    psi = (u * DVector::from_column_slice(&psi)).as_slice().to_vec();
                }
                Propagator::Taylor => {
                    let bound = h.norm_bound(&coeffs);
                    taylor_step(&mut psi, tau, bound, &mut work, |f, x, y| h.apply_add(&coeffs, f, x, y));
                }
                Propagator::Rk4 => {
                    rk4_step(&mut psi, tau, &mut work, |f, x, y| h.apply_add(&coeffs, f * -I, x, y));
                }
                Propagator::Auto => unreachable!("resolved above"),
            }
        }
        let drift = (l2_norm(&psi) - 1.0).abs();
        stats.max_drift = stats.max_drift.max(drift);
        if drift.is_nan() || drift > DRIFT_ABORT {
            return Err(Error::NormDrift(drift));
        }
        record(k + 1, &psi)?;
    }
    Ok(stats)
}

fn run_mixed<F>(
    rho0: &DensityMatrix,
    spec: &HamiltonianSpec,
    grid: &TimeGrid,
    gamma: f64,
    opts: &EvolveOptions,
    mut record: F,
) -> Result<EvolutionStats>
where
    F: FnMut(usize, &[C64]) -> Result<()>,
{
    check_durations(grid, opts)?;
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!("decoherence rate {gamma} must be >= 0")));
    }
    let n = spec.n_qubits();
    if rho0.n_qubits() != n {
        return Err(Error::Dimension(format!("density matrix on {} qubits, Hamiltonian on {n}", rho0.n_qubits())));
    }
    let h = CompiledHamiltonian::new(spec, false)?;
    let dim = h.dim();
    let mut rho: Vec<C64> = rho0.entries().as_slice().to_vec();
    let mut work = Workspace::new(dim * dim);
    let mut coeffs = Vec::new();
    let mut stats = EvolutionStats::default();
    let flip_masks: Vec<usize> = (0..n).map(|site| 1 << (n - 1 - site)).collect();
    record(0, &rho)?;
    for k in 0..grid.n_steps {
        for (tau, ts) in substeps(grid, opts.durations.as_deref(), k) {
            h.coefficients_at(ts, &mut coeffs)?;
            // L(ρ)·f = f·(−i[H, ρ] + γ Σ_i (X_i ρ X_i − ρ))
            let liouvillian = |f: C64, x: &[C64], y: &mut [C64]| {
                h.left_mul_add(&coeffs, -I * f, x, y);
                h.right_mul_add(&coeffs, I * f, x, y);
                if gamma > 0.0 {
                    let g = f * gamma;
                    let loss = g * n as f64;
                    for (yi, xi) in y.iter_mut().zip(x) {
                        *yi -= loss * xi;
                    }
                    for &m in &flip_masks {
                        for c in 0..dim {
                            let src = &x[(c ^ m) * dim..((c ^ m) + 1) * dim];
                            let dst = &mut y[c * dim..(c + 1) * dim];
                            for (r, d) in dst.iter_mut().enumerate() {
                                *d += g * src[r ^ m];
                            }
                        }
                    }
                }
            };
            match opts.propagator {
                Propagator::Rk4 => rk4_step(&mut rho, tau, &mut work, liouvillian),
                _ => {
                    let bound = 2.0 * h.norm_bound(&coeffs) + 2.0 * gamma * n as f64;
                    taylor_step(&mut rho, tau, bound, &mut work, |f, x, y| liouvillian(f * I, x, y));
                }
            }
        }
        let trace: C64 = (0..dim).map(|i| rho[i * dim + i]).sum();
        let drift = (trace - 1.0).norm();
        stats.max_drift = stats.max_drift.max(drift);
        if drift.is_nan() || drift > DRIFT_ABORT {
            return Err(Error::TraceDrift(drift));
        }
        record(k + 1, &rho)?;
    }
    Ok(stats)
}

struct Workspace {
    a: Vec<C64>,
    b: Vec<C64>,
    c: Vec<C64>,
}

impl Workspace {
    fn new(len: usize) -> Self {
        let z = vec![C64::new(0.0, 0.0); len];
        Self { a: z.clone(), b: z.clone(), c: z }
    }
}

/// `x ← exp(−i·tau·G)·x` where `apply(f, x, y)` performs `y += f·G·x` and
/// `bound ≥ ‖G‖`. The step is split so each expansion has `h·bound ≤ 0.5`
/// and summed until the terms fall below double precision.
fn taylor_step<A>(x: &mut [C64], tau: f64, bound: f64, w: &mut Workspace, apply: A)
where
    A: Fn(C64, &[C64], &mut [C64]),
{
    let pieces = ((tau.abs() * bound) / TAYLOR_STEP_BOUND).ceil().max(1.0) as usize;
    let h = tau / pieces as f64;
    for _ in 0..pieces {
        let threshold = 1e-17 * l2_norm(x).max(1e-300);
        w.a.copy_from_slice(x);
        for k in 1..=TAYLOR_MAX_TERMS {
            w.b.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
            apply(-I * (h / k as f64), &w.a, &mut w.b);
            std::mem::swap(&mut w.a, &mut w.b);
            let mut term_sq = 0.0;
            for (xi, ai) in x.iter_mut().zip(&w.a) {
                *xi += ai;
                term_sq += ai.norm_sqr();
            }
            if term_sq.sqrt() <= threshold {
                break;
            }
        }
    }
}

/// One classical RK4 step of `dx/dt = D x` where `apply(f, x, y)` performs
/// `y += f·D·x`.
fn rk4_step<A>(x: &mut [C64], tau: f64, w: &mut Workspace, apply: A)
where
    A: Fn(C64, &[C64], &mut [C64]),
{
    let zero = C64::new(0.0, 0.0);
    const WEIGHTS: [f64; 4] = [1.0 / 6.0, 2.0 / 6.0, 2.0 / 6.0, 1.0 / 6.0];
    const NEXT: [f64; 3] = [0.5, 0.5, 1.0];
    // a: stage derivative, b: stage argument, c: accumulated increment
    w.c.iter_mut().for_each(|v| *v = zero);
    w.b.copy_from_slice(x);
    for (stage, weight) in WEIGHTS.iter().enumerate() {
        w.a.iter_mut().for_each(|v| *v = zero);
        apply(C64::new(1.0, 0.0), &w.b, &mut w.a);
        for (ci, ai) in w.c.iter_mut().zip(&w.a) {
            *ci += ai * (tau * weight);
        }
        if let Some(next) = NEXT.get(stage) {
            for ((bi, xi), ai) in w.b.iter_mut().zip(x.iter()).zip(&w.a) {
                *bi = xi + ai * (tau * next);
            }
        }
    }
    for (xi, ci) in x.iter_mut().zip(&w.c) {
        *xi += ci;
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use approx::assert_abs_diff_eq;
    use rand::Rng;

    use super::*;
    use crate::dynamics::hamiltonian::{build_hamiltonian, NMR_J_COUPLING_HZ, SC_COUPLING_MHZ};
    use crate::dynamics::pauli::{PauliString, PauliSum};
    use crate::dynamics::state::product_state;
    use crate::fields::{sample_gp_mixture, DrivingField, FieldGrid, GpMixture};
    use crate::seed::rng_from_seed;

    fn rabi_spec(b: f64) -> HamiltonianSpec {
        HamiltonianSpec::constant(PauliSum::new(1, vec![(b, PauliString::parse("X0", 1).unwrap())]).unwrap())
    }

    fn set(names: &[&str], n: usize) -> ObservableSet {
        ObservableSet::from_names(names, n).unwrap()
    }

    #[test]
    fn rabi_oscillation_all_propagators() {
        let grid = TimeGrid::new(0.0, PI / 100.0, 100).unwrap();
        let psi0 = QuantumState::basis(&[0]).unwrap();
        for p in [Propagator::Eigen, Propagator::Taylor, Propagator::Rk4] {
            let (s, _) = evolve_schrodinger_with(
                &psi0,
                &rabi_spec(1.0),
                &grid,
                &set(&["Z0"], 1),
                &EvolveOptions::with_propagator(p),
            )
            .unwrap();
            let tol = if p == Propagator::Rk4 { 1e-9 } else { 1e-12 };
            for (t, row) in s.times().iter().zip(s.values()) {
                assert_abs_diff_eq!(row[0], (2.0 * t).cos(), epsilon = tol);
            }
        }
    }

    #[test]
    fn rk4_step_matches_series() {
        // dx/dt = λx with λ = −i: one RK4 step equals the quartic Taylor polynomial.
        let mut x = vec![C64::new(1.0, 0.0)];
        let mut w = Workspace::new(1);
        rk4_step(&mut x, 0.1, &mut w, |f, a, b| b[0] += f * -I * a[0]);
        let z = -I * 0.1;
        let expect = 1.0 + z + z * z / 2.0 + z * z * z / 6.0 + z * z * z * z / 24.0;
        assert!((x[0] - expect).norm() < 1e-16);
    }

    #[test]
    fn tfim_zero_field_keeps_all_up() {
        let grid = FieldGrid::with_horizon(0.0, 0.1, 5.0).unwrap();
        let spec =
            HamiltonianSpec::TfimRing { n_qubits: 5, j: 1.0, field: DrivingField::constant(&grid, 0.0).unwrap() };
        let psi0 = QuantumState::basis(&[0; 5]).unwrap();
        let s =
            evolve_schrodinger(&psi0, &spec, &TimeGrid::new(0.0, 0.1, 50).unwrap(), &set(&["Z0", "Z3"], 5)).unwrap();
        assert!(s.values().iter().flatten().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn nmr_conditional_phase() {
        let dt = 2e-4;
        let fg = FieldGrid::new(0.0, dt, 251).unwrap();
        let spec = HamiltonianSpec::NmrZz {
            b0: NMR_J_COUPLING_HZ,
            field: DrivingField::constant(&fg, NMR_J_COUPLING_HZ).unwrap(),
        };
        let psi0 = product_state(&[[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]).unwrap();
        let s =
            evolve_schrodinger(&psi0, &spec, &TimeGrid::new(0.0, dt, 250).unwrap(), &set(&["X1", "Z0"], 2)).unwrap();
        for (t, row) in s.times().iter().zip(s.values()) {
            assert_abs_diff_eq!(row[0], (PI * NMR_J_COUPLING_HZ * t).cos(), epsilon = 1e-10);
            assert_abs_diff_eq!(row[1], 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn bit_flip_decay() {
        let grid = TimeGrid::new(0.0, 0.05, 60).unwrap();
        let rho0 = DensityMatrix::from_pure(&QuantumState::basis(&[0]).unwrap());
        let spec = HamiltonianSpec::constant(PauliSum::zero(1));
        for p in [Propagator::Taylor, Propagator::Rk4] {
            let (s, stats) =
                evolve_lindblad_with(&rho0, &spec, &grid, &set(&["Z0"], 1), 0.5, &EvolveOptions::with_propagator(p))
                    .unwrap();
            for (t, row) in s.times().iter().zip(s.values()) {
                assert_abs_diff_eq!(row[0], (-2.0 * 0.5 * t).exp(), epsilon = 1e-9);
            }
            assert!(stats.max_drift < 1e-12);
        }
    }

    #[test]
    fn closed_lindblad_matches_pure() {
        let mut rng = rng_from_seed(3);
        let field = sample_gp_mixture(&GpMixture { horizon: 3.0, ..GpMixture::default() }, &mut rng).unwrap();
        let spec = HamiltonianSpec::TfimRing { n_qubits: 4, j: 1.0, field };
        let v: Vec<[f64; 3]> = (0..4).map(|_| [0.6, 0.0, 0.8]).collect();
        let psi0 = product_state(&v).unwrap();
        let grid = TimeGrid::new(0.0, 0.1, 30).unwrap();
        let obs = ObservableSet::tfim_default(4).unwrap();
        let a = evolve_schrodinger(&psi0, &spec, &grid, &obs).unwrap();
        let b = evolve_lindblad(&DensityMatrix::from_pure(&psi0), &spec, &grid, &obs, 0.0).unwrap();
        assert!(a.max_abs_difference(&b).unwrap() < 1e-10);
    }

    #[test]
    fn taylor_and_eigen_agree_on_driven_chain() {
        let mut rng = rng_from_seed(11);
        let field = sample_gp_mixture(&GpMixture { horizon: 2.0, ..GpMixture::default() }, &mut rng).unwrap();
        let spec = HamiltonianSpec::TfimRing { n_qubits: 3, j: 0.8, field };
        let v = [[0.0, 1.0, 0.0]; 3];
        let psi0 = product_state(&v).unwrap();
        let grid = TimeGrid::new(0.0, 0.1, 20).unwrap();
        let obs = ObservableSet::tfim_default(3).unwrap();
        let run = |p| evolve_schrodinger_with(&psi0, &spec, &grid, &obs, &EvolveOptions::with_propagator(p)).unwrap().0;
        assert!(run(Propagator::Eigen).max_abs_difference(&run(Propagator::Taylor)).unwrap() < 1e-12);
        assert!(run(Propagator::Eigen).max_abs_difference(&run(Propagator::Rk4)).unwrap() < 1e-6);
    }

    #[test]
    fn stepping_matches_single_exponential_for_constant_h() {
        let mut rng = rng_from_seed(5);
        let fg = FieldGrid::with_horizon(0.0, 0.1, 2.0).unwrap();
        let b: f64 = rng.random_range(-2.0..2.0);
        let spec = HamiltonianSpec::TfimRing { n_qubits: 3, j: 1.0, field: DrivingField::constant(&fg, b).unwrap() };
        let psi0 = product_state(&[[1.0, 0.0, 0.0]; 3]).unwrap();
        let grid = TimeGrid::new(0.0, 0.1, 20).unwrap();
        let states =
            schrodinger_states(&psi0, &spec, &grid, &EvolveOptions::with_propagator(Propagator::Taylor)).unwrap();
        let h = build_hamiltonian(&spec, 0.0).unwrap();
        let u = unitary_propagator(&h, 2.0).unwrap();
        let exact = u * DVector::from_column_slice(psi0.amplitudes());
        let diff: f64 =
            states[20].amplitudes().iter().zip(exact.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-12);
    }

    #[test]
    fn swap_oscillation_period() {
        let fg = FieldGrid::with_horizon(0.0, 0.002, 0.2).unwrap();
        let zero = DrivingField::constant(&fg, 0.0).unwrap();
        let spec = HamiltonianSpec::ScSwapDetuned { b0: SC_COUPLING_MHZ, detuning_1: zero.clone(), detuning_2: zero };
        let psi0 = QuantumState::basis(&[1, 0]).unwrap();
        let grid = TimeGrid::new(0.0, 0.002, 100).unwrap();
        let s = evolve_schrodinger(&psi0, &spec, &grid, &set(&["Z0"], 2)).unwrap();
        let f = 2.0 * SC_COUPLING_MHZ;
        for (t, row) in s.times().iter().zip(s.values()) {
            assert_abs_diff_eq!(row[0], -(2.0 * PI * f * t).cos(), epsilon = 1e-10);
        }
    }

    #[test]
    fn field_outside_domain_fails() {
        let fg = FieldGrid::with_horizon(0.0, 0.1, 1.0).unwrap();
        let spec = HamiltonianSpec::TfimRing { n_qubits: 3, j: 1.0, field: DrivingField::constant(&fg, 1.0).unwrap() };
        let psi0 = QuantumState::basis(&[0; 3]).unwrap();
        let r = evolve_schrodinger(&psi0, &spec, &TimeGrid::new(0.0, 0.1, 30).unwrap(), &set(&["Z0"], 3));
        assert!(matches!(r, Err(Error::FieldDomain(_))));
    }

    #[test]
    fn mismatched_sizes_rejected() {
        let psi0 = QuantumState::basis(&[0, 0]).unwrap();
        let r = evolve_schrodinger(&psi0, &rabi_spec(1.0), &TimeGrid::new(0.0, 0.1, 3).unwrap(), &set(&["Z0"], 1));
        assert!(matches!(r, Err(Error::Dimension(_))));
        let bad = TimeGrid { t_start: 0.0, dt: 0.1, n_steps: 0, substeps_per_dt: 1 };
        assert!(bad.validate().is_err());
    }
}
