//! Oracle suites for the simulator, field sampler and network gradients.
//! Each suite compares library output with an independent reference and
//! reports the worst deviation.

use std::f64::consts::PI;
use std::time::Instant;

use hamflow_core::dynamics::{
    build_hamiltonian, evolve_lindblad, evolve_schrodinger, lindblad_states, product_state, schrodinger_states,
    short_time_expansion, unitary_propagator, Axis, DensityMatrix, EvolveOptions, HamiltonianSpec, ObservableSet,
    PauliString, PauliSum, Propagator, QuantumState, TimeGrid, NMR_J_COUPLING_HZ, SC_COUPLING_MHZ,
};
use hamflow_core::fields::{sample_gp_mixture, DrivingField, FieldGrid, GpMixture, GpParams, GpSampler};
use hamflow_core::neural::{gradient_check, Direction, ModelConfig, SequenceModel};
use hamflow_core::pipeline::{simulate, simulate_warped, uniform_on_sphere, SystemConfig};
use hamflow_core::seed::{item_seed, rng_from_seed};
use hamflow_core::Result;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Stream id for oracle instances.
const ORACLE_STREAM: u64 = 30;
const ORACLE_SEED: u64 = 2024;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CheckResult {
    pub fn line(&self) -> String {
        format!(
            "[{}] criterion {:>2} {}: {} ({:.1} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

fn run(id: u32, name: &str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckResult { id, name: name.into(), passed, detail, seconds: start.elapsed().as_secs_f64() }
}

fn rng_for(index: u64) -> hamflow_core::seed::Rng {
    rng_from_seed(item_seed(ORACLE_SEED, ORACLE_STREAM, index))
}

/// Runs suites 1 to 6 in order.
pub fn run_all() -> Vec<CheckResult> {
    vec![simulator_oracles(), expansion_order(), time_warp(), gp_statistics(), gradients(), swap_frequency()]
}

pub fn simulator_oracles() -> CheckResult {
    run(1, "simulator oracles", || {
        let analytic = analytic_oracles()?;
        let (norm, trace, herm, min_eig) = random_run_invariants(100)?;
        let brute = eigen_vs_stepping()?;
        let passed =
            analytic <= 1e-8 && norm <= 1e-9 && trace <= 1e-8 && herm <= 1e-9 && min_eig >= -1e-8 && brute <= 1e-8;
        Ok((
            passed,
            format!(
                "analytic {analytic:.1e}; 100 N=5 runs: norm {norm:.1e}, trace {trace:.1e}, hermiticity {herm:.1e}, \
                 min eigenvalue {min_eig:.1e}; eigen vs stepping {brute:.1e}"
            ),
        ))
    })
}

/// Worst deviation from the Rabi, conditional-phase and bit-flip formulas.
fn analytic_oracles() -> Result<f64> {
    let mut worst: f64 = 0.0;

    // H = ωX from |0⟩: ⟨Y⟩ = −sin 2ωt, ⟨Z⟩ = cos 2ωt.
    let omega = 1.3;
    let spec = HamiltonianSpec::constant(PauliSum::new(1, vec![(omega, PauliString::parse("X0", 1)?)])?);
    let obs = ObservableSet::from_names(&["Y0", "Z0"], 1)?;
    let s = evolve_schrodinger(&QuantumState::basis(&[0])?, &spec, &TimeGrid::new(0.0, 0.05, 200)?, &obs)?;
    for (t, row) in s.times().iter().zip(s.values()) {
        worst = worst.max((row[0] + (2.0 * omega * t).sin()).abs()).max((row[1] - (2.0 * omega * t).cos()).abs());
    }

    // (π/2)B Z0Z1 from |c+⟩: the target precesses one way or the other
    // depending on the control bit c.
    let b0 = NMR_J_COUPLING_HZ;
    let grid = FieldGrid::new(0.0, 2e-4, 101)?;
    let spec = HamiltonianSpec::NmrZz { b0, field: DrivingField::constant(&grid, b0)? };
    let obs = ObservableSet::from_names(&["X1", "Y1", "Z0"], 2)?;
    for (control, sign) in [(1.0, 1.0), (-1.0, -1.0)] {
        let psi = product_state(&[[0.0, 0.0, control], [1.0, 0.0, 0.0]])?;
        let s = evolve_schrodinger(&psi, &spec, &TimeGrid::new(0.0, 2e-4, 100)?, &obs)?;
        for (t, row) in s.times().iter().zip(s.values()) {
            let phase = PI * b0 * t;
            worst = worst
                .max((row[0] - phase.cos()).abs())
                .max((row[1] - sign * phase.sin()).abs())
                .max((row[2] - control).abs());
        }
    }

    // Bit-flip channel on |0⟩ with no Hamiltonian: ⟨Z⟩ = e^{−2γt}, ⟨X⟩ = 0.
    let gamma = 0.1;
    let spec = HamiltonianSpec::constant(PauliSum::zero(1));
    let rho = DensityMatrix::from_pure(&QuantumState::basis(&[0])?);
    let obs = ObservableSet::from_names(&["X0", "Z0"], 1)?;
    let s = evolve_lindblad(&rho, &spec, &TimeGrid::new(0.0, 0.1, 100)?, &obs, gamma)?;
    for (t, row) in s.times().iter().zip(s.values()) {
        worst = worst.max(row[0].abs()).max((row[1] - (-2.0 * gamma * t).exp()).abs());
    }
    Ok(worst)
}

fn random_tfim(index: u64, horizon: f64) -> Result<(HamiltonianSpec, QuantumState)> {
    let mut rng = rng_for(index);
    let field = sample_gp_mixture(&GpMixture { horizon, ..GpMixture::default() }, &mut rng)?;
    let v = uniform_on_sphere(&mut rng);
    Ok((HamiltonianSpec::TfimRing { n_qubits: 5, j: 1.0, field }, product_state(&[v; 5])?))
}

/// Worst norm drift, trace drift, hermiticity error and smallest eigenvalue
/// over `runs` GP-driven N=5 rings, pure and with bit-flip noise.
fn random_run_invariants(runs: u64) -> Result<(f64, f64, f64, f64)> {
    let horizon = 5.0;
    let grid = TimeGrid::new(0.0, 0.1, 50)?;
    let per_run = (0..runs)
        .into_par_iter()
        .map(|i| {
            let (spec, psi) = random_tfim(i, horizon)?;
            let states = schrodinger_states(&psi, &spec, &grid, &EvolveOptions::default())?;
            let norm = states.iter().map(|s| (s.norm() - 1.0).abs()).fold(0.0, f64::max);
            let rhos = lindblad_states(&DensityMatrix::from_pure(&psi), &spec, &grid, 0.01, &EvolveOptions::default())?;
            let (mut tr, mut herm, mut lmin) = (0.0f64, 0.0f64, f64::INFINITY);
            for r in &rhos {
                tr = tr.max((r.trace().re - 1.0).abs()).max(r.trace().im.abs());
                herm = herm.max(r.hermiticity_error());
                lmin = lmin.min(r.min_eigenvalue());
            }
            Ok((norm, tr, herm, lmin))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_run
        .iter()
        .fold((0.0, 0.0, 0.0, f64::INFINITY), |a, b| (a.0.max(b.0), a.1.max(b.1), a.2.max(b.2), a.3.min(b.3))))
}

/// Stepped propagation against one dense `exp(−iHT)` for random constant
/// Hamiltonians on 1 to 3 qubits.
fn eigen_vs_stepping() -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (k, n) in [1usize, 1, 2, 2, 3, 3, 3].into_iter().enumerate() {
        let mut rng = rng_for(1000 + k as u64);
        let mut terms = Vec::new();
        for site in 0..n {
            for a in Axis::ALL {
                terms.push((rng.random_range(-1.0..1.0), PauliString::single(n, site, a)?));
            }
            if site + 1 < n {
                for a in Axis::ALL {
                    terms.push((rng.random_range(-1.0..1.0), PauliString::pair(n, (site, a), (site + 1, a))?));
                }
            }
        }
        let spec = HamiltonianSpec::constant(PauliSum::new(n, terms)?);
        let bloch: Vec<[f64; 3]> = (0..n).map(|_| uniform_on_sphere(&mut rng)).collect();
        let psi = product_state(&bloch)?;
        let grid = TimeGrid::new(0.0, 0.1, 30)?;
        let stepped = schrodinger_states(&psi, &spec, &grid, &EvolveOptions::with_propagator(Propagator::Taylor))?;
        let u = unitary_propagator(&build_hamiltonian(&spec, 0.0)?, 3.0)?;
        let exact = u * DVector::from_column_slice(psi.amplitudes());
        let last = stepped.last().expect("non-empty run");
        for (a, b) in last.amplitudes().iter().zip(exact.iter()) {
            worst = worst.max((a - b).norm());
        }
    }
    Ok(worst)
}

pub fn expansion_order() -> CheckResult {
    run(2, "short-time expansion order", || {
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for k in 0..20u64 {
            let mut rng = rng_for(2000 + k);
            let n = 1 + (k % 2) as usize;
            let n_terms = rng.random_range(2..=3);
            let terms: Vec<(f64, PauliString)> = (0..n_terms)
                .map(|_| {
                    let factors = loop {
                        let f: Vec<(usize, Axis)> = (0..n)
                            .filter_map(|site| match rng.random_range(0..4) {
                                0 => None,
                                a => Some((site, Axis::ALL[a - 1])),
                            })
                            .collect();
                        if !f.is_empty() {
                            break f;
                        }
                    };
                    Ok((rng.random_range(-1.0..1.0), PauliString::new(n, factors)?))
                })
                .collect::<Result<_>>()?;
            let bloch: Vec<[f64; 3]> = (0..n).map(|_| uniform_on_sphere(&mut rng)).collect();
            let rho = DensityMatrix::from_pure(&product_state(&bloch)?);
            let h = PauliSum::new(n, terms.clone())?.matrix();
            let err = |t: f64| -> Result<f64> {
                let u = unitary_propagator(&h, t)?;
                let exact: DMatrix<C64> = &u * rho.entries() * u.adjoint();
                Ok((short_time_expansion(&rho, &terms, t)?.entries() - exact).norm())
            };
            let ratio = err(0.1)? / err(0.05)?;
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        Ok((
            (6.0..=10.0).contains(&lo) && (6.0..=10.0).contains(&hi),
            format!("error ratios in [{lo:.3}, {hi:.3}] over 20 instances"),
        ))
    })
}

pub fn time_warp() -> CheckResult {
    run(3, "time-warp equivalence", || {
        let system = SystemConfig::nmr();
        let b0 = NMR_J_COUPLING_HZ;
        let initial = system.initial_state(&mut rng_from_seed(0));
        let worst = (0..20u64)
            .into_par_iter()
            .map(|k| {
                let mut rng = rng_for(3000 + k);
                let reference = sample_gp_mixture(&GpMixture { horizon: 24.9, ..GpMixture::default() }, &mut rng)?;
                let grid = FieldGrid::new(0.0, 2e-4, reference.len())?;
                let field = DrivingField::new(
                    &grid,
                    reference.values().iter().map(|v| v * b0).collect(),
                    reference.meta().clone(),
                )?;
                let warped = simulate_warped(&system, &field)?;
                let direct = simulate(&system, &[field], &initial, None, 20)?;
                warped.max_abs_difference(&direct)
            })
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        Ok((worst <= 1e-8, format!("max deviation {worst:.2e} over 20 fields")))
    })
}

pub fn gp_statistics() -> CheckResult {
    run(4, "GP sampler statistics", || {
        let params = GpParams { c0: 2.0, sigma: 3.0, dt: 0.1, horizon: 5.0 };
        let sampler = GpSampler::new(params)?;
        let n = sampler.n_points();
        let samples = 10_000;
        let mut rng = rng_for(4000);
        let draws: Vec<Vec<f64>> =
            (0..samples).map(|_| sampler.sample(&mut rng).map(|f| f.values().to_vec())).collect::<Result<_>>()?;
        let mut worst: f64 = 0.0;
        let mut parts = Vec::new();
        for lag in [0usize, 5, 10] {
            let mut acc = 0.0;
            let mut count = 0usize;
            for d in &draws {
                for i in 0..n - lag {
                    acc += d[i] * d[i + lag];
                    count += 1;
                }
            }
            let empirical = acc / count as f64;
            let tau = lag as f64 * params.dt;
            let expected = params.c0 * (-tau * tau / (2.0 * params.sigma * params.sigma)).exp();
            let rel = (empirical - expected).abs() / expected;
            worst = worst.max(rel);
            parts.push(format!("lag {lag}: {empirical:.4} vs {expected:.4}"));
        }
        let zero_input = sampler.field_from_normals(&vec![0.0; n])?.values().iter().all(|&v| v == 0.0);
        let flat = GpSampler::new(GpParams { c0: 0.0, ..params })?;
        let zero_amp = (0..10).all(|_| flat.sample(&mut rng).is_ok_and(|f| f.values().iter().all(|&v| v == 0.0)));
        Ok((
            worst <= 0.05 && zero_input && zero_amp,
            format!(
                "{}; worst relative error {worst:.3}; zero input exact: {zero_input}; zero amplitude exact: {zero_amp}",
                parts.join(", ")
            ),
        ))
    })
}

pub fn gradients() -> CheckResult {
    run(5, "BPTT gradient check", || {
        let mut worst: f64 = 0.0;
        let mut encoder_probed = true;
        for (k, (direction, input, output)) in
            [(Direction::Dynamics, 2, 21), (Direction::Hamiltonian, 22, 1)].into_iter().enumerate()
        {
            let cfg = ModelConfig {
                direction,
                input_width: input,
                output_width: output,
                o0_width: 3,
                hidden: 8,
                n_layers: 2,
                encoder_depth: 2,
                encoder_width: 6,
            };
            let model = SequenceModel::new(cfg, 5000 + k as u64)?;
            let mut rng = rng_for(5000 + k as u64);
            let (t, b) = (6, 3);
            let x = ndarray::Array3::from_shape_fn((t, b, input), |_| rng.random_range(-1.0..1.0));
            let o0 = ndarray::Array2::from_shape_fn((b, 3), |_| rng.random_range(-1.0..1.0));
            let y = ndarray::Array3::from_shape_fn((t, b, output), |_| rng.random_range(-1.0..1.0));
            let report = gradient_check(&model, x.view(), o0.view(), y.view(), 100, 1e-5, 5100 + k as u64)?;
            worst = worst.max(report.max_relative_error);
            encoder_probed &= report.probes.iter().any(|p| p.block.starts_with("encoder"));
        }
        Ok((
            worst <= 1e-5 && encoder_probed,
            format!("max relative error {worst:.2e} over 2 x 100 probes; encoder probed: {encoder_probed}"),
        ))
    })
}

pub fn swap_frequency() -> CheckResult {
    run(6, "SWAP frequency", || {
        let b0 = SC_COUPLING_MHZ;
        let grid = FieldGrid::new(0.0, 5e-4, 2001)?;
        let zero = DrivingField::constant(&grid, 0.0)?;
        let spec = HamiltonianSpec::ScSwapDetuned { b0, detuning_1: zero.clone(), detuning_2: zero };
        let obs = ObservableSet::from_names(&["Z0"], 2)?;
        let s = evolve_schrodinger(&QuantumState::basis(&[1, 0])?, &spec, &TimeGrid::new(0.0, 5e-4, 2000)?, &obs)?;
        let z: Vec<f64> = s.values().iter().map(|r| r[0]).collect();
        let crossings: Vec<f64> = z
            .windows(2)
            .zip(s.times().windows(2))
            .filter(|(v, _)| v[0] * v[1] < 0.0)
            .map(|(v, t)| t[0] + (t[1] - t[0]) * v[0] / (v[0] - v[1]))
            .collect();
        if crossings.len() < 3 {
            return Ok((false, format!("only {} zero crossings", crossings.len())));
        }
        let span = crossings[crossings.len() - 1] - crossings[0];
        let freq = (crossings.len() - 1) as f64 / (2.0 * span);
        let expected = 2.0 * b0;
        let rel = (freq - expected).abs() / expected;
        Ok((rel <= 0.01, format!("{freq:.4} MHz vs {expected:.4} MHz (relative error {rel:.1e})")))
    })
}
