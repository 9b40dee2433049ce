use hamflow_core::dynamics::{
    build_hamiltonian, evolve_lindblad, evolve_schrodinger, lindblad_states, product_state, schrodinger_states,
    unitary_propagator, Axis, DensityMatrix, EvolveOptions, HamiltonianSpec, ObservableSet, PauliString, PauliSum,
    Propagator, TimeGrid,
};
use hamflow_core::fields::{make_periodic, make_quench, sample_gp_mixture, DrivingField, FieldGrid, GpMixture};
use hamflow_core::pipeline::{simulate, simulate_warped, uniform_on_sphere, SystemConfig};
use hamflow_core::seed::rng_from_seed;
use nalgebra::DVector;
use proptest::prelude::*;

fn gp_field(seed: u64, horizon: f64) -> DrivingField {
    sample_gp_mixture(&GpMixture { horizon, ..GpMixture::default() }, &mut rng_from_seed(seed)).unwrap()
}

fn bloch(seed: u64) -> [f64; 3] {
    uniform_on_sphere(&mut rng_from_seed(seed ^ 0xA5A5))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn tfim_runs_conserve_the_norm(seed in any::<u64>(), n in 3usize..=5) {
        let spec = HamiltonianSpec::TfimRing { n_qubits: n, j: 1.0, field: gp_field(seed, 3.0) };
        let psi = product_state(&vec![bloch(seed); n]).unwrap();
        let states = schrodinger_states(&psi, &spec, &TimeGrid::new(0.0, 0.1, 30).unwrap(), &EvolveOptions::default()).unwrap();
        for s in &states {
            prop_assert!((s.norm() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn closed_lindblad_matches_pure_evolution(seed in any::<u64>(), n in 3usize..=4) {
        let spec = HamiltonianSpec::TfimRing { n_qubits: n, j: 1.0, field: gp_field(seed, 2.0) };
        let psi = product_state(&vec![bloch(seed); n]).unwrap();
        let grid = TimeGrid::new(0.0, 0.1, 20).unwrap();
        let obs = ObservableSet::tfim_default(n).unwrap();
        let pure = evolve_schrodinger(&psi, &spec, &grid, &obs).unwrap();
        let mixed = evolve_lindblad(&DensityMatrix::from_pure(&psi), &spec, &grid, &obs, 0.0).unwrap();
        prop_assert!(pure.max_abs_difference(&mixed).unwrap() <= 1e-8);
    }

    #[test]
    fn noisy_density_matrices_stay_physical(seed in any::<u64>(), gamma in 0.0f64..0.5) {
        let n = 3;
        let spec = HamiltonianSpec::TfimRing { n_qubits: n, j: 1.0, field: gp_field(seed, 2.0) };
        let rho = DensityMatrix::from_pure(&product_state(&vec![bloch(seed); n]).unwrap());
        let states = lindblad_states(&rho, &spec, &TimeGrid::new(0.0, 0.1, 20).unwrap(), gamma, &EvolveOptions::default()).unwrap();
        for r in &states {
            prop_assert!((r.trace().re - 1.0).abs() <= 1e-8 && r.trace().im.abs() <= 1e-8);
            prop_assert!(r.hermiticity_error() <= 1e-9);
            prop_assert!(r.min_eigenvalue() >= -1e-8);
        }
    }

    #[test]
    fn stepping_matches_one_exponential(seed in any::<u64>(), n in 1usize..=3) {
        let mut rng = rng_from_seed(seed);
        let mut terms = Vec::new();
        for site in 0..n {
            for a in Axis::ALL {
                terms.push((rand::Rng::random_range(&mut rng, -1.0..1.0), PauliString::single(n, site, a).unwrap()));
            }
        }
        if n > 1 {
            terms.push((0.7, PauliString::pair(n, (0, Axis::Z), (n - 1, Axis::X)).unwrap()));
        }
        let spec = HamiltonianSpec::constant(PauliSum::new(n, terms).unwrap());
        let psi = product_state(&vec![bloch(seed); n]).unwrap();
        let states = schrodinger_states(
            &psi, &spec, &TimeGrid::new(0.0, 0.1, 20).unwrap(), &EvolveOptions::with_propagator(Propagator::Taylor),
        ).unwrap();
        let u = unitary_propagator(&build_hamiltonian(&spec, 0.0).unwrap(), 2.0).unwrap();
        let exact = u * DVector::from_column_slice(psi.amplitudes());
        let last = states.last().unwrap();
        let err = last.amplitudes().iter().zip(exact.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-8);
    }

    #[test]
    fn time_warp_is_exact_for_quench_and_periodic(
        seed in any::<u64>(), amp in -3.0f64..3.0, omega in 0.1f64..4.0, switch in 1.0f64..20.0, h in -3.0f64..3.0,
    ) {
        let system = SystemConfig::nmr();
        let b0 = 697.4;
        let reference = FieldGrid::new(0.0, 0.1, 120).unwrap();
        let physical = FieldGrid::new(0.0, 2e-4, 120).unwrap();
        let initial = system.initial_state(&mut rng_from_seed(seed));
        for f in [make_periodic(amp, omega, &reference).unwrap(), make_quench(&[(0.0, amp), (switch.round() / 10.0 * 5.0, h)], &reference).unwrap()] {
            let field = DrivingField::new(&physical, f.values().iter().map(|v| v * b0).collect(), f.meta().clone()).unwrap();
            let warped = simulate_warped(&system, &field).unwrap();
            let direct = simulate(&system, &[field], &initial, None, 20).unwrap();
            prop_assert!(warped.max_abs_difference(&direct).unwrap() <= 1e-8);
        }
    }
}

#[test]
fn swap_frequency_grows_with_detuning() {
    // A detuning δ on one qubit separates the qubit frequencies by 2δ, so
    // ⟨Z0⟩ from |10⟩ returns with frequency sqrt(4 B0² + (2δ)²).
    let b0 = 12.75;
    let grid = FieldGrid::new(0.0, 1e-4, 401).unwrap();
    let obs = ObservableSet::from_names(&["Z0"], 2).unwrap();
    let psi = hamflow_core::dynamics::QuantumState::basis(&[1, 0]).unwrap();
    for delta in [0.0f64, 5.0, 10.0] {
        let expected = 1.0 / (4.0 * b0 * b0 + 4.0 * delta * delta).sqrt();
        let spec = HamiltonianSpec::ScSwapDetuned {
            b0,
            detuning_1: DrivingField::constant(&grid, delta).unwrap(),
            detuning_2: DrivingField::constant(&grid, 0.0).unwrap(),
        };
        let s = evolve_schrodinger(&psi, &spec, &TimeGrid::new(0.0, 1e-4, 400).unwrap(), &obs).unwrap();
        // ⟨Z0⟩ peaks after half a period.
        let first_period: Vec<(f64, f64)> =
            s.times().iter().zip(s.values()).map(|(t, r)| (*t, r[0])).filter(|(t, _)| *t <= 0.75 * expected).collect();
        let (t_peak, _) =
            first_period.iter().copied().fold((0.0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        assert!((2.0 * t_peak - expected).abs() / expected < 0.01, "delta {delta}: {} vs {expected}", 2.0 * t_peak);
    }
}
