use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::pauli::{Axis, CompiledPauliSum, PauliString, PauliSum};
use crate::fields::DrivingField;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HamiltonianKind {
    TfimRing,
    NmrZz,
    ScSwapDetuned,
    Custom,
}

/// A Pauli-sum operator multiplied by a time-dependent scalar field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrivenTerm {
    pub operator: PauliSum,
    pub field: DrivingField,
}

/// Time-dependent Hamiltonian of one of the supported systems.
///
/// Unit conventions (ħ = 1):
/// - `TfimRing`: dimensionless, `J` sets the energy scale.
/// - `NmrZz`: `B` in Hz and times in seconds; the `π/2` prefactor turns the
///   coupling into an angular rate.
/// - `ScSwapDetuned`: `B0` and the detunings in MHz, times in µs. The
///   operator is written in ordinary-frequency units and the propagator
///   multiplies it by `2π` (see [`HamiltonianSpec::generator_scale`]).
/// - `Custom`: angular units, no rescaling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HamiltonianSpec {
    /// `H = −Σ_i (J Z_i Z_{i+1 mod N} + B(t) X_i)`.
    TfimRing { n_qubits: usize, j: f64, field: DrivingField },
    /// `H = (π/2) B(t) Z_0 Z_1`; `b0` is the reference coupling used for time warping.
    NmrZz { b0: f64, field: DrivingField },
    /// `H = (B0/2)(X_0X_1 + Y_0Y_1) + Δ₁(t) Z_0 + Δ₂(t) Z_1`.
    ScSwapDetuned { b0: f64, detuning_1: DrivingField, detuning_2: DrivingField },
    /// Static Pauli sum plus any number of driven terms.
    Custom { terms: PauliSum, driven: Vec<DrivenTerm> },
}

pub const NMR_J_COUPLING_HZ: f64 = 697.4;
pub const SC_COUPLING_MHZ: f64 = 12.75;

impl HamiltonianSpec {
    pub fn constant(terms: PauliSum) -> Self {
        HamiltonianSpec::Custom { terms, driven: Vec::new() }
    }

    pub fn kind(&self) -> HamiltonianKind {
        match self {
            HamiltonianSpec::TfimRing { .. } => HamiltonianKind::TfimRing,
            HamiltonianSpec::NmrZz { .. } => HamiltonianKind::NmrZz,
            HamiltonianSpec::ScSwapDetuned { .. } => HamiltonianKind::ScSwapDetuned,
            HamiltonianSpec::Custom { .. } => HamiltonianKind::Custom,
        }
    }

    pub fn n_qubits(&self) -> usize {
        match self {
            HamiltonianSpec::TfimRing { n_qubits, .. } => *n_qubits,
            HamiltonianSpec::NmrZz { .. } | HamiltonianSpec::ScSwapDetuned { .. } => 2,
            HamiltonianSpec::Custom { terms, .. } => terms.n_qubits(),
        }
    }

    /// Factor converting [`build_hamiltonian`] output into the angular
    /// generator of time evolution: `2π` for the superconducting model,
    /// whose parameters are ordinary frequencies, and 1 otherwise.
    pub fn generator_scale(&self) -> f64 {
        match self {
            HamiltonianSpec::ScSwapDetuned { .. } => TAU,
            _ => 1.0,
        }
    }

    pub fn fields(&self) -> Vec<&DrivingField> {
        match self {
            HamiltonianSpec::TfimRing { field, .. } | HamiltonianSpec::NmrZz { field, .. } => vec![field],
            HamiltonianSpec::ScSwapDetuned { detuning_1, detuning_2, .. } => vec![detuning_1, detuning_2],
            HamiltonianSpec::Custom { driven, .. } => driven.iter().map(|d| &d.field).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            HamiltonianSpec::TfimRing { n_qubits, j, .. } => {
                if *n_qubits < 3 {
                    return Err(Error::InvalidHamiltonian(format!("TFIM ring needs at least 3 sites, got {n_qubits}")));
                }
                if *n_qubits > 16 {
                    return Err(Error::InvalidHamiltonian(format!("{n_qubits} sites exceed dense limits")));
                }
                if !j.is_finite() {
                    return Err(Error::InvalidHamiltonian("J is not finite".into()));
                }
            }
            HamiltonianSpec::NmrZz { b0, .. } | HamiltonianSpec::ScSwapDetuned { b0, .. } => {
                if !b0.is_finite() {
                    return Err(Error::InvalidHamiltonian("B0 is not finite".into()));
                }
            }
            HamiltonianSpec::Custom { terms, driven } => {
                for d in driven {
                    if d.operator.n_qubits() != terms.n_qubits() {
                        return Err(Error::Dimension("driven term on a different register".into()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Static part plus driven operators, in the spec's native units.
    pub fn decompose(&self) -> Result<(PauliSum, Vec<(PauliSum, &DrivingField)>)> {
        self.validate()?;
        let out = match self {
            HamiltonianSpec::TfimRing { n_qubits, j, field } => {
                let n = *n_qubits;
                let mut zz = PauliSum::zero(n);
                let mut x = PauliSum::zero(n);
                for i in 0..n {
                    zz.push(-j, PauliString::pair(n, (i, Axis::Z), ((i + 1) % n, Axis::Z))?)?;
                    x.push(-1.0, PauliString::single(n, i, Axis::X)?)?;
                }
                (zz, vec![(x, field)])
            }
            HamiltonianSpec::NmrZz { field, .. } => {
                let zz = PauliSum::new(2, vec![(PI / 2.0, PauliString::parse("Z0Z1", 2)?)])?;
                (PauliSum::zero(2), vec![(zz, field)])
            }
            HamiltonianSpec::ScSwapDetuned { b0, detuning_1, detuning_2 } => {
                let swap = PauliSum::new(
                    2,
                    vec![(b0 / 2.0, PauliString::parse("X0X1", 2)?), (b0 / 2.0, PauliString::parse("Y0Y1", 2)?)],
                )?;
                let z0 = PauliSum::new(2, vec![(1.0, PauliString::parse("Z0", 2)?)])?;
                let z1 = PauliSum::new(2, vec![(1.0, PauliString::parse("Z1", 2)?)])?;
                (swap, vec![(z0, detuning_1), (z1, detuning_2)])
            }
            HamiltonianSpec::Custom { terms, driven } => {
                (terms.clone(), driven.iter().map(|d| (d.operator.clone(), &d.field)).collect())
            }
        };
        Ok(out)
    }

    /// Instantaneous Pauli decomposition `H(t) = Σ λ_a E_a` (native units).
    pub fn pauli_terms_at(&self, t: f64) -> Result<PauliSum> {
        let (stat, driven) = self.decompose()?;
        let mut out = stat;
        for (op, field) in driven {
            let b = field.value_at(t)?;
            for (c, p) in op.terms() {
                out.push(c * b, p.clone())?;
            }
        }
        Ok(out)
    }
}

/// Dense `H(t)` in the spec's native units.
pub fn build_hamiltonian(spec: &HamiltonianSpec, t: f64) -> Result<DMatrix<C64>> {
    Ok(spec.pauli_terms_at(t)?.matrix())
}

/// Hamiltonian compiled for repeated application during time stepping. All
/// coefficients include [`HamiltonianSpec::generator_scale`].
pub(crate) struct CompiledHamiltonian<'a> {
    n_qubits: usize,
    static_part: CompiledPauliSum,
    static_dense: Option<DMatrix<C64>>,
    driven: Vec<(CompiledPauliSum, Option<DMatrix<C64>>, &'a DrivingField)>,
    scale: f64,
}

impl<'a> CompiledHamiltonian<'a> {
    pub fn new(spec: &'a HamiltonianSpec, with_dense: bool) -> Result<Self> {
        let (stat, driven) = spec.decompose()?;
        let dense = |s: &PauliSum| with_dense.then(|| s.matrix());
        Ok(Self {
            n_qubits: spec.n_qubits(),
            static_dense: dense(&stat),
            static_part: CompiledPauliSum::new(&stat),
            driven: driven.into_iter().map(|(op, f)| (CompiledPauliSum::new(&op), dense(&op), f)).collect(),
            scale: spec.generator_scale(),
        })
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    /// Driven-term coefficients (field values) at time `t`.
    pub fn coefficients_at(&self, t: f64, out: &mut Vec<f64>) -> Result<()> {
        out.clear();
        for (_, _, f) in &self.driven {
            out.push(f.value_at(t)?);
        }
        Ok(())
    }

    pub fn norm_bound(&self, coeffs: &[f64]) -> f64 {
        let mut n = self.static_part.norm_bound();
        for ((op, _, _), c) in self.driven.iter().zip(coeffs) {
            n += op.norm_bound() * c.abs();
        }
        n * self.scale.abs()
    }

    /// `out += factor · H · psi`.
    pub fn apply_add(&self, coeffs: &[f64], factor: C64, psi: &[C64], out: &mut [C64]) {
        let f = factor * self.scale;
        self.static_part.apply_add(f, psi, out);
        for ((op, _, _), &c) in self.driven.iter().zip(coeffs) {
            if c != 0.0 {
                op.apply_add(f * c, psi, out);
            }
        }
    }

    pub fn left_mul_add(&self, coeffs: &[f64], factor: C64, rho: &[C64], out: &mut [C64]) {
        let f = factor * self.scale;
        self.static_part.left_mul_add(f, rho, out);
        for ((op, _, _), &c) in self.driven.iter().zip(coeffs) {
            if c != 0.0 {
                op.left_mul_add(f * c, rho, out);
            }
        }
    }

    pub fn right_mul_add(&self, coeffs: &[f64], factor: C64, rho: &[C64], out: &mut [C64]) {
        let f = factor * self.scale;
        self.static_part.right_mul_add(f, rho, out);
        for ((op, _, _), &c) in self.driven.iter().zip(coeffs) {
            if c != 0.0 {
                op.right_mul_add(f * c, rho, out);
            }
        }
    }

    /// Dense scaled generator; requires construction `with_dense`.
    pub fn dense(&self, coeffs: &[f64]) -> DMatrix<C64> {
        let mut h = self.static_dense.clone().expect("compiled without dense matrices");
        for ((_, d, _), &c) in self.driven.iter().zip(coeffs) {
            h += d.as_ref().expect("compiled without dense matrices") * C64::new(c, 0.0);
        }
        h * C64::new(self.scale, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::FieldGrid;

    fn constant_field(value: f64) -> DrivingField {
        DrivingField::constant(&FieldGrid::with_horizon(0.0, 0.1, 1.0).unwrap(), value).unwrap()
    }

    #[test]
    fn tfim_zero_field_is_diagonal_ring_coupling() {
        let spec = HamiltonianSpec::TfimRing { n_qubits: 3, j: 1.0, field: constant_field(0.0) };
        let h = build_hamiltonian(&spec, 0.5).unwrap();
        let expect = [-3.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, -3.0];
        for r in 0..8 {
            for c in 0..8 {
                let e = if r == c { expect[r] } else { 0.0 };
                assert!((h[(r, c)] - C64::new(e, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn tfim_field_term_sign() {
        let spec = HamiltonianSpec::TfimRing { n_qubits: 3, j: 0.0, field: constant_field(2.0) };
        let h = build_hamiltonian(&spec, 0.0).unwrap();
        // ⟨000|H|100⟩ = −B from the X on site 0.
        assert!((h[(0, 4)] - C64::new(-2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn nmr_is_scaled_zz() {
        let spec = HamiltonianSpec::NmrZz { b0: NMR_J_COUPLING_HZ, field: constant_field(NMR_J_COUPLING_HZ) };
        let h = build_hamiltonian(&spec, 0.3).unwrap();
        let a = PI / 2.0 * NMR_J_COUPLING_HZ;
        let diag = [a, -a, -a, a];
        for k in 0..4 {
            assert!((h[(k, k)].re - diag[k]).abs() < 1e-12);
        }
        assert!((h.clone() - DMatrix::from_diagonal(&h.diagonal())).norm() < 1e-15);
    }

    #[test]
    fn sc_coupling_structure() {
        let spec = HamiltonianSpec::ScSwapDetuned {
            b0: SC_COUPLING_MHZ,
            detuning_1: constant_field(0.0),
            detuning_2: constant_field(0.0),
        };
        let h = build_hamiltonian(&spec, 0.0).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                let e = if (r, c) == (1, 2) || (r, c) == (2, 1) { SC_COUPLING_MHZ } else { 0.0 };
                assert!((h[(r, c)] - C64::new(e, 0.0)).norm() < 1e-14, "({r},{c})");
            }
        }
        assert_eq!(spec.generator_scale(), TAU);
    }

    #[test]
    fn sc_detunings_enter_on_the_diagonal() {
        let spec = HamiltonianSpec::ScSwapDetuned {
            b0: 0.0,
            detuning_1: constant_field(1.5),
            detuning_2: constant_field(-0.5),
        };
        let h = build_hamiltonian(&spec, 0.0).unwrap();
        // |00⟩: Δ1+Δ2, |01⟩: Δ1−Δ2, |10⟩: −Δ1+Δ2, |11⟩: −Δ1−Δ2
        let expect = [1.0, 2.0, -2.0, -1.0];
        for k in 0..4 {
            assert!((h[(k, k)].re - expect[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let spec = HamiltonianSpec::TfimRing { n_qubits: 2, j: 1.0, field: constant_field(0.0) };
        assert!(build_hamiltonian(&spec, 0.0).is_err());
        let spec = HamiltonianSpec::TfimRing { n_qubits: 3, j: 1.0, field: constant_field(1.0) };
        assert!(matches!(build_hamiltonian(&spec, 50.0), Err(Error::FieldDomain(_))));
    }

    #[test]
    fn compiled_dense_matches_builder() {
        let grid = FieldGrid::with_horizon(0.0, 0.1, 1.0).unwrap();
        let field = crate::fields::make_periodic(1.3, 2.0, &grid).unwrap();
        let spec = HamiltonianSpec::TfimRing { n_qubits: 4, j: 0.7, field };
        let c = CompiledHamiltonian::new(&spec, true).unwrap();
        let mut coeffs = Vec::new();
        c.coefficients_at(0.37, &mut coeffs).unwrap();
        let diff = (c.dense(&coeffs) - build_hamiltonian(&spec, 0.37).unwrap()).norm();
        assert!(diff < 1e-13);
    }
}
