use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::pauli::{PauliMasks, PauliString};
use crate::{Error, Result};

pub const NORM_TOLERANCE: f64 = 1e-9;
pub const HERMITICITY_TOLERANCE: f64 = 1e-9;
pub const TRACE_TOLERANCE: f64 = 1e-9;
pub const POSITIVITY_SLACK: f64 = 1e-8;

/// Imaginary residue above which an expectation value is rejected.
pub const IMAGINARY_REJECT: f64 = 1e-8;

/// Pure state on `n_qubits` qubits, site 0 being the most significant bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantumState {
    amplitudes: Vec<C64>,
    n_qubits: usize,
}

impl QuantumState {
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        let n_qubits = register_size(amplitudes.len())?;
        let norm = l2_norm(&amplitudes);
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::NotNormalized(norm));
        }
        Ok(Self { amplitudes, n_qubits })
    }

    /// Computational basis state; `bits[i]` is the value of site `i`.
    pub fn basis(bits: &[u8]) -> Result<Self> {
        let n = bits.len();
        let mut index = 0usize;
        for (site, &b) in bits.iter().enumerate() {
            if b > 1 {
                return Err(Error::InvalidArgument(format!("bit value {b} at site {site}")));
            }
            index |= (b as usize) << (n - 1 - site);
        }
        let mut amplitudes = vec![C64::new(0.0, 0.0); 1 << n];
        amplitudes[index] = C64::new(1.0, 0.0);
        Self::new(amplitudes)
    }

    pub(crate) fn from_raw(amplitudes: Vec<C64>, n_qubits: usize) -> Self {
        Self { amplitudes, n_qubits }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.amplitudes)
    }

    pub fn expectation(&self, p: &PauliString) -> Result<f64> {
        check_size(self.n_qubits, p)?;
        real_part(expect_pure(&self.amplitudes, &p.masks()))
    }

    /// Single-site Bloch vectors `(⟨X_i⟩, ⟨Y_i⟩, ⟨Z_i⟩)`.
    pub fn bloch_vectors(&self) -> Result<Vec<[f64; 3]>> {
        (0..self.n_qubits)
            .map(|site| {
                let mut v = [0.0; 3];
                for (k, a) in super::Axis::ALL.into_iter().enumerate() {
                    v[k] = self.expectation(&PauliString::single(self.n_qubits, site, a)?)?;
                }
                Ok(v)
            })
            .collect()
    }
}

/// Density matrix stored as a dense complex matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    entries: DMatrix<C64>,
    n_qubits: usize,
}

impl DensityMatrix {
    /// Validates Hermiticity and unit trace. Positivity is checked separately
    /// by [`DensityMatrix::min_eigenvalue`] since it needs a diagonalisation.
    pub fn new(entries: DMatrix<C64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::InvalidDensityMatrix("matrix is not square".into()));
        }
        let n_qubits = register_size(entries.nrows())?;
        let rho = Self { entries, n_qubits };
        let herm = rho.hermiticity_error();
        if herm > HERMITICITY_TOLERANCE {
            return Err(Error::InvalidDensityMatrix(format!("hermiticity error {herm:e}")));
        }
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > TRACE_TOLERANCE || tr.im.abs() > TRACE_TOLERANCE {
            return Err(Error::InvalidDensityMatrix(format!("trace {tr}")));
        }
        Ok(rho)
    }

    pub fn from_pure(state: &QuantumState) -> Self {
        let psi = nalgebra::DVector::from_column_slice(state.amplitudes());
        Self { entries: &psi * psi.adjoint(), n_qubits: state.n_qubits() }
    }

    pub(crate) fn from_raw(entries: DMatrix<C64>, n_qubits: usize) -> Self {
        Self { entries, n_qubits }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<C64> {
        self.entries
    }

    pub fn trace(&self) -> C64 {
        self.entries.trace()
    }

    /// Largest elementwise deviation `|ρ − ρ†|`.
    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for c in 0..d {
            for r in 0..=c {
                let e = (self.entries[(r, c)] - self.entries[(c, r)].conj()).norm();
                worst = worst.max(e);
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.entries + self.entries.adjoint()) * C64::new(0.5, 0.0);
        herm.symmetric_eigenvalues().iter().fold(f64::INFINITY, |a, &b| a.min(b))
    }

    /// Full invariant check including positivity (`λ_min ≥ −1e-8`).
    pub fn check_physical(&self) -> Result<()> {
        let herm = self.hermiticity_error();
        if herm > HERMITICITY_TOLERANCE {
            return Err(Error::InvalidDensityMatrix(format!("hermiticity error {herm:e}")));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > TRACE_TOLERANCE {
            return Err(Error::InvalidDensityMatrix(format!("trace {tr}")));
        }
        let lmin = self.min_eigenvalue();
        if lmin < -POSITIVITY_SLACK {
            return Err(Error::InvalidDensityMatrix(format!("negative eigenvalue {lmin:e}")));
        }
        Ok(())
    }

    pub fn expectation(&self, p: &PauliString) -> Result<f64> {
        check_size(self.n_qubits, p)?;
        real_part(expect_mixed(self.entries.as_slice(), self.dim(), &p.masks()))
    }
}

/// Anything an observable can be read from.
pub trait Expectation {
    fn expectation_of(&self, p: &PauliString) -> Result<f64>;
}

impl Expectation for QuantumState {
    fn expectation_of(&self, p: &PauliString) -> Result<f64> {
        self.expectation(p)
    }
}

impl Expectation for DensityMatrix {
    fn expectation_of(&self, p: &PauliString) -> Result<f64> {
        self.expectation(p)
    }
}

/// `⟨ψ|P|ψ⟩` or `tr(ρP)`, with the imaginary residue checked and dropped.
pub fn expectation<S: Expectation + ?Sized>(state: &S, p: &PauliString) -> Result<f64> {
    state.expectation_of(p)
}

/// Tensor product of single-qubit pure states with the given Bloch vectors.
///
/// Each factor is `cos(θ/2)|0⟩ + e^{iφ} sin(θ/2)|1⟩`, so the `|0⟩` amplitude
/// is real and nonnegative, and the south pole maps to exactly `|1⟩`.
pub fn product_state(bloch_vectors: &[[f64; 3]]) -> Result<QuantumState> {
    if bloch_vectors.is_empty() {
        return Err(Error::InvalidArgument("need at least one Bloch vector".into()));
    }
    let mut factors = Vec::with_capacity(bloch_vectors.len());
    for (site, v) in bloch_vectors.iter().enumerate() {
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::InvalidArgument(format!("Bloch vector at site {site} has norm {norm}, expected 1")));
        }
        factors.push(qubit_from_bloch(v));
    }
    let n = factors.len();
    let dim = 1usize << n;
    let mut amplitudes = vec![C64::new(1.0, 0.0); dim];
    for (b, amp) in amplitudes.iter_mut().enumerate() {
        for (site, f) in factors.iter().enumerate() {
            *amp *= f[(b >> (n - 1 - site)) & 1];
        }
    }
    Ok(QuantumState::from_raw(amplitudes, n))
}

fn qubit_from_bloch(v: &[f64; 3]) -> [C64; 2] {
    let z = v[2].clamp(-1.0, 1.0);
    let a = ((1.0 + z) / 2.0).max(0.0).sqrt();
    let b_mag = ((1.0 - z) / 2.0).max(0.0).sqrt();
    if a == 0.0 {
        return [C64::new(0.0, 0.0), C64::new(1.0, 0.0)];
    }
    let phi = if b_mag == 0.0 { 0.0 } else { v[1].atan2(v[0]) };
    [C64::new(a, 0.0), C64::from_polar(b_mag, phi)]
}

pub(crate) fn expect_pure(psi: &[C64], m: &PauliMasks) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for (b, &amp) in psi.iter().enumerate() {
        let (row, phase) = m.column(b);
        acc += psi[row].conj() * phase * amp;
    }
    acc
}

/// `tr(ρP) = Σ_r ρ[r, r ⊕ x] · phase(r)` on a column-major matrix.
pub(crate) fn expect_mixed(rho: &[C64], dim: usize, m: &PauliMasks) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for r in 0..dim {
        let (row, phase) = m.column(r);
        acc += rho[row * dim + r] * phase;
    }
    acc
}

pub(crate) fn real_part(z: C64) -> Result<f64> {
    if !z.re.is_finite() || z.im.abs() > IMAGINARY_REJECT {
        return Err(Error::ImaginaryExpectation(z.im));
    }
    Ok(z.re)
}

pub(crate) fn l2_norm(v: &[C64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

fn register_size(dim: usize) -> Result<usize> {
    if dim < 2 || !dim.is_power_of_two() {
        return Err(Error::Dimension(format!("dimension {dim} is not 2^N with N ≥ 1")));
    }
    Ok(dim.trailing_zeros() as usize)
}

fn check_size(n: usize, p: &PauliString) -> Result<()> {
    if p.n_qubits() != n {
        return Err(Error::Dimension(format!("{p} acts on {} qubits, state has {n}", p.n_qubits())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Axis;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn close(a: C64, b: C64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn north_pole_is_zero_ket() {
        let s = product_state(&[[0.0, 0.0, 1.0]]).unwrap();
        assert!(close(s.amplitudes()[0], C64::new(1.0, 0.0)));
        assert!(close(s.amplitudes()[1], C64::new(0.0, 0.0)));
    }

    #[test]
    fn plus_x_is_plus_ket() {
        let s = product_state(&[[1.0, 0.0, 0.0]]).unwrap();
        assert!(close(s.amplitudes()[0], C64::new(FRAC_1_SQRT_2, 0.0)));
        assert!(close(s.amplitudes()[1], C64::new(FRAC_1_SQRT_2, 0.0)));
    }

    #[test]
    fn two_south_poles_give_one_one() {
        let s = product_state(&[[0.0, 0.0, -1.0], [0.0, 0.0, -1.0]]).unwrap();
        assert_eq!(s.amplitudes()[3], C64::new(1.0, 0.0));
        assert_eq!(s.amplitudes().iter().filter(|a| a.norm() > 0.0).count(), 1);
    }

    #[test]
    fn rejects_non_unit_bloch_vector() {
        assert!(product_state(&[[0.5, 0.0, 0.0]]).is_err());
        assert!(product_state(&[]).is_err());
    }

    #[test]
    fn bloch_vectors_round_trip() {
        let vs = [[0.6, 0.0, 0.8], [0.0, -0.6, -0.8], [-0.48, 0.64, 0.6]];
        let s = product_state(&vs).unwrap();
        let back = s.bloch_vectors().unwrap();
        for (a, b) in vs.iter().zip(&back) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn basic_expectations() {
        let n = 1;
        let z = PauliString::single(n, 0, Axis::Z).unwrap();
        let zero = QuantumState::basis(&[0]).unwrap();
        let plus = product_state(&[[1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(expectation(&zero, &z).unwrap(), 1.0);
        assert!(expectation(&plus, &z).unwrap().abs() < 1e-15);

        let zz = PauliString::parse("Z0Z1", 2).unwrap();
        let s10 = QuantumState::basis(&[1, 0]).unwrap();
        assert_eq!(expectation(&s10, &zz).unwrap(), -1.0);
        let rho = DensityMatrix::from_pure(&s10);
        assert_eq!(expectation(&rho, &zz).unwrap(), -1.0);
        // |10⟩ has site 0 excited.
        let z0 = PauliString::single(2, 0, Axis::Z).unwrap();
        assert_eq!(expectation(&s10, &z0).unwrap(), -1.0);
    }

    #[test]
    fn mixed_and_pure_expectations_agree() {
        let s = product_state(&[[0.6, 0.0, 0.8], [0.0, 0.6, -0.8]]).unwrap();
        let rho = DensityMatrix::from_pure(&s);
        for name in ["X0", "Y1", "X0Y1", "Z0Z1", "Y0X1"] {
            let p = PauliString::parse(name, 2).unwrap();
            let a = s.expectation(&p).unwrap();
            let b = rho.expectation(&p).unwrap();
            assert!((a - b).abs() < 1e-14, "{name}");
        }
    }

    #[test]
    fn density_matrix_validation() {
        let bad_trace = DMatrix::from_element(2, 2, C64::new(0.5, 0.0)) * C64::new(3.0, 0.0);
        assert!(DensityMatrix::new(bad_trace).is_err());
        let non_herm = DMatrix::from_row_slice(
            2,
            2,
            &[C64::new(0.5, 0.0), C64::new(0.1, 0.0), C64::new(0.2, 0.0), C64::new(0.5, 0.0)],
        );
        assert!(DensityMatrix::new(non_herm).is_err());
        let negative = DMatrix::from_row_slice(
            2,
            2,
            &[C64::new(1.5, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(-0.5, 0.0)],
        );
        let rho = DensityMatrix::new(negative).unwrap();
        assert!(rho.check_physical().is_err());
    }

    #[test]
    fn corrupted_state_has_imaginary_expectation_rejected() {
        // A non-Hermitian "state" matrix produces a complex trace.
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[C64::new(1.0, 0.0), C64::new(0.0, 0.5), C64::new(0.0, 0.5), C64::new(0.0, 0.0)],
        );
        let rho = DensityMatrix::from_raw(m, 1);
        let x = PauliString::single(1, 0, Axis::X).unwrap();
        assert!(matches!(rho.expectation(&x), Err(Error::ImaginaryExpectation(_))));
    }
}
