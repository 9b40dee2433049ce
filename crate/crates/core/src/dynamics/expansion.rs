use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use super::pauli::PauliString;
use super::state::DensityMatrix;
use crate::{Error, Result};

/// Second-order short-time expansion of `ρ(t) = e^{−iHt} ρ e^{iHt}` for
/// `H = Σ_a λ_a E_a`:
///
/// `ρ + it Σ_a λ_a (ρE_a − E_aρ) + t² Σ_{a,b} λ_aλ_b [E_aρE_b − ½(E_aE_bρ + ρE_aE_b)]`.
///
/// The double sum is evaluated term by term. The result is a truncation and
/// need not be positive; its trace is exactly that of `ρ`.
pub fn short_time_expansion(
    rho0: &DensityMatrix,
    coefficients: &[(f64, PauliString)],
    t: f64,
) -> Result<DensityMatrix> {
    let n = rho0.n_qubits();
    if !t.is_finite() {
        return Err(Error::InvalidArgument(format!("expansion time {t}")));
    }
    for (lambda, e) in coefficients {
        if !lambda.is_finite() {
            return Err(Error::InvalidHamiltonian(format!("coefficient {lambda} on {e} is not a real number")));
        }
        if e.n_qubits() != n {
            return Err(Error::Dimension(format!("{e} does not act on {n} qubits")));
        }
    }
    let rho = rho0.entries();
    let mats: Vec<(f64, DMatrix<C64>)> = coefficients.iter().map(|(l, e)| (*l, e.matrix())).collect();
    let i_t = C64::new(0.0, t);
    let mut out = rho.clone();
    for (la, ea) in &mats {
        out += (rho * ea - ea * rho) * (i_t * *la);
    }
    let t2 = t * t;
    for (la, ea) in &mats {
        let ea_rho = ea * rho;
        for (lb, eb) in &mats {
            let eab = ea * eb;
            let term = &ea_rho * eb - (&eab * rho + rho * &eab) * C64::new(0.5, 0.0);
            out += term * C64::new(t2 * la * lb, 0.0);
        }
    }
    Ok(DensityMatrix::from_raw(out, n))
}
