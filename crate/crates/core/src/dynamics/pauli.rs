use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn letter(self) -> char {
        match self {
            Axis::X => 'X',
            Axis::Y => 'Y',
            Axis::Z => 'Z',
        }
    }
}

/// Tensor product of single-site Pauli operators on an `n_qubits` register.
///
/// Site 0 is the most significant bit of a computational-basis index, so
/// `|10⟩` has site 0 in `|1⟩`. Factors are kept sorted by site.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "PauliStringRepr", into = "PauliStringRepr")]
pub struct PauliString {
    factors: Vec<(usize, Axis)>,
    n_qubits: usize,
}

#[derive(Serialize, Deserialize)]
struct PauliStringRepr {
    name: String,
    n_qubits: usize,
}

impl TryFrom<PauliStringRepr> for PauliString {
    type Error = Error;
    fn try_from(r: PauliStringRepr) -> Result<Self> {
        PauliString::parse(&r.name, r.n_qubits)
    }
}

impl From<PauliString> for PauliStringRepr {
    fn from(p: PauliString) -> Self {
        PauliStringRepr { name: p.name(), n_qubits: p.n_qubits }
    }
}

/// Bit-level form of a Pauli string: `P|b⟩ = i^{n_y} (-1)^{|b ∧ z|} |b ⊕ x⟩`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PauliMasks {
    pub x: usize,
    pub z: usize,
    pub y_phase: C64,
}

impl PauliMasks {
    /// Column `b` of the operator: returns `(row, amplitude)`.
    #[inline]
    pub fn column(&self, b: usize) -> (usize, C64) {
        let sign = if (b & self.z).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
        (b ^ self.x, self.y_phase * sign)
    }
}

impl PauliString {
    pub fn new(n_qubits: usize, mut factors: Vec<(usize, Axis)>) -> Result<Self> {
        if n_qubits == 0 || n_qubits > 24 {
            return Err(Error::InvalidPauli(format!("unsupported register size {n_qubits}")));
        }
        factors.sort_by_key(|&(site, _)| site);
        for w in factors.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidPauli(format!("site {} repeated", w[0].0)));
            }
        }
        if let Some(&(site, _)) = factors.last() {
            if site >= n_qubits {
                return Err(Error::InvalidPauli(format!("site {site} outside register of {n_qubits}")));
            }
        }
        Ok(Self { factors, n_qubits })
    }

    pub fn identity(n_qubits: usize) -> Self {
        Self { factors: Vec::new(), n_qubits }
    }

    pub fn single(n_qubits: usize, site: usize, axis: Axis) -> Result<Self> {
        Self::new(n_qubits, vec![(site, axis)])
    }

    pub fn pair(n_qubits: usize, a: (usize, Axis), b: (usize, Axis)) -> Result<Self> {
        Self::new(n_qubits, vec![a, b])
    }

    /// Parses names such as `Z0`, `X0Y2` or `I`.
    pub fn parse(name: &str, n_qubits: usize) -> Result<Self> {
        let name = name.trim();
        if name == "I" || name.is_empty() {
            return Ok(Self::identity(n_qubits));
        }
        let mut factors = Vec::new();
        let mut chars = name.chars().peekable();
        while let Some(c) = chars.next() {
            let axis = match c {
                'X' | 'x' => Axis::X,
                'Y' | 'y' => Axis::Y,
                'Z' | 'z' => Axis::Z,
                _ => return Err(Error::InvalidPauli(format!("unexpected '{c}' in {name:?}"))),
            };
            let mut digits = String::new();
            while let Some(d) = chars.peek().filter(|d| d.is_ascii_digit()) {
                digits.push(*d);
                chars.next();
            }
            let site: usize =
                digits.parse().map_err(|_| Error::InvalidPauli(format!("missing site index in {name:?}")))?;
            factors.push((site, axis));
        }
        Self::new(n_qubits, factors)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn factors(&self) -> &[(usize, Axis)] {
        &self.factors
    }

    pub fn is_identity(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn weight(&self) -> usize {
        self.factors.len()
    }

    pub fn is_diagonal(&self) -> bool {
        self.factors.iter().all(|&(_, a)| a == Axis::Z)
    }

    pub fn name(&self) -> String {
        if self.factors.is_empty() {
            return "I".to_string();
        }
        self.factors.iter().map(|&(s, a)| format!("{}{}", a.letter(), s)).collect()
    }

    pub fn masks(&self) -> PauliMasks {
        let mut x = 0usize;
        let mut z = 0usize;
        let mut n_y = 0u32;
        for &(site, axis) in &self.factors {
            let bit = 1usize << (self.n_qubits - 1 - site);
            match axis {
                Axis::X => x |= bit,
                Axis::Z => z |= bit,
                Axis::Y => {
                    x |= bit;
                    z |= bit;
                    n_y += 1;
                }
            }
        }
        let y_phase = match n_y % 4 {
            0 => C64::new(1.0, 0.0),
            1 => C64::new(0.0, 1.0),
            2 => C64::new(-1.0, 0.0),
            _ => C64::new(0.0, -1.0),
        };
        PauliMasks { x, z, y_phase }
    }

    /// `out += coeff · P · psi`.
    pub fn apply_add(&self, coeff: C64, psi: &[C64], out: &mut [C64]) {
        let m = self.masks();
        for (b, &amp) in psi.iter().enumerate() {
            let (row, phase) = m.column(b);
            out[row] += coeff * phase * amp;
        }
    }

    pub fn matrix(&self) -> DMatrix<C64> {
        let dim = 1usize << self.n_qubits;
        let m = self.masks();
        let mut out = DMatrix::zeros(dim, dim);
        for b in 0..dim {
            let (row, phase) = m.column(b);
            out[(row, b)] = phase;
        }
        out
    }

    /// Product `self · other` as `(phase, string)`.
    pub fn mul(&self, other: &PauliString) -> Result<(C64, PauliString)> {
        if self.n_qubits != other.n_qubits {
            return Err(Error::Dimension("Pauli strings on different registers".into()));
        }
        let mut phase = C64::new(1.0, 0.0);
        let mut factors = Vec::new();
        let mut lookup = [None; 64];
        for &(s, a) in &other.factors {
            lookup[s] = Some(a);
        }
        let mut seen = [false; 64];
        for &(s, a) in &self.factors {
            seen[s] = true;
            match lookup[s] {
                None => factors.push((s, a)),
                Some(b) if a == b => {}
                Some(b) => {
                    let (p, c) = single_product(a, b);
                    phase *= p;
                    factors.push((s, c));
                }
            }
        }
        for &(s, b) in &other.factors {
            if !seen[s] {
                factors.push((s, b));
            }
        }
        Ok((phase, PauliString::new(self.n_qubits, factors)?))
    }
}

/// `a · b` for distinct single-qubit Paulis.
fn single_product(a: Axis, b: Axis) -> (C64, Axis) {
    let i = C64::new(0.0, 1.0);
    match (a, b) {
        (Axis::X, Axis::Y) => (i, Axis::Z),
        (Axis::Y, Axis::X) => (-i, Axis::Z),
        (Axis::Y, Axis::Z) => (i, Axis::X),
        (Axis::Z, Axis::Y) => (-i, Axis::X),
        (Axis::Z, Axis::X) => (i, Axis::Y),
        (Axis::X, Axis::Z) => (-i, Axis::Y),
        _ => unreachable!("equal axes handled by caller"),
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Real linear combination of Pauli strings on a common register.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PauliSum {
    n_qubits: usize,
    terms: Vec<(f64, PauliString)>,
}

impl PauliSum {
    pub fn new(n_qubits: usize, terms: Vec<(f64, PauliString)>) -> Result<Self> {
        for (c, p) in &terms {
            if p.n_qubits() != n_qubits {
                return Err(Error::Dimension(format!("term {p} acts on {} qubits, sum on {n_qubits}", p.n_qubits())));
            }
            if !c.is_finite() {
                return Err(Error::InvalidHamiltonian(format!("coefficient of {p} is not finite")));
            }
        }
        Ok(Self { n_qubits, terms })
    }

    pub fn zero(n_qubits: usize) -> Self {
        Self { n_qubits, terms: Vec::new() }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn terms(&self) -> &[(f64, PauliString)] {
        &self.terms
    }

    pub fn push(&mut self, coeff: f64, p: PauliString) -> Result<()> {
        if p.n_qubits() != self.n_qubits {
            return Err(Error::Dimension("term on a different register".into()));
        }
        self.terms.push((coeff, p));
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { n_qubits: self.n_qubits, terms: self.terms.iter().map(|(c, p)| (c * factor, p.clone())).collect() }
    }

    /// Upper bound on the spectral norm: `Σ |c|`.
    pub fn norm_bound(&self) -> f64 {
        self.terms.iter().map(|(c, _)| c.abs()).sum()
    }

    pub fn matrix(&self) -> DMatrix<C64> {
        let dim = 1usize << self.n_qubits;
        let mut out = DMatrix::zeros(dim, dim);
        for (c, p) in &self.terms {
            let m = p.masks();
            for b in 0..dim {
                let (row, phase) = m.column(b);
                out[(row, b)] += phase * *c;
            }
        }
        out
    }
}

/// A Pauli sum compiled for fast application: Z-only terms are folded into
/// one diagonal, the rest are kept as bit masks.
#[derive(Clone, Debug)]
pub struct CompiledPauliSum {
    dim: usize,
    diagonal: Vec<f64>,
    flips: Vec<Flip>,
    norm_bound: f64,
}

/// Off-diagonal term `c·P`: column `b` maps to row `b ⊕ x` with amplitude
/// `c · y_phase · signs[b]`.
#[derive(Clone, Debug)]
struct Flip {
    x: usize,
    coeff: C64,
    signs: Vec<f64>,
}

impl CompiledPauliSum {
    pub fn new(sum: &PauliSum) -> Self {
        let dim = 1usize << sum.n_qubits;
        let mut diagonal = vec![0.0; dim];
        let mut flips = Vec::new();
        for (c, p) in &sum.terms {
            let m = p.masks();
            if m.x == 0 {
                for (b, d) in diagonal.iter_mut().enumerate() {
                    let (_, phase) = m.column(b);
                    *d += c * phase.re;
                }
            } else {
                let signs = (0..dim).map(|b| if (b & m.z).count_ones() % 2 == 0 { 1.0 } else { -1.0 }).collect();
                flips.push(Flip { x: m.x, coeff: m.y_phase * *c, signs });
            }
        }
        let norm_bound =
            diagonal.iter().fold(0.0f64, |a, d| a.max(d.abs())) + flips.iter().map(|f| f.coeff.norm()).sum::<f64>();
        Self { dim, diagonal, flips, norm_bound }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    /// `out += scale · H · psi`.
    pub fn apply_add(&self, scale: C64, psi: &[C64], out: &mut [C64]) {
        for ((o, &d), &a) in out.iter_mut().zip(&self.diagonal).zip(psi) {
            *o += scale * d * a;
        }
        for f in &self.flips {
            let coeff = scale * f.coeff;
            for (b, (&a, &sign)) in psi.iter().zip(&f.signs).enumerate() {
                out[b ^ f.x] += coeff * (a * sign);
            }
        }
    }

    /// `out += scale · H · rho` for a column-major `dim × dim` matrix.
    pub fn left_mul_add(&self, scale: C64, rho: &[C64], out: &mut [C64]) {
        let d = self.dim;
        for col in 0..d {
            let src = &rho[col * d..(col + 1) * d];
            let dst = &mut out[col * d..(col + 1) * d];
            self.apply_add(scale, src, dst);
        }
    }

    /// `out += scale · rho · H` for a column-major `dim × dim` matrix.
    ///
    /// Uses `(ρH)[r, c] = Σ_k ρ[r, k] H[k, c]` with the single nonzero
    /// `H[c ⊕ x, c]` per flip term.
    pub fn right_mul_add(&self, scale: C64, rho: &[C64], out: &mut [C64]) {
        let d = self.dim;
        for col in 0..d {
            let s = scale * self.diagonal[col];
            let src = &rho[col * d..(col + 1) * d];
            let dst = &mut out[col * d..(col + 1) * d];
            for (o, &a) in dst.iter_mut().zip(src) {
                *o += s * a;
            }
        }
        for f in &self.flips {
            for col in 0..d {
                let k = col ^ f.x;
                let coeff = scale * f.coeff * f.signs[col];
                let src = &rho[k * d..(k + 1) * d];
                let dst = &mut out[col * d..(col + 1) * d];
                for (o, &a) in dst.iter_mut().zip(src) {
                    *o += coeff * a;
                }
            }
        }
    }
}

/// Ordered, duplicate-free list of Pauli strings to read out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<PauliString>", into = "Vec<PauliString>")]
pub struct ObservableSet {
    entries: Vec<PauliString>,
}

impl TryFrom<Vec<PauliString>> for ObservableSet {
    type Error = Error;
    fn try_from(v: Vec<PauliString>) -> Result<Self> {
        ObservableSet::new(v)
    }
}

impl From<ObservableSet> for Vec<PauliString> {
    fn from(s: ObservableSet) -> Self {
        s.entries
    }
}

impl ObservableSet {
    pub fn new(entries: Vec<PauliString>) -> Result<Self> {
        for (i, a) in entries.iter().enumerate() {
            if entries[..i].contains(a) {
                return Err(Error::InvalidPauli(format!("observable {a} listed twice")));
            }
            if a.n_qubits() != entries[0].n_qubits() {
                return Err(Error::Dimension("observables on different registers".into()));
            }
        }
        Ok(Self { entries })
    }

    /// `{σ₀^α} ∪ {σ₀^α σ_l^β : l = 1..⌊N/2⌋}`, ordered by distance then axes.
    pub fn tfim_default(n_qubits: usize) -> Result<Self> {
        let mut entries = Vec::new();
        for a in Axis::ALL {
            entries.push(PauliString::single(n_qubits, 0, a)?);
        }
        for l in 1..=n_qubits / 2 {
            for a in Axis::ALL {
                for b in Axis::ALL {
                    entries.push(PauliString::pair(n_qubits, (0, a), (l, b))?);
                }
            }
        }
        Self::new(entries)
    }

    /// All 15 non-identity two-qubit Pauli strings, `{I,X,Y,Z}^⊗2 \ {II}`.
    pub fn two_qubit_complete() -> Self {
        let mut entries = Vec::new();
        let opts: [Option<Axis>; 4] = [None, Some(Axis::X), Some(Axis::Y), Some(Axis::Z)];
        for a in opts {
            for b in opts {
                let mut f = Vec::new();
                if let Some(a) = a {
                    f.push((0, a));
                }
                if let Some(b) = b {
                    f.push((1, b));
                }
                if f.is_empty() {
                    continue;
                }
                entries.push(PauliString::new(2, f).expect("valid two-qubit string"));
            }
        }
        Self { entries }
    }

    /// Parses a list of names like `["Z1", "Y0X1"]`.
    pub fn from_names<S: AsRef<str>>(names: &[S], n_qubits: usize) -> Result<Self> {
        let entries = names.iter().map(|n| PauliString::parse(n.as_ref(), n_qubits)).collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }

    pub fn entries(&self) -> &[PauliString] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(PauliString::name).collect()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|p| p.name() == name)
    }
}

impl FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(Axis::X),
            "y" | "Y" => Ok(Axis::Y),
            "z" | "Z" => Ok(Axis::Z),
            _ => Err(Error::InvalidPauli(format!("unknown axis {s:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sigma(a: Axis) -> DMatrix<C64> {
        let o = C64::new(0.0, 0.0);
        let one = C64::new(1.0, 0.0);
        let i = C64::new(0.0, 1.0);
        match a {
            Axis::X => DMatrix::from_row_slice(2, 2, &[o, one, one, o]),
            Axis::Y => DMatrix::from_row_slice(2, 2, &[o, -i, i, o]),
            Axis::Z => DMatrix::from_row_slice(2, 2, &[one, o, o, -one]),
        }
    }

    fn kron_string(p: &PauliString) -> DMatrix<C64> {
        let mut m = DMatrix::from_element(1, 1, C64::new(1.0, 0.0));
        for site in 0..p.n_qubits() {
            let f = p
                .factors()
                .iter()
                .find(|(s, _)| *s == site)
                .map(|&(_, a)| sigma(a))
                .unwrap_or_else(|| DMatrix::identity(2, 2));
            m = m.kronecker(&f);
        }
        m
    }

    #[test]
    fn bitmask_matrix_matches_kronecker_products() {
        for name in ["X0", "Y1", "Z2", "X0Y2", "Y0Y1Z2", "Z0X1", "I"] {
            let p = PauliString::parse(name, 3).unwrap();
            let diff = (p.matrix() - kron_string(&p)).norm();
            assert!(diff < 1e-15, "{name}: {diff}");
        }
    }

    #[test]
    fn names_round_trip() {
        let p = PauliString::parse("Y2X0", 4).unwrap();
        assert_eq!(p.name(), "X0Y2");
        assert_eq!(PauliString::parse(&p.name(), 4).unwrap(), p);
    }

    #[test]
    fn rejects_repeated_or_out_of_range_sites() {
        assert!(PauliString::parse("X0Z0", 2).is_err());
        assert!(PauliString::parse("X3", 3).is_err());
        assert!(PauliString::parse("Q1", 3).is_err());
    }

    #[test]
    fn products_match_matrices() {
        let a = PauliString::parse("X0Y1", 2).unwrap();
        let b = PauliString::parse("Z0X1", 2).unwrap();
        let (phase, c) = a.mul(&b).unwrap();
        let lhs = a.matrix() * b.matrix();
        let rhs = c.matrix() * phase;
        assert!((lhs - rhs).norm() < 1e-15);
    }

    #[test]
    fn tfim_default_counts() {
        assert_eq!(ObservableSet::tfim_default(5).unwrap().len(), 21);
        assert_eq!(ObservableSet::tfim_default(3).unwrap().len(), 12);
        let set = ObservableSet::tfim_default(5).unwrap();
        assert!(set.position("Z0Y2").is_some());
    }

    #[test]
    fn two_qubit_set_excludes_identity() {
        let set = ObservableSet::two_qubit_complete();
        assert_eq!(set.len(), 15);
        assert!(set.entries().iter().all(|p| !p.is_identity()));
    }

    #[test]
    fn compiled_sum_matches_dense() {
        let sum = PauliSum::new(
            3,
            vec![
                (0.7, PauliString::parse("Z0Z1", 3).unwrap()),
                (-1.3, PauliString::parse("X1", 3).unwrap()),
                (0.4, PauliString::parse("Y0Z2", 3).unwrap()),
            ],
        )
        .unwrap();
        let dense = sum.matrix();
        let compiled = CompiledPauliSum::new(&sum);
        let psi: Vec<C64> = (0..8).map(|k| C64::new(k as f64 * 0.1, 1.0 - k as f64 * 0.05)).collect();
        let mut out = vec![C64::new(0.0, 0.0); 8];
        compiled.apply_add(C64::new(1.0, 0.0), &psi, &mut out);
        let expect = &dense * nalgebra::DVector::from_vec(psi.clone());
        for k in 0..8 {
            assert!((out[k] - expect[k]).norm() < 1e-14);
        }
        let rho = DMatrix::from_fn(8, 8, |r, c| C64::new((r * 3 + c) as f64 * 0.01, (r as f64 - c as f64) * 0.02));
        let mut left = vec![C64::new(0.0, 0.0); 64];
        let mut right = vec![C64::new(0.0, 0.0); 64];
        compiled.left_mul_add(C64::new(1.0, 0.0), rho.as_slice(), &mut left);
        compiled.right_mul_add(C64::new(1.0, 0.0), rho.as_slice(), &mut right);
        let l = &dense * &rho;
        let r = &rho * &dense;
        assert!((DMatrix::from_column_slice(8, 8, &left) - l).norm() < 1e-13);
        assert!((DMatrix::from_column_slice(8, 8, &right) - r).norm() < 1e-13);
    }
}
