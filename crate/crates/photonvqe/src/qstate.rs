//! Dense complex linear-algebra core: Pauli strings, operator sums,
//! statevectors, density matrices, exact expectations and exact
//! diagonalization.
//!
//! Conventions used everywhere in this crate:
//! * qubit 0 is the leftmost tensor factor;
//! * computational-basis indices are big-endian, `|q0 q1 .. q_{k-1}>`
//!   maps to `sum_i q_i 2^{k-1-i}`;
//! * dense matrices only, dimension at most 256 (8 qubits).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{self, CMat, CVec};

/// Dense limit: 8 qubits, dimension 256.
pub const MAX_QUBITS: usize = 8;

/// Absolute tolerance for complex equality checks.
pub const TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum QstateError {
    #[error("dense limit exceeded: {qubits} qubits > {MAX_QUBITS}")]
    DenseLimitExceeded { qubits: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("operator is not hermitian (residual {residual:.3e})")]
    NonHermitian { residual: f64 },
    #[error("matrix is not unitary (residual {residual:.3e})")]
    NonUnitary { residual: f64 },
    #[error("state is not normalized (norm {norm})")]
    NotNormalized { norm: f64 },
    #[error("density matrix is not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    NotPositive { min_eig: f64 },
    #[error("trace is {trace}, expected 1")]
    BadTrace { trace: f64 },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("empty Pauli string")]
    EmptyString,
}

/// Single-qubit Pauli letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> CMat {
        let o = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        match self {
            Pauli::I => ndarray::array![[one, o], [o, one]],
            Pauli::X => ndarray::array![[o, one], [one, o]],
            Pauli::Y => ndarray::array![[o, -i], [i, o]],
            Pauli::Z => ndarray::array![[one, o], [o, -one]],
        }
    }

    pub fn from_char(ch: char) -> Option<Pauli> {
        match ch {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    pub fn to_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    /// Product `self * other` as (phase, letter) with phase in {1, i, -1, -i}.
    pub fn mul(self, other: Pauli) -> (Complex64, Pauli) {
        use Pauli::*;
        let one = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        match (self, other) {
            (I, p) => (one, p),
            (p, I) => (one, p),
            (X, X) | (Y, Y) | (Z, Z) => (one, I),
            (X, Y) => (i, Z),
            (Y, X) => (-i, Z),
            (Y, Z) => (i, X),
            (Z, Y) => (-i, X),
            (Z, X) => (i, Y),
            (X, Z) => (-i, Y),
        }
    }
}

/// Tensor product of Pauli letters; qubit 0 is the leftmost factor.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PauliString(Vec<Pauli>);

impl PauliString {
    pub fn new(letters: Vec<Pauli>) -> Result<Self, QstateError> {
        if letters.is_empty() {
            return Err(QstateError::EmptyString);
        }
        Ok(PauliString(letters))
    }

    pub fn identity(num_qubits: usize) -> Self {
        PauliString(vec![Pauli::I; num_qubits])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn letters(&self) -> &[Pauli] {
        &self.0
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().all(|&p| p == Pauli::I)
    }

    /// True when the two strings commute as matrices: they anticommute on an
    /// even number of qubit positions.
    pub fn commutes_with(&self, other: &PauliString) -> bool {
        assert_eq!(self.len(), other.len());
        let anti = self
            .0
            .iter()
            .zip(&other.0)
            .filter(|(&a, &b)| a != Pauli::I && b != Pauli::I && a != b)
            .count();
        anti % 2 == 0
    }

    /// Qubit-wise compatibility: at every position the letters are equal or
    /// one of them is the identity.
    pub fn qubit_wise_compatible(&self, other: &PauliString) -> bool {
        assert_eq!(self.len(), other.len());
        self.0
            .iter()
            .zip(&other.0)
            .all(|(&a, &b)| a == Pauli::I || b == Pauli::I || a == b)
    }

    /// Product with phase tracking: `self * other = phase * string`.
    pub fn mul(&self, other: &PauliString) -> (Complex64, PauliString) {
        assert_eq!(self.len(), other.len());
        let mut phase = Complex64::new(1.0, 0.0);
        let mut letters = Vec::with_capacity(self.len());
        for (&a, &b) in self.0.iter().zip(&other.0) {
            let (ph, p) = a.mul(b);
            phase *= ph;
            letters.push(p);
        }
        (phase, PauliString(letters))
    }

    /// Z-type check (letters drawn from {I, Z} only).
    pub fn is_z_type(&self) -> bool {
        self.0.iter().all(|&p| p == Pauli::I || p == Pauli::Z)
    }

    /// Eigenvalue of a Z-type string on the computational basis state `index`.
    pub fn z_eigenvalue(&self, index: usize) -> f64 {
        debug_assert!(self.is_z_type());
        let k = self.len();
        let mut sign = 1.0;
        for (q, &p) in self.0.iter().enumerate() {
            if p == Pauli::Z && (index >> (k - 1 - q)) & 1 == 1 {
                sign = -sign;
            }
        }
        sign
    }

    /// Apply the string to a basis index: returns (phase, new index).
    pub fn apply_to_basis(&self, index: usize) -> (Complex64, usize) {
        let k = self.len();
        let mut phase = Complex64::new(1.0, 0.0);
        let mut out = index;
        for (q, &p) in self.0.iter().enumerate() {
            let bitpos = k - 1 - q;
            let bit = (index >> bitpos) & 1;
            match p {
                Pauli::I => {}
                Pauli::X => out ^= 1 << bitpos,
                Pauli::Y => {
                    out ^= 1 << bitpos;
                    // Y|0> = i|1>, Y|1> = -i|0>
                    phase *= if bit == 0 {
                        Complex64::new(0.0, 1.0)
                    } else {
                        Complex64::new(0.0, -1.0)
                    };
                }
                Pauli::Z => {
                    if bit == 1 {
                        phase = -phase;
                    }
                }
            }
        }
        (phase, out)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &p in &self.0 {
            write!(f, "{}", p.to_char())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = QstateError;

    fn from_str(s: &str) -> Result<Self, QstateError> {
        let letters: Option<Vec<Pauli>> = s.chars().map(Pauli::from_char).collect();
        match letters {
            Some(l) if !l.is_empty() => Ok(PauliString(l)),
            Some(_) => Err(QstateError::EmptyString),
            None => Err(QstateError::Parse {
                line: 0,
                msg: format!("invalid Pauli letters in {s:?}"),
            }),
        }
    }
}

/// Dense 2^k x 2^k matrix of a Pauli string, qubit 0 leftmost.
pub fn pauli_to_matrix(p: &PauliString) -> Result<CMat, QstateError> {
    let k = p.len();
    if k > MAX_QUBITS {
        return Err(QstateError::DenseLimitExceeded { qubits: k });
    }
    let mut m = p.letters()[0].matrix();
    for &letter in &p.letters()[1..] {
        m = linalg::kron(&m, &letter.matrix());
    }
    Ok(m)
}

/// Weighted sum of Pauli strings in canonical (merged) form.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSum {
    num_qubits: usize,
    terms: Vec<(Complex64, PauliString)>,
}

impl OperatorSum {
    /// Zero operator on `num_qubits` qubits.
    pub fn zero(num_qubits: usize) -> Self {
        OperatorSum { num_qubits, terms: Vec::new() }
    }

    /// Build from raw terms, merging duplicates and dropping terms below TOL.
    pub fn from_terms(
        num_qubits: usize,
        raw: impl IntoIterator<Item = (Complex64, PauliString)>,
    ) -> Result<Self, QstateError> {
        let mut map: BTreeMap<PauliString, Complex64> = BTreeMap::new();
        for (coeff, string) in raw {
            if string.len() != num_qubits {
                return Err(QstateError::DimensionMismatch {
                    left: string.len(),
                    right: num_qubits,
                });
            }
            *map.entry(string).or_insert(Complex64::new(0.0, 0.0)) += coeff;
        }
        let terms = map
            .into_iter()
            .filter(|(_, c)| c.norm() > 1e-14)
            .map(|(s, c)| (c, s))
            .collect();
        Ok(OperatorSum { num_qubits, terms })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.num_qubits
    }

    pub fn terms(&self) -> &[(Complex64, PauliString)] {
        &self.terms
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Coefficient of the all-identity string (zero when absent).
    pub fn identity_coefficient(&self) -> Complex64 {
        self.terms
            .iter()
            .find(|(_, s)| s.is_identity())
            .map(|(c, _)| *c)
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    /// All coefficients real within TOL.
    pub fn is_hermitian(&self) -> bool {
        self.terms.iter().all(|(c, _)| c.im.abs() <= TOL)
    }

    pub fn scale(&self, factor: Complex64) -> OperatorSum {
        OperatorSum {
            num_qubits: self.num_qubits,
            terms: self.terms.iter().map(|(c, s)| (c * factor, s.clone())).collect(),
        }
    }

    pub fn add(&self, other: &OperatorSum) -> Result<OperatorSum, QstateError> {
        if self.num_qubits != other.num_qubits {
            return Err(QstateError::DimensionMismatch {
                left: self.num_qubits,
                right: other.num_qubits,
            });
        }
        OperatorSum::from_terms(
            self.num_qubits,
            self.terms.iter().chain(&other.terms).map(|(c, s)| (*c, s.clone())),
        )
    }

    /// Operator product, expanded and merged.
    pub fn mul(&self, other: &OperatorSum) -> Result<OperatorSum, QstateError> {
        if self.num_qubits != other.num_qubits {
            return Err(QstateError::DimensionMismatch {
                left: self.num_qubits,
                right: other.num_qubits,
            });
        }
        let mut raw = Vec::with_capacity(self.terms.len() * other.terms.len());
        for (ca, sa) in &self.terms {
            for (cb, sb) in &other.terms {
                let (phase, s) = sa.mul(sb);
                raw.push((ca * cb * phase, s));
            }
        }
        OperatorSum::from_terms(self.num_qubits, raw)
    }

    /// Dense matrix of the whole sum.
    pub fn to_matrix(&self) -> Result<CMat, QstateError> {
        if self.num_qubits > MAX_QUBITS {
            return Err(QstateError::DenseLimitExceeded { qubits: self.num_qubits });
        }
        let d = self.dim();
        let mut m = CMat::zeros((d, d));
        for (coeff, string) in &self.terms {
            for col in 0..d {
                let (phase, row) = string.apply_to_basis(col);
                m[[row, col]] += coeff * phase;
            }
        }
        Ok(m)
    }

    /// Line-oriented text form: one `<re> <im> <letters>` per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (c, s) in &self.terms {
            out.push_str(&format!("{} {} {}\n", c.re, c.im, s));
        }
        out
    }

    /// Parse the line-oriented text form; '#' starts a comment.
    pub fn from_text(text: &str) -> Result<OperatorSum, QstateError> {
        let mut raw: Vec<(Complex64, PauliString)> = Vec::new();
        let mut num_qubits: Option<usize> = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(QstateError::Parse {
                    line: lineno + 1,
                    msg: format!("expected `re im letters`, got {} fields", fields.len()),
                });
            }
            let re: f64 = fields[0].parse().map_err(|e| QstateError::Parse {
                line: lineno + 1,
                msg: format!("bad real part: {e}"),
            })?;
            let im: f64 = fields[1].parse().map_err(|e| QstateError::Parse {
                line: lineno + 1,
                msg: format!("bad imaginary part: {e}"),
            })?;
            let string: PauliString = fields[2].parse().map_err(|_| QstateError::Parse {
                line: lineno + 1,
                msg: format!("bad Pauli string {:?}", fields[2]),
            })?;
            match num_qubits {
                None => num_qubits = Some(string.len()),
                Some(k) if k != string.len() => {
                    return Err(QstateError::Parse {
                        line: lineno + 1,
                        msg: format!("string length {} != {}", string.len(), k),
                    })
                }
                _ => {}
            }
            raw.push((Complex64::new(re, im), string));
        }
        let num_qubits = num_qubits.ok_or(QstateError::Parse {
            line: 0,
            msg: "no terms".into(),
        })?;
        OperatorSum::from_terms(num_qubits, raw)
    }
}

/// Normalized pure state on dimension `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amps: CVec,
}

impl StateVector {
    pub fn new(amps: CVec) -> Result<Self, QstateError> {
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > TOL {
            return Err(QstateError::NotNormalized { norm });
        }
        Ok(StateVector { amps })
    }

    /// Normalize an arbitrary nonzero vector.
    pub fn normalized(amps: CVec) -> Result<Self, QstateError> {
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-300 {
            return Err(QstateError::NotNormalized { norm });
        }
        Ok(StateVector { amps: amps.mapv(|a| a / norm) })
    }

    /// Computational basis state `|index>` on dimension `dim`.
    pub fn basis(dim: usize, index: usize) -> Self {
        assert!(index < dim);
        let mut amps = CVec::zeros(dim);
        amps[index] = Complex64::new(1.0, 0.0);
        StateVector { amps }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &CVec {
        &self.amps
    }

    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps
            .iter()
            .zip(other.amps.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn fidelity(&self, other: &StateVector) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// Probability of each basis outcome.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// <psi| P |psi> for a single Pauli string.
    pub fn pauli_expectation(&self, p: &PauliString) -> Complex64 {
        let d = self.dim();
        debug_assert_eq!(d, 1 << p.len());
        let mut acc = Complex64::new(0.0, 0.0);
        for col in 0..d {
            let a = self.amps[col];
            if a.norm_sqr() == 0.0 {
                continue;
            }
            let (phase, row) = p.apply_to_basis(col);
            acc += self.amps[row].conj() * phase * a;
        }
        acc
    }
}

/// Mixed state as a dense density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: CMat,
}

impl DensityMatrix {
    /// Validated constructor: Hermitian, unit trace, positive semidefinite.
    pub fn new(mat: CMat) -> Result<Self, QstateError> {
        let herm = linalg::hermiticity_residual(&mat);
        if herm > TOL {
            return Err(QstateError::NonHermitian { residual: herm });
        }
        let tr = linalg::trace(&mat).re;
        if (tr - 1.0).abs() > TOL {
            return Err(QstateError::BadTrace { trace: tr });
        }
        let (vals, _) = linalg::eigh(&mat);
        if vals[0] < -1e-9 {
            return Err(QstateError::NotPositive { min_eig: vals[0] });
        }
        Ok(DensityMatrix { mat })
    }

    pub fn from_pure(state: &StateVector) -> Self {
        let d = state.dim();
        let mut mat = CMat::zeros((d, d));
        for i in 0..d {
            for j in 0..d {
                mat[[i, j]] = state.amplitudes()[i] * state.amplitudes()[j].conj();
            }
        }
        DensityMatrix { mat }
    }

    /// Maximally mixed state I/d.
    pub fn maximally_mixed(dim: usize) -> Self {
        let mat = CMat::eye(dim).mapv(|z| z / dim as f64);
        DensityMatrix { mat }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    /// Tr[rho P] for a single Pauli string.
    pub fn pauli_expectation(&self, p: &PauliString) -> Complex64 {
        let d = self.dim();
        let mut acc = Complex64::new(0.0, 0.0);
        for col in 0..d {
            let (phase, row) = p.apply_to_basis(col);
            acc += phase * self.mat[[col, row]];
        }
        acc
    }

    /// Diagonal of rho in the computational basis (outcome probabilities).
    pub fn probabilities(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.mat[[i, i]].re.max(0.0)).collect()
    }
}

/// Pure or mixed state; most of the estimation layer is generic over this.
#[derive(Debug, Clone)]
pub enum QuantumState {
    Pure(StateVector),
    Mixed(DensityMatrix),
}

impl QuantumState {
    pub fn dim(&self) -> usize {
        match self {
            QuantumState::Pure(s) => s.dim(),
            QuantumState::Mixed(r) => r.dim(),
        }
    }

    pub fn pauli_expectation(&self, p: &PauliString) -> Complex64 {
        match self {
            QuantumState::Pure(s) => s.pauli_expectation(p),
            QuantumState::Mixed(r) => r.pauli_expectation(p),
        }
    }

    pub fn to_density(&self) -> DensityMatrix {
        match self {
            QuantumState::Pure(s) => DensityMatrix::from_pure(s),
            QuantumState::Mixed(r) => r.clone(),
        }
    }

    /// Outcome probabilities after a basis change `u`.
    pub fn probabilities_in_basis(&self, u: &CMat) -> Vec<f64> {
        match self {
            QuantumState::Pure(s) => {
                let rotated = u.dot(s.amplitudes());
                rotated.iter().map(|a| a.norm_sqr()).collect()
            }
            QuantumState::Mixed(r) => {
                let rotated = u.dot(r.matrix()).dot(&linalg::dagger(u));
                (0..rotated.nrows()).map(|i| rotated[[i, i]].re.max(0.0)).collect()
            }
        }
    }
}

/// Sum of weighted Pauli expectations on a pure or mixed state.
pub fn expectation_exact(state: &QuantumState, op: &OperatorSum) -> Result<Complex64, QstateError> {
    if state.dim() != op.dim() {
        return Err(QstateError::DimensionMismatch {
            left: state.dim(),
            right: op.dim(),
        });
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for (coeff, string) in op.terms() {
        acc += coeff * state.pauli_expectation(string);
    }
    Ok(acc)
}

/// Full real spectrum of a hermitian operator sum, ascending.
pub fn exact_eigensolve(op: &OperatorSum) -> Result<Vec<f64>, QstateError> {
    if !op.is_hermitian() {
        let worst = op
            .terms()
            .iter()
            .map(|(c, _)| c.im.abs())
            .fold(0.0f64, f64::max);
        return Err(QstateError::NonHermitian { residual: worst });
    }
    let m = op.to_matrix()?;
    let (vals, _) = linalg::eigh(&m);
    Ok(vals)
}

/// Ground state (lowest eigenvalue and eigenvector) of a hermitian operator sum.
pub fn ground_state(op: &OperatorSum) -> Result<(f64, StateVector), QstateError> {
    if !op.is_hermitian() {
        return Err(QstateError::NonHermitian { residual: 0.0 });
    }
    let m = op.to_matrix()?;
    let (vals, vecs) = linalg::eigh(&m);
    let v = vecs.column(0).to_owned();
    Ok((vals[0], StateVector::normalized(v)?))
}

/// Apply a unitary matrix to a pure state, rejecting non-unitary input.
pub fn apply_unitary(state: &StateVector, u: &CMat) -> Result<StateVector, QstateError> {
    if u.nrows() != state.dim() || u.ncols() != state.dim() {
        return Err(QstateError::DimensionMismatch {
            left: u.nrows(),
            right: state.dim(),
        });
    }
    let residual = linalg::unitarity_residual(u);
    if residual > 1e-8 {
        return Err(QstateError::NonUnitary { residual });
    }
    StateVector::normalized(u.dot(state.amplitudes()))
}
