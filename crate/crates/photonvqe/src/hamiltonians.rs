//! Problem Hamiltonians as `OperatorSum`s: molecular two-qubit templates,
//! the two-qubit Heisenberg and Schwinger models, a factoring Hamiltonian,
//! the Jordan-Wigner transformation, UCCSD ansatz states, and ingestion of
//! molecular coefficient tables.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg;
#[cfg(test)]
use crate::linalg::CMat;
use crate::qstate::{OperatorSum, Pauli, PauliString, QstateError, StateVector};

#[derive(Debug, Error)]
pub enum HamiltonianError {
    #[error("mode index {index} out of range (mode count {count})")]
    ModeOutOfRange { index: usize, count: usize },
    #[error("expected {expected} weights, got {got}")]
    WrongWeightCount { expected: usize, got: usize },
    #[error("unsupported n = {0} (only 35 is built in)")]
    UnsupportedN(u64),
    #[error("orbital count {0} exceeds the dense-exponential limit of 4")]
    TooManyOrbitals(usize),
    #[error("invalid amplitude index: {0}")]
    BadAmplitude(String),
    #[error("generator is not anti-hermitian (residual {0:.3e})")]
    NotAntiHermitian(f64),
    #[error("coefficient file, line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Qstate(#[from] QstateError),
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn ps(s: &str) -> PauliString {
    s.parse().expect("static Pauli string")
}

/// Normal-ordered-ish list of creation/annihilation factors with coefficients.
#[derive(Debug, Clone)]
pub struct FermionOperator {
    mode_count: usize,
    terms: Vec<(Complex64, Vec<(usize, bool)>)>,
}

impl FermionOperator {
    pub fn new(mode_count: usize) -> Self {
        FermionOperator { mode_count, terms: Vec::new() }
    }

    /// Add a term `coeff * prod_k op_k` where `(mode, true)` is a creation
    /// operator and `(mode, false)` an annihilation operator; an empty factor
    /// list is the identity.
    pub fn add_term(
        &mut self,
        coeff: Complex64,
        factors: Vec<(usize, bool)>,
    ) -> Result<(), HamiltonianError> {
        for &(mode, _) in &factors {
            if mode >= self.mode_count {
                return Err(HamiltonianError::ModeOutOfRange { index: mode, count: self.mode_count });
            }
        }
        self.terms.push((coeff, factors));
        Ok(())
    }

    pub fn mode_count(&self) -> usize {
        self.mode_count
    }

    pub fn terms(&self) -> &[(Complex64, Vec<(usize, bool)>)] {
        &self.terms
    }

    /// Hermitian conjugate: reverse factors, toggle daggers, conjugate coefficients.
    pub fn dagger(&self) -> FermionOperator {
        let terms = self
            .terms
            .iter()
            .map(|(coeff, factors)| {
                let flipped: Vec<(usize, bool)> =
                    factors.iter().rev().map(|&(m, d)| (m, !d)).collect();
                (coeff.conj(), flipped)
            })
            .collect();
        FermionOperator { mode_count: self.mode_count, terms }
    }

    pub fn sub(&self, other: &FermionOperator) -> FermionOperator {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().map(|(c0, f)| (-c0, f.clone())));
        FermionOperator { mode_count: self.mode_count, terms }
    }
}

/// Jordan-Wigner image of a single ladder operator on `mode_count` modes.
fn jw_ladder(mode: usize, dagger: bool, mode_count: usize) -> OperatorSum {
    // a_j^dag -> (X_j - iY_j)/2 with Z_0..Z_{j-1};  a_j -> (X_j + iY_j)/2 with the same Z string.
    let mut x_letters = vec![Pauli::I; mode_count];
    let mut y_letters = vec![Pauli::I; mode_count];
    for q in 0..mode {
        x_letters[q] = Pauli::Z;
        y_letters[q] = Pauli::Z;
    }
    x_letters[mode] = Pauli::X;
    y_letters[mode] = Pauli::Y;
    let y_coeff = if dagger { c(0.0, -0.5) } else { c(0.0, 0.5) };
    OperatorSum::from_terms(
        mode_count,
        [
            (c(0.5, 0.0), PauliString::new(x_letters).unwrap()),
            (y_coeff, PauliString::new(y_letters).unwrap()),
        ],
    )
    .unwrap()
}

/// Jordan-Wigner transformation of a fermion operator into a canonical
/// Pauli-string sum.
pub fn jordan_wigner(f: &FermionOperator) -> Result<OperatorSum, HamiltonianError> {
    let k = f.mode_count();
    if k > crate::qstate::MAX_QUBITS {
        return Err(QstateError::DenseLimitExceeded { qubits: k }.into());
    }
    let mut total = OperatorSum::zero(k);
    for (coeff, factors) in f.terms() {
        let mut prod = OperatorSum::from_terms(k, [(c(1.0, 0.0), PauliString::identity(k))]).unwrap();
        for &(mode, dag) in factors {
            prod = prod.mul(&jw_ladder(mode, dag, k))?;
        }
        total = total.add(&prod.scale(*coeff))?;
    }
    Ok(total)
}

const H2_TEMPLATE: [&str; 5] = ["II", "IZ", "ZI", "ZZ", "XX"];
const HEHPLUS_TEMPLATE: [&str; 9] = ["II", "IZ", "ZI", "ZZ", "XX", "IX", "ZX", "XI", "XZ"];

fn build_from_template(template: &[&str], w: &[f64]) -> Result<OperatorSum, HamiltonianError> {
    if w.len() != template.len() {
        return Err(HamiltonianError::WrongWeightCount { expected: template.len(), got: w.len() });
    }
    let k = template[0].len();
    Ok(OperatorSum::from_terms(
        k,
        template.iter().zip(w).map(|(s, &wi)| (c(wi, 0.0), ps(s))),
    )?)
}

/// Five-term two-qubit H2 Hamiltonian:
/// `w0 II + w1 IZ + w2 ZI + w3 ZZ + w4 XX`.
pub fn build_h2(w: &[f64]) -> Result<OperatorSum, HamiltonianError> {
    build_from_template(&H2_TEMPLATE, w)
}

/// Nine-term two-qubit HeH+ Hamiltonian: the H2 template plus
/// `w5 IX + w6 ZX + w7 XI + w8 XZ`.
pub fn build_hehplus(w: &[f64]) -> Result<OperatorSum, HamiltonianError> {
    build_from_template(&HEHPLUS_TEMPLATE, w)
}

/// Two-qubit Heisenberg model `w1 XX + w2 YY + w3 ZZ`.
pub fn build_heisenberg(w1: f64, w2: f64, w3: f64) -> OperatorSum {
    OperatorSum::from_terms(
        2,
        [
            (c(w1, 0.0), ps("XX")),
            (c(w2, 0.0), ps("YY")),
            (c(w3, 0.0), ps("ZZ")),
        ],
    )
    .unwrap()
}

/// Two-qubit Schwinger-model Hamiltonian at particle mass `m`:
/// `II + XX + YY - ZI/2 + ZZ/2 + (m/2)(IZ - ZI)`.
pub fn build_schwinger(m: f64) -> OperatorSum {
    OperatorSum::from_terms(
        2,
        [
            (c(1.0, 0.0), ps("II")),
            (c(1.0, 0.0), ps("XX")),
            (c(1.0, 0.0), ps("YY")),
            (c(-0.5 - m / 2.0, 0.0), ps("ZI")),
            (c(0.5, 0.0), ps("ZZ")),
            (c(m / 2.0, 0.0), ps("IZ")),
        ],
    )
    .unwrap()
}

/// Analytic Schwinger spectrum: `1/2 -+ sqrt(m^2 + m + 17/4)` plus the
/// mass-independent levels 1 and 2, returned ascending.
pub fn schwinger_exact_levels(m: f64) -> [f64; 4] {
    let root = (m * m + m + 17.0 / 4.0).sqrt();
    let mut levels = [0.5 - root, 1.0, 2.0, 0.5 + root];
    levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
    levels
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactoringForm {
    /// Squared operator written with the `6I - Z` factors.
    Eq15,
    /// Same operator written with projectors `5I + 2 Pi_z^1`, `Pi_z^1 = (I-Z)/2`.
    Projector,
}

/// Factoring Hamiltonian for `n = 35`: the squared mismatch
/// `[35 II - (6I - Z) (x) (6I - Z)]^2`, expanded to a canonical sum.
pub fn build_factoring(n: u64, form: FactoringForm) -> Result<OperatorSum, HamiltonianError> {
    if n != 35 {
        return Err(HamiltonianError::UnsupportedN(n));
    }
    let factor = |qubit: usize| -> OperatorSum {
        let mut z = vec![Pauli::I; 2];
        z[qubit] = Pauli::Z;
        match form {
            FactoringForm::Eq15 => OperatorSum::from_terms(
                2,
                [
                    (c(6.0, 0.0), PauliString::identity(2)),
                    (c(-1.0, 0.0), PauliString::new(z).unwrap()),
                ],
            )
            .unwrap(),
            FactoringForm::Projector => {
                // 5 I + 2 Pi_z^1 with Pi_z^1 = (I - Z)/2
                let proj = OperatorSum::from_terms(
                    2,
                    [
                        (c(0.5, 0.0), PauliString::identity(2)),
                        (c(-0.5, 0.0), PauliString::new(z).unwrap()),
                    ],
                )
                .unwrap();
                OperatorSum::from_terms(2, [(c(5.0, 0.0), PauliString::identity(2))])
                    .unwrap()
                    .add(&proj.scale(c(2.0, 0.0)))
                    .unwrap()
            }
        }
    };
    let product = factor(0).mul(&factor(1))?;
    let mismatch = OperatorSum::from_terms(2, [(c(n as f64, 0.0), PauliString::identity(2))])
        .unwrap()
        .add(&product.scale(c(-1.0, 0.0)))?;
    Ok(mismatch.mul(&mismatch)?)
}

/// UCCSD cluster amplitudes: singles `t_ia` and doubles `t_ijab`.
#[derive(Debug, Clone, Default)]
pub struct UccsdAmplitudes {
    singles: BTreeMap<(usize, usize), f64>,
    doubles: BTreeMap<(usize, usize, usize, usize), f64>,
}

impl UccsdAmplitudes {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_single(&mut self, i: usize, a: usize, t: f64) -> Result<(), HamiltonianError> {
        if i == a {
            return Err(HamiltonianError::BadAmplitude(format!("single ({i},{a}) needs i != a")));
        }
        self.singles.insert((i, a), t);
        Ok(())
    }

    pub fn set_double(
        &mut self,
        i: usize,
        j: usize,
        a: usize,
        b: usize,
        t: f64,
    ) -> Result<(), HamiltonianError> {
        if i == j || a == b {
            return Err(HamiltonianError::BadAmplitude(format!(
                "double ({i},{j},{a},{b}) needs i != j and a != b"
            )));
        }
        let key = (i, j, a, b);
        self.doubles.insert(key, t);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.singles.len() + self.doubles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.singles.is_empty() && self.doubles.is_empty()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.singles
            .keys()
            .flat_map(|&(i, a)| [i, a])
            .chain(self.doubles.keys().flat_map(|&(i, j, a, b)| [i, j, a, b]))
            .max()
    }

    /// Assign values from a flat parameter vector in deterministic key order.
    pub fn with_values(&self, theta: &[f64]) -> Result<UccsdAmplitudes, HamiltonianError> {
        if theta.len() != self.len() {
            return Err(HamiltonianError::WrongWeightCount { expected: self.len(), got: theta.len() });
        }
        let mut out = self.clone();
        let mut it = theta.iter();
        for v in out.singles.values_mut() {
            *v = *it.next().unwrap();
        }
        for v in out.doubles.values_mut() {
            *v = *it.next().unwrap();
        }
        Ok(out)
    }
}

/// UCCSD ansatz state: `exp(T - T^dag) |reference>` with the cluster operator
/// mapped through Jordan-Wigner and exponentiated exactly by
/// eigendecomposition.
pub fn uccsd_state(
    reference: usize,
    amps: &UccsdAmplitudes,
    orbital_count: usize,
) -> Result<StateVector, HamiltonianError> {
    if orbital_count > 4 {
        return Err(HamiltonianError::TooManyOrbitals(orbital_count));
    }
    if let Some(max) = amps.max_index() {
        if max >= orbital_count {
            return Err(HamiltonianError::ModeOutOfRange { index: max, count: orbital_count });
        }
    }
    let mut t = FermionOperator::new(orbital_count);
    for (&(i, a), &amp) in &amps.singles {
        t.add_term(c(amp, 0.0), vec![(i, true), (a, false)])?;
    }
    for (&(i, j, a, b), &amp) in &amps.doubles {
        t.add_term(c(amp, 0.0), vec![(i, true), (j, true), (a, false), (b, false)])?;
    }
    let generator = t.sub(&t.dagger());
    let op = jordan_wigner(&generator)?;
    let g = op.to_matrix()?;
    // g must be anti-hermitian: g + g^dag = 0
    let residual = {
        let sum = &g + &linalg::dagger(&g);
        sum.iter().map(|z| z.norm()).fold(0.0f64, f64::max)
    };
    if residual > 1e-10 {
        return Err(HamiltonianError::NotAntiHermitian(residual));
    }
    let u = linalg::expm_antihermitian(&g);
    let dim = 1 << orbital_count;
    let reference_state = StateVector::basis(dim, reference);
    Ok(crate::qstate::apply_unitary(&reference_state, &u)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    H2,
    HeHPlus,
    LiH,
}

impl Model {
    pub fn parse(tag: &str) -> Option<Model> {
        match tag.to_ascii_lowercase().as_str() {
            "h2" => Some(Model::H2),
            "heh+" | "hehplus" => Some(Model::HeHPlus),
            "lih" => Some(Model::LiH),
            _ => None,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Model::H2 => "H2",
            Model::HeHPlus => "HeH+",
            Model::LiH => "LiH",
        }
    }

    /// Lowercase stem used for bundled data files and output names.
    pub fn file_stem(&self) -> &'static str {
        match self {
            Model::H2 => "h2",
            Model::HeHPlus => "hehplus",
            Model::LiH => "lih",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoefficientRow {
    pub bond_length: f64,
    pub weights: Vec<f64>,
    pub reference_energy: Option<f64>,
}

/// Table of Pauli weights per bond length for one molecular model.
#[derive(Debug, Clone)]
pub struct MolecularCoefficients {
    pub model: Model,
    /// Pauli strings the weights refer to, in column order.
    pub strings: Vec<PauliString>,
    pub rows: Vec<CoefficientRow>,
}

impl MolecularCoefficients {
    /// Build the Hamiltonian for one row.
    pub fn hamiltonian(&self, row: usize) -> Result<OperatorSum, HamiltonianError> {
        let r = &self.rows[row];
        match self.model {
            Model::H2 => build_h2(&r.weights),
            Model::HeHPlus => build_hehplus(&r.weights),
            Model::LiH => {
                let k = self.strings[0].len();
                Ok(OperatorSum::from_terms(
                    k,
                    self.strings
                        .iter()
                        .zip(&r.weights)
                        .map(|(s, &w)| (c(w, 0.0), s.clone())),
                )?)
            }
        }
    }
}

/// Parse a coefficient table from text. Format: `# model: <tag>` header,
/// optional `# strings: <letters>...` (required for LiH), data rows
/// `bond_length w0 .. w{A-1} [reference_energy]`, `#` comments.
pub fn parse_coefficients(text: &str) -> Result<MolecularCoefficients, HamiltonianError> {
    let mut model: Option<Model> = None;
    let mut strings: Option<Vec<PauliString>> = None;
    let mut rows: Vec<CoefficientRow> = Vec::new();

    for (lineno, raw_line) in text.lines().enumerate() {
        let line = raw_line.trim();
        let lno = lineno + 1;
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(tag) = rest.strip_prefix("model:") {
                let tag = tag.trim();
                model = Some(Model::parse(tag).ok_or_else(|| HamiltonianError::Parse {
                    line: lno,
                    msg: format!("unknown model {tag:?}"),
                })?);
            } else if let Some(list) = rest.strip_prefix("strings:") {
                let parsed: Result<Vec<PauliString>, _> =
                    list.split_whitespace().map(|s| s.parse()).collect();
                strings = Some(parsed.map_err(|_| HamiltonianError::Parse {
                    line: lno,
                    msg: "bad Pauli string in strings header".into(),
                })?);
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let model = model.ok_or(HamiltonianError::Parse {
            line: lno,
            msg: "data row before `# model:` header".into(),
        })?;
        let fields: Result<Vec<f64>, _> = line.split_whitespace().map(|f| f.parse()).collect();
        let fields = fields.map_err(|e| HamiltonianError::Parse {
            line: lno,
            msg: format!("bad number: {e}"),
        })?;
        let arity = match model {
            Model::H2 => H2_TEMPLATE.len(),
            Model::HeHPlus => HEHPLUS_TEMPLATE.len(),
            Model::LiH => {
                strings
                    .as_ref()
                    .ok_or(HamiltonianError::Parse {
                        line: lno,
                        msg: "LiH rows require a `# strings:` header".into(),
                    })?
                    .len()
            }
        };
        let (weights, reference_energy) = if fields.len() == arity + 1 {
            (fields[1..].to_vec(), None)
        } else if fields.len() == arity + 2 {
            (fields[1..=arity].to_vec(), Some(fields[arity + 1]))
        } else {
            return Err(HamiltonianError::Parse {
                line: lno,
                msg: format!(
                    "expected bond length plus {arity} weights (and optional reference energy), got {} fields",
                    fields.len()
                ),
            });
        };
        let bond_length = fields[0];
        if let Some(prev) = rows.last() {
            if bond_length <= prev.bond_length {
                return Err(HamiltonianError::Parse {
                    line: lno,
                    msg: format!(
                        "bond lengths must be strictly increasing ({} after {})",
                        bond_length, prev.bond_length
                    ),
                });
            }
        }
        rows.push(CoefficientRow { bond_length, weights, reference_energy });
    }

    let model = model.ok_or(HamiltonianError::Parse { line: 0, msg: "no rows".into() })?;
    if rows.is_empty() {
        return Err(HamiltonianError::Parse { line: 0, msg: "no rows".into() });
    }
    let strings = match model {
        Model::H2 => H2_TEMPLATE.iter().map(|s| ps(s)).collect(),
        Model::HeHPlus => HEHPLUS_TEMPLATE.iter().map(|s| ps(s)).collect(),
        Model::LiH => strings.ok_or(HamiltonianError::Parse {
            line: 0,
            msg: "LiH table requires a `# strings:` header".into(),
        })?,
    };
    Ok(MolecularCoefficients { model, strings, rows })
}

/// Load and validate a coefficient table from a file.
pub fn load_coefficients(path: impl AsRef<Path>) -> Result<MolecularCoefficients, HamiltonianError> {
    let text = std::fs::read_to_string(path)?;
    parse_coefficients(&text)
}

/// Dense matrix of a number operator `a_j^dag a_j`, used as a brute-force
/// cross-check for the Jordan-Wigner path in tests.
#[cfg(test)]
fn number_operator_matrix(mode: usize, mode_count: usize) -> CMat {
    let dim = 1 << mode_count;
    let mut m = CMat::zeros((dim, dim));
    for idx in 0..dim {
        // occupation of `mode` in big-endian index
        if (idx >> (mode_count - 1 - mode)) & 1 == 1 {
            m[[idx, idx]] = c(1.0, 0.0);
        }
    }
    m
}
