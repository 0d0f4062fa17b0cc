//! Shot-based estimation of Pauli expectations: measurement grouping under
//! qubit-wise and general commutativity, simultaneous diagonalization of
//! commuting Pauli sets, and Bell-basis joint measurement.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::{dagger, identity, kron, CMat};
use crate::qstate::{OperatorSum, Pauli, PauliString, QuantumState, TOL};

#[derive(Debug, Error)]
pub enum MeasurementError {
    #[error("shot count must be at least 1")]
    NoShots,
    #[error("strings {0} and {1} do not commute")]
    NonCommuting(String, String),
    #[error("group strings act on different qubit counts")]
    MixedQubitCounts,
    #[error("diagonalizer failed verification for {string}: residual {residual:.3e}")]
    DiagonalizerMismatch { string: String, residual: f64 },
    #[error("term {0} is not covered by any measurement group")]
    UncoveredTerm(String),
    #[error("term {0} is covered more than once")]
    DuplicateTerm(String),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Qstate(#[from] crate::qstate::QstateError),
    #[error(transparent)]
    Mitigation(#[from] crate::noise_mitigation::MitigationError),
}

/// A set of mutually compatible Pauli strings with the unitary that maps
/// every member to a signed Z-type string.
#[derive(Debug, Clone)]
pub struct MeasurementGroup {
    pub strings: Vec<PauliString>,
    pub basis_change: CMat,
    /// One `(sign, Z-type string)` per member, in the same order.
    pub signed_z_images: Vec<(f64, PauliString)>,
}

impl MeasurementGroup {
    /// Verify `C P C† = s · Z-image` within `1e-10` for every member.
    pub fn verify(&self) -> Result<(), MeasurementError> {
        for (p, (sign, image)) in self.strings.iter().zip(&self.signed_z_images) {
            let pm = crate::qstate::pauli_to_matrix(p)?;
            let im = crate::qstate::pauli_to_matrix(image)?;
            let conj = self.basis_change.dot(&pm).dot(&dagger(&self.basis_change));
            let mut residual = 0.0f64;
            for (a, b) in conj.iter().zip(im.iter()) {
                residual = residual.max((a - b * Complex64::new(*sign, 0.0)).norm());
            }
            if residual > 1e-10 {
                return Err(MeasurementError::DiagonalizerMismatch {
                    string: p.to_string(),
                    residual,
                });
            }
        }
        Ok(())
    }

    /// Text report: strings with their signs and Z-images.
    pub fn report(&self) -> String {
        let mut out = String::new();
        for (p, (sign, image)) in self.strings.iter().zip(&self.signed_z_images) {
            let s = if *sign >= 0.0 { '+' } else { '-' };
            out.push_str(&format!("{p} -> {s}{image}\n"));
        }
        out
    }
}

/// Histogram of measurement outcomes over computational-basis indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counts {
    pub counts: BTreeMap<usize, u64>,
    pub shots: u64,
    pub dim: usize,
}

impl Counts {
    pub fn probability(&self, index: usize) -> f64 {
        *self.counts.get(&index).unwrap_or(&0) as f64 / self.shots as f64
    }

    pub fn to_probabilities(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.dim];
        for (&i, &c) in &self.counts {
            p[i] = c as f64 / self.shots as f64;
        }
        p
    }

    /// CSV serialization: header then `index,count` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,count\n");
        for (i, c) in &self.counts {
            out.push_str(&format!("{i},{c}\n"));
        }
        out
    }

    pub fn from_csv(text: &str, dim: usize) -> Result<Counts, MeasurementError> {
        let mut counts = BTreeMap::new();
        let mut shots = 0u64;
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.trim();
            if line.is_empty() || (line_no == 1 && line == "index,count") {
                continue;
            }
            let (i, c) = line.split_once(',').ok_or_else(|| MeasurementError::Parse {
                line: line_no,
                msg: format!("expected index,count, got {line:?}"),
            })?;
            let i: usize = i.trim().parse().map_err(|_| MeasurementError::Parse {
                line: line_no,
                msg: format!("bad index {i:?}"),
            })?;
            let c: u64 = c.trim().parse().map_err(|_| MeasurementError::Parse {
                line: line_no,
                msg: format!("bad count {c:?}"),
            })?;
            if i >= dim {
                return Err(MeasurementError::Parse {
                    line: line_no,
                    msg: format!("index {i} out of range for dimension {dim}"),
                });
            }
            if counts.insert(i, c).is_some() {
                return Err(MeasurementError::Parse {
                    line: line_no,
                    msg: format!("duplicate index {i}"),
                });
            }
            shots += c;
        }
        if shots == 0 {
            return Err(MeasurementError::NoShots);
        }
        Ok(Counts { counts, shots, dim })
    }
}

/// Draw `shots` outcomes from `|<i| U ψ>|²` (or the mixed-state analogue),
/// deterministically under the seed.
pub fn sample_observable(
    state: &QuantumState,
    basis_change: &CMat,
    shots: u64,
    rng_seed: u64,
) -> Result<Counts, MeasurementError> {
    if shots == 0 {
        return Err(MeasurementError::NoShots);
    }
    let probs = state.probabilities_in_basis(basis_change);
    Ok(sample_distribution(&probs, shots, rng_seed))
}

/// Multinomial sampling from an explicit probability vector.
pub fn sample_distribution(probs: &[f64], shots: u64, rng_seed: u64) -> Counts {
    let mut cumulative = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for &p in probs {
        acc += p.max(0.0);
        cumulative.push(acc);
    }
    let total = acc;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
    for _ in 0..shots {
        let x: f64 = rng.gen_range(0.0..total);
        let idx = match cumulative.binary_search_by(|c| c.partial_cmp(&x).unwrap()) {
            Ok(i) => i + 1,
            Err(i) => i,
        }
        .min(probs.len() - 1);
        *counts.entry(idx).or_insert(0) += 1;
    }
    Counts { counts, shots, dim: probs.len() }
}

fn sorted_non_identity_terms(op: &OperatorSum) -> Vec<(f64, PauliString)> {
    let mut terms: Vec<(f64, PauliString)> = op
        .terms()
        .iter()
        .filter(|(_, p)| !p.is_identity())
        .map(|(w, p)| (w.norm(), p.clone()))
        .collect();
    terms.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then_with(|| a.1.to_string().cmp(&b.1.to_string()))
    });
    terms
}

/// Single-qubit rotation sending the given letter's eigenbasis to the Z
/// basis: `U P U† = Z` exactly (identity for I and Z).
fn letter_rotation(letter: Pauli) -> CMat {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    match letter {
        Pauli::X => ndarray::array![
            [Complex64::new(r, 0.0), Complex64::new(r, 0.0)],
            [Complex64::new(r, 0.0), Complex64::new(-r, 0.0)]
        ],
        Pauli::Y => ndarray::array![
            [Complex64::new(r, 0.0), Complex64::new(0.0, -r)],
            [Complex64::new(r, 0.0), Complex64::new(0.0, r)]
        ],
        Pauli::I | Pauli::Z => identity(2),
    }
}

fn qwc_group_from_strings(
    strings: Vec<PauliString>,
    num_qubits: usize,
) -> Result<MeasurementGroup, MeasurementError> {
    let mut shared = vec![Pauli::I; num_qubits];
    for s in &strings {
        for (q, &l) in s.letters().iter().enumerate() {
            if l != Pauli::I {
                shared[q] = l;
            }
        }
    }
    let mut basis_change = identity(1);
    for &l in &shared {
        basis_change = kron(&basis_change, &letter_rotation(l));
    }
    let signed_z_images = strings
        .iter()
        .map(|s| {
            let letters = s
                .letters()
                .iter()
                .map(|&l| if l == Pauli::I { Pauli::I } else { Pauli::Z })
                .collect();
            Ok((1.0, PauliString::new(letters)?))
        })
        .collect::<Result<Vec<_>, MeasurementError>>()?;
    let group = MeasurementGroup { strings, basis_change, signed_z_images };
    group.verify()?;
    Ok(group)
}

/// Partition the non-identity terms into qubit-wise commuting groups by
/// greedy first-fit over terms sorted by descending |weight|.
pub fn qwc_groups(op: &OperatorSum) -> Result<Vec<MeasurementGroup>, MeasurementError> {
    let terms = sorted_non_identity_terms(op);
    let mut buckets: Vec<Vec<PauliString>> = Vec::new();
    for (_, p) in terms {
        match buckets
            .iter_mut()
            .find(|b| b.iter().all(|q| q.qubit_wise_compatible(&p)))
        {
            Some(bucket) => bucket.push(p),
            None => buckets.push(vec![p]),
        }
    }
    buckets
        .into_iter()
        .map(|b| qwc_group_from_strings(b, op.num_qubits()))
        .collect()
}

/// Partition under general (matrix) commutativity: start from the QWC
/// partition and greedily merge groups whose members all pairwise commute,
/// so the group count never exceeds the QWC count.
pub fn gc_groups(op: &OperatorSum) -> Result<Vec<MeasurementGroup>, MeasurementError> {
    let qwc = qwc_groups(op)?;
    let mut buckets: Vec<Vec<PauliString>> = qwc.into_iter().map(|g| g.strings).collect();
    let mut merged = true;
    while merged {
        merged = false;
        'outer: for i in 0..buckets.len() {
            for j in (i + 1)..buckets.len() {
                let compatible = buckets[i]
                    .iter()
                    .all(|a| buckets[j].iter().all(|b| a.commutes_with(b)));
                if compatible {
                    let extra = buckets.remove(j);
                    buckets[i].extend(extra);
                    merged = true;
                    break 'outer;
                }
            }
        }
    }
    buckets
        .into_iter()
        .map(|strings| {
            let (basis_change, signed_z_images) =
                simultaneous_diagonalizer(&strings, op.num_qubits())?;
            let group = MeasurementGroup { strings, basis_change, signed_z_images };
            group.verify()?;
            Ok(group)
        })
        .collect()
}

fn gate_h(num_qubits: usize, q: usize) -> CMat {
    let mut u = identity(1);
    for k in 0..num_qubits {
        let g = if k == q { letter_rotation(Pauli::X) } else { identity(2) };
        u = kron(&u, &g);
    }
    u
}

fn gate_s(num_qubits: usize, q: usize) -> CMat {
    let mut u = identity(1);
    for k in 0..num_qubits {
        let g = if k == q {
            ndarray::array![
                [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
                [Complex64::new(0.0, 0.0), Complex64::new(0.0, 1.0)]
            ]
        } else {
            identity(2)
        };
        u = kron(&u, &g);
    }
    u
}

fn gate_cnot(num_qubits: usize, control: usize, target: usize) -> CMat {
    let dim = 1 << num_qubits;
    let cbit = num_qubits - 1 - control;
    let tbit = num_qubits - 1 - target;
    let mut u = CMat::zeros((dim, dim));
    for b in 0..dim {
        let out = if (b >> cbit) & 1 == 1 { b ^ (1 << tbit) } else { b };
        u[[out, b]] = Complex64::new(1.0, 0.0);
    }
    u
}

fn gate_cz(num_qubits: usize, a: usize, b: usize) -> CMat {
    let dim = 1 << num_qubits;
    let abit = num_qubits - 1 - a;
    let bbit = num_qubits - 1 - b;
    let mut u = CMat::zeros((dim, dim));
    for idx in 0..dim {
        let sign = if (idx >> abit) & 1 == 1 && (idx >> bbit) & 1 == 1 { -1.0 } else { 1.0 };
        u[[idx, idx]] = Complex64::new(sign, 0.0);
    }
    u
}

/// Binary (x, z) masks of a Pauli string, bit `q` = qubit `q`.
fn tableau_of(p: &PauliString) -> (u32, u32) {
    let mut x = 0u32;
    let mut z = 0u32;
    for (q, &l) in p.letters().iter().enumerate() {
        match l {
            Pauli::X => x |= 1 << q,
            Pauli::Y => {
                x |= 1 << q;
                z |= 1 << q;
            }
            Pauli::Z => z |= 1 << q,
            Pauli::I => {}
        }
    }
    (x, z)
}

/// One unitary `C` with `C P_i C† = s_i · (Z-type string)` for a pairwise
/// commuting set, built by symplectic elimination with H/S/CNOT/CZ gates
/// and realized as a dense matrix.
pub fn simultaneous_diagonalizer(
    strings: &[PauliString],
    num_qubits: usize,
) -> Result<(CMat, Vec<(f64, PauliString)>), MeasurementError> {
    for s in strings {
        if s.len() != num_qubits {
            return Err(MeasurementError::MixedQubitCounts);
        }
    }
    for (i, a) in strings.iter().enumerate() {
        for b in &strings[i + 1..] {
            if !a.commutes_with(b) {
                return Err(MeasurementError::NonCommuting(a.to_string(), b.to_string()));
            }
        }
    }
    let mut tableau: Vec<(u32, u32)> = strings.iter().map(tableau_of).collect();
    let mut c = identity(1 << num_qubits);

    let apply = |gate: CMat, tableau: &mut Vec<(u32, u32)>, rule: &dyn Fn(&mut (u32, u32))| {
        for entry in tableau.iter_mut() {
            rule(entry);
        }
        gate
    };
    // accumulated left-to-right: C = g_last … g_first
    macro_rules! push_gate {
        ($c:ident, $g:expr) => {
            $c = $g.dot(&$c);
        };
    }

    // Phase 1: eliminate every X component. Gates are chosen so that
    // already-Z-type strings stay Z-type throughout.
    for i in 0..tableau.len() {
        if tableau[i].0 == 0 {
            continue;
        }
        let pivot = tableau[i].0.trailing_zeros() as usize;
        // clear other X bits with CNOTs out of the pivot
        for q in 0..num_qubits {
            if q != pivot && tableau[i].0 >> q & 1 == 1 {
                let g = apply(gate_cnot(num_qubits, pivot, q), &mut tableau, &|(x, z)| {
                    // CNOT(c,t): x_t ^= x_c; z_c ^= z_t
                    if *x >> pivot & 1 == 1 {
                        *x ^= 1 << q;
                    }
                    if *z >> q & 1 == 1 {
                        *z ^= 1 << pivot;
                    }
                });
                push_gate!(c, g);
            }
        }
        // remove a Y on the pivot
        if tableau[i].1 >> pivot & 1 == 1 {
            let g = apply(gate_s(num_qubits, pivot), &mut tableau, &|(x, z)| {
                if *x >> pivot & 1 == 1 {
                    *z ^= 1 << pivot;
                }
            });
            push_gate!(c, g);
        }
        // clear remaining Z bits with CZs out of the pivot
        for q in 0..num_qubits {
            if q != pivot && tableau[i].1 >> q & 1 == 1 {
                let g = apply(gate_cz(num_qubits, pivot, q), &mut tableau, &|(x, z)| {
                    // CZ(a,b): z_a ^= x_b; z_b ^= x_a
                    let xa = *x >> pivot & 1;
                    let xb = *x >> q & 1;
                    if xb == 1 {
                        *z ^= 1 << pivot;
                    }
                    if xa == 1 {
                        *z ^= 1 << q;
                    }
                });
                push_gate!(c, g);
            }
        }
        // pivot X -> Z
        let g = apply(gate_h(num_qubits, pivot), &mut tableau, &|(x, z)| {
            let xb = *x >> pivot & 1;
            let zb = *z >> pivot & 1;
            if xb != zb {
                *x ^= 1 << pivot;
                *z ^= 1 << pivot;
            }
        });
        push_gate!(c, g);
    }

    // Phase 2: Gauss-Jordan over the Z masks with CNOTs (which map Z-types
    // to Z-types), making images one-hot whenever the set is independent.
    let mut pivot_mask = 0u32;
    for i in 0..tableau.len() {
        // remove existing pivot bits from this mask where possible
        loop {
            let shared = tableau[i].1 & pivot_mask;
            if shared == 0 {
                break;
            }
            let p = shared.trailing_zeros() as usize;
            let free = tableau[i].1 & !pivot_mask;
            if free == 0 {
                break; // dependent on earlier strings; leave multi-Z
            }
            let t = free.trailing_zeros() as usize;
            // CNOT(c,t): z_c ^= z_t — toggles bit p wherever bit t is set
            let g = apply(gate_cnot(num_qubits, p, t), &mut tableau, &|(x, z)| {
                if *x >> p & 1 == 1 {
                    *x ^= 1 << t;
                }
                if *z >> t & 1 == 1 {
                    *z ^= 1 << p;
                }
            });
            push_gate!(c, g);
        }
        let free = tableau[i].1 & !pivot_mask;
        if tableau[i].1 & pivot_mask != 0 || free == 0 {
            continue;
        }
        let p = free.trailing_zeros() as usize;
        // clear the other bits of this mask
        for q in 0..num_qubits {
            if q != p && tableau[i].1 >> q & 1 == 1 {
                let g = apply(gate_cnot(num_qubits, q, p), &mut tableau, &|(x, z)| {
                    if *x >> q & 1 == 1 {
                        *x ^= 1 << p;
                    }
                    if *z >> p & 1 == 1 {
                        *z ^= 1 << q;
                    }
                });
                push_gate!(c, g);
            }
        }
        pivot_mask |= 1 << p;
    }

    // Read signed images off the dense conjugation; this doubles as the
    // correctness check for the symbolic elimination above.
    let dim = 1usize << num_qubits;
    let cd = dagger(&c);
    let mut images = Vec::with_capacity(strings.len());
    for p in strings {
        let m = c.dot(&crate::qstate::pauli_to_matrix(p)?).dot(&cd);
        let sign = m[[0, 0]].re;
        if (sign.abs() - 1.0).abs() > 1e-8 {
            return Err(MeasurementError::DiagonalizerMismatch {
                string: p.to_string(),
                residual: (sign.abs() - 1.0).abs(),
            });
        }
        let sign = sign.signum();
        let mut letters = vec![Pauli::I; num_qubits];
        for (q, letter) in letters.iter_mut().enumerate() {
            let idx = 1usize << (num_qubits - 1 - q);
            if (m[[idx, idx]].re / sign) < 0.0 {
                *letter = Pauli::Z;
            }
        }
        let image = PauliString::new(letters)?;
        // full verification of the diagonal pattern and off-diagonal decay
        let expected = crate::qstate::pauli_to_matrix(&image)?;
        let mut residual = 0.0f64;
        for i in 0..dim {
            for j in 0..dim {
                residual =
                    residual.max((m[[i, j]] - expected[[i, j]] * sign).norm());
            }
        }
        if residual > 1e-10 {
            return Err(MeasurementError::DiagonalizerMismatch {
                string: p.to_string(),
                residual,
            });
        }
        images.push((sign, image));
    }
    Ok((c, images))
}

/// Bell states in the order (Φ⁺, Φ⁻, Ψ⁺, Ψ⁻).
pub const BELL_LABELS: [&str; 4] = ["phi+", "phi-", "psi+", "psi-"];

/// Basis change whose measurement outcomes 0..3 are the Bell states
/// (Φ⁺, Φ⁻, Ψ⁺, Ψ⁻).
pub fn bell_basis_change() -> CMat {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let z = Complex64::new(0.0, 0.0);
    let p = Complex64::new(r, 0.0);
    let m = Complex64::new(-r, 0.0);
    // rows are Bell bras over |00>, |01>, |10>, |11>
    ndarray::array![
        [p, z, z, p],
        [p, z, z, m],
        [z, p, p, z],
        [z, p, m, z]
    ]
}

/// Joint Bell-basis measurement returning the outcome histogram and the
/// estimates of ⟨XX⟩, ⟨YY⟩, ⟨ZZ⟩ assembled from the sign table
/// XX: +Ψ⁺+Φ⁺−Ψ⁻−Φ⁻, YY: +Ψ⁺+Φ⁻−Ψ⁻−Φ⁺, ZZ: +Φ⁺+Φ⁻−Ψ⁺−Ψ⁻.
pub fn bell_measurement(
    state: &QuantumState,
    shots: u64,
    rng_seed: u64,
) -> Result<(Counts, [f64; 3]), MeasurementError> {
    if state.dim() != 4 {
        return Err(MeasurementError::DimensionMismatch(state.dim(), 4));
    }
    let counts = sample_observable(state, &bell_basis_change(), shots, rng_seed)?;
    let p = counts.to_probabilities();
    let (phi_p, phi_m, psi_p, psi_m) = (p[0], p[1], p[2], p[3]);
    let xx = psi_p + phi_p - psi_m - phi_m;
    let yy = psi_p + phi_m - psi_m - phi_p;
    let zz = phi_p + phi_m - psi_p - psi_m;
    Ok((counts, [xx, yy, zz]))
}

/// Estimate `E = Σ_a w_a <P_a>` by sampling each group in its diagonalized
/// basis. The identity term is added analytically. Returns the estimate and
/// the propagated standard error `sqrt(Σ w_a² var_a)`.
pub fn estimate_pauli_sum(
    op: &OperatorSum,
    state: &QuantumState,
    groups: &[MeasurementGroup],
    shots_per_group: u64,
    rng_seed: u64,
    confusion: Option<&crate::noise_mitigation::ConfusionMatrix>,
) -> Result<(f64, f64), MeasurementError> {
    if shots_per_group == 0 {
        return Err(MeasurementError::NoShots);
    }
    // exact cover check
    let mut coverage: BTreeMap<String, usize> = BTreeMap::new();
    for g in groups {
        for s in &g.strings {
            *coverage.entry(s.to_string()).or_insert(0) += 1;
        }
    }
    let mut weights: BTreeMap<String, f64> = BTreeMap::new();
    for (w, p) in op.terms() {
        if p.is_identity() {
            continue;
        }
        let key = p.to_string();
        match coverage.get(&key) {
            None | Some(0) => return Err(MeasurementError::UncoveredTerm(key)),
            Some(1) => {}
            Some(_) => return Err(MeasurementError::DuplicateTerm(key)),
        }
        weights.insert(key, w.re);
    }
    for key in coverage.keys() {
        if !weights.contains_key(key) {
            return Err(MeasurementError::UncoveredTerm(key.clone()));
        }
    }

    let mut energy = op.identity_coefficient().re;
    let mut variance = 0.0;
    for (gi, g) in groups.iter().enumerate() {
        let counts = sample_observable(state, &g.basis_change, shots_per_group, rng_seed ^ (gi as u64).wrapping_mul(0x9e3779b97f4a7c15))?;
        let probs = match confusion {
            Some(lambda) => crate::noise_mitigation::mitigate_counts(&counts, lambda)?,
            None => counts.to_probabilities(),
        };
        for (s, (sign, image)) in g.strings.iter().zip(&g.signed_z_images) {
            let w = weights[&s.to_string()];
            let mut e = 0.0;
            for (idx, &p) in probs.iter().enumerate() {
                e += p * image.z_eigenvalue(idx);
            }
            e *= sign;
            energy += w * e;
            let var = ((1.0 - e * e) / shots_per_group as f64).max(0.0);
            variance += w * w * var;
        }
    }
    if variance < TOL {
        variance = 0.0;
    }
    Ok((energy, variance.sqrt()))
}
