//! Noise channels (dephasing, depolarizing, global white noise), confusion
//! matrix calibration and inversion for readout mitigation, and zero-noise
//! extrapolation.

use ndarray::Array2;
use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::CMat;
use crate::measurement::Counts;
use crate::qstate::DensityMatrix;

#[derive(Debug, Error)]
pub enum MitigationError {
    #[error("noise strength {0} outside [0, 1]")]
    StrengthOutOfRange(f64),
    #[error("target qubit {qubit} out of range for {num_qubits} qubits")]
    TargetOutOfRange { qubit: usize, num_qubits: usize },
    #[error("confusion matrix column {0} sums to {1}, expected 1")]
    NotStochastic(usize, f64),
    #[error("confusion matrix has a negative entry at ({0}, {1})")]
    NegativeEntry(usize, usize),
    #[error("confusion matrix is singular or too ill-conditioned (condition ~ {0:.3e})")]
    Singular(f64),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("calibration requires at least 1 shot")]
    NoShots,
    #[error("zero-noise extrapolation needs two distinct noise strengths")]
    DegenerateNoisePoints,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Qstate(#[from] crate::qstate::QstateError),
}

/// Which noise channel to apply and how strongly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Dephasing,
    Depolarizing,
    White,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub strength: f64,
    /// Qubits the channel acts on; empty means the whole register.
    pub targets: Vec<usize>,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, strength: f64, targets: Vec<usize>) -> Result<Self, MitigationError> {
        if !(0.0..=1.0).contains(&strength) {
            return Err(MitigationError::StrengthOutOfRange(strength));
        }
        Ok(NoiseSpec { kind, strength, targets })
    }
}

fn num_qubits_of(dim: usize) -> usize {
    dim.trailing_zeros() as usize
}

/// Zero out coherences between basis states that differ on the target qubit:
/// the ε = 1 limit of single-qubit dephasing.
fn dephase_qubit(mat: &CMat, qubit: usize, num_qubits: usize) -> CMat {
    let dim = mat.nrows();
    let bit = 1usize << (num_qubits - 1 - qubit);
    let mut out = mat.clone();
    for i in 0..dim {
        for j in 0..dim {
            if (i & bit) != (j & bit) {
                out[[i, j]] = Complex64::new(0.0, 0.0);
            }
        }
    }
    out
}

/// Replace the target qubit's marginal with I/2: the ε = 1 limit of
/// single-qubit depolarizing noise.
fn depolarize_qubit(mat: &CMat, qubit: usize, num_qubits: usize) -> CMat {
    let dim = mat.nrows();
    let bit = 1usize << (num_qubits - 1 - qubit);
    let mut out = CMat::zeros((dim, dim));
    // (I/2) ⊗ Tr_q(ρ): average the two diagonal blocks of the target qubit
    for i in 0..dim {
        for j in 0..dim {
            if (i & bit) == (j & bit) {
                let flipped = mat[[i ^ bit, j ^ bit]];
                out[[i, j]] = (mat[[i, j]] + flipped) * 0.5;
            }
        }
    }
    out
}

/// Apply a noise channel: `ρ -> (1-ε)ρ + ε·C(ρ)` per target qubit for the
/// local channels, or the global white channel `ρ -> (1-ε)ρ + ε·I/d`.
pub fn apply_channel(rho: &DensityMatrix, spec: &NoiseSpec) -> Result<DensityMatrix, MitigationError> {
    if !(0.0..=1.0).contains(&spec.strength) {
        return Err(MitigationError::StrengthOutOfRange(spec.strength));
    }
    let dim = rho.dim();
    let num_qubits = num_qubits_of(dim);
    let eps = spec.strength;
    let targets: Vec<usize> = if spec.targets.is_empty() {
        (0..num_qubits).collect()
    } else {
        spec.targets.clone()
    };
    for &q in &targets {
        if q >= num_qubits {
            return Err(MitigationError::TargetOutOfRange { qubit: q, num_qubits });
        }
    }
    let mut mat = rho.matrix().clone();
    match spec.kind {
        NoiseKind::Dephasing => {
            for &q in &targets {
                let dephased = dephase_qubit(&mat, q, num_qubits);
                mat = mat.mapv(|z| z * (1.0 - eps)) + dephased.mapv(|z| z * eps);
            }
        }
        NoiseKind::Depolarizing => {
            for &q in &targets {
                let depolarized = depolarize_qubit(&mat, q, num_qubits);
                mat = mat.mapv(|z| z * (1.0 - eps)) + depolarized.mapv(|z| z * eps);
            }
        }
        NoiseKind::White => {
            let mut mixed = CMat::zeros((dim, dim));
            for i in 0..dim {
                mixed[[i, i]] = Complex64::new(1.0 / dim as f64, 0.0);
            }
            mat = mat.mapv(|z| z * (1.0 - eps)) + mixed.mapv(|z| z * eps);
        }
    }
    Ok(DensityMatrix::new(mat)?)
}

/// Column-stochastic readout transition matrix Λ with `p(observe j | prepare k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    entries: Array2<f64>,
}

const CONDITION_LIMIT: f64 = 1e8;

impl ConfusionMatrix {
    pub fn new(entries: Array2<f64>) -> Result<Self, MitigationError> {
        let (r, c) = entries.dim();
        if r != c || r == 0 {
            return Err(MitigationError::DimensionMismatch(r, c));
        }
        for j in 0..c {
            let mut sum = 0.0;
            for i in 0..r {
                if entries[[i, j]] < 0.0 {
                    return Err(MitigationError::NegativeEntry(i, j));
                }
                sum += entries[[i, j]];
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(MitigationError::NotStochastic(j, sum));
            }
        }
        let m = ConfusionMatrix { entries };
        let cond = m.condition_estimate()?;
        if cond > CONDITION_LIMIT {
            return Err(MitigationError::Singular(cond));
        }
        Ok(m)
    }

    pub fn identity(dim: usize) -> Self {
        ConfusionMatrix { entries: Array2::eye(dim) }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    /// Apply the forward map Λ·p to an ideal distribution.
    pub fn forward(&self, p: &[f64]) -> Result<Vec<f64>, MitigationError> {
        let n = self.dim();
        if p.len() != n {
            return Err(MitigationError::DimensionMismatch(p.len(), n));
        }
        let mut out = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                out[i] += self.entries[[i, j]] * p[j];
            }
        }
        Ok(out)
    }

    /// Solve Λ·x = p by Gaussian elimination with partial pivoting.
    pub fn invert_apply(&self, p: &[f64]) -> Result<Vec<f64>, MitigationError> {
        let n = self.dim();
        if p.len() != n {
            return Err(MitigationError::DimensionMismatch(p.len(), n));
        }
        let mut a = self.entries.clone();
        let mut x: Vec<f64> = p.to_vec();
        for col in 0..n {
            let mut pivot = col;
            for r in (col + 1)..n {
                if a[[r, col]].abs() > a[[pivot, col]].abs() {
                    pivot = r;
                }
            }
            if a[[pivot, col]].abs() < 1e-14 {
                return Err(MitigationError::Singular(f64::INFINITY));
            }
            if pivot != col {
                for k in 0..n {
                    let tmp = a[[col, k]];
                    a[[col, k]] = a[[pivot, k]];
                    a[[pivot, k]] = tmp;
                }
                x.swap(col, pivot);
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[[r, col]] / a[[col, col]];
                if f == 0.0 {
                    continue;
                }
                for k in col..n {
                    a[[r, k]] -= f * a[[col, k]];
                }
                x[r] -= f * x[col];
            }
        }
        for col in 0..n {
            x[col] /= a[[col, col]];
        }
        Ok(x)
    }

    fn condition_estimate(&self) -> Result<f64, MitigationError> {
        // 1-norm of Λ times 1-norm of Λ⁻¹ (columns solved explicitly)
        let n = self.dim();
        let norm_a: f64 = (0..n)
            .map(|j| (0..n).map(|i| self.entries[[i, j]].abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let mut norm_inv: f64 = 0.0;
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            match self.invert_apply(&e) {
                Ok(col) => {
                    let s: f64 = col.iter().map(|v| v.abs()).sum();
                    norm_inv = norm_inv.max(s);
                }
                Err(_) => return Ok(f64::INFINITY),
            }
        }
        Ok(norm_a * norm_inv)
    }

    /// CSV serialization: one row per line, comma-separated.
    pub fn to_csv(&self) -> String {
        let n = self.dim();
        let mut out = String::new();
        for i in 0..n {
            let row: Vec<String> = (0..n).map(|j| format!("{:.12}", self.entries[[i, j]])).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<ConfusionMatrix, MitigationError> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row: Result<Vec<f64>, _> = line.split(',').map(|t| t.trim().parse::<f64>()).collect();
            let row = row.map_err(|_| MitigationError::Parse {
                line: line_no,
                msg: format!("bad entry in {line:?}"),
            })?;
            if row.iter().any(|v| !v.is_finite()) {
                return Err(MitigationError::Parse { line: line_no, msg: "non-finite entry".into() });
            }
            if let Some(first) = rows.first() {
                if row.len() != first.len() {
                    return Err(MitigationError::Parse {
                        line: line_no,
                        msg: format!("expected {} entries, got {}", first.len(), row.len()),
                    });
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(MitigationError::Parse { line: 1, msg: "empty confusion matrix".into() });
        }
        let n = rows.len();
        if rows[0].len() != n {
            return Err(MitigationError::DimensionMismatch(n, rows[0].len()));
        }
        let mut entries = Array2::zeros((n, n));
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                entries[[i, j]] = v;
            }
        }
        ConfusionMatrix::new(entries)
    }
}

/// Build Λ by preparing each basis state and histogramming the measured
/// outcomes; column k is the empirical distribution for preparation k.
pub fn calibrate_confusion(
    measure_fn: &mut dyn FnMut(usize, u64, u64) -> Counts,
    dim: usize,
    shots: u64,
    rng_seed: u64,
) -> Result<ConfusionMatrix, MitigationError> {
    if shots == 0 {
        return Err(MitigationError::NoShots);
    }
    let mut entries = Array2::zeros((dim, dim));
    for k in 0..dim {
        let counts = measure_fn(k, shots, rng_seed.wrapping_add(k as u64));
        let total: u64 = counts.counts.values().sum();
        if total == 0 {
            return Err(MitigationError::NoShots);
        }
        for (&i, &c) in &counts.counts {
            if i >= dim {
                return Err(MitigationError::DimensionMismatch(i + 1, dim));
            }
            entries[[i, k]] = c as f64 / total as f64;
        }
    }
    ConfusionMatrix::new(entries)
}

/// `Λ⁻¹ · (normalized counts)`: a quasi-distribution that sums to 1 but may
/// have slightly negative entries (preserved, not clipped).
pub fn mitigate_counts(counts: &Counts, lambda: &ConfusionMatrix) -> Result<Vec<f64>, MitigationError> {
    let p = counts.to_probabilities();
    if p.len() != lambda.dim() {
        return Err(MitigationError::DimensionMismatch(p.len(), lambda.dim()));
    }
    lambda.invert_apply(&p)
}

/// Does a quasi-distribution contain negative mass beyond rounding noise?
pub fn has_negative_mass(quasi: &[f64]) -> bool {
    quasi.iter().any(|&v| v < -1e-12)
}

/// Zero-noise extrapolation: the two-point closed form
/// `(ε₂E(ε₁) - ε₁E(ε₂)) / (ε₂ - ε₁)`, or an ordinary-least-squares linear
/// fit evaluated at ε = 0 for more points.
pub fn zne_estimate(points: &[(f64, f64)]) -> Result<f64, MitigationError> {
    let mut eps: Vec<f64> = points.iter().map(|p| p.0).collect();
    eps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    eps.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    if points.len() < 2 || eps.len() < 2 {
        return Err(MitigationError::DegenerateNoisePoints);
    }
    if points.len() == 2 {
        let (e1, y1) = points[0];
        let (e2, y2) = points[1];
        return Ok((e2 * y1 - e1 * y2) / (e2 - e1));
    }
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-15 {
        return Err(MitigationError::DegenerateNoisePoints);
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    Ok(intercept)
}

/// Variance of the two-point extrapolation at equal per-point variance σ²:
/// `σ²(ε₂² + ε₁²) / (ε₂ - ε₁)²`.
pub fn zne_variance(sigma: f64, eps1: f64, eps2: f64) -> Result<f64, MitigationError> {
    if (eps1 - eps2).abs() < 1e-15 {
        return Err(MitigationError::DegenerateNoisePoints);
    }
    if sigma < 0.0 {
        return Err(MitigationError::StrengthOutOfRange(sigma));
    }
    Ok(sigma * sigma * (eps1 * eps1 + eps2 * eps2) / ((eps2 - eps1) * (eps2 - eps1)))
}
