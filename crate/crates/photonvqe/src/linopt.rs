//! Linear-optics layer: beam-splitter meshes (triangular and square
//! layouts), per-element loss, permanent-based multi-photon Fock evolution,
//! dual-rail post-selection, and wave-plate / polarizing-beam-displacer gate
//! models.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{dagger, identity, trace, unitarity_residual, CMat};
use crate::qstate::StateVector;

/// Largest interferometer size handled by the dense routines.
pub const MAX_MODES: usize = 8;
/// Largest total photon number for Fock-space evolution.
pub const MAX_PHOTONS: usize = 3;

pub type ModeUnitary = CMat;

#[derive(Debug, Error)]
pub enum LinoptError {
    #[error("mode pair ({m}, {n}) invalid for {mode_count} modes (need m = n - 1 < mode_count)")]
    BadModePair { m: usize, n: usize, mode_count: usize },
    #[error("angles must be finite")]
    NonFiniteAngle,
    #[error("matrix is not unitary (residual {residual:.3e})")]
    NonUnitary { residual: f64 },
    #[error("mode count {0} exceeds the supported maximum {MAX_MODES}")]
    TooManyModes(usize),
    #[error("total photon number {0} exceeds the supported maximum {MAX_PHOTONS}")]
    TooManyPhotons(usize),
    #[error("transmission {0} outside (0, 1]")]
    TransmissionOutOfRange(f64),
    #[error("visibility {0} outside [0, 1]")]
    VisibilityOutOfRange(f64),
    #[error("rail pairs must be disjoint valid modes")]
    BadRailPairs,
    #[error("photon number {photons} does not match {pairs} rail pairs")]
    PhotonCountMismatch { photons: usize, pairs: usize },
    #[error("post-selection annihilated the state")]
    PostSelectionAnnihilated,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Qstate(#[from] crate::qstate::QstateError),
}

/// One beam-splitter-plus-phase element acting on the adjacent mode pair
/// `(m, n)` with `n = m + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshElement {
    pub m: usize,
    pub n: usize,
    pub theta: f64,
    pub phi: f64,
}

impl MeshElement {
    pub fn new(m: usize, theta: f64, phi: f64) -> Result<Self, LinoptError> {
        if !theta.is_finite() || !phi.is_finite() {
            return Err(LinoptError::NonFiniteAngle);
        }
        Ok(MeshElement { m, n: m + 1, theta, phi })
    }
}

/// A full interferometer: ordered elements and the output phase screen `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamSplitterMesh {
    pub mode_count: usize,
    pub elements: Vec<MeshElement>,
    /// Phases of the diagonal `D = diag(e^{i p_k})`.
    pub output_phases: Vec<f64>,
}

/// Photon occupation numbers per mode.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FockState(pub Vec<usize>);

impl FockState {
    pub fn new(occupations: Vec<usize>) -> Result<Self, LinoptError> {
        let total: usize = occupations.iter().sum();
        if total > MAX_PHOTONS {
            return Err(LinoptError::TooManyPhotons(total));
        }
        if occupations.len() > MAX_MODES {
            return Err(LinoptError::TooManyModes(occupations.len()));
        }
        Ok(FockState(occupations))
    }

    pub fn total_photons(&self) -> usize {
        self.0.iter().sum()
    }
}

impl std::fmt::Display for FockState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "|")?;
        for (i, occ) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{occ}")?;
        }
        write!(f, ">")
    }
}

/// Output amplitudes of a Fock-space evolution, keyed by occupation pattern.
#[derive(Debug, Clone)]
pub struct AmplitudeMap {
    pub amplitudes: BTreeMap<FockState, Complex64>,
    pub total_probability: f64,
}

impl AmplitudeMap {
    pub fn amplitude(&self, state: &FockState) -> Complex64 {
        self.amplitudes.get(state).copied().unwrap_or_default()
    }

    pub fn probability(&self, state: &FockState) -> f64 {
        self.amplitude(state).norm_sqr()
    }
}

fn check_element(e: &MeshElement, mode_count: usize) -> Result<(), LinoptError> {
    if e.n != e.m + 1 || e.n >= mode_count {
        return Err(LinoptError::BadModePair { m: e.m, n: e.n, mode_count });
    }
    if !e.theta.is_finite() || !e.phi.is_finite() {
        return Err(LinoptError::NonFiniteAngle);
    }
    Ok(())
}

fn embed_block(m: usize, block: [[Complex64; 2]; 2], mode_count: usize) -> CMat {
    let mut u = identity(mode_count);
    u[[m, m]] = block[0][0];
    u[[m, m + 1]] = block[0][1];
    u[[m + 1, m]] = block[1][0];
    u[[m + 1, m + 1]] = block[1][1];
    u
}

fn element_block(e: &MeshElement, amplitude_scale: f64) -> [[Complex64; 2]; 2] {
    let (c, s) = (e.theta.cos(), e.theta.sin());
    let ph = Complex64::from_polar(1.0, e.phi);
    let t = Complex64::new(amplitude_scale, 0.0);
    [
        [t * ph * c, t * Complex64::new(-s, 0.0)],
        [t * ph * s, t * Complex64::new(c, 0.0)],
    ]
}

/// Embed a mesh element as a full `mode_count x mode_count` unitary.
pub fn bs_embed(e: &MeshElement, mode_count: usize) -> Result<ModeUnitary, LinoptError> {
    check_element(e, mode_count)?;
    Ok(embed_block(e.m, element_block(e, 1.0), mode_count))
}

fn check_unitary(u: &CMat, tol: f64) -> Result<usize, LinoptError> {
    let m = u.nrows();
    if m != u.ncols() || m == 0 {
        return Err(LinoptError::NonUnitary { residual: f64::INFINITY });
    }
    if m > MAX_MODES {
        return Err(LinoptError::TooManyModes(m));
    }
    let residual = unitarity_residual(u);
    if residual > tol {
        return Err(LinoptError::NonUnitary { residual });
    }
    Ok(m)
}

/// Nulling step by right multiplication `V <- V T†` on the column pair
/// `(m, m+1)`, zeroing `V[r, m]`.
fn null_right(v: &mut CMat, r: usize, m: usize) -> MeshElement {
    let a = v[[r, m]];
    let b = v[[r, m + 1]];
    let theta = a.norm().atan2(b.norm());
    let ratio = a * b.conj();
    let phi = if ratio.norm() < 1e-300 { 0.0 } else { ratio.arg() };
    let e = MeshElement { m, n: m + 1, theta, phi };
    let block = element_block(&e, 1.0);
    // columns m, m+1 of V <- V T†: [col_m, col_n] <- [col_m, col_n] B†
    let rows = v.nrows();
    for i in 0..rows {
        let vm = v[[i, m]];
        let vn = v[[i, m + 1]];
        v[[i, m]] = vm * block[0][0].conj() + vn * block[0][1].conj();
        v[[i, m + 1]] = vm * block[1][0].conj() + vn * block[1][1].conj();
    }
    e
}

/// Nulling step by left multiplication `V <- T V` on the row pair
/// `(m, m+1)`, zeroing `V[m + 1, c]`.
fn null_left(v: &mut CMat, m: usize, c: usize) -> MeshElement {
    let a = v[[m + 1, c]];
    let b = v[[m, c]];
    let theta = a.norm().atan2(b.norm());
    let ratio = -a * b.conj();
    let phi = if ratio.norm() < 1e-300 { 0.0 } else { ratio.arg() };
    let e = MeshElement { m, n: m + 1, theta, phi };
    let block = element_block(&e, 1.0);
    let cols = v.ncols();
    for j in 0..cols {
        let vm = v[[m, j]];
        let vn = v[[m + 1, j]];
        v[[m, j]] = block[0][0] * vm + block[0][1] * vn;
        v[[m + 1, j]] = block[1][0] * vm + block[1][1] * vn;
    }
    e
}

/// Square-layout decomposition: `U = D · T_1 T_2 … T_K` with
/// `K = M(M-1)/2` and alternating nulling diagonals.
pub fn clements_decompose(u: &ModeUnitary) -> Result<BeamSplitterMesh, LinoptError> {
    let m_count = check_unitary(u, 1e-8)?;
    let mut v = u.clone();
    let mut right_ops: Vec<MeshElement> = Vec::new();
    let mut left_ops: Vec<MeshElement> = Vec::new();
    for i in 1..m_count {
        if i % 2 == 1 {
            for j in 0..i {
                let row = m_count - 1 - j;
                let col = i - j - 1;
                right_ops.push(null_right(&mut v, row, col));
            }
        } else {
            for j in 1..=i {
                let m = m_count + j - i - 2;
                let col = j - 1;
                left_ops.push(null_left(&mut v, m, col));
            }
        }
    }
    // V is now diagonal: (prod lefts) U (prod rights†) = D, so
    // U = L_1† … L_q† D R_p … R_1. Commute each L† through D:
    // T†(θ, φ) D = D' T(θ, φ') with d'_n = d_n, d'_m = -e^{-iφ} d_n,
    // φ' = arg(-d_m / d_n).
    let mut d: Vec<Complex64> = (0..m_count).map(|k| v[[k, k]]).collect();
    let mut transformed: Vec<MeshElement> = Vec::with_capacity(left_ops.len());
    for e in left_ops.iter().rev() {
        let dm = d[e.m];
        let dn = d[e.n];
        if e.theta.sin() == 0.0 {
            // nulling angles lie in [0, π/2], so this is θ = 0 and
            // T(0, φ)† is diagonal; fold it into D directly
            d[e.m] = Complex64::from_polar(1.0, -e.phi) * dm;
            transformed.push(MeshElement { m: e.m, n: e.n, theta: 0.0, phi: 0.0 });
            continue;
        }
        let phi_new = (-dm / dn).arg();
        d[e.m] = -Complex64::from_polar(1.0, -e.phi) * dn;
        transformed.push(MeshElement { m: e.m, n: e.n, theta: e.theta, phi: phi_new });
    }
    transformed.reverse();
    let mut elements = transformed;
    elements.extend(right_ops.into_iter().rev());
    let output_phases = d.iter().map(|z| z.arg()).collect();
    Ok(BeamSplitterMesh { mode_count: m_count, elements, output_phases })
}

/// Triangular-layout decomposition using right multiplications only.
pub fn reck_decompose(u: &ModeUnitary) -> Result<BeamSplitterMesh, LinoptError> {
    let m_count = check_unitary(u, 1e-8)?;
    let mut v = u.clone();
    let mut ops: Vec<MeshElement> = Vec::new();
    for row in (1..m_count).rev() {
        for col in 0..row {
            ops.push(null_right(&mut v, row, col));
        }
    }
    let output_phases = (0..m_count).map(|k| v[[k, k]].arg()).collect();
    ops.reverse();
    Ok(BeamSplitterMesh { mode_count: m_count, elements: ops, output_phases })
}

fn reconstruct_scaled(mesh: &BeamSplitterMesh, amplitude_scale: f64) -> Result<CMat, LinoptError> {
    let m = mesh.mode_count;
    if m > MAX_MODES {
        return Err(LinoptError::TooManyModes(m));
    }
    if mesh.output_phases.len() != m {
        return Err(LinoptError::Parse {
            line: 0,
            msg: format!("expected {m} output phases, got {}", mesh.output_phases.len()),
        });
    }
    let mut u = CMat::zeros((m, m));
    for (k, p) in mesh.output_phases.iter().enumerate() {
        u[[k, k]] = Complex64::from_polar(1.0, *p);
    }
    for e in &mesh.elements {
        check_element(e, m)?;
        let t = embed_block(e.m, element_block(e, amplitude_scale), m);
        u = u.dot(&t);
    }
    Ok(u)
}

/// `D · (prod of elements in list order)`.
pub fn mesh_reconstruct(mesh: &BeamSplitterMesh) -> Result<ModeUnitary, LinoptError> {
    let u = reconstruct_scaled(mesh, 1.0)?;
    check_unitary(&u, 1e-8)?;
    Ok(u)
}

/// Reconstruction with amplitude transmission `sqrt(t)` applied to every
/// element's 2x2 block; sub-unitary for `t < 1`.
pub fn mesh_with_loss(mesh: &BeamSplitterMesh, transmission: f64) -> Result<CMat, LinoptError> {
    if !(transmission > 0.0 && transmission <= 1.0) {
        return Err(LinoptError::TransmissionOutOfRange(transmission));
    }
    reconstruct_scaled(mesh, transmission.sqrt())
}

/// Normalized overlap `|Tr(U† A)|² / (M · Tr(A† A))`, equal to 1 when
/// `A = U` and bounded by [0, 1].
pub fn mesh_fidelity(ideal: &ModeUnitary, actual: &CMat) -> f64 {
    let m = ideal.nrows() as f64;
    let overlap = trace(&dagger(ideal).dot(actual)).norm_sqr();
    let denom = m * trace(&dagger(actual).dot(actual)).re;
    if denom <= 0.0 {
        return 0.0;
    }
    (overlap / denom).clamp(0.0, 1.0)
}

fn permanent(a: &[Vec<Complex64>]) -> Complex64 {
    match a.len() {
        0 => Complex64::new(1.0, 0.0),
        1 => a[0][0],
        2 => a[0][0] * a[1][1] + a[0][1] * a[1][0],
        3 => {
            a[0][0] * (a[1][1] * a[2][2] + a[1][2] * a[2][1])
                + a[0][1] * (a[1][0] * a[2][2] + a[1][2] * a[2][0])
                + a[0][2] * (a[1][0] * a[2][1] + a[1][1] * a[2][0])
        }
        n => panic!("permanent only implemented for n <= {MAX_PHOTONS}, got {n}"),
    }
}

fn expand_modes(occ: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    for (mode, &count) in occ.iter().enumerate() {
        for _ in 0..count {
            out.push(mode);
        }
    }
    out
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn occupation_patterns(modes: usize, photons: usize) -> Vec<Vec<usize>> {
    if modes == 1 {
        return vec![vec![photons]];
    }
    let mut out = Vec::new();
    for first in (0..=photons).rev() {
        for mut rest in occupation_patterns(modes - 1, photons - first) {
            let mut v = vec![first];
            v.append(&mut rest);
            out.push(v);
        }
    }
    out
}

/// Evolve a Fock input through a (possibly sub-unitary) mode transformation.
///
/// The amplitude on output `S` is `Perm(U_{S,T}) / sqrt(prod s_i! prod t_j!)`
/// where `U_{S,T}` repeats rows by `S` and columns by `T`.
pub fn fock_evolve(u: &CMat, input: &FockState) -> Result<AmplitudeMap, LinoptError> {
    let m = u.nrows();
    if m != u.ncols() || m > MAX_MODES {
        return Err(LinoptError::TooManyModes(m.max(u.ncols())));
    }
    if input.0.len() != m {
        return Err(LinoptError::BadRailPairs);
    }
    let n = input.total_photons();
    if n > MAX_PHOTONS {
        return Err(LinoptError::TooManyPhotons(n));
    }
    let cols = expand_modes(&input.0);
    let t_fact: f64 = input.0.iter().map(|&t| factorial(t)).product();
    let mut amplitudes = BTreeMap::new();
    let mut total = 0.0;
    for pattern in occupation_patterns(m, n) {
        let rows = expand_modes(&pattern);
        let sub: Vec<Vec<Complex64>> = rows
            .iter()
            .map(|&r| cols.iter().map(|&c| u[[r, c]]).collect())
            .collect();
        let s_fact: f64 = pattern.iter().map(|&s| factorial(s)).product();
        let amp = permanent(&sub) / (s_fact * t_fact).sqrt();
        if amp.norm_sqr() > 0.0 {
            total += amp.norm_sqr();
            amplitudes.insert(FockState(pattern), amp);
        }
    }
    Ok(AmplitudeMap { amplitudes, total_probability: total })
}

/// Project onto the dual-rail qubit subspace: exactly one photon per rail
/// pair, `|0> =` first rail occupied. Returns the renormalized qubit state
/// and the kept probability mass.
pub fn dual_rail_postselect(
    amps: &AmplitudeMap,
    rail_pairs: &[(usize, usize)],
) -> Result<(StateVector, f64), LinoptError> {
    let k = rail_pairs.len();
    let mut seen = std::collections::BTreeSet::new();
    for &(a, b) in rail_pairs {
        if a == b || !seen.insert(a) || !seen.insert(b) {
            return Err(LinoptError::BadRailPairs);
        }
    }
    let dim = 1usize << k;
    let mut vec = vec![Complex64::new(0.0, 0.0); dim];
    let mut kept = 0.0;
    for (state, amp) in &amps.amplitudes {
        let photons = state.total_photons();
        if photons != k {
            return Err(LinoptError::PhotonCountMismatch { photons, pairs: k });
        }
        let mut index = 0usize;
        let mut ok = true;
        for &(zero_mode, one_mode) in rail_pairs {
            if zero_mode >= state.0.len() || one_mode >= state.0.len() {
                return Err(LinoptError::BadRailPairs);
            }
            let (z, o) = (state.0[zero_mode], state.0[one_mode]);
            match (z, o) {
                (1, 0) => index = (index << 1) | 0,
                (0, 1) => index = (index << 1) | 1,
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            vec[index] = *amp;
            kept += amp.norm_sqr();
        }
    }
    if kept < 1e-12 {
        return Err(LinoptError::PostSelectionAnnihilated);
    }
    let norm = kept.sqrt();
    for a in &mut vec {
        *a /= norm;
    }
    Ok((StateVector::new(ndarray::Array1::from(vec))?, kept))
}

/// Wave-plate kinds in the polarization encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaveplateKind {
    Half,
    Quarter,
}

/// Jones matrix of a wave plate with its fast axis at `angle` radians.
///
/// `HWP(θ) = [[cos 2θ, sin 2θ], [sin 2θ, -cos 2θ]]` and
/// `QWP(θ) = 1/√2 [[1 + i cos 2θ, i sin 2θ], [i sin 2θ, 1 - i cos 2θ]]`
/// (determinant-one, global-phase-free retardance-π/2 form).
pub fn waveplate(kind: WaveplateKind, angle: f64) -> CMat {
    let (c, s) = ((2.0 * angle).cos(), (2.0 * angle).sin());
    match kind {
        WaveplateKind::Half => ndarray::array![
            [Complex64::new(c, 0.0), Complex64::new(s, 0.0)],
            [Complex64::new(s, 0.0), Complex64::new(-c, 0.0)]
        ],
        WaveplateKind::Quarter => {
            let r = std::f64::consts::FRAC_1_SQRT_2;
            ndarray::array![
                [Complex64::new(r, r * c), Complex64::new(0.0, r * s)],
                [Complex64::new(0.0, r * s), Complex64::new(r, -r * c)]
            ]
        }
    }
}

/// Polarizing-beam-displacer CNOT: polarization control (qubit 0), path
/// target (qubit 1); `|V>` displaces the path, `|H>` passes through.
pub fn pbd_cnot() -> CMat {
    let mut u = CMat::zeros((4, 4));
    let one = Complex64::new(1.0, 0.0);
    u[[0, 0]] = one;
    u[[1, 1]] = one;
    u[[2, 3]] = one;
    u[[3, 2]] = one;
    u
}

/// Interference visibility to effective noise strength: `ε = 1 - V`.
pub fn visibility_to_noise(visibility: f64) -> Result<f64, LinoptError> {
    if !(0.0..=1.0).contains(&visibility) {
        return Err(LinoptError::VisibilityOutOfRange(visibility));
    }
    Ok(1.0 - visibility)
}

/// Haar-random unitary via Gram-Schmidt QR of a complex Gaussian matrix
/// with the positive-diagonal phase convention.
pub fn haar_unitary(modes: usize, rng: &mut impl rand::Rng) -> CMat {
    use rand::distributions::Distribution;
    let normal = rand_distr_standard_normal();
    let mut a = CMat::zeros((modes, modes));
    for i in 0..modes {
        for j in 0..modes {
            a[[i, j]] = Complex64::new(normal.sample(rng), normal.sample(rng));
        }
    }
    // modified Gram-Schmidt on columns; r_jj > 0 makes Q Haar-distributed
    let mut q = a.clone();
    for j in 0..modes {
        for k in 0..j {
            let mut proj = Complex64::new(0.0, 0.0);
            for i in 0..modes {
                proj += q[[i, k]].conj() * q[[i, j]];
            }
            for i in 0..modes {
                let qik = q[[i, k]];
                q[[i, j]] -= proj * qik;
            }
        }
        let norm: f64 = (0..modes).map(|i| q[[i, j]].norm_sqr()).sum::<f64>().sqrt();
        for i in 0..modes {
            q[[i, j]] /= norm;
        }
    }
    q
}

fn rand_distr_standard_normal() -> impl rand::distributions::Distribution<f64> {
    // Box-Muller through the uniform distribution keeps the dependency set
    // small; adequate for Haar sampling.
    struct BoxMuller;
    impl rand::distributions::Distribution<f64> for BoxMuller {
        fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        }
    }
    BoxMuller
}

/// Serialize a mode transformation: first line `M`, then `M` rows of `M`
/// comma-joined `re,im` pairs separated by spaces.
pub fn write_mode_unitary(u: &CMat) -> String {
    let m = u.nrows();
    let mut out = format!("{m}\n");
    for i in 0..m {
        let row: Vec<String> = (0..m)
            .map(|j| format!("{:.17e},{:.17e}", u[[i, j]].re, u[[i, j]].im))
            .collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

pub fn parse_mode_unitary(text: &str) -> Result<CMat, LinoptError> {
    let mut lines = text.lines().enumerate();
    let (_, first) = lines
        .next()
        .ok_or(LinoptError::Parse { line: 1, msg: "empty input".into() })?;
    let m: usize = first.trim().parse().map_err(|_| LinoptError::Parse {
        line: 1,
        msg: format!("expected mode count, got {first:?}"),
    })?;
    if m == 0 || m > MAX_MODES {
        return Err(LinoptError::Parse {
            line: 1,
            msg: format!("mode count {m} outside 1..={MAX_MODES}"),
        });
    }
    let mut u = CMat::zeros((m, m));
    let mut row = 0usize;
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        if row >= m {
            return Err(LinoptError::Parse { line: line_no, msg: "too many rows".into() });
        }
        let entries: Vec<&str> = line.split_whitespace().collect();
        if entries.len() != m {
            return Err(LinoptError::Parse {
                line: line_no,
                msg: format!("expected {m} entries, got {}", entries.len()),
            });
        }
        for (j, entry) in entries.iter().enumerate() {
            let (re, im) = entry.split_once(',').ok_or_else(|| LinoptError::Parse {
                line: line_no,
                msg: format!("expected re,im pair, got {entry:?}"),
            })?;
            let re: f64 = re.trim().parse().map_err(|_| LinoptError::Parse {
                line: line_no,
                msg: format!("bad real part {re:?}"),
            })?;
            let im: f64 = im.trim().parse().map_err(|_| LinoptError::Parse {
                line: line_no,
                msg: format!("bad imaginary part {im:?}"),
            })?;
            if !re.is_finite() || !im.is_finite() {
                return Err(LinoptError::Parse { line: line_no, msg: "non-finite entry".into() });
            }
            u[[row, j]] = Complex64::new(re, im);
        }
        row += 1;
    }
    if row != m {
        return Err(LinoptError::Parse {
            line: text.lines().count(),
            msg: format!("expected {m} rows, got {row}"),
        });
    }
    Ok(u)
}

/// Serialize a mesh: one `m n theta phi` line per element, then a trailing
/// `D: p0 … p{M-1}` line with the output phases.
pub fn write_mesh(mesh: &BeamSplitterMesh) -> String {
    let mut out = String::new();
    for e in &mesh.elements {
        let _ = writeln!(out, "{} {} {:.17e} {:.17e}", e.m, e.n, e.theta, e.phi);
    }
    let phases: Vec<String> = mesh.output_phases.iter().map(|p| format!("{p:.17e}")).collect();
    let _ = writeln!(out, "D: {}", phases.join(" "));
    out
}

pub fn parse_mesh(text: &str) -> Result<BeamSplitterMesh, LinoptError> {
    let mut elements = Vec::new();
    let mut output_phases: Option<Vec<f64>> = None;
    let mut d_line = 0usize;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("D:") {
            if output_phases.is_some() {
                return Err(LinoptError::Parse { line: line_no, msg: "duplicate D line".into() });
            }
            let phases: Result<Vec<f64>, _> =
                rest.split_whitespace().map(|t| t.parse::<f64>()).collect();
            let phases = phases.map_err(|_| LinoptError::Parse {
                line: line_no,
                msg: "bad phase value".into(),
            })?;
            if phases.iter().any(|p| !p.is_finite()) {
                return Err(LinoptError::Parse { line: line_no, msg: "non-finite phase".into() });
            }
            output_phases = Some(phases);
            d_line = line_no;
            continue;
        }
        if output_phases.is_some() {
            return Err(LinoptError::Parse {
                line: line_no,
                msg: "element after the D line".into(),
            });
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 4 {
            return Err(LinoptError::Parse {
                line: line_no,
                msg: format!("expected `m n theta phi`, got {line:?}"),
            });
        }
        let m: usize = parts[0].parse().map_err(|_| LinoptError::Parse {
            line: line_no,
            msg: format!("bad mode index {:?}", parts[0]),
        })?;
        let n: usize = parts[1].parse().map_err(|_| LinoptError::Parse {
            line: line_no,
            msg: format!("bad mode index {:?}", parts[1]),
        })?;
        let theta: f64 = parts[2].parse().map_err(|_| LinoptError::Parse {
            line: line_no,
            msg: format!("bad theta {:?}", parts[2]),
        })?;
        let phi: f64 = parts[3].parse().map_err(|_| LinoptError::Parse {
            line: line_no,
            msg: format!("bad phi {:?}", parts[3]),
        })?;
        if n != m + 1 {
            return Err(LinoptError::Parse {
                line: line_no,
                msg: format!("modes ({m}, {n}) are not adjacent"),
            });
        }
        if !theta.is_finite() || !phi.is_finite() {
            return Err(LinoptError::Parse { line: line_no, msg: "non-finite angle".into() });
        }
        elements.push(MeshElement { m, n, theta, phi });
    }
    let output_phases = output_phases.ok_or_else(|| LinoptError::Parse {
        line: text.lines().count().max(1),
        msg: "missing D line".into(),
    })?;
    let mode_count = output_phases.len();
    if mode_count == 0 || mode_count > MAX_MODES {
        return Err(LinoptError::Parse {
            line: d_line,
            msg: format!("mode count {mode_count} outside 1..={MAX_MODES}"),
        });
    }
    for e in &elements {
        if e.n >= mode_count {
            return Err(LinoptError::Parse {
                line: d_line,
                msg: format!("element on ({}, {}) exceeds {mode_count} modes", e.m, e.n),
            });
        }
    }
    Ok(BeamSplitterMesh { mode_count, elements, output_phases })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn frobenius_distance(a: &CMat, b: &CMat) -> f64 {
        let mut s = 0.0;
        for (x, y) in a.iter().zip(b.iter()) {
            s += (x - y).norm_sqr();
        }
        s.sqrt()
    }

    #[test]
    fn bs_embed_special_angles() {
        let id = bs_embed(&MeshElement::new(0, 0.0, 0.0).unwrap(), 2).unwrap();
        assert!(frobenius_distance(&id, &identity(2)) < 1e-15);

        let bal = bs_embed(&MeshElement::new(0, FRAC_PI_4, 0.0).unwrap(), 2).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((bal[[0, 0]].re - r).abs() < 1e-15);
        assert!((bal[[0, 1]].re + r).abs() < 1e-15);
        assert!((bal[[1, 0]].re - r).abs() < 1e-15);
        assert!((bal[[1, 1]].re - r).abs() < 1e-15);

        let swap = bs_embed(&MeshElement::new(0, FRAC_PI_2, 0.0).unwrap(), 2).unwrap();
        assert!((swap[[0, 1]].re + 1.0).abs() < 1e-15);
        assert!((swap[[1, 0]].re - 1.0).abs() < 1e-15);
        assert!(swap[[0, 0]].norm() < 1e-15 && swap[[1, 1]].norm() < 1e-15);
    }

    #[test]
    fn bs_embed_is_unitary_for_random_angles() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            use rand::Rng;
            let e = MeshElement::new(
                rng.gen_range(0..5),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            )
            .unwrap();
            let u = bs_embed(&e, 6).unwrap();
            assert!(unitarity_residual(&u) < 1e-12);
        }
    }

    #[test]
    fn decompose_identity() {
        for m in 2..=5 {
            let mesh = clements_decompose(&identity(m)).unwrap();
            assert_eq!(mesh.elements.len(), m * (m - 1) / 2);
            for e in &mesh.elements {
                assert!(e.theta.abs() < 1e-12);
            }
            for p in &mesh.output_phases {
                assert!(p.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_mode_round_trip() {
        let e = MeshElement::new(0, 0.83, -1.27).unwrap();
        let u = bs_embed(&e, 2).unwrap();
        for mesh in [clements_decompose(&u).unwrap(), reck_decompose(&u).unwrap()] {
            assert_eq!(mesh.elements.len(), 1);
            let back = mesh_reconstruct(&mesh).unwrap();
            assert!(frobenius_distance(&u, &back) < 1e-12);
        }
    }

    #[test]
    fn haar_round_trips_both_layouts() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in 2..=MAX_MODES {
            let trials = if m == MAX_MODES { 100 } else { 20 };
            for _ in 0..trials {
                let u = haar_unitary(m, &mut rng);
                assert!(unitarity_residual(&u) < 1e-12);
                for (mesh, layout) in [
                    (clements_decompose(&u).unwrap(), "clements"),
                    (reck_decompose(&u).unwrap(), "reck"),
                ] {
                    assert_eq!(mesh.elements.len(), m * (m - 1) / 2, "{layout} M={m}");
                    let back = mesh_reconstruct(&mesh).unwrap();
                    let err = frobenius_distance(&u, &back);
                    assert!(err < 1e-10, "{layout} M={m}: round-trip error {err}");
                }
            }
        }
    }

    #[test]
    fn loss_scaling_on_single_element() {
        let e = MeshElement::new(0, 0.42, 0.9).unwrap();
        let mesh = BeamSplitterMesh {
            mode_count: 2,
            elements: vec![e],
            output_phases: vec![0.0, 0.0],
        };
        let lossy = mesh_with_loss(&mesh, 0.81).unwrap();
        let ideal = mesh_reconstruct(&mesh).unwrap();
        let scaled = ideal.mapv(|z| z * 0.9);
        assert!(frobenius_distance(&lossy, &scaled) < 1e-12);
        assert!(mesh_with_loss(&mesh, 0.0).is_err());
        assert!(mesh_with_loss(&mesh, 1.2).is_err());
    }

    #[test]
    fn lossless_fidelity_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let u = haar_unitary(5, &mut rng);
        let mesh = clements_decompose(&u).unwrap();
        let a = mesh_with_loss(&mesh, 1.0).unwrap();
        assert!((mesh_fidelity(&u, &a) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn clements_loss_fidelity_beats_reck_on_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let t = 0.99;
        let mut mean_clements = 0.0;
        let mut mean_reck = 0.0;
        let trials = 50;
        for _ in 0..trials {
            let u = haar_unitary(8, &mut rng);
            let cm = clements_decompose(&u).unwrap();
            let rm = reck_decompose(&u).unwrap();
            mean_clements += mesh_fidelity(&u, &mesh_with_loss(&cm, t).unwrap());
            mean_reck += mesh_fidelity(&u, &mesh_with_loss(&rm, t).unwrap());
        }
        mean_clements /= trials as f64;
        mean_reck /= trials as f64;
        assert!(
            mean_clements >= mean_reck,
            "clements {mean_clements} < reck {mean_reck}"
        );
    }

    #[test]
    fn single_photon_identity_evolution() {
        let amps = fock_evolve(&identity(3), &FockState::new(vec![1, 0, 0]).unwrap()).unwrap();
        let same = FockState(vec![1, 0, 0]);
        assert!((amps.amplitude(&same) - c(1.0, 0.0)).norm() < 1e-15);
        assert!((amps.total_probability - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hong_ou_mandel_dip() {
        let bal = bs_embed(&MeshElement::new(0, FRAC_PI_4, 0.0).unwrap(), 2).unwrap();
        let amps = fock_evolve(&bal, &FockState::new(vec![1, 1]).unwrap()).unwrap();
        assert!(amps.probability(&FockState(vec![1, 1])) < 1e-12);
        assert!((amps.probability(&FockState(vec![2, 0])) - 0.5).abs() < 1e-12);
        assert!((amps.probability(&FockState(vec![0, 2])) - 0.5).abs() < 1e-12);
        assert!((amps.total_probability - 1.0).abs() < 1e-12);
    }

    /// Independent oracle: expand `prod_j (sum_i U_ij a†_i)^{t_j} |0>` as a
    /// polynomial in creation operators and read off Fock amplitudes.
    fn multinomial_oracle(u: &CMat, input: &FockState) -> HashMap<Vec<usize>, Complex64> {
        let m = u.nrows();
        let mut poly: HashMap<Vec<usize>, Complex64> = HashMap::new();
        poly.insert(vec![0; m], c(1.0, 0.0));
        for (j, &t) in input.0.iter().enumerate() {
            for _ in 0..t {
                let mut next: HashMap<Vec<usize>, Complex64> = HashMap::new();
                for (occ, coeff) in &poly {
                    for i in 0..m {
                        let mut occ2 = occ.clone();
                        occ2[i] += 1;
                        *next.entry(occ2).or_default() += coeff * u[[i, j]];
                    }
                }
                poly = next;
            }
        }
        let t_fact: f64 = input.0.iter().map(|&t| factorial(t)).product();
        poly.into_iter()
            .map(|(occ, coeff)| {
                let s_fact: f64 = occ.iter().map(|&s| factorial(s)).product();
                (occ, coeff * (s_fact / t_fact).sqrt())
            })
            .collect()
    }

    #[test]
    fn permanent_path_matches_multinomial_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for m in 2..=6 {
            let u = haar_unitary(m, &mut rng);
            let mut inputs = vec![vec![0; m]];
            inputs[0][0] = 1;
            let mut two = vec![0; m];
            two[0] = 1;
            two[m - 1] = 1;
            inputs.push(two);
            let mut three = vec![0; m];
            three[0] = 2;
            three[1] = 1;
            inputs.push(three);
            for occ in inputs {
                let input = FockState::new(occ).unwrap();
                let amps = fock_evolve(&u, &input).unwrap();
                assert!((amps.total_probability - 1.0).abs() < 1e-8);
                let oracle = multinomial_oracle(&u, &input);
                for (occ, expected) in oracle {
                    let got = amps.amplitude(&FockState(occ.clone()));
                    assert!(
                        (got - expected).norm() < 1e-10,
                        "M={m} {occ:?}: {got} vs {expected}"
                    );
                }
            }
        }
    }

    #[test]
    fn dual_rail_identity_and_superposition() {
        let amps = fock_evolve(&identity(2), &FockState::new(vec![1, 0]).unwrap()).unwrap();
        let (state, p) = dual_rail_postselect(&amps, &[(0, 1)]).unwrap();
        assert!((state.amplitudes()[0] - c(1.0, 0.0)).norm() < 1e-12);
        assert!((p - 1.0).abs() < 1e-12);

        let bal = bs_embed(&MeshElement::new(0, FRAC_PI_4, 0.0).unwrap(), 2).unwrap();
        let amps = fock_evolve(&bal, &FockState::new(vec![1, 0]).unwrap()).unwrap();
        let (state, p) = dual_rail_postselect(&amps, &[(0, 1)]).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((state.amplitudes()[0].norm() - r).abs() < 1e-12);
        assert!((state.amplitudes()[1].norm() - r).abs() < 1e-12);
    }

    #[test]
    fn dual_rail_two_qubits_with_cross_talk() {
        // mixing element between the rails of different qubits leaks
        // population out of the dual-rail subspace
        let mix = bs_embed(&MeshElement::new(1, 0.6, 0.3).unwrap(), 4).unwrap();
        let amps = fock_evolve(&mix, &FockState::new(vec![0, 1, 1, 0]).unwrap()).unwrap();
        let (state, p) = dual_rail_postselect(&amps, &[(0, 1), (2, 3)]).unwrap();
        assert!(p < 1.0 - 1e-6, "success probability {p}");
        let norm: f64 = state.amplitudes().iter().map(|a| a.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn postselection_can_annihilate() {
        // both photons bunch into the same rail pair
        let amps = fock_evolve(&identity(4), &FockState::new(vec![1, 1, 0, 0]).unwrap()).unwrap();
        assert!(matches!(
            dual_rail_postselect(&amps, &[(0, 1), (2, 3)]),
            Err(LinoptError::PostSelectionAnnihilated)
        ));
    }

    #[test]
    fn waveplate_matrices() {
        let hadamard_like = waveplate(WaveplateKind::Half, 22.5f64.to_radians());
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((hadamard_like[[0, 0]].re - r).abs() < 1e-12);
        assert!((hadamard_like[[1, 0]].re - r).abs() < 1e-12);

        let z_like = waveplate(WaveplateKind::Half, 0.0);
        assert!((z_like[[0, 0]].re - 1.0).abs() < 1e-15);
        assert!((z_like[[1, 1]].re + 1.0).abs() < 1e-15);

        for angle in [0.0, 0.3, 1.1, -0.7] {
            for kind in [WaveplateKind::Half, WaveplateKind::Quarter] {
                assert!(unitarity_residual(&waveplate(kind, angle)) < 1e-12);
            }
        }
    }

    #[test]
    fn pbd_cnot_flips_path_on_vertical_polarization() {
        let u = pbd_cnot();
        // |V> ⊗ |path0> = index 2 -> |V> ⊗ |path1> = index 3
        assert!((u[[3, 2]] - c(1.0, 0.0)).norm() < 1e-15);
        assert!((u[[2, 3]] - c(1.0, 0.0)).norm() < 1e-15);
        assert!((u[[0, 0]] - c(1.0, 0.0)).norm() < 1e-15);
        assert!(unitarity_residual(&u) < 1e-15);
    }

    #[test]
    fn visibility_examples() {
        assert_eq!(visibility_to_noise(1.0).unwrap(), 0.0);
        assert!((visibility_to_noise(0.82).unwrap() - 0.18).abs() < 1e-15);
        assert!((visibility_to_noise(0.71).unwrap() - 0.29).abs() < 1e-15);
        assert!(visibility_to_noise(1.2).is_err());
        assert!(visibility_to_noise(-0.1).is_err());
    }

    #[test]
    fn mode_unitary_file_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = haar_unitary(4, &mut rng);
        let text = write_mode_unitary(&u);
        let back = parse_mode_unitary(&text).unwrap();
        assert!(frobenius_distance(&u, &back) < 1e-15);

        assert!(matches!(
            parse_mode_unitary("2\n1,0 0,0\n"),
            Err(LinoptError::Parse { .. })
        ));
        assert!(matches!(
            parse_mode_unitary("2\n1,0 0,0\n0,0 oops\n"),
            Err(LinoptError::Parse { line: 3, .. })
        ));
        assert!(matches!(
            parse_mode_unitary("zero\n"),
            Err(LinoptError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn mesh_file_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let u = haar_unitary(5, &mut rng);
        let mesh = clements_decompose(&u).unwrap();
        let text = write_mesh(&mesh);
        let back = parse_mesh(&text).unwrap();
        assert_eq!(mesh.mode_count, back.mode_count);
        let u2 = mesh_reconstruct(&back).unwrap();
        assert!(frobenius_distance(&u, &u2) < 1e-10);

        assert!(matches!(parse_mesh(""), Err(LinoptError::Parse { .. })));
        assert!(matches!(
            parse_mesh("0 2 0.1 0.2\nD: 0 0 0\n"),
            Err(LinoptError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_mesh("0 1 0.1 bad\nD: 0 0\n"),
            Err(LinoptError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_mesh("4 5 0.1 0.2\nD: 0 0\n"),
            Err(LinoptError::Parse { .. })
        ));
    }
}
