//! End-to-end VQE runs: ansatz preparation, energy objectives over exact or
//! sampled backends with optional noise and mitigation, and the optimizer
//! loop, all reproducible from a TOML config plus a seed.

use std::cell::RefCell;
use std::path::PathBuf;

use ndarray::Array1;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::hamiltonians::{
    build_factoring, build_h2, build_hehplus, build_heisenberg, build_schwinger,
    load_coefficients, FactoringForm, HamiltonianError, UccsdAmplitudes,
};
use crate::linalg::{kron, CMat};
use crate::linopt::{
    dual_rail_postselect, fock_evolve, mesh_reconstruct, pbd_cnot, waveplate, BeamSplitterMesh,
    FockState, LinoptError, MeshElement, WaveplateKind,
};
use crate::measurement::{
    bell_measurement, estimate_pauli_sum, gc_groups, qwc_groups, sample_distribution,
    MeasurementError, MeasurementGroup,
};
use crate::noise_mitigation::{
    apply_channel, calibrate_confusion, zne_estimate, ConfusionMatrix, MitigationError, NoiseKind,
    NoiseSpec,
};
use crate::optimizers::{minimize, minimize_qng, OptError, OptTrace, OptimizerConfig};
use crate::qstate::{
    apply_unitary, expectation_exact, ground_state, OperatorSum, Pauli, QstateError, QuantumState,
    StateVector,
};

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("config error: {0}")]
    Config(String),
    #[error("ansatz expects {expected} parameters, got {got}")]
    ParameterCount { expected: usize, got: usize },
    #[error("ansatz dimension {0} does not match Hamiltonian dimension {1}")]
    DimensionMismatch(usize, usize),
    #[error("bell grouping requires a 2-qubit Hamiltonian with XX/YY/ZZ terms")]
    BellUnsupported,
    #[error("zne mitigation requires at least one noise channel and two scale points")]
    ZneNeedsNoise,
    #[error("natural gradient requires a noiseless pure-state ansatz")]
    QngUnsupported,
    #[error(transparent)]
    Qstate(#[from] QstateError),
    #[error(transparent)]
    Hamiltonian(#[from] HamiltonianError),
    #[error(transparent)]
    Linopt(#[from] LinoptError),
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
    #[error(transparent)]
    Mitigation(#[from] MitigationError),
    #[error(transparent)]
    Optimizer(#[from] OptError),
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Toml(String),
}

/// One element of a wave-plate circuit: parameterized plates consume one
/// angle each; the polarizing-beam-displacer CNOT is fixed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlateOp {
    Hwp { qubit: usize },
    Qwp { qubit: usize },
    PbdCnot { control: usize, target: usize },
}

impl PlateOp {
    /// Parse `"hwp 0"`, `"qwp 1"`, or `"pbd_cnot 0 1"`.
    pub fn parse(text: &str) -> Result<PlateOp, DriverError> {
        let parts: Vec<&str> = text.split_whitespace().collect();
        let bad = || DriverError::Config(format!("bad plate op: {text:?}"));
        let idx = |s: &str| s.parse::<usize>().map_err(|_| bad());
        match parts.as_slice() {
            ["hwp", q] => Ok(PlateOp::Hwp { qubit: idx(q)? }),
            ["qwp", q] => Ok(PlateOp::Qwp { qubit: idx(q)? }),
            ["pbd_cnot", c, t] => Ok(PlateOp::PbdCnot { control: idx(c)?, target: idx(t)? }),
            _ => Err(bad()),
        }
    }
}

/// The four ansatz families.
#[derive(Debug, Clone, PartialEq)]
pub enum AnsatzSpec {
    /// Wave-plate hardware-efficient ansatz on polarization qubits.
    WaveplateHea { qubits: usize, layout: Vec<PlateOp> },
    /// Beam-splitter mesh angles with dual-rail post-selection.
    MeshPhases { modes: usize, rail_pairs: Vec<(usize, usize)> },
    /// Unitary coupled cluster from a reference determinant.
    Uccsd {
        orbitals: usize,
        reference: usize,
        singles: Vec<(usize, usize)>,
        doubles: Vec<(usize, usize, usize, usize)>,
    },
    /// Direct hyperspherical parameterization of a d-level pure state.
    RawQudit { dimension: usize },
}

impl AnsatzSpec {
    pub fn parameter_count(&self) -> usize {
        match self {
            AnsatzSpec::WaveplateHea { layout, .. } => layout
                .iter()
                .filter(|op| matches!(op, PlateOp::Hwp { .. } | PlateOp::Qwp { .. }))
                .count(),
            AnsatzSpec::MeshPhases { modes, .. } => modes * (modes - 1),
            AnsatzSpec::Uccsd { singles, doubles, .. } => singles.len() + doubles.len(),
            AnsatzSpec::RawQudit { dimension } => 2 * dimension - 2,
        }
    }

    /// Hilbert-space dimension of the prepared state.
    pub fn state_dim(&self) -> usize {
        match self {
            AnsatzSpec::WaveplateHea { qubits, .. } => 1 << qubits,
            AnsatzSpec::MeshPhases { rail_pairs, .. } => 1 << rail_pairs.len(),
            AnsatzSpec::Uccsd { orbitals, .. } => 1 << orbitals,
            AnsatzSpec::RawQudit { dimension } => *dimension,
        }
    }

    pub fn validate(&self) -> Result<(), DriverError> {
        match self {
            AnsatzSpec::WaveplateHea { qubits, layout } => {
                if *qubits == 0 || *qubits > crate::qstate::MAX_QUBITS {
                    return Err(DriverError::Config(format!("bad qubit count {qubits}")));
                }
                for op in layout {
                    let ok = match op {
                        PlateOp::Hwp { qubit } | PlateOp::Qwp { qubit } => qubit < qubits,
                        PlateOp::PbdCnot { control, target } => {
                            control < qubits && target < qubits && control != target
                        }
                    };
                    if !ok {
                        return Err(DriverError::Config(format!("plate op out of range: {op:?}")));
                    }
                }
                Ok(())
            }
            AnsatzSpec::MeshPhases { modes, rail_pairs } => {
                if *modes < 2 || *modes > crate::linopt::MAX_MODES {
                    return Err(DriverError::Config(format!("bad mode count {modes}")));
                }
                if rail_pairs.is_empty() || rail_pairs.len() > crate::linopt::MAX_PHOTONS {
                    return Err(DriverError::Config("bad rail pair count".into()));
                }
                for &(a, b) in rail_pairs {
                    if a >= *modes || b >= *modes {
                        return Err(DriverError::Config("rail pair out of range".into()));
                    }
                }
                Ok(())
            }
            AnsatzSpec::Uccsd { orbitals, reference, .. } => {
                if *orbitals == 0 || *orbitals > 4 {
                    return Err(DriverError::Config(format!("bad orbital count {orbitals}")));
                }
                if *reference >= (1 << orbitals) {
                    return Err(DriverError::Config("reference out of range".into()));
                }
                Ok(())
            }
            AnsatzSpec::RawQudit { dimension } => {
                if !dimension.is_power_of_two() || *dimension < 2 || *dimension > 256 {
                    return Err(DriverError::Config(format!("bad qudit dimension {dimension}")));
                }
                Ok(())
            }
        }
    }
}

/// Hyperspherical pure state over a balanced binary tree of sphere splits:
/// d−1 polar angles (one per internal node, heap order) followed by d−1
/// relative phases (one per basis state past the first); θ = 0 is the first
/// basis state. The balanced tree makes every basis state reachable through
/// log₂(d) angles, so uniformly random parameters spread probability mass
/// evenly over the basis instead of concentrating it on low indices.
pub fn raw_qudit_state(dimension: usize, theta: &[f64]) -> Result<StateVector, DriverError> {
    if theta.len() != 2 * dimension - 2 {
        return Err(DriverError::ParameterCount { expected: 2 * dimension - 2, got: theta.len() });
    }
    let polar = &theta[..dimension - 1];
    let phases = &theta[dimension - 1..];
    // heap layout: internal node i < d−1 has children 2i+1 / 2i+2; leaf
    // d−1+k is basis index k
    let mut magnitudes = vec![0.0f64; 2 * dimension - 1];
    magnitudes[0] = 1.0;
    for i in 0..dimension - 1 {
        magnitudes[2 * i + 1] = magnitudes[i] * polar[i].cos();
        magnitudes[2 * i + 2] = magnitudes[i] * polar[i].sin();
    }
    let mut amps = Array1::zeros(dimension);
    for k in 0..dimension {
        let phase = if k == 0 { 0.0 } else { phases[k - 1] };
        amps[k] = Complex64::from_polar(magnitudes[dimension - 1 + k], phase);
    }
    Ok(StateVector::normalized(amps)?)
}

/// Invert the hyperspherical tree parameterization: return parameters
/// reproducing `state` up to global phase.
pub fn raw_qudit_parameters(state: &StateVector) -> Vec<f64> {
    let d = state.dim();
    // fix the global phase so the first nonzero amplitude is real positive
    let gauge = state
        .amplitudes()
        .iter()
        .find(|a| a.norm() > 1e-12)
        .map(|a| a.conj() / a.norm())
        .unwrap_or(Complex64::new(1.0, 0.0));
    let amps: Vec<Complex64> = state.amplitudes().iter().map(|a| a * gauge).collect();
    // subtree masses, bottom-up over the heap
    let mut mass = vec![0.0f64; 2 * d - 1];
    for k in 0..d {
        mass[d - 1 + k] = amps[k].norm_sqr();
    }
    for i in (0..d - 1).rev() {
        mass[i] = mass[2 * i + 1] + mass[2 * i + 2];
    }
    let mut polar = vec![0.0; d - 1];
    for i in 0..d - 1 {
        if mass[i] > 1e-28 {
            polar[i] = mass[2 * i + 2].sqrt().atan2(mass[2 * i + 1].sqrt());
        }
    }
    let mut phases = vec![0.0; d - 1];
    for k in 1..d {
        if amps[k].norm() > 1e-14 {
            phases[k - 1] = amps[k].arg();
        }
    }
    let mut out = polar;
    out.extend(phases);
    out
}

/// Embed a 2×2 operator at `qubit` of an n-qubit register.
fn embed_one_qubit(gate: &CMat, qubits: usize, qubit: usize) -> CMat {
    let mut out = crate::linalg::identity(1);
    for q in 0..qubits {
        let factor = if q == qubit { gate.clone() } else { crate::linalg::identity(2) };
        out = kron(&out, &factor);
    }
    out
}

/// Embed a 4×4 two-qubit operator (first factor = `a`, second = `b`) at
/// arbitrary positions of an n-qubit register.
fn embed_two_qubit(gate: &CMat, qubits: usize, a: usize, b: usize) -> CMat {
    let dim = 1 << qubits;
    let mut out = CMat::zeros((dim, dim));
    let bit = |index: usize, q: usize| (index >> (qubits - 1 - q)) & 1;
    for col in 0..dim {
        let (ca, cb) = (bit(col, a), bit(col, b));
        for (ra, rb) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let mut row = col;
            row = (row & !(1 << (qubits - 1 - a))) | (ra << (qubits - 1 - a));
            row = (row & !(1 << (qubits - 1 - b))) | (rb << (qubits - 1 - b));
            out[[row, col]] += gate[[(ra << 1) | rb, (ca << 1) | cb]];
        }
    }
    out
}

/// Clements rectangle positions for an M-mode mesh: M layers of elements on
/// alternating adjacent pairs, M(M−1)/2 elements total.
pub fn clements_layout(modes: usize) -> Vec<usize> {
    let mut positions = Vec::with_capacity(modes * (modes - 1) / 2);
    for layer in 0..modes {
        let mut m = layer % 2;
        while m + 1 < modes {
            positions.push(m);
            m += 2;
        }
    }
    positions
}

fn prepare_pure(spec: &AnsatzSpec, theta: &[f64]) -> Result<StateVector, DriverError> {
    spec.validate()?;
    let expected = spec.parameter_count();
    if theta.len() != expected {
        return Err(DriverError::ParameterCount { expected, got: theta.len() });
    }
    match spec {
        AnsatzSpec::WaveplateHea { qubits, layout } => {
            let mut state = StateVector::basis(1 << qubits, 0);
            let mut next = 0usize;
            for op in layout {
                let u = match op {
                    PlateOp::Hwp { qubit } => {
                        let g = waveplate(WaveplateKind::Half, theta[next]);
                        next += 1;
                        embed_one_qubit(&g, *qubits, *qubit)
                    }
                    PlateOp::Qwp { qubit } => {
                        let g = waveplate(WaveplateKind::Quarter, theta[next]);
                        next += 1;
                        embed_one_qubit(&g, *qubits, *qubit)
                    }
                    PlateOp::PbdCnot { control, target } => {
                        embed_two_qubit(&pbd_cnot(), *qubits, *control, *target)
                    }
                };
                state = apply_unitary(&state, &u)?;
            }
            Ok(state)
        }
        AnsatzSpec::MeshPhases { modes, rail_pairs } => {
            let positions = clements_layout(*modes);
            let mut elements = Vec::with_capacity(positions.len());
            for (i, &m) in positions.iter().enumerate() {
                elements.push(MeshElement::new(m, theta[2 * i], theta[2 * i + 1])?);
            }
            let mesh = BeamSplitterMesh {
                mode_count: *modes,
                elements,
                output_phases: vec![0.0; *modes],
            };
            let u = mesh_reconstruct(&mesh)?;
            let mut occupations = vec![0usize; *modes];
            for &(first, _) in rail_pairs {
                occupations[first] += 1;
            }
            let input = FockState::new(occupations)?;
            let evolved = fock_evolve(&u, &input)?;
            let (state, _kept) = dual_rail_postselect(&evolved, rail_pairs)?;
            Ok(state)
        }
        AnsatzSpec::Uccsd { orbitals, reference, singles, doubles } => {
            let mut template = UccsdAmplitudes::new();
            for &(i, a) in singles {
                template.set_single(i, a, 0.0)?;
            }
            for &(i, j, a, b) in doubles {
                template.set_double(i, j, a, b, 0.0)?;
            }
            let amps = template.with_values(theta)?;
            Ok(crate::hamiltonians::uccsd_state(*reference, &amps, *orbitals)?)
        }
        AnsatzSpec::RawQudit { dimension } => raw_qudit_state(*dimension, theta),
    }
}

/// Prepare the ansatz state; any configured noise channels are applied
/// afterward, promoting the result to a density matrix.
pub fn prepare_ansatz(
    spec: &AnsatzSpec,
    theta: &[f64],
    noise: &[NoiseSpec],
) -> Result<QuantumState, DriverError> {
    let pure = prepare_pure(spec, theta)?;
    if noise.is_empty() {
        return Ok(QuantumState::Pure(pure));
    }
    let mut rho = crate::qstate::DensityMatrix::from_pure(&pure);
    for spec in noise {
        rho = apply_channel(&rho, spec)?;
    }
    Ok(QuantumState::Mixed(rho))
}

#[derive(Debug, Clone, PartialEq)]
pub enum HamiltonianSource {
    Builder { name: String, params: Vec<f64> },
    File { path: PathBuf, row: usize },
}

impl HamiltonianSource {
    pub fn build(&self) -> Result<OperatorSum, DriverError> {
        match self {
            HamiltonianSource::Builder { name, params } => {
                let need = |n: usize| -> Result<(), DriverError> {
                    if params.len() == n {
                        Ok(())
                    } else {
                        Err(DriverError::Config(format!(
                            "builder {name:?} expects {n} parameters, got {}",
                            params.len()
                        )))
                    }
                };
                match name.as_str() {
                    "h2" => {
                        need(5)?;
                        Ok(build_h2(params)?)
                    }
                    "hehplus" => {
                        need(9)?;
                        Ok(build_hehplus(params)?)
                    }
                    "heisenberg" => {
                        need(3)?;
                        Ok(build_heisenberg(params[0], params[1], params[2]))
                    }
                    "schwinger" => {
                        need(1)?;
                        Ok(build_schwinger(params[0]))
                    }
                    "factoring" | "factoring_projector" => {
                        need(1)?;
                        let n = params[0] as u64;
                        let form = if name == "factoring" {
                            FactoringForm::Eq15
                        } else {
                            FactoringForm::Projector
                        };
                        Ok(build_factoring(n, form)?)
                    }
                    other => Err(DriverError::Config(format!("unknown builder {other:?}"))),
                }
            }
            HamiltonianSource::File { path, row } => {
                let table = load_coefficients(path)?;
                Ok(table.hamiltonian(*row)?)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Exact,
    Sampled { shots: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grouping {
    Qwc,
    Gc,
    Bell,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mitigation {
    None,
    Confusion { calibration_shots: u64 },
    Zne { epsilons: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VQEConfig {
    pub hamiltonian: HamiltonianSource,
    pub ansatz: AnsatzSpec,
    pub backend: Backend,
    pub grouping: Grouping,
    pub noise: Vec<NoiseSpec>,
    pub mitigation: Mitigation,
    pub optimizer: OptimizerConfig,
    pub use_qng: bool,
    pub seed: u64,
}

// ---- TOML ingestion -------------------------------------------------------

#[derive(Deserialize)]
struct RawHamiltonian {
    builder: Option<String>,
    #[serde(default)]
    params: Vec<f64>,
    file: Option<PathBuf>,
    row: Option<usize>,
}

#[derive(Deserialize)]
struct RawAnsatz {
    family: String,
    qubits: Option<usize>,
    #[serde(default)]
    layout: Vec<String>,
    modes: Option<usize>,
    #[serde(default)]
    rail_pairs: Vec<Vec<usize>>,
    orbitals: Option<usize>,
    reference: Option<usize>,
    #[serde(default)]
    singles: Vec<Vec<usize>>,
    #[serde(default)]
    doubles: Vec<Vec<usize>>,
    dimension: Option<usize>,
}

#[derive(Deserialize)]
struct RawBackend {
    kind: String,
    shots: Option<u64>,
}

#[derive(Deserialize)]
struct RawNoise {
    kind: String,
    strength: f64,
    #[serde(default)]
    targets: Vec<usize>,
}

#[derive(Deserialize)]
struct RawMitigation {
    kind: String,
    #[serde(default)]
    epsilons: Vec<f64>,
    calibration_shots: Option<u64>,
}

#[derive(Deserialize, Default)]
struct RawOptimizer {
    method: Option<String>,
    step_size: Option<f64>,
    max_iterations: Option<usize>,
    tolerance: Option<f64>,
    stall_window: Option<usize>,
    fd_step: Option<f64>,
    spsa_a: Option<f64>,
    spsa_c: Option<f64>,
    spsa_big_a: Option<f64>,
    pso_swarm: Option<usize>,
    pso_inertia: Option<f64>,
    pso_cognitive: Option<f64>,
    pso_social: Option<f64>,
    pso_box: Option<f64>,
    trust_initial: Option<f64>,
    trust_final: Option<f64>,
    qng_alpha: Option<f64>,
    qng_lambda: Option<f64>,
    qfim_step: Option<f64>,
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct RawConfig {
    hamiltonian: RawHamiltonian,
    ansatz: RawAnsatz,
    backend: Option<RawBackend>,
    grouping: Option<String>,
    #[serde(default)]
    noise: Vec<RawNoise>,
    mitigation: Option<RawMitigation>,
    #[serde(default)]
    optimizer: RawOptimizer,
    use_qng: Option<bool>,
    seed: Option<u64>,
}

fn convert_ansatz(raw: &RawAnsatz) -> Result<AnsatzSpec, DriverError> {
    let missing = |field: &str| DriverError::Config(format!("ansatz field {field:?} is required"));
    match raw.family.as_str() {
        "waveplate_hea" => {
            let qubits = raw.qubits.ok_or_else(|| missing("qubits"))?;
            let layout = raw
                .layout
                .iter()
                .map(|s| PlateOp::parse(s))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(AnsatzSpec::WaveplateHea { qubits, layout })
        }
        "mesh_phases" => {
            let modes = raw.modes.ok_or_else(|| missing("modes"))?;
            let rail_pairs = raw
                .rail_pairs
                .iter()
                .map(|p| match p.as_slice() {
                    [a, b] => Ok((*a, *b)),
                    _ => Err(DriverError::Config("rail pairs must have two modes".into())),
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(AnsatzSpec::MeshPhases { modes, rail_pairs })
        }
        "uccsd" => {
            let orbitals = raw.orbitals.ok_or_else(|| missing("orbitals"))?;
            let reference = raw.reference.ok_or_else(|| missing("reference"))?;
            let singles = raw
                .singles
                .iter()
                .map(|s| match s.as_slice() {
                    [i, a] => Ok((*i, *a)),
                    _ => Err(DriverError::Config("singles entries need two indices".into())),
                })
                .collect::<Result<Vec<_>, _>>()?;
            let doubles = raw
                .doubles
                .iter()
                .map(|s| match s.as_slice() {
                    [i, j, a, b] => Ok((*i, *j, *a, *b)),
                    _ => Err(DriverError::Config("doubles entries need four indices".into())),
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(AnsatzSpec::Uccsd { orbitals, reference, singles, doubles })
        }
        "raw_qudit" => {
            let dimension = raw.dimension.ok_or_else(|| missing("dimension"))?;
            Ok(AnsatzSpec::RawQudit { dimension })
        }
        other => Err(DriverError::Config(format!("unknown ansatz family {other:?}"))),
    }
}

impl VQEConfig {
    pub fn from_toml_str(text: &str) -> Result<VQEConfig, DriverError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| DriverError::Toml(e.to_string()))?;
        let hamiltonian = match (&raw.hamiltonian.builder, &raw.hamiltonian.file) {
            (Some(name), None) => HamiltonianSource::Builder {
                name: name.clone(),
                params: raw.hamiltonian.params.clone(),
            },
            (None, Some(path)) => HamiltonianSource::File {
                path: path.clone(),
                row: raw.hamiltonian.row.unwrap_or(0),
            },
            _ => {
                return Err(DriverError::Config(
                    "hamiltonian needs exactly one of `builder` or `file`".into(),
                ))
            }
        };
        let ansatz = convert_ansatz(&raw.ansatz)?;
        let backend = match raw.backend {
            None => Backend::Exact,
            Some(b) => match b.kind.as_str() {
                "exact" => Backend::Exact,
                "sampled" => Backend::Sampled { shots: b.shots.unwrap_or(10_000) },
                other => return Err(DriverError::Config(format!("unknown backend {other:?}"))),
            },
        };
        let grouping = match raw.grouping.as_deref() {
            None | Some("qwc") => Grouping::Qwc,
            Some("gc") => Grouping::Gc,
            Some("bell") => Grouping::Bell,
            Some(other) => return Err(DriverError::Config(format!("unknown grouping {other:?}"))),
        };
        let mut noise = Vec::new();
        for n in &raw.noise {
            let kind = match n.kind.as_str() {
                "dephasing" => NoiseKind::Dephasing,
                "depolarizing" => NoiseKind::Depolarizing,
                "white" => NoiseKind::White,
                other => return Err(DriverError::Config(format!("unknown noise {other:?}"))),
            };
            noise.push(NoiseSpec::new(kind, n.strength, n.targets.clone())?);
        }
        let mitigation = match &raw.mitigation {
            None => Mitigation::None,
            Some(m) => match m.kind.as_str() {
                "none" => Mitigation::None,
                "confusion" => Mitigation::Confusion {
                    calibration_shots: m.calibration_shots.unwrap_or(100_000),
                },
                "zne" => Mitigation::Zne { epsilons: m.epsilons.clone() },
                other => return Err(DriverError::Config(format!("unknown mitigation {other:?}"))),
            },
        };
        let defaults = OptimizerConfig::default();
        let o = &raw.optimizer;
        let method = match &o.method {
            None => defaults.method,
            Some(name) => crate::optimizers::Method::parse(name)
                .ok_or_else(|| DriverError::Config(format!("unknown method {name:?}")))?,
        };
        let optimizer = OptimizerConfig {
            method,
            step_size: o.step_size.unwrap_or(defaults.step_size),
            max_iterations: o.max_iterations.unwrap_or(defaults.max_iterations),
            tolerance: o.tolerance.unwrap_or(defaults.tolerance),
            stall_window: o.stall_window.unwrap_or(defaults.stall_window),
            fd_step: o.fd_step.unwrap_or(defaults.fd_step),
            spsa_a: o.spsa_a.unwrap_or(defaults.spsa_a),
            spsa_c: o.spsa_c.unwrap_or(defaults.spsa_c),
            spsa_big_a: o.spsa_big_a.unwrap_or(defaults.spsa_big_a),
            pso_swarm: o.pso_swarm.unwrap_or(defaults.pso_swarm),
            pso_inertia: o.pso_inertia.unwrap_or(defaults.pso_inertia),
            pso_cognitive: o.pso_cognitive.unwrap_or(defaults.pso_cognitive),
            pso_social: o.pso_social.unwrap_or(defaults.pso_social),
            pso_box: o.pso_box.unwrap_or(defaults.pso_box),
            trust_initial: o.trust_initial.unwrap_or(defaults.trust_initial),
            trust_final: o.trust_final.unwrap_or(defaults.trust_final),
            qng_alpha: o.qng_alpha.unwrap_or(defaults.qng_alpha),
            qng_lambda: o.qng_lambda.unwrap_or(defaults.qng_lambda),
            qfim_step: o.qfim_step.unwrap_or(defaults.qfim_step),
            seed: o.seed.unwrap_or(defaults.seed),
        };
        Ok(VQEConfig {
            hamiltonian,
            ansatz,
            backend,
            grouping,
            noise,
            mitigation,
            optimizer,
            use_qng: raw.use_qng.unwrap_or(false),
            seed: raw.seed.unwrap_or(42),
        })
    }

    pub fn from_toml_file(path: impl AsRef<std::path::Path>) -> Result<VQEConfig, DriverError> {
        let text = std::fs::read_to_string(path)?;
        VQEConfig::from_toml_str(&text)
    }
}

/// Index of w_XX, w_YY, w_ZZ in a 2-qubit operator; `None` when the operator
/// has terms Bell measurement cannot see.
fn bell_weights(op: &OperatorSum) -> Option<[f64; 3]> {
    if op.num_qubits() != 2 {
        return None;
    }
    let mut w = [0.0f64; 3];
    for (coeff, p) in op.terms() {
        match p.letters() {
            [Pauli::I, Pauli::I] => {}
            [Pauli::X, Pauli::X] => w[0] += coeff.re,
            [Pauli::Y, Pauli::Y] => w[1] += coeff.re,
            [Pauli::Z, Pauli::Z] => w[2] += coeff.re,
            _ => return None,
        }
    }
    Some(w)
}

/// A reusable energy estimator: holds the Hamiltonian, measurement grouping,
/// and mitigation machinery; each `evaluate` draws fresh deterministic seeds.
pub struct EnergyObjective {
    op: OperatorSum,
    ansatz: AnsatzSpec,
    backend: Backend,
    grouping: Grouping,
    noise: Vec<NoiseSpec>,
    mitigation: Mitigation,
    seed: u64,
    groups: Option<Vec<MeasurementGroup>>,
    confusion: Option<ConfusionMatrix>,
    evals: u64,
}

impl EnergyObjective {
    pub fn new(cfg: &VQEConfig) -> Result<EnergyObjective, DriverError> {
        let op = cfg.hamiltonian.build()?;
        cfg.ansatz.validate()?;
        if cfg.ansatz.state_dim() != op.dim() {
            return Err(DriverError::DimensionMismatch(cfg.ansatz.state_dim(), op.dim()));
        }
        if let Mitigation::Zne { epsilons } = &cfg.mitigation {
            if cfg.noise.is_empty() || epsilons.len() < 2 {
                return Err(DriverError::ZneNeedsNoise);
            }
        }
        let groups = match (cfg.backend, cfg.grouping) {
            (Backend::Sampled { .. }, Grouping::Qwc) => Some(qwc_groups(&op)?),
            (Backend::Sampled { .. }, Grouping::Gc) => Some(gc_groups(&op)?),
            (Backend::Sampled { .. }, Grouping::Bell) => {
                if bell_weights(&op).is_none() {
                    return Err(DriverError::BellUnsupported);
                }
                None
            }
            (Backend::Exact, _) => None,
        };
        if cfg.grouping == Grouping::Bell && op.num_qubits() != 2 {
            return Err(DriverError::BellUnsupported);
        }
        let mut objective = EnergyObjective {
            op,
            ansatz: cfg.ansatz.clone(),
            backend: cfg.backend,
            grouping: cfg.grouping,
            noise: cfg.noise.clone(),
            mitigation: cfg.mitigation.clone(),
            seed: cfg.seed,
            groups,
            confusion: None,
            evals: 0,
        };
        if let (Mitigation::Confusion { calibration_shots }, Backend::Sampled { .. }) =
            (&objective.mitigation, objective.backend)
        {
            objective.confusion = Some(objective.calibrate(*calibration_shots)?);
        }
        Ok(objective)
    }

    pub fn operator(&self) -> &OperatorSum {
        &self.op
    }

    /// Calibrate a confusion matrix by preparing each basis state, applying
    /// the configured noise, and sampling the computational basis.
    fn calibrate(&self, shots: u64) -> Result<ConfusionMatrix, DriverError> {
        let dim = self.op.dim();
        let noise = self.noise.clone();
        let mut prep = |basis: usize, shots: u64, seed: u64| {
            let pure = StateVector::basis(dim, basis);
            let mut rho = crate::qstate::DensityMatrix::from_pure(&pure);
            for spec in &noise {
                rho = apply_channel(&rho, spec).expect("calibration channel");
            }
            sample_distribution(&rho.probabilities(), shots, seed)
        };
        Ok(calibrate_confusion(&mut prep, dim, shots, self.seed ^ 0xc0ffee)?)
    }

    fn estimate(
        &mut self,
        state: &QuantumState,
        eval_seed: u64,
    ) -> Result<(f64, f64, u64), DriverError> {
        match self.backend {
            Backend::Exact => {
                let e = expectation_exact(state, &self.op)?;
                Ok((e.re, 0.0, 0))
            }
            Backend::Sampled { shots } => match self.grouping {
                Grouping::Bell => {
                    let w = bell_weights(&self.op).ok_or(DriverError::BellUnsupported)?;
                    let (_counts, e) = bell_measurement(state, shots, eval_seed)?;
                    let energy = self.op.identity_coefficient().re
                        + w[0] * e[0]
                        + w[1] * e[1]
                        + w[2] * e[2];
                    let var: f64 = w
                        .iter()
                        .zip(&e)
                        .map(|(wi, ei)| wi * wi * (1.0 - ei * ei).max(0.0) / shots as f64)
                        .sum();
                    Ok((energy, var.sqrt(), shots))
                }
                _ => {
                    let groups = self.groups.as_ref().expect("groups built for sampled backend");
                    let (energy, stderr) = estimate_pauli_sum(
                        &self.op,
                        state,
                        groups,
                        shots,
                        eval_seed,
                        self.confusion.as_ref(),
                    )?;
                    Ok((energy, stderr, shots * groups.len() as u64))
                }
            },
        }
    }

    /// Energy and standard error at `theta`; also returns the shots spent.
    pub fn evaluate(&mut self, theta: &[f64]) -> Result<(f64, f64, u64), DriverError> {
        self.evals += 1;
        let eval_seed = self.seed ^ self.evals.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        match &self.mitigation {
            Mitigation::Zne { epsilons } => {
                let epsilons = epsilons.clone();
                let mut points = Vec::with_capacity(epsilons.len());
                let mut variance = Vec::with_capacity(epsilons.len());
                let mut shots_total = 0;
                for (k, &eps) in epsilons.iter().enumerate() {
                    let scaled: Vec<NoiseSpec> = self
                        .noise
                        .iter()
                        .map(|n| NoiseSpec::new(n.kind, eps, n.targets.clone()))
                        .collect::<Result<_, _>>()?;
                    let state = prepare_ansatz(&self.ansatz, theta, &scaled)?;
                    let (e, err, shots) =
                        self.estimate(&state, eval_seed.wrapping_add(k as u64))?;
                    points.push((eps, e));
                    variance.push(err * err);
                    shots_total += shots;
                }
                let energy = zne_estimate(&points)?;
                // propagate sampling errors through the least-squares
                // intercept weights
                let n = points.len() as f64;
                let sx: f64 = points.iter().map(|p| p.0).sum();
                let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
                let denom = n * sxx - sx * sx;
                let var: f64 = points
                    .iter()
                    .zip(&variance)
                    .map(|(p, v)| {
                        let c = (sxx - p.0 * sx) / denom;
                        c * c * v
                    })
                    .sum();
                Ok((energy, var.sqrt(), shots_total))
            }
            _ => {
                let state = prepare_ansatz(&self.ansatz, theta, &self.noise)?;
                self.estimate(&state, eval_seed)
            }
        }
    }
}

/// Full record of a VQE run: the optimizer trace plus per-record standard
/// error and cumulative shot count, final results, and the exact reference.
#[derive(Debug, Clone, PartialEq)]
pub struct VQETrace {
    pub opt: OptTrace,
    /// Standard error of the most recent evaluation at each trace record.
    pub stderr: Vec<f64>,
    /// Cumulative shots spent at each trace record.
    pub cumulative_shots: Vec<u64>,
    pub final_energy: f64,
    pub final_theta: Vec<f64>,
    pub exact_reference: f64,
}

impl VQETrace {
    /// CSV serialization: `iter,value,stderr,shots,evals,theta0,…`.
    pub fn to_csv(&self) -> String {
        let n = self.opt.records.first().map_or(0, |r| r.theta.len());
        let mut out = String::from("iter,value,stderr,shots,evals");
        for i in 0..n {
            out.push_str(&format!(",theta{i}"));
        }
        out.push('\n');
        for (i, r) in self.opt.records.iter().enumerate() {
            out.push_str(&format!(
                "{},{:.12e},{:.12e},{},{}",
                r.iteration, r.value, self.stderr[i], self.cumulative_shots[i], r.evaluations
            ));
            for t in &r.theta {
                out.push_str(&format!(",{t:.12e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Run a full VQE loop from a seeded random start.
pub fn run_vqe(cfg: &VQEConfig) -> Result<VQETrace, DriverError> {
    cfg.optimizer.validate()?;
    let mut objective = EnergyObjective::new(cfg)?;
    let exact_reference = ground_state(objective.operator())?.0;

    let param_count = cfg.ansatz.parameter_count();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let theta0: Vec<f64> = (0..param_count)
        .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
        .collect();

    // per-evaluation side channel: (stderr, cumulative shots)
    let log: RefCell<Vec<(f64, u64)>> = RefCell::new(Vec::new());
    let failure: RefCell<Option<DriverError>> = RefCell::new(None);

    let trace = {
        let objective_cell = RefCell::new(&mut objective);
        let mut scalar = |theta: &[f64]| -> f64 {
            match objective_cell.borrow_mut().evaluate(theta) {
                Ok((e, err, shots)) => {
                    let mut log = log.borrow_mut();
                    let prev = log.last().map_or(0, |l| l.1);
                    log.push((err, prev + shots));
                    e
                }
                Err(e) => {
                    let mut slot = failure.borrow_mut();
                    if slot.is_none() {
                        *slot = Some(e);
                    }
                    let mut log = log.borrow_mut();
                    let prev = log.last().map_or(0, |l| l.1);
                    log.push((f64::NAN, prev));
                    f64::NAN
                }
            }
        };
        if cfg.use_qng {
            if !cfg.noise.is_empty()
                || matches!(cfg.ansatz, AnsatzSpec::MeshPhases { .. })
            {
                return Err(DriverError::QngUnsupported);
            }
            let ansatz = cfg.ansatz.clone();
            let state_fn = move |theta: &[f64]| -> StateVector {
                prepare_pure(&ansatz, theta).expect("pure ansatz preparation")
            };
            minimize_qng(&mut scalar, &state_fn, &theta0, &cfg.optimizer)?
        } else {
            minimize(&mut scalar, &theta0, &cfg.optimizer)?
        }
    };

    if let Some(e) = failure.into_inner() {
        if !trace.aborted {
            return Err(e);
        }
    }

    let log = log.into_inner();
    let mut stderr = Vec::with_capacity(trace.records.len());
    let mut cumulative_shots = Vec::with_capacity(trace.records.len());
    for r in &trace.records {
        let idx = r.evaluations.saturating_sub(1).min(log.len().saturating_sub(1));
        let (err, shots) = log.get(idx).copied().unwrap_or((0.0, 0));
        stderr.push(err);
        cumulative_shots.push(shots);
    }
    let final_energy = trace.best_value;
    let final_theta = trace.best_theta.clone();
    Ok(VQETrace { opt: trace, stderr, cumulative_shots, final_energy, final_theta, exact_reference })
}
