//! Command-line front end: each subcommand runs a configured experiment and
//! writes CSV/JSON artifacts plus a run manifest into the output directory.
//!
//! Exit codes: 0 success, 1 configuration/usage error, 2 runtime failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::driver::{
    run_vqe, AnsatzSpec, Backend, DriverError, Grouping, HamiltonianSource, Mitigation, PlateOp,
    VQEConfig,
};
use crate::hamiltonians::{load_coefficients, schwinger_exact_levels, Model};
use crate::linopt::{
    clements_decompose, haar_unitary, mesh_fidelity, mesh_reconstruct, mesh_with_loss,
    reck_decompose,
};
use crate::measurement::sample_distribution;
use crate::noise_mitigation::{apply_channel, calibrate_confusion, NoiseKind, NoiseSpec};
use crate::optimizers::{Method, OptimizerConfig};
use crate::qstate::{ground_state, DensityMatrix, StateVector};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, bad config file, unknown names: exit 1.
    Config(String),
    /// Failures while running a valid configuration: exit 2.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<DriverError> for CliError {
    fn from(e: DriverError) -> Self {
        match e {
            DriverError::Config(_)
            | DriverError::Toml(_)
            | DriverError::Io(_)
            | DriverError::ParameterCount { .. }
            | DriverError::DimensionMismatch(_, _)
            | DriverError::BellUnsupported
            | DriverError::ZneNeedsNoise
            | DriverError::QngUnsupported => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("i/o error: {e}"))
    }
}

#[derive(Parser)]
#[command(name = "photonvqe", version, about = "Photonic VQE simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Master seed for all randomness in the command.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output directory for CSV/JSON artifacts.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Molecular dissociation curve from a bundled coefficient table.
    Dissociation {
        #[command(flatten)]
        common: CommonArgs,
        /// Molecule: h2, hehplus, or lih.
        #[arg(long)]
        model: String,
        /// Coefficient file; defaults to the bundled table for the model.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Schwinger-model mass sweep.
    Schwinger {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long = "m-min", default_value_t = -2.0)]
        m_min: f64,
        #[arg(long = "m-max", default_value_t = 2.0)]
        m_max: f64,
        #[arg(long, default_value_t = 9)]
        steps: usize,
        /// Backend: exact or sampled.
        #[arg(long, default_value = "exact")]
        backend: String,
        /// Shots per iteration for the sampled backend.
        #[arg(long, default_value_t = 10_000)]
        shots: u64,
    },
    /// Variational factoring of a biprime.
    Factor {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 35)]
        n: u64,
        #[arg(long, default_value_t = 10_000)]
        shots: u64,
        #[arg(long = "max-iterations", default_value_t = 150)]
        max_iterations: usize,
    },
    /// Mesh decomposition loss study: Clements vs Reck fidelity under loss.
    Mesh {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 8)]
        modes: usize,
        #[arg(long, default_value_t = 50)]
        samples: usize,
        #[arg(long, default_value_t = 0.99)]
        transmission: f64,
    },
    /// Calibrate a measurement confusion matrix under a noise channel.
    Calibrate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 4)]
        dim: usize,
        /// Noise kind: dephasing, depolarizing, or white.
        #[arg(long, default_value = "white")]
        noise: String,
        #[arg(long, default_value_t = 0.1)]
        strength: f64,
        #[arg(long, default_value_t = 100_000)]
        shots: u64,
    },
    /// Run an arbitrary VQE config file.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        config: PathBuf,
    },
}

/// Provenance record written alongside every output.
#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub master_seed: u64,
    pub output_directory: String,
    pub tool_version: String,
    pub timestamp_unix: u64,
}

impl RunManifest {
    fn new(command: &str, config_path: Option<&Path>, seed: u64, out: &Path) -> RunManifest {
        RunManifest {
            command: command.to_string(),
            config_path: config_path.map(|p| p.display().to_string()),
            master_seed: seed,
            output_directory: out.display().to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    fn write(&self, out: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        std::fs::write(out.join("manifest.json"), text + "\n")?;
        Ok(())
    }
}

fn format_sig(v: f64) -> String {
    // 12 significant digits
    format!("{v:.11e}")
}

/// Write rows as an RFC-4180-style CSV with a header row, LF endings, and
/// doubles at 12 significant digits.
pub fn emit_curve(header: &[&str], rows: &[Vec<f64>], path: &Path) -> Result<(), CliError> {
    for row in rows {
        if row.len() != header.len() {
            return Err(CliError::Runtime(format!(
                "row has {} fields, header has {}",
                row.len(),
                header.len()
            )));
        }
    }
    let mut text = header.join(",");
    text.push('\n');
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format_sig(*v)).collect();
        text.push_str(&line.join(","));
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn derive_seed(master: u64, index: u64) -> u64 {
    master ^ (index + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn ensure_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn bundled_data_path(model: Model) -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/data")).join(format!("{}.dat", model.file_stem()))
}

/// Ansatz and optimizer used for a molecule's dissociation sweep.
fn molecular_ansatz(model: Model) -> (AnsatzSpec, OptimizerConfig) {
    match model {
        Model::H2 => (
            AnsatzSpec::Uccsd { orbitals: 2, reference: 1, singles: vec![(0, 1)], doubles: vec![] },
            OptimizerConfig {
                method: Method::NelderMead,
                max_iterations: 300,
                tolerance: 1e-12,
                stall_window: 40,
                ..Default::default()
            },
        ),
        Model::HeHPlus => (
            AnsatzSpec::RawQudit { dimension: 4 },
            OptimizerConfig {
                method: Method::NelderMead,
                max_iterations: 1500,
                tolerance: 1e-12,
                stall_window: 100,
                ..Default::default()
            },
        ),
        Model::LiH => (
            AnsatzSpec::RawQudit { dimension: 16 },
            OptimizerConfig {
                method: Method::Cobyla,
                max_iterations: 3000,
                tolerance: 1e-10,
                stall_window: 200,
                ..Default::default()
            },
        ),
    }
}

fn cmd_dissociation(
    common: &CommonArgs,
    model: &str,
    data: Option<&Path>,
) -> Result<(), CliError> {
    let model =
        Model::parse(model).ok_or_else(|| CliError::Config(format!("unknown model {model:?}")))?;
    let path = data.map(Path::to_path_buf).unwrap_or_else(|| bundled_data_path(model));
    let table = load_coefficients(&path).map_err(DriverError::from)?;
    let (ansatz, optimizer) = molecular_ansatz(model);
    let mut rows = Vec::new();
    for (i, row) in table.rows.iter().enumerate() {
        let cfg = VQEConfig {
            hamiltonian: HamiltonianSource::File { path: path.clone(), row: i },
            ansatz: ansatz.clone(),
            backend: Backend::Exact,
            grouping: Grouping::Qwc,
            noise: vec![],
            mitigation: Mitigation::None,
            optimizer: optimizer.clone(),
            use_qng: false,
            seed: derive_seed(common.seed, i as u64),
        };
        let trace = run_vqe(&cfg)?;
        rows.push(vec![
            row.bond_length,
            trace.final_energy,
            trace.exact_reference,
            row.reference_energy.unwrap_or(trace.exact_reference),
        ]);
    }
    ensure_out(&common.out)?;
    emit_curve(
        &["bond_length", "e_vqe", "e_exact", "e_reference"],
        &rows,
        &common.out.join(format!("dissociation_{}.csv", model.file_stem())),
    )?;
    RunManifest::new("dissociation", Some(&path), common.seed, &common.out).write(&common.out)
}

fn cmd_schwinger(
    common: &CommonArgs,
    m_min: f64,
    m_max: f64,
    steps: usize,
    backend: &str,
    shots: u64,
) -> Result<(), CliError> {
    if steps < 1 {
        return Err(CliError::Config("steps must be at least 1".into()));
    }
    let backend = match backend {
        "exact" => Backend::Exact,
        "sampled" => Backend::Sampled { shots },
        other => return Err(CliError::Config(format!("unknown backend {other:?}"))),
    };
    let mut rows = Vec::new();
    for i in 0..steps {
        let m = if steps == 1 {
            m_min
        } else {
            m_min + (m_max - m_min) * i as f64 / (steps - 1) as f64
        };
        let cfg = VQEConfig {
            hamiltonian: HamiltonianSource::Builder { name: "schwinger".into(), params: vec![m] },
            ansatz: AnsatzSpec::RawQudit { dimension: 4 },
            backend,
            grouping: Grouping::Qwc,
            noise: vec![],
            mitigation: Mitigation::None,
            optimizer: OptimizerConfig {
                method: Method::NelderMead,
                max_iterations: 400,
                tolerance: 1e-12,
                stall_window: 40,
                ..Default::default()
            },
            use_qng: false,
            seed: derive_seed(common.seed, i as u64),
        };
        let trace = run_vqe(&cfg)?;
        let exact = schwinger_exact_levels(m)[0];
        rows.push(vec![m, trace.final_energy, exact]);
    }
    ensure_out(&common.out)?;
    emit_curve(&["m", "e_vqe", "e_exact"], &rows, &common.out.join("schwinger.csv"))?;
    RunManifest::new("schwinger", None, common.seed, &common.out).write(&common.out)
}

/// The factoring run's final state and summary, reusable by tests.
pub fn factor_run(
    n: u64,
    shots: u64,
    max_iterations: usize,
    seed: u64,
) -> Result<(VQEConfig, crate::driver::VQETrace, Vec<f64>), CliError> {
    let cfg = VQEConfig {
        hamiltonian: HamiltonianSource::Builder { name: "factoring".into(), params: vec![n as f64] },
        ansatz: AnsatzSpec::WaveplateHea {
            qubits: 2,
            layout: vec![
                PlateOp::Hwp { qubit: 0 },
                PlateOp::Qwp { qubit: 0 },
                PlateOp::Hwp { qubit: 1 },
                PlateOp::Qwp { qubit: 1 },
                PlateOp::PbdCnot { control: 0, target: 1 },
                PlateOp::Hwp { qubit: 0 },
                PlateOp::Qwp { qubit: 0 },
                PlateOp::Hwp { qubit: 1 },
                PlateOp::Qwp { qubit: 1 },
            ],
        },
        backend: Backend::Sampled { shots },
        grouping: Grouping::Qwc,
        noise: vec![],
        mitigation: Mitigation::None,
        optimizer: OptimizerConfig {
            method: Method::NelderMead,
            max_iterations,
            tolerance: 1e-6,
            stall_window: 40,
            ..Default::default()
        },
        use_qng: false,
        seed,
    };
    let trace = run_vqe(&cfg)?;
    // exact probabilities of the converged state
    let state = crate::driver::prepare_ansatz(&cfg.ansatz, &trace.final_theta, &[])?;
    let probs = match state {
        crate::qstate::QuantumState::Pure(psi) => psi.probabilities(),
        crate::qstate::QuantumState::Mixed(rho) => rho.probabilities(),
    };
    Ok((cfg, trace, probs))
}

fn cmd_factor(
    common: &CommonArgs,
    n: u64,
    shots: u64,
    max_iterations: usize,
) -> Result<(), CliError> {
    let (_cfg, trace, probs) = factor_run(n, shots, max_iterations, common.seed)?;
    let qubits = (probs.len() as f64).log2() as usize;
    let mut labelled: Vec<(String, f64)> = probs
        .iter()
        .enumerate()
        .map(|(i, p)| (format!("{i:0width$b}", width = qubits), *p))
        .collect();
    labelled.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    let dominant: Vec<String> = labelled
        .iter()
        .filter(|(_, p)| *p > 0.1)
        .map(|(s, _)| s.clone())
        .collect();

    #[derive(Serialize)]
    struct FactorReport {
        n: u64,
        energy: f64,
        exact_reference: f64,
        probabilities: std::collections::BTreeMap<String, f64>,
        dominant: Vec<String>,
    }
    let report = FactorReport {
        n,
        energy: trace.final_energy,
        exact_reference: trace.exact_reference,
        probabilities: labelled.iter().cloned().collect(),
        dominant,
    };
    ensure_out(&common.out)?;
    let text =
        serde_json::to_string_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(common.out.join("factor.json"), text + "\n")?;
    RunManifest::new("factor", None, common.seed, &common.out).write(&common.out)
}

fn cmd_mesh(
    common: &CommonArgs,
    modes: usize,
    samples: usize,
    transmission: f64,
) -> Result<(), CliError> {
    if !(2..=crate::linopt::MAX_MODES).contains(&modes) {
        return Err(CliError::Config(format!("modes must be in 2..=8, got {modes}")));
    }
    if !(0.0..=1.0).contains(&transmission) {
        return Err(CliError::Config(format!("transmission must be in [0,1], got {transmission}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(common.seed);
    let mut rows = Vec::with_capacity(samples);
    for i in 0..samples {
        let u = haar_unitary(modes, &mut rng);
        let run = |mesh: &crate::linopt::BeamSplitterMesh| -> Result<(f64, f64), CliError> {
            let ideal = mesh_reconstruct(mesh).map_err(DriverError::from)?;
            let lossy = mesh_with_loss(mesh, transmission).map_err(DriverError::from)?;
            let residual = (&ideal - &u).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            Ok((mesh_fidelity(&u, &lossy), residual))
        };
        let clements = clements_decompose(&u).map_err(DriverError::from)?;
        let reck = reck_decompose(&u).map_err(DriverError::from)?;
        let (fc, rc) = run(&clements)?;
        let (fr, rr) = run(&reck)?;
        rows.push(vec![i as f64, fc, fr, rc.max(rr)]);
    }
    ensure_out(&common.out)?;
    emit_curve(
        &["sample", "clements_fidelity", "reck_fidelity", "reconstruction_residual"],
        &rows,
        &common.out.join("mesh.csv"),
    )?;
    RunManifest::new("mesh", None, common.seed, &common.out).write(&common.out)
}

fn cmd_calibrate(
    common: &CommonArgs,
    dim: usize,
    noise: &str,
    strength: f64,
    shots: u64,
) -> Result<(), CliError> {
    let kind = match noise {
        "dephasing" => NoiseKind::Dephasing,
        "depolarizing" => NoiseKind::Depolarizing,
        "white" => NoiseKind::White,
        other => return Err(CliError::Config(format!("unknown noise {other:?}"))),
    };
    if !dim.is_power_of_two() || dim < 2 {
        return Err(CliError::Config(format!("dim must be a power of two >= 2, got {dim}")));
    }
    let spec = NoiseSpec::new(kind, strength, vec![])
        .map_err(|e| CliError::Config(e.to_string()))?;
    let mut prep = |basis: usize, shots: u64, seed: u64| {
        let rho = DensityMatrix::from_pure(&StateVector::basis(dim, basis));
        let rho = apply_channel(&rho, &spec).expect("calibration channel");
        sample_distribution(&rho.probabilities(), shots, seed)
    };
    let confusion = calibrate_confusion(&mut prep, dim, shots, common.seed)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    ensure_out(&common.out)?;
    std::fs::write(common.out.join("confusion.csv"), confusion.to_csv())?;
    RunManifest::new("calibrate", None, common.seed, &common.out).write(&common.out)
}

fn cmd_run(common: &CommonArgs, config: &Path) -> Result<(), CliError> {
    let mut cfg = VQEConfig::from_toml_file(config)?;
    // the CLI seed flag overrides the config seed for reproducible sweeps
    cfg.seed = common.seed;
    let trace = run_vqe(&cfg)?;
    ensure_out(&common.out)?;
    std::fs::write(common.out.join("vqe_trace.csv"), trace.to_csv())?;

    #[derive(Serialize)]
    struct Summary {
        final_energy: f64,
        exact_reference: f64,
        iterations: usize,
        evaluations: usize,
        aborted: bool,
        final_theta: Vec<f64>,
    }
    let summary = Summary {
        final_energy: trace.final_energy,
        exact_reference: trace.exact_reference,
        iterations: trace.opt.records.len(),
        evaluations: trace.opt.records.last().map_or(0, |r| r.evaluations),
        aborted: trace.opt.aborted,
        final_theta: trace.final_theta.clone(),
    };
    let text =
        serde_json::to_string_pretty(&summary).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(common.out.join("vqe_summary.json"), text + "\n")?;
    RunManifest::new("run", Some(config), common.seed, &common.out).write(&common.out)
}

/// Parse the argument vector and run the selected command; returns the
/// process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own usage/help text; --help and --version are
            // successes, everything else is a usage error
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Dissociation { common, model, data } => {
            cmd_dissociation(common, model, data.as_deref())
        }
        Command::Schwinger { common, m_min, m_max, steps, backend, shots } => {
            cmd_schwinger(common, *m_min, *m_max, *steps, backend, *shots)
        }
        Command::Factor { common, n, shots, max_iterations } => {
            cmd_factor(common, *n, *shots, *max_iterations)
        }
        Command::Mesh { common, modes, samples, transmission } => {
            cmd_mesh(common, *modes, *samples, *transmission)
        }
        Command::Calibrate { common, dim, noise, strength, shots } => {
            cmd_calibrate(common, *dim, noise, *strength, *shots)
        }
        Command::Run { common, config } => cmd_run(common, config),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

/// Quick textual summary of the ground state of a Schwinger sweep row,
/// used by documentation examples.
pub fn schwinger_summary(m: f64) -> String {
    let op = crate::hamiltonians::build_schwinger(m);
    let (e, _) = ground_state(&op).expect("schwinger ground state");
    let mut s = String::new();
    let _ = write!(s, "m={m}: E0={e:.6}");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmpdir() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn emit_curve_formats() {
        let dir = tmpdir();
        let path = dir.path().join("c.csv");
        emit_curve(&["a", "b"], &[], &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "a,b\n");
        emit_curve(&["a", "b"], &[vec![1.0, 0.5]], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.ends_with('\n'));
        assert!(!text.contains('\r'));
        // 12 significant digits
        assert!(text.contains("1.00000000000e0"), "{text}");
    }

    #[test]
    fn emit_curve_rejects_ragged_rows() {
        let dir = tmpdir();
        let err = emit_curve(&["a"], &[vec![1.0, 2.0]], &dir.path().join("c.csv"));
        assert!(err.is_err());
    }

    #[test]
    fn unknown_subcommand_exits_one() {
        assert_eq!(dispatch(["photonvqe", "frobnicate"]), 1);
        assert_eq!(dispatch(["photonvqe", "mesh", "--bogus-flag"]), 1);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(dispatch(["photonvqe", "--help"]), 0);
    }

    #[test]
    fn config_errors_exit_one() {
        let dir = tmpdir();
        let out = dir.path().to_str().unwrap();
        assert_eq!(
            dispatch(["photonvqe", "mesh", "--modes", "99", "--out", out]),
            1
        );
        assert_eq!(
            dispatch(["photonvqe", "schwinger", "--backend", "quantum", "--out", out]),
            1
        );
        assert_eq!(
            dispatch(["photonvqe", "calibrate", "--noise", "cosmic", "--out", out]),
            1
        );
    }

    #[test]
    fn missing_config_file_exits_one() {
        let dir = tmpdir();
        let out = dir.path().to_str().unwrap();
        let missing = dir.path().join("nope.toml");
        assert_eq!(
            dispatch(["photonvqe", "run", "--config", missing.to_str().unwrap(), "--out", out]),
            1
        );
    }

    #[test]
    fn mesh_command_writes_csv_and_manifest() {
        let dir = tmpdir();
        let out = dir.path().to_str().unwrap();
        let code = dispatch([
            "photonvqe", "mesh", "--modes", "4", "--samples", "5", "--out", out,
        ]);
        assert_eq!(code, 0);
        let csv = std::fs::read_to_string(dir.path().join("mesh.csv")).unwrap();
        assert!(csv.starts_with("sample,clements_fidelity,reck_fidelity"));
        assert_eq!(csv.lines().count(), 6);
        let manifest = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
        assert!(manifest.contains("\"command\": \"mesh\""));
        assert!(manifest.contains("\"master_seed\": 42"));
    }

    #[test]
    fn mesh_command_is_seed_deterministic() {
        let read = |seed: &str| {
            let dir = tmpdir();
            let out = dir.path().to_str().unwrap();
            assert_eq!(
                dispatch([
                    "photonvqe", "mesh", "--modes", "3", "--samples", "4", "--seed", seed,
                    "--out", out,
                ]),
                0
            );
            std::fs::read_to_string(dir.path().join("mesh.csv")).unwrap()
        };
        assert_eq!(read("7"), read("7"));
        assert_ne!(read("7"), read("8"));
    }

    #[test]
    fn calibrate_writes_confusion_csv() {
        let dir = tmpdir();
        let out = dir.path().to_str().unwrap();
        let code = dispatch([
            "photonvqe", "calibrate", "--dim", "2", "--strength", "0.2", "--shots", "20000",
            "--out", out,
        ]);
        assert_eq!(code, 0);
        let csv = std::fs::read_to_string(dir.path().join("confusion.csv")).unwrap();
        let confusion = crate::noise_mitigation::ConfusionMatrix::from_csv(&csv).unwrap();
        assert_eq!(confusion.dim(), 2);
    }

    #[test]
    fn schwinger_command_small_sweep() {
        let dir = tmpdir();
        let out = dir.path().to_str().unwrap();
        let code = dispatch([
            "photonvqe", "schwinger", "--m-min", "0", "--m-max", "1", "--steps", "2", "--out",
            out,
        ]);
        assert_eq!(code, 0);
        let csv = std::fs::read_to_string(dir.path().join("schwinger.csv")).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "m,e_vqe,e_exact");
        for line in lines {
            let fields: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
            assert!((fields[1] - fields[2]).abs() <= 1e-2, "{line}");
        }
    }

    #[test]
    fn run_command_executes_a_config_file() {
        let dir = tmpdir();
        let config_path = dir.path().join("vqe.toml");
        std::fs::write(
            &config_path,
            r#"
                [hamiltonian]
                builder = "heisenberg"
                params = [1.0, 1.0, 1.0]

                [ansatz]
                family = "raw_qudit"
                dimension = 4

                [optimizer]
                method = "nelder_mead"
                max_iterations = 200
            "#,
        )
        .unwrap();
        let out = dir.path().to_str().unwrap();
        let code = dispatch([
            "photonvqe", "run", "--config", config_path.to_str().unwrap(), "--out", out,
        ]);
        assert_eq!(code, 0);
        let summary = std::fs::read_to_string(dir.path().join("vqe_summary.json")).unwrap();
        let value: serde_json::Value = serde_json::from_str(&summary).unwrap();
        assert!(value["final_energy"].as_f64().unwrap() >= -3.0 - 1e-9);
        let trace = std::fs::read_to_string(dir.path().join("vqe_trace.csv")).unwrap();
        assert!(trace.starts_with("iter,value,stderr,shots,evals"));
    }
}
