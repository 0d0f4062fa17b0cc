//! Acceptance suite: one test per release criterion, each printing a single
//! pass line with the measured numbers next to its pinned tolerance.

use std::time::Instant;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use photonvqe::driver::{
    prepare_ansatz, raw_qudit_parameters, run_vqe, AnsatzSpec, Backend, Grouping,
    HamiltonianSource, Mitigation, VQEConfig,
};
use photonvqe::hamiltonians::{
    build_factoring, build_schwinger, load_coefficients, FactoringForm, Model,
};
use photonvqe::linopt::{
    clements_decompose, fock_evolve, haar_unitary, mesh_fidelity, mesh_reconstruct,
    mesh_with_loss, reck_decompose, FockState, MeshElement,
};
use photonvqe::measurement::{
    bell_measurement, estimate_pauli_sum, gc_groups, qwc_groups, sample_distribution,
};
use photonvqe::noise_mitigation::{
    apply_channel, calibrate_confusion, zne_estimate, zne_variance, ConfusionMatrix, NoiseKind,
    NoiseSpec,
};
use photonvqe::optimizers::{minimize, minimize_qng, qfim, Method, OptimizerConfig};
use photonvqe::qstate::{
    exact_eigensolve, expectation_exact, ground_state, DensityMatrix, OperatorSum, PauliString,
    QuantumState, StateVector,
};

fn data_path(model: Model) -> String {
    format!("{}/data/{}.dat", env!("CARGO_MANIFEST_DIR"), model.file_stem())
}

fn random_state(dim: usize, rng: &mut ChaCha8Rng) -> StateVector {
    let u = haar_unitary(dim, rng);
    StateVector::new(u.column(0).to_owned()).unwrap()
}

/// Criterion 1: exact-backend VQE matches the analytic Schwinger ground
/// level within 1e-2 across the mass grid in under 30 s, and the constant
/// levels E=1, E=2 appear in every exact spectrum.
#[test]
fn schwinger_mass_grid_reproduction() {
    let start = Instant::now();
    let masses = [-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0];
    let mut worst: f64 = 0.0;
    for (i, &m) in masses.iter().enumerate() {
        let cfg = VQEConfig {
            hamiltonian: HamiltonianSource::Builder { name: "schwinger".into(), params: vec![m] },
            ansatz: AnsatzSpec::RawQudit { dimension: 4 },
            backend: Backend::Exact,
            grouping: Grouping::Qwc,
            noise: vec![],
            mitigation: Mitigation::None,
            optimizer: OptimizerConfig {
                method: Method::NelderMead,
                max_iterations: 500,
                tolerance: 1e-12,
                stall_window: 40,
                ..Default::default()
            },
            use_qng: false,
            seed: 42 + i as u64,
        };
        let trace = run_vqe(&cfg).unwrap();
        let analytic = 0.5 - (m * m + m + 17.0 / 4.0).sqrt();
        worst = worst.max((trace.final_energy - analytic).abs());

        let spectrum = exact_eigensolve(&build_schwinger(m)).unwrap();
        for level in [1.0, 2.0] {
            assert!(
                spectrum.iter().any(|e| (e - level).abs() < 1e-9),
                "m={m}: level {level} missing from {spectrum:?}"
            );
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(worst <= 1e-2, "worst deviation {worst}");
    assert!(elapsed < 30.0, "took {elapsed:.1} s");
    println!("PASS schwinger grid: worst |E_vqe - E_analytic| = {worst:.2e} (tol 1e-2), {elapsed:.1} s (< 30 s)");
}

/// Criterion 2: sampled factoring-35 VQE lands on the degenerate ground
/// manifold; the Hamiltonian itself has ground energy 0 and both published
/// forms agree as matrices.
#[test]
fn factoring_35_sampled_vqe() {
    let (_cfg, trace, probs) =
        photonvqe::cli::factor_run(35, 10_000, 150, 42).unwrap();
    // |01> = index 1, |10> = index 2
    let ground_mass = probs[1] + probs[2];
    assert!(ground_mass >= 0.95, "ground-state mass {ground_mass}");
    assert!(trace.final_energy <= 1.0, "energy {}", trace.final_energy);

    let eq15 = build_factoring(35, FactoringForm::Eq15).unwrap();
    let projector = build_factoring(35, FactoringForm::Projector).unwrap();
    let ground = exact_eigensolve(&eq15).unwrap()[0];
    assert!(ground.abs() < 1e-12, "ground energy {ground}");
    let diff = (&eq15.to_matrix().unwrap() - &projector.to_matrix().unwrap())
        .iter()
        .map(|z| z.norm())
        .fold(0.0f64, f64::max);
    assert!(diff < 1e-12, "form difference {diff}");
    println!(
        "PASS factoring 35: mass {ground_mass:.4} (>= 0.95), E {:.4} (<= 1.0), ground {ground:.1e}, form diff {diff:.1e}",
        trace.final_energy
    );
}

fn chemistry_row(
    path: &str,
    row: usize,
    ansatz: &AnsatzSpec,
    optimizer: &OptimizerConfig,
    starts: u64,
    seed: u64,
) -> (f64, f64) {
    let mut best: Option<photonvqe::driver::VQETrace> = None;
    for attempt in 0..starts {
        let cfg = VQEConfig {
            hamiltonian: HamiltonianSource::File { path: path.into(), row },
            ansatz: ansatz.clone(),
            backend: Backend::Exact,
            grouping: Grouping::Qwc,
            noise: vec![],
            mitigation: Mitigation::None,
            optimizer: optimizer.clone(),
            use_qng: false,
            seed: seed ^ (attempt + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15),
        };
        let trace = run_vqe(&cfg).unwrap();
        if best.as_ref().map_or(true, |b| trace.final_energy < b.final_energy) {
            best = Some(trace);
        }
    }
    let best = best.unwrap();
    (best.final_energy, best.exact_reference)
}

/// Criterion 3: every bundled H2 and HeH+ row reaches chemical accuracy
/// (1.6e-3 Ha) against exact diagonalization; LiH within 0.05 Ha; under
/// 5 minutes for the full sweep.
#[test]
fn chemistry_sweep_reaches_chemical_accuracy() {
    let start = Instant::now();

    let h2_path = data_path(Model::H2);
    let h2 = load_coefficients(&h2_path).unwrap();
    let h2_ansatz = AnsatzSpec::Uccsd {
        orbitals: 2,
        reference: 1,
        singles: vec![(0, 1)],
        doubles: vec![],
    };
    let nm = OptimizerConfig {
        method: Method::NelderMead,
        max_iterations: 1500,
        tolerance: 1e-12,
        stall_window: 100,
        ..Default::default()
    };
    let mut worst_h2: f64 = 0.0;
    for row in 0..h2.rows.len() {
        let (e, reference) = chemistry_row(&h2_path, row, &h2_ansatz, &nm, 2, 11 + row as u64);
        worst_h2 = worst_h2.max((e - reference).abs());
    }
    assert!(worst_h2 < 1.6e-3, "H2 worst {worst_h2}");

    let heh_path = data_path(Model::HeHPlus);
    let heh = load_coefficients(&heh_path).unwrap();
    let qudit4 = AnsatzSpec::RawQudit { dimension: 4 };
    let mut worst_heh: f64 = 0.0;
    for row in 0..heh.rows.len() {
        let (e, reference) = chemistry_row(&heh_path, row, &qudit4, &nm, 3, 23 + row as u64);
        worst_heh = worst_heh.max((e - reference).abs());
    }
    assert!(worst_heh < 1.6e-3, "HeH+ worst {worst_heh}");

    let lih_path = data_path(Model::LiH);
    let lih = load_coefficients(&lih_path).unwrap();
    let qudit16 = AnsatzSpec::RawQudit { dimension: 16 };
    assert_eq!(qudit16.parameter_count(), 30);
    let cobyla = OptimizerConfig {
        method: Method::Cobyla,
        max_iterations: 4000,
        tolerance: 1e-10,
        stall_window: 300,
        ..Default::default()
    };
    let mut worst_lih: f64 = 0.0;
    for row in 0..lih.rows.len() {
        let (e, reference) = chemistry_row(&lih_path, row, &qudit16, &cobyla, 3, 37 + row as u64);
        worst_lih = worst_lih.max((e - reference).abs());
    }
    assert!(worst_lih < 0.05, "LiH worst {worst_lih}");

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 300.0, "took {elapsed:.1} s");
    println!(
        "PASS chemistry: H2 {worst_h2:.2e} / HeH+ {worst_heh:.2e} (tol 1.6e-3), LiH {worst_lih:.2e} (tol 0.05), {elapsed:.1} s (< 300 s)"
    );
}

/// Criterion 4: the HeH+ nine-term Hamiltonian needs exactly 4 QWC groups
/// and 3 general-commuting groups; XX+YY+ZZ forms a single Bell-measurable
/// group whose one-distribution estimator is statistically sound.
#[test]
fn grouping_counts_and_bell_estimator() {
    let heh = load_coefficients(data_path(Model::HeHPlus)).unwrap();
    let op = heh.hamiltonian(0).unwrap();
    let qwc = qwc_groups(&op).unwrap();
    let gc = gc_groups(&op).unwrap();
    assert_eq!(qwc.len(), 4, "QWC groups: {}", qwc.len());
    assert_eq!(gc.len(), 3, "GC groups: {}", gc.len());

    let heisenberg = photonvqe::hamiltonians::build_heisenberg(1.0, 1.0, 1.0);
    let bell_groups = gc_groups(&heisenberg).unwrap();
    assert_eq!(bell_groups.len(), 1, "XX+YY+ZZ should be one group");

    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let shots = 20_000u64;
    let mut checked = 0;
    for trial in 0..20 {
        let psi = random_state(4, &mut rng);
        let state = QuantumState::Pure(psi.clone());
        let (_counts, estimates) = bell_measurement(&state, shots, 1000 + trial).unwrap();
        for (k, label) in ["XX", "YY", "ZZ"].iter().enumerate() {
            let p: PauliString = label.parse().unwrap();
            let exact = psi.pauli_expectation(&p).re;
            let stderr = ((1.0 - exact * exact).max(1e-12) / shots as f64).sqrt();
            assert!(
                (estimates[k] - exact).abs() <= 4.0 * stderr.max(1e-3),
                "trial {trial} {label}: est {} exact {exact} stderr {stderr}",
                estimates[k]
            );
            checked += 1;
        }
    }
    println!("PASS grouping: HeH+ 4 QWC / 3 GC groups, Bell estimator within 4 sigma on {checked} checks");
}

/// Criterion 5: both mesh decompositions reconstruct Haar unitaries to
/// 1e-10 for all supported sizes, and Clements is at least as loss-robust
/// as Reck at t = 0.99.
#[test]
fn mesh_round_trip_and_loss_ordering() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst: f64 = 0.0;
    for modes in 2..=8 {
        for _ in 0..100 {
            let u = haar_unitary(modes, &mut rng);
            for decompose in [clements_decompose, reck_decompose] {
                let mesh = decompose(&u).unwrap();
                let rebuilt = mesh_reconstruct(&mesh).unwrap();
                let residual =
                    (&rebuilt - &u).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                worst = worst.max(residual);
            }
        }
    }
    assert!(worst < 1e-10, "worst reconstruction residual {worst}");

    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (mut clements_sum, mut reck_sum) = (0.0, 0.0);
    for _ in 0..50 {
        let u = haar_unitary(8, &mut rng);
        let c = clements_decompose(&u).unwrap();
        let r = reck_decompose(&u).unwrap();
        clements_sum += mesh_fidelity(&u, &mesh_with_loss(&c, 0.99).unwrap());
        reck_sum += mesh_fidelity(&u, &mesh_with_loss(&r, 0.99).unwrap());
    }
    let (clements_mean, reck_mean) = (clements_sum / 50.0, reck_sum / 50.0);
    assert!(
        clements_mean >= reck_mean,
        "Clements {clements_mean} < Reck {reck_mean}"
    );
    println!(
        "PASS mesh: worst round-trip {worst:.2e} (tol 1e-10); loss fidelity Clements {clements_mean:.6} >= Reck {reck_mean:.6}"
    );
}

/// Independent two-photon oracle for photons entering distinct modes
/// `(a, b)`: symmetrized product of single-photon matrix elements,
/// normalized by the output occupation factorial.
fn two_photon_amplitude(
    u: &Array2<Complex64>,
    input: (usize, usize),
    out: (usize, usize),
) -> Complex64 {
    let (a, b) = input;
    assert_ne!(a, b);
    let (i, j) = out;
    let raw = u[[i, a]] * u[[j, b]] + u[[j, a]] * u[[i, b]];
    if i == j {
        raw / 2.0f64.sqrt()
    } else {
        raw
    }
}

/// Criterion 6: permanent-based Fock evolution matches a brute-force
/// two-photon oracle on random 4-mode unitaries, and the 50:50 splitter
/// shows a perfect Hong-Ou-Mandel dip.
#[test]
fn two_photon_evolution_and_hom_dip() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let u = haar_unitary(4, &mut rng);
        let input = FockState::new(vec![1, 1, 0, 0]).unwrap();
        let evolved = fock_evolve(&u, &input).unwrap();
        for i in 0..4 {
            for j in i..4 {
                let mut occupations = vec![0usize; 4];
                occupations[i] += 1;
                occupations[j] += 1;
                let out = FockState::new(occupations).unwrap();
                let expected = two_photon_amplitude(&u, (0, 1), (i, j));
                let actual = evolved.amplitude(&out);
                worst = worst.max((actual - expected).norm());
            }
        }
    }
    assert!(worst < 1e-10, "worst amplitude deviation {worst}");

    // 50:50 beam splitter on two modes
    let mesh = photonvqe::linopt::BeamSplitterMesh {
        mode_count: 2,
        elements: vec![MeshElement::new(0, std::f64::consts::FRAC_PI_4, 0.0).unwrap()],
        output_phases: vec![0.0, 0.0],
    };
    let u = mesh_reconstruct(&mesh).unwrap();
    let evolved = fock_evolve(&u, &FockState::new(vec![1, 1]).unwrap()).unwrap();
    let coincidence = evolved.probability(&FockState::new(vec![1, 1]).unwrap());
    assert!(coincidence < 1e-12, "coincidence {coincidence}");
    println!("PASS two-photon: worst vs oracle {worst:.2e} (tol 1e-10), HOM coincidence {coincidence:.1e} (tol 1e-12)");
}

/// Analytic confusion matrix for independent bit flips with probability p.
fn bit_flip_confusion(qubits: usize, p: f64) -> ConfusionMatrix {
    let dim = 1usize << qubits;
    let mut entries = Array2::zeros((dim, dim));
    for ideal in 0..dim {
        for observed in 0..dim {
            let flips = (ideal ^ observed).count_ones() as f64;
            entries[[observed, ideal]] =
                p.powf(flips) * (1.0 - p).powf(qubits as f64 - flips);
        }
    }
    ConfusionMatrix::new(entries).unwrap()
}

/// Criterion 7: confusion inversion is exact, calibrated bit-flip
/// mitigation recovers Z-expectations, the ZNE estimator and variance
/// formula are exact on synthetic data, and ZNE beats raw noisy energies
/// across the Schwinger mass grid.
#[test]
fn mitigation_suite() {
    // forward-then-invert identity
    let lambda = bit_flip_confusion(2, 0.07);
    let p = [0.4, 0.3, 0.2, 0.1];
    let recovered = lambda.invert_apply(&lambda.forward(&p).unwrap()).unwrap();
    let ident_err = p
        .iter()
        .zip(&recovered)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(ident_err < 1e-12, "identity error {ident_err}");

    // calibrated bit-flip mitigation on random two-qubit states
    let p_flip = 0.1;
    let truth = bit_flip_confusion(2, p_flip);
    let mut prep = |basis: usize, shots: u64, seed: u64| {
        let column: Vec<f64> = (0..4).map(|o| truth.entries()[[o, basis]]).collect();
        sample_distribution(&column, shots, seed)
    };
    let calibrated = calibrate_confusion(&mut prep, 4, 100_000, 99).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_z: f64 = 0.0;
    for trial in 0..10 {
        let psi = random_state(4, &mut rng);
        let ideal = psi.probabilities();
        let noisy = truth.forward(&ideal).unwrap();
        let counts = sample_distribution(&noisy, 100_000, 5000 + trial);
        let quasi = calibrated.invert_apply(&counts.to_probabilities()).unwrap();
        for (label, weights) in [("ZI", [1.0, 1.0, -1.0, -1.0]), ("IZ", [1.0, -1.0, 1.0, -1.0])] {
            let p: PauliString = label.parse().unwrap();
            let exact = psi.pauli_expectation(&p).re;
            let mitigated: f64 = quasi.iter().zip(&weights).map(|(q, w)| q * w).sum();
            worst_z = worst_z.max((mitigated - exact).abs());
        }
    }
    assert!(worst_z < 0.02, "worst mitigated Z error {worst_z}");

    // ZNE exactness on linear data and the variance formula
    let intercept = zne_estimate(&[(1.0, 2.0 + 3.0), (2.0, 2.0 + 6.0), (3.0, 2.0 + 9.0)]).unwrap();
    assert!((intercept - 2.0).abs() < 1e-12, "intercept {intercept}");
    let var = zne_variance(1.0, 1.0, 2.0).unwrap();
    assert!((var - 5.0).abs() < 1e-12, "variance {var}");

    // ZNE vs raw noisy energies across the Schwinger mass grid
    let masses = [-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0];
    let mut wins = 0;
    for &m in &masses {
        let op = build_schwinger(m);
        let (exact, ground) = ground_state(&op).unwrap();
        let theta = raw_qudit_parameters(&ground);
        let energy_at = |eps: f64| -> f64 {
            let noise = vec![NoiseSpec::new(NoiseKind::White, eps, vec![]).unwrap()];
            let state = prepare_ansatz(
                &AnsatzSpec::RawQudit { dimension: 4 },
                &theta,
                &noise,
            )
            .unwrap();
            expectation_exact(&state, &op).unwrap().re
        };
        let raw = energy_at(0.1);
        let mitigated = zne_estimate(&[(0.1, energy_at(0.1)), (0.2, energy_at(0.2))]).unwrap();
        if (mitigated - exact).abs() <= (raw - exact).abs() {
            wins += 1;
        }
    }
    assert!(
        wins as f64 >= 0.9 * masses.len() as f64,
        "ZNE won on {wins}/{} grid points",
        masses.len()
    );
    println!(
        "PASS mitigation: identity {ident_err:.1e}, bit-flip Z error {worst_z:.3} (tol 0.02), ZNE exact, Var 5.0, ZNE wins {wins}/{}",
        masses.len()
    );
}

/// Criterion 8: every optimizer solves the convex quadratic; the QFIM and
/// natural-gradient relations hold on the single-qubit benchmark.
#[test]
fn optimizer_soundness() {
    let mut quadratic = |t: &[f64]| (t[0] - 1.0) * (t[0] - 1.0);
    for method in [
        Method::GradientDescent,
        Method::NelderMead,
        Method::Spsa,
        Method::Pso,
        Method::Cobyla,
    ] {
        let cfg = OptimizerConfig {
            method,
            step_size: 0.4,
            max_iterations: 2000,
            tolerance: 1e-14,
            stall_window: 200,
            spsa_a: 0.5,
            seed: 42,
            ..Default::default()
        };
        let trace = minimize(&mut quadratic, &[0.0], &cfg).unwrap();
        assert!(
            (trace.best_theta[0] - 1.0).abs() < 1e-4,
            "{method:?}: theta {:?}",
            trace.best_theta
        );
    }

    let rotation = |t: &[f64]| -> StateVector {
        StateVector::new(Array1::from(vec![
            Complex64::new((t[0] / 2.0).cos(), 0.0),
            Complex64::new((t[0] / 2.0).sin(), 0.0),
        ]))
        .unwrap()
    };
    let f = qfim(&rotation, &[0.8], 1e-4).unwrap();
    assert!((f[[0, 0]] - 1.0).abs() < 1e-6, "QFIM {}", f[[0, 0]]);

    let z: PauliString = "Z".parse().unwrap();
    let run = |alpha: f64| {
        let cfg = OptimizerConfig {
            method: Method::GradientDescent,
            step_size: 0.3,
            max_iterations: 300,
            tolerance: 1e-15,
            stall_window: 300,
            qng_alpha: alpha,
            ..Default::default()
        };
        let z = z.clone();
        let mut objective = move |t: &[f64]| rotation(t).pauli_expectation(&z).re;
        minimize_qng(&mut objective, &rotation, &[0.6], &cfg).unwrap()
    };
    let gd = run(0.0);
    let gd_cfg = OptimizerConfig {
        method: Method::GradientDescent,
        step_size: 0.3,
        max_iterations: 300,
        tolerance: 1e-15,
        stall_window: 300,
        ..Default::default()
    };
    let z2 = z.clone();
    let mut plain = move |t: &[f64]| rotation(t).pauli_expectation(&z2).re;
    let plain_trace = minimize(&mut plain, &[0.6], &gd_cfg).unwrap();
    assert_eq!(gd, plain_trace, "alpha = 0 must be trace-identical to GD");

    let qng = run(1.0);
    let iterations_to = |trace: &photonvqe::optimizers::OptTrace| {
        trace
            .records
            .iter()
            .position(|r| (r.value + 1.0).abs() < 1e-3)
            .unwrap_or(usize::MAX)
    };
    assert!(
        iterations_to(&qng) <= iterations_to(&gd),
        "QNG {} > GD {}",
        iterations_to(&qng),
        iterations_to(&gd)
    );
    println!(
        "PASS optimizers: 5 methods to 1e-4, QFIM 1 within 1e-6, alpha=0 identical, QNG {} <= GD {} iterations",
        iterations_to(&qng),
        iterations_to(&gd)
    );
}

/// Criterion 9: structural invariants — JW anticommutation, builder
/// hermiticity, the variational bound, grouping exact cover, channel trace
/// preservation, and full determinism — all inside 60 s.
#[test]
fn structural_invariants() {
    let start = Instant::now();

    // Jordan-Wigner canonical anticommutation on 3 modes
    let modes = 3;
    let majorana = |i: usize, dagger: bool| {
        let mut f = photonvqe::hamiltonians::FermionOperator::new(modes);
        f.add_term(Complex64::new(1.0, 0.0), vec![(i, dagger)]).unwrap();
        photonvqe::hamiltonians::jordan_wigner(&f).unwrap().to_matrix().unwrap()
    };
    let dim = 1 << modes;
    for i in 0..modes {
        for j in 0..modes {
            let a_i = majorana(i, false);
            let a_j_dag = majorana(j, true);
            let anti = a_i.dot(&a_j_dag) + a_j_dag.dot(&a_i);
            for r in 0..dim {
                for c in 0..dim {
                    let expected = if i == j && r == c { 1.0 } else { 0.0 };
                    assert!(
                        (anti[[r, c]] - Complex64::new(expected, 0.0)).norm() < 1e-12,
                        "anticommutator ({i},{j}) wrong at ({r},{c})"
                    );
                }
            }
        }
    }

    // builder hermiticity
    let heh = load_coefficients(data_path(Model::HeHPlus)).unwrap();
    let builders: Vec<OperatorSum> = vec![
        build_schwinger(0.7),
        photonvqe::hamiltonians::build_heisenberg(0.3, -0.4, 1.1),
        build_factoring(35, FactoringForm::Eq15).unwrap(),
        heh.hamiltonian(2).unwrap(),
    ];
    for op in &builders {
        assert!(op.is_hermitian());
        let m = op.to_matrix().unwrap();
        let residual = photonvqe::linalg::hermiticity_residual(&m);
        assert!(residual < 1e-10, "hermiticity residual {residual}");
    }

    // variational bound on an exact-backend trace
    let cfg = VQEConfig {
        hamiltonian: HamiltonianSource::Builder {
            name: "heisenberg".into(),
            params: vec![1.0, 1.0, 1.0],
        },
        ansatz: AnsatzSpec::RawQudit { dimension: 4 },
        backend: Backend::Exact,
        grouping: Grouping::Qwc,
        noise: vec![],
        mitigation: Mitigation::None,
        optimizer: OptimizerConfig {
            method: Method::NelderMead,
            max_iterations: 150,
            ..Default::default()
        },
        use_qng: false,
        seed: 42,
    };
    let trace = run_vqe(&cfg).unwrap();
    for r in &trace.opt.records {
        assert!(r.value >= trace.exact_reference - 1e-9);
    }

    // grouping exact cover: dropping a group is detected
    let op = heh.hamiltonian(0).unwrap();
    let groups = qwc_groups(&op).unwrap();
    let state = QuantumState::Pure(StateVector::basis(4, 0));
    assert!(estimate_pauli_sum(&op, &state, &groups, 100, 1, None).is_ok());
    let partial = &groups[..groups.len() - 1];
    assert!(estimate_pauli_sum(&op, &state, partial, 100, 1, None).is_err());

    // channel trace preservation
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let psi = random_state(4, &mut rng);
    let rho = DensityMatrix::from_pure(&psi);
    for kind in [NoiseKind::Dephasing, NoiseKind::Depolarizing, NoiseKind::White] {
        let spec = NoiseSpec::new(kind, 0.3, vec![]).unwrap();
        let out = apply_channel(&rho, &spec).unwrap();
        let trace_value: Complex64 = (0..4).map(|i| out.matrix()[[i, i]]).sum();
        assert!((trace_value - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }

    // full-run determinism under seed
    let mut sampled_cfg = cfg.clone();
    sampled_cfg.backend = Backend::Sampled { shots: 500 };
    sampled_cfg.optimizer.method = Method::Spsa;
    sampled_cfg.optimizer.max_iterations = 40;
    let a = run_vqe(&sampled_cfg).unwrap();
    let b = run_vqe(&sampled_cfg).unwrap();
    assert_eq!(a, b);

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "took {elapsed:.1} s");
    println!("PASS invariants: JW, hermiticity, variational bound, exact cover, trace preservation, determinism in {elapsed:.1} s (< 60 s)");
}
