//! Classical minimizers over real parameter vectors: gradient descent,
//! Nelder-Mead, SPSA, particle swarm, a linear trust-region method, and
//! quantum natural gradient via the quantum Fisher information matrix.

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::CMat;
use crate::qstate::StateVector;

#[derive(Debug, Error)]
pub enum OptError {
    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),
    #[error("state_fn returned a non-normalized state (norm² = {0})")]
    NonNormalizedState(f64),
    #[error("regularized QFIM is singular; set lambda > 0")]
    SingularQfim,
    #[error("theta has length {0}, expected {1}")]
    DimensionMismatch(usize, usize),
}

/// Which minimizer `minimize` runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    GradientDescent,
    NelderMead,
    Spsa,
    Pso,
    Cobyla,
}

impl Method {
    pub fn parse(s: &str) -> Option<Method> {
        match s.to_ascii_lowercase().as_str() {
            "gd" | "gradient_descent" => Some(Method::GradientDescent),
            "nm" | "nelder_mead" | "nelder-mead" => Some(Method::NelderMead),
            "spsa" => Some(Method::Spsa),
            "pso" => Some(Method::Pso),
            "cobyla" => Some(Method::Cobyla),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub method: Method,
    /// Step size η for gradient-based updates.
    pub step_size: f64,
    pub max_iterations: usize,
    /// Convergence tolerance on best-value improvement over the stall window.
    pub tolerance: f64,
    /// Improvement window (iterations) for the convergence test.
    pub stall_window: usize,
    /// Central-difference step for gradient estimates.
    pub fd_step: f64,
    /// SPSA gain schedule a_n = a/(n+1+A)^0.602, c_n = c/(n+1)^0.101.
    pub spsa_a: f64,
    pub spsa_c: f64,
    pub spsa_big_a: f64,
    pub pso_swarm: usize,
    pub pso_inertia: f64,
    pub pso_cognitive: f64,
    pub pso_social: f64,
    /// Half-width of the PSO search box around θ0.
    pub pso_box: f64,
    /// Trust-region radii for the Cobyla-style method.
    pub trust_initial: f64,
    pub trust_final: f64,
    /// Natural-gradient exponent α and regularizer λ.
    pub qng_alpha: f64,
    pub qng_lambda: f64,
    /// Step for QFIM statevector differencing.
    pub qfim_step: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            method: Method::NelderMead,
            step_size: 0.1,
            max_iterations: 500,
            tolerance: 1e-10,
            stall_window: 20,
            fd_step: 1e-5,
            spsa_a: 0.2,
            spsa_c: 0.1,
            spsa_big_a: 10.0,
            pso_swarm: 24,
            pso_inertia: 0.7,
            pso_cognitive: 1.5,
            pso_social: 1.5,
            pso_box: std::f64::consts::PI,
            trust_initial: 0.5,
            trust_final: 1e-7,
            qng_alpha: 1.0,
            qng_lambda: 0.0,
            qfim_step: 1e-4,
            seed: 42,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptError> {
        if self.step_size <= 0.0 {
            return Err(OptError::InvalidConfig("step size must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(OptError::InvalidConfig("need at least one iteration".into()));
        }
        if !(self.trust_initial > 0.0 && self.trust_final > 0.0 && self.trust_final < self.trust_initial) {
            return Err(OptError::InvalidConfig(
                "trust radii must be positive and decreasing".into(),
            ));
        }
        if self.qng_lambda < 0.0 {
            return Err(OptError::InvalidConfig("lambda must be non-negative".into()));
        }
        if self.fd_step <= 0.0 || self.qfim_step <= 0.0 {
            return Err(OptError::InvalidConfig("difference steps must be positive".into()));
        }
        if self.pso_swarm < 2 {
            return Err(OptError::InvalidConfig("swarm needs at least 2 particles".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptRecord {
    pub iteration: usize,
    pub theta: Vec<f64>,
    pub value: f64,
    /// Cumulative objective evaluations up to and including this record.
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptTrace {
    pub records: Vec<OptRecord>,
    pub best_theta: Vec<f64>,
    pub best_value: f64,
    /// Set when a NaN objective value aborted the run early.
    pub aborted: bool,
}

impl OptTrace {
    /// CSV serialization: `iter,value,evals,theta0,theta1,…`.
    pub fn to_csv(&self) -> String {
        let n = self.records.first().map_or(0, |r| r.theta.len());
        let mut out = String::from("iter,value,evals");
        for i in 0..n {
            out.push_str(&format!(",theta{i}"));
        }
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!("{},{:.12e},{}", r.iteration, r.value, r.evaluations));
            for t in &r.theta {
                out.push_str(&format!(",{t:.12e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Book-keeping shared by every method: evaluation counting, NaN detection,
/// best-so-far tracking and the stall-window stop rule.
struct Tracker<'a> {
    objective: &'a mut dyn FnMut(&[f64]) -> f64,
    evals: usize,
    records: Vec<OptRecord>,
    best_theta: Vec<f64>,
    best_value: f64,
    aborted: bool,
    window_anchor: f64,
    window_start: usize,
    tolerance: f64,
    stall_window: usize,
}

impl<'a> Tracker<'a> {
    fn new(objective: &'a mut dyn FnMut(&[f64]) -> f64, cfg: &OptimizerConfig) -> Self {
        Tracker {
            objective,
            evals: 0,
            records: Vec::new(),
            best_theta: Vec::new(),
            best_value: f64::INFINITY,
            aborted: false,
            window_anchor: f64::INFINITY,
            window_start: 0,
            tolerance: cfg.tolerance,
            stall_window: cfg.stall_window.max(1),
        }
    }

    /// Evaluate the objective; `None` signals a NaN abort.
    fn eval(&mut self, theta: &[f64]) -> Option<f64> {
        let v = (self.objective)(theta);
        self.evals += 1;
        if v.is_nan() {
            self.aborted = true;
            return None;
        }
        if v < self.best_value {
            self.best_value = v;
            self.best_theta = theta.to_vec();
        }
        Some(v)
    }

    fn record(&mut self, iteration: usize, theta: &[f64], value: f64) {
        self.records.push(OptRecord {
            iteration,
            theta: theta.to_vec(),
            value,
            evaluations: self.evals,
        });
    }

    /// True when the best value has improved by less than the tolerance
    /// over the last `stall_window` iterations.
    fn stalled(&mut self, iteration: usize) -> bool {
        if iteration < self.window_start + self.stall_window {
            return false;
        }
        let improved = self.window_anchor - self.best_value;
        self.window_anchor = self.best_value;
        self.window_start = iteration;
        improved.is_finite() && improved < self.tolerance
    }

    fn finish(self) -> OptTrace {
        OptTrace {
            records: self.records,
            best_theta: self.best_theta,
            best_value: self.best_value,
            aborted: self.aborted,
        }
    }
}

/// Central-difference gradient with step `h`.
pub fn central_gradient(
    objective: &mut dyn FnMut(&[f64]) -> f64,
    theta: &[f64],
    h: f64,
) -> Vec<f64> {
    let mut g = vec![0.0; theta.len()];
    let mut point = theta.to_vec();
    for i in 0..theta.len() {
        point[i] = theta[i] + h;
        let up = objective(&point);
        point[i] = theta[i] - h;
        let down = objective(&point);
        point[i] = theta[i];
        g[i] = (up - down) / (2.0 * h);
    }
    g
}

fn gradient_descent(tracker: &mut Tracker, theta0: &[f64], cfg: &OptimizerConfig) {
    let mut theta = theta0.to_vec();
    for iter in 0..cfg.max_iterations {
        let value = match tracker.eval(&theta) {
            Some(v) => v,
            None => return,
        };
        tracker.record(iter, &theta, value);
        if tracker.stalled(iter) {
            return;
        }
        let mut nan = false;
        let mut grad = vec![0.0; theta.len()];
        let mut point = theta.clone();
        for i in 0..theta.len() {
            point[i] = theta[i] + cfg.fd_step;
            let up = match tracker.eval(&point) {
                Some(v) => v,
                None => {
                    nan = true;
                    break;
                }
            };
            point[i] = theta[i] - cfg.fd_step;
            let down = match tracker.eval(&point) {
                Some(v) => v,
                None => {
                    nan = true;
                    break;
                }
            };
            point[i] = theta[i];
            grad[i] = (up - down) / (2.0 * cfg.fd_step);
        }
        if nan {
            return;
        }
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t -= cfg.step_size * g;
        }
    }
}

fn nelder_mead(tracker: &mut Tracker, theta0: &[f64], cfg: &OptimizerConfig) {
    let n = theta0.len();
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut simplex: Vec<Vec<f64>> = vec![theta0.to_vec()];
    for i in 0..n {
        let mut v = theta0.to_vec();
        v[i] += if v[i].abs() > 1e-8 { 0.05 * v[i].abs().max(0.1) } else { 0.1 };
        simplex.push(v);
    }
    let mut values = Vec::with_capacity(n + 1);
    for v in &simplex {
        match tracker.eval(v) {
            Some(f) => values.push(f),
            None => return,
        }
    }
    for iter in 0..cfg.max_iterations {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
        let simplex2: Vec<Vec<f64>> = order.iter().map(|&i| simplex[i].clone()).collect();
        let values2: Vec<f64> = order.iter().map(|&i| values[i]).collect();
        simplex = simplex2;
        values = values2;
        tracker.record(iter, &simplex[0], values[0]);
        if tracker.stalled(iter) {
            return;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|d| simplex[..n].iter().map(|v| v[d]).sum::<f64>() / n as f64)
            .collect();
        let reflect: Vec<f64> = (0..n)
            .map(|d| centroid[d] + alpha * (centroid[d] - simplex[n][d]))
            .collect();
        let f_r = match tracker.eval(&reflect) {
            Some(v) => v,
            None => return,
        };
        if f_r < values[0] {
            let expand: Vec<f64> = (0..n)
                .map(|d| centroid[d] + gamma * (reflect[d] - centroid[d]))
                .collect();
            let f_e = match tracker.eval(&expand) {
                Some(v) => v,
                None => return,
            };
            if f_e < f_r {
                simplex[n] = expand;
                values[n] = f_e;
            } else {
                simplex[n] = reflect;
                values[n] = f_r;
            }
        } else if f_r < values[n - 1] {
            simplex[n] = reflect;
            values[n] = f_r;
        } else {
            let contract: Vec<f64> = (0..n)
                .map(|d| centroid[d] + rho * (simplex[n][d] - centroid[d]))
                .collect();
            let f_c = match tracker.eval(&contract) {
                Some(v) => v,
                None => return,
            };
            if f_c < values[n] {
                simplex[n] = contract;
                values[n] = f_c;
            } else {
                // shrink toward the best vertex
                for i in 1..=n {
                    for d in 0..n {
                        simplex[i][d] = simplex[0][d] + sigma * (simplex[i][d] - simplex[0][d]);
                    }
                    match tracker.eval(&simplex[i].clone()) {
                        Some(v) => values[i] = v,
                        None => return,
                    }
                }
            }
        }
    }
}

fn spsa(tracker: &mut Tracker, theta0: &[f64], cfg: &OptimizerConfig) {
    let n = theta0.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut theta = theta0.to_vec();
    for iter in 0..cfg.max_iterations {
        let value = match tracker.eval(&theta) {
            Some(v) => v,
            None => return,
        };
        tracker.record(iter, &theta, value);
        if tracker.stalled(iter) {
            return;
        }
        let a_n = cfg.spsa_a / ((iter as f64 + 1.0 + cfg.spsa_big_a).powf(0.602));
        let c_n = cfg.spsa_c / ((iter as f64 + 1.0).powf(0.101));
        let delta: Vec<f64> = (0..n).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
        let plus: Vec<f64> = theta.iter().zip(&delta).map(|(t, d)| t + c_n * d).collect();
        let minus: Vec<f64> = theta.iter().zip(&delta).map(|(t, d)| t - c_n * d).collect();
        let f_p = match tracker.eval(&plus) {
            Some(v) => v,
            None => return,
        };
        let f_m = match tracker.eval(&minus) {
            Some(v) => v,
            None => return,
        };
        let scale = (f_p - f_m) / (2.0 * c_n);
        for (t, d) in theta.iter_mut().zip(&delta) {
            *t -= a_n * scale / d;
        }
    }
}

fn pso(tracker: &mut Tracker, theta0: &[f64], cfg: &OptimizerConfig) {
    let n = theta0.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let half = cfg.pso_box;
    let v_max = 2.0 * half;
    let swarm = cfg.pso_swarm;
    let mut pos: Vec<Vec<f64>> = Vec::with_capacity(swarm);
    let mut vel: Vec<Vec<f64>> = Vec::with_capacity(swarm);
    pos.push(theta0.to_vec());
    vel.push(vec![0.0; n]);
    for _ in 1..swarm {
        pos.push((0..n).map(|d| theta0[d] + rng.gen_range(-half..half)).collect());
        vel.push((0..n).map(|_| rng.gen_range(-half..half) * 0.2).collect());
    }
    let mut personal_best = pos.clone();
    let mut personal_value = Vec::with_capacity(swarm);
    for p in &pos {
        match tracker.eval(p) {
            Some(v) => personal_value.push(v),
            None => return,
        }
    }
    let mut global = 0usize;
    for i in 1..swarm {
        if personal_value[i] < personal_value[global] {
            global = i;
        }
    }
    let mut global_best = personal_best[global].clone();
    let mut global_value = personal_value[global];
    for iter in 0..cfg.max_iterations {
        tracker.record(iter, &global_best, global_value);
        if tracker.stalled(iter) {
            return;
        }
        for i in 0..swarm {
            for d in 0..n {
                let r1: f64 = rng.gen_range(0.0..1.0);
                let r2: f64 = rng.gen_range(0.0..1.0);
                vel[i][d] = cfg.pso_inertia * vel[i][d]
                    + cfg.pso_cognitive * r1 * (personal_best[i][d] - pos[i][d])
                    + cfg.pso_social * r2 * (global_best[d] - pos[i][d]);
                vel[i][d] = vel[i][d].clamp(-v_max, v_max);
                pos[i][d] += vel[i][d];
            }
            let v = match tracker.eval(&pos[i].clone()) {
                Some(v) => v,
                None => return,
            };
            if v < personal_value[i] {
                personal_value[i] = v;
                personal_best[i] = pos[i].clone();
                if v < global_value {
                    global_value = v;
                    global_best = pos[i].clone();
                }
            }
        }
    }
}

/// Solve the square system `a x = b` by Gaussian elimination with partial
/// pivoting; `None` when the matrix is numerically singular.
fn solve_real(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        // scale-relative threshold: a collapsed simplex must be rebuilt,
        // not solved into a garbage gradient
        if a[pivot][col].abs() < 1e-8 * scale {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in (col + 1)..n {
            s -= a[col][k] * x[k];
        }
        x[col] = s / a[col][col];
    }
    Some(x)
}

/// Linear trust-region method: maintain n+1 interpolation points, step the
/// best vertex against the interpolated gradient, replace the worst vertex,
/// and shrink/expand the radius on the actual-vs-predicted reduction.
fn cobyla_style(tracker: &mut Tracker, theta0: &[f64], cfg: &OptimizerConfig) {
    let n = theta0.len();
    let mut rho = cfg.trust_initial;
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut vals: Vec<f64> = Vec::with_capacity(n + 1);
    let rebuild = |tracker: &mut Tracker,
                   center: &[f64],
                   radius: f64,
                   pts: &mut Vec<Vec<f64>>,
                   vals: &mut Vec<f64>|
     -> bool {
        pts.clear();
        vals.clear();
        pts.push(center.to_vec());
        match tracker.eval(center) {
            Some(v) => vals.push(v),
            None => return false,
        }
        for i in 0..center.len() {
            let mut p = center.to_vec();
            p[i] += radius;
            match tracker.eval(&p) {
                Some(v) => {
                    pts.push(p);
                    vals.push(v);
                }
                None => return false,
            }
        }
        true
    };
    if !rebuild(tracker, theta0, rho, &mut pts, &mut vals) {
        return;
    }
    for iter in 0..cfg.max_iterations {
        let best = (0..=n)
            .min_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap())
            .unwrap();
        let worst = (0..=n)
            .max_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap())
            .unwrap();
        tracker.record(iter, &pts[best], vals[best]);
        if tracker.stalled(iter) {
            return;
        }
        // gradient of the linear interpolant through the n+1 points
        let mut rows = Vec::with_capacity(n);
        let mut rhs = Vec::with_capacity(n);
        for i in 0..=n {
            if i == best {
                continue;
            }
            rows.push((0..n).map(|d| pts[i][d] - pts[best][d]).collect::<Vec<f64>>());
            rhs.push(vals[i] - vals[best]);
        }
        let grad = match solve_real(rows, rhs) {
            Some(g) => g,
            None => {
                // degenerate geometry: rebuild around the best vertex
                let center = pts[best].clone();
                if !rebuild(tracker, &center, rho, &mut pts, &mut vals) {
                    return;
                }
                continue;
            }
        };
        let g_norm: f64 = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if g_norm < 1e-15 {
            rho = (rho * 0.5).max(cfg.trust_final);
            let center = pts[best].clone();
            if !rebuild(tracker, &center, rho, &mut pts, &mut vals) {
                return;
            }
            continue;
        }
        let direction: Vec<f64> = grad.iter().map(|g| -g / g_norm).collect();
        let mut step = rho;
        let mut trial: Vec<f64> = pts[best]
            .iter()
            .zip(&direction)
            .map(|(x, d)| x + step * d)
            .collect();
        let mut f_trial = match tracker.eval(&trial) {
            Some(v) => v,
            None => return,
        };
        // extend the accepted step while it keeps improving
        if f_trial < vals[best] {
            for _ in 0..60 {
                let longer: Vec<f64> = pts[best]
                    .iter()
                    .zip(&direction)
                    .map(|(x, d)| x + 2.0 * step * d)
                    .collect();
                let f_longer = match tracker.eval(&longer) {
                    Some(v) => v,
                    None => return,
                };
                if f_longer < f_trial {
                    step *= 2.0;
                    trial = longer;
                    f_trial = f_longer;
                } else {
                    break;
                }
            }
        }
        let ratio = (vals[best] - f_trial) / (step * g_norm);
        if f_trial < vals[worst] {
            pts[worst] = trial;
            vals[worst] = f_trial;
        }
        if ratio >= 0.5 {
            rho = (rho * 2.0).min(4.0 * cfg.trust_initial);
        } else if ratio <= 0.1 {
            rho = (rho * 0.5).max(cfg.trust_final);
            // keep the simplex diameter commensurate with the radius
            let diameter = pts
                .iter()
                .map(|p| {
                    p.iter()
                        .zip(&pts[best])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(0.0, f64::max);
            if diameter > 8.0 * rho {
                let center = pts[best].clone();
                if !rebuild(tracker, &center, rho, &mut pts, &mut vals) {
                    return;
                }
            }
        }
    }
}

/// Minimize a scalar objective. Stochastic methods are deterministic under
/// `cfg.seed`; a NaN objective value aborts with the trace collected so far.
pub fn minimize(
    objective: &mut dyn FnMut(&[f64]) -> f64,
    theta0: &[f64],
    cfg: &OptimizerConfig,
) -> Result<OptTrace, OptError> {
    cfg.validate()?;
    let mut tracker = Tracker::new(objective, cfg);
    match cfg.method {
        Method::GradientDescent => gradient_descent(&mut tracker, theta0, cfg),
        Method::NelderMead => nelder_mead(&mut tracker, theta0, cfg),
        Method::Spsa => spsa(&mut tracker, theta0, cfg),
        Method::Pso => pso(&mut tracker, theta0, cfg),
        Method::Cobyla => cobyla_style(&mut tracker, theta0, cfg),
    }
    Ok(tracker.finish())
}

/// Align the global phase of `state` so that its overlap with `reference`
/// is real and non-negative.
fn phase_align(state: &StateVector, reference: &StateVector) -> Vec<Complex64> {
    let overlap = reference.inner(state);
    let phase = if overlap.norm() > 1e-14 {
        overlap.conj() / overlap.norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    state.amplitudes().iter().map(|a| a * phase).collect()
}

/// Quantum Fisher information matrix
/// `F_jk = 4 Re{ <∂_j ψ|∂_k ψ> - <∂_j ψ|ψ><ψ|∂_k ψ> }`
/// via central differences of the statevector with global-phase alignment.
pub fn qfim(
    state_fn: &dyn Fn(&[f64]) -> StateVector,
    theta: &[f64],
    h: f64,
) -> Result<Array2<f64>, OptError> {
    let n = theta.len();
    let psi = state_fn(theta);
    let norm: f64 = psi.amplitudes().iter().map(|a| a.norm_sqr()).sum();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(OptError::NonNormalizedState(norm));
    }
    let dim = psi.dim();
    let mut derivs: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    let mut point = theta.to_vec();
    for j in 0..n {
        point[j] = theta[j] + h;
        let plus = state_fn(&point);
        point[j] = theta[j] - h;
        let minus = state_fn(&point);
        point[j] = theta[j];
        for s in [&plus, &minus] {
            let nrm: f64 = s.amplitudes().iter().map(|a| a.norm_sqr()).sum();
            if (nrm - 1.0).abs() > 1e-8 {
                return Err(OptError::NonNormalizedState(nrm));
            }
        }
        let p = phase_align(&plus, &psi);
        let m = phase_align(&minus, &psi);
        derivs.push((0..dim).map(|i| (p[i] - m[i]) / (2.0 * h)).collect());
    }
    let mut f = Array2::zeros((n, n));
    for j in 0..n {
        for k in 0..n {
            let mut dd = Complex64::new(0.0, 0.0);
            let mut dpsi = Complex64::new(0.0, 0.0);
            let mut psid = Complex64::new(0.0, 0.0);
            for i in 0..dim {
                dd += derivs[j][i].conj() * derivs[k][i];
                dpsi += derivs[j][i].conj() * psi.amplitudes()[i];
                psid += psi.amplitudes()[i].conj() * derivs[k][i];
            }
            f[[j, k]] = 4.0 * (dd - dpsi * psid).re;
        }
    }
    // symmetrize away difference noise
    for j in 0..n {
        for k in (j + 1)..n {
            let avg = 0.5 * (f[[j, k]] + f[[k, j]]);
            f[[j, k]] = avg;
            f[[k, j]] = avg;
        }
    }
    Ok(f)
}

/// `(F + λI)^{-α} v` through an eigendecomposition of the symmetric matrix.
fn preconditioned_step(
    f: &Array2<f64>,
    lambda: f64,
    alpha: f64,
    grad: &[f64],
) -> Result<Vec<f64>, OptError> {
    let n = grad.len();
    let mut herm = CMat::zeros((n, n));
    for j in 0..n {
        for k in 0..n {
            herm[[j, k]] = Complex64::new(f[[j, k]] + if j == k { lambda } else { 0.0 }, 0.0);
        }
    }
    let (vals, vecs) = crate::linalg::eigh(&herm);
    if vals.iter().any(|&v| v < 1e-12) {
        return Err(OptError::SingularQfim);
    }
    let mut out = vec![0.0; n];
    for m in 0..n {
        let mut proj = 0.0;
        for i in 0..n {
            proj += vecs[[i, m]].re * grad[i];
        }
        let scale = vals[m].powf(-alpha) * proj;
        for i in 0..n {
            out[i] += scale * vecs[[i, m]].re;
        }
    }
    Ok(out)
}

/// Natural-gradient descent `θ_n = θ_{n-1} - η (F + λI)^{-α} ∇E(θ_{n-1})`.
/// With α = 0 this is exactly gradient descent (the QFIM is never computed,
/// so the trace is identical to `minimize` with the GD method).
pub fn minimize_qng(
    objective: &mut dyn FnMut(&[f64]) -> f64,
    state_fn: &dyn Fn(&[f64]) -> StateVector,
    theta0: &[f64],
    cfg: &OptimizerConfig,
) -> Result<OptTrace, OptError> {
    cfg.validate()?;
    if cfg.qng_alpha == 0.0 {
        let mut gd_cfg = cfg.clone();
        gd_cfg.method = Method::GradientDescent;
        return minimize(objective, theta0, &gd_cfg);
    }
    let mut tracker = Tracker::new(objective, cfg);
    let mut theta = theta0.to_vec();
    let mut failure: Option<OptError> = None;
    for iter in 0..cfg.max_iterations {
        let value = match tracker.eval(&theta) {
            Some(v) => v,
            None => break,
        };
        tracker.record(iter, &theta, value);
        if tracker.stalled(iter) {
            break;
        }
        let mut grad = vec![0.0; theta.len()];
        let mut point = theta.clone();
        let mut nan = false;
        for i in 0..theta.len() {
            point[i] = theta[i] + cfg.fd_step;
            let up = match tracker.eval(&point) {
                Some(v) => v,
                None => {
                    nan = true;
                    break;
                }
            };
            point[i] = theta[i] - cfg.fd_step;
            let down = match tracker.eval(&point) {
                Some(v) => v,
                None => {
                    nan = true;
                    break;
                }
            };
            point[i] = theta[i];
            grad[i] = (up - down) / (2.0 * cfg.fd_step);
        }
        if nan {
            break;
        }
        let f = qfim(state_fn, &theta, cfg.qfim_step)?;
        let step = match preconditioned_step(&f, cfg.qng_lambda, cfg.qng_alpha, &grad) {
            Ok(s) => s,
            Err(e) => {
                failure = Some(e);
                break;
            }
        };
        for (t, s) in theta.iter_mut().zip(&step) {
            *t -= cfg.step_size * s;
        }
    }
    match failure {
        Some(e) => Err(e),
        None => Ok(tracker.finish()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn quadratic(theta: &[f64]) -> f64 {
        (theta[0] - 1.0) * (theta[0] - 1.0)
    }

    fn rosenbrock(theta: &[f64]) -> f64 {
        let (x, y) = (theta[0], theta[1]);
        (1.0 - x) * (1.0 - x) + 100.0 * (y - x * x) * (y - x * x)
    }

    fn rotation_state(theta: &[f64]) -> StateVector {
        let t = theta.iter().sum::<f64>();
        StateVector::new(array![
            Complex64::new((t / 2.0).cos(), 0.0),
            Complex64::new((t / 2.0).sin(), 0.0)
        ])
        .unwrap()
    }

    #[test]
    fn gd_on_quadratic() {
        let cfg = OptimizerConfig {
            method: Method::GradientDescent,
            step_size: 0.4,
            max_iterations: 200,
            ..Default::default()
        };
        let trace = minimize(&mut quadratic, &[0.0], &cfg).unwrap();
        assert!((trace.best_theta[0] - 1.0).abs() < 1e-4, "{:?}", trace.best_theta);
        assert!(!trace.aborted);
    }

    #[test]
    fn nelder_mead_on_quadratic() {
        let cfg = OptimizerConfig {
            method: Method::NelderMead,
            max_iterations: 300,
            ..Default::default()
        };
        let trace = minimize(&mut quadratic, &[0.0], &cfg).unwrap();
        assert!(trace.best_value <= 1e-8, "best {}", trace.best_value);
    }

    #[test]
    fn all_methods_solve_the_quadratic() {
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
                spsa_a: 0.5,
                tolerance: 1e-14,
                stall_window: 200,
                ..Default::default()
            };
            let trace = minimize(&mut quadratic, &[0.0], &cfg).unwrap();
            assert!(
                trace.best_value.sqrt() < 1e-4 || (trace.best_theta[0] - 1.0).abs() < 1e-4,
                "{method:?}: best_value {}, theta {:?}",
                trace.best_value,
                trace.best_theta
            );
        }
    }

    #[test]
    fn cobyla_style_on_rosenbrock() {
        let cfg = OptimizerConfig {
            method: Method::Cobyla,
            max_iterations: 500,
            tolerance: 1e-14,
            stall_window: 500,
            ..Default::default()
        };
        let trace = minimize(&mut rosenbrock, &[-1.2, 1.0], &cfg).unwrap();
        assert!(trace.best_value <= 1e-3, "best {}", trace.best_value);
    }

    #[test]
    fn stochastic_methods_are_seed_deterministic() {
        for method in [Method::Spsa, Method::Pso] {
            let cfg = OptimizerConfig { method, max_iterations: 60, ..Default::default() };
            let a = minimize(&mut rosenbrock, &[0.0, 0.0], &cfg).unwrap();
            let b = minimize(&mut rosenbrock, &[0.0, 0.0], &cfg).unwrap();
            assert_eq!(a, b, "{method:?} not deterministic");
        }
    }

    #[test]
    fn best_so_far_is_monotone() {
        for method in [
            Method::GradientDescent,
            Method::NelderMead,
            Method::Spsa,
            Method::Pso,
            Method::Cobyla,
        ] {
            let cfg = OptimizerConfig { method, max_iterations: 100, ..Default::default() };
            let trace = minimize(&mut rosenbrock, &[-0.5, 0.5], &cfg).unwrap();
            let mut best = f64::INFINITY;
            for r in &trace.records {
                best = best.min(r.value);
            }
            assert!((best - trace.best_value).abs() <= 1e-12 || trace.best_value <= best);
            let evals: Vec<usize> = trace.records.iter().map(|r| r.evaluations).collect();
            assert!(evals.windows(2).all(|w| w[0] <= w[1]), "{method:?} evals not monotone");
        }
    }

    #[test]
    fn nan_objective_aborts_with_partial_trace() {
        let mut calls = 0usize;
        let mut objective = |theta: &[f64]| {
            calls += 1;
            if calls > 10 {
                f64::NAN
            } else {
                theta[0] * theta[0]
            }
        };
        let cfg = OptimizerConfig {
            method: Method::GradientDescent,
            max_iterations: 100,
            ..Default::default()
        };
        let trace = minimize(&mut objective, &[2.0], &cfg).unwrap();
        assert!(trace.aborted);
        assert!(!trace.records.is_empty());
        assert!(trace.best_value.is_finite());
    }

    #[test]
    fn central_gradient_is_second_order() {
        let mut poly = |t: &[f64]| t[0].powi(3) - 2.0 * t[0];
        let exact = 3.0 * 0.7f64 * 0.7 - 2.0;
        let e1 = (central_gradient(&mut poly, &[0.7], 1e-2)[0] - exact).abs();
        let e2 = (central_gradient(&mut poly, &[0.7], 5e-3)[0] - exact).abs();
        assert!(e2 < e1 / 3.0, "halving h: {e1} -> {e2}");
    }

    #[test]
    fn qfim_of_single_rotation_is_one() {
        let f = qfim(&|t| rotation_state(t), &[0.9], 1e-4).unwrap();
        assert!((f[[0, 0]] - 1.0).abs() < 1e-6, "F = {}", f[[0, 0]]);
    }

    #[test]
    fn qfim_of_constant_state_is_zero() {
        let f = qfim(&|_| StateVector::basis(4, 1), &[0.3, 0.4], 1e-4).unwrap();
        for v in f.iter() {
            assert!(v.abs() < 1e-8);
        }
    }

    #[test]
    fn qfim_duplicated_parameter_is_rank_one() {
        let f = qfim(&|t| rotation_state(t), &[0.3, 0.3], 1e-4).unwrap();
        let det = f[[0, 0]] * f[[1, 1]] - f[[0, 1]] * f[[1, 0]];
        assert!(det.abs() < 1e-6, "det {det}");
        assert!(f[[0, 0]] > 0.5);
    }

    #[test]
    fn qfim_is_global_phase_invariant() {
        let base = qfim(&|t| rotation_state(t), &[1.1], 1e-4).unwrap();
        let phased = |t: &[f64]| {
            let s = rotation_state(t);
            let phase = Complex64::from_polar(1.0, 0.8 + 3.0 * t[0]);
            StateVector::new(s.amplitudes().mapv(|a| a * phase)).unwrap()
        };
        let f = qfim(&phased, &[1.1], 1e-4).unwrap();
        assert!((f[[0, 0]] - base[[0, 0]]).abs() < 1e-8);
    }

    #[test]
    fn qng_alpha_zero_matches_gradient_descent() {
        let cfg = OptimizerConfig {
            method: Method::GradientDescent,
            step_size: 0.2,
            max_iterations: 50,
            qng_alpha: 0.0,
            ..Default::default()
        };
        let mut obj1 = |t: &[f64]| rotation_state(t).pauli_expectation(
            &"Z".parse::<crate::qstate::PauliString>().unwrap(),
        ).re;
        let mut obj2 = |t: &[f64]| rotation_state(t).pauli_expectation(
            &"Z".parse::<crate::qstate::PauliString>().unwrap(),
        ).re;
        let gd = minimize(&mut obj1, &[0.7], &cfg).unwrap();
        let qng = minimize_qng(&mut obj2, &|t| rotation_state(t), &[0.7], &cfg).unwrap();
        assert_eq!(gd, qng);
    }

    #[test]
    fn qng_converges_and_is_no_slower_than_gd() {
        let z = "Z".parse::<crate::qstate::PauliString>().unwrap();
        let target = 1e-3;
        let run = |alpha: f64| {
            let cfg = OptimizerConfig {
                method: Method::GradientDescent,
                step_size: 0.3,
                max_iterations: 400,
                tolerance: 1e-15,
                stall_window: 400,
                qng_alpha: alpha,
                ..Default::default()
            };
            let z = z.clone();
            let mut obj = move |t: &[f64]| rotation_state(t).pauli_expectation(&z).re;
            minimize_qng(&mut obj, &|t| rotation_state(t), &[0.5], &cfg).unwrap()
        };
        let qng = run(1.0);
        // ground value of <Z> is -1 at theta = pi
        let last = qng.best_theta[0];
        assert!((last - std::f64::consts::PI).abs() < 1e-3, "theta {last}");

        let to_tol = |trace: &OptTrace| {
            trace
                .records
                .iter()
                .position(|r| (r.value + 1.0).abs() < target)
                .unwrap_or(usize::MAX)
        };
        let gd = run(0.0);
        assert!(to_tol(&qng) <= to_tol(&gd), "qng {} gd {}", to_tol(&qng), to_tol(&gd));
    }

    #[test]
    fn qng_singular_without_lambda() {
        let cfg = OptimizerConfig {
            method: Method::GradientDescent,
            qng_alpha: 1.0,
            qng_lambda: 0.0,
            max_iterations: 5,
            ..Default::default()
        };
        // constant state: F = 0, not invertible
        let mut obj = |t: &[f64]| t[0] * t[0];
        let err = minimize_qng(&mut obj, &|_| StateVector::basis(2, 0), &[0.4], &cfg);
        assert!(matches!(err, Err(OptError::SingularQfim)));

        let cfg = OptimizerConfig { qng_lambda: 0.5, ..cfg };
        let ok = minimize_qng(&mut obj, &|_| StateVector::basis(2, 0), &[0.4], &cfg);
        assert!(ok.is_ok());
    }

    #[test]
    fn trace_csv_shape() {
        let cfg = OptimizerConfig {
            method: Method::GradientDescent,
            max_iterations: 3,
            ..Default::default()
        };
        let trace = minimize(&mut rosenbrock, &[0.1, 0.2], &cfg).unwrap();
        let csv = trace.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "iter,value,evals,theta0,theta1");
        assert_eq!(csv.lines().count(), trace.records.len() + 1);
    }

    #[test]
    fn config_validation() {
        let mut cfg = OptimizerConfig::default();
        cfg.step_size = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = OptimizerConfig::default();
        cfg.trust_final = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = OptimizerConfig::default();
        cfg.qng_lambda = -0.1;
        assert!(cfg.validate().is_err());
    }
}
