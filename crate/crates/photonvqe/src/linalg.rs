//! Small dense complex linear algebra helpers shared across the crate.
//!
//! Everything here targets matrices of dimension at most 256, so simple
//! cubic algorithms (cyclic Jacobi, explicit Kronecker products) are used
//! throughout.

use ndarray::{Array1, Array2};
use num_complex::Complex64;

pub type CMat = Array2<Complex64>;
pub type CVec = Array1<Complex64>;

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    let mut out = CMat::zeros((ra * rb, ca * cb));
    for i in 0..ra {
        for j in 0..ca {
            let aij = a[[i, j]];
            for k in 0..rb {
                for l in 0..cb {
                    out[[i * rb + k, j * cb + l]] = aij * b[[k, l]];
                }
            }
        }
    }
    out
}

/// Conjugate transpose.
pub fn dagger(a: &CMat) -> CMat {
    let (r, c) = a.dim();
    let mut out = CMat::zeros((c, r));
    for i in 0..r {
        for j in 0..c {
            out[[j, i]] = a[[i, j]].conj();
        }
    }
    out
}

pub fn identity(n: usize) -> CMat {
    CMat::eye(n)
}

/// Max-norm of `a† a - I`; zero for a unitary matrix.
pub fn unitarity_residual(a: &CMat) -> f64 {
    let prod = dagger(a).dot(a);
    let n = prod.nrows();
    let mut res = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let expect = if i == j { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
            res = res.max((prod[[i, j]] - expect).norm());
        }
    }
    res
}

/// Max-norm of `a - a†`.
pub fn hermiticity_residual(a: &CMat) -> f64 {
    let n = a.nrows();
    let mut res = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            res = res.max((a[[i, j]] - a[[j, i]].conj()).norm());
        }
    }
    res
}

pub fn trace(a: &CMat) -> Complex64 {
    (0..a.nrows()).map(|i| a[[i, i]]).sum()
}

/// Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order together with the matrix whose
/// columns are the corresponding orthonormal eigenvectors.
pub fn eigh(a: &CMat) -> (Vec<f64>, CMat) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "eigh requires a square matrix");
    let mut m = a.clone();
    // Symmetrize to wash out representation noise in nominally Hermitian input.
    for i in 0..n {
        for j in 0..n {
            let avg = (m[[i, j]] + a[[j, i]].conj()) * 0.5;
            m[[i, j]] = avg;
        }
    }
    let mut v = identity(n);

    let off = |m: &CMat| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[[i, j]].norm_sqr();
                }
            }
        }
        s
    };

    let scale: f64 = (0..n).map(|i| m[[i, i]].norm()).fold(1.0, f64::max);
    let tol = (scale * 1e-15).powi(2) * (n * n) as f64 + f64::MIN_POSITIVE;
    let mut sweeps = 0;
    while off(&m) > tol && sweeps < 100 {
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.norm() < scale * 1e-300 {
                    continue;
                }
                // 2x2 Hermitian block [[app, apq], [apq*, aqq]] with real diagonal.
                let app = m[[p, p]].re;
                let aqq = m[[q, q]].re;
                let phase = apq / apq.norm(); // e^{i arg(apq)}
                let tau = (aqq - app) / (2.0 * apq.norm());
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Unitary rotation J: columns p,q mix with complex phase.
                // J_pp = c, J_pq = s*phase, J_qp = -s*conj(phase)... applied as m <- J† m J.
                let (cc, ss) = (Complex64::new(c, 0.0), Complex64::new(s, 0.0) * phase);
                // Update columns p and q of m: m <- m J
                for i in 0..n {
                    let mip = m[[i, p]];
                    let miq = m[[i, q]];
                    m[[i, p]] = mip * cc - miq * ss.conj();
                    m[[i, q]] = mip * ss + miq * cc;
                }
                // Update rows p and q: m <- J† m
                for j in 0..n {
                    let mpj = m[[p, j]];
                    let mqj = m[[q, j]];
                    m[[p, j]] = mpj * cc.conj() - mqj * ss;
                    m[[q, j]] = mpj * ss.conj() + mqj * cc;
                }
                // Accumulate eigenvectors: v <- v J
                for i in 0..n {
                    let vip = v[[i, p]];
                    let viq = v[[i, q]];
                    v[[i, p]] = vip * cc - viq * ss.conj();
                    v[[i, q]] = vip * ss + viq * cc;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| m[[i, i]].re).collect();
    order.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let mut vecs = CMat::zeros((n, n));
    for (newcol, &oldcol) in order.iter().enumerate() {
        for i in 0..n {
            vecs[[i, newcol]] = v[[i, oldcol]];
        }
    }
    (vals, vecs)
}

/// `f` applied to a Hermitian matrix through its eigendecomposition.
pub fn hermitian_matrix_function(a: &CMat, f: impl Fn(f64) -> Complex64) -> CMat {
    let n = a.nrows();
    let (vals, vecs) = eigh(a);
    let mut out = CMat::zeros((n, n));
    for k in 0..n {
        let fk = f(vals[k]);
        for i in 0..n {
            for j in 0..n {
                out[[i, j]] += fk * vecs[[i, k]] * vecs[[j, k]].conj();
            }
        }
    }
    out
}

/// Exact exponential `exp(g)` of an anti-Hermitian matrix `g = iH`.
pub fn expm_antihermitian(g: &CMat) -> CMat {
    // g = i h with h Hermitian; exp(g) = V diag(e^{i λ}) V†.
    let h = g.mapv(|z| z * Complex64::new(0.0, -1.0));
    hermitian_matrix_function(&h, |lam| (Complex64::new(0.0, 1.0) * lam).exp())
}
