//! Shared numerical kernels: restarted GMRES, randomized SVD for
//! matrix-free operators, Kronecker-structured applications and small
//! fitting utilities.
//!
//! These are intentionally plain implementations at "desk scale": dense
//! factorizations where a few thousand unknowns make them cheap, iterative
//! solvers where the operator is only available as an action.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, TsrError};

/// Apply `(D (x) I_n)` to a stacked vector whose block `j` (length `n`) holds
/// the sample at collocation point `j`. Realized as a reshape + right
/// multiplication, which is much cheaper than forming the Kronecker product.
pub fn apply_kron_diff(diff: &DMatrix<Complex64>, x: &DVector<Complex64>, n: usize) -> DVector<Complex64> {
    let n_ts = diff.nrows();
    debug_assert_eq!(x.len(), n * n_ts);
    // Column j of `mat` is block j, so (D (x) I) x == mat * D^T stacked back.
    let mat = DMatrix::from_column_slice(n, n_ts, x.as_slice());
    let out = mat * diff.transpose();
    DVector::from_column_slice(out.as_slice())
}

pub fn to_complex_matrix(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|v| Complex64::new(v, 0.0))
}

pub fn to_complex_vector(v: &DVector<f64>) -> DVector<Complex64> {
    v.map(|x| Complex64::new(x, 0.0))
}

/// Least-squares straight line through `(x_i, y_i)`; returns `(slope, intercept)`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let denom = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / denom;
    (slope, (sy - slope * sx) / n)
}

/// Best rational approximation `p/q` of `x` with `q <= max_den` via continued
/// fractions. Returns `None` if the approximation error exceeds `tol`.
pub fn rational_approx(x: f64, max_den: u64, tol: f64) -> Option<(i64, u64)> {
    if !x.is_finite() {
        return None;
    }
    let (mut p0, mut q0, mut p1, mut q1): (i64, i64, i64, i64) = (1, 0, x.floor() as i64, 1);
    let mut frac = x - x.floor();
    while frac.abs() > 1e-15 && (q1 as u64) <= max_den {
        let r = 1.0 / frac;
        let a = r.floor();
        frac = r - a;
        let p2 = a as i64 * p1 + p0;
        let q2 = a as i64 * q1 + q0;
        if q2 as u64 > max_den {
            break;
        }
        p0 = p1;
        q0 = q1;
        p1 = p2;
        q1 = q2;
    }
    ((x - p1 as f64 / q1 as f64).abs() <= tol).then_some((p1, q1 as u64))
}

pub struct GmresResult {
    pub x: DVector<Complex64>,
    pub iterations: usize,
    pub rel_residual: f64,
    pub history: Vec<f64>,
}

/// Restarted GMRES for a matrix-free complex operator, with optional right
/// preconditioning: solves `A M^-1 u = b`, `x = M^-1 u`, so the reported
/// residual is the true residual of `A x = b`.
///
/// `residual_filter` restricts the final acceptance test to a subspace: the
/// true residual is passed through it before the tolerance comparison. Near a
/// numerically singular operator the full residual can floor above `rtol` on
/// null-direction roundoff that a caller's output projection removes anyway;
/// the filtered test accepts exactly when the solve converged on the subspace
/// the caller keeps.
pub fn gmres<A, M, S>(
    apply_a: A,
    precond: Option<M>,
    residual_filter: Option<S>,
    b: &DVector<Complex64>,
    restart: usize,
    max_iters: usize,
    rtol: f64,
    context: &str,
) -> Result<GmresResult>
where
    A: Fn(&DVector<Complex64>) -> DVector<Complex64>,
    M: Fn(&DVector<Complex64>) -> DVector<Complex64>,
    S: Fn(&DVector<Complex64>) -> DVector<Complex64>,
{
    let n = b.len();
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return Ok(GmresResult { x: DVector::zeros(n), iterations: 0, rel_residual: 0.0, history: vec![] });
    }
    let prec = |v: &DVector<Complex64>| match &precond {
        Some(m) => m(v),
        None => v.clone(),
    };

    let mut x = DVector::<Complex64>::zeros(n);
    let mut total_iters = 0usize;
    let mut history = Vec::new();
    let mut rel = 1.0;
    let mut rel_prev_cycle = f64::INFINITY;

    'outer: while total_iters < max_iters {
        let r = b - apply_a(&x);
        let beta = r.norm();
        rel = beta / b_norm;
        if rel <= rtol {
            break;
        }
        // No meaningful progress over a whole restart cycle: the Krylov space
        // has gone invariant (typical at a numerically singular operator) and
        // further cycles only repeat it. Leave the verdict to the final test.
        if rel > 0.95 * rel_prev_cycle {
            break;
        }
        rel_prev_cycle = rel;
        let m = restart.min(max_iters - total_iters);
        let mut basis: Vec<DVector<Complex64>> = Vec::with_capacity(m + 1);
        basis.push(r / Complex64::new(beta, 0.0));
        // Hessenberg kept column-wise; Givens rotations applied on the fly.
        let mut h = vec![vec![Complex64::ZERO; 0]; 0];
        let mut cs: Vec<Complex64> = Vec::with_capacity(m);
        let mut sn: Vec<Complex64> = Vec::with_capacity(m);
        let mut g = vec![Complex64::ZERO; m + 1];
        g[0] = Complex64::new(beta, 0.0);
        let mut k_done = 0;

        for k in 0..m {
            let mut w = apply_a(&prec(&basis[k]));
            // Modified Gram-Schmidt.
            let mut col = vec![Complex64::ZERO; k + 2];
            for (i, v) in basis.iter().enumerate() {
                let hik = v.dotc(&w);
                w.axpy(-hik, v, Complex64::new(1.0, 0.0));
                col[i] = hik;
            }
            let h_next = w.norm();
            col[k + 1] = Complex64::new(h_next, 0.0);
            // Apply accumulated rotations to the new column.
            for i in 0..k {
                let t = cs[i].conj() * col[i] + sn[i].conj() * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = t;
            }
            // New rotation to zero the subdiagonal entry.
            let (c, s) = givens(col[k], col[k + 1]);
            let t = c.conj() * col[k] + s.conj() * col[k + 1];
            col[k] = t;
            col[k + 1] = Complex64::ZERO;
            cs.push(c);
            sn.push(s);
            let gk = g[k];
            g[k] = c.conj() * gk;
            g[k + 1] = -s * gk;
            h.push(col);

            total_iters += 1;
            k_done = k + 1;
            rel = g[k + 1].norm() / b_norm;
            history.push(rel);
            if rel <= rtol || h_next < 1e-300 {
                break;
            }
            basis.push(w / Complex64::new(h_next, 0.0));
            if total_iters >= max_iters {
                break;
            }
        }

        // Back substitution for the small triangular system.
        let mut y = vec![Complex64::ZERO; k_done];
        for i in (0..k_done).rev() {
            let mut acc = g[i];
            for j in i + 1..k_done {
                acc -= h[j][i] * y[j];
            }
            y[i] = acc / h[i][i];
        }
        let mut update = DVector::<Complex64>::zeros(n);
        for (i, yi) in y.iter().enumerate() {
            update.axpy(*yi, &basis[i], Complex64::new(1.0, 0.0));
        }
        x += prec(&update);

        if rel <= rtol {
            break 'outer;
        }
    }

    let r_final = b - apply_a(&x);
    let final_rel = match &residual_filter {
        Some(f) => f(&r_final).norm() / b_norm,
        None => r_final.norm() / b_norm,
    };
    if final_rel > rtol {
        return Err(TsrError::IterativeSolveFailed {
            context: context.to_string(),
            residual: final_rel,
            iterations: total_iters,
            history,
        });
    }
    let _ = rel;
    Ok(GmresResult { x, iterations: total_iters, rel_residual: final_rel, history })
}

fn givens(a: Complex64, b: Complex64) -> (Complex64, Complex64) {
    if b.norm() == 0.0 {
        return (Complex64::new(1.0, 0.0), Complex64::ZERO);
    }
    let denom = (a.norm_sqr() + b.norm_sqr()).sqrt();
    (a / denom, b / denom)
}

pub struct RsvdResult {
    pub singular_values: Vec<f64>,
    /// Leading left singular vectors, one column per retained value.
    pub u: DMatrix<Complex64>,
    /// Leading right singular vectors.
    pub v: DMatrix<Complex64>,
}

/// Randomized SVD of a matrix-free operator (range finder with power
/// iterations, then an exact SVD of the small projected matrix).
///
/// `apply` maps a forcing-space vector (length `n_cols`) to a response-space
/// vector (length `n_rows`); `apply_adjoint` is its conjugate transpose.
/// Solver failures inside either action propagate out.
pub fn rsvd<A, At, R>(
    n_rows: usize,
    n_cols: usize,
    apply: A,
    apply_adjoint: At,
    rank: usize,
    oversample: usize,
    power_iters: usize,
    rng: &mut R,
) -> Result<RsvdResult>
where
    A: Fn(&DVector<Complex64>) -> Result<DVector<Complex64>>,
    At: Fn(&DVector<Complex64>) -> Result<DVector<Complex64>>,
    R: Rng + ?Sized,
{
    let l = (rank + oversample).min(n_cols).min(n_rows);
    let apply_block = |m: &DMatrix<Complex64>, adj: bool| -> Result<DMatrix<Complex64>> {
        let rows = if adj { n_cols } else { n_rows };
        let mut out = DMatrix::zeros(rows, m.ncols());
        for c in 0..m.ncols() {
            let col = DVector::from_column_slice(m.column(c).as_slice());
            let y = if adj { apply_adjoint(&col)? } else { apply(&col)? };
            out.set_column(c, &y);
        }
        Ok(out)
    };

    let omega = DMatrix::from_fn(n_cols, l, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) / 2f64.sqrt()
    });
    let mut q = apply_block(&omega, false)?.qr().q();
    for _ in 0..power_iters {
        let z = apply_block(&q, true)?.qr().q();
        q = apply_block(&z, false)?.qr().q();
    }
    // Small projected matrix B = Q^H A has shape l x n_cols; build its
    // adjoint column-wise from A^H Q.
    let bh = apply_block(&q, true)?;
    let svd = bh.transpose().map(|z| z.conj()).svd(true, true);
    let u_small = svd.u.expect("rsvd requested u");
    let v_t = svd.v_t.expect("rsvd requested v_t");
    let keep = rank.min(svd.singular_values.len());
    let mut u = DMatrix::zeros(n_rows, keep);
    let mut v = DMatrix::zeros(n_cols, keep);
    for i in 0..keep {
        u.set_column(i, &(&q * u_small.column(i)));
        v.set_column(i, &v_t.row(i).transpose().map(|z| z.conj()));
    }
    Ok(RsvdResult {
        singular_values: svd.singular_values.iter().take(keep).copied().collect(),
        u,
        v,
    })
}
