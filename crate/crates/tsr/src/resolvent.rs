//! Assembly of the time-spectral operator `L = i omega_f I - J_block + omega0 (D (x) I)`,
//! its input maps, the full resolvent gain/mode computation and time-domain
//! reconstruction, plus the classical LTI resolvent used for cross-checks.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::baseflow::{harmonic_phases, BaseFlow};
use crate::error::{Result, TsrError};
use crate::grid::SpectralGrid;
use crate::linalg::{apply_kron_diff, to_complex_matrix};
use crate::system::SystemModel;

/// How forcing enters the stacked system.
///
/// `Harmonic` restricts to a constant envelope: the stacked input map is
/// `(1/sqrt(n_ts)) (1 (x) B)` so that stacked norms remain consistent with
/// time-averaged ones. `QuasiPeriodic` lets the envelope vary per collocation
/// point: `blkdiag(B, ..., B)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputMode {
    Harmonic,
    QuasiPeriodic,
}

/// Variant tag for a resolvent solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Full,
    Transverse,
    Reconstructed,
}

#[derive(Debug, Clone)]
pub struct ResolventSolution {
    /// Leading singular value (energy amplification).
    pub gain: f64,
    /// Optimal forcing: length `m` for harmonic input, `m*n_ts` otherwise.
    pub forcing_mode: DVector<Complex64>,
    /// Optimal response envelope, stacked length `n*n_ts`, unit norm.
    pub response_mode: DVector<Complex64>,
    pub variant: Variant,
    pub omega_f: f64,
}

/// The assembled time-spectral operator. Block Jacobians and the
/// differentiation coupling are kept separate so the operator can be applied
/// matrix-free; `dense` materializes it only when a factorization is wanted.
pub struct TsrOperator {
    pub grid: SpectralGrid,
    pub block_jacobians: Vec<DMatrix<f64>>,
    pub omega_f: f64,
    pub input_mode: InputMode,
    pub b: DMatrix<f64>,
    pub n: usize,
    pub m: usize,
    diff_c: DMatrix<Complex64>,
}

impl TsrOperator {
    pub fn state_size(&self) -> usize {
        self.n * self.grid.n_ts()
    }

    pub fn forcing_size(&self) -> usize {
        match self.input_mode {
            InputMode::Harmonic => self.m,
            InputMode::QuasiPeriodic => self.m * self.grid.n_ts(),
        }
    }

    /// `J x` with `J = J_block - omega0 (D (x) I)`.
    pub fn apply_j(&self, x: &DVector<Complex64>) -> DVector<Complex64> {
        let mut out = apply_kron_diff(&self.diff_c, x, self.n) * Complex64::new(-self.grid.omega0(), 0.0);
        self.add_block_jac(x, &mut out, false);
        out
    }

    /// `J^H x`; uses `(D (x) I)^H = -(D (x) I)` for the skew-symmetric `D`.
    pub fn apply_j_adjoint(&self, x: &DVector<Complex64>) -> DVector<Complex64> {
        let mut out = apply_kron_diff(&self.diff_c, x, self.n) * Complex64::new(self.grid.omega0(), 0.0);
        self.add_block_jac(x, &mut out, true);
        out
    }

    /// `L x = i omega_f x - J x`.
    pub fn apply_l(&self, x: &DVector<Complex64>) -> DVector<Complex64> {
        let mut out = self.apply_j(x);
        let shift = Complex64::new(0.0, self.omega_f);
        for (o, xi) in out.iter_mut().zip(x.iter()) {
            *o = shift * xi - *o;
        }
        out
    }

    /// `L^H x = -i omega_f x - J^H x`.
    pub fn apply_l_adjoint(&self, x: &DVector<Complex64>) -> DVector<Complex64> {
        let mut out = self.apply_j_adjoint(x);
        let shift = Complex64::new(0.0, -self.omega_f);
        for (o, xi) in out.iter_mut().zip(x.iter()) {
            *o = shift * xi - *o;
        }
        out
    }

    fn add_block_jac(&self, x: &DVector<Complex64>, out: &mut DVector<Complex64>, adjoint: bool) {
        let n = self.n;
        for (j, jac) in self.block_jacobians.iter().enumerate() {
            for r in 0..n {
                let mut acc = Complex64::ZERO;
                for c in 0..n {
                    let v = if adjoint { jac[(c, r)] } else { jac[(r, c)] };
                    acc += v * x[j * n + c];
                }
                out[j * n + r] += acc;
            }
        }
    }

    pub fn dense_j(&self) -> DMatrix<f64> {
        let n_ts = self.grid.n_ts();
        let n = self.n;
        let mut j = DMatrix::zeros(n * n_ts, n * n_ts);
        for (blk, jac) in self.block_jacobians.iter().enumerate() {
            j.view_mut((blk * n, blk * n), (n, n)).copy_from(jac);
        }
        let d = self.grid.diff();
        for p in 0..n_ts {
            for q in 0..n_ts {
                let v = self.grid.omega0() * d[(p, q)];
                for i in 0..n {
                    j[(p * n + i, q * n + i)] -= v;
                }
            }
        }
        j
    }

    pub fn dense_l(&self) -> DMatrix<Complex64> {
        let mut l = to_complex_matrix(&self.dense_j()).map(|z| -z);
        let shift = Complex64::new(0.0, self.omega_f);
        for i in 0..l.nrows() {
            l[(i, i)] += shift;
        }
        l
    }

    /// Apply the stacked input map to a forcing vector.
    pub fn apply_b(&self, f: &DVector<Complex64>) -> Result<DVector<Complex64>> {
        if f.len() != self.forcing_size() {
            return Err(TsrError::DimensionMismatch(format!(
                "forcing has length {}, expected {}",
                f.len(),
                self.forcing_size()
            )));
        }
        let n_ts = self.grid.n_ts();
        let bc = to_complex_matrix(&self.b);
        let mut out = DVector::zeros(self.state_size());
        match self.input_mode {
            InputMode::Harmonic => {
                let bf = (&bc * f) / Complex64::new((n_ts as f64).sqrt(), 0.0);
                for j in 0..n_ts {
                    out.rows_mut(j * self.n, self.n).copy_from(&bf);
                }
            }
            InputMode::QuasiPeriodic => {
                for j in 0..n_ts {
                    let fj = f.rows(j * self.m, self.m).clone_owned();
                    out.rows_mut(j * self.n, self.n).copy_from(&(&bc * fj));
                }
            }
        }
        Ok(out)
    }

    /// Adjoint of the stacked input map.
    pub fn apply_b_adjoint(&self, y: &DVector<Complex64>) -> Result<DVector<Complex64>> {
        if y.len() != self.state_size() {
            return Err(TsrError::DimensionMismatch(format!(
                "state vector has length {}, expected {}",
                y.len(),
                self.state_size()
            )));
        }
        let n_ts = self.grid.n_ts();
        let bt = to_complex_matrix(&self.b.transpose());
        let mut out = DVector::zeros(self.forcing_size());
        match self.input_mode {
            InputMode::Harmonic => {
                let mut acc = DVector::zeros(self.m);
                for j in 0..n_ts {
                    let yj = y.rows(j * self.n, self.n).clone_owned();
                    acc += &bt * yj;
                }
                out.copy_from(&(acc / Complex64::new((n_ts as f64).sqrt(), 0.0)));
            }
            InputMode::QuasiPeriodic => {
                for j in 0..n_ts {
                    let yj = y.rows(j * self.n, self.n).clone_owned();
                    out.rows_mut(j * self.m, self.m).copy_from(&(&bt * yj));
                }
            }
        }
        Ok(out)
    }

    pub fn dense_b(&self) -> DMatrix<f64> {
        let n_ts = self.grid.n_ts();
        let mut out = DMatrix::zeros(self.state_size(), self.forcing_size());
        match self.input_mode {
            InputMode::Harmonic => {
                let s = 1.0 / (n_ts as f64).sqrt();
                for j in 0..n_ts {
                    out.view_mut((j * self.n, 0), (self.n, self.m)).copy_from(&(s * &self.b));
                }
            }
            InputMode::QuasiPeriodic => {
                for j in 0..n_ts {
                    out.view_mut((j * self.n, j * self.m), (self.n, self.m)).copy_from(&self.b);
                }
            }
        }
        out
    }
}

/// Evaluate the block Jacobians at the collocation states (and times, for
/// non-autonomous systems) and bundle them with the differentiation coupling.
pub fn assemble_tsr(
    base: &BaseFlow,
    sys: &SystemModel,
    omega_f: f64,
    input_mode: InputMode,
) -> Result<TsrOperator> {
    if base.n != sys.n {
        return Err(TsrError::DimensionMismatch(format!(
            "base flow dimension {} does not match system dimension {}",
            base.n, sys.n
        )));
    }
    let grid = base.grid.clone();
    let block_jacobians = (0..grid.n_ts())
        .map(|j| {
            let w = base.state_block(j).clone_owned();
            let t = grid.thetas()[j] / grid.omega0();
            sys.jacobian(&w, t)
        })
        .collect();
    let diff_c = to_complex_matrix(grid.diff());
    Ok(TsrOperator {
        grid,
        block_jacobians,
        omega_f,
        input_mode,
        b: sys.b.clone(),
        n: sys.n,
        m: sys.m,
        diff_c,
    })
}

/// Power-iteration estimate of the largest singular value of `L`.
pub fn operator_norm_estimate(op: &TsrOperator) -> f64 {
    let n = op.state_size();
    let mut x = DVector::from_fn(n, |i, _| Complex64::from_polar(1.0, 0.7 * i as f64));
    x /= Complex64::new(x.norm(), 0.0);
    let mut sigma = 0.0;
    for _ in 0..30 {
        let y = op.apply_l_adjoint(&op.apply_l(&x));
        let norm = y.norm();
        if norm == 0.0 {
            return 0.0;
        }
        sigma = norm.sqrt();
        x = y / Complex64::new(norm, 0.0);
    }
    sigma
}

/// Smallest singular value of `L`: exact SVD at small sizes, LU-based inverse
/// power iteration beyond that.
pub fn smallest_singular_value(op: &TsrOperator) -> Result<f64> {
    let n = op.state_size();
    let l = op.dense_l();
    if n <= 256 {
        let svd = l.svd(false, false);
        return Ok(svd.singular_values[svd.singular_values.len() - 1]);
    }
    let lu = l.clone().lu();
    let lu_h = l.adjoint().lu();
    let mut x = DVector::from_fn(n, |i, _| Complex64::from_polar(1.0, 1.3 * i as f64));
    x /= Complex64::new(x.norm(), 0.0);
    let mut lam = 0.0;
    for _ in 0..30 {
        let u = lu
            .solve(&x)
            .ok_or_else(|| TsrError::SingularOperator("LU solve failed in sigma_min estimate".into()))?;
        let v = lu_h
            .solve(&u)
            .ok_or_else(|| TsrError::SingularOperator("adjoint LU solve failed in sigma_min estimate".into()))?;
        let norm = v.norm();
        lam = norm;
        x = v / Complex64::new(norm, 0.0);
    }
    Ok(1.0 / lam.sqrt())
}

/// Full resolvent solve: gain and leading singular pair of `L^-1 B` by dense
/// factorization and SVD. Near-singular operators are refused and routed to
/// the transverse formulation.
pub fn solve_full_resolvent(op: &TsrOperator) -> Result<ResolventSolution> {
    let sigma_max = operator_norm_estimate(op);
    let sigma_min = smallest_singular_value(op)?;
    if sigma_min < 1e-8 * sigma_max {
        return Err(TsrError::ResonantOperator { ratio: sigma_min / sigma_max });
    }

    let l = op.dense_l();
    let lu = l.lu();
    let b = to_complex_matrix(&op.dense_b());
    let r = lu
        .solve(&b)
        .ok_or_else(|| TsrError::SingularOperator("time-spectral operator factorization failed".into()))?;

    if op.forcing_size() == 1 {
        let gain = r.column(0).norm();
        if gain == 0.0 {
            return Ok(ResolventSolution {
                gain: 0.0,
                forcing_mode: DVector::from_element(1, Complex64::new(1.0, 0.0)),
                response_mode: DVector::zeros(op.state_size()),
                variant: Variant::Full,
                omega_f: op.omega_f,
            });
        }
        let u = r.column(0).clone_owned() / Complex64::new(gain, 0.0);
        return Ok(ResolventSolution {
            gain,
            forcing_mode: DVector::from_element(1, Complex64::new(1.0, 0.0)),
            response_mode: u,
            variant: Variant::Full,
            omega_f: op.omega_f,
        });
    }

    let svd = r.svd(true, true);
    let gain = svd.singular_values[0];
    let u = svd.u.as_ref().expect("svd with u").column(0).clone_owned();
    let v = svd.v_t.as_ref().expect("svd with v_t").row(0).adjoint();
    if gain == 0.0 {
        return Ok(ResolventSolution {
            gain: 0.0,
            forcing_mode: DVector::zeros(op.forcing_size()),
            response_mode: DVector::zeros(op.state_size()),
            variant: Variant::Full,
            omega_f: op.omega_f,
        });
    }
    Ok(ResolventSolution {
        gain,
        forcing_mode: v,
        response_mode: u,
        variant: Variant::Full,
        omega_f: op.omega_f,
    })
}

/// Classical steady-state resolvent gain `sigma_max((i omega I - J)^-1 B)`.
pub fn classical_resolvent_gain(j: &DMatrix<f64>, b: &DMatrix<f64>, omega: f64) -> Result<f64> {
    let n = j.nrows();
    if j.ncols() != n || b.nrows() != n {
        return Err(TsrError::DimensionMismatch("Jacobian/input shapes are inconsistent".into()));
    }
    let mut l = to_complex_matrix(j).map(|z| -z);
    for i in 0..n {
        l[(i, i)] += Complex64::new(0.0, omega);
    }
    let r = l
        .lu()
        .solve(&to_complex_matrix(b))
        .ok_or_else(|| TsrError::SingularOperator("shifted Jacobian is singular".into()))?;
    Ok(r.svd(false, false).singular_values[0])
}

/// Fix the phase gauge of a full-variant solution and recompute the forcing
/// through the adjoint relation `v = (1/sigma) R^H u`.
///
/// The response is rotated so its inner product with the base flow is real
/// and non-negative; for a (numerically) zero base flow the largest response
/// component is made real positive instead.
pub fn normalize_modes(sol: &ResolventSolution, op: &TsrOperator, base: &BaseFlow) -> Result<ResolventSolution> {
    if sol.gain <= 0.0 {
        return Err(TsrError::InvalidConfiguration("cannot normalize a zero-gain solution".into()));
    }
    let mut u = sol.response_mode.clone();
    u /= Complex64::new(u.norm(), 0.0);
    let phase = alignment_phase(&base.states, &u);
    u *= Complex64::from_polar(1.0, -phase);

    // Forcing via the adjoint relation, with a dense adjoint factorization.
    let lh = op.dense_l().adjoint();
    let w = lh
        .lu()
        .solve(&u)
        .ok_or_else(|| TsrError::SingularOperator("adjoint factorization failed in normalize_modes".into()))?;
    let mut v = op.apply_b_adjoint(&w)?;
    v /= Complex64::new(sol.gain, 0.0);

    Ok(ResolventSolution {
        gain: sol.gain,
        forcing_mode: v,
        response_mode: u,
        variant: sol.variant,
        omega_f: sol.omega_f,
    })
}

/// Phase of the alignment inner product used to pin mode gauges.
pub fn alignment_phase(base_states: &DVector<f64>, u: &DVector<Complex64>) -> f64 {
    let mut z = Complex64::ZERO;
    for (w, ui) in base_states.iter().zip(u.iter()) {
        z += Complex64::new(*w, 0.0) * ui;
    }
    if z.norm() > 1e-9 * base_states.norm() * u.norm() && base_states.norm() > 0.0 {
        z.arg()
    } else {
        // Zero (or orthogonal) base flow: pin the largest component instead.
        let mut best = 0usize;
        for (i, ui) in u.iter().enumerate() {
            if ui.norm() > u[best].norm() {
                best = i;
            }
        }
        u[best].arg()
    }
}

/// Centered Fourier coefficients of a stacked complex envelope, one row per
/// state channel.
pub fn envelope_coeff_matrix(env: &DVector<Complex64>, grid: &SpectralGrid, n: usize) -> Result<DMatrix<Complex64>> {
    let n_ts = grid.n_ts();
    if env.len() != n * n_ts {
        return Err(TsrError::DimensionMismatch(format!(
            "envelope has length {}, expected {}",
            env.len(),
            n * n_ts
        )));
    }
    let mut coeffs = DMatrix::zeros(n, n_ts);
    for i in 0..n {
        let channel = DVector::from_fn(n_ts, |j, _| env[j * n + i]);
        let c = grid.fourier_coeffs(&channel)?;
        coeffs.row_mut(i).copy_from(&c.transpose());
    }
    Ok(coeffs)
}

/// Evaluate a stacked envelope at an arbitrary phase from its coefficients.
pub fn eval_envelope(coeffs: &DMatrix<Complex64>, grid: &SpectralGrid, theta: f64) -> DVector<Complex64> {
    let phases = harmonic_phases(grid, theta);
    DVector::from_fn(coeffs.nrows(), |i, _| {
        let mut acc = Complex64::ZERO;
        for (k, p) in phases.iter().enumerate() {
            acc += coeffs[(i, k)] * p;
        }
        acc
    })
}

/// Trigonometric interpolation of a stacked envelope at one phase.
pub fn interp_envelope(env: &DVector<Complex64>, grid: &SpectralGrid, n: usize, theta: f64) -> Result<DVector<Complex64>> {
    Ok(eval_envelope(&envelope_coeff_matrix(env, grid, n)?, grid, theta))
}

/// Carrier-envelope reconstruction of the complex time signal
/// `eta(t) = eta_hat(omega0 t) exp(i omega_f t)`; the physical signal is the
/// real part. The state dimension is inferred from the envelope length.
pub fn reconstruct_time_signal(
    env: &DVector<Complex64>,
    grid: &SpectralGrid,
    omega_f: f64,
    t: f64,
) -> Result<DVector<Complex64>> {
    let n_ts = grid.n_ts();
    if env.len() % n_ts != 0 {
        return Err(TsrError::DimensionMismatch(format!(
            "envelope length {} is not a multiple of the grid size {n_ts}",
            env.len()
        )));
    }
    let n = env.len() / n_ts;
    let theta = (grid.omega0() * t).rem_euclid(2.0 * std::f64::consts::PI);
    let mut out = interp_envelope(env, grid, n, theta)?;
    out *= Complex64::from_polar(1.0, omega_f * t);
    Ok(out)
}

/// A two-frequency signal in carrier-envelope form: `eta(t) =
/// envelope(omega0 t) exp(i omega_f t)` with the envelope sampled on the
/// collocation grid, hence periodic in the base frequency by construction.
#[derive(Debug, Clone)]
pub struct QuasiPeriodicSignal {
    /// Stacked envelope samples, length n*n_ts.
    pub envelope_samples: DVector<Complex64>,
    pub omega_f: f64,
    pub omega0: f64,
}

impl QuasiPeriodicSignal {
    pub fn from_solution(sol: &ResolventSolution, grid: &SpectralGrid) -> Self {
        QuasiPeriodicSignal {
            envelope_samples: sol.response_mode.clone(),
            omega_f: sol.omega_f,
            omega0: grid.omega0(),
        }
    }

    /// Complex signal value at time t; the physical signal is the real part.
    pub fn eval(&self, grid: &SpectralGrid, t: f64) -> Result<DVector<Complex64>> {
        if (grid.omega0() - self.omega0).abs() > 1e-12 * self.omega0.abs().max(1.0) {
            return Err(TsrError::InvalidConfiguration(
                "grid frequency does not match the signal's base frequency".into(),
            ));
        }
        reconstruct_time_signal(&self.envelope_samples, grid, self.omega_f, t)
    }
}
