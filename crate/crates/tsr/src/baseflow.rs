//! Periodic base flows on the collocation grid: trivial equilibria,
//! analytic plane waves for the Ginzburg-Landau system, and a time-spectral
//! Newton solver with a phase condition for autonomous limit cycles.

use nalgebra::{DMatrix, DVector, DVectorView};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TsrError};
use crate::grid::SpectralGrid;
use crate::linalg::{apply_kron_diff, to_complex_matrix};
use crate::system::{CglParams, SystemModel, VdpParams};
use crate::validation;

/// A periodic orbit sampled at the collocation points, stored block-wise:
/// entry `j*n + i` is state component `i` at phase `theta_j`.
#[derive(Debug, Clone)]
pub struct BaseFlow {
    pub grid: SpectralGrid,
    pub states: DVector<f64>,
    /// State dimension of the underlying system.
    pub n: usize,
    pub period: f64,
    /// `||omega0 (D (x) I) w - r(w)|| / max(1, ||w||)`, stored truthfully.
    pub collocation_residual_norm: f64,
}

impl BaseFlow {
    pub fn state_block(&self, j: usize) -> DVectorView<'_, f64> {
        self.states.rows(j * self.n, self.n)
    }

    /// Centered Fourier coefficients of every state channel (row `i` holds
    /// channel `i`), for fast repeated interpolation along the orbit.
    pub fn fourier_coeff_matrix(&self) -> DMatrix<Complex64> {
        let n_ts = self.grid.n_ts();
        let mut coeffs = DMatrix::zeros(self.n, n_ts);
        for i in 0..self.n {
            let channel = DVector::from_fn(n_ts, |j, _| Complex64::new(self.states[j * self.n + i], 0.0));
            let c = self.grid.fourier_coeffs(&channel).expect("channel length matches grid");
            coeffs.row_mut(i).copy_from(&c.transpose());
        }
        coeffs
    }

    /// Trigonometric interpolation of the orbit state at an arbitrary phase.
    pub fn interp_state(&self, theta: f64) -> DVector<f64> {
        let coeffs = self.fourier_coeff_matrix();
        interp_real_from_coeffs(&coeffs, &self.grid, theta)
    }
}

/// Evaluate a real periodic signal from its centered coefficient matrix
/// (one row per channel).
pub fn interp_real_from_coeffs(coeffs: &DMatrix<Complex64>, grid: &SpectralGrid, theta: f64) -> DVector<f64> {
    let phases = harmonic_phases(grid, theta);
    DVector::from_fn(coeffs.nrows(), |i, _| {
        let mut acc = Complex64::ZERO;
        for (k, p) in phases.iter().enumerate() {
            acc += coeffs[(i, k)] * p;
        }
        acc.re
    })
}

/// `exp(i k theta)` for the grid's centered harmonics, built with recursive
/// multiplications instead of one `exp` per mode.
pub fn harmonic_phases(grid: &SpectralGrid, theta: f64) -> Vec<Complex64> {
    let k_max = (grid.n_ts() as i64 - 1) / 2;
    let step = Complex64::from_polar(1.0, theta);
    let mut phases = vec![Complex64::ZERO; grid.n_ts()];
    let mut cur = Complex64::from_polar(1.0, -(k_max as f64) * theta);
    for p in phases.iter_mut() {
        *p = cur;
        cur *= step;
    }
    phases
}

/// Relative residual of the time-spectral collocation equations
/// `omega0 (D (x) I) w = r(w)` for the given samples.
pub fn collocation_residual(sys: &SystemModel, grid: &SpectralGrid, states: &DVector<f64>) -> f64 {
    let n_ts = grid.n_ts();
    let n = sys.n;
    let diff_c = to_complex_matrix(grid.diff());
    let xc = states.map(|v| Complex64::new(v, 0.0));
    let mut resid = apply_kron_diff(&diff_c, &xc, n).map(|z| z.re * grid.omega0());
    for j in 0..n_ts {
        let w = states.rows(j * n, n).clone_owned();
        let t = grid.thetas()[j] / grid.omega0();
        let r = sys.rhs(&w, t);
        for i in 0..n {
            resid[j * n + i] -= r[i];
        }
    }
    resid.norm() / states.norm().max(1.0)
}

/// Zero base flow for systems whose unforced dynamics fix the origin.
pub fn trivial_base_flow(sys: &SystemModel, grid: &SpectralGrid) -> Result<BaseFlow> {
    let zero = DVector::zeros(sys.n);
    let r0 = sys.rhs(&zero, 0.0);
    if r0.norm() > 1e-12 {
        return Err(TsrError::InvalidConfiguration(format!(
            "origin is not an equilibrium of the unforced dynamics (|r(0)| = {:.3e})",
            r0.norm()
        )));
    }
    Ok(BaseFlow {
        grid: grid.clone(),
        states: DVector::zeros(sys.n * grid.n_ts()),
        n: sys.n,
        period: grid.period(),
        collocation_residual_norm: 0.0,
    })
}

/// Sample the analytic plane-wave solution of the CGL equation on the grid.
/// The grid frequency must match the plane-wave dispersion relation.
pub fn cgl_plane_wave(p: &CglParams, grid: &SpectralGrid) -> Result<BaseFlow> {
    let omega0 = p.plane_wave_frequency();
    if (grid.omega0() - omega0).abs() > 1e-10 * omega0 {
        return Err(TsrError::InvalidConfiguration(format!(
            "grid frequency {:.6e} does not match the plane-wave frequency {:.6e}",
            grid.omega0(),
            omega0
        )));
    }
    let sys = crate::system::cgl_system(p)?;
    let nn = p.n_node;
    let n = 2 * nn;
    let (a, k, dx) = (p.plane_wave_amplitude(), p.wavenumber(), p.dx());
    let mut states = DVector::zeros(n * grid.n_ts());
    for (j, &theta) in grid.thetas().iter().enumerate() {
        for i in 0..nn {
            let phase = k * (i as f64) * dx - theta;
            states[j * n + i] = a * phase.cos();
            states[j * n + nn + i] = a * phase.sin();
        }
    }
    let residual = collocation_residual(&sys, grid, &states);
    Ok(BaseFlow {
        grid: grid.clone(),
        states,
        n,
        period: grid.period(),
        collocation_residual_norm: residual,
    })
}

/// Newton solve of the time-spectral collocation equations for an autonomous
/// limit cycle, with the base frequency as an extra unknown and one phase
/// condition closing the system: the spectral time derivative of the first
/// state component is anchored to zero at `theta_0`.
pub fn solve_orbit_newton(
    sys: &SystemModel,
    grid0: &SpectralGrid,
    initial_guess: &DVector<f64>,
    period_guess: f64,
) -> Result<BaseFlow> {
    if !sys.autonomous {
        return Err(TsrError::InvalidConfiguration(
            "the orbit solver treats the period as unknown, which only makes sense for autonomous systems".into(),
        ));
    }
    let n_ts = grid0.n_ts();
    let n = sys.n;
    let nn = n * n_ts;
    if initial_guess.len() != nn {
        return Err(TsrError::DimensionMismatch(format!(
            "initial guess has length {}, expected {}",
            initial_guess.len(),
            nn
        )));
    }
    if period_guess <= 0.0 {
        return Err(TsrError::InvalidConfiguration("period guess must be positive".into()));
    }

    let d = grid0.diff().clone();
    let dc = to_complex_matrix(&d);
    let apply_d = |w: &DVector<f64>| -> DVector<f64> {
        apply_kron_diff(&dc, &w.map(|v| Complex64::new(v, 0.0)), n).map(|z| z.re)
    };

    let residual = |w: &DVector<f64>, omega: f64| -> DVector<f64> {
        let mut r = apply_d(w) * omega;
        for j in 0..n_ts {
            let wj = w.rows(j * n, n).clone_owned();
            let rj = sys.rhs(&wj, 0.0);
            for i in 0..n {
                r[j * n + i] -= rj[i];
            }
        }
        r
    };
    // The merit function must include the phase-condition row, otherwise the
    // line search rejects steps that rotate the orbit phase toward the anchor.
    let res_norm = |w: &DVector<f64>, omega: f64| -> f64 {
        let r = residual(w, omega);
        let g = apply_d(w)[0];
        (r.norm_squared() + g * g).sqrt() / w.norm().max(1.0)
    };

    let mut w = initial_guess.clone();
    let mut omega = 2.0 * std::f64::consts::PI / period_guess;
    let tol = 1e-10;
    let max_iters = 50;
    let mut rnorm = res_norm(&w, omega);

    for iter in 0..max_iters {
        if rnorm <= tol {
            let grid = SpectralGrid::new(n_ts, omega)?;
            let resid = collocation_residual(sys, &grid, &w);
            return Ok(BaseFlow { grid, states: w, n, period: 2.0 * std::f64::consts::PI / omega, collocation_residual_norm: resid });
        }

        // Bordered Newton matrix: collocation rows plus the phase condition.
        let mut a = DMatrix::<f64>::zeros(nn + 1, nn + 1);
        for j in 0..n_ts {
            let wj = w.rows(j * n, n).clone_owned();
            let jac = sys.jacobian(&wj, 0.0);
            for bi in 0..n {
                for bj in 0..n {
                    a[(j * n + bi, j * n + bj)] = -jac[(bi, bj)];
                }
            }
        }
        for j in 0..n_ts {
            for k in 0..n_ts {
                let v = omega * d[(j, k)];
                for i in 0..n {
                    a[(j * n + i, k * n + i)] += v;
                }
            }
        }
        let dw = apply_d(&w);
        for row in 0..nn {
            a[(row, nn)] = dw[row];
        }
        // Phase condition: d(w_0)/dtheta = 0 at theta_0.
        for k in 0..n_ts {
            a[(nn, k * n)] = d[(0, k)];
        }

        let mut rhs = DVector::<f64>::zeros(nn + 1);
        let r = residual(&w, omega);
        for i in 0..nn {
            rhs[i] = -r[i];
        }
        rhs[nn] = -dw[0];

        let delta = a.lu().solve(&rhs).ok_or_else(|| {
            TsrError::InvalidConfiguration(
                "Newton system is singular; the phase condition does not pin the orbit phase".into(),
            )
        })?;

        // Damped update: halve the step while the residual increases.
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..10 {
            let mut w_new = w.clone();
            for i in 0..nn {
                w_new[i] += scale * delta[i];
            }
            let omega_new = omega + scale * delta[nn];
            if omega_new > 0.0 {
                let r_new = res_norm(&w_new, omega_new);
                if r_new < rnorm || rnorm <= 10.0 * tol {
                    w = w_new;
                    omega = omega_new;
                    rnorm = r_new;
                    accepted = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if !accepted {
            return Err(TsrError::OrbitSolveFailed { iterations: iter + 1, residual: rnorm });
        }
    }

    if rnorm <= tol {
        let grid = SpectralGrid::new(n_ts, omega)?;
        let resid = collocation_residual(sys, &grid, &w);
        return Ok(BaseFlow { grid, states: w, n, period: 2.0 * std::f64::consts::PI / omega, collocation_residual_norm: resid });
    }
    Err(TsrError::OrbitSolveFailed { iterations: max_iters, residual: rnorm })
}

/// Time-march the autonomous system onto its attractor and extract one cycle
/// as an initial guess for the Newton solve: states resampled at the
/// collocation phases plus a period estimate from the last two upward
/// crossings of the first state component.
pub fn orbit_initial_guess(
    sys: &SystemModel,
    w_start: &DVector<f64>,
    march_time: f64,
    n_ts: usize,
) -> Result<(DVector<f64>, f64)> {
    let rhs = |t: f64, y: &DVector<f64>| sys.rhs(y, t);
    let n_samples = 4000usize;
    let t_eval: Vec<f64> = (0..=n_samples).map(|i| march_time * i as f64 / n_samples as f64).collect();
    let opts = validation::OdeOptions { rtol: 1e-10, atol: 1e-12, ..Default::default() };
    let result = validation::integrate(rhs, (0.0, march_time), w_start, Some(&t_eval), &opts)?;

    // Mean of the first component over the trailing half as crossing level.
    let half = result.times.len() / 2;
    let level: f64 = result.states[half..].iter().map(|s| s[0]).sum::<f64>() / (result.times.len() - half) as f64;
    let mut crossings = Vec::new();
    for i in 1..result.times.len() {
        let (a, b) = (result.states[i - 1][0] - level, result.states[i][0] - level);
        if a <= 0.0 && b > 0.0 {
            let frac = -a / (b - a);
            crossings.push(result.times[i - 1] + frac * (result.times[i] - result.times[i - 1]));
        }
    }
    if crossings.len() < 3 {
        return Err(TsrError::InvalidConfiguration(
            "time march found no repeating cycle; increase march_time or check the start state".into(),
        ));
    }
    let t_b = crossings[crossings.len() - 1];
    let t_a = crossings[crossings.len() - 2];
    let period = t_b - t_a;

    // Start the cycle at the peak of the first component so the derivative
    // phase anchor of the Newton solve is already (approximately) satisfied.
    // Searching the second-to-last cycle keeps `t_peak + period` inside the
    // recorded march.
    let lo = result.times.partition_point(|&x| x < crossings[crossings.len() - 3]);
    let hi = result.times.partition_point(|&x| x < t_a).min(result.times.len());
    let mut t_peak = t_a;
    let mut peak = f64::NEG_INFINITY;
    for i in lo..hi {
        if result.states[i][0] > peak {
            peak = result.states[i][0];
            t_peak = result.times[i];
        }
    }

    // Linear resampling of the marched cycle at the collocation phases.
    let mut guess = DVector::zeros(sys.n * n_ts);
    for j in 0..n_ts {
        let t = t_peak + period * j as f64 / n_ts as f64;
        let idx = result.times.partition_point(|&x| x < t).min(result.times.len() - 1).max(1);
        let (t0, t1) = (result.times[idx - 1], result.times[idx]);
        let frac = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
        for i in 0..sys.n {
            let v = result.states[idx - 1][i] * (1.0 - frac) + result.states[idx][i] * frac;
            guess[j * sys.n + i] = v;
        }
    }
    Ok((guess, period))
}

/// Convenience wrapper: march the van der Pol oscillator onto its limit cycle
/// and refine it with the time-spectral Newton solve.
pub fn solve_vdp_orbit(p: &VdpParams, n_ts: usize) -> Result<BaseFlow> {
    let sys = crate::system::vdp_system(p)?;
    let (guess, period) = orbit_initial_guess(&sys, &DVector::from_column_slice(&[2.0, 0.0]), 70.0, n_ts)?;
    let grid0 = SpectralGrid::new(n_ts, 2.0 * std::f64::consts::PI / period)?;
    solve_orbit_newton(&sys, &grid0, &guess, period)
}

/// Flat serialization record for caching base flows between runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaseFlowRecord {
    pub n_ts: usize,
    pub omega0: f64,
    pub n: usize,
    pub period: f64,
    pub collocation_residual_norm: f64,
    pub states: Vec<f64>,
}

impl From<&BaseFlow> for BaseFlowRecord {
    fn from(b: &BaseFlow) -> Self {
        Self {
            n_ts: b.grid.n_ts(),
            omega0: b.grid.omega0(),
            n: b.n,
            period: b.period,
            collocation_residual_norm: b.collocation_residual_norm,
            states: b.states.as_slice().to_vec(),
        }
    }
}

impl TryFrom<&BaseFlowRecord> for BaseFlow {
    type Error = TsrError;

    fn try_from(r: &BaseFlowRecord) -> Result<BaseFlow> {
        if r.states.len() != r.n * r.n_ts {
            return Err(TsrError::DimensionMismatch(format!(
                "record holds {} states, expected {}",
                r.states.len(),
                r.n * r.n_ts
            )));
        }
        Ok(BaseFlow {
            grid: SpectralGrid::new(r.n_ts, r.omega0)?,
            states: DVector::from_column_slice(&r.states),
            n: r.n,
            period: r.period,
            collocation_residual_norm: r.collocation_residual_norm,
        })
    }
}
