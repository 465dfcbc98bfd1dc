//! Time-domain cross checks: an adaptive Runge-Kutta integrator, forced
//! envelope simulations with an energy accumulator, gain measurement with
//! settle/window bookkeeping, neutral-coordinate extraction, stroboscopic
//! sampling, and a nonlinear twin-run comparison.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::baseflow::{interp_real_from_coeffs, BaseFlow};
use crate::error::{Result, TsrError};
use crate::floquet::FloquetPair;
use crate::grid::SpectralGrid;
use crate::linalg::{fit_line, rational_approx};
use crate::resolvent::{envelope_coeff_matrix, eval_envelope};
use crate::system::SystemModel;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Dormand-Prince 5(4) coefficients.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const ERR: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

#[derive(Debug, Clone)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub dt_initial: Option<f64>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-10, max_steps: 50_000_000, dt_initial: None }
    }
}

#[derive(Debug, Clone)]
pub struct IntegrationResult {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub steps: usize,
    pub rejected: usize,
}

/// Adaptive fifth-order integration with an embedded fourth-order error
/// estimate and first-same-as-last stage reuse. When `t_eval` is given, steps
/// are clamped so every requested time is hit exactly and only those states
/// are stored; otherwise every accepted step is stored.
pub fn integrate(
    rhs: impl Fn(f64, &DVector<f64>) -> DVector<f64>,
    t_span: (f64, f64),
    y0: &DVector<f64>,
    t_eval: Option<&[f64]>,
    opts: &OdeOptions,
) -> Result<IntegrationResult> {
    let (t0, t1) = t_span;
    if t1 <= t0 {
        return Err(TsrError::InvalidConfiguration("integration span must move forward".into()));
    }
    if let Some(te) = t_eval {
        let monotone = te.windows(2).all(|w| w[1] > w[0]);
        if te.is_empty() || !monotone || te[0] < t0 || *te.last().unwrap() > t1 {
            return Err(TsrError::InvalidConfiguration(
                "evaluation times must be increasing and inside the span".into(),
            ));
        }
    }
    let dim = y0.len();
    let mut t = t0;
    let mut y = y0.clone();
    let mut k: Vec<DVector<f64>> = vec![DVector::zeros(dim); 7];
    k[0] = rhs(t, &y);
    let mut dt = opts.dt_initial.unwrap_or_else(|| {
        let scale = 1.0 + y.norm();
        let rate = k[0].norm() / scale;
        ((opts.rtol.powf(0.2)) / rate.max(1e-8)).min((t1 - t0) / 10.0)
    });
    let dt_min = (t1 - t0) * 1e-14;

    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut eval_idx = 0;
    let record_all = t_eval.is_none();
    if record_all {
        times.push(t);
        states.push(y.clone());
    } else if let Some(te) = t_eval {
        while eval_idx < te.len() && te[eval_idx] <= t {
            times.push(te[eval_idx]);
            states.push(y.clone());
            eval_idx += 1;
        }
    }

    let mut steps = 0usize;
    let mut rejected = 0usize;
    let mut y_new = DVector::zeros(dim);
    while t < t1 {
        if steps + rejected > opts.max_steps {
            return Err(TsrError::TooManySteps(opts.max_steps));
        }
        let mut h = dt.min(t1 - t);
        if let Some(te) = t_eval {
            if eval_idx < te.len() {
                h = h.min(te[eval_idx] - t);
            }
        }
        if h < dt_min {
            return Err(TsrError::StepSizeUnderflow { t });
        }
        for s in 1..7 {
            let mut ys = y.clone();
            for (j, kj) in k.iter().enumerate().take(s) {
                let a = A[s - 1][j];
                if a != 0.0 {
                    ys.axpy(h * a, kj, 1.0);
                }
            }
            k[s] = rhs(t + C[s] * h, &ys);
        }
        // Stage 7 equals the fifth-order solution's derivative, so y_new is
        // already ys from the last loop pass; recompute cheaply from B5.
        y_new.copy_from(&y);
        for (j, kj) in k.iter().enumerate() {
            if B5[j] != 0.0 {
                y_new.axpy(h * B5[j], kj, 1.0);
            }
        }
        let mut err_acc = 0.0;
        for i in 0..dim {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                if ERR[j] != 0.0 {
                    e += ERR[j] * kj[i];
                }
            }
            e *= h;
            let scale = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            err_acc += (e / scale) * (e / scale);
        }
        let err = (err_acc / dim as f64).sqrt();
        if err <= 1.0 {
            t += h;
            std::mem::swap(&mut y, &mut y_new);
            k.swap(0, 6);
            steps += 1;
            if record_all {
                times.push(t);
                states.push(y.clone());
            } else if let Some(te) = t_eval {
                while eval_idx < te.len() && te[eval_idx] <= t + dt_min {
                    times.push(te[eval_idx]);
                    states.push(y.clone());
                    eval_idx += 1;
                }
            }
        } else {
            rejected += 1;
        }
        let factor = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
        dt = h * factor;
    }
    if let Some(te) = t_eval {
        while eval_idx < te.len() && te[eval_idx] <= t + dt_min {
            times.push(te[eval_idx]);
            states.push(y.clone());
            eval_idx += 1;
        }
        if times.len() != te.len() {
            return Err(TsrError::InvalidConfiguration(
                "integrator failed to reach every evaluation time".into(),
            ));
        }
    }
    Ok(IntegrationResult { times, states, steps, rejected })
}

/// Complex forcing envelope in state space. The physical drive is
/// `Re` of `envelope(t) * exp(i omega_f t)` for nonlinear runs, and the
/// complex product itself for linearized envelope runs.
#[derive(Debug, Clone)]
pub enum ForcingEnvelope {
    /// Constant-in-time envelope (a single harmonic drive).
    Constant(DVector<Complex64>),
    /// Periodic envelope given by its centered Fourier coefficient matrix
    /// (state dimension x harmonic count) on a collocation grid.
    Periodic { coeffs: DMatrix<Complex64>, grid: SpectralGrid },
}

impl ForcingEnvelope {
    /// Build the periodic variant from a stacked collocation vector.
    pub fn from_stacked(env: &DVector<Complex64>, grid: &SpectralGrid, n: usize) -> Result<Self> {
        let coeffs = envelope_coeff_matrix(env, grid, n)?;
        Ok(Self::Periodic { coeffs, grid: grid.clone() })
    }

    pub fn eval(&self, t: f64) -> DVector<Complex64> {
        match self {
            Self::Constant(v) => v.clone(),
            Self::Periodic { coeffs, grid } => {
                let theta = (grid.omega0() * t).rem_euclid(TWO_PI);
                eval_envelope(coeffs, grid, theta)
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Constant(v) => v.len(),
            Self::Periodic { coeffs, .. } => coeffs.nrows(),
        }
    }
}

/// Physical drive and the forcing-norm convention for a resolvent solution's
/// optimal forcing mode. A length-m mode is a single-harmonic drive pushed
/// through the input matrix with unit envelope; a stacked mode is a periodic
/// envelope whose gain convention divides by the root-mean-square of the
/// collocation samples.
pub fn forcing_envelope(
    forcing_mode: &DVector<Complex64>,
    b: &DMatrix<f64>,
    grid: &SpectralGrid,
) -> Result<(ForcingEnvelope, f64)> {
    let m = b.ncols();
    let n = b.nrows();
    let n_ts = grid.n_ts();
    if forcing_mode.len() == m {
        let mut bf = DVector::zeros(n);
        for r in 0..n {
            for c in 0..m {
                bf[r] += Complex64::new(b[(r, c)], 0.0) * forcing_mode[c];
            }
        }
        Ok((ForcingEnvelope::Constant(bf), forcing_mode.norm()))
    } else if forcing_mode.len() == m * n_ts {
        let mut stacked = DVector::zeros(n * n_ts);
        for j in 0..n_ts {
            for r in 0..n {
                for c in 0..m {
                    stacked[j * n + r] +=
                        Complex64::new(b[(r, c)], 0.0) * forcing_mode[j * m + c];
                }
            }
        }
        let env = ForcingEnvelope::from_stacked(&stacked, grid, n)?;
        Ok((env, forcing_mode.norm() / (n_ts as f64).sqrt()))
    } else {
        Err(TsrError::DimensionMismatch(format!(
            "forcing mode has length {}, expected {} or {}",
            forcing_mode.len(),
            m,
            m * n_ts
        )))
    }
}

/// State-space drive for validating transverse and reconstructed gains: the
/// optimal input mode pushed through the input matrix and then through the
/// oblique projector, so the applied forcing is orthogonal to the modulated
/// adjoint mode and excites no secular phase drift. The gain convention still
/// divides by the input-mode norm; the projection belongs to the operator,
/// not to the signal.
pub fn projected_forcing_envelope(
    op: &crate::resolvent::TsrOperator,
    proj: &crate::transverse::ObliqueProjector,
    forcing_mode: &DVector<Complex64>,
) -> Result<(ForcingEnvelope, f64)> {
    if forcing_mode.len() != op.forcing_size() {
        return Err(TsrError::DimensionMismatch(format!(
            "forcing mode has length {}, expected {}",
            forcing_mode.len(),
            op.forcing_size()
        )));
    }
    let stacked = crate::transverse::apply_projector(proj, &op.apply_b(forcing_mode)?, false);
    let env = ForcingEnvelope::from_stacked(&stacked, &op.grid, op.n)?;
    let n_ts = op.grid.n_ts() as f64;
    Ok((env, forcing_mode.norm() / n_ts.sqrt()))
}

/// Physical real forcing at time `t` for a solution's optimal forcing mode:
/// the interpolated envelope through the input matrix, times the carrier,
/// real part.
pub fn synthesize_forcing(
    sol: &crate::resolvent::ResolventSolution,
    b: &DMatrix<f64>,
    grid: &SpectralGrid,
    t: f64,
) -> Result<DVector<f64>> {
    let (env, _) = forcing_envelope(&sol.forcing_mode, b, grid)?;
    let carrier = Complex64::from_polar(1.0, sol.omega_f * t);
    Ok(env.eval(t).map(|z| (z * carrier).re))
}

#[derive(Debug, Clone)]
pub struct MeasureOpts {
    /// Transient periods to discard. `None` derives the count from the
    /// slowest decay rate (thirty decay constants) or falls back to fifty.
    pub settle_periods: Option<usize>,
    /// Measurement window in base periods (one half; the trend check uses
    /// two). `None` picks twenty, rounded up to whole beat periods when the
    /// forcing-to-base frequency ratio is a small rational.
    pub window_periods: Option<usize>,
    /// Slowest stable characteristic decay rate, if known.
    pub slowest_decay_rate: Option<f64>,
    pub rtol: f64,
    pub atol: f64,
    /// Relative disagreement between the two window halves above which the
    /// measurement is rejected as unsettled.
    pub trend_tol: f64,
}

impl Default for MeasureOpts {
    fn default() -> Self {
        Self {
            settle_periods: None,
            window_periods: None,
            slowest_decay_rate: None,
            rtol: 1e-8,
            atol: 1e-10,
            trend_tol: 0.01,
        }
    }
}

pub fn settle_design(slowest_decay_rate: Option<f64>, period: f64) -> usize {
    match slowest_decay_rate {
        Some(rate) if rate > 0.0 => (30.0 / (rate * period)).ceil() as usize,
        _ => 50,
    }
}

/// Window length in base periods. For self-oscillating systems the response
/// power beats at the difference frequencies against the neutral homogeneous
/// component, so the window is rounded up to whole beat periods; forced
/// periodic systems have a base-periodic power signal and any whole number
/// of periods works.
pub fn window_design(autonomous: bool, ratio: f64) -> usize {
    if !autonomous {
        return 20;
    }
    match rational_approx(ratio, 16, 1e-9) {
        Some((_, q)) if q > 1 => {
            let q = q as usize;
            q * 20usize.div_ceil(q)
        }
        _ => 20,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GainMeasurement {
    pub omega_f: f64,
    pub simulated_gain: f64,
    pub gain_first_half: f64,
    pub gain_second_half: f64,
    /// Relative disagreement between the window halves.
    pub trend: f64,
    pub settle_periods: usize,
    pub window_periods: usize,
}

struct EnvelopeRun<'a> {
    base_coeffs: DMatrix<Complex64>,
    grid: &'a SpectralGrid,
    sys: &'a SystemModel,
    omega0: f64,
    omega_f: f64,
    forcing: &'a ForcingEnvelope,
}

impl EnvelopeRun<'_> {
    /// Real embedding `[Re eta; Im eta; E]` of the forced complex envelope
    /// equation, with the response energy accumulated as an extra state so
    /// window averages need no dense time sampling.
    fn rhs(&self, t: f64, y: &DVector<f64>) -> DVector<f64> {
        let n = self.sys.n;
        let theta = (self.omega0 * t).rem_euclid(TWO_PI);
        let w = interp_real_from_coeffs(&self.base_coeffs, self.grid, theta);
        let jac = self.sys.jacobian(&w, t);
        let mut out = DVector::zeros(2 * n + 1);
        let re = y.rows(0, n);
        let im = y.rows(n, n);
        for r in 0..n {
            let mut dr = 0.0;
            let mut di = 0.0;
            for c in 0..n {
                let j = jac[(r, c)];
                dr += j * re[c];
                di += j * im[c];
            }
            out[r] = dr;
            out[n + r] = di;
        }
        let carrier = Complex64::from_polar(1.0, self.omega_f * t);
        let f = self.forcing.eval(t);
        for r in 0..n {
            let fc = f[r] * carrier;
            out[r] += fc.re;
            out[n + r] += fc.im;
        }
        out[2 * n] = re.norm_squared() + im.norm_squared();
        out
    }
}

/// Integrate the forced complex envelope `eta' = J(t) eta + f(t) e^(i omega_f t)`
/// from rest in its real embedding `[Re eta; Im eta; E]`, where `E` accumulates
/// the squared response norm.
pub fn integrate_forced_envelope(
    sys: &SystemModel,
    base: &BaseFlow,
    forcing: &ForcingEnvelope,
    omega_f: f64,
    t_end: f64,
    t_eval: Option<&[f64]>,
    opts: &MeasureOpts,
) -> Result<IntegrationResult> {
    let n = sys.n;
    if forcing.dim() != n {
        return Err(TsrError::DimensionMismatch(
            "forcing envelope must live in state space".into(),
        ));
    }
    let run = EnvelopeRun {
        base_coeffs: base.fourier_coeff_matrix(),
        grid: &base.grid,
        sys,
        omega0: base.grid.omega0(),
        omega_f,
        forcing,
    };
    let y0 = DVector::zeros(2 * n + 1);
    let ode = OdeOptions { rtol: opts.rtol, atol: opts.atol, ..OdeOptions::default() };
    integrate(|t, y| run.rhs(t, y), (0.0, t_end), &y0, t_eval, &ode)
}

/// Unpack the complex envelope from an embedded integration state.
pub fn envelope_from_embedded(y: &DVector<f64>) -> DVector<Complex64> {
    let n = (y.len() - 1) / 2;
    DVector::from_fn(n, |i, _| Complex64::new(y[i], y[n + i]))
}

/// Drive the linearized envelope from rest, discard the settle transient and
/// convert accumulated response energy over two window halves into a gain.
pub fn measure_gain(
    sys: &SystemModel,
    base: &BaseFlow,
    forcing: &ForcingEnvelope,
    forcing_norm: f64,
    omega_f: f64,
    opts: &MeasureOpts,
) -> Result<GainMeasurement> {
    let n = sys.n;
    if forcing.dim() != n {
        return Err(TsrError::DimensionMismatch(
            "forcing envelope must live in state space".into(),
        ));
    }
    if forcing_norm <= 0.0 {
        return Err(TsrError::InvalidConfiguration("forcing norm must be positive".into()));
    }
    let period = base.period;
    let omega0 = base.grid.omega0();
    let settle = opts
        .settle_periods
        .unwrap_or_else(|| settle_design(opts.slowest_decay_rate, period));
    let window = opts
        .window_periods
        .unwrap_or_else(|| window_design(sys.autonomous, omega_f / omega0));
    let t_settle = settle as f64 * period;
    let half = window as f64 * period;
    let t_eval = [t_settle, t_settle + half, t_settle + 2.0 * half];
    let res = integrate_forced_envelope(sys, base, forcing, omega_f, t_eval[2], Some(&t_eval), opts)?;
    let e = |i: usize| res.states[i][2 * n];
    let avg1 = (e(1) - e(0)) / half;
    let avg2 = (e(2) - e(1)) / half;
    let gain_first_half = avg1.max(0.0).sqrt() / forcing_norm;
    let gain_second_half = avg2.max(0.0).sqrt() / forcing_norm;
    let simulated_gain = ((avg1 + avg2) / 2.0).max(0.0).sqrt() / forcing_norm;
    let trend = (gain_second_half - gain_first_half).abs() / simulated_gain.max(1e-300);
    if trend > opts.trend_tol {
        return Err(TsrError::NotSettled { trend });
    }
    Ok(GainMeasurement {
        omega_f,
        simulated_gain,
        gain_first_half,
        gain_second_half,
        trend,
        settle_periods: settle,
        window_periods: window,
    })
}

/// Split an envelope state at time `t` into its neutral coordinate and the
/// transverse remainder: `c = <q0(t), eta> / <q0(t), p0(t)>` with the
/// pointwise (not stacked) pairing, and `v = eta - c p0(t)`.
pub fn transverse_component(
    eta: &DVector<Complex64>,
    base: &BaseFlow,
    pair: &FloquetPair,
    t: f64,
) -> Result<(Complex64, DVector<Complex64>)> {
    let grid = &base.grid;
    let n_ts = grid.n_ts();
    if pair.p0.len() % n_ts != 0 || eta.len() != pair.p0.len() / n_ts {
        return Err(TsrError::DimensionMismatch(
            "state dimension does not match the stored pair".into(),
        ));
    }
    let n = eta.len();
    let theta = (grid.omega0() * t).rem_euclid(TWO_PI);
    let qc = envelope_coeff_matrix(&pair.q0, grid, n)?;
    let pc = envelope_coeff_matrix(&pair.p0, grid, n)?;
    let q = eval_envelope(&qc, grid, theta);
    let p = eval_envelope(&pc, grid, theta);
    let den = q.dotc(&p);
    if den.norm() < 1e-14 {
        return Err(TsrError::SingularOperator("pointwise pairing vanishes".into()));
    }
    let c = q.dotc(eta) / den;
    let mut v = eta.clone();
    v.axpy(-c, &p, Complex64::new(1.0, 0.0));
    Ok((c, v))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StroboSample {
    /// Period index.
    pub k: usize,
    /// Neutral (phase) coordinate, stored as [re, im] for serialization.
    pub c: [f64; 2],
    /// Norm of the transverse remainder.
    pub v_norm: f64,
}

/// Sample an embedded envelope integration once per base period and split
/// each sample into phase coordinate and transverse deformation. Samples are
/// taken exactly where the integration recorded them or linearly
/// interpolated from the surrounding records.
pub fn stroboscopic_series(
    integration: &IntegrationResult,
    base: &BaseFlow,
    pair: &FloquetPair,
) -> Result<Vec<StroboSample>> {
    let period = base.period;
    let t_last = *integration
        .times
        .last()
        .ok_or_else(|| TsrError::InvalidConfiguration("empty integration".into()))?;
    let n_periods = (t_last / period + 1e-9).floor() as usize;
    if n_periods < 10 {
        return Err(TsrError::InvalidConfiguration(format!(
            "stroboscopic sampling needs at least ten periods, integration spans {n_periods}"
        )));
    }
    let tol = 1e-9 * period;
    let mut out = Vec::with_capacity(n_periods + 1);
    for k in 0..=n_periods {
        let tk = k as f64 * period;
        let idx = integration
            .times
            .partition_point(|&t| t < tk - tol)
            .min(integration.times.len() - 1);
        let eta = if (integration.times[idx] - tk).abs() <= tol {
            envelope_from_embedded(&integration.states[idx])
        } else {
            if idx == 0 {
                return Err(TsrError::InvalidConfiguration(
                    "integration does not cover the stroboscopic times".into(),
                ));
            }
            let (t0, t1) = (integration.times[idx - 1], integration.times[idx]);
            let w = (tk - t0) / (t1 - t0);
            let y = &integration.states[idx - 1] * (1.0 - w) + &integration.states[idx] * w;
            envelope_from_embedded(&y)
        };
        let (c, v) = transverse_component(&eta, base, pair, tk)?;
        out.push(StroboSample { k, c: [c.re, c.im], v_norm: v.norm() });
    }
    Ok(out)
}

/// Per-period linear drift of the stroboscopic phase coordinate, from a
/// least-squares line through `Re c_k` against the period index.
pub fn stroboscopic_drift(series: &[StroboSample]) -> f64 {
    let xs: Vec<f64> = series.iter().map(|s| s.k as f64).collect();
    let ys: Vec<f64> = series.iter().map(|s| s.c[0]).collect();
    let (slope, _) = fit_line(&xs, &ys);
    slope
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationReport {
    /// Relative root-mean-square mismatch between the scaled nonlinear
    /// difference signal and the linear prediction over the window.
    pub rel_error: f64,
    pub epsilon: f64,
    pub settle_periods: usize,
    pub window_periods: usize,
}

/// Twin nonlinear runs: integrate the full system from the orbit's initial
/// point with and without a drive of amplitude `epsilon`, difference the
/// trajectories, scale by `1/epsilon` and compare against the linear response
/// envelope `Re(eta_hat(theta) exp(i omega_f t))`. Differencing twin runs
/// cancels the error from starting on a slightly inexact orbit.
pub fn nonlinear_perturbation_check(
    sys: &SystemModel,
    base: &BaseFlow,
    forcing: &ForcingEnvelope,
    response_env: &DVector<Complex64>,
    omega_f: f64,
    epsilon: f64,
    opts: &MeasureOpts,
) -> Result<PerturbationReport> {
    let n = sys.n;
    if epsilon <= 0.0 {
        return Err(TsrError::InvalidConfiguration("epsilon must be positive".into()));
    }
    let period = base.period;
    let omega0 = base.grid.omega0();
    let settle = opts
        .settle_periods
        .unwrap_or_else(|| settle_design(opts.slowest_decay_rate, period));
    let window = opts
        .window_periods
        .unwrap_or_else(|| window_design(sys.autonomous, omega_f / omega0));
    let t_end = (settle + window) as f64 * period;
    let n_samples = window * 64;
    let t_eval: Vec<f64> = (0..=n_samples)
        .map(|k| settle as f64 * period + k as f64 * (window as f64 * period) / n_samples as f64)
        .collect();
    let ode = OdeOptions { rtol: opts.rtol, atol: opts.atol, ..OdeOptions::default() };
    let w0 = base.state_block(0).clone_owned();

    let forced = integrate(
        |t, y| {
            let mut dy = sys.rhs(y, t);
            let carrier = Complex64::from_polar(1.0, omega_f * t);
            let f = forcing.eval(t);
            for r in 0..n {
                dy[r] += epsilon * (f[r] * carrier).re;
            }
            dy
        },
        (0.0, t_end),
        &w0,
        Some(&t_eval),
        &ode,
    )?;
    let unforced = integrate(|t, y| sys.rhs(y, t), (0.0, t_end), &w0, Some(&t_eval), &ode)?;

    let env_coeffs = envelope_coeff_matrix(response_env, &base.grid, n)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &t) in t_eval.iter().enumerate() {
        let theta = (omega0 * t).rem_euclid(TWO_PI);
        let carrier = Complex64::from_polar(1.0, omega_f * t);
        let predicted = eval_envelope(&env_coeffs, &base.grid, theta);
        for r in 0..n {
            let measured = (forced.states[i][r] - unforced.states[i][r]) / epsilon;
            let p = (predicted[r] * carrier).re;
            num += (measured - p) * (measured - p);
            den += p * p;
        }
    }
    if den <= 0.0 {
        return Err(TsrError::InvalidConfiguration("linear prediction is identically zero".into()));
    }
    Ok(PerturbationReport {
        rel_error: (num / den).sqrt(),
        epsilon,
        settle_periods: settle,
        window_periods: window,
    })
}
