//! Neutral and adjoint Floquet modes of the time-spectral Jacobian, their
//! biorthonormalization, phase modulation to other frequencies, and the
//! eigenvalue-ladder diagnostics.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::baseflow::BaseFlow;
use crate::error::{Result, TsrError};
use crate::grid::SpectralGrid;
use crate::linalg::{self, to_complex_vector};
use crate::resolvent::{assemble_tsr, InputMode, TsrOperator};
use crate::system::SystemModel;

/// Biorthonormalized neutral/adjoint pair with residual diagnostics.
///
/// `p0` is the orbit tangent (real-valued in practice, stored complex for
/// uniformity) with unit 2-norm; `q0` is scaled so `<q0, p0> = 1`.
#[derive(Debug, Clone)]
pub struct FloquetPair {
    pub p0: DVector<Complex64>,
    pub q0: DVector<Complex64>,
    /// `||J p0|| / ||p0||`.
    pub neutral_residual: f64,
    /// `||J^H q0|| / ||q0||`.
    pub adjoint_residual: f64,
    pub pairing: Complex64,
}

/// Orbit tangent `p0 = omega0 (D (x) I) w_bar`, normalized, with the residual
/// `||J p0||` reported as a resolution diagnostic.
pub fn neutral_mode(base: &BaseFlow, sys: &SystemModel) -> Result<(DVector<Complex64>, f64)> {
    if !sys.autonomous {
        return Err(TsrError::InvalidConfiguration(
            "the neutral mode is the orbit tangent of an autonomous system".into(),
        ));
    }
    let op = tangent_operator(base, sys)?;
    let xc = to_complex_vector(&base.states);
    let mut p0 = linalg::apply_kron_diff(&to_diff_c(&base.grid), &xc, base.n);
    p0 *= Complex64::new(base.grid.omega0(), 0.0);
    let norm = p0.norm();
    if norm < 1e-14 {
        return Err(TsrError::SingularOperator("orbit tangent is zero; the orbit is degenerate".into()));
    }
    p0 /= Complex64::new(norm, 0.0);
    let residual = op.apply_j(&p0).norm();
    Ok((p0, residual))
}

fn to_diff_c(grid: &SpectralGrid) -> DMatrix<Complex64> {
    linalg::to_complex_matrix(grid.diff())
}

fn tangent_operator(base: &BaseFlow, sys: &SystemModel) -> Result<TsrOperator> {
    // omega_f = 0: only the J action is used here.
    assemble_tsr(base, sys, 0.0, InputMode::QuasiPeriodic)
}

/// Diagnostics of the bordered adjoint solve.
#[derive(Debug, Clone)]
pub struct AdjointDiagnostics {
    pub gmres_iterations: usize,
    pub gmres_residual: f64,
    /// Lagrange multiplier of the bordered system; zero when `J` is exactly
    /// singular.
    pub lambda: Complex64,
}

/// Adjoint neutral mode via the bordered normal system
/// `[[J J^H, -p0], [p0^H, 0]] [q; lambda] = [0; 1]`, solved by restarted
/// GMRES where the product `J J^H` is applied as two matrix-vector products.
/// The result is scaled so `<q0, p0> = 1` with real positive pairing phase.
pub fn adjoint_mode(
    base: &BaseFlow,
    sys: &SystemModel,
    p0: &DVector<Complex64>,
) -> Result<(DVector<Complex64>, AdjointDiagnostics)> {
    let op = tangent_operator(base, sys)?;
    let n_tot = op.state_size();
    if p0.len() != n_tot {
        return Err(TsrError::DimensionMismatch(format!(
            "p0 has length {}, expected {}",
            p0.len(),
            n_tot
        )));
    }

    let apply = |z: &DVector<Complex64>| {
        let q = z.rows(0, n_tot).clone_owned();
        let lambda = z[n_tot];
        let mut top = op.apply_j(&op.apply_j_adjoint(&q));
        top.axpy(-lambda, p0, Complex64::new(1.0, 0.0));
        let mut out = DVector::zeros(n_tot + 1);
        out.rows_mut(0, n_tot).copy_from(&top);
        out[n_tot] = p0.dotc(&q);
        out
    };
    let mut rhs = DVector::<Complex64>::zeros(n_tot + 1);
    rhs[n_tot] = Complex64::new(1.0, 0.0);

    let sol = linalg::gmres(
        apply,
        None::<fn(&DVector<Complex64>) -> DVector<Complex64>>,
        None::<fn(&DVector<Complex64>) -> DVector<Complex64>>,
        &rhs,
        50,
        2000,
        1e-10,
        "bordered adjoint-mode solve",
    )?;

    let mut q0 = sol.x.rows(0, n_tot).clone_owned();
    let lambda = sol.x[n_tot];
    let pairing = q0.dotc(p0);
    if pairing.norm() < 1e-14 {
        return Err(TsrError::SingularOperator("adjoint mode is orthogonal to the tangent".into()));
    }
    // One combined phase fix + normalization: <s q0, p0> = conj(s) <q0, p0> = 1.
    let s = (Complex64::new(1.0, 0.0) / pairing).conj();
    q0 *= s;
    Ok((
        q0,
        AdjointDiagnostics {
            gmres_iterations: sol.iterations,
            gmres_residual: sol.rel_residual,
            lambda,
        },
    ))
}

/// Compute and biorthonormalize the neutral/adjoint pair in one call.
pub fn floquet_pair(base: &BaseFlow, sys: &SystemModel) -> Result<FloquetPair> {
    let (p0, neutral_residual) = neutral_mode(base, sys)?;
    let (q0, _) = adjoint_mode(base, sys, &p0)?;
    let op = tangent_operator(base, sys)?;
    let adjoint_residual = op.apply_j_adjoint(&q0).norm() / q0.norm();
    let pairing = q0.dotc(&p0);
    Ok(FloquetPair { p0, q0, neutral_residual, adjoint_residual, pairing })
}

/// Modulate a stacked mode with the carrier phase: block `j` is multiplied by
/// `exp(-i ratio theta_j)`. For integer ratios this maps between the rungs of
/// the eigenvalue ladder.
pub fn modulated_mode(v: &DVector<Complex64>, grid: &SpectralGrid, n: usize, ratio: f64) -> DVector<Complex64> {
    let mut out = v.clone();
    for (j, &theta) in grid.thetas().iter().enumerate() {
        let phase = Complex64::from_polar(1.0, -ratio * theta);
        for i in 0..n {
            out[j * n + i] *= phase;
        }
    }
    out
}

/// Residuals `||J (E_k p0) - i k omega0 (E_k p0)||` for `k = 0..=k_max`,
/// checking the shifted-eigenpair structure rung by rung.
pub fn eigen_ladder_check(base: &BaseFlow, sys: &SystemModel, k_max: usize) -> Result<Vec<f64>> {
    if k_max > (base.grid.n_ts() - 1) / 2 {
        return Err(TsrError::InvalidConfiguration(format!(
            "ladder rung {} is beyond the grid resolution {}",
            k_max,
            (base.grid.n_ts() - 1) / 2
        )));
    }
    let (p0, _) = neutral_mode(base, sys)?;
    let op = tangent_operator(base, sys)?;
    let omega0 = base.grid.omega0();
    let mut out = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let ek = modulated_mode(&p0, &base.grid, base.n, k as f64);
        let mut r = op.apply_j(&ek);
        r.axpy(Complex64::new(0.0, -(k as f64) * omega0), &ek, Complex64::new(1.0, 0.0));
        out.push(r.norm() / ek.norm());
    }
    Ok(out)
}

/// Centers and spreads of the two leading eigenvalue ladders of `J`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LadderSummary {
    pub neutral_center: f64,
    pub neutral_spread: f64,
    pub stable_center: f64,
    pub stable_spread: f64,
}

/// Group the dense spectrum of `J` into ladders by real part (each Floquet
/// exponent contributes `n_ts` shifted copies) and summarize the two leading
/// groups. Assumes the exponent real parts are separated, which holds for the
/// planar limit cycles treated here.
pub fn floquet_ladders(base: &BaseFlow, sys: &SystemModel) -> Result<LadderSummary> {
    let op = tangent_operator(base, sys)?;
    let eigs = op.dense_j().complex_eigenvalues();
    let n_ts = base.grid.n_ts();
    let mut re: Vec<f64> = eigs.iter().map(|z| z.re).collect();
    re.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if re.len() < 2 * n_ts {
        return Err(TsrError::InvalidConfiguration(
            "ladder summary needs at least two exponent groups".into(),
        ));
    }
    let summarize = |chunk: &[f64]| {
        let center = chunk.iter().sum::<f64>() / chunk.len() as f64;
        let spread = chunk.iter().map(|r| (r - center).abs()).fold(0.0, f64::max);
        (center, spread)
    };
    let (neutral_center, neutral_spread) = summarize(&re[..n_ts]);
    let (stable_center, stable_spread) = summarize(&re[n_ts..2 * n_ts]);
    Ok(LadderSummary { neutral_center, neutral_spread, stable_center, stable_spread })
}

/// Flat serialization record for reporting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FloquetPairRecord {
    pub neutral_residual: f64,
    pub adjoint_residual: f64,
    pub pairing: [f64; 2],
    pub p0: Vec<[f64; 2]>,
    pub q0: Vec<[f64; 2]>,
}

impl From<&FloquetPair> for FloquetPairRecord {
    fn from(p: &FloquetPair) -> Self {
        Self {
            neutral_residual: p.neutral_residual,
            adjoint_residual: p.adjoint_residual,
            pairing: [p.pairing.re, p.pairing.im],
            p0: p.p0.iter().map(|z| [z.re, z.im]).collect(),
            q0: p.q0.iter().map(|z| [z.re, z.im]).collect(),
        }
    }
}
