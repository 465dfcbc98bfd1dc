//! Harmonic (frequency-domain) assembly of the same linearized envelope
//! operator: block rows indexed by envelope harmonic, coupled through the
//! Fourier coefficients of the periodic Jacobian. A unitary DFT maps the
//! collocation stacking onto this one, which pins down the equivalence test.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::baseflow::BaseFlow;
use crate::error::{Result, TsrError};
use crate::grid::centered_dft_matrix;
use crate::linalg::{fit_line, to_complex_matrix};
use crate::resolvent::{assemble_tsr, solve_full_resolvent, InputMode};
use crate::system::SystemModel;

/// Block-Toeplitz frequency-domain operator: block row `a` (harmonic
/// `k_a = a - n_har`) carries `i (omega_f + k_a omega0) I - Jhat_0` on the
/// diagonal and `-Jhat_{k_a - k_b}` off it.
#[derive(Debug, Clone)]
pub struct HrOperator {
    /// Truncation level: harmonics -n_har..=n_har are retained.
    pub n_har: usize,
    /// `Jhat_l` for l = 0..jac_coeffs.len(); negative indices follow from
    /// realness, `Jhat_{-l} = conj(Jhat_l)`, couplings beyond the list are
    /// zero.
    pub jac_coeffs: Vec<DMatrix<Complex64>>,
    pub omega_f: f64,
    pub omega0: f64,
    pub n: usize,
    pub m: usize,
    b: DMatrix<f64>,
}

impl HrOperator {
    pub fn n_blocks(&self) -> usize {
        2 * self.n_har + 1
    }

    pub fn state_size(&self) -> usize {
        self.n_blocks() * self.n
    }

    fn jhat(&self, l: i64) -> Option<&DMatrix<Complex64>> {
        self.jac_coeffs.get(l.unsigned_abs() as usize)
    }

    /// Dense realization of the block-Toeplitz matrix.
    pub fn dense_matrix(&self) -> DMatrix<Complex64> {
        let n = self.n;
        let nb = self.n_blocks();
        let kmax = self.n_har as i64;
        let mut out = DMatrix::<Complex64>::zeros(nb * n, nb * n);
        for a in 0..nb {
            let ka = a as i64 - kmax;
            for b in 0..nb {
                let delta = ka - (b as i64 - kmax);
                if let Some(coeff) = self.jhat(delta) {
                    let conj = delta < 0;
                    for r in 0..n {
                        for c in 0..n {
                            let v = if conj { coeff[(r, c)].conj() } else { coeff[(r, c)] };
                            out[(a * n + r, b * n + c)] -= v;
                        }
                    }
                }
            }
            let shift = Complex64::new(0.0, self.omega_f + ka as f64 * self.omega0);
            for i in 0..n {
                out[(a * n + i, a * n + i)] += shift;
            }
        }
        out
    }

    /// Block-diagonal input map: each harmonic of the forcing envelope feeds
    /// the matching harmonic of the response.
    pub fn dense_b(&self) -> DMatrix<f64> {
        let nb = self.n_blocks();
        let mut out = DMatrix::zeros(nb * self.n, nb * self.m);
        for blk in 0..nb {
            for r in 0..self.n {
                for c in 0..self.m {
                    out[(blk * self.n + r, blk * self.m + c)] = self.b[(r, c)];
                }
            }
        }
        out
    }
}

/// Fourier coefficients `Jhat_l` of the periodic Jacobian for l = 0..=max_ell,
/// from a DFT of the collocation samples. Negative harmonics follow from
/// realness. Coefficients beyond the grid's resolvable band would alias, so
/// they are refused.
pub fn jacobian_fourier_coeffs(
    base: &BaseFlow,
    sys: &SystemModel,
    max_ell: usize,
) -> Result<Vec<DMatrix<Complex64>>> {
    let n_ts = base.grid.n_ts();
    let k_max = (n_ts - 1) / 2;
    if max_ell > k_max {
        return Err(TsrError::InvalidConfiguration(format!(
            "harmonic {max_ell} exceeds the band resolvable on {n_ts} collocation points ({k_max})"
        )));
    }
    let n = sys.n;
    let samples: Vec<DMatrix<f64>> = (0..n_ts)
        .map(|j| {
            let t = base.grid.thetas()[j] / base.grid.omega0();
            sys.jacobian(&base.state_block(j).clone_owned(), t)
        })
        .collect();
    let mut coeffs = Vec::with_capacity(max_ell + 1);
    for k in 0..=max_ell {
        let mut c = DMatrix::<Complex64>::zeros(n, n);
        for (j, s) in samples.iter().enumerate() {
            let phase = Complex64::from_polar(1.0, -(k as f64) * base.grid.thetas()[j]);
            for r in 0..n {
                for q in 0..n {
                    c[(r, q)] += phase * s[(r, q)];
                }
            }
        }
        c /= Complex64::new(n_ts as f64, 0.0);
        coeffs.push(c);
    }
    Ok(coeffs)
}

/// Coefficients for every coupling index of a matched-truncation operator
/// (`n_har = (n_ts - 1) / 2`), using the n_ts-periodicity of the DFT:
/// `Jhat_l = Jhat_{l - n_ts}` for l beyond the resolvable band. An operator
/// assembled from this list is exactly unitarily equivalent to the
/// collocation operator on the same grid, corner couplings included.
pub fn dft_periodic_coeffs(base: &BaseFlow, sys: &SystemModel) -> Result<Vec<DMatrix<Complex64>>> {
    let n_ts = base.grid.n_ts();
    let n_har = (n_ts - 1) / 2;
    let resolved = jacobian_fourier_coeffs(base, sys, n_har)?;
    let mut out = Vec::with_capacity(2 * n_har + 1);
    for l in 0..=(2 * n_har) {
        if l <= n_har {
            out.push(resolved[l].clone());
        } else {
            // l - n_ts is in [-n_har, -1]; realness gives the conjugate.
            out.push(resolved[n_ts - l].map(|z| z.conj()));
        }
    }
    Ok(out)
}

/// Assemble the truncated frequency-domain operator from a Jacobian
/// coefficient list. The list must cover at least the within-band couplings
/// `|l| <= n_har`; anything longer sharpens the off-band corners, anything
/// absent couples as zero.
pub fn assemble_hr(
    coeffs: &[DMatrix<Complex64>],
    omega_f: f64,
    omega0: f64,
    n_har: usize,
    b: &DMatrix<f64>,
) -> Result<HrOperator> {
    if coeffs.len() < n_har + 1 {
        return Err(TsrError::InvalidConfiguration(format!(
            "insufficient coefficients: {} provided, truncation level {} needs couplings to |l| = {}",
            coeffs.len(),
            n_har,
            n_har
        )));
    }
    let n = coeffs[0].nrows();
    if coeffs.iter().any(|c| c.nrows() != n || c.ncols() != n) || b.nrows() != n {
        return Err(TsrError::DimensionMismatch(
            "coefficient blocks and input matrix must share the state dimension".into(),
        ));
    }
    Ok(HrOperator {
        n_har,
        jac_coeffs: coeffs.to_vec(),
        omega_f,
        omega0,
        n,
        m: b.ncols(),
        b: b.clone(),
    })
}

/// Peak amplification over unit-coefficient-norm forcing envelopes: the
/// largest singular value of `L_HR^-1 B_HR`, matching the collocation
/// operator's quasi-periodic input convention. Also returns the leading
/// response vector for alignment checks.
pub fn hr_gain(op: &HrOperator) -> Result<(f64, DVector<Complex64>)> {
    let lu = op.dense_matrix().lu();
    let b = to_complex_matrix(&op.dense_b());
    let resolvent = lu
        .solve(&b)
        .ok_or_else(|| TsrError::SingularOperator(
            "frequency-domain operator is singular; resonant self-oscillating cases need the projected formulation".into(),
        ))?;
    let svd = resolvent.svd(true, false);
    let gain = svd.singular_values[0];
    let u = svd
        .u
        .as_ref()
        .expect("requested U")
        .column(0)
        .clone_owned();
    Ok((gain, u))
}

/// Unitary map from the collocation stacking to the harmonic stacking:
/// the centered DFT acting on the block index, identity on the state index.
pub fn ts_to_hr_map(n_ts: usize, n: usize) -> Result<DMatrix<Complex64>> {
    let f = centered_dft_matrix(n_ts)?;
    let eye = DMatrix::<Complex64>::identity(n, n);
    Ok(f.kronecker(&eye))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub gain_ts: f64,
    pub gain_hr: f64,
    /// `|gain_ts - gain_hr| / gain_hr`.
    pub gain_deviation: f64,
    /// `|<u_hr, F u_ts>|` for the unit leading response modes; 1 means the
    /// two formulations produce the same mode up to phase.
    pub vector_alignment: f64,
}

/// Solve the same quasi-periodic gain problem in both stackings at matched
/// truncation (`n_har = (n_ts - 1) / 2`) and report the agreement. The base
/// flow must already live on an `n_ts`-point grid.
pub fn equivalence_check(
    base: &BaseFlow,
    sys: &SystemModel,
    omega_f: f64,
    n_ts: usize,
) -> Result<EquivalenceReport> {
    if base.grid.n_ts() != n_ts {
        return Err(TsrError::InvalidConfiguration(format!(
            "base flow is resolved on {} collocation points, not {n_ts}",
            base.grid.n_ts()
        )));
    }
    let n_har = (n_ts - 1) / 2;
    let ts_op = assemble_tsr(base, sys, omega_f, InputMode::QuasiPeriodic)?;
    let ts_sol = solve_full_resolvent(&ts_op)?;
    let coeffs = dft_periodic_coeffs(base, sys)?;
    let hr_op = assemble_hr(&coeffs, omega_f, base.grid.omega0(), n_har, &sys.b)?;
    let (gain_hr, u_hr) = hr_gain(&hr_op)?;
    let map = ts_to_hr_map(n_ts, sys.n)?;
    let mapped = &map * &ts_sol.response_mode;
    let vector_alignment = u_hr.dotc(&mapped).norm();
    Ok(EquivalenceReport {
        gain_ts: ts_sol.gain,
        gain_hr,
        gain_deviation: (ts_sol.gain - gain_hr).abs() / gain_hr,
        vector_alignment,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub n_ts: Vec<usize>,
    pub gains: Vec<f64>,
    pub ground_truth_n_ts: usize,
    pub ground_truth_gain: f64,
    pub rel_errors: Vec<f64>,
    /// Slope of ln(error) against n_ts; a negative value of meaningful size
    /// indicates exponential (spectral) decay.
    pub fitted_rate: f64,
}

/// Harmonic-input gain at a ladder of grid resolutions against a much finer
/// ground truth, with the decay rate of the relative error fitted
/// log-linearly in n_ts. Errors at the rounding floor are clamped so an
/// exact hit cannot dominate the fit. The base flow is rebuilt per
/// resolution by the supplied closure.
pub fn convergence_study(
    base_builder: impl Fn(usize) -> Result<BaseFlow>,
    sys: &SystemModel,
    omega_f: f64,
    nts_list: &[usize],
    ground_truth_nts: usize,
) -> Result<ConvergenceReport> {
    if nts_list.len() < 2 {
        return Err(TsrError::InvalidConfiguration(
            "convergence study needs at least two resolutions".into(),
        ));
    }
    if let Some(&bad) = nts_list.iter().chain([&ground_truth_nts]).find(|&&n| n % 2 == 0 || n < 3) {
        return Err(TsrError::InvalidGrid(format!(
            "convergence resolutions must be odd and at least 3, got {bad}"
        )));
    }
    if let Some(&biggest) = nts_list.iter().max() {
        if ground_truth_nts < biggest {
            return Err(TsrError::InvalidConfiguration(format!(
                "ground-truth resolution {ground_truth_nts} is below the study maximum {biggest}"
            )));
        }
    }
    let gain_at = |n_ts: usize| -> Result<f64> {
        let base = base_builder(n_ts)?;
        let op = assemble_tsr(&base, sys, omega_f, InputMode::Harmonic)?;
        Ok(solve_full_resolvent(&op)?.gain)
    };
    let ground_truth_gain = gain_at(ground_truth_nts)?;
    let mut gains = Vec::with_capacity(nts_list.len());
    let mut rel_errors = Vec::with_capacity(nts_list.len());
    for &n_ts in nts_list {
        let g = gain_at(n_ts)?;
        rel_errors.push((g - ground_truth_gain).abs() / ground_truth_gain.abs());
        gains.push(g);
    }
    let xs: Vec<f64> = nts_list.iter().map(|&n| n as f64).collect();
    let ys: Vec<f64> = rel_errors.iter().map(|&e| e.max(1e-16).ln()).collect();
    let (fitted_rate, _) = fit_line(&xs, &ys);
    Ok(ConvergenceReport {
        n_ts: nts_list.to_vec(),
        gains,
        ground_truth_n_ts: ground_truth_nts,
        ground_truth_gain,
        rel_errors,
        fitted_rate,
    })
}
