// Temporary measurement probe; not part of the shipped suite.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::time::Instant;
use tsr::baseflow::{cgl_plane_wave, solve_vdp_orbit, trivial_base_flow, BaseFlow};
use tsr::floquet::{eigen_ladder_check, floquet_ladders, floquet_pair, modulated_mode};
use tsr::grid::SpectralGrid;
use tsr::harmonic::{convergence_study, equivalence_check};
use tsr::resolvent::{assemble_tsr, smallest_singular_value, solve_full_resolvent, InputMode};
use tsr::system::{cgl_system, mathieu_system, vdp_system, CglParams, MathieuParams, SystemModel, VdpParams};
use tsr::transverse::{
    build_fd_preconditioner, dense_projected_resolvent, reconstruct_from_transverse,
    transverse_svd, ObliqueProjector, TransverseSolveConfig,
};
use tsr::validation::{forcing_envelope, measure_gain, projected_forcing_envelope, MeasureOpts};

fn circle_system() -> SystemModel {
    let b = DMatrix::<f64>::identity(2, 2);
    SystemModel::new(
        "circle",
        2,
        true,
        Some(1.0),
        b,
        Box::new(|w, _| {
            let r2 = w[0] * w[0] + w[1] * w[1];
            DVector::from_column_slice(&[w[0] * (1.0 - r2) - w[1], w[1] * (1.0 - r2) + w[0]])
        }),
        Box::new(|w, _| {
            let (x, y) = (w[0], w[1]);
            DMatrix::from_row_slice(
                2,
                2,
                &[
                    1.0 - 3.0 * x * x - y * y,
                    -2.0 * x * y - 1.0,
                    -2.0 * x * y + 1.0,
                    1.0 - x * x - 3.0 * y * y,
                ],
            )
        }),
    )
    .unwrap()
}

fn circle_base(n_ts: usize) -> BaseFlow {
    let grid = SpectralGrid::new(n_ts, 1.0).unwrap();
    let mut states = DVector::zeros(2 * n_ts);
    for (j, &th) in grid.thetas().iter().enumerate() {
        states[2 * j] = th.cos();
        states[2 * j + 1] = th.sin();
    }
    let sys = circle_system();
    let resid = tsr::baseflow::collocation_residual(&sys, &grid, &states);
    BaseFlow { grid, states, n: 2, period: 2.0 * std::f64::consts::PI, collocation_residual_norm: resid }
}

#[test]
fn probe_vdp_orbit() {
    let t0 = Instant::now();
    for n_ts in [31usize, 41, 83, 101] {
        let base = solve_vdp_orbit(&VdpParams::default(), n_ts).unwrap();
        println!(
            "vdp n_ts={n_ts}: T0={:.12}, resid={:.3e}",
            base.period, base.collocation_residual_norm
        );
    }
    println!("probe_vdp_orbit took {:?}", t0.elapsed());
}

#[test]
fn probe_vdp_floquet() {
    let sys = vdp_system(&VdpParams::default()).unwrap();
    for n_ts in [31usize, 101] {
        let t0 = Instant::now();
        let base = solve_vdp_orbit(&VdpParams::default(), n_ts).unwrap();
        let pair = floquet_pair(&base, &sys).unwrap();
        println!(
            "vdp n_ts={n_ts}: neutral_resid={:.3e}, adjoint_resid={:.3e}, pairing={:.3e}+{:.3e}i ({:?})",
            pair.neutral_residual,
            pair.adjoint_residual,
            pair.pairing.re,
            pair.pairing.im,
            t0.elapsed()
        );
        let ladder = eigen_ladder_check(&base, &sys, 3).unwrap();
        println!("  ladder residuals k=0..3: {:?}", ladder);
        let lad = floquet_ladders(&base, &sys).unwrap();
        println!(
            "  neutral center={:.6e} spread={:.3e}; stable center={:.6} spread={:.3e}",
            lad.neutral_center, lad.neutral_spread, lad.stable_center, lad.stable_spread
        );
    }
}

#[test]
fn probe_circle_floquet() {
    let sys = circle_system();
    let base = circle_base(17);
    println!("circle resid={:.3e}", base.collocation_residual_norm);
    let pair = floquet_pair(&base, &sys).unwrap();
    println!(
        "circle: neutral={:.3e}, adjoint={:.3e}, pairing={:.3e}+{:.3e}i",
        pair.neutral_residual, pair.adjoint_residual, pair.pairing.re, pair.pairing.im
    );
    // pointwise pairing across blocks
    let n_ts = 17;
    for j in [0usize, 5, 11] {
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..2 {
            acc += pair.q0[(j * 2 + i)].conj() * pair.p0[(j * 2 + i)];
        }
        println!("  pointwise pairing block {j}: {:.6e}+{:.6e}i (1/n_ts={:.6e})", acc.re, acc.im, 1.0 / n_ts as f64);
    }
    let ladder = eigen_ladder_check(&base, &sys, 7).unwrap();
    println!("  circle ladder k=0..7: {:?}", ladder);
}

#[test]
fn probe_equivalence() {
    let p = MathieuParams::default();
    let sys = mathieu_system(&p).unwrap();
    let grid = SpectralGrid::new(5, p.omega0).unwrap();
    let base = trivial_base_flow(&sys, &grid).unwrap();
    let rep = equivalence_check(&base, &sys, 1.3, 5).unwrap();
    println!(
        "mathieu equiv nts=5 wf=1.3: dev={:.3e}, align={:.12}, gains ts={:.9} hr={:.9}",
        rep.gain_deviation, rep.vector_alignment, rep.gain_ts, rep.gain_hr
    );

    let vsys = vdp_system(&VdpParams::default()).unwrap();
    let vbase = solve_vdp_orbit(&VdpParams::default(), 11).unwrap();
    let wf = 0.4 * vbase.grid.omega0();
    let rep2 = equivalence_check(&vbase, &vsys, wf, 11).unwrap();
    println!(
        "vdp equiv nts=11 wf=0.4w0: dev={:.3e}, align={:.12}",
        rep2.gain_deviation, rep2.vector_alignment
    );
}

#[test]
fn probe_convergence() {
    let p = MathieuParams::default();
    let sys = mathieu_system(&p).unwrap();
    let om0 = p.omega0;
    let builder = |n_ts: usize| {
        let grid = SpectralGrid::new(n_ts, om0)?;
        trivial_base_flow(&mathieu_system(&MathieuParams::default()).unwrap(), &grid)
    };
    let wf = 2f64.sqrt() * om0;
    let t0 = Instant::now();
    let rep = convergence_study(builder, &sys, wf, &[5, 9, 13, 17, 21, 25, 29, 33, 37, 41], 501).unwrap();
    println!("mathieu convergence ({:?}):", t0.elapsed());
    for (n, e) in rep.n_ts.iter().zip(rep.rel_errors.iter()) {
        println!("  n_ts={n}: rel_err={e:.3e}");
    }
    println!("  slope={:.4}, truth gain={:.9}", rep.fitted_rate, rep.ground_truth_gain);
}

#[test]
fn probe_cgl() {
    let p = CglParams::default();
    println!("cgl omega0={:.7}, amp={:.7}", p.plane_wave_frequency(), p.plane_wave_amplitude());
    let grid = SpectralGrid::new(21, p.plane_wave_frequency()).unwrap();
    let base = cgl_plane_wave(&p, &grid).unwrap();
    println!("cgl plane wave resid={:.3e}", base.collocation_residual_norm);
    let sys = cgl_system(&p).unwrap();
    let t0 = Instant::now();
    let pair = floquet_pair(&base, &sys).unwrap();
    println!(
        "cgl floquet: neutral={:.3e}, adjoint={:.3e} ({:?})",
        pair.neutral_residual,
        pair.adjoint_residual,
        t0.elapsed()
    );
}

#[test]
fn probe_mathieu_gain_measurement() {
    let p = MathieuParams::default();
    let sys = mathieu_system(&p).unwrap();
    let grid = SpectralGrid::new(5, p.omega0).unwrap();
    let base = trivial_base_flow(&sys, &grid).unwrap();
    let wf = 1.3;
    let op = assemble_tsr(&base, &sys, wf, InputMode::Harmonic).unwrap();
    let sol = solve_full_resolvent(&op).unwrap();
    let (env, fnorm) = forcing_envelope(&sol.forcing_mode, &sys.b, &grid).unwrap();
    let opts = MeasureOpts { slowest_decay_rate: Some(p.zeta), ..Default::default() };
    let t0 = Instant::now();
    let meas = measure_gain(&sys, &base, &env, fnorm, wf, &opts).unwrap();
    println!(
        "mathieu wf=1.3: tsr={:.9}, measured={:.9}, rel={:.3e}, settle={}, window={} ({:?})",
        sol.gain,
        meas.simulated_gain,
        (sol.gain - meas.simulated_gain).abs() / sol.gain,
        meas.settle_periods,
        meas.window_periods,
        t0.elapsed()
    );
}

#[test]
fn probe_vdp_transverse() {
    let p = VdpParams::default();
    let sys = vdp_system(&p).unwrap();
    for n_ts in [31usize, 61] {
        let base = solve_vdp_orbit(&p, n_ts).unwrap();
        let om0 = base.grid.omega0();
        let n = 2;
        let t0 = Instant::now();
        let pair = match floquet_pair(&base, &sys) {
            Ok(p) => p,
            Err(e) => {
                println!("n_ts={n_ts}: floquet_pair FAILED: {e}");
                continue;
            }
        };
        println!(
            "n_ts={n_ts}: pair neutral={:.2e} adjoint={:.2e} ({:?})",
            pair.neutral_residual,
            pair.adjoint_residual,
            t0.elapsed()
        );

        for ratio in [0.4f64, 0.7, 1.0, 1.3, 2.0] {
            let wf = ratio * om0;
            let op = assemble_tsr(&base, &sys, wf, InputMode::QuasiPeriodic).unwrap();
            let proj = ObliqueProjector::build(&pair, &base.grid, n, ratio).unwrap();
            let cfg = TransverseSolveConfig::default();
            let pre = build_fd_preconditioner(&op, &cfg).unwrap();
            let mut rng = <rand_chacha::ChaCha12Rng as rand::SeedableRng>::seed_from_u64(7);
            let sol = match transverse_svd(&op, &proj, Some(&pre), &base.states, &cfg, &mut rng) {
                Ok(s) => s,
                Err(e) => {
                    println!("  ratio={ratio}: transverse_svd FAILED: {e}");
                    continue;
                }
            };

            // pointwise zero-IC neutral coefficient of the steady response
            let eta = &sol.response_mode * Complex64::new(sol.gain, 0.0);
            let q0b = pair.q0.rows(0, n);
            let p0b = pair.p0.rows(0, n);
            let den: Complex64 = q0b.iter().zip(p0b.iter()).map(|(q, p)| q.conj() * p).sum();
            let num: Complex64 =
                q0b.iter().zip(eta.rows(0, n).iter()).map(|(q, e)| q.conj() * e).sum();
            let a = -num / den;
            let c_spec = drift_from_re(&eta, &pair, n);

            // carrier-comb cross term against the modulated neutral mode
            let p_mod = modulated_mode(&pair.p0, &base.grid, n, ratio);
            let x: Complex64 = p_mod.dotc(&eta); // sum conj(p_mod) .* eta
            let is_int = (ratio - ratio.round()).abs() < 1e-9;
            let cross_int = if is_int { 2.0 * (a.conj() * x).re } else { 0.0 };
            let p2 = (sol.gain * sol.gain
                + c_spec * c_spec
                + if is_int { 2.0 * c_spec * x.re } else { 0.0 })
            .max(0.0)
            .sqrt();
            let p3 = (sol.gain * sol.gain + a.norm_sqr() + cross_int).max(0.0).sqrt();

            let (env, fnorm) = projected_forcing_envelope(&op, &proj, &sol.forcing_mode).unwrap();
            let opts = MeasureOpts { slowest_decay_rate: Some(1.0), ..Default::default() };
            match measure_gain(&sys, &base, &env, fnorm, wf, &opts) {
                Ok(m) => println!(
                    "  ratio={ratio}: sigma={:.6} c={:+.4e} |a|={:.4e} X={:+.3e}{:+.3e}i meas={:.6} P2rel={:.2e} P3rel={:.2e}",
                    sol.gain,
                    c_spec,
                    a.norm(),
                    x.re,
                    x.im,
                    m.simulated_gain,
                    (p2 - m.simulated_gain).abs() / m.simulated_gain,
                    (p3 - m.simulated_gain).abs() / m.simulated_gain,
                ),
                Err(e) => println!("  ratio={ratio}: measure_gain failed: {e}"),
            }

            if ratio == 1.0 {
                match smallest_singular_value(&op) {
                    Ok(smin) => println!("    at resonance: sigma_min={:.3e}", smin),
                    Err(e) => println!("    at resonance: smin failed: {e}"),
                }
            }

            // steady-state decomposition at one off-resonance point: where does
            // the measured power beyond sigma^2 + |a|^2 live?
            if ratio == 0.4 {
                let opts2 = MeasureOpts { slowest_decay_rate: Some(1.0), ..Default::default() };
                let t_s = 5.0 * base.period;
                let n_dense = 400usize;
                let t_eval: Vec<f64> = (0..n_dense)
                    .map(|i| t_s + i as f64 / n_dense as f64 * 5.0 * base.period)
                    .collect();
                let run = tsr::validation::integrate_forced_envelope(
                    &sys, &base, &env, wf, *t_eval.last().unwrap(), Some(&t_eval), &opts2,
                )
                .unwrap();
                let mut pow_resp = 0.0;
                let mut pow_model = 0.0;
                let mut pow_err = 0.0;
                let mut c_min = f64::INFINITY;
                let mut c_max = 0.0f64;
                for (i, t) in run.times.iter().enumerate() {
                    let etat = tsr::validation::envelope_from_embedded(&run.states[i]);
                    let th = (om0 * t).rem_euclid(2.0 * std::f64::consts::PI);
                    let ev = tsr::resolvent::interp_envelope(&eta, &base.grid, n, th).unwrap();
                    let pv =
                        tsr::resolvent::interp_envelope(&pair.p0, &base.grid, n, th).unwrap();
                    let model = ev * Complex64::from_polar(1.0, wf * t) + &pv * a;
                    pow_resp += etat.norm_squared();
                    pow_model += model.norm_squared();
                    pow_err += (&etat - &model).norm_squared();
                    let (ct, _) = tsr::validation::transverse_component(&etat, &base, &pair, *t)
                        .unwrap();
                    c_min = c_min.min(ct.norm());
                    c_max = c_max.max(ct.norm());
                }
                println!(
                    "    decomp: avg|resp|2={:.6} avg|model|2={:.6} avg|err|2={:.3e} |c(t)| in [{:.4},{:.4}] vs |a|={:.4}",
                    pow_resp / n_dense as f64,
                    pow_model / n_dense as f64,
                    pow_err / n_dense as f64,
                    c_min,
                    c_max,
                    a.norm()
                );
            }
        }
    }
}

fn drift_from_re(eta: &DVector<Complex64>, pair: &tsr::floquet::FloquetPair, n: usize) -> f64 {
    let eta0 = DVector::from_fn(n, |i, _| eta[i].re);
    tsr::transverse::drift_coefficient(&eta0, pair, n).unwrap()
}

#[test]
fn probe_ladder_scaling() {
    let p = VdpParams::default();
    let sys = vdp_system(&p).unwrap();
    for n_ts in [31usize, 61, 101, 151, 201] {
        let t0 = Instant::now();
        let base = solve_vdp_orbit(&p, n_ts).unwrap();
        let (_, neutral_res) = tsr::floquet::neutral_mode(&base, &sys).unwrap();
        let ladder = eigen_ladder_check(&base, &sys, 3).unwrap();
        println!(
            "n_ts={n_ts}: neutral_res={:.3e} ladder={:?} ({:?})",
            neutral_res,
            ladder.iter().map(|r| format!("{r:.2e}")).collect::<Vec<_>>(),
            t0.elapsed()
        );
    }
}

#[test]
fn probe_cgl_pipeline() {
    let p = CglParams::default();
    let sys = cgl_system(&p).unwrap();
    let n = sys.n;
    let grid = SpectralGrid::new(21, p.plane_wave_frequency()).unwrap();
    let base = cgl_plane_wave(&p, &grid).unwrap();
    println!("cgl n={} residual={:.3e}", n, base.collocation_residual_norm);
    let t0 = Instant::now();
    let pair = floquet_pair(&base, &sys).unwrap();
    println!(
        "cgl pair: neutral={:.3e} adjoint={:.3e} pairing={:.6} ({:?})",
        pair.neutral_residual,
        pair.adjoint_residual,
        pair.pairing,
        t0.elapsed()
    );
    let om0 = grid.omega0();
    let ratio = 0.6;
    let wf = ratio * om0;
    let t0 = Instant::now();
    let op = assemble_tsr(&base, &sys, wf, InputMode::QuasiPeriodic).unwrap();
    let proj = ObliqueProjector::build(&pair, &grid, n, ratio).unwrap();
    let cfg = TransverseSolveConfig::default();
    let pre = build_fd_preconditioner(&op, &cfg).unwrap();
    let mut rng = <rand_chacha::ChaCha12Rng as rand::SeedableRng>::seed_from_u64(7);
    let sol = transverse_svd(&op, &proj, Some(&pre), &base.states, &cfg, &mut rng).unwrap();
    let (c, rec) = reconstruct_from_transverse(&sol, &pair, &proj, n).unwrap();
    println!("cgl ratio=0.6: sigma={:.6} c={:+.4e} G_rec={:.6} ({:?})", sol.gain, c, rec.gain, t0.elapsed());

    let t0 = Instant::now();
    let (env, fnorm) = projected_forcing_envelope(&op, &proj, &sol.forcing_mode).unwrap();
    let opts = MeasureOpts {
        settle_periods: Some(10),
        slowest_decay_rate: None,
        rtol: 1e-8,
        atol: 1e-10,
        ..Default::default()
    };
    match measure_gain(&sys, &base, &env, fnorm, wf, &opts) {
        Ok(m) => println!(
            "cgl measured={:.6} G_rec vs meas={:.3e} settle={} window={} ({:?})",
            m.simulated_gain,
            (rec.gain - m.simulated_gain).abs() / m.simulated_gain,
            m.settle_periods,
            m.window_periods,
            t0.elapsed()
        ),
        Err(e) => println!("cgl measure_gain failed: {e}"),
    }

    // nonlinear twin-run check at epsilon = 1e-3
    let t0 = Instant::now();
    let eta = &sol.response_mode * Complex64::new(sol.gain, 0.0);
    let mut recon_env = eta.clone();
    recon_env.axpy(Complex64::new(c, 0.0), &pair.p0, Complex64::new(1.0, 0.0));
    let opts_nl = MeasureOpts { settle_periods: Some(10), window_periods: Some(5), ..opts };
    match tsr::validation::nonlinear_perturbation_check(&sys, &base, &env, &recon_env, wf, 1e-3, &opts_nl) {
        Ok(rep) => println!("cgl nonlinear: rel={:.4e} ({:?})", rep.rel_error, t0.elapsed()),
        Err(e) => println!("cgl nonlinear failed: {e}"),
    }
}

#[test]
fn probe_strobo() {
    let p = VdpParams::default();
    let sys = vdp_system(&p).unwrap();
    let base = solve_vdp_orbit(&p, 31).unwrap();
    let om0 = base.grid.omega0();
    let n = 2;
    let pair = floquet_pair(&base, &sys).unwrap();
    let wf = om0;
    let op = assemble_tsr(&base, &sys, wf, InputMode::QuasiPeriodic).unwrap();
    let proj = ObliqueProjector::build(&pair, &base.grid, n, 1.0).unwrap();
    let cfg = TransverseSolveConfig::default();
    let pre = build_fd_preconditioner(&op, &cfg).unwrap();
    let mut rng = <rand_chacha::ChaCha12Rng as rand::SeedableRng>::seed_from_u64(7);
    let sol = transverse_svd(&op, &proj, Some(&pre), &base.states, &cfg, &mut rng).unwrap();

    let opts = MeasureOpts::default();
    let t_end = 40.0 * base.period;
    let t_eval: Vec<f64> = (0..=40).map(|k| k as f64 * base.period).collect();

    let (env_p, _) = projected_forcing_envelope(&op, &proj, &sol.forcing_mode).unwrap();
    let run_p =
        tsr::validation::integrate_forced_envelope(&sys, &base, &env_p, wf, t_end, Some(&t_eval), &opts)
            .unwrap();
    let series_p = tsr::validation::stroboscopic_series(&run_p, &base, &pair).unwrap();
    let slope_p = tsr::validation::stroboscopic_drift(&series_p);
    let vmax_p = series_p.iter().map(|s| s.v_norm).fold(0.0f64, f64::max);

    let (env_u, _) = forcing_envelope(&sol.forcing_mode, &sys.b, &base.grid).unwrap();
    let run_u =
        tsr::validation::integrate_forced_envelope(&sys, &base, &env_u, wf, t_end, Some(&t_eval), &opts)
            .unwrap();
    let series_u = tsr::validation::stroboscopic_series(&run_u, &base, &pair).unwrap();
    let slope_u = tsr::validation::stroboscopic_drift(&series_u);

    println!(
        "strobo: projected slope={:.4e} (bound {:.4e}) unprojected slope={:.4e} ratio={:.1}",
        slope_p,
        1e-3 * vmax_p,
        slope_u,
        slope_u.abs() / slope_p.abs().max(1e-300)
    );
}

#[test]
fn probe_isolate() {
    let p = VdpParams::default();
    let sys = vdp_system(&p).unwrap();
    let tau = std::f64::consts::TAU;
    for n_ts in [31usize, 61] {
        let base = solve_vdp_orbit(&p, n_ts).unwrap();
        let om0 = base.grid.omega0();
        let n = 2usize;
        let pair = floquet_pair(&base, &sys).unwrap();
        let pairing_stacked = pair.q0.dotc(&pair.p0);
        println!(
            "n_ts={n_ts}: |q0|={:.4} |p0|={:.4} <q0,p0>={:.4e}{:+.4e}i",
            pair.q0.norm(),
            pair.p0.norm(),
            pairing_stacked.re,
            pairing_stacked.im
        );
        for ratio in [0.3f64, 0.4, 0.55, 0.7, 0.85, 1.0, 1.15, 1.3, 1.6, 2.0, 2.2] {
            let wf = ratio * om0;
            let op = assemble_tsr(&base, &sys, wf, InputMode::QuasiPeriodic).unwrap();
            let proj = ObliqueProjector::build(&pair, &base.grid, n, ratio).unwrap();
            let cfg = TransverseSolveConfig::default();
            let pre = build_fd_preconditioner(&op, &cfg).unwrap();
            let mut rng = <rand_chacha::ChaCha12Rng as rand::SeedableRng>::seed_from_u64(7);
            let sol = match transverse_svd(&op, &proj, Some(&pre), &base.states, &cfg, &mut rng) {
                Ok(s) => s,
                Err(e) => {
                    println!("  ratio={ratio}: transverse_svd FAILED: {e}");
                    continue;
                }
            };
            let eta = &sol.response_mode * Complex64::new(sol.gain, 0.0);

            // adjoint eigen-residual of the modulated mode under the actual operator
            let k_star = ratio.round();
            let delta = wf - k_star * om0;
            let q_mod = modulated_mode(&pair.q0, &base.grid, n, ratio);
            let p_mod = modulated_mode(&pair.p0, &base.grid, n, ratio);
            let mut adj_r = op.apply_l_adjoint(&q_mod);
            adj_r.axpy(Complex64::new(0.0, delta), &q_mod, Complex64::new(1.0, 0.0));
            let qp = q_mod.dotc(&p_mod);

            // dense unprojected solve and the exact two-channel model
            let pbv = tsr::transverse::apply_projector(
                &proj,
                &op.apply_b(&sol.forcing_mode).unwrap(),
                false,
            );
            let x_dense = op.dense_l().lu().solve(&pbv).unwrap();
            let gamma = q_mod.dotc(&x_dense) / qp;

            // pointwise zero-IC coefficient from the full particular
            let q0b = pair.q0.rows(0, n);
            let p0b = pair.p0.rows(0, n);
            let den: Complex64 = q0b.iter().zip(p0b.iter()).map(|(q, e)| q.conj() * e).sum();
            let num: Complex64 =
                q0b.iter().zip(x_dense.rows(0, n).iter()).map(|(q, e)| q.conj() * e).sum();
            let a_full = -num / den;
            let num_s: Complex64 =
                q0b.iter().zip(eta.rows(0, n).iter()).map(|(q, e)| q.conj() * e).sum();
            let a_sig = -num_s / den;

            let is_int = (ratio - ratio.round()).abs() < 1e-9;
            let dc = if is_int {
                2.0 * (a_full.conj() * p_mod.dotc(&x_dense)).re
            } else {
                0.0
            };
            let g_true = (x_dense.norm_squared() + a_full.norm_sqr() + dc).max(0.0).sqrt();

            // pinned reconstruction formula against the modulated neutral mode,
            // in the current gauge and in the real-drift gauge
            let y = eta.dotc(&p_mod); // <eta, p_mod> conj-linear in eta
            let c_cur = a_sig.re;
            let g_cur = (sol.gain * sol.gain + c_cur * c_cur + 2.0 * c_cur * y.re)
                .max(0.0)
                .sqrt();
            let phi = -a_sig.arg(); // gauge rotation making the drift coefficient real
            let c_rg = a_sig.norm();
            let g_rg = (sol.gain * sol.gain
                + c_rg * c_rg
                + 2.0 * c_rg * (Complex64::from_polar(1.0, -phi) * y).re)
                .max(0.0)
                .sqrt();
            // ceiling: fully complex neutral coefficient
            let g_cx = {
                let mut recon = eta.clone();
                recon.axpy(a_sig, &p_mod, Complex64::new(1.0, 0.0));
                recon.norm()
            };

            let (c_ship, rec) = reconstruct_from_transverse(&sol, &pair, &proj, n).unwrap();

            let (env, fnorm) = projected_forcing_envelope(&op, &proj, &sol.forcing_mode).unwrap();
            let opts = MeasureOpts { slowest_decay_rate: Some(1.0), ..Default::default() };
            match measure_gain(&sys, &base, &env, fnorm, wf, &opts) {
                Ok(m) => {
                    let g = m.simulated_gain;
                    println!(
                        "  ratio={ratio}: sig={:.4} gam={:.3e} |a_sig|={:.3e} c_ship={:+.3e} meas={:.6} true={:.2e} cur={:.2e} rg={:.2e} cx={:.2e} ship={:.2e}",
                        sol.gain,
                        gamma.norm(),
                        a_sig.norm(),
                        c_ship,
                        g,
                        (g_true - g).abs() / g,
                        (g_cur - g).abs() / g,
                        (g_rg - g).abs() / g,
                        (g_cx - g).abs() / g,
                        (rec.gain - g).abs() / g
                    );
                    let _ = (adj_r, a_full);
                }
                Err(e) => println!("  ratio={ratio}: measure failed: {e}"),
            }
        }
    }
}
