//! Dynamical-system abstraction (right-hand side, analytic Jacobian, input
//! matrix) plus the three built-in benchmark systems: a parametrically
//! damped Mathieu oscillator, the van der Pol oscillator and the 1-D complex
//! Ginzburg-Landau equation discretized in space.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use std::f64::consts::PI;

use crate::error::{Result, TsrError};

type RhsFn = dyn Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync;
type JacFn = dyn Fn(&DVector<f64>, f64) -> DMatrix<f64> + Send + Sync;
type JacApplyFn = dyn Fn(&DVector<f64>, f64, &DVector<f64>) -> DVector<f64> + Send + Sync;

/// A first-order system `w' = r(w, t)` with analytic Jacobian and a constant
/// input matrix mapping forcing to states.
pub struct SystemModel {
    pub name: String,
    /// State dimension.
    pub n: usize,
    /// Forcing dimension (columns of `b`).
    pub m: usize,
    pub autonomous: bool,
    pub base_frequency_hint: Option<f64>,
    pub b: DMatrix<f64>,
    rhs: Box<RhsFn>,
    jac: Box<JacFn>,
    /// Optional matrix-free Jacobian action; falls back to building the dense
    /// Jacobian. The CGL system installs a stencil-based action because the
    /// validation integrations evaluate it inside every Runge-Kutta stage.
    jac_apply: Option<Box<JacApplyFn>>,
}

impl SystemModel {
    pub fn new(
        name: impl Into<String>,
        n: usize,
        autonomous: bool,
        base_frequency_hint: Option<f64>,
        b: DMatrix<f64>,
        rhs: Box<RhsFn>,
        jac: Box<JacFn>,
    ) -> Result<Self> {
        if b.nrows() != n || b.ncols() == 0 {
            return Err(TsrError::DimensionMismatch(format!(
                "input matrix is {}x{}, expected {} rows and at least one column",
                b.nrows(),
                b.ncols(),
                n
            )));
        }
        Ok(Self {
            name: name.into(),
            n,
            m: b.ncols(),
            autonomous,
            base_frequency_hint,
            b,
            rhs,
            jac,
            jac_apply: None,
        })
    }

    pub fn rhs(&self, w: &DVector<f64>, t: f64) -> DVector<f64> {
        (self.rhs)(w, t)
    }

    pub fn jacobian(&self, w: &DVector<f64>, t: f64) -> DMatrix<f64> {
        (self.jac)(w, t)
    }

    pub fn jacobian_apply(&self, w: &DVector<f64>, t: f64, v: &DVector<f64>) -> DVector<f64> {
        match &self.jac_apply {
            Some(f) => f(w, t, v),
            None => self.jacobian(w, t) * v,
        }
    }

    /// Self-test: compare the analytic Jacobian against a central finite
    /// difference of the right-hand side at random states. Returns the worst
    /// relative error over all sampled points.
    pub fn check_jacobian<R: Rng + ?Sized>(&self, rng: &mut R, samples: usize, scale: f64) -> f64 {
        let mut worst = 0.0f64;
        for _ in 0..samples {
            let w = DVector::from_fn(self.n, |_, _| scale * (rng.random::<f64>() - 0.5));
            let t = 10.0 * rng.random::<f64>();
            let jac = self.jacobian(&w, t);
            let h = 1e-6 * scale.max(1.0);
            let mut fd = DMatrix::zeros(self.n, self.n);
            for j in 0..self.n {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[j] += h;
                wm[j] -= h;
                fd.set_column(j, &((self.rhs(&wp, t) - self.rhs(&wm, t)) / (2.0 * h)));
            }
            let denom = jac.norm().max(1.0);
            worst = worst.max((&jac - &fd).norm() / denom);
            // The matrix-free action must agree with the dense Jacobian.
            let v = DVector::from_fn(self.n, |_, _| rng.random::<f64>() - 0.5);
            let d = (self.jacobian_apply(&w, t, &v) - &jac * &v).norm() / (jac.norm() * v.norm()).max(1e-30);
            worst = worst.max(d);
        }
        worst
    }
}

#[derive(Debug, Clone)]
pub struct MathieuParams {
    pub omega_n: f64,
    pub zeta: f64,
    pub alpha: f64,
    pub omega0: f64,
}

impl Default for MathieuParams {
    fn default() -> Self {
        Self { omega_n: 1.0, zeta: 0.1, alpha: 0.2, omega0: 2f64.sqrt() }
    }
}

/// Damped Mathieu oscillator `y'' + 2 zeta y' + (omega_n^2 + alpha cos(omega0 t)) y = u`
/// in first-order form, forced through the velocity equation.
pub fn mathieu_system(p: &MathieuParams) -> Result<SystemModel> {
    if p.omega_n <= 0.0 || p.zeta <= 0.0 || p.alpha < 0.0 || p.omega0 <= 0.0 {
        return Err(TsrError::InvalidConfiguration(format!(
            "Mathieu parameters must be positive (omega_n={}, zeta={}, alpha={}, omega0={})",
            p.omega_n, p.zeta, p.alpha, p.omega0
        )));
    }
    let (wn2, zeta, alpha, om0) = (p.omega_n * p.omega_n, p.zeta, p.alpha, p.omega0);
    let b = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
    SystemModel::new(
        "mathieu",
        2,
        false,
        Some(p.omega0),
        b,
        Box::new(move |w, t| {
            let stiff = wn2 + alpha * (om0 * t).cos();
            DVector::from_column_slice(&[w[1], -stiff * w[0] - 2.0 * zeta * w[1]])
        }),
        Box::new(move |_, t| {
            let stiff = wn2 + alpha * (om0 * t).cos();
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -stiff, -2.0 * zeta])
        }),
    )
}

#[derive(Debug, Clone)]
pub struct VdpParams {
    pub mu: f64,
}

impl Default for VdpParams {
    fn default() -> Self {
        Self { mu: 1.0 }
    }
}

/// Van der Pol oscillator `y'' - mu (1 - y^2) y' + y = u` in first-order form.
pub fn vdp_system(p: &VdpParams) -> Result<SystemModel> {
    if p.mu <= 0.0 {
        return Err(TsrError::InvalidConfiguration(format!("mu must be positive, got {}", p.mu)));
    }
    let mu = p.mu;
    let b = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
    SystemModel::new(
        "vdp",
        2,
        true,
        None,
        b,
        Box::new(move |w, _| {
            DVector::from_column_slice(&[w[1], mu * (1.0 - w[0] * w[0]) * w[1] - w[0]])
        }),
        Box::new(move |w, _| {
            DMatrix::from_row_slice(
                2,
                2,
                &[0.0, 1.0, -2.0 * mu * w[0] * w[1] - 1.0, mu * (1.0 - w[0] * w[0])],
            )
        }),
    )
}

#[derive(Debug, Clone)]
pub struct CglParams {
    pub alpha: f64,
    pub beta: f64,
    pub domain_length: f64,
    pub n_node: usize,
}

impl Default for CglParams {
    fn default() -> Self {
        Self { alpha: 0.1, beta: 0.2, domain_length: 20.0, n_node: 50 }
    }
}

impl CglParams {
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.domain_length
    }

    pub fn dx(&self) -> f64 {
        self.domain_length / self.n_node as f64
    }

    /// Plane-wave temporal frequency `beta (1 - k^2) + alpha k^2`.
    pub fn plane_wave_frequency(&self) -> f64 {
        let k2 = self.wavenumber() * self.wavenumber();
        self.beta * (1.0 - k2) + self.alpha * k2
    }

    /// Plane-wave amplitude `sqrt(1 - k^2)`.
    pub fn plane_wave_amplitude(&self) -> f64 {
        (1.0 - self.wavenumber() * self.wavenumber()).sqrt()
    }
}

/// Second-order central-difference Laplacian on a periodic 1-D grid.
pub fn periodic_laplacian(n: usize, dx: f64) -> DMatrix<f64> {
    let s = 1.0 / (dx * dx);
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            -2.0 * s
        } else if j == (i + 1) % n || i == (j + 1) % n {
            s
        } else {
            0.0
        }
    })
}

/// Complex Ginzburg-Landau equation `A_t = A + (1 + i alpha) A_xx - (1 + i beta) |A|^2 A`
/// on a periodic domain, decomposed into real and imaginary parts:
/// state `w = [Re A at all nodes; Im A at all nodes]`, dimension `2 n_node`.
/// Forcing is applied to every state (identity input matrix).
pub fn cgl_system(p: &CglParams) -> Result<SystemModel> {
    if p.n_node < 8 {
        return Err(TsrError::InvalidConfiguration(format!(
            "CGL needs at least 8 spatial nodes, got {}",
            p.n_node
        )));
    }
    let nn = p.n_node;
    let n = 2 * nn;
    let (alpha, beta) = (p.alpha, p.beta);
    let inv_dx2 = 1.0 / (p.dx() * p.dx());

    // Periodic stencil applied in place; used by rhs, Jacobian action and the
    // dense Jacobian build below.
    let lap = move |w: &[f64], out: &mut [f64]| {
        let n = w.len();
        for i in 0..n {
            let lm = w[(i + n - 1) % n];
            let lp = w[(i + 1) % n];
            out[i] = (lm - 2.0 * w[i] + lp) * inv_dx2;
        }
    };

    let rhs = move |w: &DVector<f64>, _t: f64| {
        let (w1, w2) = (&w.as_slice()[..nn], &w.as_slice()[nn..]);
        let mut d1 = vec![0.0; nn];
        let mut d2 = vec![0.0; nn];
        lap(w1, &mut d1);
        lap(w2, &mut d2);
        let mut out = DVector::zeros(2 * nn);
        for i in 0..nn {
            let a2 = w1[i] * w1[i] + w2[i] * w2[i];
            out[i] = w1[i] + d1[i] - alpha * d2[i] - a2 * (w1[i] - beta * w2[i]);
            out[nn + i] = w2[i] + alpha * d1[i] + d2[i] - a2 * (beta * w1[i] + w2[i]);
        }
        out
    };

    let jac = move |w: &DVector<f64>, _t: f64| {
        let lap_m = periodic_laplacian(nn, 1.0 / inv_dx2.sqrt());
        let eye = DMatrix::<f64>::identity(nn, nn);
        let mut j = DMatrix::zeros(2 * nn, 2 * nn);
        j.view_mut((0, 0), (nn, nn)).copy_from(&(&eye + &lap_m));
        j.view_mut((0, nn), (nn, nn)).copy_from(&(-alpha * &lap_m));
        j.view_mut((nn, 0), (nn, nn)).copy_from(&(alpha * &lap_m));
        j.view_mut((nn, nn), (nn, nn)).copy_from(&(&eye + &lap_m));
        for i in 0..nn {
            let (w1, w2) = (w[i], w[nn + i]);
            let a2 = w1 * w1 + w2 * w2;
            // d/dw of -(|A|^2 M w) with M = [[1, -beta], [beta, 1]].
            let (mw1, mw2) = (w1 - beta * w2, beta * w1 + w2);
            j[(i, i)] += -(a2 + 2.0 * w1 * mw1);
            j[(i, nn + i)] += -(-beta * a2 + 2.0 * w2 * mw1);
            j[(nn + i, i)] += -(beta * a2 + 2.0 * w1 * mw2);
            j[(nn + i, nn + i)] += -(a2 + 2.0 * w2 * mw2);
        }
        j
    };

    let jac_apply = move |w: &DVector<f64>, _t: f64, v: &DVector<f64>| {
        let (w1, w2) = (&w.as_slice()[..nn], &w.as_slice()[nn..]);
        let (v1, v2) = (&v.as_slice()[..nn], &v.as_slice()[nn..]);
        let mut d1 = vec![0.0; nn];
        let mut d2 = vec![0.0; nn];
        lap(v1, &mut d1);
        lap(v2, &mut d2);
        let mut out = DVector::zeros(2 * nn);
        for i in 0..nn {
            let a2 = w1[i] * w1[i] + w2[i] * w2[i];
            let (mw1, mw2) = (w1[i] - beta * w2[i], beta * w1[i] + w2[i]);
            out[i] = v1[i] + d1[i] - alpha * d2[i]
                - (a2 + 2.0 * w1[i] * mw1) * v1[i]
                - (-beta * a2 + 2.0 * w2[i] * mw1) * v2[i];
            out[nn + i] = v2[i] + alpha * d1[i] + d2[i]
                - (beta * a2 + 2.0 * w1[i] * mw2) * v1[i]
                - (a2 + 2.0 * w2[i] * mw2) * v2[i];
        }
        out
    };

    let mut sys = SystemModel::new(
        "cgl",
        n,
        true,
        Some(p.plane_wave_frequency()),
        DMatrix::identity(n, n),
        Box::new(rhs),
        Box::new(jac),
    )?;
    sys.jac_apply = Some(Box::new(jac_apply));
    Ok(sys)
}
