//! Consistent initialization, derivative estimation by implicit-Euler
//! central differences, fixed- and variable-step BDF1/BDF2 integration for
//! the index-at-most-1 circuit DAE, the energy audit, and reduction to an
//! explicit ODE in the free states.

use crate::dae::CpHSystem;
use crate::error::{Error, Result};
use crate::linalg::{vec_norm2, vec_norm_inf, Lu, RealMatrix};
use crate::sigma::{self, Offsets};

const LU_TOL: f64 = 1e-13;

pub const DEFAULT_NEWTON_TOL: f64 = 1e-10;

// ---------------------------------------------------------------------------
// Damped Newton
// ---------------------------------------------------------------------------

/// Newton iteration with backtracking on the residual norm. Out-of-domain
/// trial points (diode overflow and the like) are treated as failed trials
/// and halved away. Converges when the step satisfies
/// `|dx| <= tol * (1 + |x|)` and the residual is small.
fn newton(
    f: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    jac: &dyn Fn(&[f64]) -> Result<RealMatrix>,
    x: &mut Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<f64> {
    if x.is_empty() {
        return Ok(0.0);
    }
    let mut fx = f(x)?;
    let mut norm = vec_norm2(&fx);
    for _ in 0..max_iter {
        let j = jac(x)?;
        let lu = Lu::factor(&j, LU_TOL).map_err(|_| Error::SingularSubJacobian)?;
        let neg: Vec<f64> = fx.iter().map(|v| -v).collect();
        let dx = lu.solve(&neg);
        // the step criterion fires first: at the residual's roundoff floor
        // the correction collapses even though |f| cannot shrink further
        if vec_norm2(&dx) <= tol * (1.0 + vec_norm2(x)) {
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
            if let Ok(ft) = f(x) {
                norm = vec_norm2(&ft);
            }
            return Ok(norm);
        }
        let mut lambda = 1.0f64;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> =
                x.iter().zip(&dx).map(|(xi, di)| xi + lambda * di).collect();
            match f(&trial) {
                Ok(ft) => {
                    let nt = vec_norm2(&ft);
                    if nt <= (1.0 - 1e-4 * lambda) * norm {
                        *x = trial;
                        fx = ft;
                        norm = nt;
                        accepted = true;
                        break;
                    }
                }
                Err(Error::Domain(_)) => {}
                Err(e) => return Err(e),
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::NewtonDiverged { iters: max_iter, last_norm: norm });
        }
        let step = lambda * vec_norm2(&dx);
        if step <= tol * (1.0 + vec_norm2(x)) {
            return Ok(norm);
        }
    }
    Err(Error::NewtonDiverged { iters: max_iter, last_norm: norm })
}

// ---------------------------------------------------------------------------
// Consistent points
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ConsistentPoint {
    pub t0: f64,
    pub x0: Vec<f64>,
    pub xdot0: Vec<f64>,
    pub residual_norm: f64,
}

/// Which variables to hold fixed in the stage -1 solve.
#[derive(Debug, Clone)]
pub enum FixedChoice {
    /// Tree-capacitor charges and link-inductor fluxes (always valid for
    /// independent elements).
    Default,
    /// Explicit variable indices (must number exactly DOF).
    Indices(Vec<usize>),
}

/// Rows with no derivative occurrences (f_C, f_l, f_d, f_D, and the implicit
/// relation for Model 1): the provisionally differentiated rows.
fn derivative_free_rows(offsets: &Offsets) -> Vec<usize> {
    offsets.c.iter().enumerate().filter(|(_, &c)| c == 1).map(|(i, _)| i).collect()
}

/// Solve the derivative-free equations for the non-fixed variables, then the
/// whole stage-0 linear system for all of xdot. The returned point satisfies
/// the full residual to Newton tolerance.
pub fn consistent_point(
    sys: &CpHSystem,
    t0: f64,
    guess: &[f64],
    fixed: FixedChoice,
) -> Result<ConsistentPoint> {
    let n = sys.layout().len();
    if guess.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "guess has {} entries, state has {n}",
            guess.len()
        )));
    }
    let offsets = sigma::provisional_offsets(sys)?;
    let rows = derivative_free_rows(&offsets);

    let attempt = |fixed_idx: &[usize]| -> Result<Vec<f64>> {
        let free: Vec<usize> = (0..n).filter(|j| !fixed_idx.contains(j)).collect();
        if free.len() != rows.len() {
            return Err(Error::InvalidArgument(format!(
                "{} fixed variables leave {} free for {} equations",
                fixed_idx.len(),
                free.len(),
                rows.len()
            )));
        }
        let zero = vec![0.0; n];
        let assemble = |u: &[f64]| {
            let mut x = guess.to_vec();
            for (k, &j) in free.iter().enumerate() {
                x[j] = u[k];
            }
            x
        };
        let eval = |u: &[f64]| -> Result<Vec<f64>> {
            let x = assemble(u);
            let f = sys.residual(t0, &x, &zero)?;
            Ok(rows.iter().map(|&i| f[i]).collect())
        };
        let jacf = |u: &[f64]| -> Result<RealMatrix> {
            let x = assemble(u);
            let jx = sys.jacobian_x(t0, &x, &zero)?;
            Ok(jx.select_rows(&rows).select_cols(&free))
        };
        let mut u: Vec<f64> = free.iter().map(|&j| guess[j]).collect();
        newton(&eval, &jacf, &mut u, DEFAULT_NEWTON_TOL, 80)?;
        Ok(assemble(&u))
    };

    let x0 = match fixed {
        FixedChoice::Indices(idx) => attempt(&idx)?,
        FixedChoice::Default => {
            let mut idx = sys.layout().q_twig_indices();
            idx.extend(sys.layout().phi_link_indices());
            match attempt(&idx) {
                Ok(x0) => x0,
                Err(Error::SingularSubJacobian) => {
                    // fall back to an HVT-based selection: fix the variables
                    // the transversal pairs with the differential rows
                    let sigma_m = sigma::signature_matrix(sys);
                    let (trans, _) = sigma::hvt(&sigma_m)?;
                    let idx: Vec<usize> = (0..sys.n_rows())
                        .filter(|i| !rows.contains(i))
                        .map(|i| trans[i])
                        .collect();
                    attempt(&idx)?
                }
                Err(e) => return Err(e),
            }
        }
    };

    let xdot0 = stage0_derivatives(sys, &offsets, t0, &x0)?;
    let residual_norm = vec_norm_inf(&sys.residual(t0, &x0, &xdot0)?);
    Ok(ConsistentPoint { t0, x0, xdot0, residual_norm })
}

/// Stage-0 solve: the system Jacobian (provisional offsets) applied to xdot
/// balances the time derivatives of the differentiated rows and the
/// xdot-free part of the remaining rows. Exact up to roundoff, since every
/// row is affine in xdot.
pub fn stage0_derivatives(
    sys: &CpHSystem,
    offsets: &Offsets,
    t: f64,
    x: &[f64],
) -> Result<Vec<f64>> {
    let n = sys.layout().len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let zero = vec![0.0; n];
    let j = sigma::system_jacobian(sys, offsets, t, x, &zero)?;
    let ft = sys.dresidual_dt(t)?;
    let f0 = sys.residual(t, x, &zero)?;
    let rhs: Vec<f64> = (0..n)
        .map(|i| if offsets.c[i] == 1 { -ft[i] } else { -f0[i] })
        .collect();
    let lu = Lu::factor(&j, LU_TOL).map_err(|_| Error::SingularSubJacobian)?;
    Ok(lu.solve(&rhs))
}

// ---------------------------------------------------------------------------
// Derivative estimation (implicit-Euler central differences)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct DerivativeEstimate {
    /// Central difference at step h: O(h^2) accurate.
    pub raw: Vec<f64>,
    /// One Richardson level (h and h/2 combined): O(h^4) accurate.
    pub improved: Vec<f64>,
    /// Componentwise error estimate of `raw` from the two levels.
    pub error_estimate: Vec<f64>,
}

/// One implicit-Euler step from (t0, x0) to t0 + h (h may be negative).
fn implicit_euler_step(
    sys: &CpHSystem,
    t0: f64,
    x0: &[f64],
    h: f64,
    newton_tol: f64,
) -> Result<Vec<f64>> {
    let t1 = t0 + h;
    let eval = |x: &[f64]| -> Result<Vec<f64>> {
        let xdot: Vec<f64> = x.iter().zip(x0).map(|(a, b)| (a - b) / h).collect();
        sys.residual(t1, x, &xdot)
    };
    let jacf = |x: &[f64]| -> Result<RealMatrix> {
        let xdot: Vec<f64> = x.iter().zip(x0).map(|(a, b)| (a - b) / h).collect();
        let jx = sys.jacobian_x(t1, x, &xdot)?;
        let jxd = sys.jacobian_xdot(t1, x, &xdot)?;
        Ok(jx.add(&jxd.scale(1.0 / h)))
    };
    let mut x = x0.to_vec();
    newton(&eval, &jacf, &mut x, newton_tol, 50)?;
    Ok(x)
}

/// Estimate xdot at a consistent state by the central difference of two
/// implicit-Euler steps, with one Richardson extrapolation level for the
/// error estimate and an improved value.
pub fn estimate_derivative(
    sys: &CpHSystem,
    t0: f64,
    x0: &[f64],
    h: f64,
    newton_tol: f64,
) -> Result<DerivativeEstimate> {
    let diff = |hh: f64| -> Result<Vec<f64>> {
        let xp = implicit_euler_step(sys, t0, x0, hh, newton_tol)?;
        let xm = implicit_euler_step(sys, t0, x0, -hh, newton_tol)?;
        Ok(xp.iter().zip(&xm).map(|(p, m)| (p - m) / (2.0 * hh)).collect())
    };
    let d_h = diff(h)?;
    let d_h2 = diff(0.5 * h)?;
    let improved: Vec<f64> =
        d_h2.iter().zip(&d_h).map(|(f, c)| (4.0 * f - c) / 3.0).collect();
    let error_estimate: Vec<f64> =
        d_h2.iter().zip(&d_h).map(|(f, c)| (f - c).abs() / 3.0).collect();
    Ok(DerivativeEstimate { raw: d_h, improved, error_estimate })
}

// ---------------------------------------------------------------------------
// BDF integration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub enum StepMode {
    Fixed { h: f64 },
    Adaptive { rtol: f64, atol: f64, h0: Option<f64> },
}

#[derive(Debug, Clone, Copy)]
pub struct IntegratorConfig {
    pub step: StepMode,
    /// BDF order, 1 or 2.
    pub order: u8,
    pub newton_tol: f64,
    pub max_newton: usize,
    pub max_steps: usize,
}

impl IntegratorConfig {
    pub fn fixed(h: f64, order: u8) -> Self {
        IntegratorConfig {
            step: StepMode::Fixed { h },
            order,
            newton_tol: DEFAULT_NEWTON_TOL,
            max_newton: 50,
            max_steps: 50_000_000,
        }
    }

    pub fn adaptive(rtol: f64, atol: f64, order: u8) -> Self {
        IntegratorConfig {
            step: StepMode::Adaptive { rtol, atol, h0: None },
            order,
            newton_tol: DEFAULT_NEWTON_TOL,
            max_newton: 50,
            max_steps: 50_000_000,
        }
    }
}

/// One accepted integration sample.
#[derive(Debug, Clone)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
    pub xdot: Vec<f64>,
    pub y: Vec<f64>,
    pub energy: f64,
    /// Instantaneous dissipated power i_D . v_D.
    pub dissipated: f64,
    /// Power delivered through the source ports.
    pub port: f64,
    /// Pointwise balance residual dH/dt + dissipated - port.
    pub balance: f64,
}

#[derive(Debug, Clone, Default)]
pub struct IntegratorStats {
    pub accepted: usize,
    pub rejected: usize,
    pub newton_failures: usize,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub stats: IntegratorStats,
}

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory has at least the initial sample")
    }
}

fn make_sample(sys: &CpHSystem, t: f64, x: &[f64], xdot: &[f64]) -> Result<Sample> {
    let y = sys.output(t, x, xdot)?;
    let lay = sys.layout();
    let q = &x[..lay.phi_offset()];
    let phi = &x[lay.phi_offset()..lay.xhat_offset()];
    let energy = sys.model().hamiltonian(q, phi)?;
    let (hdot, dissipated, port) = sys.power_balance(t, x, xdot)?;
    Ok(Sample {
        t,
        x: x.to_vec(),
        xdot: xdot.to_vec(),
        y,
        energy,
        dissipated,
        port,
        balance: hdot + dissipated - port,
    })
}

/// Integrate from a consistent point to `t_end` with BDF1 or BDF2.
///
/// Each step solves `f(t_{n+1}, x, xdot(x)) = 0` by damped Newton with
/// iteration matrix `df/dx + (alpha/h) df/dxdot`; the derivative stored at an
/// accepted step is the BDF difference formula, so the reported (x, xdot)
/// satisfy the residual to Newton tolerance. In adaptive mode the local
/// error is the scaled predictor-corrector difference; rejected steps shrink
/// h with safety factor 0.9 and growth is capped at 2.
pub fn integrate(
    sys: &CpHSystem,
    cp: &ConsistentPoint,
    t_end: f64,
    config: &IntegratorConfig,
) -> Result<Trajectory> {
    if !(config.order == 1 || config.order == 2) {
        return Err(Error::InvalidArgument("BDF order must be 1 or 2".into()));
    }
    if t_end <= cp.t0 {
        return Err(Error::InvalidArgument("t_end must exceed t0".into()));
    }
    let span = t_end - cp.t0;
    let (mut h, adaptive, rtol, atol) = match config.step {
        StepMode::Fixed { h } => {
            if h <= 0.0 {
                return Err(Error::InvalidArgument("fixed step must be positive".into()));
            }
            (h, false, 0.0, 0.0)
        }
        StepMode::Adaptive { rtol, atol, h0 } => (h0.unwrap_or(1e-3 * span), true, rtol, atol),
    };
    let h_min = 1e-12 * span;

    let mut stats = IntegratorStats::default();
    let mut samples = vec![make_sample(sys, cp.t0, &cp.x0, &cp.xdot0)?];
    // accepted history (t, x), newest last; at most two entries needed
    let mut hist: Vec<(f64, Vec<f64>)> = vec![(cp.t0, cp.x0.clone())];
    let mut t = cp.t0;
    let n = sys.layout().len();

    while t < t_end - 1e-12 * span {
        if stats.accepted + stats.rejected > config.max_steps {
            return Err(Error::StepFailure(t));
        }
        let hh = if adaptive {
            h.min(t_end - t)
        } else {
            // land exactly on t_end without a sliver step
            let remaining = t_end - t;
            let k = (remaining / h - 1e-9).floor().max(0.0);
            if k < 1.0 {
                remaining
            } else {
                remaining / (k + 1.0)
            }
        };
        let order = if config.order == 2 && hist.len() >= 2 { 2 } else { 1 };
        let t_new = t + hh;
        let x_n = hist.last().unwrap().1.clone();
        let prev = if hist.len() >= 2 { Some(hist[hist.len() - 2].clone()) } else { None };

        // variable-step BDF coefficients: xdot = a0 x + a1 x_n + a2 x_{n-1}
        let (a0, a1, a2) = if order == 2 {
            let (t_prev, _) = prev.as_ref().unwrap();
            let hp = hist.last().unwrap().0 - t_prev;
            let r = hh / hp;
            (
                (1.0 + 2.0 * r) / (1.0 + r) / hh,
                -(1.0 + r) / hh,
                r * r / (1.0 + r) / hh,
            )
        } else {
            (1.0 / hh, -1.0 / hh, 0.0)
        };

        // predictor: Lagrange extrapolation through the last order+1 points
        // (matches the corrector's order, so corrector - predictor scales
        // like the local error)
        let n_pts = ((order as usize) + 1).min(hist.len());
        let pts = &hist[hist.len() - n_pts..];
        let mut x_pred = vec![0.0; n];
        for (i, (ti, xi)) in pts.iter().enumerate() {
            let mut w = 1.0;
            for (j, (tj, _)) in pts.iter().enumerate() {
                if i != j {
                    w *= (t_new - tj) / (ti - tj);
                }
            }
            for k in 0..n {
                x_pred[k] += w * xi[k];
            }
        }

        let xprev = prev.as_ref().map(|(_, v)| v.clone()).unwrap_or_default();
        let xdot_of = |x: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|j| a0 * x[j] + a1 * x_n[j] + if order == 2 { a2 * xprev[j] } else { 0.0 })
                .collect()
        };
        let eval = |x: &[f64]| -> Result<Vec<f64>> { sys.residual(t_new, x, &xdot_of(x)) };
        let jacf = |x: &[f64]| -> Result<RealMatrix> {
            let xd = xdot_of(x);
            let jx = sys.jacobian_x(t_new, x, &xd)?;
            let jxd = sys.jacobian_xdot(t_new, x, &xd)?;
            Ok(jx.add(&jxd.scale(a0)))
        };

        let mut x_new = x_pred.clone();
        match newton(&eval, &jacf, &mut x_new, config.newton_tol, config.max_newton) {
            Ok(_) => {}
            Err(Error::NewtonDiverged { .. }) | Err(Error::SingularSubJacobian) => {
                stats.newton_failures += 1;
                if adaptive && hh > h_min {
                    h = hh * 0.25;
                    stats.rejected += 1;
                    continue;
                }
                return Err(Error::StepFailure(t));
            }
            Err(e) => return Err(e),
        }

        if adaptive {
            let k = order as f64;
            let scale = 1.0 / (k + 1.0);
            let mut err2 = 0.0;
            for j in 0..n {
                let w = atol + rtol * x_new[j].abs().max(x_n[j].abs());
                let e = scale * (x_new[j] - x_pred[j]) / w;
                err2 += e * e;
            }
            let err = if n == 0 { 0.0 } else { (err2 / n as f64).sqrt() };
            if err > 1.0 && hh > h_min {
                stats.rejected += 1;
                h = hh * (0.9 * err.powf(-1.0 / (k + 1.0))).clamp(0.2, 0.9);
                continue;
            }
            let grow = (0.9 * err.max(1e-10).powf(-1.0 / (k + 1.0))).clamp(0.2, 2.0);
            h = hh * grow;
        }

        let xd_new = xdot_of(&x_new);
        samples.push(make_sample(sys, t_new, &x_new, &xd_new)?);
        stats.accepted += 1;
        t = t_new;
        hist.push((t_new, x_new));
        if hist.len() > 3 {
            hist.remove(0);
        }
    }
    Ok(Trajectory { samples, stats })
}

// ---------------------------------------------------------------------------
// Energy audit
// ---------------------------------------------------------------------------

/// Pointwise balance residuals (already carried by the samples) plus the
/// per-step discrete defect |H_{n+1} - H_n - trapezoid(port - dissipated)|.
pub fn energy_audit(traj: &Trajectory) -> (Vec<f64>, Vec<f64>) {
    let pointwise: Vec<f64> = traj.samples.iter().map(|s| s.balance).collect();
    let discrete: Vec<f64> = traj
        .samples
        .windows(2)
        .map(|w| {
            let (a, b) = (&w[0], &w[1]);
            let dt = b.t - a.t;
            let integral = 0.5 * dt * ((a.port - a.dissipated) + (b.port - b.dissipated));
            (b.energy - a.energy - integral).abs()
        })
        .collect();
    (pointwise, discrete)
}

// ---------------------------------------------------------------------------
// Reduction to an explicit ODE
// ---------------------------------------------------------------------------

/// Column selection and solvers that turn the Model 2 DAE into an explicit
/// ODE in the free charges and fluxes.
pub struct OdeReduction<'a> {
    sys: &'a CpHSystem,
    /// Selected state indices (within the q block) solved from f_C.
    pub q_hat: Vec<usize>,
    /// Selected state indices (within the phi block) solved from f_l.
    pub phi_hat: Vec<usize>,
    /// The ODE variables: remaining q then remaining phi (state indices).
    pub ode_vars: Vec<usize>,
    newton_tol: f64,
}

/// Choose reduction columns by the transversal heuristic: the HVT columns of
/// the f_C rows become the solved charges and those of the f_l rows the
/// solved fluxes (for independent storage this picks exactly the
/// link-capacitor charges and twig-inductor fluxes). The identity transversal
/// is preferred when it attains the HVT value, which pins the selection
/// deterministically.
pub fn reduce_to_ode(sys: &CpHSystem) -> Result<OdeReduction<'_>> {
    if sys.kind() != crate::dae::ModelKind::Model2 {
        return Err(Error::InvalidArgument("reduction applies to Model 2 systems".into()));
    }
    let sigma_m = sigma::signature_matrix(sys);
    let (mut trans, val) = sigma::hvt(&sigma_m)?;
    let n = sys.layout().len();
    let id_val: Option<i64> =
        (0..n).try_fold(0i64, |acc, i| sigma_m.get(i, i).map(|s| acc + s as i64));
    if id_val == Some(val) {
        trans = (0..n).collect();
    }
    let lay = sys.layout();
    let q_rows: Vec<usize> = (0..lay.n_cap_link).collect(); // f_C rows
    let l_rows: Vec<usize> = (lay.n_cap()..lay.n_cap() + lay.n_ind_twig).collect(); // f_l rows
    let q_hat: Vec<usize> = q_rows.iter().map(|&r| trans[r]).collect();
    let phi_hat: Vec<usize> = l_rows.iter().map(|&r| trans[r]).collect();
    if q_hat.iter().any(|&j| j >= lay.n_cap())
        || phi_hat
            .iter()
            .any(|&j| j < lay.phi_offset() || j >= lay.xhat_offset())
    {
        return Err(Error::SingularSelection);
    }
    let mut ode_vars: Vec<usize> = (0..lay.n_cap()).filter(|j| !q_hat.contains(j)).collect();
    ode_vars.extend((lay.phi_offset()..lay.xhat_offset()).filter(|j| !phi_hat.contains(j)));
    Ok(OdeReduction { sys, q_hat, phi_hat, ode_vars, newton_tol: DEFAULT_NEWTON_TOL })
}

impl OdeReduction<'_> {
    pub fn dof(&self) -> usize {
        self.ode_vars.len()
    }

    pub fn var_names(&self) -> Vec<String> {
        self.ode_vars.iter().map(|&j| self.sys.layout().names[j].clone()).collect()
    }

    /// Stage I: solve the algebraic equations for the selected charges,
    /// fluxes and the dissipator variables given the free states; returns
    /// the full state vector.
    pub fn recover_algebraic(&self, t: f64, y: &[f64]) -> Result<Vec<f64>> {
        let lay = self.sys.layout();
        let n = lay.len();
        if y.len() != self.ode_vars.len() {
            return Err(Error::DimensionMismatch("ODE state size".into()));
        }
        let mut x = vec![0.0; n];
        for (k, &j) in self.ode_vars.iter().enumerate() {
            x[j] = y[k];
        }
        // I.2: f_C = 0 for q_hat
        if !self.q_hat.is_empty() {
            let rows: Vec<usize> = (0..lay.n_cap_link).collect();
            self.solve_block(t, &mut x, &rows, &self.q_hat.clone())?;
        }
        // I.4: f_l = 0 for phi_hat
        if !self.phi_hat.is_empty() {
            let rows: Vec<usize> = (lay.n_cap()..lay.n_cap() + lay.n_ind_twig).collect();
            self.solve_block(t, &mut x, &rows, &self.phi_hat.clone())?;
        }
        // I.5: (f_d, f_D) = 0 for xhat
        let n_dd = lay.n_dis();
        if n_dd > 0 {
            let start = lay.n_cap() + lay.n_ind_twig + lay.n_ind_link;
            let rows: Vec<usize> = (start..start + n_dd).collect();
            let cols: Vec<usize> = (lay.xhat_offset()..n).collect();
            self.solve_block(t, &mut x, &rows, &cols)?;
        }
        Ok(x)
    }

    fn solve_block(&self, t: f64, x: &mut [f64], rows: &[usize], cols: &[usize]) -> Result<()> {
        let n = x.len();
        let zero = vec![0.0; n];
        let base = x.to_vec();
        let assemble = |u: &[f64]| {
            let mut xx = base.clone();
            for (k, &j) in cols.iter().enumerate() {
                xx[j] = u[k];
            }
            xx
        };
        let eval = |u: &[f64]| -> Result<Vec<f64>> {
            let xx = assemble(u);
            let f = self.sys.residual(t, &xx, &zero)?;
            Ok(rows.iter().map(|&i| f[i]).collect())
        };
        let jacf = |u: &[f64]| -> Result<RealMatrix> {
            let xx = assemble(u);
            let jx = self.sys.jacobian_x(t, &xx, &zero)?;
            Ok(jx.select_rows(rows).select_cols(cols))
        };
        let mut u: Vec<f64> = cols.iter().map(|&j| base[j]).collect();
        match newton(&eval, &jacf, &mut u, self.newton_tol, 60) {
            Ok(_) => {}
            Err(Error::SingularSubJacobian) => return Err(Error::SingularSelection),
            Err(e) => return Err(e),
        }
        for (k, &j) in cols.iter().enumerate() {
            x[j] = u[k];
        }
        Ok(())
    }

    /// The explicit ODE right-hand side over the free states.
    pub fn rhs(&self, t: f64, y: &[f64]) -> Result<Vec<f64>> {
        let x = self.recover_algebraic(t, y)?;
        let xdot = self.full_derivatives(t, &x)?;
        Ok(self.ode_vars.iter().map(|&j| xdot[j]).collect())
    }

    /// Stage II: the two linear solves (J_C over charges, J_L over fluxes)
    /// for all storage derivatives. Dissipator entries of the result are
    /// zero. Exposed for cross-checks.
    pub fn full_derivatives(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let lay = self.sys.layout();
        let n = lay.len();
        let zero = vec![0.0; n];
        let ft = self.sys.dresidual_dt(t)?;
        let f0 = self.sys.residual(t, x, &zero)?;
        let jx = self.sys.jacobian_x(t, x, &zero)?;
        let jxd = self.sys.jacobian_xdot(t, x, &zero)?;
        let mut xdot = vec![0.0; n];

        // II.1: rows (f_C, f_c), unknowns qdot
        let n_q = lay.n_cap();
        if n_q > 0 {
            let mut m = RealMatrix::zeros(n_q, n_q);
            let mut rhs = vec![0.0; n_q];
            for ri in 0..n_q {
                let differentiated = ri < lay.n_cap_link;
                for ci in 0..n_q {
                    m[(ri, ci)] = if differentiated { jx[(ri, ci)] } else { jxd[(ri, ci)] };
                }
                rhs[ri] = if differentiated { -ft[ri] } else { -f0[ri] };
            }
            let lu = Lu::factor(&m, LU_TOL).map_err(|_| Error::SingularSelection)?;
            let qdot = lu.solve(&rhs);
            xdot[..n_q].copy_from_slice(&qdot);
        }
        // II.2: rows (f_l, f_L), unknowns phidot
        let n_p = lay.n_ind();
        if n_p > 0 {
            let row0 = n_q;
            let col0 = lay.phi_offset();
            let mut m = RealMatrix::zeros(n_p, n_p);
            let mut rhs = vec![0.0; n_p];
            for ri in 0..n_p {
                let i = row0 + ri;
                let differentiated = ri < lay.n_ind_twig;
                for ci in 0..n_p {
                    let j = col0 + ci;
                    m[(ri, ci)] = if differentiated { jx[(i, j)] } else { jxd[(i, j)] };
                }
                rhs[ri] = if differentiated { -ft[i] } else { -f0[i] };
            }
            let lu = Lu::factor(&m, LU_TOL).map_err(|_| Error::SingularSelection)?;
            let pdot = lu.solve(&rhs);
            xdot[col0..col0 + n_p].copy_from_slice(&pdot);
        }
        Ok(xdot)
    }
}
