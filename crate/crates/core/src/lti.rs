//! Linear time-invariant circuits: the constant matrix pencil
//! `0 = A x - B xdot - u(t)`, its finite eigenvalues (computed through the
//! reduction to an explicit ODE, the infinite ones being discarded by
//! construction), a characteristic-polynomial interpolation oracle, and the
//! modal expansion of homogeneous solutions.

use num_complex::Complex64;

use crate::dae::{CpHSystem, ModelKind};
use crate::error::{Error, Result};
use crate::linalg::{
    complex_solve, eig_dense, eigenvector_for, sort_complex, Lu, RealMatrix,
};
use crate::model::SourceFn;
use crate::netlist::Law;
use crate::solver::reduce_to_ode;

/// The assembled pencil in the DAE row/variable ordering, with the source
/// injection `u(t)` so that `A x - B xdot - u(t)` equals the residual.
pub struct LtiSystem {
    pub a: RealMatrix,
    pub b: RealMatrix,
    /// u(t) = u_v * V(t) + u_i * I(t), columns per source edge.
    u_v: RealMatrix,
    u_i: RealMatrix,
    sources_v: Vec<SourceFn>,
    sources_i: Vec<SourceFn>,
}

impl LtiSystem {
    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn u(&self, t: f64) -> Result<Vec<f64>> {
        let vs: Vec<f64> = self.sources_v.iter().map(|s| s.value(t)).collect::<Result<_>>()?;
        let is: Vec<f64> = self.sources_i.iter().map(|s| s.value(t)).collect::<Result<_>>()?;
        let mut u = self.u_v.matvec(&vs);
        for (a, b) in u.iter_mut().zip(self.u_i.matvec(&is)) {
            *a += b;
        }
        Ok(u)
    }

    /// Residual through the pencil: `A x - B xdot - u(t)`.
    pub fn residual(&self, t: f64, x: &[f64], xdot: &[f64]) -> Result<Vec<f64>> {
        let ax = self.a.matvec(x);
        let bxd = self.b.matvec(xdot);
        let u = self.u(t)?;
        Ok((0..self.n()).map(|i| ax[i] - bxd[i] - u[i]).collect())
    }
}

/// Assemble the pencil from the constitutive matrices and the coordinate
/// projections (not by linearizing the residual evaluator; tests cross-check
/// the two routes against each other). Requires every non-source law to be
/// linear.
pub fn assemble_lti(sys: &CpHSystem) -> Result<LtiSystem> {
    let model = sys.model();
    if sys.kind() != ModelKind::Model2 {
        return Err(Error::InvalidArgument("LTI assembly works on Model 2 systems".into()));
    }
    for e in &model.spec.elements {
        if !e.kind.is_source() && !matches!(e.law, Law::Constant(_)) {
            return Err(Error::NotLti);
        }
    }
    let lay = sys.layout();
    let n = lay.len();
    let (n_cl, n_ct) = (lay.n_cap_link, lay.n_cap_twig);
    let (n_lt, n_ll) = (lay.n_ind_twig, lay.n_ind_link);
    let (n_dt, n_dl) = (lay.n_dis_twig, lay.n_dis_link);
    let n_cap = n_cl + n_ct;
    let n_ind = n_lt + n_ll;
    let n_dd = n_dt + n_dl;

    // constitutive matrices at the origin (constant for linear laws)
    let h_c = model.storage_c.hessian(&vec![0.0; n_cap])?;
    let h_l = model.storage_l.hessian(&vec![0.0; n_ind])?;
    let (d_i, d_v) = model.dissipator.eval_jacobians(&vec![0.0; n_dd])?;

    // i_Xx = A_i x - B_i xdot ; v_Xx = A_v x - B_v xdot
    let mut a_i = RealMatrix::zeros(n, n);
    let mut b_i = RealMatrix::zeros(n, n);
    let mut a_v = RealMatrix::zeros(n, n);
    let mut b_v = RealMatrix::zeros(n, n);
    for p in 0..n_cap {
        b_i[(p, p)] = -1.0;
        for c in 0..n_cap {
            a_v[(p, c)] = h_c[(p, c)];
        }
    }
    for p in 0..n_ind {
        let row = n_cap + p;
        b_v[(row, row)] = -1.0;
        for c in 0..n_ind {
            a_i[(row, n_cap + c)] = h_l[(p, c)];
        }
    }
    for p in 0..n_dd {
        let row = n_cap + n_ind + p;
        for c in 0..n_dd {
            a_i[(row, n_cap + n_ind + c)] = d_i[(p, c)];
            a_v[(row, n_cap + n_ind + c)] = d_v[(p, c)];
        }
    }

    // coordinate lists over the Xx (non-source) edges in state order:
    // capacitors (links then twigs), inductors (twigs then links),
    // dissipators (twigs then links). Tree part x = (c, l, d), cotree part
    // X = (C, L, D).
    let x_rows: Vec<usize> = (n_cl..n_cap)
        .chain(n_cap..n_cap + n_lt)
        .chain(n_cap + n_ind..n_cap + n_ind + n_dt)
        .collect();
    let x_cols_in_f: Vec<usize> = model
        .split
        .c
        .iter()
        .chain(&model.split.l)
        .chain(&model.split.d)
        .map(|&e| model.tree.twig_col(e).expect("twig"))
        .collect();
    let cap_x_rows: Vec<usize> = (0..n_cl)
        .chain(n_cap + n_lt..n_cap + n_ind)
        .chain(n_cap + n_ind + n_dt..n)
        .collect();
    let cap_x_rows_in_f: Vec<usize> = model
        .split
        .cap_links
        .iter()
        .chain(&model.split.ind_links)
        .chain(&model.split.dis_links)
        .map(|&e| model.tree.link_row(e).expect("link"))
        .collect();
    let i_rows_in_f: Vec<usize> = model
        .split
        .cur_links
        .iter()
        .map(|&e| model.tree.link_row(e).expect("link"))
        .collect();
    let v_cols_in_f: Vec<usize> = model
        .split
        .v
        .iter()
        .map(|&e| model.tree.twig_col(e).expect("twig"))
        .collect();
    let fm = model.tree.f.to_real();
    let f_xx = fm.select_rows(&cap_x_rows_in_f).select_cols(&x_cols_in_f);
    let f_ix = fm.select_rows(&i_rows_in_f).select_cols(&x_cols_in_f);
    let f_xv = fm.select_rows(&cap_x_rows_in_f).select_cols(&v_cols_in_f);

    let n_x = x_rows.len();
    let n_xx = cap_x_rows.len();
    // projections onto the tree and cotree coordinate subsets
    let mut pi_x = RealMatrix::zeros(n_x, n);
    for (r, &p) in x_rows.iter().enumerate() {
        pi_x[(r, p)] = 1.0;
    }
    let mut pi_xx = RealMatrix::zeros(n_xx, n);
    for (r, &p) in cap_x_rows.iter().enumerate() {
        pi_xx[(r, p)] = 1.0;
    }
    // F_i = Pi_x - F_Xx^T Pi_X ; F_v = Pi_X + F_Xx Pi_x
    let f_i = {
        let corr = f_xx.transpose().matmul(&pi_xx);
        let mut m = pi_x.clone();
        for i in 0..n_x {
            for j in 0..n {
                m[(i, j)] -= corr[(i, j)];
            }
        }
        m
    };
    let f_v = {
        let corr = f_xx.matmul(&pi_x);
        let mut m = pi_xx.clone();
        for i in 0..n_xx {
            for j in 0..n {
                m[(i, j)] += corr[(i, j)];
            }
        }
        m
    };

    // stack [f_x; f_X] rows then permute into the residual's row order
    let a_top = f_i.matmul(&a_i);
    let a_bot = f_v.matmul(&a_v);
    let b_top = f_i.matmul(&b_i);
    let b_bot = f_v.matmul(&b_v);
    // u(t) = -(source terms): f_x rows carry -F_Ix^T I, f_X rows +F_Xv V
    let n_vs = model.split.v.len();
    let n_is = model.split.cur_links.len();
    let mut u_v_stack = RealMatrix::zeros(n, n_vs);
    let mut u_i_stack = RealMatrix::zeros(n, n_is);
    for r in 0..n_x {
        for k in 0..n_is {
            u_i_stack[(r, k)] = f_ix[(k, r)];
        }
    }
    for r in 0..n_xx {
        for k in 0..n_vs {
            u_v_stack[(n_x + r, k)] = -f_xv[(r, k)];
        }
    }

    // row permutation [f_c, f_l, f_d, f_C, f_L, f_D] -> (f_C, f_c, f_l, f_L, f_d, f_D)
    let mut target_row = vec![0usize; n];
    for k in 0..n_ct {
        target_row[k] = n_cl + k;
    }
    for k in 0..n_lt {
        target_row[n_ct + k] = n_cap + k;
    }
    for k in 0..n_dt {
        target_row[n_ct + n_lt + k] = n_cap + n_ind + k;
    }
    for k in 0..n_cl {
        target_row[n_x + k] = k;
    }
    for k in 0..n_ll {
        target_row[n_x + n_cl + k] = n_cap + n_lt + k;
    }
    for k in 0..n_dl {
        target_row[n_x + n_cl + n_ll + k] = n_cap + n_ind + n_dt + k;
    }
    let mut a = RealMatrix::zeros(n, n);
    let mut b = RealMatrix::zeros(n, n);
    let mut u_v = RealMatrix::zeros(n, n_vs);
    let mut u_i = RealMatrix::zeros(n, n_is);
    for src in 0..n {
        let dst = target_row[src];
        for j in 0..n {
            let (av, bv) = if src < n_x {
                (a_top[(src, j)], b_top[(src, j)])
            } else {
                (a_bot[(src - n_x, j)], b_bot[(src - n_x, j)])
            };
            a[(dst, j)] = av;
            b[(dst, j)] = bv;
        }
        for k in 0..n_vs {
            u_v[(dst, k)] = u_v_stack[(src, k)];
        }
        for k in 0..n_is {
            u_i[(dst, k)] = u_i_stack[(src, k)];
        }
    }
    Ok(LtiSystem {
        a,
        b,
        u_v,
        u_i,
        sources_v: model.sources_v.clone(),
        sources_i: model.sources_i.clone(),
    })
}

// ---------------------------------------------------------------------------
// Finite eigenvalues
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct EigResult {
    /// The finite pencil eigenvalues, sorted by (re, im); count = DOF.
    pub eigenvalues: Vec<Complex64>,
    /// Eigenvectors in the reduced (free-state) coordinates, one per
    /// eigenvalue.
    pub vectors_reduced: Vec<Vec<Complex64>>,
    /// Eigenvectors lifted to the full DAE state.
    pub vectors_full: Vec<Vec<Complex64>>,
    /// State indices of the reduced coordinates.
    pub ode_vars: Vec<usize>,
    /// Degree of det(A - lambda B) confirmed by the interpolation oracle.
    pub degree: usize,
}

/// The reduced ODE matrix of a linear system: columns are homogeneous
/// right-hand sides of unit states (Newton solves collapse to linear solves).
fn reduced_matrix(sys: &CpHSystem) -> Result<(RealMatrix, Vec<usize>)> {
    let red = reduce_to_ode(sys)?;
    let dof = red.dof();
    let rhs0 = red.rhs(0.0, &vec![0.0; dof])?;
    let mut m = RealMatrix::zeros(dof, dof);
    for k in 0..dof {
        let mut e = vec![0.0; dof];
        e[k] = 1.0;
        let r = red.rhs(0.0, &e)?;
        for i in 0..dof {
            m[(i, k)] = r[i] - rhs0[i];
        }
    }
    Ok((m, red.ode_vars.clone()))
}

/// Homogeneous lift: the linear map from free states to the full state with
/// the source contribution subtracted out.
fn lift_matrix(sys: &CpHSystem, ode_vars: &[usize]) -> Result<RealMatrix> {
    let red = reduce_to_ode(sys)?;
    let n = sys.layout().len();
    let dof = ode_vars.len();
    let base = red.recover_algebraic(0.0, &vec![0.0; dof])?;
    let mut s = RealMatrix::zeros(n, dof);
    for k in 0..dof {
        let mut e = vec![0.0; dof];
        e[k] = 1.0;
        let x = red.recover_algebraic(0.0, &e)?;
        for i in 0..n {
            s[(i, k)] = x[i] - base[i];
        }
    }
    Ok(s)
}

/// Determinant of (A - lambda B) by LU; zero when numerically singular.
fn pencil_det(a: &RealMatrix, b: &RealMatrix, lambda: f64) -> f64 {
    let n = a.rows();
    let mut m = RealMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = a[(i, j)] - lambda * b[(i, j)];
        }
    }
    match Lu::factor(&m, 1e-300) {
        Ok(lu) => lu.det(),
        Err(_) => 0.0,
    }
}

/// Interpolate det(A - lambda B) at dof+2 Chebyshev nodes scaled to the
/// spectral estimate, confirm its degree equals `dof`, and return the
/// polynomial coefficients (ascending, in lambda). The fit runs in the
/// normalized variable mu = lambda/s so the Vandermonde system stays well
/// conditioned regardless of the spectral magnitude.
pub fn char_poly_oracle(lti: &LtiSystem, dof: usize, spectral_scale: f64) -> Result<Vec<f64>> {
    let m = dof + 2;
    let s = spectral_scale.max(1.0);
    let mu: Vec<f64> = (0..m)
        .map(|k| (std::f64::consts::PI * (k as f64 + 0.5) / m as f64).cos())
        .collect();
    let dets: Vec<f64> = mu.iter().map(|&x| pencil_det(&lti.a, &lti.b, s * x)).collect();
    if dets.iter().all(|d| *d == 0.0) {
        return Err(Error::IrregularPencil);
    }
    // Vandermonde fit of degree m-1 = dof+1 in mu (entries bounded by 1)
    let mut v = RealMatrix::zeros(m, m);
    for (r, &x) in mu.iter().enumerate() {
        let mut p = 1.0;
        for c in 0..m {
            v[(r, c)] = p;
            p *= x;
        }
    }
    let lu = Lu::factor(&v, 1e-14).map_err(|_| Error::IrregularPencil)?;
    let mu_coeffs = lu.solve(&dets);
    // degree check in mu-space: the dof+1 coefficient must vanish relative
    // to the dof one
    let lead = mu_coeffs[dof].abs();
    if lead == 0.0 || mu_coeffs[dof + 1].abs() > 1e-6 * lead {
        return Err(Error::IrregularPencil);
    }
    // rescale to lambda: coeff_k(lambda) = coeff_k(mu) / s^k
    let mut coeffs = Vec::with_capacity(dof + 1);
    let mut pow = 1.0;
    for item in mu_coeffs.iter().take(dof + 1) {
        coeffs.push(item / pow);
        pow *= s;
    }
    Ok(coeffs)
}

/// Roots of a polynomial (ascending coefficients) via its companion matrix.
pub fn poly_roots(coeffs: &[f64]) -> Result<Vec<Complex64>> {
    let deg = coeffs.len() - 1;
    if deg == 0 {
        return Ok(Vec::new());
    }
    let lead = coeffs[deg];
    let mut comp = RealMatrix::zeros(deg, deg);
    for i in 1..deg {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..deg {
        comp[(i, deg - 1)] = -coeffs[i] / lead;
    }
    eig_dense(&comp)
}

/// Finite eigenvalues of the pencil through the linear reduction, with the
/// characteristic-polynomial oracle cross-check and eigenvectors by inverse
/// iteration on the reduced matrix.
pub fn finite_eigenvalues(lti: &LtiSystem, sys: &CpHSystem) -> Result<EigResult> {
    let (m, ode_vars) = reduced_matrix(sys)?;
    let dof = ode_vars.len();
    let mut eigenvalues = eig_dense(&m)?;
    sort_complex(&mut eigenvalues);

    // oracle: the interpolated characteristic polynomial has degree = dof
    // and the same roots; matched greedily since sorting ties on the real
    // part is not stable under roundoff. A root displaced by coefficient
    // noise (steep polynomials with a near-zero root) is accepted through
    // the backward test |p(lambda)| ~ 0 instead.
    let scale = eigenvalues.iter().map(|l| l.norm()).fold(1.0f64, f64::max);
    let coeffs = char_poly_oracle(lti, dof, 2.0 * scale)?;
    let roots = poly_roots(&coeffs)?;
    let p_scale = coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| c.abs() * (2.0 * scale).powi(k as i32))
        .fold(f64::MIN_POSITIVE, f64::max);
    let mut unmatched: Vec<Complex64> = roots.clone();
    for a in &eigenvalues {
        let Some((k, dist)) = unmatched
            .iter()
            .enumerate()
            .map(|(k, r)| (k, (a - r).norm()))
            .min_by(|x, y| x.1.total_cmp(&y.1))
        else {
            return Err(Error::IrregularPencil);
        };
        let p_at = coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * a + c);
        if dist > 1e-8 * (1.0 + scale) && p_at.norm() > 1e-8 * p_scale {
            return Err(Error::InvalidArgument(format!(
                "characteristic-polynomial oracle disagrees at {a} (nearest root off by {dist:.3e}, |p| = {:.3e})",
                p_at.norm()
            )));
        }
        unmatched.swap_remove(k);
    }

    let mut vectors_reduced: Vec<Vec<Complex64>> = Vec::with_capacity(dof);
    for k in 0..dof {
        // conjugate pairs share one inverse iteration
        if k > 0 && eigenvalues[k].im != 0.0 && eigenvalues[k].conj() == eigenvalues[k - 1] {
            let prev = vectors_reduced[k - 1].clone();
            vectors_reduced.push(prev.iter().map(|z| z.conj()).collect());
            continue;
        }
        vectors_reduced.push(eigenvector_for(&m, eigenvalues[k])?);
    }
    let s = lift_matrix(sys, &ode_vars)?;
    let n = sys.layout().len();
    let vectors_full: Vec<Vec<Complex64>> = vectors_reduced
        .iter()
        .map(|w| {
            (0..n)
                .map(|i| {
                    (0..dof)
                        .map(|k| Complex64::new(s[(i, k)], 0.0) * w[k])
                        .sum::<Complex64>()
                })
                .collect()
        })
        .collect();
    Ok(EigResult { eigenvalues, vectors_reduced, vectors_full, ode_vars, degree: dof })
}

/// Coefficients of the modal expansion `x(t) = sum c_i e^{lambda_i t} v_i`
/// for a homogeneous solution with initial reduced state `y0` (the values of
/// the full initial state at `ode_vars`).
pub fn modal_solution(eig: &EigResult, y0: &[f64]) -> Result<Vec<Complex64>> {
    let dof = eig.eigenvalues.len();
    if y0.len() != dof {
        return Err(Error::DimensionMismatch("modal projection size".into()));
    }
    if dof == 0 {
        return Ok(Vec::new());
    }
    // W c = y0 over the reduced coordinates
    let w: Vec<Vec<Complex64>> = (0..dof)
        .map(|i| (0..dof).map(|k| eig.vectors_reduced[k][i]).collect())
        .collect();
    let rhs: Vec<Complex64> = y0.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    complex_solve(&w, &rhs).map_err(|_| Error::DefectiveSpectrum)
}
