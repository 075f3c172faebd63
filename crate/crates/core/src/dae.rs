//! Assembly of the circuit DAE in control input-output form.
//!
//! Model 2 (the default) carries one DAE variable per non-source edge:
//! charges of capacitors, fluxes of inductors, and one current or voltage
//! per dissipative edge through the mixed form. Model 1 keeps both current
//! and voltage of every dissipative edge and appends the implicit relation
//! r(i, v) = 0.
//!
//! Row order is fixed as (f_C, f_c, f_l, f_L, f_d, f_D[, r]) and variable
//! order as (q_C, q_c, phi_l, phi_L, xhat), uppercase meaning cotree and
//! lowercase tree, so reports and CSV columns are reproducible.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{IntMatrix, RealMatrix};
use crate::model::{CircuitModel, Control, ImplicitRelation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Implicit dissipator relation, two variables per dissipative edge.
    Model1,
    /// Mixed dissipator form, one variable per dissipative edge.
    Model2,
}

/// Variable layout of the assembled system.
#[derive(Debug, Clone)]
pub struct VarLayout {
    pub kind: ModelKind,
    pub names: Vec<String>,
    pub n_cap_link: usize,
    pub n_cap_twig: usize,
    pub n_ind_twig: usize,
    pub n_ind_link: usize,
    pub n_dis_twig: usize,
    pub n_dis_link: usize,
}

impl VarLayout {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn n_cap(&self) -> usize {
        self.n_cap_link + self.n_cap_twig
    }

    pub fn n_ind(&self) -> usize {
        self.n_ind_twig + self.n_ind_link
    }

    pub fn n_dis(&self) -> usize {
        self.n_dis_twig + self.n_dis_link
    }

    /// Offset of the charge block (always 0), flux block, and xhat block.
    pub fn q_offset(&self) -> usize {
        0
    }

    pub fn phi_offset(&self) -> usize {
        self.n_cap()
    }

    pub fn xhat_offset(&self) -> usize {
        self.n_cap() + self.n_ind()
    }

    /// Indices of the tree-capacitor charges (the default free states).
    pub fn q_twig_indices(&self) -> Vec<usize> {
        (self.n_cap_link..self.n_cap()).collect()
    }

    /// Indices of the link-inductor fluxes (the default free states).
    pub fn phi_link_indices(&self) -> Vec<usize> {
        (self.phi_offset() + self.n_ind_twig..self.xhat_offset()).collect()
    }

    /// Indices of q_C (link capacitors).
    pub fn q_link_indices(&self) -> Vec<usize> {
        (0..self.n_cap_link).collect()
    }

    /// Indices of phi_l (twig inductors).
    pub fn phi_twig_indices(&self) -> Vec<usize> {
        (self.phi_offset()..self.phi_offset() + self.n_ind_twig).collect()
    }
}

/// Occurrence of a variable in a residual row: (variable index, derivative
/// order 0 or 1).
pub type Occurrence = (usize, u8);

/// The assembled circuit DAE: residual, output map, occurrence pattern and
/// analytic Jacobians. Immutable and shareable across solver instances.
pub struct CpHSystem {
    model: CircuitModel,
    kind: ModelKind,
    layout: VarLayout,
    row_names: Vec<String>,
    occurrence: Vec<Vec<Occurrence>>,
    relation: Option<Arc<dyn ImplicitRelation>>,
}

/// Build the Model 2 system (mixed dissipator form).
pub fn build_model2(model: CircuitModel) -> Result<CpHSystem> {
    build(model, ModelKind::Model2, None)
}

/// Build the Model 1 system with an implicit dissipator relation of size
/// n_dissipative.
pub fn build_model1(
    model: CircuitModel,
    relation: Arc<dyn ImplicitRelation>,
) -> Result<CpHSystem> {
    if relation.len() != model.split.dissipative().len() {
        return Err(Error::DimensionMismatch(format!(
            "relation has {} rows, circuit has {} dissipative edges",
            relation.len(),
            model.split.dissipative().len()
        )));
    }
    build(model, ModelKind::Model1, Some(relation))
}

/// The implicit relation induced by the model's own mixed form, for building
/// a Model 1 system equivalent to Model 2.
pub fn mixed_form_relation(model: &CircuitModel) -> Result<Arc<dyn ImplicitRelation>> {
    Ok(model.mixed_relation())
}

fn build(
    model: CircuitModel,
    kind: ModelKind,
    relation: Option<Arc<dyn ImplicitRelation>>,
) -> Result<CpHSystem> {
    let split = &model.split;
    let name = |e: usize| model.element_name(e).to_string();

    let mut names = Vec::new();
    for &e in split.cap_links.iter().chain(&split.c) {
        names.push(format!("q_{}", name(e)));
    }
    for &e in split.l.iter().chain(&split.ind_links) {
        names.push(format!("phi_{}", name(e)));
    }
    match kind {
        ModelKind::Model2 => {
            for (p, &e) in model.dissipator.edges.iter().enumerate() {
                let prefix = match model.dissipator.controls[p] {
                    Control::Current => "i",
                    Control::Voltage => "v",
                };
                names.push(format!("{prefix}_{}", name(e)));
            }
        }
        ModelKind::Model1 => {
            for &e in &split.d {
                names.push(format!("i_{}", name(e)));
            }
            for &e in &split.dis_links {
                names.push(format!("v_{}", name(e)));
            }
            for &e in &split.d {
                names.push(format!("v_{}", name(e)));
            }
            for &e in &split.dis_links {
                names.push(format!("i_{}", name(e)));
            }
        }
    }

    let layout = VarLayout {
        kind,
        names,
        n_cap_link: split.cap_links.len(),
        n_cap_twig: split.c.len(),
        n_ind_twig: split.l.len(),
        n_ind_link: split.ind_links.len(),
        n_dis_twig: split.d.len(),
        n_dis_link: split.dis_links.len(),
    };

    let mut row_names = Vec::new();
    for &e in &split.cap_links {
        row_names.push(format!("f_{}", name(e)));
    }
    for &e in &split.c {
        row_names.push(format!("f_{}", name(e)));
    }
    for &e in &split.l {
        row_names.push(format!("f_{}", name(e)));
    }
    for &e in &split.ind_links {
        row_names.push(format!("f_{}", name(e)));
    }
    for &e in &split.d {
        row_names.push(format!("f_{}", name(e)));
    }
    for &e in &split.dis_links {
        row_names.push(format!("f_{}", name(e)));
    }
    if kind == ModelKind::Model1 {
        for p in 0..split.dissipative().len() {
            row_names.push(format!("r_{p}"));
        }
    }

    let mut sys = CpHSystem {
        model,
        kind,
        layout,
        row_names,
        occurrence: Vec::new(),
        relation,
    };
    sys.occurrence = sys.build_occurrence();
    Ok(sys)
}

/// Dissipator-variable slices of the Model 1 xhat block.
struct M1Slices {
    i_twig: std::ops::Range<usize>,
    v_link: std::ops::Range<usize>,
    v_twig: std::ops::Range<usize>,
    i_link: std::ops::Range<usize>,
}

impl CpHSystem {
    pub fn layout(&self) -> &VarLayout {
        &self.layout
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn model(&self) -> &CircuitModel {
        &self.model
    }

    pub fn row_names(&self) -> &[String] {
        &self.row_names
    }

    pub fn n_rows(&self) -> usize {
        self.row_names.len()
    }

    pub fn occurrence(&self) -> &[Vec<Occurrence>] {
        &self.occurrence
    }

    /// Number of outputs: one current per voltage source plus one voltage per
    /// current source.
    pub fn n_outputs(&self) -> usize {
        self.model.split.v.len() + self.model.split.cur_links.len()
    }

    fn m1_slices(&self) -> M1Slices {
        let x0 = self.layout.xhat_offset();
        let (nd, nd_link) = (self.layout.n_dis_twig, self.layout.n_dis_link);
        M1Slices {
            i_twig: x0..x0 + nd,
            v_link: x0 + nd..x0 + nd + nd_link,
            v_twig: x0 + nd + nd_link..x0 + 2 * nd + nd_link,
            i_link: x0 + 2 * nd + nd_link..x0 + 2 * (nd + nd_link),
        }
    }

    /// Dissipative currents and voltages in DAE edge order (twigs, links),
    /// reconstructed from the state.
    fn dissipative_iv(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n_dd = self.layout.n_dis();
        match self.kind {
            ModelKind::Model2 => {
                let x0 = self.layout.xhat_offset();
                let (i_dd, v_dd, _) = self.model.dissipator.eval(&x[x0..x0 + n_dd])?;
                Ok((i_dd, v_dd))
            }
            ModelKind::Model1 => {
                let s = self.m1_slices();
                let mut i_dd = Vec::with_capacity(n_dd);
                let mut v_dd = Vec::with_capacity(n_dd);
                i_dd.extend_from_slice(&x[s.i_twig.clone()]);
                i_dd.extend_from_slice(&x[s.i_link.clone()]);
                v_dd.extend_from_slice(&x[s.v_twig.clone()]);
                v_dd.extend_from_slice(&x[s.v_link.clone()]);
                Ok((i_dd, v_dd))
            }
        }
    }

    /// Evaluate the residual f(t, x, xdot).
    pub fn residual(&self, t: f64, x: &[f64], xdot: &[f64]) -> Result<Vec<f64>> {
        let n = self.layout.len();
        if x.len() != n || xdot.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "state size {} / {}, expected {}",
                x.len(),
                xdot.len(),
                n
            )));
        }
        let lay = &self.layout;
        let (n_cl, n_ct) = (lay.n_cap_link, lay.n_cap_twig);
        let (n_lt, n_ll) = (lay.n_ind_twig, lay.n_ind_link);
        let (n_dt, n_dl) = (lay.n_dis_twig, lay.n_dis_link);
        let q = &x[..n_cl + n_ct];
        let phi = &x[lay.phi_offset()..lay.phi_offset() + n_lt + n_ll];
        let qdot = &xdot[..n_cl + n_ct];
        let phidot = &xdot[lay.phi_offset()..lay.phi_offset() + n_lt + n_ll];

        let g_q = self.model.storage_c.gradient(q)?;
        let g_phi = self.model.storage_l.gradient(phi)?;
        let (g_c_link, g_c_twig) = g_q.split_at(n_cl);
        let (g_l_twig, g_l_link) = g_phi.split_at(n_lt);
        let (qdot_link, qdot_twig) = qdot.split_at(n_cl);
        let (phidot_twig, phidot_link) = phidot.split_at(n_lt);

        let (i_dd, v_dd) = self.dissipative_iv(x)?;
        let (i_d_twig, i_d_link) = i_dd.split_at(n_dt);
        let (v_d_twig, v_d_link) = v_dd.split_at(n_dt);
        let _ = i_d_twig;

        let vs = self.source_values_v(t)?;
        let is = self.source_values_i(t)?;
        let b = &self.model.blocks;

        let mut f = Vec::with_capacity(self.n_rows());
        // f_C: v_C + F_Cv V + F_Cc v_c = 0
        for r in 0..n_cl {
            let mut s = g_c_link[r];
            s += mat_dot_row(&b.f_cv, r, &vs);
            s += mat_dot_row(&b.f_cc, r, g_c_twig);
            f.push(s);
        }
        // f_c: qdot_c - F_Cc^T qdot_C - F_Lc^T i_L - F_Dc^T i_D - F_Ic^T I
        for s_i in 0..n_ct {
            let mut s = qdot_twig[s_i];
            s -= mat_dot_col(&b.f_cc, s_i, qdot_link);
            s -= mat_dot_col(&b.f_lc, s_i, g_l_link);
            s -= mat_dot_col(&b.f_dc, s_i, i_d_link);
            s -= mat_dot_col(&b.f_ic, s_i, &is);
            f.push(s);
        }
        // f_l: i_l - F_Ll^T i_L - F_Il^T I
        for s_i in 0..n_lt {
            let mut s = g_l_twig[s_i];
            s -= mat_dot_col(&b.f_ll, s_i, g_l_link);
            s -= mat_dot_col(&b.f_il, s_i, &is);
            f.push(s);
        }
        // f_L: phidot_L + F_Ll phidot_l + F_Lc v_c + F_Ld v_d + F_Lv V
        for r in 0..n_ll {
            let mut s = phidot_link[r];
            s += mat_dot_row(&b.f_ll, r, phidot_twig);
            s += mat_dot_row(&b.f_lc, r, g_c_twig);
            s += mat_dot_row(&b.f_ld, r, v_d_twig);
            s += mat_dot_row(&b.f_lv, r, &vs);
            f.push(s);
        }
        // f_d: i_d - F_Dd^T i_D - F_Ld^T i_L - F_Id^T I
        for s_i in 0..n_dt {
            let mut s = i_dd[s_i];
            s -= mat_dot_col(&b.f_dd, s_i, i_d_link);
            s -= mat_dot_col(&b.f_ld, s_i, g_l_link);
            s -= mat_dot_col(&b.f_id, s_i, &is);
            f.push(s);
        }
        // f_D: v_D + F_Dd v_d + F_Dc v_c + F_Dv V
        for r in 0..n_dl {
            let mut s = v_d_link[r];
            s += mat_dot_row(&b.f_dd, r, v_d_twig);
            s += mat_dot_row(&b.f_dc, r, g_c_twig);
            s += mat_dot_row(&b.f_dv, r, &vs);
            f.push(s);
        }
        // Model 1: implicit relation rows
        if let Some(rel) = &self.relation {
            f.extend(rel.eval(&i_dd, &v_dd)?);
        }
        Ok(f)
    }

    /// Output map: currents of voltage sources then voltages of current
    /// sources.
    pub fn output(&self, t: f64, x: &[f64], xdot: &[f64]) -> Result<Vec<f64>> {
        let lay = &self.layout;
        let (n_cl, n_ct) = (lay.n_cap_link, lay.n_cap_twig);
        let (n_lt, _n_ll) = (lay.n_ind_twig, lay.n_ind_link);
        let q = &x[..n_cl + n_ct];
        let phi = &x[lay.phi_offset()..lay.xhat_offset()];
        let qdot_link = &xdot[..n_cl];
        let phidot_twig = &xdot[lay.phi_offset()..lay.phi_offset() + n_lt];
        let g_q = self.model.storage_c.gradient(q)?;
        let g_phi = self.model.storage_l.gradient(phi)?;
        let g_c_twig = &g_q[n_cl..];
        let g_l_link = &g_phi[n_lt..];
        let (i_dd, v_dd) = self.dissipative_iv(x)?;
        let i_d_link = &i_dd[lay.n_dis_twig..];
        let v_d_twig = &v_dd[..lay.n_dis_twig];
        let vs = self.source_values_v(t)?;
        let is = self.source_values_i(t)?;
        let b = &self.model.blocks;

        let mut y = Vec::with_capacity(self.n_outputs());
        // i_v = F_Cv^T i_C + F_Dv^T i_D + F_Lv^T i_L + F_Iv^T I
        for k in 0..self.model.split.v.len() {
            let mut s = 0.0;
            s += mat_dot_col(&b.f_cv, k, qdot_link);
            s += mat_dot_col(&b.f_dv, k, i_d_link);
            s += mat_dot_col(&b.f_lv, k, g_l_link);
            s += mat_dot_col(&b.f_iv, k, &is);
            y.push(s);
        }
        // v_I = -(F_Ic v_c + F_Id v_d + F_Il v_l + F_Iv V)
        for r in 0..self.model.split.cur_links.len() {
            let mut s = 0.0;
            s += mat_dot_row(&b.f_ic, r, g_c_twig);
            s += mat_dot_row(&b.f_id, r, v_d_twig);
            s += mat_dot_row(&b.f_il, r, phidot_twig);
            s += mat_dot_row(&b.f_iv, r, &vs);
            y.push(-s);
        }
        Ok(y)
    }

    pub fn source_values_v(&self, t: f64) -> Result<Vec<f64>> {
        self.model.sources_v.iter().map(|s| s.value(t)).collect()
    }

    pub fn source_values_i(&self, t: f64) -> Result<Vec<f64>> {
        self.model.sources_i.iter().map(|s| s.value(t)).collect()
    }

    pub fn source_derivs_v(&self, t: f64) -> Result<Vec<f64>> {
        self.model.sources_v.iter().map(|s| s.derivative(t)).collect()
    }

    pub fn source_derivs_i(&self, t: f64) -> Result<Vec<f64>> {
        self.model.sources_i.iter().map(|s| s.derivative(t)).collect()
    }

    /// Partial of the residual with respect to time (through the sources
    /// only; the constitutive terms are autonomous).
    pub fn dresidual_dt(&self, t: f64) -> Result<Vec<f64>> {
        let lay = &self.layout;
        let vdot = self.source_derivs_v(t)?;
        let idot = self.source_derivs_i(t)?;
        let b = &self.model.blocks;
        let mut out = Vec::with_capacity(self.n_rows());
        for r in 0..lay.n_cap_link {
            out.push(mat_dot_row(&b.f_cv, r, &vdot));
        }
        for s in 0..lay.n_cap_twig {
            out.push(-mat_dot_col(&b.f_ic, s, &idot));
        }
        for s in 0..lay.n_ind_twig {
            out.push(-mat_dot_col(&b.f_il, s, &idot));
        }
        for r in 0..lay.n_ind_link {
            out.push(mat_dot_row(&b.f_lv, r, &vdot));
        }
        for s in 0..lay.n_dis_twig {
            out.push(-mat_dot_col(&b.f_id, s, &idot));
        }
        for r in 0..lay.n_dis_link {
            out.push(mat_dot_row(&b.f_dv, r, &vdot));
        }
        if self.kind == ModelKind::Model1 {
            out.extend(std::iter::repeat_n(0.0, self.layout.n_dis()));
        }
        Ok(out)
    }

    /// Analytic Jacobian of the residual with respect to x.
    pub fn jacobian_x(&self, _t: f64, x: &[f64], _xdot: &[f64]) -> Result<RealMatrix> {
        let lay = &self.layout;
        let n = lay.len();
        let (n_cl, n_ct) = (lay.n_cap_link, lay.n_cap_twig);
        let (n_lt, n_ll) = (lay.n_ind_twig, lay.n_ind_link);
        let (n_dt, n_dl) = (lay.n_dis_twig, lay.n_dis_link);
        let q = &x[..n_cl + n_ct];
        let phi = &x[lay.phi_offset()..lay.xhat_offset()];
        let h_c = self.model.storage_c.hessian(q)?;
        let h_l = self.model.storage_l.hessian(phi)?;
        let b = &self.model.blocks;
        let mut j = RealMatrix::zeros(self.n_rows(), n);
        let q0 = 0;
        let p0 = lay.phi_offset();
        let x0 = lay.xhat_offset();

        // dissipative current/voltage Jacobians with respect to the xhat block
        let n_dd = lay.n_dis();
        let (di, dv, dd_cols) = match self.kind {
            ModelKind::Model2 => {
                let (di, dv) = self.model.dissipator.eval_jacobians(&x[x0..x0 + n_dd])?;
                (di, dv, n_dd)
            }
            ModelKind::Model1 => {
                // i_dd and v_dd are plain slices of xhat = (i_d, v_D, v_d, i_D)
                let cols = 2 * n_dd;
                let mut di = RealMatrix::zeros(n_dd, cols);
                let mut dv = RealMatrix::zeros(n_dd, cols);
                for p in 0..n_dt {
                    di[(p, p)] = 1.0; // i_d
                    dv[(p, n_dt + n_dl + p)] = 1.0; // v_d
                }
                for p in 0..n_dl {
                    dv[(n_dt + p, n_dt + p)] = 1.0; // v_D
                    di[(n_dt + p, 2 * n_dt + n_dl + p)] = 1.0; // i_D
                }
                (di, dv, cols)
            }
        };

        let mut row = 0;
        // f_C rows: d/dq = [H_CC + F_Cc H_cC | H_Cc + F_Cc H_cc]
        for r in 0..n_cl {
            for col in 0..n_cl + n_ct {
                let mut s = h_c[(r, col)];
                for k in 0..n_ct {
                    s += b.f_cc[(r, k)] as f64 * h_c[(n_cl + k, col)];
                }
                j[(row, q0 + col)] = s;
            }
            row += 1;
        }
        // f_c rows: d/dphi = -F_Lc^T H_L(link rows); d/dxhat = -F_Dc^T di(link rows)
        for s_i in 0..n_ct {
            for col in 0..n_lt + n_ll {
                let mut s = 0.0;
                for r in 0..n_ll {
                    s -= b.f_lc[(r, s_i)] as f64 * h_l[(n_lt + r, col)];
                }
                j[(row, p0 + col)] = s;
            }
            for col in 0..dd_cols {
                let mut s = 0.0;
                for r in 0..n_dl {
                    s -= b.f_dc[(r, s_i)] as f64 * di[(n_dt + r, col)];
                }
                j[(row, x0 + col)] = s;
            }
            row += 1;
        }
        // f_l rows: d/dphi = H_l(twig rows) - F_Ll^T H_L(link rows)
        for s_i in 0..n_lt {
            for col in 0..n_lt + n_ll {
                let mut s = h_l[(s_i, col)];
                for r in 0..n_ll {
                    s -= b.f_ll[(r, s_i)] as f64 * h_l[(n_lt + r, col)];
                }
                j[(row, p0 + col)] = s;
            }
            row += 1;
        }
        // f_L rows: d/dq = F_Lc H_c(twig rows); d/dxhat = F_Ld dv(twig rows)
        for r in 0..n_ll {
            for col in 0..n_cl + n_ct {
                let mut s = 0.0;
                for k in 0..n_ct {
                    s += b.f_lc[(r, k)] as f64 * h_c[(n_cl + k, col)];
                }
                j[(row, q0 + col)] = s;
            }
            for col in 0..dd_cols {
                let mut s = 0.0;
                for k in 0..n_dt {
                    s += b.f_ld[(r, k)] as f64 * dv[(k, col)];
                }
                j[(row, x0 + col)] = s;
            }
            row += 1;
        }
        // f_d rows: d/dphi = -F_Ld^T H_L(link rows); d/dxhat = di(twig) - F_Dd^T di(link)
        for s_i in 0..n_dt {
            for col in 0..n_lt + n_ll {
                let mut s = 0.0;
                for r in 0..n_ll {
                    s -= b.f_ld[(r, s_i)] as f64 * h_l[(n_lt + r, col)];
                }
                j[(row, p0 + col)] = s;
            }
            for col in 0..dd_cols {
                let mut s = di[(s_i, col)];
                for r in 0..n_dl {
                    s -= b.f_dd[(r, s_i)] as f64 * di[(n_dt + r, col)];
                }
                j[(row, x0 + col)] = s;
            }
            row += 1;
        }
        // f_D rows: d/dq = F_Dc H_c(twig rows); d/dxhat = dv(link) + F_Dd dv(twig)
        for r in 0..n_dl {
            for col in 0..n_cl + n_ct {
                let mut s = 0.0;
                for k in 0..n_ct {
                    s += b.f_dc[(r, k)] as f64 * h_c[(n_cl + k, col)];
                }
                j[(row, q0 + col)] = s;
            }
            for col in 0..dd_cols {
                let mut s = dv[(n_dt + r, col)];
                for k in 0..n_dt {
                    s += b.f_dd[(r, k)] as f64 * dv[(k, col)];
                }
                j[(row, x0 + col)] = s;
            }
            row += 1;
        }
        // Model 1 relation rows
        if let Some(rel) = &self.relation {
            let (i_dd, v_dd) = self.dissipative_iv(x)?;
            let (dri, drv) = rel.jacobian(&i_dd, &v_dd)?;
            // chain through the slice layout of xhat
            for p in 0..n_dd {
                for c in 0..n_dd {
                    // columns of i_dd live at (i_d, i_D) slices, v_dd at (v_d, v_D)
                    let icol = if c < n_dt { c } else { 2 * n_dt + n_dl + (c - n_dt) };
                    let vcol = if c < n_dt { n_dt + n_dl + c } else { n_dt + (c - n_dt) };
                    j[(row + p, x0 + icol)] += dri[(p, c)];
                    j[(row + p, x0 + vcol)] += drv[(p, c)];
                }
            }
        }
        Ok(j)
    }

    /// Analytic Jacobian of the residual with respect to xdot.
    pub fn jacobian_xdot(&self, _t: f64, _x: &[f64], _xdot: &[f64]) -> Result<RealMatrix> {
        let lay = &self.layout;
        let (n_cl, n_ct) = (lay.n_cap_link, lay.n_cap_twig);
        let (n_lt, n_ll) = (lay.n_ind_twig, lay.n_ind_link);
        let b = &self.model.blocks;
        let mut j = RealMatrix::zeros(self.n_rows(), lay.len());
        let p0 = lay.phi_offset();
        // f_c rows: [-F_Cc^T | I] on the qdot block
        let mut row = n_cl;
        for s_i in 0..n_ct {
            for r in 0..n_cl {
                j[(row, r)] = -(b.f_cc[(r, s_i)] as f64);
            }
            j[(row, n_cl + s_i)] = 1.0;
            row += 1;
        }
        // f_L rows: [F_Ll | I] on the phidot block
        row = n_cl + n_ct + n_lt;
        for r in 0..n_ll {
            for s_i in 0..n_lt {
                j[(row, p0 + s_i)] = b.f_ll[(r, s_i)] as f64;
            }
            j[(row, p0 + n_lt + r)] = 1.0;
            row += 1;
        }
        Ok(j)
    }

    /// Finite-difference Jacobians, used as an oracle against the analytic
    /// path.
    pub fn fd_jacobians(
        &self,
        t: f64,
        x: &[f64],
        xdot: &[f64],
        h: f64,
    ) -> Result<(RealMatrix, RealMatrix)> {
        let n = self.layout.len();
        let m = self.n_rows();
        let mut jx = RealMatrix::zeros(m, n);
        let mut jxd = RealMatrix::zeros(m, n);
        for col in 0..n {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[col] += h;
            xm[col] -= h;
            let fp = self.residual(t, &xp, xdot)?;
            let fm = self.residual(t, &xm, xdot)?;
            for r in 0..m {
                jx[(r, col)] = (fp[r] - fm[r]) / (2.0 * h);
            }
            let mut xdp = xdot.to_vec();
            let mut xdm = xdot.to_vec();
            xdp[col] += h;
            xdm[col] -= h;
            let fp = self.residual(t, x, &xdp)?;
            let fm = self.residual(t, x, &xdm)?;
            for r in 0..m {
                jxd[(r, col)] = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
        Ok((jx, jxd))
    }

    /// Reconstruct the full per-edge current and voltage vectors from a state
    /// (outputs included). At residual zeros these satisfy both Kirchhoff
    /// laws exactly.
    pub fn edge_currents_voltages(
        &self,
        t: f64,
        x: &[f64],
        xdot: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let lay = &self.layout;
        let split = &self.model.split;
        let bcount = self.model.graph.edge_count();
        let mut i = vec![0.0; bcount];
        let mut v = vec![0.0; bcount];
        let (n_cl, _n_ct) = (lay.n_cap_link, lay.n_cap_twig);
        let n_lt = lay.n_ind_twig;
        let q = &x[..lay.phi_offset()];
        let phi = &x[lay.phi_offset()..lay.xhat_offset()];
        let g_q = self.model.storage_c.gradient(q)?;
        let g_phi = self.model.storage_l.gradient(phi)?;
        let (i_dd, v_dd) = self.dissipative_iv(x)?;
        let y = self.output(t, x, xdot)?;
        let vs = self.source_values_v(t)?;
        let is = self.source_values_i(t)?;

        for (p, &e) in split.cap_links.iter().enumerate() {
            i[e] = xdot[p];
            v[e] = g_q[p];
        }
        for (p, &e) in split.c.iter().enumerate() {
            i[e] = xdot[n_cl + p];
            v[e] = g_q[n_cl + p];
        }
        for (p, &e) in split.l.iter().enumerate() {
            v[e] = xdot[lay.phi_offset() + p];
            i[e] = g_phi[p];
        }
        for (p, &e) in split.ind_links.iter().enumerate() {
            v[e] = xdot[lay.phi_offset() + n_lt + p];
            i[e] = g_phi[n_lt + p];
        }
        for (p, &e) in self.model.dissipator.edges.iter().enumerate() {
            i[e] = i_dd[p];
            v[e] = v_dd[p];
        }
        for (k, &e) in split.v.iter().enumerate() {
            v[e] = vs[k];
            i[e] = y[k];
        }
        for (k, &e) in split.cur_links.iter().enumerate() {
            i[e] = is[k];
            v[e] = y[split.v.len() + k];
        }
        Ok((i, v))
    }

    /// Instantaneous energy-balance pieces at a state: (dH/dt, dissipated
    /// power, port power). The balance residual is dH + dissipated - port.
    pub fn power_balance(&self, t: f64, x: &[f64], xdot: &[f64]) -> Result<(f64, f64, f64)> {
        let lay = &self.layout;
        let q = &x[..lay.phi_offset()];
        let phi = &x[lay.phi_offset()..lay.xhat_offset()];
        let qdot = &xdot[..lay.phi_offset()];
        let phidot = &xdot[lay.phi_offset()..lay.xhat_offset()];
        let g_q = self.model.storage_c.gradient(q)?;
        let g_phi = self.model.storage_l.gradient(phi)?;
        let hdot = crate::linalg::dot(&g_q, qdot) + crate::linalg::dot(&g_phi, phidot);
        let (i_dd, v_dd) = self.dissipative_iv(x)?;
        let dissipated = crate::linalg::dot(&i_dd, &v_dd);
        let y = self.output(t, x, xdot)?;
        let vs = self.source_values_v(t)?;
        let is = self.source_values_i(t)?;
        let nv = vs.len();
        let mut port = 0.0;
        for k in 0..nv {
            port -= y[k] * vs[k];
        }
        for k in 0..is.len() {
            port -= y[nv + k] * is[k];
        }
        Ok((hdot, dissipated, port))
    }

    // -- occurrence pattern ------------------------------------------------

    fn build_occurrence(&self) -> Vec<Vec<Occurrence>> {
        let lay = &self.layout;
        let split = &self.model.split;
        let b = &self.model.blocks;
        let (n_cl, n_ct) = (lay.n_cap_link, lay.n_cap_twig);
        let (n_lt, n_ll) = (lay.n_ind_twig, lay.n_ind_link);
        let (n_dt, n_dl) = (lay.n_dis_twig, lay.n_dis_link);
        let q0 = 0;
        let p0 = lay.phi_offset();
        let x0 = lay.xhat_offset();
        let cap_indep = self.model.storage_c.independent();
        let ind_indep = self.model.storage_l.independent();
        let all_q: Vec<usize> = (q0..q0 + n_cl + n_ct).collect();
        let all_phi: Vec<usize> = (p0..p0 + n_lt + n_ll).collect();

        // variable indices a dissipative quantity depends on (order 0)
        let dd_current = |p: usize| -> Vec<usize> {
            match self.kind {
                ModelKind::Model2 => {
                    self.model.dissipator.dependencies(p).iter().map(|&k| x0 + k).collect()
                }
                ModelKind::Model1 => {
                    let s = self.m1_slices();
                    if p < n_dt {
                        vec![s.i_twig.start + p]
                    } else {
                        vec![s.i_link.start + (p - n_dt)]
                    }
                }
            }
        };
        let dd_voltage = |p: usize| -> Vec<usize> {
            match self.kind {
                ModelKind::Model2 => {
                    self.model.dissipator.dependencies(p).iter().map(|&k| x0 + k).collect()
                }
                ModelKind::Model1 => {
                    let s = self.m1_slices();
                    if p < n_dt {
                        vec![s.v_twig.start + p]
                    } else {
                        vec![s.v_link.start + (p - n_dt)]
                    }
                }
            }
        };

        let mut occ: Vec<Vec<Occurrence>> = Vec::with_capacity(self.n_rows());
        let push_sorted = |mut row: Vec<Occurrence>, occ: &mut Vec<Vec<Occurrence>>| {
            row.sort_unstable();
            row.dedup();
            occ.push(row);
        };

        // f_C rows
        for r in 0..n_cl {
            let mut row: Vec<Occurrence> = Vec::new();
            if cap_indep {
                row.push((q0 + r, 0));
                for k in 0..n_ct {
                    if b.f_cc[(r, k)] != 0 {
                        row.push((q0 + n_cl + k, 0));
                    }
                }
            } else {
                row.extend(all_q.iter().map(|&j| (j, 0)));
            }
            push_sorted(row, &mut occ);
        }
        // f_c rows
        for s_i in 0..n_ct {
            let mut row: Vec<Occurrence> = vec![(q0 + n_cl + s_i, 1)];
            for r in 0..n_cl {
                if b.f_cc[(r, s_i)] != 0 {
                    row.push((q0 + r, 1));
                }
            }
            for r in 0..n_ll {
                if b.f_lc[(r, s_i)] != 0 {
                    if ind_indep {
                        row.push((p0 + n_lt + r, 0));
                    } else {
                        row.extend(all_phi.iter().map(|&j| (j, 0)));
                    }
                }
            }
            for r in 0..n_dl {
                if b.f_dc[(r, s_i)] != 0 {
                    row.extend(dd_current(n_dt + r).into_iter().map(|j| (j, 0)));
                }
            }
            push_sorted(row, &mut occ);
        }
        // f_l rows
        for s_i in 0..n_lt {
            let mut row: Vec<Occurrence> = Vec::new();
            if ind_indep {
                row.push((p0 + s_i, 0));
                for r in 0..n_ll {
                    if b.f_ll[(r, s_i)] != 0 {
                        row.push((p0 + n_lt + r, 0));
                    }
                }
            } else {
                row.extend(all_phi.iter().map(|&j| (j, 0)));
            }
            push_sorted(row, &mut occ);
        }
        // f_L rows
        for r in 0..n_ll {
            let mut row: Vec<Occurrence> = vec![(p0 + n_lt + r, 1)];
            for s_i in 0..n_lt {
                if b.f_ll[(r, s_i)] != 0 {
                    row.push((p0 + s_i, 1));
                }
            }
            for k in 0..n_ct {
                if b.f_lc[(r, k)] != 0 {
                    if cap_indep {
                        row.push((q0 + n_cl + k, 0));
                    } else {
                        row.extend(all_q.iter().map(|&j| (j, 0)));
                    }
                }
            }
            for k in 0..n_dt {
                if b.f_ld[(r, k)] != 0 {
                    row.extend(dd_voltage(k).into_iter().map(|j| (j, 0)));
                }
            }
            push_sorted(row, &mut occ);
        }
        // f_d rows
        for s_i in 0..n_dt {
            let mut row: Vec<Occurrence> = Vec::new();
            row.extend(dd_current(s_i).into_iter().map(|j| (j, 0)));
            for r in 0..n_dl {
                if b.f_dd[(r, s_i)] != 0 {
                    row.extend(dd_current(n_dt + r).into_iter().map(|j| (j, 0)));
                }
            }
            for r in 0..n_ll {
                if b.f_ld[(r, s_i)] != 0 {
                    if ind_indep {
                        row.push((p0 + n_lt + r, 0));
                    } else {
                        row.extend(all_phi.iter().map(|&j| (j, 0)));
                    }
                }
            }
            push_sorted(row, &mut occ);
        }
        // f_D rows
        for r in 0..n_dl {
            let mut row: Vec<Occurrence> = Vec::new();
            row.extend(dd_voltage(n_dt + r).into_iter().map(|j| (j, 0)));
            for k in 0..n_dt {
                if b.f_dd[(r, k)] != 0 {
                    row.extend(dd_voltage(k).into_iter().map(|j| (j, 0)));
                }
            }
            for k in 0..n_ct {
                if b.f_dc[(r, k)] != 0 {
                    if cap_indep {
                        row.push((q0 + n_cl + k, 0));
                    } else {
                        row.extend(all_q.iter().map(|&j| (j, 0)));
                    }
                }
            }
            push_sorted(row, &mut occ);
        }
        // Model 1 relation rows
        if let Some(rel) = &self.relation {
            let n_dd = lay.n_dis();
            for p in 0..n_dd {
                let mut row: Vec<Occurrence> = Vec::new();
                if rel.independent() {
                    row.extend(dd_current(p).into_iter().map(|j| (j, 0)));
                    row.extend(dd_voltage(p).into_iter().map(|j| (j, 0)));
                } else {
                    for k in 0..n_dd {
                        row.extend(dd_current(k).into_iter().map(|j| (j, 0)));
                        row.extend(dd_voltage(k).into_iter().map(|j| (j, 0)));
                    }
                }
                push_sorted(row, &mut occ);
            }
        }
        let _ = split;
        occ
    }
}

// a system is shared across concurrent solver instances
const _: fn() = || {
    fn assert_send_sync<T: Send + Sync>() {}
    assert_send_sync::<CpHSystem>();
};

fn mat_dot_row(m: &IntMatrix, row: usize, v: &[f64]) -> f64 {
    let mut s = 0.0;
    for (j, &x) in v.iter().enumerate() {
        let c = m[(row, j)];
        if c != 0 {
            s += c as f64 * x;
        }
    }
    s
}

fn mat_dot_col(m: &IntMatrix, col: usize, v: &[f64]) -> f64 {
    let mut s = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let c = m[(i, col)];
        if c != 0 {
            s += c as f64 * x;
        }
    }
    s
}

/// Lift a Model 2 state to the matching Model 1 state: copy the storage
/// variables and reconstruct (i_d, v_D, v_d, i_D) through the mixed form.
/// Derivative entries for the dissipative block are irrelevant (the residual
/// never reads them) and are set to zero.
pub fn lift_model2_state(
    model: &CircuitModel,
    sys1: &CpHSystem,
    x2: &[f64],
    xd2: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n_store = model.split.capacitors().len() + model.split.inductors().len();
    let n_dd = model.split.dissipative().len();
    let n_dt = model.split.d.len();
    let (i_dd, v_dd, _) = model.dissipator.eval(&x2[n_store..n_store + n_dd])?;
    let mut x1 = vec![0.0; sys1.layout().len()];
    let mut xd1 = vec![0.0; sys1.layout().len()];
    x1[..n_store].copy_from_slice(&x2[..n_store]);
    xd1[..n_store].copy_from_slice(&xd2[..n_store]);
    let s = sys1.m1_slices();
    for p in 0..n_dt {
        x1[s.i_twig.start + p] = i_dd[p];
        x1[s.v_twig.start + p] = v_dd[p];
    }
    for p in 0..(n_dd - n_dt) {
        x1[s.v_link.start + p] = v_dd[n_dt + p];
        x1[s.i_link.start + p] = i_dd[n_dt + p];
    }
    Ok((x1, xd1))
}
