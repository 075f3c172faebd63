//! Circuit semantic layer on top of a normal tree: the eightfold edge split,
//! the block decomposition of the Kron matrix, storage laws (gradients,
//! Hessians, energy), the mixed dissipator form, passivity checks, and
//! node-identification composition of circuits.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{diff_expr, eval_expr, ExprAst};
use crate::graph::{CircuitGraph, EdgeClass, NormalTree};
use crate::linalg::{is_pd, is_pdmp, IntMatrix, RealMatrix};
use crate::netlist::{CircuitSpec, ElementKind, ElementSpec, Law, UnionFind};

// ---------------------------------------------------------------------------
// Edge split and block F
// ---------------------------------------------------------------------------

/// The eightfold split of the edge set by (class, tree membership).
/// Lowercase fields are twigs, `*_links` are links; all ascending edge ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeSplit {
    pub v: Vec<usize>,
    pub c: Vec<usize>,
    pub d: Vec<usize>,
    pub l: Vec<usize>,
    pub cap_links: Vec<usize>,
    pub dis_links: Vec<usize>,
    pub ind_links: Vec<usize>,
    pub cur_links: Vec<usize>,
}

impl EdgeSplit {
    /// All dissipative edges in DAE order: twigs first, then links.
    pub fn dissipative(&self) -> Vec<usize> {
        self.d.iter().chain(&self.dis_links).copied().collect()
    }

    /// All capacitors in DAE order: links first, then twigs.
    pub fn capacitors(&self) -> Vec<usize> {
        self.cap_links.iter().chain(&self.c).copied().collect()
    }

    /// All inductors in DAE order: twigs first, then links.
    pub fn inductors(&self) -> Vec<usize> {
        self.l.iter().chain(&self.ind_links).copied().collect()
    }
}

/// Split the edges of a normal tree into the eight classes. Errors with
/// `NotNormal` if a current source sits on the tree or a voltage source off
/// it.
pub fn split_edges(tree: &NormalTree, kinds: &[ElementKind]) -> Result<EdgeSplit> {
    let mut s = EdgeSplit {
        v: vec![],
        c: vec![],
        d: vec![],
        l: vec![],
        cap_links: vec![],
        dis_links: vec![],
        ind_links: vec![],
        cur_links: vec![],
    };
    for &e in &tree.tree {
        match EdgeClass::of(kinds[e]) {
            EdgeClass::V => s.v.push(e),
            EdgeClass::C => s.c.push(e),
            EdgeClass::D => s.d.push(e),
            EdgeClass::L => s.l.push(e),
            EdgeClass::I => {
                return Err(Error::NotNormal(format!("current source edge {e} on the tree")))
            }
        }
    }
    for &e in &tree.cotree {
        match EdgeClass::of(kinds[e]) {
            EdgeClass::V => {
                return Err(Error::NotNormal(format!("voltage source edge {e} off the tree")))
            }
            EdgeClass::C => s.cap_links.push(e),
            EdgeClass::D => s.dis_links.push(e),
            EdgeClass::L => s.ind_links.push(e),
            EdgeClass::I => s.cur_links.push(e),
        }
    }
    Ok(s)
}

/// Named sub-blocks of `F`. Rows by cotree class (C, D, L, I), columns by
/// tree class (v, c, d, l). The C-d, C-l and D-l blocks of a normal tree
/// vanish and are checked at construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockF {
    pub f_cv: IntMatrix,
    pub f_cc: IntMatrix,
    pub f_dv: IntMatrix,
    pub f_dc: IntMatrix,
    pub f_dd: IntMatrix,
    pub f_lv: IntMatrix,
    pub f_lc: IntMatrix,
    pub f_ld: IntMatrix,
    pub f_ll: IntMatrix,
    pub f_iv: IntMatrix,
    pub f_ic: IntMatrix,
    pub f_id: IntMatrix,
    pub f_il: IntMatrix,
}

pub fn block_f(tree: &NormalTree, split: &EdgeSplit) -> Result<BlockF> {
    let rows = |set: &[usize]| -> Vec<usize> {
        set.iter().map(|&e| tree.link_row(e).expect("link set member")).collect()
    };
    let cols = |set: &[usize]| -> Vec<usize> {
        set.iter().map(|&e| tree.twig_col(e).expect("twig set member")).collect()
    };
    let sub = |r: &[usize], c: &[usize]| -> IntMatrix {
        tree.f.select_rows(r).select_cols(c)
    };
    let (rc, rd, rl, ri) =
        (rows(&split.cap_links), rows(&split.dis_links), rows(&split.ind_links), rows(&split.cur_links));
    let (cv, cc, cd, cl) = (cols(&split.v), cols(&split.c), cols(&split.d), cols(&split.l));
    for (name, m) in [
        ("F_Cd", sub(&rc, &cd)),
        ("F_Cl", sub(&rc, &cl)),
        ("F_Dl", sub(&rd, &cl)),
    ] {
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                if m[(i, j)] != 0 {
                    return Err(Error::NotNormal(format!("nonzero in block {name}")));
                }
            }
        }
    }
    Ok(BlockF {
        f_cv: sub(&rc, &cv),
        f_cc: sub(&rc, &cc),
        f_dv: sub(&rd, &cv),
        f_dc: sub(&rd, &cc),
        f_dd: sub(&rd, &cd),
        f_lv: sub(&rl, &cv),
        f_lc: sub(&rl, &cc),
        f_ld: sub(&rl, &cd),
        f_ll: sub(&rl, &cl),
        f_iv: sub(&ri, &cv),
        f_ic: sub(&ri, &cc),
        f_id: sub(&ri, &cd),
        f_il: sub(&ri, &cl),
    })
}

// ---------------------------------------------------------------------------
// Storage laws
// ---------------------------------------------------------------------------

/// Gradient of the stored energy of one element group (capacitors over
/// charge, inductors over flux), with its Hessian and the energy itself.
///
/// The state ordering is the DAE ordering of the group: capacitor links
/// before twigs, inductor twigs before links.
pub trait Storage: Send + Sync {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn gradient(&self, state: &[f64]) -> Result<Vec<f64>>;
    fn hessian(&self, state: &[f64]) -> Result<RealMatrix>;
    fn energy(&self, state: &[f64]) -> Result<f64>;
    /// True when element j's gradient depends only on state j (used to build
    /// exact occurrence patterns; coupled implementations return false).
    fn independent(&self) -> bool {
        false
    }
}

/// A single uncoupled law: either linear with a positive coefficient
/// (`gradient = state / coeff`) or an expression `gradient = g(state)`.
#[derive(Debug, Clone)]
pub enum ScalarLaw {
    Linear { coeff: f64 },
    Nonlinear { g: ExprAst, dg: ExprAst },
}

impl ScalarLaw {
    fn from_law(law: &Law) -> ScalarLaw {
        match law {
            Law::Constant(c) => ScalarLaw::Linear { coeff: *c },
            Law::Expression(ast) => {
                ScalarLaw::Nonlinear { g: ast.clone(), dg: diff_expr(ast) }
            }
        }
    }

    fn value(&self, x: f64) -> Result<f64> {
        match self {
            ScalarLaw::Linear { coeff } => Ok(x / coeff),
            ScalarLaw::Nonlinear { g, .. } => eval_expr(g, x),
        }
    }

    fn derivative(&self, x: f64) -> Result<f64> {
        match self {
            ScalarLaw::Linear { coeff } => Ok(1.0 / coeff),
            ScalarLaw::Nonlinear { dg, .. } => eval_expr(dg, x),
        }
    }

    fn energy(&self, x: f64) -> Result<f64> {
        match self {
            ScalarLaw::Linear { coeff } => Ok(x * x / (2.0 * coeff)),
            ScalarLaw::Nonlinear { g, .. } => adaptive_simpson(&|t| eval_expr(g, t), 0.0, x, 1e-10),
        }
    }
}

/// Independent (element-wise) storage: diagonal Hessian, separable energy.
pub struct IndependentStorage {
    laws: Vec<ScalarLaw>,
}

impl IndependentStorage {
    pub fn new(laws: Vec<ScalarLaw>) -> Self {
        IndependentStorage { laws }
    }
}

impl Storage for IndependentStorage {
    fn len(&self) -> usize {
        self.laws.len()
    }

    fn gradient(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.laws.iter().zip(state).map(|(law, &x)| law.value(x)).collect()
    }

    fn hessian(&self, state: &[f64]) -> Result<RealMatrix> {
        let d: Vec<f64> = self
            .laws
            .iter()
            .zip(state)
            .map(|(law, &x)| law.derivative(x))
            .collect::<Result<_>>()?;
        Ok(RealMatrix::diag(&d))
    }

    fn energy(&self, state: &[f64]) -> Result<f64> {
        let mut h = 0.0;
        for (law, &x) in self.laws.iter().zip(state) {
            h += law.energy(x)?;
        }
        Ok(h)
    }

    fn independent(&self) -> bool {
        true
    }
}

type GradFn = dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync;
type HessFn = dyn Fn(&[f64]) -> Result<RealMatrix> + Send + Sync;

/// Coupled storage supplied through callbacks (library API only; the file
/// format stays independent-only). Energy is recovered from the gradient by
/// quadrature along the ray from the origin.
pub struct CoupledStorage {
    n: usize,
    grad: Box<GradFn>,
    hess: Box<HessFn>,
}

impl CoupledStorage {
    pub fn new(n: usize, grad: Box<GradFn>, hess: Box<HessFn>) -> Self {
        CoupledStorage { n, grad, hess }
    }
}

impl Storage for CoupledStorage {
    fn len(&self) -> usize {
        self.n
    }

    fn gradient(&self, state: &[f64]) -> Result<Vec<f64>> {
        (self.grad)(state)
    }

    fn hessian(&self, state: &[f64]) -> Result<RealMatrix> {
        (self.hess)(state)
    }

    fn energy(&self, state: &[f64]) -> Result<f64> {
        // H(x) = ∫_0^1 g(s x) · x ds for a conservative gradient with H(0)=0
        let g = &self.grad;
        let x = state.to_vec();
        adaptive_simpson(
            &move |s| {
                let scaled: Vec<f64> = x.iter().map(|v| s * v).collect();
                let grad = g(&scaled)?;
                Ok(grad.iter().zip(&x).map(|(a, b)| a * b).sum())
            },
            0.0,
            1.0,
            1e-10,
        )
    }
}

/// Adaptive Simpson quadrature with relative tolerance.
pub fn adaptive_simpson(
    f: &dyn Fn(f64) -> Result<f64>,
    a: f64,
    b: f64,
    rel_tol: f64,
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> Result<f64>,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> Result<f64> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm)?;
        let frm = f(rm)?;
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return Ok(left + right + delta / 15.0);
        }
        Ok(recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
    }
    let fa = f(a)?;
    let fm = f(0.5 * (a + b))?;
    let fb = f(b)?;
    let whole = simpson(fa, fm, fb, a, b);
    let scale = whole.abs().max(1e-30);
    recurse(f, a, b, fa, fm, fb, whole, rel_tol * scale, 48)
}

// ---------------------------------------------------------------------------
// Dissipators: mixed form
// ---------------------------------------------------------------------------

/// Per-edge control choice of the mixed dissipator representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    /// Resistor-style: the DAE variable is the current, rho returns voltage.
    Current,
    /// Conductor-style: the DAE variable is the voltage, rho returns current.
    Voltage,
}

/// The map rho of the mixed form: given the controlling quantities (current
/// for R-set edges, voltage for G-set edges) return the complementary ones.
pub trait Rho: Send + Sync {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn rho(&self, xhat: &[f64]) -> Result<Vec<f64>>;
    fn rho_jacobian(&self, xhat: &[f64]) -> Result<RealMatrix>;
    fn independent(&self) -> bool {
        false
    }
}

pub struct IndependentRho {
    laws: Vec<ScalarLaw>,
}

impl IndependentRho {
    pub fn new(laws: Vec<ScalarLaw>) -> Self {
        IndependentRho { laws }
    }
}

impl Rho for IndependentRho {
    fn len(&self) -> usize {
        self.laws.len()
    }

    fn rho(&self, xhat: &[f64]) -> Result<Vec<f64>> {
        self.laws
            .iter()
            .zip(xhat)
            .map(|(law, &x)| match law {
                // mixed form wants the complementary quantity, so the linear
                // coefficient multiplies rather than divides
                ScalarLaw::Linear { coeff } => Ok(coeff * x),
                ScalarLaw::Nonlinear { g, .. } => eval_expr(g, x),
            })
            .collect()
    }

    fn rho_jacobian(&self, xhat: &[f64]) -> Result<RealMatrix> {
        let d: Vec<f64> = self
            .laws
            .iter()
            .zip(xhat)
            .map(|(law, &x)| match law {
                ScalarLaw::Linear { coeff } => Ok(*coeff),
                ScalarLaw::Nonlinear { dg, .. } => eval_expr(dg, x),
            })
            .collect::<Result<_>>()?;
        Ok(RealMatrix::diag(&d))
    }

    fn independent(&self) -> bool {
        true
    }
}

pub struct CoupledRho {
    n: usize,
    rho: Box<GradFn>,
    jac: Box<HessFn>,
}

impl CoupledRho {
    pub fn new(n: usize, rho: Box<GradFn>, jac: Box<HessFn>) -> Self {
        CoupledRho { n, rho, jac }
    }
}

impl Rho for CoupledRho {
    fn len(&self) -> usize {
        self.n
    }

    fn rho(&self, xhat: &[f64]) -> Result<Vec<f64>> {
        (self.rho)(xhat)
    }

    fn rho_jacobian(&self, xhat: &[f64]) -> Result<RealMatrix> {
        (self.jac)(xhat)
    }
}

/// Mixed representation of the dissipative structure: one DAE variable per
/// dissipative edge (current or voltage per the control split) plus the map
/// rho recovering the complementary quantities.
pub struct DissipatorForm {
    /// Dissipative edges in DAE order (twigs then links), ascending per part.
    pub edges: Vec<usize>,
    pub controls: Vec<Control>,
    pub rho: Arc<dyn Rho>,
}

impl DissipatorForm {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Reconstruct the full current and voltage vectors on the dissipative
    /// edges (the flip-permutation applied to `[xhat; rho(xhat)]`), along
    /// with the Jacobian of rho.
    pub fn eval(&self, xhat: &[f64]) -> Result<(Vec<f64>, Vec<f64>, RealMatrix)> {
        if xhat.len() != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "dissipator state has {} entries, expected {}",
                xhat.len(),
                self.len()
            )));
        }
        let comp = self.rho.rho(xhat)?;
        let jac = self.rho.rho_jacobian(xhat)?;
        let n = self.len();
        let mut i_dd = vec![0.0; n];
        let mut v_dd = vec![0.0; n];
        for p in 0..n {
            match self.controls[p] {
                Control::Current => {
                    i_dd[p] = xhat[p];
                    v_dd[p] = comp[p];
                }
                Control::Voltage => {
                    v_dd[p] = xhat[p];
                    i_dd[p] = comp[p];
                }
            }
        }
        Ok((i_dd, v_dd, jac))
    }

    /// Jacobians of the reconstructed (i, v) with respect to xhat.
    pub fn eval_jacobians(&self, xhat: &[f64]) -> Result<(RealMatrix, RealMatrix)> {
        let jac = self.rho.rho_jacobian(xhat)?;
        let n = self.len();
        let mut di = RealMatrix::zeros(n, n);
        let mut dv = RealMatrix::zeros(n, n);
        for p in 0..n {
            match self.controls[p] {
                Control::Current => {
                    di[(p, p)] = 1.0;
                    for j in 0..n {
                        dv[(p, j)] = jac[(p, j)];
                    }
                }
                Control::Voltage => {
                    dv[(p, p)] = 1.0;
                    for j in 0..n {
                        di[(p, j)] = jac[(p, j)];
                    }
                }
            }
        }
        Ok((di, dv))
    }

    /// Which xhat entries influence edge position `p`'s current/voltage.
    pub fn dependencies(&self, p: usize) -> Vec<usize> {
        if self.rho.independent() {
            vec![p]
        } else {
            (0..self.len()).collect()
        }
    }
}

// ---------------------------------------------------------------------------
// Implicit dissipator relation r(i, v) = 0 (Model 1)
// ---------------------------------------------------------------------------

/// Implicit constitutive relation over the full dissipative current and
/// voltage vectors, with its Jacobian pair `(dr/di, dr/dv)`.
pub trait ImplicitRelation: Send + Sync {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn eval(&self, i_dd: &[f64], v_dd: &[f64]) -> Result<Vec<f64>>;
    fn jacobian(&self, i_dd: &[f64], v_dd: &[f64]) -> Result<(RealMatrix, RealMatrix)>;
    fn independent(&self) -> bool {
        false
    }
}

/// The implicit relation induced by a mixed form: for each edge the residual
/// is (complement quantity) - rho(control quantities).
pub struct MixedFormRelation {
    controls: Vec<Control>,
    rho: Arc<dyn Rho>,
}

impl MixedFormRelation {
    pub fn new(form: &DissipatorForm) -> Self {
        MixedFormRelation { controls: form.controls.clone(), rho: Arc::clone(&form.rho) }
    }
}

impl ImplicitRelation for MixedFormRelation {
    fn len(&self) -> usize {
        self.controls.len()
    }

    fn eval(&self, i_dd: &[f64], v_dd: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        let mut controls = vec![0.0; n];
        let mut complements = vec![0.0; n];
        for p in 0..n {
            match self.controls[p] {
                Control::Current => {
                    controls[p] = i_dd[p];
                    complements[p] = v_dd[p];
                }
                Control::Voltage => {
                    controls[p] = v_dd[p];
                    complements[p] = i_dd[p];
                }
            }
        }
        let rho = self.rho.rho(&controls)?;
        Ok((0..n).map(|p| complements[p] - rho[p]).collect())
    }

    fn jacobian(&self, i_dd: &[f64], v_dd: &[f64]) -> Result<(RealMatrix, RealMatrix)> {
        let n = self.len();
        let mut controls = vec![0.0; n];
        for p in 0..n {
            controls[p] = match self.controls[p] {
                Control::Current => i_dd[p],
                Control::Voltage => v_dd[p],
            };
        }
        let jac = self.rho.rho_jacobian(&controls)?;
        let mut dri = RealMatrix::zeros(n, n);
        let mut drv = RealMatrix::zeros(n, n);
        for row in 0..n {
            for col in 0..n {
                // d rho_row / d control_col lands on i or v by control kind
                match self.controls[col] {
                    Control::Current => dri[(row, col)] = -jac[(row, col)],
                    Control::Voltage => drv[(row, col)] = -jac[(row, col)],
                }
            }
            match self.controls[row] {
                Control::Current => drv[(row, row)] += 1.0,
                Control::Voltage => dri[(row, row)] += 1.0,
            }
        }
        Ok((dri, drv))
    }

    fn independent(&self) -> bool {
        self.rho.independent()
    }
}

// ---------------------------------------------------------------------------
// Source functions
// ---------------------------------------------------------------------------

/// A source waveform with its time derivative (needed by the ODE reduction
/// and by exact stage-0 derivative solves).
#[derive(Debug, Clone)]
pub struct SourceFn {
    law: ScalarSource,
}

#[derive(Debug, Clone)]
enum ScalarSource {
    Constant(f64),
    TimeExpr { f: ExprAst, df: ExprAst },
}

impl SourceFn {
    pub fn from_law(law: &Law) -> SourceFn {
        let law = match law {
            Law::Constant(c) => ScalarSource::Constant(*c),
            Law::Expression(ast) => {
                ScalarSource::TimeExpr { f: ast.clone(), df: diff_expr(ast) }
            }
        };
        SourceFn { law }
    }

    pub fn value(&self, t: f64) -> Result<f64> {
        match &self.law {
            ScalarSource::Constant(c) => Ok(*c),
            ScalarSource::TimeExpr { f, .. } => eval_expr(f, t),
        }
    }

    pub fn derivative(&self, t: f64) -> Result<f64> {
        match &self.law {
            ScalarSource::Constant(_) => Ok(0.0),
            ScalarSource::TimeExpr { df, .. } => eval_expr(df, t),
        }
    }
}

// ---------------------------------------------------------------------------
// The assembled circuit model
// ---------------------------------------------------------------------------

/// Everything the DAE assembly needs: graph, normal tree, block F, storage
/// laws in DAE order, the mixed dissipator form, and source functions.
#[derive(Clone)]
pub struct CircuitModel {
    pub spec: CircuitSpec,
    pub graph: CircuitGraph,
    pub tree: NormalTree,
    pub split: EdgeSplit,
    pub blocks: BlockF,
    pub storage_c: Arc<dyn Storage>,
    pub storage_l: Arc<dyn Storage>,
    pub dissipator: Arc<DissipatorForm>,
    /// Voltage sources, ascending edge order (all of them are twigs).
    pub sources_v: Vec<SourceFn>,
    /// Current sources, ascending edge order (all of them are links).
    pub sources_i: Vec<SourceFn>,
    /// True when every non-source law is a constant (LTI path available).
    pub linear: bool,
}

impl CircuitModel {
    /// Build from a parsed circuit and a normal tree over it.
    pub fn new(spec: CircuitSpec, tree: NormalTree) -> Result<CircuitModel> {
        let graph = CircuitGraph::from_spec(&spec)?;
        let kinds = graph.kinds();
        let split = split_edges(&tree, &kinds)?;
        let blocks = block_f(&tree, &split)?;
        let law_of = |e: usize| -> &Law { &spec.elements[e].law };

        let cap_laws: Vec<ScalarLaw> =
            split.capacitors().iter().map(|&e| ScalarLaw::from_law(law_of(e))).collect();
        let ind_laws: Vec<ScalarLaw> =
            split.inductors().iter().map(|&e| ScalarLaw::from_law(law_of(e))).collect();
        let dis_edges = split.dissipative();
        let dis_laws: Vec<ScalarLaw> =
            dis_edges.iter().map(|&e| ScalarLaw::from_law(law_of(e))).collect();
        let controls: Vec<Control> = dis_edges
            .iter()
            .map(|&e| match kinds[e] {
                ElementKind::R => Control::Current,
                ElementKind::G => Control::Voltage,
                _ => unreachable!("dissipative edges are R or G"),
            })
            .collect();

        let sources_v = split
            .v
            .iter()
            .map(|&e| SourceFn::from_law(law_of(e)))
            .collect();
        let sources_i = split
            .cur_links
            .iter()
            .map(|&e| SourceFn::from_law(law_of(e)))
            .collect();
        let linear = spec
            .elements
            .iter()
            .filter(|e| !e.kind.is_source())
            .all(|e| matches!(e.law, Law::Constant(_)));

        Ok(CircuitModel {
            spec,
            graph,
            tree,
            split: split.clone(),
            blocks,
            storage_c: Arc::new(IndependentStorage::new(cap_laws)),
            storage_l: Arc::new(IndependentStorage::new(ind_laws)),
            dissipator: Arc::new(DissipatorForm {
                edges: dis_edges,
                controls,
                rho: Arc::new(IndependentRho::new(dis_laws)),
            }),
            sources_v,
            sources_i,
            linear,
        })
    }

    /// Replace the capacitor storage with a coupled implementation
    /// (library API for mutually dependent elements).
    pub fn with_storage_c(mut self, s: Arc<dyn Storage>) -> Result<CircuitModel> {
        if s.len() != self.split.capacitors().len() {
            return Err(Error::DimensionMismatch("coupled capacitor storage size".into()));
        }
        self.storage_c = s;
        self.linear = false;
        Ok(self)
    }

    pub fn with_storage_l(mut self, s: Arc<dyn Storage>) -> Result<CircuitModel> {
        if s.len() != self.split.inductors().len() {
            return Err(Error::DimensionMismatch("coupled inductor storage size".into()));
        }
        self.storage_l = s;
        self.linear = false;
        Ok(self)
    }

    pub fn with_rho(mut self, rho: Arc<dyn Rho>) -> Result<CircuitModel> {
        if rho.len() != self.dissipator.len() {
            return Err(Error::DimensionMismatch("coupled dissipator size".into()));
        }
        self.dissipator = Arc::new(DissipatorForm {
            edges: self.dissipator.edges.clone(),
            controls: self.dissipator.controls.clone(),
            rho,
        });
        self.linear = false;
        Ok(self)
    }

    /// Capacitor voltages, inductor currents and the two Hessians at a state.
    pub fn storage_eval(
        &self,
        q: &[f64],
        phi: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>, RealMatrix, RealMatrix)> {
        let v_c = self.storage_c.gradient(q)?;
        let i_l = self.storage_l.gradient(phi)?;
        let h_c = self.storage_c.hessian(q)?;
        let h_l = self.storage_l.hessian(phi)?;
        Ok((v_c, i_l, h_c, h_l))
    }

    /// Total stored energy.
    pub fn hamiltonian(&self, q: &[f64], phi: &[f64]) -> Result<f64> {
        Ok(self.storage_c.energy(q)? + self.storage_l.energy(phi)?)
    }

    /// The implicit relation induced by this model's mixed dissipator form.
    pub fn mixed_relation(&self) -> Arc<dyn ImplicitRelation> {
        Arc::new(MixedFormRelation::new(&self.dissipator))
    }

    pub fn element_name(&self, e: usize) -> &str {
        &self.spec.elements[e].name
    }
}

// ---------------------------------------------------------------------------
// Passivity
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct PassivityReport {
    /// Capacitor Hessian pointwise positive definite.
    pub a4_ok: bool,
    /// Inductor Hessian pointwise positive definite.
    pub a5_ok: bool,
    /// Dissipator Jacobian pair pointwise positive definite.
    pub a6_ok: bool,
    pub details: Vec<String>,
}

impl PassivityReport {
    pub fn all_ok(&self) -> bool {
        self.a4_ok && self.a5_ok && self.a6_ok
    }
}

/// Check the passivity assumptions at the given sample states. Failures are
/// reported, not thrown.
pub fn check_passivity(
    model: &CircuitModel,
    samples: &[(Vec<f64>, Vec<f64>, Vec<f64>)],
) -> PassivityReport {
    let tol = 1e-12;
    let mut rep =
        PassivityReport { a4_ok: true, a5_ok: true, a6_ok: true, details: Vec::new() };
    let relation = model.mixed_relation();
    for (k, (q, phi, xhat)) in samples.iter().enumerate() {
        match model.storage_c.hessian(q) {
            Ok(h) if is_pd(&h, tol) => {}
            _ => {
                rep.a4_ok = false;
                rep.details.push(format!("capacitor Hessian not PD at sample {k}"));
            }
        }
        match model.storage_l.hessian(phi) {
            Ok(h) if is_pd(&h, tol) => {}
            _ => {
                rep.a5_ok = false;
                rep.details.push(format!("inductor Hessian not PD at sample {k}"));
            }
        }
        let ok = match model.dissipator.eval(xhat) {
            Ok((i_dd, v_dd, _)) => match relation.jacobian(&i_dd, &v_dd) {
                Ok((dri, drv)) => is_pdmp(&dri, &drv, tol),
                Err(_) => false,
            },
            Err(_) => false,
        };
        if !ok {
            rep.a6_ok = false;
            rep.details.push(format!("dissipator Jacobian pair not PDMP at sample {k}"));
        }
    }
    rep
}

// ---------------------------------------------------------------------------
// Node-identification composition
// ---------------------------------------------------------------------------

/// Solder together nodes of one or more circuits into a single circuit.
/// Each identification `(ca, na, cb, nb)` merges node `na` of circuit `ca`
/// with node `nb` of circuit `cb` (1-based nodes, 0-based circuit indices).
/// The result renumbers vertices contiguously; edge order is concatenation
/// order. Element names must stay unique across the inputs.
pub fn join(
    circuits: &[CircuitSpec],
    identifications: &[(usize, usize, usize, usize)],
) -> Result<CircuitSpec> {
    if circuits.is_empty() {
        return Err(Error::InvalidArgument("join of zero circuits".into()));
    }
    for spec in circuits {
        spec.validate()?;
    }
    // global node ids: (circuit, vertex) -> offset numbering
    let mut offsets = vec![0usize; circuits.len()];
    let mut total = 0usize;
    for (k, spec) in circuits.iter().enumerate() {
        offsets[k] = total;
        total += spec.vertex_count();
    }
    let mut uf = UnionFind::new(total);
    for &(ca, na, cb, nb) in identifications {
        if ca >= circuits.len() || cb >= circuits.len() {
            return Err(Error::InvalidArgument("identification names a missing circuit".into()));
        }
        if na == 0 || na > circuits[ca].vertex_count() || nb == 0 || nb > circuits[cb].vertex_count()
        {
            return Err(Error::InvalidArgument("identification names a missing node".into()));
        }
        if ca == cb && na == nb {
            return Err(Error::InvalidArgument(
                "identification joins a node with itself".into(),
            ));
        }
        uf.union(offsets[ca] + na - 1, offsets[cb] + nb - 1);
    }
    // renumber roots contiguously in order of first appearance
    let mut new_id: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
    let mut elements: Vec<ElementSpec> = Vec::new();
    for (k, spec) in circuits.iter().enumerate() {
        for e in &spec.elements {
            let mut renum = |node: usize| -> usize {
                let root = uf.find(offsets[k] + node - 1);
                let next = new_id.len() + 1;
                *new_id.entry(root).or_insert(next)
            };
            let from = renum(e.from);
            let to = renum(e.to);
            if from == to {
                return Err(Error::SelfLoop(e.name.clone()));
            }
            elements.push(ElementSpec { from, to, ..e.clone() });
        }
    }
    let joined = CircuitSpec { elements };
    joined.validate()?;
    Ok(joined)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{normal_tree_kruskal, validate_tree};
    use crate::netlist::parse_netlist;
    use crate::validation::{RUNNING_EXAMPLE, RUNNING_EXAMPLE_PAPER_TREE};

    fn running_model() -> CircuitModel {
        let spec = parse_netlist(RUNNING_EXAMPLE).unwrap();
        let g = CircuitGraph::from_spec(&spec).unwrap();
        let tree = validate_tree(&g, RUNNING_EXAMPLE_PAPER_TREE).unwrap();
        CircuitModel::new(spec, tree).unwrap()
    }

    #[test]
    fn split_of_running_example() {
        let m = running_model();
        // V=0 C1=1 C2=2 G=3 R=4 L1=5 L2=6 I=7, tree {V,C1,R,L1}
        assert_eq!(m.split.v, vec![0]);
        assert_eq!(m.split.c, vec![1]);
        assert_eq!(m.split.d, vec![4]);
        assert_eq!(m.split.l, vec![5]);
        assert_eq!(m.split.cap_links, vec![2]);
        assert_eq!(m.split.dis_links, vec![3]);
        assert_eq!(m.split.ind_links, vec![6]);
        assert_eq!(m.split.cur_links, vec![7]);
    }

    #[test]
    fn split_of_vr_loop_and_lc_loop() {
        let spec = parse_netlist(crate::validation::VR_LOOP).unwrap();
        let g = CircuitGraph::from_spec(&spec).unwrap();
        let tree = normal_tree_kruskal(&g).unwrap();
        let s = split_edges(&tree, &g.kinds()).unwrap();
        assert_eq!(s.v, vec![0]);
        assert_eq!(s.dis_links, vec![1]);
        assert!(s.c.is_empty() && s.d.is_empty() && s.l.is_empty());

        let spec = parse_netlist(crate::validation::LC_LOOP).unwrap();
        let g = CircuitGraph::from_spec(&spec).unwrap();
        let tree = normal_tree_kruskal(&g).unwrap();
        let s = split_edges(&tree, &g.kinds()).unwrap();
        assert_eq!(s.c, vec![0]);
        assert_eq!(s.ind_links, vec![1]);
    }

    #[test]
    fn block_reassembly_reproduces_f() {
        let m = running_model();
        let b = &m.blocks;
        // row groups C, D, L, I and column groups v, c, d, l, each singleton
        let expected = [
            [b.f_cv[(0, 0)], b.f_cc[(0, 0)], 0, 0],
            [b.f_dv[(0, 0)], b.f_dc[(0, 0)], b.f_dd[(0, 0)], 0],
            [b.f_lv[(0, 0)], b.f_lc[(0, 0)], b.f_ld[(0, 0)], b.f_ll[(0, 0)]],
            [b.f_iv[(0, 0)], b.f_ic[(0, 0)], b.f_id[(0, 0)], b.f_il[(0, 0)]],
        ];
        for (r, row) in expected.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                assert_eq!(m.tree.f[(r, c)], v);
            }
        }
    }

    #[test]
    fn storage_eval_linear() {
        let m = running_model();
        // q in (C2, C1) order, phi in (L1, L2) order
        let (v_c, i_l, h_c, h_l) = m.storage_eval(&[1e-5, 0.0], &[0.0, 0.2]).unwrap();
        assert!((v_c[0] - 2.0).abs() < 1e-12);
        assert_eq!(v_c[1], 0.0);
        assert_eq!(i_l[0], 0.0);
        assert!((i_l[1] - 2.0).abs() < 1e-12);
        assert!((h_c[(0, 0)] - 2e5).abs() < 1e-6);
        assert!((h_l[(1, 1)] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn hamiltonian_closed_form_and_quadrature() {
        let m = running_model();
        assert_eq!(m.hamiltonian(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        // q_C1 = 1e-5 lives at index 1 (order is C2, C1)
        let h = m.hamiltonian(&[0.0, 1e-5], &[0.0, 0.2]).unwrap();
        assert!((h - 0.20001).abs() < 1e-12, "H = {h}");
        // cubic gradient law integrates to x^4/4
        let law = ScalarLaw::Nonlinear {
            g: crate::expr::parse_expr("q^3", "q").unwrap(),
            dg: crate::expr::parse_expr("3*q^2", "q").unwrap(),
        };
        assert!((law.energy(1.0).unwrap() - 0.25).abs() < 1e-10);
    }

    #[test]
    fn dissipator_eval_running_example() {
        let m = running_model();
        // xhat = (i_R, v_G) with R=1000? here R=1, G=1: take xhat = (1, 1)
        let (i_dd, v_dd, _) = m.dissipator.eval(&[1.0, 1.0]).unwrap();
        // order (d, D) = (R, G)
        assert_eq!(i_dd, vec![1.0, 1.0]); // i_R = 1, i_G = G*v_G = 1
        assert_eq!(v_dd, vec![1.0, 1.0]); // v_R = R*i_R = 1, v_G = 1
    }

    #[test]
    fn shockley_dissipator_derivative() {
        let spec = parse_netlist(crate::validation::DIODE_CLIPPER).unwrap();
        let g = CircuitGraph::from_spec(&spec).unwrap();
        let tree = normal_tree_kruskal(&g).unwrap();
        let m = CircuitModel::new(spec, tree).unwrap();
        // edges (d, D) = (R, D1, D2); controls (Current, Voltage, Voltage)
        let (i_dd, v_dd, jac) = m.dissipator.eval(&[0.002, 0.0, 0.0]).unwrap();
        assert!((v_dd[0] - 2.0).abs() < 1e-12); // v_R = 1000 * 0.002
        assert_eq!(i_dd[1], 0.0); // diode at v = 0
        assert!((jac[(1, 1)] - 4e-12).abs() < 1e-24); // Is/vT
    }

    #[test]
    fn passivity_linear_and_negative_resistor() {
        let m = running_model();
        let rep = check_passivity(&m, &[(vec![0.0; 2], vec![0.0; 2], vec![0.0; 2])]);
        assert!(rep.all_ok());

        let spec = parse_netlist("edge V1 V 1 2 1\nedge R1 R 1 2 -1\n").unwrap();
        let g = CircuitGraph::from_spec(&spec).unwrap();
        let tree = normal_tree_kruskal(&g).unwrap();
        let m = CircuitModel::new(spec, tree).unwrap();
        let rep = check_passivity(&m, &[(vec![], vec![], vec![0.0])]);
        assert!(!rep.a6_ok);
    }

    #[test]
    fn transformer_style_coupling_fails_a6() {
        // two dissipative edges with purely skew coupling: passive but not
        // strictly locally passive
        let spec = parse_netlist(
            "edge V1 V 1 2 1\nedge Ra R 1 2 1\nedge Rb R 1 2 1\n",
        )
        .unwrap();
        let g = CircuitGraph::from_spec(&spec).unwrap();
        let tree = normal_tree_kruskal(&g).unwrap();
        let m = CircuitModel::new(spec, tree).unwrap();
        let k = 2.0;
        let skew = move |x: &[f64]| -> Result<Vec<f64>> { Ok(vec![k * x[1], -k * x[0]]) };
        let jac = move |_: &[f64]| -> Result<RealMatrix> {
            Ok(RealMatrix::from_rows(&[vec![0.0, k], vec![-k, 0.0]]))
        };
        let m = m
            .with_rho(Arc::new(CoupledRho::new(2, Box::new(skew), Box::new(jac))))
            .unwrap();
        let rep = check_passivity(&m, &[(vec![], vec![], vec![0.1, -0.2])]);
        assert!(!rep.a6_ok);
    }

    #[test]
    fn join_two_loops() {
        let a = parse_netlist("edge V1 V 1 2 1\nedge R1 R 1 2 5\n").unwrap();
        let b = parse_netlist("edge V2 V 1 2 1\nedge R2 R 1 2 5\n").unwrap();
        let joined = join(&[a.clone(), b.clone()], &[(0, 1, 1, 1), (0, 2, 1, 2)]).unwrap();
        assert_eq!(joined.elements.len(), 4);
        assert_eq!(joined.vertex_count(), 2);
        // no identifications leaves two components
        assert!(matches!(join(&[a.clone(), b.clone()], &[]), Err(Error::DisconnectedGraph)));
        // degenerate self identification
        assert!(matches!(
            join(&[a, b], &[(0, 1, 0, 1)]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn coupled_storage_energy_by_ray_quadrature() {
        // H = (q1^2 + q1 q2 + q2^2)/2, gradient (q1 + q2/2, q2 + q1/2)
        let grad = |q: &[f64]| -> Result<Vec<f64>> {
            Ok(vec![q[0] + 0.5 * q[1], q[1] + 0.5 * q[0]])
        };
        let hess = |_: &[f64]| -> Result<RealMatrix> {
            Ok(RealMatrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]))
        };
        let s = CoupledStorage::new(2, Box::new(grad), Box::new(hess));
        let h = s.energy(&[1.0, 2.0]).unwrap();
        let expect = 0.5 * (1.0 + 2.0 + 4.0);
        assert!((h - expect).abs() < 1e-9, "{h} vs {expect}");
    }
}
