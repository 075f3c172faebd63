//! Command-line front end: analyze, tree, simulate, eig, reduce, random,
//! verify. The heavy lifting lives in library functions here so the C ABI
//! crate can reuse them; `main.rs` only maps arguments and exit codes.
//!
//! Exit codes: 0 ok, 2 parse/well-posedness failure, 3 structurally
//! unamenable (including a proposed non-normal tree), 64 usage, 70 internal.

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dae::{self, CpHSystem};
use crate::error::{Error, Result};
use crate::graph::{check_wellposed, normal_tree_kruskal, validate_tree, CircuitGraph, NormalTree};
use crate::lti;
use crate::model::CircuitModel;
use crate::netlist::{parse_netlist, CircuitSpec, ElementKind, ElementSpec, Law};
use crate::sigma;
use crate::solver::{self, FixedChoice, IntegratorConfig, StepMode, Trajectory};
use crate::validation;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_UNAMENABLE: i32 = 3;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_INTERNAL: i32 = 70;

#[derive(Debug, Parser)]
#[command(
    name = "phcirc",
    about = "Port-Hamiltonian circuit DAEs: structural analysis and simulation",
    disable_help_subcommand = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Structural analysis: normal tree, signature matrix, offsets, verdict.
    Analyze(AnalyzeArgs),
    /// Print the normal tree, cotree, class counts and the Kron matrix.
    Tree { file: String },
    /// Integrate the circuit DAE and write a CSV trajectory.
    Simulate(SimulateArgs),
    /// Finite eigenvalues of a linear time-invariant circuit.
    Eig {
        file: String,
        #[arg(long)]
        json: bool,
    },
    /// Reduce the DAE to an explicit ODE and report the selected states.
    Reduce { file: String },
    /// Generate a random well-posed circuit netlist.
    Random(RandomArgs),
    /// Run the brute-force oracle suite on a circuit.
    Verify { file: String },
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    pub file: String,
    /// Comma-separated element names proposing the tree.
    #[arg(long)]
    pub tree: Option<String>,
    /// 1 = implicit dissipator relation; 2 = mixed form (default).
    #[arg(long, default_value_t = 2)]
    pub model: u8,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub file: String,
    #[arg(long, default_value_t = 0.0)]
    pub t0: f64,
    #[arg(long)]
    pub t1: f64,
    /// Fixed step size; mutually exclusive with --rtol/--atol.
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub rtol: Option<f64>,
    #[arg(long)]
    pub atol: Option<f64>,
    /// BDF order (1 or 2).
    #[arg(long, default_value_t = 2)]
    pub order: u8,
    #[arg(long, default_value_t = 2)]
    pub model: u8,
    /// Initial guess value, replicated over the state.
    #[arg(long, default_value_t = 1.0)]
    pub guess: f64,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    pub out: Option<String>,
    /// Proposed tree (comma-separated element names).
    #[arg(long)]
    pub tree: Option<String>,
}

#[derive(Debug, Args)]
pub struct RandomArgs {
    #[arg(long)]
    pub nodes: usize,
    #[arg(long)]
    pub edges: usize,
    /// Kind letters sampled uniformly per edge, e.g. "VCCRRGLLI".
    #[arg(long, default_value = "VCRGLI")]
    pub kinds: String,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<String>,
}

// ---------------------------------------------------------------------------
// Pipeline helpers
// ---------------------------------------------------------------------------

/// Resolve a comma-separated element-name list into edge indices.
pub fn tree_from_names(spec: &CircuitSpec, names: &str) -> Result<Vec<usize>> {
    names
        .split(',')
        .map(|raw| {
            let name = raw.trim();
            spec.elements
                .iter()
                .position(|e| e.name == name)
                .ok_or_else(|| Error::InvalidArgument(format!("no element named `{name}`")))
        })
        .collect()
}

/// Parse, check well-posedness, build the (proposed or Kruskal) normal tree
/// and the requested model form.
pub fn build_system(
    text: &str,
    tree_names: Option<&str>,
    model_kind: u8,
) -> Result<(CpHSystem, NormalTree)> {
    let spec = parse_netlist(text)?;
    let graph = CircuitGraph::from_spec(&spec)?;
    check_wellposed(&graph.incidence(), &graph.classes())?.require()?;
    let tree = match tree_names {
        Some(names) => validate_tree(&graph, &tree_from_names(&spec, names)?)?,
        None => normal_tree_kruskal(&graph)?,
    };
    let model = CircuitModel::new(spec, tree.clone())?;
    let sys = match model_kind {
        2 => dae::build_model2(model)?,
        1 => {
            let rel = dae::mixed_form_relation(&model)?;
            dae::build_model1(model, rel)?
        }
        other => {
            return Err(Error::InvalidArgument(format!("model must be 1 or 2, got {other}")))
        }
    };
    Ok((sys, tree))
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct CountsJson {
    pub v: usize,
    pub c: usize,
    pub d: usize,
    pub l: usize,
    pub i: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RanksJson {
    pub r_v: usize,
    pub r_vc: usize,
    pub r_vcd: usize,
    pub r_vcdl: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct OffsetsJson {
    pub c: Vec<i64>,
    pub d: Vec<i64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub connected: bool,
    pub a1_ok: bool,
    pub a2_ok: bool,
    pub model: u8,
    pub n_vertices: usize,
    pub n_edges: usize,
    pub tree: Vec<String>,
    pub cotree: Vec<String>,
    pub twig_counts: CountsJson,
    pub link_counts: CountsJson,
    pub ranks: RanksJson,
    /// Kron matrix, rows per cotree edge, columns per tree edge.
    pub f: Vec<Vec<i64>>,
    pub variables: Vec<String>,
    pub equations: Vec<String>,
    /// Signature matrix; null encodes minus infinity.
    pub sigma: Vec<Vec<Option<u8>>>,
    pub offsets_provisional: OffsetsJson,
    pub offsets_canonical: OffsetsJson,
    pub dof: usize,
    pub structural_index: usize,
    pub structural_index_canonical: usize,
    pub amenable: bool,
    /// Smallest over largest singular value of the system Jacobian at the
    /// consistent point.
    pub jacobian_sv_ratio: f64,
}

pub fn analyze_report(text: &str, tree_names: Option<&str>, model_kind: u8) -> Result<AnalyzeReport> {
    let (sys, tree) = build_system(text, tree_names, model_kind)?;
    let graph = &sys.model().graph;
    let wp = check_wellposed(&graph.incidence(), &graph.classes())?;
    let n = sys.layout().len();
    let cp = solver::consistent_point(&sys, 0.0, &vec![1.0; n], FixedChoice::Default)?;
    let an = sigma::analyze(&sys, cp.t0, &cp.x0, &cp.xdot0)?;
    let name_of = |e: usize| sys.model().element_name(e).to_string();
    let counts = |c: crate::graph::ClassCounts| CountsJson {
        v: c.v,
        c: c.c,
        d: c.d,
        l: c.l,
        i: c.i,
    };
    Ok(AnalyzeReport {
        connected: wp.connected,
        a1_ok: wp.a1_ok,
        a2_ok: wp.a2_ok,
        model: model_kind,
        n_vertices: graph.n,
        n_edges: graph.edge_count(),
        tree: tree.tree.iter().map(|&e| name_of(e)).collect(),
        cotree: tree.cotree.iter().map(|&e| name_of(e)).collect(),
        twig_counts: counts(tree.twig_counts),
        link_counts: counts(tree.link_counts),
        ranks: RanksJson {
            r_v: tree.ranks.r_v,
            r_vc: tree.ranks.r_vc,
            r_vcd: tree.ranks.r_vcd,
            r_vcdl: tree.ranks.r_vcdl,
        },
        f: (0..tree.cotree.len())
            .map(|r| (0..tree.tree.len()).map(|s| tree.f[(r, s)]).collect())
            .collect(),
        variables: sys.layout().names.clone(),
        equations: sys.row_names().to_vec(),
        sigma: (0..n)
            .map(|i| (0..n).map(|j| an.sigma.get(i, j)).collect())
            .collect(),
        offsets_provisional: OffsetsJson {
            c: an.offsets_provisional.c.clone(),
            d: an.offsets_provisional.d.clone(),
        },
        offsets_canonical: OffsetsJson {
            c: an.offsets_canonical.c.clone(),
            d: an.offsets_canonical.d.clone(),
        },
        dof: an.dof,
        structural_index: an.structural_index,
        structural_index_canonical: an.structural_index_canonical,
        amenable: an.amenable,
        jacobian_sv_ratio: an.sv_ratio,
    })
}

/// Deterministic JSON: serialize through `serde_json::Value`, whose object
/// representation sorts keys.
pub fn to_sorted_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::Io(e.to_string()))?;
    serde_json::to_string_pretty(&v).map_err(|e| Error::Io(e.to_string()))
}

fn render_analyze_text(rep: &AnalyzeReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "well-posed: connected={} A1={} A2={}\n",
        rep.connected, rep.a1_ok, rep.a2_ok
    ));
    out.push_str(&format!("tree:   {}\n", rep.tree.join(" ")));
    out.push_str(&format!("cotree: {}\n", rep.cotree.join(" ")));
    out.push_str(&format!(
        "twigs (v,c,d,l): ({},{},{},{})  links (C,D,L,I): ({},{},{},{})\n",
        rep.twig_counts.v,
        rep.twig_counts.c,
        rep.twig_counts.d,
        rep.twig_counts.l,
        rep.link_counts.c,
        rep.link_counts.d,
        rep.link_counts.l,
        rep.link_counts.i
    ));
    out.push_str(&format!(
        "ranks: r_V={} r_VC={} r_VCD={} r_VCDL={}\n",
        rep.ranks.r_v, rep.ranks.r_vc, rep.ranks.r_vcd, rep.ranks.r_vcdl
    ));
    out.push_str("F =\n");
    for row in &rep.f {
        out.push_str("  [");
        out.push_str(&row.iter().map(|v| format!("{v:>3}")).collect::<Vec<_>>().join(" "));
        out.push_str(" ]\n");
    }
    out.push_str(&format!("variables: {}\n", rep.variables.join(" ")));
    out.push_str("sigma (- is absent):\n");
    for row in &rep.sigma {
        out.push_str("  [");
        for e in row {
            match e {
                Some(v) => out.push_str(&format!(" {v}")),
                None => out.push_str("  -"),
            }
        }
        out.push_str(" ]\n");
    }
    out.push_str(&format!(
        "offsets c (provisional): {:?}\noffsets d (provisional): {:?}\n",
        rep.offsets_provisional.c, rep.offsets_provisional.d
    ));
    out.push_str(&format!(
        "dof = {}   structural index = {} (canonical flavor: {})\n",
        rep.dof, rep.structural_index, rep.structural_index_canonical
    ));
    out.push_str(&format!(
        "amenable = {} (system Jacobian sv ratio {:.3e})\n",
        rep.amenable, rep.jacobian_sv_ratio
    ));
    out
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

/// CSV with full double precision (17 significant digits): t, the state
/// columns by layout name, the matching d_ derivative columns, the outputs
/// (i_ of each voltage source, v_ of each current source), H and the balance
/// residual.
pub fn trajectory_csv(sys: &CpHSystem, traj: &Trajectory) -> String {
    let lay = sys.layout();
    let model = sys.model();
    let mut header: Vec<String> = vec!["t".into()];
    header.extend(lay.names.iter().cloned());
    header.extend(lay.names.iter().map(|n| format!("d_{n}")));
    for &e in &model.split.v {
        header.push(format!("i_{}", model.element_name(e)));
    }
    for &e in &model.split.cur_links {
        header.push(format!("v_{}", model.element_name(e)));
    }
    header.push("H".into());
    header.push("balance".into());
    let mut out = header.join(",");
    out.push('\n');
    for s in &traj.samples {
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        row.push(fmt_g17(s.t));
        row.extend(s.x.iter().map(|&v| fmt_g17(v)));
        row.extend(s.xdot.iter().map(|&v| fmt_g17(v)));
        row.extend(s.y.iter().map(|&v| fmt_g17(v)));
        row.push(fmt_g17(s.energy));
        row.push(fmt_g17(s.balance));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn fmt_g17(v: f64) -> String {
    format!("{v:.16e}")
}

pub struct SimulationOutput {
    pub csv: String,
    pub summary: String,
}

pub fn run_simulation(args: &SimulateArgs, text: &str) -> Result<SimulationOutput> {
    if args.t1 <= args.t0 {
        return Err(Error::InvalidArgument("t1 must exceed t0".into()));
    }
    if args.h.is_some() && (args.rtol.is_some() || args.atol.is_some()) {
        return Err(Error::InvalidArgument("--h conflicts with --rtol/--atol".into()));
    }
    let (sys, _) = build_system(text, args.tree.as_deref(), args.model)?;
    let n = sys.layout().len();
    let cp =
        solver::consistent_point(&sys, args.t0, &vec![args.guess; n], FixedChoice::Default)?;
    let step = match args.h {
        Some(h) => StepMode::Fixed { h },
        None => StepMode::Adaptive {
            rtol: args.rtol.unwrap_or(1e-6),
            atol: args.atol.unwrap_or(1e-9),
            h0: None,
        },
    };
    let config = IntegratorConfig {
        step,
        order: args.order,
        newton_tol: solver::DEFAULT_NEWTON_TOL,
        max_newton: 50,
        max_steps: 50_000_000,
    };
    let traj = solver::integrate(&sys, &cp, args.t1, &config)?;
    let csv = trajectory_csv(&sys, &traj);
    let summary = format!(
        "steps accepted {} rejected {}; final t {:.6e}; final H {:.6e}",
        traj.stats.accepted,
        traj.stats.rejected,
        traj.last().t,
        traj.last().energy
    );
    Ok(SimulationOutput { csv, summary })
}

// ---------------------------------------------------------------------------
// eig / reduce / tree / verify
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct EigJson {
    pub dof: usize,
    pub degree: usize,
    pub eigenvalues: Vec<ComplexJson>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ComplexJson {
    pub re: f64,
    pub im: f64,
}

pub fn eig_report(text: &str) -> Result<EigJson> {
    let (sys, _) = build_system(text, None, 2)?;
    let lti_sys = lti::assemble_lti(&sys)?;
    let eig = lti::finite_eigenvalues(&lti_sys, &sys)?;
    Ok(EigJson {
        dof: eig.ode_vars.len(),
        degree: eig.degree,
        eigenvalues: eig
            .eigenvalues
            .iter()
            .map(|l| ComplexJson { re: l.re, im: l.im })
            .collect(),
    })
}

pub fn reduce_report(text: &str) -> Result<String> {
    let (sys, _) = build_system(text, None, 2)?;
    let red = solver::reduce_to_ode(&sys)?;
    let lay = sys.layout();
    Ok(format!(
        "DAE size {} -> ODE size {}\node variables: {}\nsolved algebraically: {} charges, {} fluxes, {} dissipator variables\n",
        lay.len(),
        red.dof(),
        red.var_names().join(" "),
        red.q_hat.len(),
        red.phi_hat.len(),
        lay.n_dis()
    ))
}

pub fn tree_report(text: &str) -> Result<String> {
    let spec = parse_netlist(text)?;
    let graph = CircuitGraph::from_spec(&spec)?;
    check_wellposed(&graph.incidence(), &graph.classes())?.require()?;
    let tree = normal_tree_kruskal(&graph)?;
    let name = |e: usize| spec.elements[e].name.clone();
    let mut out = String::new();
    out.push_str(&format!(
        "tree:   {}\n",
        tree.tree.iter().map(|&e| name(e)).collect::<Vec<_>>().join(" ")
    ));
    out.push_str(&format!(
        "cotree: {}\n",
        tree.cotree.iter().map(|&e| name(e)).collect::<Vec<_>>().join(" ")
    ));
    out.push_str(&format!(
        "twigs (v,c,d,l,i): ({},{},{},{},{})\n",
        tree.twig_counts.v, tree.twig_counts.c, tree.twig_counts.d, tree.twig_counts.l, tree.twig_counts.i
    ));
    out.push_str("F (rows = fundamental cycles of the links):\n");
    for r in 0..tree.cotree.len() {
        out.push_str(&format!("  {:<8}[", name(tree.cotree[r])));
        for s in 0..tree.tree.len() {
            out.push_str(&format!("{:>3}", tree.f[(r, s)]));
        }
        out.push_str(" ]\n");
    }
    Ok(out)
}

pub fn verify_report(text: &str) -> Result<String> {
    let (sys, tree) = build_system(text, None, 2)?;
    let model = sys.model();
    let mut out = String::new();
    let rep = validation::oracle_cycle_cutset(&model.graph, &tree);
    out.push_str(&format!(
        "{}: {} (measured {}, tol {})\n",
        rep.check,
        if rep.pass { "pass" } else { "FAIL" },
        rep.measured,
        rep.tolerance
    ));
    let rep = validation::oracle_model_equivalence(model, 100)?;
    out.push_str(&format!(
        "{}: {} (max deviation {:.3e})\n",
        rep.check,
        if rep.pass { "pass" } else { "FAIL" },
        rep.measured
    ));
    let n = sys.layout().len();
    let cp = solver::consistent_point(&sys, 0.0, &vec![1.0; n], FixedChoice::Default)?;
    let rep = validation::oracle_index(&sys, cp.t0, &cp.x0, &cp.xdot0)?;
    out.push_str(&format!(
        "{}: {} (claimed index {}, solvability says {})\n",
        rep.check,
        if rep.pass { "pass" } else { "FAIL" },
        rep.measured,
        rep.tolerance
    ));
    Ok(out)
}

// ---------------------------------------------------------------------------
// random circuits
// ---------------------------------------------------------------------------

/// Generate a random connected circuit: a random spanning tree plus random
/// extra edges, kinds drawn from the mix, parameters log-uniform in
/// [1e-3, 1e3]. Regenerates (bounded) until A1 and A2 hold. Deterministic
/// per seed.
pub fn random_circuit(
    nodes: usize,
    edges: usize,
    kinds: &str,
    seed: u64,
) -> Result<CircuitSpec> {
    if nodes < 2 {
        return Err(Error::InvalidArgument("need at least 2 nodes".into()));
    }
    if edges < nodes - 1 {
        return Err(Error::InvalidArgument("need at least nodes-1 edges".into()));
    }
    let letters: Vec<ElementKind> = kinds
        .chars()
        .map(|c| {
            ElementKind::from_letter(&c.to_string())
                .ok_or_else(|| Error::InvalidArgument(format!("bad kind letter `{c}`")))
        })
        .collect::<Result<_>>()?;
    if letters.is_empty() {
        return Err(Error::InvalidArgument("empty kind mix".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _attempt in 0..1000 {
        let mut elements = Vec::with_capacity(edges);
        let mut pairs = Vec::with_capacity(edges);
        // random spanning tree, then extra edges
        for v in 1..nodes {
            let u = rng.random_range(0..v);
            pairs.push((u, v));
        }
        for _ in 0..edges - (nodes - 1) {
            let u = rng.random_range(0..nodes);
            let mut w = rng.random_range(0..nodes - 1);
            if w >= u {
                w += 1;
            }
            pairs.push((u, w));
        }
        for (k, &(u, w)) in pairs.iter().enumerate() {
            let kind = letters[rng.random_range(0..letters.len())];
            let flip: bool = rng.random();
            let (from, to) = if flip { (w + 1, u + 1) } else { (u + 1, w + 1) };
            let value = 10f64.powf(rng.random_range(-3.0..3.0));
            elements.push(ElementSpec {
                name: format!("{}{}", kind.letter(), k + 1),
                kind,
                from,
                to,
                law: Law::Constant(value),
            });
        }
        let spec = CircuitSpec { elements };
        if spec.validate().is_err() {
            continue;
        }
        let graph = CircuitGraph::from_spec(&spec)?;
        let wp = check_wellposed(&graph.incidence(), &graph.classes())?;
        if wp.ok() {
            return Ok(spec);
        }
    }
    Err(Error::GenerationFailed(1000))
}

// ---------------------------------------------------------------------------
// driver
// ---------------------------------------------------------------------------

fn read_file(path: &str) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{path}: {e}")))
}

fn write_or_print(out: Option<&str>, content: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, content).map_err(|e| Error::Io(format!("{path}: {e}"))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn exit_code_for(e: &Error) -> i32 {
    match validation::failure_class(e) {
        "wellposedness" | "parse" => EXIT_INPUT,
        "unamenable" => EXIT_UNAMENABLE,
        _ => match e {
            Error::InvalidArgument(_) => EXIT_USAGE,
            _ => EXIT_INTERNAL,
        },
    }
}

/// Full driver: returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match run_inner(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn run_inner(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Analyze(args) => {
            let text = read_file(&args.file)?;
            let rep = analyze_report(&text, args.tree.as_deref(), args.model)?;
            if args.json {
                println!("{}", to_sorted_json(&rep)?);
            } else {
                print!("{}", render_analyze_text(&rep));
            }
            Ok(if rep.amenable { EXIT_OK } else { EXIT_UNAMENABLE })
        }
        Command::Tree { file } => {
            let text = read_file(&file)?;
            print!("{}", tree_report(&text)?);
            Ok(EXIT_OK)
        }
        Command::Simulate(args) => {
            let text = read_file(&args.file)?;
            let out = run_simulation(&args, &text)?;
            write_or_print(args.out.as_deref(), &out.csv)?;
            if args.out.is_some() {
                println!("{}", out.summary);
            } else {
                eprintln!("{}", out.summary);
            }
            Ok(EXIT_OK)
        }
        Command::Eig { file, json } => {
            let text = read_file(&file)?;
            let rep = eig_report(&text)?;
            if json {
                println!("{}", to_sorted_json(&rep)?);
            } else {
                println!("dof = {}, characteristic degree = {}", rep.dof, rep.degree);
                for l in &rep.eigenvalues {
                    println!("  {:+.12e} {:+.12e}i", l.re, l.im);
                }
            }
            Ok(EXIT_OK)
        }
        Command::Reduce { file } => {
            let text = read_file(&file)?;
            print!("{}", reduce_report(&text)?);
            Ok(EXIT_OK)
        }
        Command::Random(args) => {
            let spec = random_circuit(args.nodes, args.edges, &args.kinds, args.seed)?;
            write_or_print(args.out.as_deref(), &spec.to_netlist())?;
            Ok(EXIT_OK)
        }
        Command::Verify { file } => {
            let text = read_file(&file)?;
            let rep = verify_report(&text)?;
            print!("{rep}");
            Ok(if rep.contains("FAIL") { EXIT_INTERNAL } else { EXIT_OK })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::validation::{DIODE_CLIPPER, RUNNING_EXAMPLE};

    #[test]
    fn analyze_report_of_running_example() {
        let rep = analyze_report(RUNNING_EXAMPLE, Some("V,C1,R,L1"), 2).unwrap();
        assert!(rep.amenable);
        assert_eq!(rep.dof, 2);
        assert_eq!(rep.structural_index, 1);
        assert_eq!(rep.tree, vec!["V", "C1", "R", "L1"]);
        assert_eq!(
            rep.f,
            vec![vec![1, -1, 0, 0], vec![-1, 0, 1, 0], vec![-1, 1, 1, 1], vec![0, -1, 0, -1]]
        );
    }

    #[test]
    fn analyze_report_of_model_one() {
        let rep = analyze_report(RUNNING_EXAMPLE, Some("V,C1,R,L1"), 1).unwrap();
        assert!(rep.amenable);
        assert_eq!(rep.dof, 2);
        assert_eq!(rep.structural_index, 1);
        assert_eq!(rep.variables.len(), 8);
        assert_eq!(rep.offsets_provisional.c, vec![1, 0, 1, 0, 1, 1, 1, 1]);
    }

    #[test]
    fn analyze_json_round_trips() {
        let rep = analyze_report(RUNNING_EXAMPLE, None, 2).unwrap();
        let json = to_sorted_json(&rep).unwrap();
        let back: AnalyzeReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.dof, rep.dof);
        assert_eq!(back.sigma, rep.sigma);
        // determinism
        assert_eq!(json, to_sorted_json(&rep).unwrap());
    }

    #[test]
    fn eig_rejects_nonlinear() {
        assert!(matches!(eig_report(DIODE_CLIPPER), Err(Error::NotLti)));
    }

    #[test]
    fn random_circuit_is_deterministic_and_wellposed() {
        let a = random_circuit(9, 15, "VCRGLI", 12345).unwrap();
        let b = random_circuit(9, 15, "VCRGLI", 12345).unwrap();
        assert_eq!(a.to_netlist(), b.to_netlist());
        let g = CircuitGraph::from_spec(&a).unwrap();
        let wp = check_wellposed(&g.incidence(), &g.classes()).unwrap();
        assert!(wp.ok());
        // edge budget respected
        assert_eq!(a.elements.len(), 15);
        assert_eq!(a.vertex_count(), 9);
    }

    #[test]
    fn random_rejects_bad_budget() {
        assert!(matches!(
            random_circuit(9, 7, "VCRGLI", 1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn simulate_produces_csv_with_named_columns() {
        let args = SimulateArgs {
            file: String::new(),
            t0: 0.0,
            t1: 1e-4,
            h: Some(1e-5),
            rtol: None,
            atol: None,
            order: 2,
            model: 2,
            guess: 1.0,
            out: None,
            tree: Some("V,C1,R,L1".into()),
        };
        let out = run_simulation(&args, RUNNING_EXAMPLE).unwrap();
        let header = out.csv.lines().next().unwrap();
        assert_eq!(
            header,
            "t,q_C2,q_C1,phi_L1,phi_L2,i_R,v_G,d_q_C2,d_q_C1,d_phi_L1,d_phi_L2,d_i_R,d_v_G,i_V,v_I,H,balance"
        );
        assert_eq!(out.csv.lines().count(), 12); // header + 11 samples
    }

    #[test]
    fn usage_errors() {
        let args = SimulateArgs {
            file: String::new(),
            t0: 1.0,
            t1: 0.5,
            h: None,
            rtol: None,
            atol: None,
            order: 2,
            model: 2,
            guess: 1.0,
            out: None,
            tree: None,
        };
        match run_simulation(&args, RUNNING_EXAMPLE) {
            Err(e) => assert_eq!(exit_code_for(&e), EXIT_USAGE),
            Ok(_) => panic!("t1 <= t0 accepted"),
        }
    }

    #[test]
    fn verify_runs_on_running_example() {
        let rep = verify_report(RUNNING_EXAMPLE).unwrap();
        assert!(!rep.contains("FAIL"), "{rep}");
    }
}
