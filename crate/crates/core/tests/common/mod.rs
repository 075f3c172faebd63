//! Shared fixtures for the integration suites.
#![allow(dead_code)] // each suite uses a different subset

use phcirc::cli::random_circuit;
use phcirc::dae::{build_model2, CpHSystem};
use phcirc::graph::{normal_tree_kruskal, validate_tree, CircuitGraph};
use phcirc::model::CircuitModel;
use phcirc::netlist::{parse_netlist, CircuitSpec};

pub fn sys_for(netlist: &str, tree: Option<&[usize]>) -> CpHSystem {
    let spec = parse_netlist(netlist).unwrap();
    let g = CircuitGraph::from_spec(&spec).unwrap();
    let t = match tree {
        Some(t) => validate_tree(&g, t).unwrap(),
        None => normal_tree_kruskal(&g).unwrap(),
    };
    build_model2(CircuitModel::new(spec, t).unwrap()).unwrap()
}

/// Seeded corpus of random well-posed circuits with linear laws.
pub fn corpus(count: usize, seed0: u64) -> Vec<CircuitSpec> {
    let mut out = Vec::with_capacity(count);
    let mut seed = seed0;
    while out.len() < count {
        let k = out.len();
        let nodes = 4 + k % 7; // 4..=10
        let edges = nodes + 1 + (k % (nodes)); // connected with extra links
        if let Ok(spec) = random_circuit(nodes, edges, "VCCRRGGLLII", seed) { out.push(spec) }
        seed = seed.wrapping_add(0x9e3779b97f4a7c15);
    }
    out
}

/// Least-squares slope of ln(y) against ln(x).
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}
