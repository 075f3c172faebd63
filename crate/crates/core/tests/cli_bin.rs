//! End-to-end runs of the `phcirc` binary: subcommands, exit codes, and
//! output determinism.

use std::path::PathBuf;
use std::process::Command;

const RUNNING: &str = "\
edge V V 1 3 {10*t*sin(200*pi*t)}
edge C1 C 1 4 5e-6
edge C2 C 3 4 5e-6
edge G G 1 2 1
edge R R 2 3 1
edge L1 L 4 5 0.1
edge L2 L 5 2 0.1
edge I I 1 5 {10*sin(10*t)}
";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_phcirc"))
}

fn write_netlist(name: &str, content: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("phcirc-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, content).unwrap();
    path
}

#[test]
fn analyze_running_example_exits_zero() {
    let file = write_netlist("run.net", RUNNING);
    let out = bin()
        .args(["analyze", file.to_str().unwrap(), "--tree", "V,C1,R,L1", "--json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    assert!(text.contains("\"dof\": 2"));
    assert!(text.contains("\"amenable\": true"));
    // byte determinism
    let again = bin()
        .args(["analyze", file.to_str().unwrap(), "--tree", "V,C1,R,L1", "--json"])
        .output()
        .unwrap();
    assert_eq!(out.stdout, again.stdout);
}

#[test]
fn wellposedness_failure_exits_two() {
    let file = write_netlist("parallel_v.net", "edge V1 V 1 2 1\nedge V2 V 1 2 1\n");
    let out = bin().args(["analyze", file.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("voltage"));
}

#[test]
fn non_normal_tree_exits_three() {
    let file = write_netlist("run2.net", RUNNING);
    let out = bin()
        .args(["analyze", file.to_str().unwrap(), "--tree", "V,R,L1,L2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not normal"));
}

#[test]
fn usage_error_exits_sixty_four() {
    let file = write_netlist("run3.net", RUNNING);
    let out = bin()
        .args(["simulate", file.to_str().unwrap(), "--t0", "1.0", "--t1", "0.5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(64));
    // unknown flag is also usage
    let out = bin().args(["analyze", "--frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn simulate_writes_deterministic_csv() {
    let file = write_netlist("run4.net", RUNNING);
    let args = [
        "simulate",
        file.to_str().unwrap(),
        "--t1",
        "1e-3",
        "--h",
        "1e-5",
        "--tree",
        "V,C1,R,L1",
    ];
    let a = bin().args(args).output().unwrap();
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    let b = bin().args(args).output().unwrap();
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("t,q_C2,q_C1,phi_L1,phi_L2,i_R,v_G,"));
    assert!(header.ends_with("i_V,v_I,H,balance"));
}

#[test]
fn eig_emits_json_and_rejects_nonlinear() {
    let lti = write_netlist(
        "lti.net",
        "edge V V 1 2 1\nedge C C 2 3 1e-6\nedge L L 3 1 1e-3\n",
    );
    let out = bin().args(["eig", lti.to_str().unwrap(), "--json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("\"eigenvalues\""));

    let clipper = write_netlist(
        "clip.net",
        "edge V V 1 3 {(2*t/0.03)*sin(2000*pi*t)}\nedge R R 1 2 1000\nedge D1 G 2 3 {1e-13*(exp(v/0.025)-1)}\nedge D2 G 3 2 {1e-13*(exp(v/0.025)-1)}\nedge I I 2 3 0\n",
    );
    let out = bin().args(["eig", clipper.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(70));
    assert!(String::from_utf8_lossy(&out.stderr).contains("linear"));
}

#[test]
fn random_is_deterministic_and_reduce_reports_states() {
    let a = bin()
        .args(["random", "--nodes", "9", "--edges", "15", "--seed", "42"])
        .output()
        .unwrap();
    let b = bin()
        .args(["random", "--nodes", "9", "--edges", "15", "--seed", "42"])
        .output()
        .unwrap();
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    // generated circuit runs through the whole pipeline
    let netlist = String::from_utf8(a.stdout).unwrap();
    let file = write_netlist("rand.net", &netlist);
    let out = bin().args(["analyze", file.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let file = write_netlist("run5.net", RUNNING);
    let out = bin().args(["reduce", file.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(text.contains("ODE size 2"), "{text}");

    let out = bin().args(["verify", file.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));

    let out = bin().args(["tree", file.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("tree:"));
}

#[test]
fn random_bad_edge_budget_exits_sixty_four() {
    let out = bin()
        .args(["random", "--nodes", "9", "--edges", "7", "--seed", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(64));
}
