//! Acceptance suite: the twelve gate criteria, one test each, every test
//! printing a `criterion NN: PASS` line with the measured quantity (run with
//! `cargo test --test acceptance -- --nocapture` to see them).

mod common;

use common::{corpus, loglog_slope, sys_for};
use num_complex::Complex64;
use phcirc::cli::build_system;
use phcirc::dae::build_model2;
use phcirc::graph::{
    cumulative_ranks, kron_matrix, kruskal_tree_edges, normal_tree_kruskal, normal_tree_rref,
    rref_tree_edges, validate_tree, CircuitGraph,
};
use phcirc::linalg::{is_pd, is_pdmp, lu_solve, rref_exact, IntMatrix, Lu, RealMatrix};
use phcirc::lti::{assemble_lti, finite_eigenvalues};
use phcirc::model::CircuitModel;
use phcirc::netlist::parse_netlist;
use phcirc::sigma;
use phcirc::solver::{
    consistent_point, energy_audit, estimate_derivative, integrate, reduce_to_ode, FixedChoice,
    IntegratorConfig, StepMode,
};
use phcirc::validation::{
    oracle_index, DIODE_CLIPPER, LC_LOOP, RC_ANALYTIC, RUNNING_EXAMPLE,
    RUNNING_EXAMPLE_PAPER_TREE, VR_LOOP,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criterion 1: running-example incidence and Kron matrices, integer exact,
/// in under a second.
#[test]
fn criterion_01_running_example_structure() {
    let start = std::time::Instant::now();
    let spec = parse_netlist(RUNNING_EXAMPLE).unwrap();
    let g = CircuitGraph::from_spec(&spec).unwrap();
    let a = g.incidence();
    let tree = validate_tree(&g, RUNNING_EXAMPLE_PAPER_TREE).unwrap();
    let elapsed = start.elapsed();
    let a_expect = IntMatrix::from_rows(&[
        vec![1, 1, 0, 1, 0, 0, 0, 1],
        vec![0, 0, 0, -1, 1, 0, -1, 0],
        vec![-1, 0, 1, 0, -1, 0, 0, 0],
        vec![0, -1, -1, 0, 0, 1, 0, 0],
        vec![0, 0, 0, 0, 0, -1, 1, -1],
    ]);
    let f_expect = IntMatrix::from_rows(&[
        vec![1, -1, 0, 0],
        vec![-1, 0, 1, 0],
        vec![-1, 1, 1, 1],
        vec![0, -1, 0, -1],
    ]);
    assert_eq!(a, a_expect);
    assert_eq!(tree.f, f_expect);
    assert_eq!(kron_matrix(&a, &tree.tree).unwrap(), f_expect);
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!("criterion 01: PASS (A and F integer-exact, {elapsed:?})");
}

/// Criterion 2: both tree algorithms produce the Def-2.6 class counts on
/// the running example and on 200 seeded random circuits.
#[test]
fn criterion_02_normal_tree_counts() {
    let spec = parse_netlist(RUNNING_EXAMPLE).unwrap();
    let g = CircuitGraph::from_spec(&spec).unwrap();
    let tk = normal_tree_kruskal(&g).unwrap();
    let tr = normal_tree_rref(&g).unwrap();
    let ranks = cumulative_ranks(&g.incidence(), &g.classes()).unwrap();
    assert_eq!((ranks.r_v, ranks.r_vc, ranks.r_vcd, ranks.r_vcdl), (1, 2, 3, 4));
    for t in [&tk, &tr] {
        assert_eq!(
            (t.twig_counts.v, t.twig_counts.c, t.twig_counts.d, t.twig_counts.l),
            (1, 1, 1, 1)
        );
        assert_eq!(
            (t.link_counts.c, t.link_counts.d, t.link_counts.l, t.link_counts.i),
            (1, 1, 1, 1)
        );
        assert_eq!(t.ranks, ranks);
    }
    let specs = corpus(200, 0xC0FFEE);
    for (k, spec) in specs.iter().enumerate() {
        let g = CircuitGraph::from_spec(spec).unwrap();
        let tk = normal_tree_kruskal(&g).unwrap();
        let tr = normal_tree_rref(&g).unwrap();
        assert_eq!(tk.twig_counts, tr.twig_counts, "circuit {k}");
        assert_eq!(tk.link_counts, tr.link_counts, "circuit {k}");
        // counts pinned by the independently computed ranks
        let r = cumulative_ranks(&g.incidence(), &g.classes()).unwrap();
        assert_eq!(tk.twig_counts.c, r.r_vc - r.r_v, "circuit {k}");
        assert_eq!(tk.twig_counts.d, r.r_vcd - r.r_vc, "circuit {k}");
        assert_eq!(tk.twig_counts.l, r.r_vcdl - r.r_vcd, "circuit {k}");
        assert_eq!(tk.twig_counts.i, 0, "circuit {k}");
    }
    println!("criterion 02: PASS (counts agree on the example and 200 random circuits)");
}

/// Criterion 3: the signature-method verdict of the running example.
#[test]
#[allow(clippy::needless_range_loop)]
fn criterion_03_sigma_verdict() {
    let sys = sys_for(RUNNING_EXAMPLE, Some(RUNNING_EXAMPLE_PAPER_TREE));
    let s = sigma::signature_matrix(&sys);
    let x = None;
    let f = Some(0u8);
    let o = Some(1u8);
    // rows f_C2 f_C1 f_L1 f_L2 f_R-cutset f_G-cycle over
    // (q_C2, q_C1, phi_L1, phi_L2, i_R, v_G)
    let expected = [
        [f, f, x, x, x, x],
        [o, o, x, f, x, x],
        [x, x, f, f, x, x],
        [x, f, o, o, f, x],
        [x, x, x, f, f, f],
        [x, x, x, x, f, f],
    ];
    for i in 0..6 {
        for j in 0..6 {
            assert_eq!(s.get(i, j), expected[i][j], "sigma({i},{j})");
        }
    }
    let n = sys.layout().len();
    let cp = consistent_point(&sys, 0.0, &vec![1.0; n], FixedChoice::Default).unwrap();
    let an = sigma::analyze(&sys, cp.t0, &cp.x0, &cp.xdot0).unwrap();
    assert_eq!(an.offsets_provisional.c, vec![1, 0, 1, 0, 1, 1]);
    assert_eq!(an.offsets_provisional.d, vec![1; 6]);
    assert_eq!(an.val, 2);
    assert_eq!(an.dof, 2);
    assert_eq!(an.structural_index, 1);
    assert!(an.sv_ratio > 1e-9, "sv ratio {}", an.sv_ratio);
    assert!(an.amenable);
    println!(
        "criterion 03: PASS (Val = dof = 2, index 1, J sv ratio {:.3e})",
        an.sv_ratio
    );
}

/// Criterion 4: index-theorem branches, confirmed by the solvability oracle.
#[test]
fn criterion_04_index_theorem_branches() {
    // LC loop: no link capacitors, twig inductors or dissipators -> ODE
    let sys = sys_for(LC_LOOP, None);
    let cp = consistent_point(&sys, 0.0, &[1.0, 0.0], FixedChoice::Default).unwrap();
    let an = sigma::analyze(&sys, cp.t0, &cp.x0, &cp.xdot0).unwrap();
    assert_eq!(an.structural_index, 0);
    assert_eq!(an.dof, 2);
    let rep = oracle_index(&sys, cp.t0, &cp.x0, &cp.xdot0).unwrap();
    assert!(rep.pass, "{rep:?}");

    // V-R loop: one dissipator -> index 1
    let sys = sys_for(VR_LOOP, None);
    let cp = consistent_point(&sys, 0.0, &[0.0], FixedChoice::Default).unwrap();
    let an = sigma::analyze(&sys, cp.t0, &cp.x0, &cp.xdot0).unwrap();
    assert_eq!(an.structural_index, 1);
    assert_eq!(an.dof, 0);
    let rep = oracle_index(&sys, cp.t0, &cp.x0, &cp.xdot0).unwrap();
    assert!(rep.pass, "{rep:?}");
    println!("criterion 04: PASS (LC loop index 0, V-R loop index 1, oracle agrees)");
}

/// Criterion 5: LTI eigenvalues of the running example against the closed
/// form, relative error 1e-10, with the characteristic-degree oracle.
#[test]
fn criterion_05_lti_eigenvalues() {
    let lti_netlist = "\
edge V V 1 3 1
edge C1 C 1 4 5e-6
edge C2 C 3 4 5e-6
edge G G 1 2 1
edge R R 2 3 1
edge L1 L 4 5 0.1
edge L2 L 5 2 0.1
edge I I 1 5 0
";
    let sys = sys_for(lti_netlist, Some(RUNNING_EXAMPLE_PAPER_TREE));
    let lti = assemble_lti(&sys).unwrap();
    let eig = finite_eigenvalues(&lti, &sys).unwrap();
    assert_eq!(eig.eigenvalues.len(), 2);
    assert_eq!(eig.degree, 2);
    let (delta, eta) = (1.25f64, 5e5f64);
    let im = (eta - delta * delta).sqrt();
    let want = [Complex64::new(-delta, -im), Complex64::new(-delta, im)];
    let mut worst = 0.0f64;
    for (got, want) in eig.eigenvalues.iter().zip(want) {
        worst = worst.max((got - want).norm() / want.norm());
    }
    assert!(worst <= 1e-10, "relative error {worst:.3e}");
    println!("criterion 05: PASS (2 eigenvalues, degree 2, rel err {worst:.3e})");
}

/// Criterion 6: the reduced ODE matches the closed-form right-hand side at
/// 100 random states to 1e-12 relative, and its trajectory matches the DAE.
#[test]
fn criterion_06_ode_reduction() {
    let sys = sys_for(RUNNING_EXAMPLE, Some(RUNNING_EXAMPLE_PAPER_TREE));
    let red = reduce_to_ode(&sys).unwrap();
    assert_eq!(red.var_names(), vec!["q_C1", "phi_L2"]);
    let (c1, c2, l1, l2, r_ohm, g_s) = (5e-6, 5e-6, 0.1, 0.1, 1.0, 1.0);
    let pi = std::f64::consts::PI;
    let mut rng = ChaCha8Rng::seed_from_u64(0x0DE);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let t: f64 = rng.random_range(0.0..0.2);
        let q_c1: f64 = rng.random_range(-1e-5..1e-5);
        let phi_l2: f64 = rng.random_range(-1.0..1.0);
        let v = 10.0 * t * (200.0 * pi * t).sin();
        let vdot = 10.0 * (200.0 * pi * t).sin() + 2000.0 * pi * t * (200.0 * pi * t).cos();
        let i_src = 10.0 * (10.0 * t).sin();
        let idot = 100.0 * (10.0 * t).cos();
        let want_qdot = (((phi_l2 / l2 - i_src) / c2) + vdot) / (1.0 / c1 + 1.0 / c2);
        let i_r = (g_s * v + phi_l2 / l2) / (1.0 + g_s * r_ohm);
        let want_phidot = (-q_c1 / (c1 * l1) - (r_ohm / l1) * i_r + v / l1 + idot)
            / (1.0 / l1 + 1.0 / l2);
        let got = red.rhs(t, &[q_c1, phi_l2]).unwrap();
        worst = worst.max((got[0] - want_qdot).abs() / (1.0 + want_qdot.abs()));
        worst = worst.max((got[1] - want_phidot).abs() / (1.0 + want_phidot.abs()));
    }
    assert!(worst <= 1e-12, "closed-form deviation {worst:.3e}");

    // trajectory comparison on the shared variables
    let cp = consistent_point(&sys, 0.0, &[1.0; 6], FixedChoice::Default).unwrap();
    let t_end = 2e-3;
    let h = 1e-6;
    let traj = integrate(&sys, &cp, t_end, &IntegratorConfig::fixed(h, 2)).unwrap();
    let mut y = vec![cp.x0[1], cp.x0[3]];
    let mut t = 0.0;
    for _ in 0..(t_end / h).round() as usize {
        let k1 = red.rhs(t, &y).unwrap();
        let y2: Vec<f64> = y.iter().zip(&k1).map(|(a, b)| a + 0.5 * h * b).collect();
        let k2 = red.rhs(t + 0.5 * h, &y2).unwrap();
        let y3: Vec<f64> = y.iter().zip(&k2).map(|(a, b)| a + 0.5 * h * b).collect();
        let k3 = red.rhs(t + 0.5 * h, &y3).unwrap();
        let y4: Vec<f64> = y.iter().zip(&k3).map(|(a, b)| a + h * b).collect();
        let k4 = red.rhs(t + h, &y4).unwrap();
        for j in 0..2 {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        t += h;
    }
    let last = integrateed_last(&traj);
    let dq = (last.0 - y[0]).abs() / (1.0 + y[0].abs());
    let dphi = (last.1 - y[1]).abs() / (1.0 + y[1].abs());
    assert!(dq < 1e-6 && dphi < 1e-6, "trajectory deviation {dq:.3e}, {dphi:.3e}");
    println!(
        "criterion 06: PASS (rhs deviation {worst:.3e}; trajectory deviation {:.3e})",
        dq.max(dphi)
    );
}

fn integrateed_last(traj: &phcirc::solver::Trajectory) -> (f64, f64) {
    let s = traj.last();
    (s.x[1], s.x[3])
}

/// Criterion 7: BDF convergence orders on the analytic RC decay and the
/// second-order central-difference derivative estimate.
#[test]
fn criterion_07_convergence_orders() {
    let sys = sys_for(RC_ANALYTIC, None);
    let cp = consistent_point(&sys, 0.0, &[1.0, 0.0], FixedChoice::Default).unwrap();
    let hs: Vec<f64> = (6..=10).map(|k| 0.5f64.powi(k)).collect();
    let exact = (-1.0f64).exp();
    for (order, nominal, tol) in [(1u8, 1.0, 0.25), (2, 2.0, 0.25)] {
        let errs: Vec<f64> = hs
            .iter()
            .map(|&h| {
                let mut cfg = IntegratorConfig::fixed(h, order);
                cfg.newton_tol = 1e-13;
                let traj = integrate(&sys, &cp, 1.0, &cfg).unwrap();
                (traj.last().x[0] - exact).abs()
            })
            .collect();
        let slope = loglog_slope(&hs, &errs);
        assert!(
            (slope - nominal).abs() <= tol,
            "BDF{order} slope {slope:.3} (errors {errs:?})"
        );
        println!("criterion 07: BDF{order} global order {slope:.3}");
    }
    // derivative estimate: exact qdot(0) = -1
    let errs: Vec<f64> = hs
        .iter()
        .map(|&h| {
            let est = estimate_derivative(&sys, 0.0, &cp.x0, h, 1e-13).unwrap();
            (est.raw[0] + 1.0).abs()
        })
        .collect();
    let slope = loglog_slope(&hs, &errs);
    assert!((slope - 2.0).abs() <= 0.3, "CIC slope {slope:.3} (errors {errs:?})");
    println!("criterion 07: PASS (CIC derivative order {slope:.3})");
}

/// Criterion 8: the pointwise energy-balance identity on the running
/// example and diode clipper, and conservation on the source-free LC loop
/// over ten periods (BDF2 adaptive, rtol 1e-8).
#[test]
fn criterion_08_energy_balance() {
    // running example: fixed h keeps the derivative roundoff floor well
    // under the bound even with the violent all-ones start
    let (sys, _) = build_system(RUNNING_EXAMPLE, None, 2).unwrap();
    let n = sys.layout().len();
    let cp = consistent_point(&sys, 0.0, &vec![1.0; n], FixedChoice::Default).unwrap();
    let mut cfg = IntegratorConfig::fixed(1e-4, 2);
    cfg.newton_tol = 1e-12;
    let traj = integrate(&sys, &cp, 0.2, &cfg).unwrap();
    let mut worst = 0.0f64;
    for s in &traj.samples {
        worst = worst.max(s.balance.abs() / (1.0 + s.port.abs()));
    }
    assert!(worst <= 1e-6, "running example balance ratio {worst:.3e}");
    println!("criterion 08: running example worst balance ratio {worst:.3e}");

    // diode clipper, adaptive
    let (sys, _) = build_system(DIODE_CLIPPER, None, 2).unwrap();
    let n = sys.layout().len();
    let cp = consistent_point(&sys, 0.0, &vec![1.0; n], FixedChoice::Default).unwrap();
    let mut cfg = IntegratorConfig::adaptive(1e-6, 1e-9, 2);
    cfg.newton_tol = 1e-12;
    let traj = integrate(&sys, &cp, 0.03, &cfg).unwrap();
    let mut worst = 0.0f64;
    for s in &traj.samples {
        worst = worst.max(s.balance.abs() / (1.0 + s.port.abs()));
    }
    assert!(worst <= 1e-6, "clipper balance ratio {worst:.3e}");
    println!("criterion 08: diode clipper worst balance ratio {worst:.3e}");

    // source-free LC loop, ten periods
    let sys = sys_for(LC_LOOP, None);
    let cp = consistent_point(&sys, 0.0, &[1.0, 0.0], FixedChoice::Default).unwrap();
    let mut cfg = IntegratorConfig::adaptive(1e-8, 1e-10, 2);
    cfg.newton_tol = 1e-12;
    let traj = integrate(&sys, &cp, 20.0 * std::f64::consts::PI, &cfg).unwrap();
    let h0 = traj.samples[0].energy;
    let mut drift = 0.0f64;
    let mut worst = 0.0f64;
    for s in &traj.samples {
        drift = drift.max((s.energy - h0).abs() / h0);
        worst = worst.max(s.balance.abs());
    }
    // the balance identity at solver points (BDF itself is dissipative);
    // with this tolerance the end-to-end drift also stays within 1e-6
    assert!(worst <= 1e-6, "LC pointwise balance {worst:.3e}");
    assert!(drift <= 1e-6, "LC relative energy drift {drift:.3e}");
    let (_, discrete) = energy_audit(&traj);
    let worst_defect = discrete.iter().copied().fold(0.0f64, f64::max);
    println!(
        "criterion 08: PASS (LC drift {drift:.3e}, balance {worst:.3e}, step defect {worst_defect:.3e})"
    );
}

/// Criterion 9: diode clipper qualitative properties.
#[test]
fn criterion_09_diode_clipper() {
    let (sys, _) = build_system(DIODE_CLIPPER, None, 2).unwrap();
    let n = sys.layout().len();
    let cp = consistent_point(&sys, 0.0, &vec![1.0; n], FixedChoice::Default).unwrap();
    let cfg = IntegratorConfig::adaptive(1e-6, 1e-12, 2);
    let traj = integrate(&sys, &cp, 0.03, &cfg).unwrap();
    let pi = std::f64::consts::PI;
    let source = |t: f64| (2.0 * t / 0.03) * (2000.0 * pi * t).sin();
    let mut max_vi = 0.0f64;
    let mut max_v = 0.0f64;
    let mut low_phase_dev = 0.0f64;
    for s in &traj.samples {
        let v = source(s.t);
        let vi = s.y[0]; // single I edge; outputs are (i_V, v_I)... see below
        let _ = vi;
        let v_i = s.y[1];
        max_vi = max_vi.max(v_i.abs());
        max_v = max_v.max(v.abs());
        if v.abs() <= 0.05 {
            low_phase_dev = low_phase_dev.max((v_i - v).abs());
        }
    }
    assert!(max_v > 1.9, "source peak {max_v}");
    assert!(max_vi < 1.0, "output peak {max_vi}");
    assert!(low_phase_dev <= 1e-3, "low-amplitude tracking {low_phase_dev:.3e}");
    println!(
        "criterion 09: PASS (peak |v_I| = {max_vi:.3}, source peak {max_v:.3}, tracking dev {low_phase_dev:.3e})"
    );
}

/// Criterion 10: positive-definiteness lemma suite, 1000 seeded instances
/// per property.
#[test]
fn criterion_10_pd_pdmp_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xD0D0);
    let tol = 1e-12;
    const TRIALS: usize = 1000;

    let rand_mat = |rng: &mut ChaCha8Rng, n: usize| -> RealMatrix {
        let rows: Vec<Vec<f64>> =
            (0..n).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        RealMatrix::from_rows(&rows)
    };
    let rand_spd = |rng: &mut ChaCha8Rng, n: usize| -> RealMatrix {
        let a = rand_mat(rng, n);
        let mut m = a.matmul(&a.transpose());
        for i in 0..n {
            m[(i, i)] += 0.3 + 0.1 * n as f64;
        }
        m
    };
    let rand_skew = |rng: &mut ChaCha8Rng, n: usize| -> RealMatrix {
        let a = rand_mat(rng, n);
        a.add(&a.transpose().scale(-1.0)).scale(0.5)
    };
    // non-symmetric positive definite: SPD plus a skew part
    let rand_pd = |rng: &mut ChaCha8Rng, n: usize| -> RealMatrix {
        rand_spd(rng, n).add(&rand_skew(rng, n))
    };
    let rand_nonsingular = |rng: &mut ChaCha8Rng, n: usize| -> RealMatrix {
        loop {
            let b = rand_mat(rng, n);
            if Lu::factor(&b, 1e-6).is_ok() {
                return b;
            }
        }
    };
    let rand_orth = |rng: &mut ChaCha8Rng, n: usize| -> RealMatrix {
        let mut q = RealMatrix::identity(n);
        for i in 0..n {
            for j in i + 1..n {
                let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let (c, s) = (th.cos(), th.sin());
                for k in 0..n {
                    let (a, b) = (q[(k, i)], q[(k, j)]);
                    q[(k, i)] = c * a - s * b;
                    q[(k, j)] = s * a + c * b;
                }
            }
        }
        q
    };
    // PDMP generator: (B, -B P) with P positive definite
    let rand_pdmp = |rng: &mut ChaCha8Rng, n: usize| -> (RealMatrix, RealMatrix) {
        let b = rand_nonsingular(rng, n);
        let p = rand_pd(rng, n);
        let bp = b.matmul(&p).scale(-1.0);
        (b, bp)
    };

    // D.2(i): PD implies nonsingular with PD inverse
    for k in 0..TRIALS {
        let n = 1 + k % 4;
        let m = rand_pd(&mut rng, n);
        let lu = Lu::factor(&m, 1e-12).expect("PD matrix is nonsingular");
        let inv = lu.solve_matrix(&RealMatrix::identity(n));
        assert!(is_pd(&inv, tol), "inverse not PD (trial {k})");
    }
    // D.2(ii): PD iff the symmetric part is PD, against the definition
    for k in 0..TRIALS {
        let n = 1 + k % 4;
        let m = if k % 2 == 0 {
            rand_pd(&mut rng, n)
        } else {
            // indefinite shift makes some of these non-PD
            let mut m = rand_pd(&mut rng, n);
            let shift: f64 = rng.random_range(0.0..4.0);
            for i in 0..n {
                m[(i, i)] -= shift;
            }
            m
        };
        let sym = m.add(&m.transpose()).scale(0.5);
        assert_eq!(is_pd(&m, tol), is_pd(&sym, tol), "trial {k}");
        if is_pd(&m, tol) {
            for _ in 0..20 {
                let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let norm2: f64 = x.iter().map(|v| v * v).sum();
                if norm2 > 1e-3 {
                    let quad = phcirc::linalg::dot(&x, &m.matvec(&x));
                    assert!(quad > 0.0, "definition violated (trial {k})");
                }
            }
        }
    }
    // D.2(iii): PD plus skew stays PD
    for k in 0..TRIALS {
        let n = 1 + k % 4;
        let m = rand_pd(&mut rng, n).add(&rand_skew(&mut rng, n));
        assert!(is_pd(&m, tol), "trial {k}");
    }
    // D.4(i)-(iv)
    for k in 0..TRIALS {
        let n = 1 + k % 4;
        let (b, bp) = rand_pdmp(&mut rng, n);
        assert!(is_pdmp(&b, &bp, tol), "base pair (trial {k})");
        // (i) swap symmetry
        assert!(is_pdmp(&bp, &b, tol), "swap (trial {k})");
        // (ii) both nonsingular, -B^{-1}B' PD
        let m = Lu::factor(&b, 1e-12).unwrap().solve_matrix(&bp).scale(-1.0);
        assert!(is_pd(&m, tol), "-B^-1 B' (trial {k})");
        let m2 = Lu::factor(&bp, 1e-12).unwrap().solve_matrix(&b).scale(-1.0);
        assert!(is_pd(&m2, tol), "-B'^-1 B (trial {k})");
        // (iii) (PBQ, PB'Q), P nonsingular, Q orthogonal
        let p = rand_nonsingular(&mut rng, n);
        let q = rand_orth(&mut rng, n);
        assert!(
            is_pdmp(&p.matmul(&b).matmul(&q), &p.matmul(&bp).matmul(&q), tol),
            "congruence (trial {k})"
        );
        // (iv) swapping a random set of columns between B and B'
        let mut c = b.clone();
        let mut cp2 = bp.clone();
        for col in 0..n {
            if rng.random::<bool>() {
                for r in 0..n {
                    std::mem::swap(&mut c[(r, col)], &mut cp2[(r, col)]);
                }
            }
        }
        assert!(is_pdmp(&c, &cp2, tol), "column swap (trial {k})");
    }
    // D.5: B nonsingular with B^{-1}B' PD is an NDMP, i.e. (B, -B') is a PDMP
    for k in 0..TRIALS {
        let n = 1 + k % 4;
        let b = rand_nonsingular(&mut rng, n);
        let p = rand_pd(&mut rng, n);
        let bp = b.matmul(&p);
        assert!(is_pdmp(&b, &bp.scale(-1.0), tol), "trial {k}");
        // the special case: A PD iff (I, A) is an NDMP
        let a = rand_pd(&mut rng, n);
        assert!(is_pdmp(&RealMatrix::identity(n), &a.scale(-1.0), tol), "trial {k}");
    }
    // D.6: the bordered block matrix is nonsingular for arbitrary N
    for k in 0..TRIALS {
        let n1 = 1 + k % 3;
        let n2 = 1 + (k / 3) % 3;
        let m = rand_pd(&mut rng, n1 + n2);
        let nmat = {
            let rows: Vec<Vec<f64>> = (0..n2)
                .map(|_| (0..n1).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            RealMatrix::from_rows(&rows)
        };
        let m11 = m.block(0, 0, n1, n1);
        let m12 = m.block(0, n1, n1, n2);
        let m21 = m.block(n1, 0, n2, n1);
        let m22 = m.block(n1, n1, n2, n2);
        let top_left = m11.add(&nmat.transpose().matmul(&m21).scale(-1.0));
        let top_right = m12.add(&nmat.transpose().matmul(&m22).scale(-1.0));
        let mut p = RealMatrix::zeros(n1 + n2, n1 + n2);
        p.set_block(0, 0, &top_left);
        p.set_block(0, n1, &top_right);
        p.set_block(n1, 0, &nmat);
        p.set_block(n1, n1, &RealMatrix::identity(n2));
        assert!(Lu::factor(&p, 1e-10).is_ok(), "trial {k}");
    }
    // D.7: [[I, S], [C, C']] nonsingular for a PDMP and skew S
    for k in 0..TRIALS {
        let n = 1 + k % 4;
        let (c, cp2) = rand_pdmp(&mut rng, n);
        let s = rand_skew(&mut rng, n);
        let mut m = RealMatrix::zeros(2 * n, 2 * n);
        m.set_block(0, 0, &RealMatrix::identity(n));
        m.set_block(0, n, &s);
        m.set_block(n, 0, &c);
        m.set_block(n, n, &cp2);
        assert!(Lu::factor(&m, 1e-10).is_ok(), "trial {k}");
    }
    println!("criterion 10: PASS (1000 instances per lemma property)");
}

/// Criterion 11: exact integer Tellegen orthogonality over 200 random
/// circuits, for the trees of both builders.
#[test]
fn criterion_11_tellegen_exact() {
    let specs = corpus(200, 0x7E11E6E);
    let mut rng = ChaCha8Rng::seed_from_u64(0x7E11E6E);
    let mut checked = 0usize;
    for spec in &specs {
        let g = CircuitGraph::from_spec(spec).unwrap();
        for tree in [normal_tree_kruskal(&g).unwrap(), normal_tree_rref(&g).unwrap()] {
            let b = g.edge_count();
            let nt = tree.tree.len();
            let nn = tree.cotree.len();
            for _ in 0..4 {
                // random integer link currents and twig voltages
                let i_n: Vec<i64> = (0..nn).map(|_| rng.random_range(-50..=50)).collect();
                let v_t: Vec<i64> = (0..nt).map(|_| rng.random_range(-50..=50)).collect();
                let mut i = vec![0i64; b];
                let mut v = vec![0i64; b];
                for (r, &link) in tree.cotree.iter().enumerate() {
                    i[link] = i_n[r];
                }
                for (s, &twig) in tree.tree.iter().enumerate() {
                    v[twig] = v_t[s];
                }
                // i_T = F^T i_N and v_N = -F v_T, exactly in integers
                for (s, &twig) in tree.tree.iter().enumerate() {
                    i[twig] = (0..nn).map(|r| tree.f[(r, s)] * i_n[r]).sum();
                }
                for (r, &link) in tree.cotree.iter().enumerate() {
                    v[link] = -(0..nt).map(|s| tree.f[(r, s)] * v_t[s]).sum::<i64>();
                }
                let dot: i64 = i.iter().zip(&v).map(|(a, b)| a * b).sum();
                assert_eq!(dot, 0, "Tellegen violated");
                checked += 1;
            }
        }
    }
    println!("criterion 11: PASS ({checked} exact orthogonality checks)");
}

/// Criterion 12: the paper's absolute CPU-time figures are not reproducible;
/// asserted instead: the Kruskal scan scales visibly better than the exact
/// RREF pivot scan on one size sweep (no absolute times).
#[test]
fn criterion_12_asymptotic_sanity() {
    let sizes = [40usize, 80, 160, 320];
    let mut t_kruskal = Vec::new();
    let mut t_rref = Vec::new();
    for (k, &n) in sizes.iter().enumerate() {
        let spec = phcirc::cli::random_circuit(n, 3 * n, "VCCRRGGLLII", 9000 + k as u64)
            .expect("generator");
        let g = CircuitGraph::from_spec(&spec).unwrap();
        // repeat to smooth scheduler noise
        let reps = 20usize;
        let start = std::time::Instant::now();
        for _ in 0..reps {
            std::hint::black_box(kruskal_tree_edges(&g));
        }
        t_kruskal.push(start.elapsed().as_secs_f64() / reps as f64);
        let start = std::time::Instant::now();
        for _ in 0..reps.min(5) {
            std::hint::black_box(rref_tree_edges(&g).unwrap());
        }
        t_rref.push(start.elapsed().as_secs_f64() / reps.min(5) as f64);
    }
    let xs: Vec<f64> = sizes.iter().map(|&n| n as f64).collect();
    let slope_k = loglog_slope(&xs, &t_kruskal);
    let slope_r = loglog_slope(&xs, &t_rref);
    assert!(
        slope_r > slope_k + 0.4,
        "rref slope {slope_r:.2} vs kruskal slope {slope_k:.2}"
    );
    println!(
        "criterion 12: PASS (growth exponents: kruskal {slope_k:.2}, rref {slope_r:.2}; absolute times not asserted)"
    );
}

/// Sanity net around the suite: exact-arithmetic building blocks used above.
#[test]
fn acceptance_support_sanity() {
    // rref idempotence on the running example incidence matrix
    let spec = parse_netlist(RUNNING_EXAMPLE).unwrap();
    let g = CircuitGraph::from_spec(&spec).unwrap();
    let (r, _) = rref_exact(&g.incidence()).unwrap();
    let (r2, _) = rref_exact(&r).unwrap();
    assert_eq!(r, r2);
    // well-conditioned solve round trip
    let a = RealMatrix::from_rows(&[vec![3.0, 1.0], vec![1.0, 2.0]]);
    let x = lu_solve(&a, &[5.0, 5.0], 1e-12).unwrap();
    assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
    // rank of the zero matrix, both paths
    assert_eq!(phcirc::linalg::rank_exact(&IntMatrix::zeros(3, 4)).unwrap(), 0);
    assert_eq!(phcirc::linalg::rank_real(&RealMatrix::zeros(3, 4), 1e-12), 0);
    let _ = build_model2(CircuitModel::new(
        spec,
        validate_tree(&g, RUNNING_EXAMPLE_PAPER_TREE).unwrap(),
    )
    .unwrap())
    .unwrap();
}

/// The spec'd simulate defaults also hold together: adaptive running-example
/// run completes over the paper's interval with the all-ones guess.
#[test]
fn running_example_adaptive_run_completes() {
    let (sys, _) = build_system(RUNNING_EXAMPLE, None, 2).unwrap();
    let n = sys.layout().len();
    let cp = consistent_point(&sys, 0.0, &vec![1.0; n], FixedChoice::Default).unwrap();
    let cfg = IntegratorConfig {
        step: StepMode::Adaptive { rtol: 1e-6, atol: 1e-9, h0: None },
        order: 2,
        newton_tol: 1e-10,
        max_newton: 50,
        max_steps: 50_000_000,
    };
    let traj = integrate(&sys, &cp, 0.2, &cfg).unwrap();
    assert!(traj.last().t >= 0.2 - 1e-9);
}
