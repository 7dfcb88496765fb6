//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

use std::io::Write;
use std::process::Command;
use std::time::{Duration, Instant};

use laakso_core::laakso::{LaaksoGraph, LaaksoVertex, LocalGraph};
use laakso_core::params::{fit_params, BranchingFunction, FitOptions, GluingFunction};
use laakso_core::profiles::{check_admissible, DoublingProfile};
use laakso_core::tree::{bfs_distances, enumerate_finite_tree, TreeShape, TreeVertex};
use laakso_core::verify::{
    ball_volumes, check_exit_time, check_hke, check_volume, classify_transience, fit_exponent, scale_function, HkeOptions,
    Transience,
};
use laakso_core::walk::{exact_mean_exit_time, green_partial, heat_kernel, Propagator, SolverOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CAP: usize = 1 << 23;

/// Writes straight to stderr so the line survives output capture.
fn verdict(criterion: u32, pass: bool, detail: &str) {
    let word = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr().lock(), "criterion {criterion}: {word} ({detail})");
}

fn constant_graph(b: u32, g: u32) -> LaaksoGraph {
    LaaksoGraph::new(BranchingFunction::constant(b, true), GluingFunction::constant(g, true)).unwrap()
}

fn power(e: f64) -> DoublingProfile {
    DoublingProfile::power(e).unwrap()
}

fn dyadics(lo: u32, hi: u32) -> Vec<u32> {
    (lo..=hi).map(|k| 1u32 << k).collect()
}

fn volume_exponent(graph: &LaaksoGraph, radii: &[u32]) -> f64 {
    let vols = ball_volumes(graph, &LaaksoVertex::base(), radii, CAP).unwrap();
    let pts: Vec<(f64, f64)> = radii.iter().zip(vols).map(|(&r, v)| (f64::from(r), v as f64)).collect();
    fit_exponent(&pts).unwrap().slope
}

fn exit_exponent(graph: &LaaksoGraph, radii: &[u32]) -> f64 {
    let pts: Vec<(f64, f64)> = radii
        .iter()
        .map(|&r| {
            let rec = exact_mean_exit_time(graph, &LaaksoVertex::base(), r, CAP, &SolverOptions::default()).unwrap();
            (f64::from(r), rec.mean)
        })
        .collect();
    fit_exponent(&pts).unwrap().slope
}

/// Slope of `log p_n(p, p)` against `log n` over the given even step counts.
fn diagonal_exponent(graph: &LaaksoGraph, ns: &[u32]) -> f64 {
    let base = LaaksoVertex::base();
    let n_max = *ns.iter().max().unwrap();
    let records = heat_kernel(graph, &base, n_max, std::slice::from_ref(&base), CAP).unwrap();
    let pts: Vec<(f64, f64)> = ns.iter().map(|&n| (f64::from(n), records[n as usize].p_n)).collect();
    fit_exponent(&pts).unwrap().slope
}

fn diameter(adj: &[Vec<usize>]) -> u64 {
    let d0 = bfs_distances(adj, 0);
    let far = (0..adj.len()).max_by_key(|&i| d0[i]).unwrap();
    *bfs_distances(adj, far).iter().max().unwrap()
}

#[test]
fn criterion_1_tree_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0usize;
    let mut bad_diameters = 0usize;
    let mut pairs = 0usize;
    let configs = 24;
    for _ in 0..configs {
        let m = rng.random_range(-2..=0);
        let target_len = rng.random_range(1..=8);
        let mut values: Vec<u32> = Vec::new();
        let mut count: u64 = 2;
        while values.len() < target_len {
            let v = rng.random_range(2..=6);
            if count * u64::from(v) > 100_000 {
                break;
            }
            count *= u64::from(v);
            values.push(v);
        }
        if values.is_empty() {
            values.push(2);
        }
        let n = m + values.len() as i32;
        let b = BranchingFunction::new(m + 1, values, false);
        let tree = enumerate_finite_tree(m, n, &b, 100_000).unwrap();
        let shape = TreeShape::finite(b, m, n).unwrap();
        let adj = tree.adjacency();
        if diameter(&adj) != 1u64 << (n - m) {
            bad_diameters += 1;
        }
        for _ in 0..20 {
            let src = rng.random_range(0..tree.vertices.len());
            let dist = bfs_distances(&adj, src);
            for _ in 0..50 {
                let dst = rng.random_range(0..tree.vertices.len());
                let d = shape.tree_distance(&tree.vertices[src], &tree.vertices[dst]).unwrap();
                if d.units != dist[dst] || d.exponent != m {
                    mismatches += 1;
                }
                pairs += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = mismatches == 0 && bad_diameters == 0 && elapsed < Duration::from_secs(120);
    verdict(
        1,
        pass,
        &format!("{configs} configs, {pairs} pairs, {mismatches} mismatches, {bad_diameters} bad diameters, {elapsed:.1?}"),
    );
    assert!(pass);
}

#[test]
fn criterion_2_half_line_ground_truth() {
    let start = Instant::now();
    let half = constant_graph(2, 1);
    let base = LaaksoVertex::base();
    let mut worst = 0.0f64;
    for r in [2u32, 4, 8, 16, 32] {
        let rec = exact_mean_exit_time(&half, &base, r, CAP, &SolverOptions::default()).unwrap();
        let exact = f64::from(r * r);
        worst = worst.max((rec.mean - exact).abs() / exact);
    }
    let records = heat_kernel(&half, &base, 4096, std::slice::from_ref(&base), CAP).unwrap();
    let pts: Vec<(f64, f64)> = dyadics(4, 11).iter().map(|&n| (f64::from(n), records[2 * n as usize].p_n)).collect();
    let slope = fit_exponent(&pts).unwrap().slope;
    let elapsed = start.elapsed();
    let pass = worst <= 1e-9 && (-0.56..=-0.44).contains(&slope) && elapsed < Duration::from_secs(60);
    verdict(2, pass, &format!("max relative exit error {worst:.2e}, p_2n slope {slope:.4}, {elapsed:.1?}"));
    assert!(pass);
}

#[test]
fn criterion_3_scale_irregular_tree() {
    let tree = constant_graph(3, 1);
    let log3 = 3f64.log2();
    let vol = volume_exponent(&tree, &dyadics(2, 7));
    let exit = exit_exponent(&tree, &dyadics(2, 6));
    let decay = diagonal_exponent(&tree, &dyadics(4, 10));
    let pass = (vol - log3).abs() <= 0.10 && (exit - (1.0 + log3)).abs() <= 0.15 && (decay + log3 / (1.0 + log3)).abs() <= 0.10;
    verdict(3, pass, &format!("volume {vol:.4}, exit {exit:.4}, on-diagonal {decay:.4}"));
    assert!(pass);
}

#[test]
fn criterion_4_classical_laakso() {
    let start = Instant::now();
    let laakso = constant_graph(2, 2);
    let vol = volume_exponent(&laakso, &dyadics(2, 7));
    let exit = exit_exponent(&laakso, &dyadics(2, 6));
    let decay = diagonal_exponent(&laakso, &dyadics(4, 10));
    let psi = scale_function(&laakso).unwrap();
    let opts = HkeOptions { delta: 0.25, ..HkeOptions::default() };
    let hke = check_hke(&laakso, &LaaksoVertex::base(), &dyadics(4, 10), &psi, &opts, CAP).unwrap();
    let spread = hke.lower.spread;
    let elapsed = start.elapsed();
    let pass = (vol - 2.0).abs() <= 0.10
        && (exit - 2.0).abs() <= 0.15
        && (decay + 1.0).abs() <= 0.10
        && spread <= 100.0
        && elapsed < Duration::from_secs(600);
    verdict(
        4,
        pass,
        &format!("volume {vol:.4}, exit {exit:.4}, on-diagonal {decay:.4}, lower band spread {spread:.3}, {elapsed:.1?}"),
    );
    assert!(pass);
}

#[test]
fn criterion_5_admissibility_gate() {
    let mut wrong = Vec::new();
    let mut total = 0;
    for alpha in [1.0, 1.5, 2.0, 3.0, 4.0] {
        for beta in [1.8, 2.0, (alpha + 3.0) / 2.0, alpha + 1.0, alpha + 1.2] {
            let report = check_admissible(&power(alpha), &power(beta), 2.0, 0, 20);
            let expected = (2.0..=alpha + 1.0).contains(&beta);
            if report.admissible != expected {
                wrong.push((alpha, beta));
            }
            total += 1;
        }
    }
    let pass = wrong.is_empty();
    verdict(5, pass, &format!("{total} pairs, misclassified {wrong:?}"));
    assert!(pass);
}

#[test]
fn criterion_6_fit_soundness() {
    let opts = FitOptions::default();
    let psi_bound = (2.0 * f64::from(opts.b_max) * 4.0).ln();
    let vol_bound = (f64::from(opts.g_max) * 4.0).ln();
    let mut details = Vec::new();
    let mut pass = true;
    for (alpha, beta) in [(1.0, 2.0), (2.0, 2.0), (6f64.log2(), 6f64.log2()), (3.0, 2.5)] {
        let fit = fit_params(&power(alpha), &power(beta), &opts).unwrap();
        let graph = LaaksoGraph::new(fit.b.clone(), fit.g.clone()).unwrap();
        let centers = [LaaksoVertex::base()];
        let vol = check_volume(&graph, &centers, &dyadics(2, 6), 64.0, CAP).unwrap();
        let psi = scale_function(&graph).unwrap();
        let exit = check_exit_time(&graph, &centers, &dyadics(2, 5), &psi, 64.0, CAP).unwrap();
        let ok = fit.psi_log_error <= psi_bound && fit.vol_log_error <= vol_bound && vol.pass && exit.pass;
        pass &= ok;
        details.push(format!(
            "({alpha:.3},{beta:.3}): psi err {:.3}, vol err {:.3}, volume spread {:.2}, exit spread {:.2}",
            fit.psi_log_error, fit.vol_log_error, vol.spread, exit.spread
        ));
    }
    verdict(6, pass, &details.join("; "));
    assert!(pass);
}

#[test]
fn criterion_7_transience() {
    let recurrent = classify_transience(&power(1.0), &power(2.0), 20).map(|t| t.class);
    let transient = classify_transience(&power(3.0), &power(2.0), 20).map(|t| t.class);
    let opts = FitOptions::default();
    let base = LaaksoVertex::base();
    let green = |alpha: f64, n: u32| {
        let fit = fit_params(&power(alpha), &power(2.0), &opts).unwrap();
        let graph = LaaksoGraph::new(fit.b, fit.g).unwrap();
        green_partial(&graph, &base, &base, n, CAP).unwrap()
    };
    let growth = green(1.0, 4096) / green(1.0, 64);
    let increment = green(3.0, 4096) / green(3.0, 2048) - 1.0;
    let classes_ok = recurrent == Ok(Transience::Recurrent) && transient == Ok(Transience::Transient);
    let pass = classes_ok && growth > 10.0 && increment < 0.01;
    verdict(
        7,
        pass,
        &format!(
            "classes {recurrent:?}/{transient:?}, recurrent G(4096)/G(64) = {growth:.4} (needs > 10), \
             transient relative increment {increment:.2e}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_8_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (run, workers) in [1, 4, 1, 4, 1, 4].into_iter().enumerate() {
        let out = dir.path().join(format!("run{run}"));
        let status = Command::new(env!("CARGO_BIN_EXE_laakso"))
            .args(["verify-all", "--b", "2", "--g", "2", "--seed", "17", "--workers", &workers.to_string(), "--out"])
            .arg(&out)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        outputs.push((std::fs::read(out.join("report.json")).unwrap(), status.stdout));
    }
    let identical = outputs.windows(2).all(|w| w[0] == w[1]);
    verdict(8, identical, &format!("{} runs over workers 1 and 4", outputs.len()));
    assert!(identical);
}

/// Mass, symmetry and parity of the transition densities on a ball.
fn kernel_invariants(graph: &LaaksoGraph) -> (f64, f64, bool) {
    let base = LaaksoVertex::base();
    let steps = 60;
    let local = LocalGraph::new(graph, graph.bfs_ball(&base, steps + 1, CAP).unwrap());
    let mut prop = Propagator::new(&local);
    let mut mass_error = 0.0f64;
    for _ in 0..steps {
        prop.step();
        mass_error = mass_error.max((prop.probabilities().iter().sum::<f64>() - 1.0).abs());
    }

    let ball = graph.bfs_ball(&base, 6, CAP).unwrap();
    let targets: Vec<LaaksoVertex> = ball.vertices().iter().step_by(7).take(6).cloned().collect();
    let n_max = 40;
    let mut symmetry_error = 0.0f64;
    let mut parity_ok = true;
    for x in &targets {
        let from_x = heat_kernel(graph, x, n_max, &targets, CAP).unwrap();
        for (j, y) in targets.iter().enumerate() {
            let from_y = heat_kernel(graph, y, n_max, std::slice::from_ref(x), CAP).unwrap();
            let d = graph.bfs_ball(x, 14, CAP).unwrap().distance(y).unwrap();
            for n in 0..=n_max as usize {
                let a = from_x[n * targets.len() + j].p_n;
                let b = from_y[n].p_n;
                if a.max(b) > 0.0 {
                    symmetry_error = symmetry_error.max((a - b).abs() / a.max(b));
                }
                if (n as u32 + d) % 2 == 1 && a != 0.0 {
                    parity_ok = false;
                }
            }
        }
    }
    (mass_error, symmetry_error, parity_ok)
}

fn neighbors_symmetric(graph: &LaaksoGraph) -> bool {
    let ball = graph.bfs_ball(&LaaksoVertex::base(), 10, CAP).unwrap();
    ball.vertices().iter().all(|v| graph.neighbors(v).iter().all(|w| graph.neighbors(w).contains(v)))
}

fn wormholes_ok() -> bool {
    let mut ok = true;
    for (values, n) in [(vec![2], 5), (vec![3, 2, 4], 4), (vec![2, 5, 3], 3), (vec![4, 4], 4)] {
        let b = BranchingFunction::new(1, values, true);
        let shape = TreeShape::finite(b.clone(), 0, n).unwrap();
        let tree = enumerate_finite_tree(0, n, &b, 100_000).unwrap();
        let adj = tree.adjacency();
        let levels: Vec<Option<i32>> = tree.vertices.iter().map(|v: &TreeVertex| shape.wormhole_level(v)).collect();
        for i in 0..adj.len() {
            let dist = bfs_distances(&adj, i);
            for j in 0..adj.len() {
                if let (Some(a), Some(c), true) = (levels[i], levels[j], i != j) {
                    ok &= dist[j] >= 1 << a.min(c);
                }
            }
            for level in 0..=n {
                let nearest = (0..adj.len()).filter(|&j| levels[j] == Some(level)).map(|j| dist[j]).min();
                ok &= nearest.is_some_and(|d| d <= 1 << level);
            }
        }
    }
    ok
}

#[test]
fn criterion_9_invariant_suites() {
    let mut mass = 0.0f64;
    let mut symmetry = 0.0f64;
    let mut parity = true;
    let mut neighbors = true;
    for (b, g) in [(2, 1), (2, 2), (3, 2), (2, 3)] {
        let graph = constant_graph(b, g);
        let (m, s, p) = kernel_invariants(&graph);
        mass = mass.max(m);
        symmetry = symmetry.max(s);
        parity &= p;
        neighbors &= neighbors_symmetric(&graph);
    }
    let irregular = LaaksoGraph::new(
        BranchingFunction::new(1, vec![3, 2, 4, 2, 5], true),
        GluingFunction::new(1, vec![2, 1, 3, 2, 1], true),
    )
    .unwrap();
    let (m, s, p) = kernel_invariants(&irregular);
    mass = mass.max(m);
    symmetry = symmetry.max(s);
    parity &= p;
    neighbors &= neighbors_symmetric(&irregular);
    let wormholes = wormholes_ok();
    let pass = mass <= 1e-12 && symmetry <= 1e-10 && parity && neighbors && wormholes;
    verdict(
        9,
        pass,
        &format!(
            "mass error {mass:.2e}, symmetry error {symmetry:.2e}, parity {parity}, neighbor symmetry {neighbors}, \
             wormholes {wormholes}"
        ),
    );
    assert!(pass);
}
