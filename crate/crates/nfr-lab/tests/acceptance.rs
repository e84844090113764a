//! The acceptance gate: ten end-to-end checks of the laboratory's headline
//! guarantees, one verdict line each. Run with
//!
//! ```text
//! cargo test -p nfr-lab --test acceptance -- --nocapture
//! ```
//!
//! to watch the lines stream as the criteria complete. The checks:
//!
//!  1. tree catalogue counts follow the double factorial
//!  2. index algebra: three modulation routes agree; structural invariants
//!  3. remainder family decays in the cutoff at the scheduled rate
//!  4. boundary / quintic-substitution / window-resonant families decay
//!  5. weak trilinear tail decays in the modulation cutoff
//!  6. operator norms are stable under grid refinement and box growth
//!  7. normal-form solver cross-validates against the reference integrator
//!  8. reference integrator conserves mass, inverts the gauge, runs order 4
//!  9. Picard map contracts on the ball; fixed point unique and bounded
//! 10. trilinear evaluator matches a naive scatter-sum oracle; the two
//!     derivative-cubic routes agree

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use nfr_lab::ensemble;
use nfr_lab::gauge::gauge_forward;
use nfr_lab::kernels::{eval_trilinear, TrilinearKernel};
use nfr_lab::operators::{eval_cubic_t, eval_cubic_t_physical};
use nfr_lab::schedule::ScheduleLaw;
use nfr_lab::solver::{
    measure_c_hat, picard_map, solve_normal_form, SolverConfig, Trajectory, TrajectoryMeta,
};
use nfr_lab::suite::{run_suite, select_cutoff, ExperimentSpec, Report, SuiteKind};
use nfr_lab::trees::{enumerate_trees, OrderedTree};
use nfr_lab::{Complex64, FrequencyGrid, SpectralField};
use rand::Rng;

const SEED: u64 = 7;

#[derive(Default)]
struct Gate {
    lines: Vec<String>,
    failures: Vec<String>,
}

impl Gate {
    /// Records one criterion verdict. `limit` is the wall-clock budget in
    /// seconds; exceeding it fails the criterion even if the content passed.
    fn record(
        &mut self,
        idx: usize,
        title: &str,
        limit: Option<f64>,
        elapsed: f64,
        outcome: Result<String, String>,
    ) {
        let outcome = match (outcome, limit) {
            (Ok(detail), Some(cap)) if elapsed > cap => {
                Err(format!("{detail}; but took {elapsed:.1}s > {cap:.0}s budget"))
            }
            (other, _) => other,
        };
        let (verdict, detail) = match outcome {
            Ok(detail) => ("pass", detail),
            Err(detail) => {
                self.failures.push(format!("criterion {idx}: {detail}"));
                ("FAIL", detail)
            }
        };
        let line = format!("[{idx:>2}/10] {verdict} {elapsed:7.1}s  {title} — {detail}");
        println!("{line}");
        self.lines.push(line);
    }

    fn finish(self) {
        if !self.failures.is_empty() {
            panic!(
                "{} of 10 acceptance criteria failed:\n  {}",
                self.failures.len(),
                self.failures.join("\n  ")
            );
        }
    }
}

/// Filters a suite report down to the cases named by `pick` and folds them
/// into one criterion verdict, quoting the first failing bound of each
/// failing case.
fn fold_cases(report: &Report, expect: usize, pick: impl Fn(&str) -> bool) -> Result<String, String> {
    let picked: Vec<_> = report.cases.iter().filter(|c| pick(&c.name)).collect();
    if picked.len() != expect {
        return Err(format!("suite produced {} matching cases, expected {expect}", picked.len()));
    }
    let mut bad = Vec::new();
    let mut tightest = f64::NEG_INFINITY;
    for case in &picked {
        for fit in &case.slopes {
            tightest = tightest.max(fit.slope - fit.slope_bound);
        }
        if case.pass {
            continue;
        }
        let mut why = Vec::new();
        for fit in &case.slopes {
            if !fit.pass {
                why.push(format!(
                    "{}: slope {:.3} vs bound {:.3}, residual {:.3}",
                    fit.label, fit.slope, fit.slope_bound, fit.residual
                ));
            }
        }
        for v in &case.values {
            if v.pass == Some(false) {
                why.push(format!("{}: {:.3e} > {:.3e}", v.label, v.value, v.bound.unwrap_or(f64::NAN)));
            }
        }
        bad.push(format!("{} [{}]", case.name, why.join("; ")));
    }
    if !bad.is_empty() {
        return Err(bad.join(" | "));
    }
    if tightest > f64::NEG_INFINITY {
        Ok(format!("{expect} cases; tightest slope clears its bound by {:.2}", -tightest))
    } else {
        Ok(format!("{expect} cases pass"))
    }
}

fn run_canonical(kind: SuiteKind, dir: &tempfile::TempDir) -> Result<Report, String> {
    let spec = ExperimentSpec::canonical(kind, SEED, dir.path().to_path_buf());
    run_suite(&spec).map_err(|e| e.to_string())
}

// --- criterion 1: tree catalogue ------------------------------------------

fn tree_counts() -> Result<String, String> {
    let expected = [1usize, 3, 15, 105, 945, 10395];
    for (i, &want) in expected.iter().enumerate() {
        let got = enumerate_trees(i + 1).map_err(|e| e.to_string())?.len();
        if got != want {
            return Err(format!("generation {} yields {got} trees, want {want}", i + 1));
        }
    }
    Ok("generations 1..=6 count 1, 3, 15, 105, 945, 10395".into())
}

// --- criterion 2: index algebra -------------------------------------------

/// Structural facts that hold exactly for every catalogued tree: node
/// arities, the generation-root identity, the essential-terminal partition,
/// and monotone shortest root paths.
fn structural_invariants(tree: &OrderedTree, j: usize) -> Result<(), String> {
    let nodes = tree.nodes();
    if nodes.len() != 3 * j + 1 {
        return Err(format!("{tree}: {} nodes, want {}", nodes.len(), 3 * j + 1));
    }
    let terminals = tree.terminals_dfs();
    let parental: Vec<usize> = (0..nodes.len()).filter(|&id| !tree.is_terminal(id)).collect();
    if parental.len() != j || terminals.len() != 2 * j + 1 {
        return Err(format!(
            "{tree}: {} parental / {} terminal nodes, want {j} / {}",
            parental.len(),
            terminals.len(),
            2 * j + 1
        ));
    }
    for &id in &parental {
        let children = nodes[id].children.expect("parental node");
        for (slot, &c) in children.iter().enumerate() {
            if nodes[c].parent != Some(id) || nodes[c].slot as usize != slot + 1 {
                return Err(format!("{tree}: child table of node {id} is inconsistent"));
            }
        }
    }
    let mut essential_union = BTreeSet::new();
    for g in 1..=j {
        let root = tree.root_of_generation(g).map_err(|e| e.to_string())?;
        // The generation root is the node whose expansion opened generation g.
        if tree.expansion_step(root) != Some(g) {
            return Err(format!("{tree}: root of generation {g} was expanded elsewhere"));
        }
        let [r, c1, c2, c3] = tree.projection(g).map_err(|e| e.to_string())?;
        if r != root || nodes[root].children != Some([c1, c2, c3]) {
            return Err(format!("{tree}: projection of generation {g} is inconsistent"));
        }
        for id in tree.essential_terminals(g).map_err(|e| e.to_string())? {
            if !essential_union.insert(id) {
                return Err(format!("{tree}: terminal {id} lies in two essential sets"));
            }
        }
        if g >= 2 {
            let path = tree.shortest_root_path(g).map_err(|e| e.to_string())?;
            if path.first() != Some(&0) || path.last() != Some(&root) {
                return Err(format!("{tree}: root path of generation {g} has wrong endpoints"));
            }
            let mut prev = 0usize;
            for &id in &path {
                let step = tree
                    .expansion_step(id)
                    .ok_or_else(|| format!("{tree}: root path visits terminal {id}"))?;
                if step <= prev && id != 0 {
                    return Err(format!("{tree}: root path generations not increasing"));
                }
                prev = step;
            }
        }
    }
    let all: BTreeSet<usize> = terminals.iter().copied().collect();
    if essential_union != all {
        return Err(format!("{tree}: essential sets miss some terminals"));
    }
    Ok(())
}

fn index_algebra() -> Result<String, String> {
    let mut assignments = 0u64;
    for j in 1..=3usize {
        let trees = enumerate_trees(j).map_err(|e| e.to_string())?;
        for tree in &trees {
            structural_invariants(tree, j)?;
        }
        let mut rng = ensemble::stream(SEED, "acceptance-index", j as u64);
        for i in 0..10_000usize {
            let tree = &trees[i % trees.len()];
            let mut leaves = BTreeMap::new();
            for id in tree.terminals_dfs() {
                leaves.insert(id, rng.gen_range(-20.0..20.0));
            }
            let a = tree.assign_indices(&leaves, None).map_err(|e| e.to_string())?;
            for g in 1..=j {
                let [r, c1, c2, c3] = tree.projection(g).map_err(|e| e.to_string())?;
                let (xi, x1, x2, x3) = (a.xi(r), a.xi(c1), a.xi(c2), a.xi(c3));
                if xi != x1 - x2 + x3 {
                    return Err(format!("{tree}: node constraint broken at generation {g}"));
                }
                // Quadratic form, root-factored, and middle-factored routes.
                let f1 = xi * xi - x1 * x1 + x2 * x2 - x3 * x3;
                let f2 = 2.0 * (xi - x1) * (xi - x3);
                let f3 = 2.0 * (x2 - x1) * (x2 - x3);
                let tol = 1e-10 * f1.abs().max(f2.abs()).max(f3.abs()).max(1.0);
                if (f1 - f3).abs() > tol || (f2 - f3).abs() > tol || (a.raw_phi(g) - f3).abs() > tol
                {
                    return Err(format!(
                        "{tree}: modulation routes disagree at generation {g}: {f1} / {f2} / {f3}"
                    ));
                }
            }
            assignments += 1;
        }
    }
    Ok(format!("{assignments} assignments over 19 trees; three routes within 1e-10"))
}

// --- criterion 9: Picard behavior ------------------------------------------

/// A trajectory in the Picard ball: the initial snapshot pinned to `v0`,
/// every later snapshot perturbed by `delta` in a random unit direction.
fn ball_trajectory(
    v0: &SpectralField,
    times: &[f64],
    delta: f64,
    s: f64,
    meta: &TrajectoryMeta,
    rng: &mut impl Rng,
) -> Trajectory {
    let mut fields = vec![v0.clone()];
    for _ in 1..times.len() {
        let mut f = v0.clone();
        f.axpy(Complex64::new(delta, 0.0), &ensemble::unit_field(v0.grid(), s, rng));
        fields.push(f);
    }
    Trajectory::new(times.to_vec(), fields, meta.clone())
}

fn picard_behavior() -> Result<String, String> {
    let s = 0.6;
    let grid = FrequencyGrid::new(16, 20.0);
    let u0 = ensemble::gaussian_data(grid, 0.1);
    let v0 = gauge_forward(&u0);
    let r = 2.0 * v0.hs_norm(s);
    let c_hat =
        measure_c_hat(grid, s, 16.0, ScheduleLaw::Minimal, SEED, 12).map_err(|e| e.to_string())?;
    let (n_cutoff, window_ok) = select_cutoff(r, c_hat, 0.05);
    if !window_ok {
        return Err(format!("no compliant cutoff window at radius {r:.3e}, c_hat {c_hat:.3e}"));
    }
    let cfg = SolverConfig {
        n: 16,
        box_length: 20.0,
        s,
        dt: 5e-3,
        t_final: 0.05,
        level: 1,
        n_cutoff,
        schedule_law: ScheduleLaw::Minimal,
        picard_tol: 1e-10,
        picard_max_iters: 60,
        allow_noncompliant: false,
    };
    let times = cfg.snapshot_times();
    let meta = TrajectoryMeta { kind: "ball".into(), config_hash: cfg.hash() };
    let delta = 0.5 * v0.hs_norm(s);
    let mut rng = ensemble::stream(SEED, "acceptance-picard", 9);

    let mut worst: f64 = 0.0;
    for pair in 0..20usize {
        let x = ball_trajectory(&v0, &times, delta, s, &meta, &mut rng);
        let y = ball_trajectory(&v0, &times, delta, s, &meta, &mut rng);
        let gx = picard_map(&x, &v0, &cfg).map_err(|e| e.to_string())?;
        let gy = picard_map(&y, &v0, &cfg).map_err(|e| e.to_string())?;
        let ratio = gx.sup_hs_distance(&gy, s) / x.sup_hs_distance(&y, s);
        if !(ratio < 1.0) {
            return Err(format!("pair {pair}: contraction ratio {ratio:.3}"));
        }
        worst = worst.max(ratio);
    }

    let run = solve_normal_form(&v0, &cfg, c_hat).map_err(|e| e.to_string())?;
    let sup = run.trajectory.sup_hs_norm(s);
    if sup > r {
        return Err(format!("fixed point leaves the ball: sup {sup:.6e} > {r:.6e}"));
    }

    // A second, far-away starting trajectory must land on the same fixed
    // point (the constant-iterate start is inside solve_normal_form).
    let mut alt = ball_trajectory(&v0, &times, delta, s, &meta, &mut rng);
    let mut converged = false;
    for _ in 0..cfg.picard_max_iters {
        let next = picard_map(&alt, &v0, &cfg).map_err(|e| e.to_string())?;
        let residual = next.sup_hs_distance(&alt, s);
        alt = next;
        if residual < cfg.picard_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err("second starting trajectory did not converge".into());
    }
    let gap = alt.sup_hs_distance(&run.trajectory, s);
    if gap > 10.0 * cfg.picard_tol {
        return Err(format!("two starts disagree by {gap:.3e} > 10·tol"));
    }
    Ok(format!(
        "worst contraction {worst:.2e}; fixed point sup {sup:.3e} within ball {r:.3e}; starts agree to {gap:.1e}"
    ))
}

// --- criterion 10: oracle equivalence --------------------------------------

/// Independent oracle for the trilinear maps: a scatter-order triple loop
/// over all index tuples with the modulation computed from the quadratic
/// form rather than the factored product.
fn naive_trilinear(
    kernel: TrilinearKernel,
    v1: &SpectralField,
    v2: &SpectralField,
    v3: &SpectralField,
) -> SpectralField {
    let grid = v1.grid();
    let h = grid.n() as i64 / 2;
    let dxi = grid.dxi();
    let mut out = vec![Complex64::new(0.0, 0.0); grid.n()];
    for k1 in -h..h {
        for k2 in -h..h {
            for k3 in -h..h {
                let k = k1 - k2 + k3;
                if k < -h || k >= h {
                    continue;
                }
                let (xi, x1, x2, x3) =
                    (k as f64 * dxi, k1 as f64 * dxi, k2 as f64 * dxi, k3 as f64 * dxi);
                let phi = xi * xi - x1 * x1 + x2 * x2 - x3 * x3;
                let m = match kernel {
                    TrilinearKernel::Raw { t } => {
                        Complex64::new((phi * t).cos(), (phi * t).sin()) * x2
                    }
                    TrilinearKernel::Weighted => {
                        Complex64::new(x2.abs() / (1.0 + phi * phi).powf(0.25), 0.0)
                    }
                    TrilinearKernel::Weak { m } => {
                        if phi.abs() > m {
                            Complex64::new(x2.abs() / (1.0 + phi * phi).powf(0.5), 0.0)
                        } else {
                            Complex64::new(0.0, 0.0)
                        }
                    }
                };
                out[(k + h) as usize] += m
                    * v1.coeffs()[(k1 + h) as usize]
                    * v2.coeffs()[(k2 + h) as usize].conj()
                    * v3.coeffs()[(k3 + h) as usize];
            }
        }
    }
    let inv_l2 = 1.0 / (grid.box_length() * grid.box_length());
    for z in &mut out {
        *z *= inv_l2;
    }
    SpectralField::from_coeffs(grid, out)
}

fn oracle_equivalence() -> Result<String, String> {
    let grid = FrequencyGrid::new(16, std::f64::consts::TAU);
    let mut rng = ensemble::stream(SEED, "acceptance-oracle", 10);
    let kernels = [
        ("oscillatory", TrilinearKernel::Raw { t: 0.37 }),
        ("modulation-weighted", TrilinearKernel::Weighted),
        ("weak-tail", TrilinearKernel::Weak { m: 4.0 }),
    ];
    let mut worst: f64 = 0.0;
    for instance in 0..5usize {
        let v1 = ensemble::unit_field(grid, 0.6, &mut rng);
        let v2 = ensemble::unit_field(grid, 0.6, &mut rng);
        let v3 = ensemble::unit_field(grid, 0.6, &mut rng);
        for (label, kernel) in kernels {
            let fast = eval_trilinear(kernel, &v1, &v2, &v3);
            let slow = naive_trilinear(kernel, &v1, &v2, &v3);
            let rel = fast.sub(&slow).l2_norm() / fast.l2_norm();
            if rel > 1e-12 {
                return Err(format!("instance {instance}, {label} kernel: {rel:.2e} > 1e-12"));
            }
            worst = worst.max(rel);
        }
    }

    let v = ensemble::unit_field(FrequencyGrid::new(32, 20.0), 0.6, &mut rng);
    let freq = eval_cubic_t(&v, 0.37);
    let phys = eval_cubic_t_physical(&v, 0.37);
    let route = freq.sub(&phys).l2_norm() / freq.l2_norm();
    if route > 1e-9 {
        return Err(format!("derivative-cubic routes differ by {route:.2e} > 1e-9"));
    }
    Ok(format!("15 kernel instances within {worst:.1e}; cubic routes within {route:.1e}"))
}

// --- the gate ---------------------------------------------------------------

fn timed(f: impl FnOnce() -> Result<String, String>) -> (f64, Result<String, String>) {
    let start = Instant::now();
    let outcome = f();
    (start.elapsed().as_secs_f64(), outcome)
}

#[test]
fn acceptance() {
    let mut gate = Gate::default();

    let (dt, outcome) = timed(tree_counts);
    gate.record(1, "tree catalogue counts", Some(10.0), dt, outcome);

    let (dt, outcome) = timed(index_algebra);
    gate.record(2, "index algebra and tree structure", Some(30.0), dt, outcome);

    // Criteria 3 and 4 read different families out of one decay-suite run;
    // the wall time is charged to criterion 3.
    let dir = tempfile::tempdir().expect("tempdir");
    let start = Instant::now();
    let decay = run_canonical(SuiteKind::Decay, &dir);
    let dt = start.elapsed().as_secs_f64();
    match &decay {
        Ok(report) => {
            gate.record(
                3,
                "remainder decay in the cutoff",
                None,
                dt,
                fold_cases(report, 4, |n| n.contains("remainder")),
            );
            gate.record(
                4,
                "term-family decay in the cutoff (same run)",
                None,
                0.0,
                fold_cases(report, 12, |n| !n.contains("remainder")),
            );
        }
        Err(e) => {
            gate.record(3, "remainder decay in the cutoff", None, dt, Err(e.clone()));
            gate.record(
                4,
                "term-family decay in the cutoff (same run)",
                None,
                0.0,
                Err("decay suite failed".into()),
            );
        }
    }

    let dir = tempfile::tempdir().expect("tempdir");
    let (dt, outcome) = timed(|| {
        let report = run_canonical(SuiteKind::WeakBounds, &dir)?;
        fold_cases(&report, 8, |_| true)
    });
    gate.record(5, "weak trilinear tail decay", Some(300.0), dt, outcome);

    let dir = tempfile::tempdir().expect("tempdir");
    let (dt, outcome) = timed(|| {
        let report = run_canonical(SuiteKind::OperatorBounds, &dir)?;
        fold_cases(&report, 9, |_| true)
    });
    gate.record(6, "operator-norm stability under refinement", Some(600.0), dt, outcome);

    let dir = tempfile::tempdir().expect("tempdir");
    let (dt, outcome) = timed(|| {
        let report = run_canonical(SuiteKind::SolverXval, &dir)?;
        // The criterion demands genuinely compliant cutoffs, which the suite
        // records but does not itself enforce.
        for case in report.cases.iter().filter(|c| c.name.starts_with("cross-validation")) {
            let holds = case
                .values
                .iter()
                .find(|v| v.label == "smallness conditions hold")
                .ok_or("missing compliance record")?;
            if holds.value != 1.0 {
                return Err(format!("{}: selected cutoff is not compliant", case.name));
            }
        }
        fold_cases(&report, 3, |_| true)
    });
    gate.record(7, "solver cross-validation", Some(900.0), dt, outcome);

    let dir = tempfile::tempdir().expect("tempdir");
    let (dt, outcome) = timed(|| {
        let report = run_canonical(SuiteKind::Conservation, &dir)?;
        fold_cases(&report, 3, |_| true)
    });
    gate.record(8, "reference-solver physics", Some(120.0), dt, outcome);

    let (dt, outcome) = timed(picard_behavior);
    gate.record(9, "Picard contraction, ball, uniqueness", Some(600.0), dt, outcome);

    let (dt, outcome) = timed(oracle_equivalence);
    gate.record(10, "oracle equivalence", Some(60.0), dt, outcome);

    gate.finish();
}
