mod common;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use common::{background, brute_force_shapley, feature_vector, max_abs_diff, uniform_row, RawEnsemble, RawTree};
use esv::bench::{run_convergence, BenchEstimator, BenchScenario, ConvergenceReport, ScenarioKind};
use esv::deeplift::{deeplift_attribute, es_attribute_dag, MicroDag};
use esv::estimators::{
    exact_shapley, kernel_shap_solve, permutation_estimate, sample_coalitions, shapley_kernel_weight,
    Regularization,
};
use esv::model::{Node, Tree, TreeEnsemble};
use esv::viz::{render_force_plot, render_stack_plot, ForcePlotSpec, StackPlotSpec};
use esv::{Explanation, Model, SetFunctionCache};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, fail: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(fail())
    }
}

fn cache(model: &Model, x: &[f64], rows: &[Vec<f64>]) -> SetFunctionCache<Model> {
    SetFunctionCache::singletons(model.clone(), feature_vector(x), background(rows)).unwrap()
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_kernel = 0.0f64;
    let mut worst_brute = 0.0f64;
    for case in 0..50 {
        let m = 2 + case % 11;
        let features: Vec<usize> = (0..m).collect();
        let n_trees = rng.random_range(1..=5);
        let raw = RawEnsemble::random(&mut rng, m, &features, n_trees);
        let model = raw.to_model();
        let x = uniform_row(&mut rng, m);
        let rows: Vec<Vec<f64>> = (0..5).map(|_| uniform_row(&mut rng, m)).collect();
        let c = cache(&model, &x, &rows);
        let exact = exact_shapley(&c).map_err(|e| e.to_string())?;
        let sample = sample_coalitions(m, (1 << m) - 2, case as u64).map_err(|e| e.to_string())?;
        check(sample.len() == (1 << m) - 2, || format!("case {case}: enumeration incomplete"))?;
        let kernel = kernel_shap_solve(&c, &sample, Regularization::None).map_err(|e| e.to_string())?;
        let d = max_abs_diff(&kernel.phi, &exact.phi);
        check(d <= 1e-8, || format!("case {case} (M={m}): kernel vs exact differ by {d:e}"))?;
        worst_kernel = worst_kernel.max(d);
        if m <= 10 {
            let (base, phi) = brute_force_shapley(&|z| raw.eval(z), &x, &rows);
            let d = max_abs_diff(&exact.phi, &phi).max((exact.base_value - base).abs());
            check(d <= 1e-10, || format!("case {case} (M={m}): exact vs brute force differ by {d:e}"))?;
            worst_brute = worst_brute.max(d);
        }
    }
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "50 ensembles, max |kernel-exact| {worst_kernel:.1e}, max |exact-brute| {worst_brute:.1e}, {:.1}s",
        elapsed.as_secs_f64()
    ))
}

fn axioms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut eff, mut sym, mut mono) = (0.0f64, 0.0f64, f64::INFINITY);
    for case in 0..100u64 {
        let m = rng.random_range(3..=8);
        let i = rng.random_range(0..m);
        let j = (i + rng.random_range(1..m)) % m;
        let features: Vec<usize> = (0..m).collect();

        // Symmetric pair: every tree plus its i/j mirror, x_i = x_j, b_i = b_j.
        let base = RawEnsemble::random(&mut rng, m, &features, 3);
        let mut trees = base.trees.clone();
        trees.extend(base.trees.iter().map(|t| t.swapped(i, j)));
        let sym_model = RawEnsemble { trees, ..base.clone() }.to_model();
        let mut x = uniform_row(&mut rng, m);
        x[j] = x[i];
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let mut r = uniform_row(&mut rng, m);
                r[j] = r[i];
                r
            })
            .collect();
        let e = exact_shapley(&cache(&sym_model, &x, &rows)).map_err(|e| e.to_string())?;
        let d = (e.phi[i] - e.phi[j]).abs();
        check(d <= 1e-10, || format!("symmetry case {case}: |phi_i - phi_j| = {d:e}"))?;
        sym = sym.max(d);

        // Dominating pair: add a stump on i that pays more when x_i >= t, t <= x_i.
        let x = uniform_row(&mut rng, m);
        let rows: Vec<Vec<f64>> = (0..4).map(|_| uniform_row(&mut rng, m)).collect();
        let lower = rng.random_range(-1.0..1.0);
        let stump = RawTree(vec![
            Node::Split {
                feature: i,
                threshold: rng.random_range(0.0..=x[i]),
                left: 1,
                right: 2,
            },
            Node::Leaf(lower),
            Node::Leaf(lower + rng.random_range(0.0..1.0)),
        ]);
        let mut dominating = base.clone();
        dominating.trees.push(stump);
        let e_low = exact_shapley(&cache(&base.to_model(), &x, &rows)).map_err(|e| e.to_string())?;
        let e_high = exact_shapley(&cache(&dominating.to_model(), &x, &rows)).map_err(|e| e.to_string())?;
        let gap = e_high.phi[i] - e_low.phi[i];
        check(gap >= -1e-10, || format!("monotonicity case {case}: phi_i dropped by {:e}", -gap))?;
        mono = mono.min(gap);

        // Dummy: feature `i` unused.
        let others: Vec<usize> = (0..m).filter(|&k| k != i).collect();
        let raw = RawEnsemble::random(&mut rng, m, &others, 3);
        let c = cache(&raw.to_model(), &x, &rows);
        let e = exact_shapley(&c).map_err(|e| e.to_string())?;
        check(e.phi[i] == 0.0, || format!("dummy case {case}: phi = {:e}", e.phi[i]))?;

        // Efficiency for exact, kernel and permutation estimators.
        let fx = raw.eval(&x);
        let kernel = kernel_shap_solve(&c, &sample_coalitions(m, 40, case).unwrap(), Regularization::None)
            .map_err(|e| e.to_string())?;
        let perm = permutation_estimate(&c, 7, case).map_err(|e| e.to_string())?;
        for (name, est, tol) in [("exact", &e, 1e-8), ("kernel", &kernel, 1e-8), ("permutation", &perm, 1e-12)] {
            let d = (est.output() - fx).abs();
            check(d <= tol * fx.abs().max(1.0), || format!("efficiency case {case} ({name}): off by {d:e}"))?;
            eff = eff.max(d);
        }
    }
    Ok(format!(
        "100 cases each: max efficiency gap {eff:.1e}, max symmetry gap {sym:.1e}, min monotone gain {mono:.1e}, dummies exactly 0"
    ))
}

fn kernel_symmetry() -> Outcome {
    for m in 1..=64 {
        for s in 0..=m {
            let a = shapley_kernel_weight(m, s).map_err(|e| e.to_string())?;
            let b = shapley_kernel_weight(m, m - s).map_err(|e| e.to_string())?;
            check(a == b, || format!("M={m}, s={s}: {a:?} != {b:?}"))?;
        }
    }
    Ok("bitwise equal for all M <= 64, all s".into())
}

fn max_dag() -> Outcome {
    let dag = MicroDag::from_json(
        r#"{"nodes":[{"op":"input"},{"op":"input"},{"op":"max","parents":[0,1]}],"output":2}"#,
    )
    .map_err(|e| e.to_string())?;
    let x = [1.0, 3.0];
    let reference = [0.0, 0.0];
    // Set function with one reference row, enumerated by hand.
    let (_, es_oracle) = brute_force_shapley(&|z| z[0].max(z[1]), &x, &[reference.to_vec()]);
    // The winning input at x carries the whole output difference.
    let winner = if x[0] >= x[1] { 0 } else { 1 };
    let mut dl_oracle = vec![0.0; 2];
    dl_oracle[winner] = x[0].max(x[1]) - reference[0].max(reference[1]);

    let es = es_attribute_dag(&dag, &feature_vector(&x), &feature_vector(&reference)).map_err(|e| e.to_string())?;
    let dl = deeplift_attribute(&dag, &feature_vector(&x), &feature_vector(&reference)).map_err(|e| e.to_string())?;
    check(max_abs_diff(&es_oracle, &[0.5, 2.5]) <= 1e-12, || format!("oracle ES {es_oracle:?}"))?;
    check(max_abs_diff(&es.phi, &es_oracle) <= 1e-10, || format!("ES {:?}", es.phi))?;
    check(max_abs_diff(&dl.contributions, &dl_oracle) <= 1e-10, || format!("DeepLIFT {:?}", dl.contributions))?;
    let (s_es, s_dl) = (es.phi.iter().sum::<f64>(), dl.contributions.iter().sum::<f64>());
    check((s_es - 3.0).abs() <= 1e-10 && (s_dl - 3.0).abs() <= 1e-10, || format!("sums {s_es}, {s_dl}"))?;
    Ok(format!("ES {:?}, DeepLIFT {:?}", es.phi, dl.contributions))
}

fn band(report: &ConvergenceReport, est: BenchEstimator, feature: usize) -> Result<f64, String> {
    report
        .top_cell(est, feature)
        .map(|c| c.p90 - c.p10)
        .ok_or_else(|| format!("{}: no {est} cell for feature {feature}", report.scenario))
}

fn convergence() -> Outcome {
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut reports = Vec::new();
    for kind in [ScenarioKind::Dense10, ScenarioKind::Sparse3of100] {
        let scenario = BenchScenario::builtin(kind, 0, false).map_err(|e| e.to_string())?;
        check(scenario.replicates == 200, || "expected 200 replicates".into())?;
        let report = run_convergence(&scenario).map_err(|e| e.to_string())?;
        let top = *report.budgets.last().unwrap();

        let mut narrower = 0;
        for &f in &report.tracked {
            if band(&report, BenchEstimator::KernelLasso, f)? < band(&report, BenchEstimator::Permutation, f)? {
                narrower += 1;
            }
        }
        check(narrower >= 2, || format!("{kind}: kernel-lasso band narrower for only {narrower} of 3"))?;

        let mut lime_worse = 0;
        for &f in &report.tracked {
            let truth = report.truth[f];
            let k = report.top_cell(BenchEstimator::KernelLasso, f).unwrap().mean;
            let l = report
                .top_cell(BenchEstimator::Lime, f)
                .ok_or_else(|| format!("{kind}: no lime cell"))?
                .mean;
            if (l - truth).abs() > (k - truth).abs() {
                lime_worse += 1;
            }
        }
        check(lime_worse >= 1, || format!("{kind}: lime never further from exact than kernel-lasso"))?;
        notes.push(format!("{kind}: band narrower {narrower}/3, lime worse {lime_worse}/3 at budget {top}"));
        reports.push(report);
    }
    let sparse = &reports[1];
    let unused = 3;
    check(sparse.truth[unused] == 0.0, || "unused feature has nonzero truth".into())?;
    let cell = sparse
        .top_cell(BenchEstimator::KernelLasso, unused)
        .ok_or_else(|| "no kernel-lasso cell for the unused feature".to_string())?;
    check(cell.mean == 0.0 && cell.p10 == 0.0 && cell.p90 == 0.0, || {
        format!("unused feature at budget {}: mean {:e}, p10 {:e}, p90 {:e}", cell.budget, cell.mean, cell.p10, cell.p90)
    })?;
    let nonzero_lower: Vec<usize> = sparse
        .cells
        .iter()
        .filter(|c| c.estimator == BenchEstimator::KernelLasso && c.feature == unused && c.mean != 0.0)
        .map(|c| c.budget)
        .collect();
    notes.push(format!(
        "sparse unused feature exactly 0 at budget {} (mean nonzero at budgets {nonzero_lower:?})",
        cell.budget
    ));
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(600), || format!("took {elapsed:?}"))?;
    notes.push(format!("{:.0}s", elapsed.as_secs_f64()));
    Ok(notes.join("; "))
}

fn permutation_unbiased() -> Outcome {
    let model = esv::bench::generate_scenario_model(ScenarioKind::Dense10, 0).map_err(|e| e.to_string())?;
    let (x, bg) = esv::bench::generate_scenario_inputs(ScenarioKind::Dense10, 0);
    let c = SetFunctionCache::singletons(model, x, bg).map_err(|e| e.to_string())?;
    let exact = exact_shapley(&c).map_err(|e| e.to_string())?;
    let m = exact.phi.len();
    let n = 1000;
    let runs: Vec<Vec<f64>> = (0..n as u64)
        .map(|seed| permutation_estimate(&c, 16, seed).map(|e| e.phi))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for i in 0..m {
        let mean = runs.iter().map(|r| r[i]).sum::<f64>() / n as f64;
        let var = runs.iter().map(|r| (r[i] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let bound = 3.0 * var.sqrt() / (n as f64).sqrt();
        let dev = (mean - exact.phi[i]).abs();
        check(dev <= bound, || format!("feature {i}: |mean - exact| {dev:e} > {bound:e}"))?;
        worst = worst.max(dev / bound);
    }
    Ok(format!("1000 seeds x 16 orderings, worst deviation {worst:.2} of the 3-sigma bound"))
}

fn attr(node: roxmltree::Node, name: &str) -> Result<f64, String> {
    node.attribute(name)
        .ok_or_else(|| format!("missing {name}"))?
        .parse()
        .map_err(|_| format!("bad {name}"))
}

fn random_explanation(rng: &mut ChaCha8Rng, m: usize) -> Explanation {
    let phi = (0..m)
        .map(|_| if rng.random_bool(0.1) { 0.0 } else { rng.random_range(-2.0..2.0) })
        .collect();
    Explanation::new(rng.random_range(-1.0..1.0), phi, "exact", 0, 0)
}

fn visualization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let mut batch = Vec::new();
    for case in 0..100 {
        let m = rng.random_range(1..=12);
        let e = random_explanation(&mut rng, m);
        let spec = ForcePlotSpec::fit(e.clone(), 900.0, 120.0).map_err(|e| e.to_string())?;
        let svg = render_force_plot(&spec).map_err(|e| e.to_string())?;
        let doc = roxmltree::Document::parse(&svg).map_err(|err| format!("case {case}: {err}"))?;
        let mut drawn = vec![false; m];
        for rect in doc.descendants().filter(|n| n.has_tag_name("rect")) {
            if !rect.attribute("class").unwrap_or("").contains("segment") {
                continue;
            }
            let f: usize = attr(rect, "data-feature")? as usize;
            drawn[f] = true;
            let d = (attr(rect, "width")? - spec.scale * e.phi[f].abs()).abs();
            check(d <= 0.5, || format!("case {case}, feature {f}: width off by {d}"))?;
            worst = worst.max(d);
        }
        for (f, &phi) in e.phi.iter().enumerate() {
            check(drawn[f] == (phi != 0.0), || format!("case {case}: feature {f} drawn = {}", drawn[f]))?;
        }
        let marker = |class: &str| -> Result<f64, String> {
            let n = doc
                .descendants()
                .find(|n| n.attribute("class") == Some(class))
                .ok_or_else(|| format!("case {case}: no {class}"))?;
            attr(n, "x1")
        };
        let offset = marker("output-marker")? - marker("base-marker")?;
        let d = (offset - spec.scale * e.phi.iter().sum::<f64>()).abs();
        check(d <= 0.5, || format!("case {case}: marker offset off by {d}"))?;
        worst = worst.max(d);
        if m == 4 {
            batch.push(e);
        }
    }
    let order: Vec<usize> = (0..batch.len()).collect();
    let spec = StackPlotSpec::fit(batch, order, 900.0, 350.0).map_err(|e| e.to_string())?;
    let svg = render_stack_plot(&spec).map_err(|e| e.to_string())?;
    roxmltree::Document::parse(&svg).map_err(|err| format!("stack plot: {err}"))?;
    Ok(format!("100 force plots and 1 stack plot well-formed, max geometry error {worst:.1e} px"))
}

fn write_fixtures(dir: &Path) {
    let tree = |feature, threshold, lo, hi| {
        Tree::new(
            vec![
                Node::Split {
                    feature,
                    threshold,
                    left: 1,
                    right: 2,
                },
                Node::Leaf(lo),
                Node::Leaf(hi),
            ],
            3,
        )
        .unwrap()
    };
    let model = Model::TreeEnsemble(
        TreeEnsemble::new(3, 0.1, vec![tree(0, 0.5, -1.0, 1.0), tree(1, 0.3, 0.5, -0.25), tree(2, 0.7, 0.0, 2.0)]).unwrap(),
    );
    std::fs::write(dir.join("model.json"), model.to_json()).unwrap();
    std::fs::write(
        dir.join("data.csv"),
        "a,b,c\n0.9,0.1,0.8\n0.2,0.6,0.1\n0.4,0.2,0.9\n0.7,0.9,0.3\n",
    )
    .unwrap();
    std::fs::write(
        dir.join("dag.json"),
        r#"{"nodes":[{"op":"input"},{"op":"input"},{"op":"max","parents":[0,1]}],"output":2}"#,
    )
    .unwrap();
    std::fs::write(dir.join("point.csv"), "x0,x1\n1,3\n").unwrap();
}

fn esv(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_esv"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    check(out.status.success(), || {
        format!("esv {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr))
    })
}

fn read_tree(path: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            files.extend(read_tree(&p));
        }
    } else {
        files.push((path.to_path_buf(), std::fs::read(path).unwrap()));
    }
    files
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    write_fixtures(dir);
    let runs: Vec<(&str, Vec<&str>, &str)> = vec![
        ("explain exact", vec!["explain", "--model", "model.json", "--data", "data.csv", "--out", "exact.json"], "exact.json"),
        ("explain perm", vec!["explain", "--model", "model.json", "--data", "data.csv", "--estimator", "perm", "--samples", "5", "--seed", "3", "--out", "perm.json"], "perm.json"),
        ("explain kernel", vec!["explain", "--model", "model.json", "--data", "data.csv", "--instance", "1", "--estimator", "kernel", "--samples", "4", "--seed", "9", "--lasso", "auto", "--out", "kernel.json"], "kernel.json"),
        ("explain lime", vec!["explain", "--model", "model.json", "--data", "data.csv", "--instance", "2", "--estimator", "lime", "--samples", "6", "--seed", "1", "--out", "lime.json"], "lime.json"),
        ("plot-force", vec!["plot-force", "exact.json", "--out", "force.svg"], "force.svg"),
        ("plot-stack", vec!["plot-stack", "exact.json", "perm.json", "kernel.json", "lime.json", "--out", "stack.svg"], "stack.svg"),
        ("compare-deeplift", vec!["compare-deeplift", "--model", "dag.json", "--data", "point.csv", "--out", "comparison.json"], "comparison.json"),
        ("bench", vec!["bench", "--scenario", "dense10", "--fast", "--seed", "5", "--out", "report"], "report"),
    ];
    for (name, args, output) in &runs {
        esv(dir, args)?;
        let first = read_tree(&dir.join(output));
        esv(dir, args)?;
        let second = read_tree(&dir.join(output));
        check(!first.is_empty() && first == second, || format!("{name}: outputs differ between runs"))?;
    }
    Ok(format!("{} invocations byte-identical across reruns", runs.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("oracle equivalence", oracle_equivalence),
        ("axioms", axioms),
        ("kernel weight symmetry", kernel_symmetry),
        ("max(x0, x1) attribution", max_dag),
        ("estimator convergence", convergence),
        ("permutation unbiasedness", permutation_unbiased),
        ("visualization geometry", visualization),
        ("cli determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS {} {name}: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name}: {detail}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
