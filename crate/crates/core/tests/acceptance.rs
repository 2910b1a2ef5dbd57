//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use common::{all_plans, big_m_feasible, random_instance, random_lp, vertex_enumeration, TestRng};
use nalgebra::DMatrix;
use nortasp::cli::ValidationReport;
use nortasp::grid::{generate_instance, Branch, Bus, GridFile, GridInstance, HardeningPlan, InstanceSpec, Topology};
use nortasp::lp::{solve_lp, LpStatus};
use nortasp::norta::{c_of_rho, nearest_correlation};
use nortasp::stats::{normal_quantile, StandardNormal};
use nortasp::twostage::TwoStageProblem;
use nortasp::{NortaModel, ScenarioSet};

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || {
        format!("took {:.1} s, limit {limit_s} s", elapsed.as_secs_f64())
    })
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn saturation_cost(g: &GridInstance) -> f64 {
    (0..g.n_flooded())
        .map(|c| g.height_cost(c, g.flooded_substation(c).max_height))
        .sum()
}

fn random_plan(rng: &mut TestRng, g: &GridInstance) -> HardeningPlan {
    HardeningPlan::from_heights(
        (0..g.n_flooded())
            .map(|c| rng.int(0, i64::from(g.flooded_substation(c).max_height)) as u32)
            .collect(),
    )
}

fn gaussian_identity() -> Result<String, String> {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for rho in [-0.9, -0.5, 0.0, 0.5, 0.9] {
        let c = c_of_rho(&StandardNormal, &StandardNormal, rho).value;
        worst = worst.max((c - rho).abs());
    }
    ensure(worst <= 1e-3, || format!("max |c - rho| = {worst:.2e}"))?;
    within(start.elapsed(), 5.0)?;
    Ok(format!("max |c - rho| = {worst:.2e}"))
}

fn norta_recovery() -> Result<String, String> {
    let start = Instant::now();
    let (dim, k) = (72, 16);
    let mut rng = TestRng::new(72);
    // One-factor Gaussian copula; heights are floored lognormals.
    let loading: Vec<f64> = (0..dim).map(|_| 0.3 + 0.6 * rng.unit()).collect();
    let mu: Vec<f64> = (0..dim).map(|_| rng.unit()).collect();
    let sigma: Vec<f64> = (0..dim).map(|_| 0.3 + 0.4 * rng.unit()).collect();
    let mut normal = || normal_quantile(rng.unit().clamp(1e-12, 1.0 - 1e-12)).unwrap();
    let rows: Vec<Vec<u32>> = (0..k)
        .map(|_| {
            let f = normal();
            (0..dim)
                .map(|i| {
                    let z = loading[i] * f + (1.0 - loading[i] * loading[i]).sqrt() * normal();
                    (mu[i] + sigma[i] * z).exp().floor().min(12.0) as u32
                })
                .collect()
        })
        .collect();
    let training = ScenarioSet::new(ScenarioSet::default_labels(dim), rows).map_err(err)?;
    let model = NortaModel::fit(&training).map_err(err)?;
    let synth = model.sample(800, 2024).map_err(err)?;
    let report = ValidationReport::new(&training, &synth).map_err(err)?;
    let emd = report.emd_summary.ok_or("no EMD summary")?.mean;
    let corr = report.correlation_error_summary.ok_or("no correlation summary")?.mean;
    let detail = format!("mean EMD {emd:.4}, mean |corr err| {corr:.4}");
    ensure(emd <= 0.15 && corr <= 0.10, || detail.clone())?;
    within(start.elapsed(), 120.0)?;
    Ok(detail)
}

fn psd_repair() -> Result<String, String> {
    let mut a = DMatrix::from_element(3, 3, -0.6);
    a.fill_diagonal(1.0);
    let y = nearest_correlation(&a).map_err(err)?;
    let mut off: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                off = off.max((y.get(i, j) + 0.5).abs());
            }
        }
    }
    ensure(off <= 1e-4, || format!("off-diagonal error {off:.2e}"))?;
    let lam = y.min_eigenvalue();
    ensure(lam >= -1e-8, || format!("min eigenvalue {lam:.2e}"))?;

    let mut rng = TestRng::new(3);
    let mut moved: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.int(2, 8) as usize;
        let f = DMatrix::from_fn(n, n + 2, |_, _| rng.unit() - 0.5);
        let cov = &f * f.transpose();
        let d = DMatrix::from_diagonal(&cov.diagonal().map(|v| 1.0 / v.sqrt()));
        let mut c = &d * cov * &d;
        c.fill_diagonal(1.0);
        let y = nearest_correlation(&c).map_err(err)?;
        moved = moved.max((y.to_dmatrix() - c).norm());
    }
    ensure(moved <= 1e-9, || format!("PSD input moved by {moved:.2e}"))?;
    Ok(format!("off-diagonal error {off:.1e}, min eigenvalue {lam:.1e}, PSD inputs moved {moved:.1e}"))
}

fn big_m_equivalence() -> Result<String, String> {
    let (max_delta, max_h) = (12u32, 10u32);
    let big_m = i64::from(max_delta + max_h + 1);
    let grid = GridInstance::new(GridFile {
        substations: vec![
            nortasp::grid::Substation {
                id: 1,
                flooded_flag: true,
                fixed_cost: 1.0,
                var_cost: 1.0,
                max_height: max_h,
            },
            nortasp::grid::Substation {
                id: 2,
                flooded_flag: false,
                fixed_cost: 1.0,
                var_cost: 1.0,
                max_height: 0,
            },
        ],
        buses: vec![
            Bus { id: 1, substation_id: 1, demand: 1.0, gen_min: 0.0, gen_max: 0.0 },
            Bus { id: 2, substation_id: 2, demand: 0.0, gen_min: 0.0, gen_max: 1.0 },
        ],
        branches: vec![Branch { id: 1, head: 2, tail: 1, susceptance: 1.0, capacity: 1.0 }],
        budget: 0.0,
        reference_bus: 2,
    })
    .map_err(err)?;
    let mut rng = TestRng::new(4);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let x = rng.int(0, i64::from(max_h)) as u32;
        let delta = rng.int(0, i64::from(max_delta)) as u32;
        let z = grid.operational_topology(&[x], &[delta]).map_err(err)?[0];
        let feasible: Vec<u8> = (0..=1)
            .filter(|&b| big_m_feasible(b, i64::from(delta), i64::from(x), big_m))
            .collect();
        if feasible != [u8::from(z)] {
            mismatches += 1;
        }
    }
    ensure(mismatches == 0, || format!("{mismatches} mismatches"))?;
    Ok("1000 pairs, 0 mismatches".into())
}

fn lp_oracle() -> Result<String, String> {
    let mut rng = TestRng::new(6);
    let (mut worst_gap, mut worst_inf): (f64, f64) = (0.0, 0.0);
    let mut infeasible = 0;
    for case in 0..100 {
        let rows = rng.int(3, 5) as usize;
        let p = random_lp(&mut rng, 6, rows);
        let got = solve_lp(&p).map_err(err)?;
        match vertex_enumeration(&p).0 {
            None => {
                infeasible += 1;
                ensure(got.status == LpStatus::Infeasible, || {
                    format!("case {case}: expected infeasible, got {:?}", got.status)
                })?;
            }
            Some(v) => {
                ensure(got.status == LpStatus::Optimal, || {
                    format!("case {case}: expected optimal, got {:?}", got.status)
                })?;
                worst_gap = worst_gap.max((got.objective - v).abs());
                worst_inf = worst_inf.max(p.max_infeasibility(&got.x));
            }
        }
    }
    let detail = format!("max gap {worst_gap:.1e}, max infeasibility {worst_inf:.1e}, {infeasible} infeasible");
    ensure(worst_gap <= 1e-6 && worst_inf <= 1e-7, || detail.clone())?;
    Ok(detail)
}

fn first_stage_exactness() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = TestRng::new(606);
    let mut nodes = 0;
    for case in 0..50 {
        let n_flooded = rng.int(1, 6) as usize;
        let n_sub = n_flooded + rng.int(0, 3) as usize;
        let k = rng.int(1, 8) as usize;
        let (g, s) = random_instance(&mut rng, n_sub, n_flooded, 3, k);
        let p = TwoStageProblem::new(g, &s).map_err(err)?;
        let budget = rng.unit() * saturation_cost(p.grid());
        let exact = p.solve_first_stage(budget).map_err(err)?;
        nodes += exact.nodes;
        let mut best = f64::INFINITY;
        for plan in all_plans(p.grid(), budget) {
            best = best.min(p.saa_objective(&plan).map_err(err)?);
        }
        ensure(exact.value == best, || format!("case {case}: {} vs {best}", exact.value))?;
    }
    within(start.elapsed(), 60.0)?;
    Ok(format!("50 instances equal, {nodes} nodes"))
}

fn in_sample_consistency() -> Result<String, String> {
    let mut rng = TestRng::new(77);
    let (g, s) = random_instance(&mut rng, 8, 5, 3, 8);
    let p = TwoStageProblem::new(g, &s).map_err(err)?;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let plan = random_plan(&mut rng, p.grid());
        let report = p.evaluate_oos(&plan, &s).map_err(err)?;
        let saa = p.saa_objective(&plan).map_err(err)?;
        worst = worst.max((report.mean_shed - saa).abs());
    }
    ensure(worst <= 1e-9, || format!("max difference {worst:.2e}"))?;
    Ok(format!("20 plans, max difference {worst:.1e}"))
}

fn budget_sweep() -> Result<String, String> {
    let start = Instant::now();
    let spec = InstanceSpec {
        n_substations: 20,
        n_flooded: 8,
        buses_per_substation: 2,
        topology: Topology::Ring,
        scenarios: 16,
        max_height: 4,
        budget: 0.0,
        seed: 11,
    };
    let (grid, training) = generate_instance(&spec).map_err(err)?;
    let model = NortaModel::fit(&training).map_err(err)?;
    let synth = model.sample(800, 5).map_err(err)?;
    let top = saturation_cost(&grid);
    let budgets: Vec<f64> = (0..9).map(|i| top * f64::from(i) / 8.0).collect();
    let p = TwoStageProblem::new(grid, &training).map_err(err)?;
    let reports = p.budget_sweep(&budgets, &synth).map_err(err)?;

    let so: Vec<f64> = reports.iter().map(|r| r.so_estimate.unwrap_or(f64::NAN)).collect();
    ensure(so.windows(2).all(|w| w[1] <= w[0]), || format!("(a) SO estimates {so:?}"))?;
    for r in &reports {
        let (mean, std, m) = (r.summary.mean, r.summary.std, r.m as f64);
        let gap = (mean - r.so_estimate.unwrap_or(f64::NAN)).abs();
        ensure(gap <= 3.0 * std / m.sqrt(), || {
            format!("(b) budget {:?}: |mean - SO| = {gap:.4}, 3 std/sqrt(M) = {:.4}", r.budget, 3.0 * std / m.sqrt())
        })?;
    }
    let last = reports.last().ok_or("empty sweep")?;
    ensure(last.summary.max == 0.0 && last.so_estimate == Some(0.0), || {
        format!("(c) saturation shed max {} SO {:?}", last.summary.max, last.so_estimate)
    })?;
    within(start.elapsed(), 300.0)?;
    Ok(format!(
        "SO {:.3} -> {:.3}, OOS mean {:.3} -> {:.3}",
        so[0],
        so[8],
        reports[0].summary.mean,
        last.summary.mean
    ))
}

fn monotonicity() -> Result<String, String> {
    let mut rng = TestRng::new(909);
    let mut worst: f64 = 0.0;
    let mut trials = 0;
    while trials < 500 {
        let n_flooded = rng.int(1, 4) as usize;
        let n_sub = n_flooded + rng.int(0, 3) as usize;
        let (g, s) = random_instance(&mut rng, n_sub, n_flooded, 3, 1);
        let p = TwoStageProblem::new(g, &s).map_err(err)?;
        let plan = random_plan(&mut rng, p.grid());
        let c = rng.int(0, n_flooded as i64 - 1) as usize;
        if plan.height[c] >= p.grid().flooded_substation(c).max_height {
            continue;
        }
        let mut raised = plan.height.clone();
        raised[c] += 1;
        let before = p.recourse_solution(&plan, 0).map_err(err)?;
        let after = p.recourse_solution(&HardeningPlan::from_heights(raised), 0).map_err(err)?;
        worst = worst
            .max(before.balance_residual(p.grid()))
            .max(after.balance_residual(p.grid()));
        ensure(after.shed <= before.shed, || {
            format!("trial {trials}: shed rose from {} to {}", before.shed, after.shed)
        })?;
        trials += 1;
    }
    ensure(worst <= 1e-7, || format!("balance residual {worst:.2e}"))?;
    Ok(format!("500 trials, max residual {worst:.1e}"))
}

fn run_pipeline(dir: &Path, threads: &str) -> Result<Vec<(String, Vec<u8>)>, String> {
    let path = |name: &str| dir.join(name).to_string_lossy().into_owned();
    std::fs::write(
        dir.join("spec.json"),
        r#"{"n_substations":12,"n_flooded":6,"buses_per_substation":2,"topology":"grid","K":16,"max_height":3,"budget":0}"#,
    )
    .map_err(err)?;
    let steps: Vec<Vec<String>> = vec![
        vec!["make-instance".into(), "--spec".into(), path("spec.json"), "--out".into(), path("grid.json"), path("train.csv")],
        vec!["fit".into(), path("train.csv"), "--out".into(), path("model.json")],
        vec!["generate".into(), path("model.json"), "--count".into(), "800".into(), "--out".into(), path("synth.csv")],
        vec!["validate".into(), path("train.csv"), path("synth.csv"), "--out".into(), path("validation.json"), path("validation.csv")],
        vec!["solve".into(), path("grid.json"), path("train.csv"), "--budgets".into(), "0,5,10,20".into(), "--out".into(), path("plans.json")],
        vec!["evaluate".into(), path("grid.json"), path("plans.json"), path("synth.csv"), "--out".into(), path("report.json"), path("report.csv")],
        vec!["sweep".into(), path("grid.json"), path("train.csv"), path("synth.csv"), "--budgets".into(), "0,10".into(), "--out".into(), path("sweep.json")],
    ];
    for step in steps {
        let mut args: Vec<String> = vec!["nortasp".into(), "--seed".into(), "17".into(), "--threads".into(), threads.into(), "--quiet".into()];
        args.extend(step.iter().cloned());
        let code = nortasp::cli::run(&args);
        ensure(code == 0, || format!("{} exited {code}", step[0]))?;
    }
    let names = [
        "grid.json", "train.csv", "model.json", "synth.csv", "validation.json", "validation.csv", "plans.json",
        "report.json", "report.csv", "sweep.json",
    ];
    names
        .iter()
        .map(|n| Ok((n.to_string(), std::fs::read(dir.join(n)).map_err(err)?)))
        .collect()
}

fn determinism() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(err)?;
    let first = run_pipeline(dir.path(), "1")?;
    for entry in std::fs::read_dir(dir.path()).map_err(err)? {
        std::fs::remove_file(entry.map_err(err)?.path()).map_err(err)?;
    }
    let second = run_pipeline(dir.path(), "4")?;
    let differ: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(a, b)| a.1 != b.1)
        .map(|(a, _)| a.0.as_str())
        .collect();
    ensure(differ.is_empty(), || format!("outputs differ: {differ:?}"))?;
    Ok(format!("{} outputs identical across 1 and 4 threads", first.len()))
}

fn main() {
    let checks: [(&str, Check); 10] = [
        ("gaussian copula identity", gaussian_identity),
        ("NORTA recovery", norta_recovery),
        ("PSD repair", psd_repair),
        ("big-M equivalence", big_m_equivalence),
        ("LP oracle", lp_oracle),
        ("first-stage exactness", first_stage_exactness),
        ("in-sample consistency", in_sample_consistency),
        ("budget sweep structure", budget_sweep),
        ("recourse monotonicity", monotonicity),
        ("pipeline determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} ({secs:.1} s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.1} s): {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
