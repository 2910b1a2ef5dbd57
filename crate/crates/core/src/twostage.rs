//! Load-shed recourse, the SAA objective, exact and greedy first-stage
//! solvers, and out-of-sample evaluation.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridInstance, HardeningPlan};
use crate::lp::{solve_lp, LpProblem, LpStatus, Sense};
use crate::scenario::ScenarioSet;
use crate::stats::Summary;

/// Default branch-and-bound node budget.
pub const NODE_LIMIT: usize = 1_000_000;
/// Shed values are rounded to this grid so that solver noise far below the
/// LP tolerances cannot reorder plans whose true sheds are equal.
pub const SHED_QUANTUM: f64 = 1e-9;
pub const QUANTILE_METHOD: &str = "linear interpolation between order statistics at p(M-1)";

/// Optimal second-stage operation for one scenario. Vectors are indexed by
/// bus or branch position in the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecourseSolution {
    pub z: Vec<bool>,
    pub s: Vec<f64>,
    pub g: Vec<f64>,
    pub u: Vec<bool>,
    pub alpha: Vec<f64>,
    pub e: Vec<f64>,
    pub shed: f64,
}

impl RecourseSolution {
    /// Largest violation of flow balance `out - in = g - s` over all buses.
    pub fn balance_residual(&self, grid: &GridInstance) -> f64 {
        (0..grid.buses().len())
            .map(|j| {
                let out: f64 = grid.out_branches(j).iter().map(|&r| self.e[r]).sum();
                let inflow: f64 = grid.in_branches(j).iter().map(|&r| self.e[r]).sum();
                (out - inflow - self.g[j] + self.s[j]).abs()
            })
            .fold(0.0, f64::max)
    }
}

fn quantize(v: f64) -> f64 {
    (v / SHED_QUANTUM).round() * SHED_QUANTUM
}

/// Solves the recourse LP for bus status `z`. Errors carry a plain message;
/// callers attach the scenario.
fn solve_recourse(grid: &GridInstance, z: &[bool]) -> std::result::Result<RecourseSolution, String> {
    let buses = grid.buses();
    let branches = grid.branches();
    let nb = buses.len();

    let mut pinned = vec![false; nb];
    for comp in grid.connected_components(z) {
        let anchor = if comp.contains(&grid.reference_bus()) {
            grid.reference_bus()
        } else {
            *comp.iter().min_by_key(|&&b| buses[b].id).expect("components are non-empty")
        };
        pinned[anchor] = true;
    }

    let mut lp = LpProblem::new();
    // Variable indices per bus: (s, g, alpha).
    let mut bus_vars: Vec<Option<(usize, usize, usize)>> = vec![None; nb];
    for j in 0..nb {
        if z[j] {
            let b = &buses[j];
            let s = lp.add_variable(-1.0, 0.0, b.demand);
            let g = lp.add_variable(0.0, 0.0, b.gen_max);
            let bound = if pinned[j] { 0.0 } else { PI };
            let a = lp.add_variable(0.0, -bound, bound);
            bus_vars[j] = Some((s, g, a));
        }
    }
    let mut flow_var: Vec<Option<usize>> = vec![None; branches.len()];
    for (r, br) in branches.iter().enumerate() {
        let (h, t) = grid.branch_ends(r);
        if z[h] && z[t] {
            flow_var[r] = Some(lp.add_variable(0.0, -br.capacity, br.capacity));
        }
    }
    for (j, vars) in bus_vars.iter().enumerate() {
        let Some((s, g, _)) = *vars else { continue };
        let mut row = vec![(s, 1.0), (g, -1.0)];
        row.extend(grid.out_branches(j).iter().filter_map(|&r| flow_var[r]).map(|e| (e, 1.0)));
        row.extend(grid.in_branches(j).iter().filter_map(|&r| flow_var[r]).map(|e| (e, -1.0)));
        lp.add_constraint(row, Sense::Eq, 0.0);
    }
    for (r, br) in branches.iter().enumerate() {
        let Some(e) = flow_var[r] else { continue };
        let (h, t) = grid.branch_ends(r);
        let (ah, at) = (bus_vars[h].expect("live end").2, bus_vars[t].expect("live end").2);
        lp.add_constraint(
            vec![(e, 1.0), (ah, -br.susceptance), (at, br.susceptance)],
            Sense::Eq,
            0.0,
        );
    }

    let sol = solve_lp(&lp).map_err(|e| e.to_string())?;
    if sol.status != LpStatus::Optimal {
        return Err(format!(
            "recourse LP ended with status {:?} after {} iterations ({} variables, {} rows)",
            sol.status,
            sol.iterations,
            lp.n_vars(),
            lp.constraints.len()
        ));
    }
    if sol.max_infeasibility > 1e-7 {
        return Err(format!(
            "recourse LP solution violates constraints by {}",
            sol.max_infeasibility
        ));
    }

    let mut s = vec![0.0; nb];
    let mut g = vec![0.0; nb];
    let mut alpha = vec![0.0; nb];
    for j in 0..nb {
        if let Some((sv, gv, av)) = bus_vars[j] {
            s[j] = sol.x[sv];
            g[j] = sol.x[gv];
            alpha[j] = sol.x[av];
        }
    }
    let e = flow_var.iter().map(|v| v.map_or(0.0, |k| sol.x[k])).collect();
    let served: f64 = s.iter().sum();
    let shed = quantize(grid.total_demand() - served).clamp(0.0, grid.total_demand());
    Ok(RecourseSolution {
        z: z.to_vec(),
        u: z.to_vec(),
        s,
        g,
        alpha,
        e,
        shed,
    })
}

/// Minimum load shed for `plan` under one scenario row (flooded-column order).
pub fn recourse(grid: &GridInstance, plan: &HardeningPlan, scenario: &[u32]) -> Result<RecourseSolution> {
    grid.check_plan(plan, f64::INFINITY)?;
    let z = grid.operational_topology(&plan.height, scenario)?;
    solve_recourse(grid, &z).map_err(Error::Numerical)
}

/// A grid with its training scenarios.
#[derive(Debug)]
pub struct TwoStageProblem {
    grid: GridInstance,
    scenarios: ScenarioSet,
    first_stage_cost: Vec<f64>,
    node_limit: usize,
    /// Shed by dead-column pattern; shed depends on the plan only through it.
    cache: Mutex<HashMap<Vec<bool>, f64>>,
}

impl Clone for TwoStageProblem {
    fn clone(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            scenarios: self.scenarios.clone(),
            first_stage_cost: self.first_stage_cost.clone(),
            node_limit: self.node_limit,
            cache: Mutex::new(self.cache.lock().expect("cache lock").clone()),
        }
    }
}

/// Result of [`solve_first_stage`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstStageSolution {
    pub plan: HardeningPlan,
    pub value: f64,
    pub cost: f64,
    pub nodes: usize,
}

impl TwoStageProblem {
    /// Scenario columns are matched to flooded substations by label.
    pub fn new(grid: GridInstance, scenarios: &ScenarioSet) -> Result<Self> {
        let scenarios = grid.align_scenarios(scenarios)?;
        let n = grid.n_flooded();
        Ok(Self {
            grid,
            scenarios,
            first_stage_cost: vec![0.0; n],
            node_limit: NODE_LIMIT,
            cache: Mutex::new(HashMap::new()),
        })
    }

    /// Linear first-stage cost per flooded substation, column order.
    pub fn with_first_stage_cost(mut self, c: Vec<f64>) -> Result<Self> {
        if c.len() != self.grid.n_flooded() {
            return Err(Error::Validation(format!(
                "first-stage cost has {} entries for {} flooded substations",
                c.len(),
                self.grid.n_flooded()
            )));
        }
        if c.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Validation("first-stage costs must be finite and non-negative".into()));
        }
        self.first_stage_cost = c;
        Ok(self)
    }

    /// Branch-and-bound node budget (default [`NODE_LIMIT`]).
    pub fn with_node_limit(mut self, limit: usize) -> Self {
        self.node_limit = limit;
        self
    }

    pub fn grid(&self) -> &GridInstance {
        &self.grid
    }

    pub fn scenarios(&self) -> &ScenarioSet {
        &self.scenarios
    }

    pub fn first_stage_cost(&self) -> &[f64] {
        &self.first_stage_cost
    }

    fn linear_cost(&self, height: &[u32]) -> f64 {
        self.first_stage_cost
            .iter()
            .zip(height)
            .map(|(c, &x)| c * f64::from(x))
            .sum()
    }

    /// Shed for each row of `rows` under heights `x`, in row order.
    fn sheds(&self, height: &[u32], rows: &[Vec<u32>]) -> Result<Vec<f64>> {
        let patterns: Vec<Vec<bool>> = rows.iter().map(|r| self.grid.dead_columns(height, r)).collect();
        let mut missing: Vec<(usize, &Vec<bool>)> = Vec::new();
        {
            let cache = self.cache.lock().expect("cache lock");
            let mut seen = std::collections::HashSet::new();
            for (k, p) in patterns.iter().enumerate() {
                if !cache.contains_key(p) && seen.insert(p) {
                    missing.push((k, p));
                }
            }
        }
        let solved: Vec<(Vec<bool>, f64)> = missing
            .par_iter()
            .map(|&(k, p)| {
                solve_recourse(&self.grid, &self.grid.bus_status(p))
                    .map(|sol| (p.clone(), sol.shed))
                    .map_err(|message| Error::Recourse { scenario: k, message })
            })
            .collect::<Result<_>>()?;
        let mut cache = self.cache.lock().expect("cache lock");
        cache.extend(solved);
        Ok(patterns.iter().map(|p| cache[p]).collect())
    }

    /// `sum_k p_k shed_k` over the training scenarios, summed in order.
    fn expected_shed(&self, height: &[u32]) -> Result<f64> {
        let sheds = self.sheds(height, self.scenarios.rows())?;
        Ok(sheds
            .iter()
            .zip(self.scenarios.probs())
            .fold(0.0, |acc, (s, p)| acc + p * s))
    }

    /// Full recourse solution for training scenario `k`.
    pub fn recourse_solution(&self, plan: &HardeningPlan, k: usize) -> Result<RecourseSolution> {
        self.grid.check_plan(plan, f64::INFINITY)?;
        let z = self.grid.operational_topology(&plan.height, self.scenarios.row(k))?;
        solve_recourse(&self.grid, &z).map_err(|message| Error::Recourse { scenario: k, message })
    }

    /// SAA objective `c x + sum_k p_k L(x, k)`.
    pub fn saa_objective(&self, plan: &HardeningPlan) -> Result<f64> {
        self.grid.check_plan(plan, f64::INFINITY)?;
        Ok(self.linear_cost(&plan.height) + self.expected_shed(&plan.height)?)
    }

    /// Candidate heights per column: zero plus every scenario height the
    /// barrier limit allows. Other heights are dominated.
    fn levels(&self) -> Vec<Vec<u32>> {
        (0..self.grid.n_flooded())
            .map(|c| {
                let cap = self.grid.flooded_substation(c).max_height;
                let mut v: Vec<u32> = std::iter::once(0)
                    .chain(self.scenarios.rows().iter().map(|r| r[c]).filter(|&d| d <= cap))
                    .collect();
                v.sort_unstable();
                v.dedup();
                v
            })
            .collect()
    }

    /// Exact budget-constrained optimum by depth-first branch-and-bound.
    /// Ties go to the lexicographically smallest height vector.
    pub fn solve_first_stage(&self, budget: f64) -> Result<FirstStageSolution> {
        if !(budget.is_finite() && budget >= 0.0) {
            return Err(Error::Validation(format!("budget {budget} must be finite and non-negative")));
        }
        let n = self.grid.n_flooded();
        let levels = self.levels();
        let top: Vec<u32> = levels.iter().map(|l| *l.last().expect("zero is a level")).collect();
        let mut order: Vec<usize> = (0..n).collect();
        let max_flood: Vec<u32> = (0..n).map(|c| self.scenarios.column_max(c)).collect();
        order.sort_by(|&a, &b| max_flood[b].cmp(&max_flood[a]).then(a.cmp(&b)));

        let zero = vec![0; n];
        let mut search = Search {
            problem: self,
            budget,
            levels,
            top,
            order,
            nodes: 0,
            node_limit: self.node_limit,
            best_value: self.linear_cost(&zero) + self.expected_shed(&zero)?,
            best: zero.clone(),
        };
        let mut x = zero;
        search.visit(0, &mut x, 0.0)?;
        let plan = HardeningPlan::from_heights(search.best);
        Ok(FirstStageSolution {
            cost: self.grid.plan_cost(&plan),
            plan,
            value: search.best_value,
            nodes: search.nodes,
        })
    }

    /// Repeatedly applies the single-substation raise with the best shed
    /// reduction per unit cost until nothing affordable helps.
    pub fn greedy_first_stage(&self, budget: f64) -> Result<HardeningPlan> {
        if !(budget.is_finite() && budget >= 0.0) {
            return Err(Error::Validation(format!("budget {budget} must be finite and non-negative")));
        }
        let n = self.grid.n_flooded();
        let levels = self.levels();
        let mut x = vec![0u32; n];
        let mut spent = 0.0;
        let mut current = self.saa_objective(&HardeningPlan::from_heights(x.clone()))?;
        loop {
            let mut best: Option<(f64, usize, u32, f64, f64)> = None;
            for c in 0..n {
                for &l in levels[c].iter().filter(|&&l| l > x[c]) {
                    let extra = self.grid.height_cost(c, l) - self.grid.height_cost(c, x[c]);
                    if spent + extra > budget + 1e-9 {
                        break;
                    }
                    let mut trial = x.clone();
                    trial[c] = l;
                    let value = self.saa_objective(&HardeningPlan::from_heights(trial))?;
                    let gain = current - value;
                    if gain <= 0.0 {
                        continue;
                    }
                    let ratio = if extra > 0.0 { gain / extra } else { f64::INFINITY };
                    if best.is_none_or(|b| ratio > b.0) {
                        best = Some((ratio, c, l, extra, value));
                    }
                }
            }
            match best {
                Some((_, c, l, extra, value)) => {
                    x[c] = l;
                    spent += extra;
                    current = value;
                }
                None => return Ok(HardeningPlan::from_heights(x)),
            }
        }
    }

    /// Out-of-sample statistics of `plan` over `synthetic` scenarios.
    pub fn evaluate_oos(&self, plan: &HardeningPlan, synthetic: &ScenarioSet) -> Result<OosReport> {
        self.grid.check_plan(plan, f64::INFINITY)?;
        let synthetic = self.grid.align_scenarios(synthetic)?;
        let sheds = self.sheds(&plan.height, synthetic.rows())?;
        let summary = Summary::of(&sheds)?;
        let first_stage = self.linear_cost(&plan.height);
        let mean_shed = sheds.iter().sum::<f64>() / sheds.len() as f64;
        Ok(OosReport {
            budget: None,
            so_estimate: None,
            plan: plan.clone(),
            plan_cost: self.grid.plan_cost(plan),
            first_stage_cost: first_stage,
            mean_shed,
            v_oos: first_stage + mean_shed,
            m: sheds.len(),
            summary,
        })
    }

    /// Exact solve then out-of-sample evaluation for each budget, ascending.
    pub fn budget_sweep(&self, budgets: &[f64], synthetic: &ScenarioSet) -> Result<Vec<OosReport>> {
        if budgets.is_empty() {
            return Err(Error::Validation("budget list is empty".into()));
        }
        let mut sorted = budgets.to_vec();
        sorted.sort_by(f64::total_cmp);
        sorted
            .iter()
            .map(|&b| {
                let sol = self.solve_first_stage(b)?;
                let mut report = self.evaluate_oos(&sol.plan, synthetic)?;
                report.budget = Some(b);
                report.so_estimate = Some(sol.value);
                Ok(report)
            })
            .collect()
    }
}

struct Search<'a> {
    problem: &'a TwoStageProblem,
    budget: f64,
    levels: Vec<Vec<u32>>,
    top: Vec<u32>,
    order: Vec<usize>,
    nodes: usize,
    node_limit: usize,
    best: Vec<u32>,
    best_value: f64,
}

impl Search<'_> {
    fn visit(&mut self, depth: usize, x: &mut Vec<u32>, spent: f64) -> Result<()> {
        self.nodes += 1;
        if self.nodes > self.node_limit {
            return Err(Error::Resource(format!(
                "branch-and-bound exceeded {} nodes; use the greedy heuristic for this instance",
                self.node_limit
            )));
        }
        let undecided = &self.order[depth..];
        let mut optimistic = x.clone();
        for &c in undecided {
            optimistic[c] = self.top[c];
        }
        // Undecided columns contribute nothing to the linear cost bound.
        let bound = self.problem.linear_cost(x) + self.problem.expected_shed(&optimistic)?;

        if depth == self.order.len() {
            if bound < self.best_value || (bound == self.best_value && *x < self.best) {
                self.best_value = bound;
                self.best = x.clone();
            }
            return Ok(());
        }
        // Every leaf below has heights >= x (undecided at zero), so it cannot
        // be lexicographically smaller than x.
        if bound > self.best_value || (bound == self.best_value && *x >= self.best) {
            return Ok(());
        }
        let c = self.order[depth];
        for k in 0..self.levels[c].len() {
            let l = self.levels[c][k];
            let cost = spent + self.problem.grid.height_cost(c, l);
            if cost > self.budget + 1e-9 {
                break;
            }
            x[c] = l;
            self.visit(depth + 1, x, cost)?;
        }
        x[c] = 0;
        Ok(())
    }
}

/// Out-of-sample results for one plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OosReport {
    pub budget: Option<f64>,
    /// SAA optimum on the training scenarios.
    pub so_estimate: Option<f64>,
    pub plan: HardeningPlan,
    pub plan_cost: f64,
    /// `c x`, reported apart from the shed.
    pub first_stage_cost: f64,
    pub mean_shed: f64,
    pub v_oos: f64,
    pub m: usize,
    pub summary: Summary,
}

/// Statistic rows (first column) by report columns, like a budget table.
pub fn report_table(reports: &[OosReport]) -> Vec<Vec<String>> {
    let fmt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x}"));
    let mut header = vec!["statistic".to_string()];
    header.extend(
        reports
            .iter()
            .enumerate()
            .map(|(i, r)| r.budget.map_or_else(|| format!("plan {i}"), |b| format!("{b}"))),
    );
    let mut rows = vec![header];
    let mut so = vec!["SO estimate".to_string()];
    so.extend(reports.iter().map(|r| fmt(r.so_estimate)));
    rows.push(so);
    for (k, name) in Summary::ROW_NAMES.iter().enumerate() {
        let mut row = vec![name.to_string()];
        row.extend(reports.iter().map(|r| fmt(Some(r.summary.rows()[k]))));
        rows.push(row);
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Branch, Bus, GridFile, Substation};

    /// Generator bus 1 (inland) feeding load bus 2 (flooded substation).
    fn two_bus(capacity: f64, susceptance: f64) -> GridInstance {
        GridInstance::new(GridFile {
            substations: vec![
                Substation { id: 1, flooded_flag: false, fixed_cost: 1.0, var_cost: 1.0, max_height: 0 },
                Substation { id: 2, flooded_flag: true, fixed_cost: 1.0, var_cost: 1.0, max_height: 3 },
            ],
            buses: vec![
                Bus { id: 1, substation_id: 1, demand: 0.0, gen_min: 0.0, gen_max: 10.0 },
                Bus { id: 2, substation_id: 2, demand: 5.0, gen_min: 0.0, gen_max: 0.0 },
            ],
            branches: vec![Branch { id: 1, head: 1, tail: 2, susceptance, capacity }],
            budget: 10.0,
            reference_bus: 1,
        })
        .unwrap()
    }

    #[test]
    fn two_bus_examples() {
        let g = two_bus(10.0, 10.0);
        let none = HardeningPlan::unprotected(1);
        let ok = recourse(&g, &none, &[0]).unwrap();
        assert_eq!(ok.shed, 0.0);
        assert!((ok.e[0] - 5.0).abs() < 1e-9);
        assert!(ok.balance_residual(&g) <= 1e-7);
        assert_eq!(recourse(&g, &none, &[2]).unwrap().shed, 5.0);
        let protected = HardeningPlan::from_heights(vec![2]);
        assert_eq!(recourse(&g, &protected, &[2]).unwrap().shed, 0.0);
        let narrow = recourse(&two_bus(3.0, 10.0), &none, &[0]).unwrap();
        assert!((narrow.shed - 2.0).abs() < 1e-9);
    }

    #[test]
    fn angle_limit_caps_flow() {
        // With unit susceptance, |alpha| <= pi limits the flow to pi.
        let sol = recourse(&two_bus(10.0, 1.0), &HardeningPlan::unprotected(1), &[0]).unwrap();
        assert!((sol.shed - (5.0 - PI)).abs() < 1e-8, "{}", sol.shed);
        assert!(sol.alpha.iter().all(|a| a.abs() <= PI + 1e-9));
    }

    #[test]
    fn saa_averages_sheds() {
        let g = two_bus(10.0, 10.0);
        let s = ScenarioSet::new(vec!["2".into()], vec![vec![1], vec![0]]).unwrap();
        let p = TwoStageProblem::new(g, &s).unwrap();
        assert!((p.saa_objective(&HardeningPlan::unprotected(1)).unwrap() - 2.5).abs() < 1e-12);
        let same = ScenarioSet::new(vec!["2".into()], vec![vec![2], vec![2]]).unwrap();
        let p = TwoStageProblem::new(two_bus(10.0, 10.0), &same).unwrap();
        assert_eq!(p.saa_objective(&HardeningPlan::unprotected(1)).unwrap(), 5.0);
    }

    #[test]
    fn first_stage_on_two_bus() {
        let s = ScenarioSet::new(vec!["2".into()], vec![vec![1], vec![3], vec![0], vec![2]]).unwrap();
        let p = TwoStageProblem::new(two_bus(10.0, 10.0), &s).unwrap();
        let zero = p.solve_first_stage(0.0).unwrap();
        assert_eq!(zero.plan.height, vec![0]);
        assert!((zero.value - 3.75).abs() < 1e-12);
        // Height 2 costs 3 and leaves only the level-3 scenario.
        let mid = p.solve_first_stage(3.5).unwrap();
        assert_eq!(mid.plan.height, vec![2]);
        assert!((mid.value - 1.25).abs() < 1e-12);
        let full = p.solve_first_stage(100.0).unwrap();
        assert_eq!(full.plan.height, vec![3]);
        assert_eq!(full.value, 0.0);
        assert_eq!(p.greedy_first_stage(3.5).unwrap().height, vec![2]);
        assert_eq!(p.greedy_first_stage(0.0).unwrap().height, vec![0]);
        let capped = p.clone().with_node_limit(2);
        assert!(matches!(capped.solve_first_stage(100.0), Err(Error::Resource(_))));
    }

    #[test]
    fn oos_single_scenario() {
        let s = ScenarioSet::new(vec!["2".into()], vec![vec![1], vec![0]]).unwrap();
        let p = TwoStageProblem::new(two_bus(10.0, 10.0), &s).unwrap();
        let one = ScenarioSet::new(vec!["2".into()], vec![vec![1]]).unwrap();
        let r = p.evaluate_oos(&HardeningPlan::unprotected(1), &one).unwrap();
        assert_eq!(r.summary.std, 0.0);
        assert_eq!(r.summary.q25, 5.0);
        assert_eq!(r.summary.max, 5.0);
        assert_eq!(r.v_oos, 5.0);
    }

    #[test]
    fn table_layout() {
        let s = ScenarioSet::new(vec!["2".into()], vec![vec![1], vec![0]]).unwrap();
        let p = TwoStageProblem::new(two_bus(10.0, 10.0), &s).unwrap();
        let reports = p.budget_sweep(&[10.0, 0.0], &s).unwrap();
        assert_eq!(reports[0].budget, Some(0.0));
        let t = report_table(&reports);
        assert_eq!(t.len(), 9);
        assert_eq!(t[0], vec!["statistic", "0", "10"]);
        assert_eq!(t[1][0], "SO estimate");
        assert_eq!(t[8][0], "max");
    }
}
