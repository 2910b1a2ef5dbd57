//! Brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use nortasp::grid::{GridInstance, HardeningPlan};
use nortasp::lp::{LpProblem, Sense};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct TestRng(ChaCha8Rng);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Integer in `lo..=hi`.
    pub fn int(&mut self, lo: i64, hi: i64) -> i64 {
        lo + (self.0.next_u64() % (hi - lo + 1) as u64) as i64
    }

    pub fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Random boxed LP with integer data.
pub fn random_lp(rng: &mut TestRng, n: usize, rows: usize) -> LpProblem {
    let mut p = LpProblem::new();
    for _ in 0..n {
        let lo = rng.int(-3, 0) as f64;
        let hi = rng.int(1, 5) as f64;
        p.add_variable(rng.int(-5, 5) as f64, lo, hi);
    }
    for _ in 0..rows {
        let coeffs = (0..n)
            .filter_map(|j| {
                let a = rng.int(-4, 4);
                (a != 0).then_some((j, a as f64))
            })
            .collect();
        let sense = match rng.int(0, 4) {
            0 => Sense::Eq,
            1 | 2 => Sense::Le,
            _ => Sense::Ge,
        };
        p.add_constraint(coeffs, sense, rng.int(-8, 8) as f64);
    }
    p
}

fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-10 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                if f != 0.0 {
                    let pivot_row = a[c].clone();
                    for (v, pv) in a[r].iter_mut().zip(&pivot_row).skip(c) {
                        *v -= f * pv;
                    }
                    b[r] -= f * b[c];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Minimum objective over all basic feasible solutions of a boxed LP, or
/// `None` when no vertex is feasible. Also returns every feasible vertex.
pub fn vertex_enumeration(p: &LpProblem) -> (Option<f64>, Vec<Vec<f64>>) {
    let n = p.n_vars();
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for c in &p.constraints {
        let mut row = vec![0.0; n];
        for &(j, a) in &c.coefficients {
            row[j] += a;
        }
        planes.push((row, c.rhs));
    }
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        planes.push((e.clone(), p.lower[j]));
        planes.push((e, p.upper[j]));
    }
    let mut best: Option<f64> = None;
    let mut vertices = Vec::new();
    let mut pick = Vec::with_capacity(n);
    fn recurse(
        start: usize,
        pick: &mut Vec<usize>,
        n: usize,
        planes: &[(Vec<f64>, f64)],
        p: &LpProblem,
        best: &mut Option<f64>,
        vertices: &mut Vec<Vec<f64>>,
    ) {
        if pick.len() == n {
            let a = pick.iter().map(|&k| planes[k].0.clone()).collect();
            let b = pick.iter().map(|&k| planes[k].1).collect();
            if let Some(x) = solve_dense(a, b) {
                if p.max_infeasibility(&x) <= 1e-7 {
                    let v = p.objective_value(&x);
                    *best = Some(best.map_or(v, |b: f64| b.min(v)));
                    vertices.push(x);
                }
            }
            return;
        }
        for k in start..planes.len() {
            pick.push(k);
            recurse(k + 1, pick, n, planes, p, best, vertices);
            pick.pop();
        }
    }
    recurse(0, &mut pick, n, &planes, p, &mut best, &mut vertices);
    (best, vertices)
}

/// Whether binary `z` satisfies the big-M pair for one bus of a flooded
/// substation: `M (1 - z) >= delta - x` and `2 M z >= 1 - 2 (delta - x)`.
pub fn big_m_feasible(z: u8, delta: i64, x: i64, big_m: i64) -> bool {
    let z = z as i64;
    big_m * (1 - z) >= delta - x && 2 * big_m * z >= 1 - 2 * (delta - x)
}

/// Every integer plan within the per-substation height limits and budget.
pub fn all_plans(grid: &GridInstance, budget: f64) -> Vec<HardeningPlan> {
    let n = grid.n_flooded();
    let limits: Vec<u32> = (0..n).map(|c| grid.flooded_substation(c).max_height).collect();
    let mut out = Vec::new();
    let mut x = vec![0u32; n];
    loop {
        let plan = HardeningPlan::from_heights(x.clone());
        if grid.plan_cost(&plan) <= budget + 1e-9 {
            out.push(plan);
        }
        let mut c = 0;
        loop {
            if c == n {
                return out;
            }
            if x[c] < limits[c] {
                x[c] += 1;
                break;
            }
            x[c] = 0;
            c += 1;
        }
    }
}

/// Random connected meshed grid where flooded substations may carry load,
/// generation and transit, with scenario heights that can exceed `H`.
pub fn random_instance(
    rng: &mut TestRng,
    n_sub: usize,
    n_flooded: usize,
    max_h: u32,
    k: usize,
) -> (GridInstance, nortasp::ScenarioSet) {
    use nortasp::grid::{Branch, Bus, GridFile, Substation};
    let substations: Vec<Substation> = (0..n_sub)
        .map(|i| Substation {
            id: 10 + i as u32,
            flooded_flag: i >= n_sub - n_flooded,
            fixed_cost: rng.int(0, 3) as f64,
            var_cost: rng.int(1, 3) as f64,
            max_height: rng.int(1, max_h as i64) as u32,
        })
        .collect();
    let mut buses = Vec::new();
    for (i, s) in substations.iter().enumerate() {
        for b in 0..rng.int(1, 2) {
            buses.push(Bus {
                id: 100 + 10 * i as u32 + b as u32,
                substation_id: s.id,
                demand: rng.int(0, 6) as f64,
                gen_min: 0.0,
                gen_max: if rng.int(0, 2) == 0 { rng.int(3, 12) as f64 } else { 0.0 },
            });
        }
    }
    let nb = buses.len();
    let mut ends = Vec::new();
    for j in 1..nb {
        ends.push((rng.int(0, j as i64 - 1) as usize, j));
    }
    for _ in 0..rng.int(0, 3) {
        let a = rng.int(0, nb as i64 - 1) as usize;
        let b = rng.int(0, nb as i64 - 1) as usize;
        if a != b {
            ends.push((a, b));
        }
    }
    let branches = ends
        .iter()
        .enumerate()
        .map(|(r, &(a, b))| Branch {
            id: r as u32 + 1,
            head: buses[a].id,
            tail: buses[b].id,
            susceptance: rng.int(2, 20) as f64,
            capacity: rng.int(2, 12) as f64,
        })
        .collect();
    let reference_bus = buses[rng.int(0, nb as i64 - 1) as usize].id;
    let grid = GridInstance::new(GridFile {
        substations,
        buses,
        branches,
        budget: 0.0,
        reference_bus,
    })
    .unwrap();
    let rows = (0..k)
        .map(|_| (0..n_flooded).map(|_| rng.int(0, max_h as i64 + 1) as u32).collect())
        .collect();
    let scenarios = nortasp::ScenarioSet::new(grid.flooded_labels(), rows).unwrap();
    (grid, scenarios)
}
