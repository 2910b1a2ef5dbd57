//! Deterministic synthetic coastal grids with storm-driven flood scenarios.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Branch, Bus, GridFile, GridInstance, Substation};
use crate::error::{Error, Result};
use crate::norta::open_unit;
use crate::scenario::ScenarioSet;
use crate::stats::normal_quantile_unchecked;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Ring,
    Tree,
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub n_substations: usize,
    pub n_flooded: usize,
    pub buses_per_substation: usize,
    pub topology: Topology,
    /// Number of flood scenarios `K`.
    #[serde(alias = "K", alias = "k")]
    pub scenarios: usize,
    pub max_height: u32,
    pub budget: f64,
    #[serde(default)]
    pub seed: u64,
}

impl InstanceSpec {
    fn check(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Validation(format!("instance spec: {m}")));
        if self.n_substations == 0 {
            return fail("n_substations must be positive");
        }
        if self.buses_per_substation == 0 {
            return fail("buses_per_substation must be positive");
        }
        if self.scenarios == 0 {
            return fail("scenario count must be positive");
        }
        if self.n_flooded > self.n_substations {
            return fail(&format!(
                "n_flooded = {} exceeds n_substations = {}",
                self.n_flooded, self.n_substations
            ));
        }
        if !(self.budget.is_finite() && self.budget >= 0.0) {
            return fail("budget must be finite and non-negative");
        }
        Ok(())
    }
}

struct Rng(ChaCha8Rng);

impl Rng {
    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * open_unit(&mut self.0)
    }

    fn normal(&mut self) -> f64 {
        normal_quantile_unchecked(open_unit(&mut self.0))
    }

    fn below(&mut self, n: usize) -> usize {
        (self.0.next_u64() % n as u64) as usize
    }
}

fn round_to(v: f64, step: f64) -> f64 {
    (v / step).round() * step
}

/// Builds a grid and `K` flood scenarios from `spec`.
///
/// Substations sit in the unit square with the coastline at `w = 0`; the
/// `n_flooded` closest to the coast are flagged flooded. Inland substations
/// form the backbone in the requested topology and carry all generation;
/// each coastal substation hangs off its nearest backbone substation. When
/// every substation is flooded the backbone is the whole set. Each scenario
/// is a storm with a random landfall point along the coast, so nearby
/// substations see correlated heights. Heights never exceed `max_height`.
pub fn generate_instance(spec: &InstanceSpec) -> Result<(GridInstance, ScenarioSet)> {
    spec.check()?;
    let mut rng = Rng(ChaCha8Rng::seed_from_u64(spec.seed));
    let n = spec.n_substations;
    let per = spec.buses_per_substation;

    let coords: Vec<(f64, f64)> = (0..n).map(|_| (rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0))).collect();
    let mut by_coast: Vec<usize> = (0..n).collect();
    by_coast.sort_by(|&a, &b| coords[a].1.total_cmp(&coords[b].1).then(a.cmp(&b)));
    let mut flooded = vec![false; n];
    for &i in &by_coast[..spec.n_flooded] {
        flooded[i] = true;
    }
    let mut backbone: Vec<usize> = (0..n).filter(|&i| !flooded[i]).collect();
    if backbone.is_empty() {
        backbone = (0..n).collect();
    }
    backbone.sort_by(|&a, &b| coords[a].0.total_cmp(&coords[b].0).then(a.cmp(&b)));

    let substations: Vec<Substation> = (0..n)
        .map(|i| Substation {
            id: i as u32 + 1,
            flooded_flag: flooded[i],
            fixed_cost: round_to(rng.uniform(1.0, 3.0), 0.1),
            var_cost: round_to(rng.uniform(0.5, 1.5), 0.1),
            max_height: if flooded[i] { spec.max_height } else { 0 },
        })
        .collect();

    let bus_id = |sub: usize, k: usize| (sub * per + k) as u32 + 1;
    let mut buses = Vec::with_capacity(n * per);
    for i in 0..n {
        for k in 0..per {
            buses.push(Bus {
                id: bus_id(i, k),
                substation_id: i as u32 + 1,
                demand: round_to(rng.uniform(1.0, 5.0), 0.1),
                gen_min: 0.0,
                gen_max: 0.0,
            });
        }
    }
    let total_demand: f64 = buses.iter().map(|b| b.demand).sum();
    let weights: Vec<f64> = backbone.iter().map(|_| rng.uniform(0.5, 1.5)).collect();
    let weight_sum: f64 = weights.iter().sum();
    for (&sub, w) in backbone.iter().zip(&weights) {
        buses[sub * per].gen_max = round_to(1.5 * total_demand * w / weight_sum, 0.01) + 0.01;
    }

    let mut links: Vec<(usize, usize)> = Vec::new();
    match spec.topology {
        Topology::Ring => {
            for w in backbone.windows(2) {
                links.push((w[0], w[1]));
            }
            if backbone.len() > 2 {
                links.push((backbone[backbone.len() - 1], backbone[0]));
            }
        }
        Topology::Tree => {
            for p in 1..backbone.len() {
                let parent = backbone[rng.below(p)];
                links.push((parent, backbone[p]));
            }
        }
        Topology::Grid => {
            let cols = (backbone.len() as f64).sqrt().ceil() as usize;
            for p in 0..backbone.len() {
                if (p + 1) % cols != 0 && p + 1 < backbone.len() {
                    links.push((backbone[p], backbone[p + 1]));
                }
                if p + cols < backbone.len() {
                    links.push((backbone[p], backbone[p + cols]));
                }
            }
        }
    }
    if backbone.len() < n {
        for i in (0..n).filter(|&i| flooded[i]) {
            let dist = |j: usize| {
                let (dx, dy) = (coords[i].0 - coords[j].0, coords[i].1 - coords[j].1);
                dx * dx + dy * dy
            };
            let nearest = *backbone
                .iter()
                .min_by(|&&a, &&b| dist(a).total_cmp(&dist(b)).then(a.cmp(&b)))
                .expect("backbone is non-empty");
            links.push((nearest, i));
        }
    }

    // Capacity equal to total demand never binds: DC flows are bounded by
    // total injection. Susceptances keep every angle well inside [-pi, pi].
    let n_buses = buses.len() as f64;
    let mut branches = Vec::new();
    let mut add_branch = |head: u32, tail: u32, rng: &mut Rng| {
        branches.push(Branch {
            id: branches.len() as u32 + 1,
            head,
            tail,
            susceptance: round_to(rng.uniform(1.0, 2.0) * n_buses * total_demand / 2.0, 0.01),
            capacity: round_to(total_demand, 0.01) + 0.01,
        });
    };
    for i in 0..n {
        for k in 1..per {
            add_branch(bus_id(i, k - 1), bus_id(i, k), &mut rng);
        }
    }
    for &(a, b) in &links {
        add_branch(bus_id(a, 0), bus_id(b, 0), &mut rng);
    }

    let grid = GridInstance::new(GridFile {
        substations,
        buses,
        branches,
        budget: spec.budget,
        reference_bus: bus_id(backbone[0], 0),
    })?;

    let columns: Vec<usize> = (0..n).filter(|&i| flooded[i]).collect();
    let peak = 0.9 * f64::from(spec.max_height);
    let mut rows = Vec::with_capacity(spec.scenarios);
    for _ in 0..spec.scenarios {
        let landfall = rng.uniform(0.0, 1.0);
        let width = rng.uniform(0.15, 0.3);
        let intensity = peak * (0.4 * rng.normal()).exp();
        let row = columns
            .iter()
            .map(|&i| {
                let (u, w) = coords[i];
                let reach = (-(u - landfall).powi(2) / (2.0 * width * width)).exp();
                let surge = intensity * reach * (-2.0 * w).exp() + 0.5 * rng.normal();
                surge.round().clamp(0.0, f64::from(spec.max_height)) as u32
            })
            .collect();
        rows.push(row);
    }
    let scenarios = ScenarioSet::new(grid.flooded_labels(), rows)?;
    Ok((grid, scenarios))
}
