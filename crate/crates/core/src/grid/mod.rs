//! Transmission network model, flood-driven operational topology and a
//! synthetic instance generator.

mod generate;

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use generate::{generate_instance, InstanceSpec, Topology};

use crate::error::{Error, Result};
use crate::scenario::ScenarioSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Substation {
    pub id: u32,
    pub flooded_flag: bool,
    pub fixed_cost: f64,
    pub var_cost: f64,
    pub max_height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: u32,
    pub substation_id: u32,
    pub demand: f64,
    pub gen_min: f64,
    pub gen_max: f64,
}

/// Power flows from `head` to `tail` when positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: u32,
    pub head: u32,
    pub tail: u32,
    pub susceptance: f64,
    pub capacity: f64,
}

/// On-disk layout of a grid file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    pub substations: Vec<Substation>,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub budget: f64,
    pub reference_bus: u32,
}

/// A validated grid with derived indices. Substations, buses and branches
/// are addressed by position; ids only appear at the file boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridFile", into = "GridFile")]
pub struct GridInstance {
    file: GridFile,
    /// Positions of flooded substations, in file order. This is the column
    /// order of every scenario matrix used with this grid.
    flooded: Vec<usize>,
    /// Flooded column of each bus's substation, if any.
    bus_column: Vec<Option<usize>>,
    branch_ends: Vec<(usize, usize)>,
    /// Branches leaving / entering each bus.
    out_branches: Vec<Vec<usize>>,
    in_branches: Vec<Vec<usize>>,
    reference: usize,
}

impl TryFrom<GridFile> for GridInstance {
    type Error = Error;

    fn try_from(file: GridFile) -> Result<Self> {
        GridInstance::new(file)
    }
}

impl From<GridInstance> for GridFile {
    fn from(g: GridInstance) -> Self {
        g.file
    }
}

fn finite_non_negative(v: f64) -> bool {
    v.is_finite() && v >= 0.0
}

impl GridInstance {
    pub fn new(file: GridFile) -> Result<Self> {
        let invalid = |msg: String| Err(Error::Validation(msg));

        let mut sub_pos = HashMap::new();
        for (p, s) in file.substations.iter().enumerate() {
            if sub_pos.insert(s.id, p).is_some() {
                return invalid(format!("duplicate substation id {}", s.id));
            }
            if !finite_non_negative(s.fixed_cost) || !finite_non_negative(s.var_cost) {
                return invalid(format!("substation {}: costs must be finite and non-negative", s.id));
            }
        }
        let mut bus_pos = HashMap::new();
        for (p, b) in file.buses.iter().enumerate() {
            if bus_pos.insert(b.id, p).is_some() {
                return invalid(format!("duplicate bus id {}", b.id));
            }
            if !sub_pos.contains_key(&b.substation_id) {
                return invalid(format!("bus {}: unknown substation {}", b.id, b.substation_id));
            }
            if !finite_non_negative(b.demand) {
                return invalid(format!("bus {}: demand must be finite and non-negative", b.id));
            }
            if !finite_non_negative(b.gen_max) || !finite_non_negative(b.gen_min) || b.gen_min > b.gen_max {
                return invalid(format!("bus {}: need 0 <= gen_min <= gen_max", b.id));
            }
            if b.gen_min != 0.0 {
                return invalid(format!(
                    "bus {}: gen_min = {} but only gen_min = 0 is supported (recourse must stay a linear program)",
                    b.id, b.gen_min
                ));
            }
        }
        let mut branch_ids = HashMap::new();
        let mut branch_ends = Vec::with_capacity(file.branches.len());
        for r in &file.branches {
            if branch_ids.insert(r.id, ()).is_some() {
                return invalid(format!("duplicate branch id {}", r.id));
            }
            let (Some(&h), Some(&t)) = (bus_pos.get(&r.head), bus_pos.get(&r.tail)) else {
                return invalid(format!("branch {}: unknown end bus", r.id));
            };
            if h == t {
                return invalid(format!("branch {}: head and tail are the same bus", r.id));
            }
            if !(r.capacity.is_finite() && r.capacity > 0.0) {
                return invalid(format!("branch {}: capacity must be positive", r.id));
            }
            if !(r.susceptance.is_finite() && r.susceptance > 0.0) {
                return invalid(format!("branch {}: susceptance must be positive", r.id));
            }
            branch_ends.push((h, t));
        }
        let Some(&reference) = bus_pos.get(&file.reference_bus) else {
            return invalid(format!("reference bus {} does not exist", file.reference_bus));
        };
        if !finite_non_negative(file.budget) {
            return invalid("budget must be finite and non-negative".into());
        }

        let flooded: Vec<usize> = file
            .substations
            .iter()
            .enumerate()
            .filter(|(_, s)| s.flooded_flag)
            .map(|(p, _)| p)
            .collect();
        let column_of_sub: HashMap<usize, usize> =
            flooded.iter().enumerate().map(|(c, &p)| (p, c)).collect();
        let bus_column = file
            .buses
            .iter()
            .map(|b| column_of_sub.get(&sub_pos[&b.substation_id]).copied())
            .collect();
        let mut out_branches = vec![Vec::new(); file.buses.len()];
        let mut in_branches = vec![Vec::new(); file.buses.len()];
        for (r, &(h, t)) in branch_ends.iter().enumerate() {
            out_branches[h].push(r);
            in_branches[t].push(r);
        }
        Ok(Self {
            file,
            flooded,
            bus_column,
            branch_ends,
            out_branches,
            in_branches,
            reference,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: GridFile = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::new(file).map_err(|e| match e {
            Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn file(&self) -> &GridFile {
        &self.file
    }

    pub fn substations(&self) -> &[Substation] {
        &self.file.substations
    }

    pub fn buses(&self) -> &[Bus] {
        &self.file.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.file.branches
    }

    pub fn budget(&self) -> f64 {
        self.file.budget
    }

    pub fn reference_bus(&self) -> usize {
        self.reference
    }

    pub fn n_flooded(&self) -> usize {
        self.flooded.len()
    }

    /// Flooded substation at scenario column `c`.
    pub fn flooded_substation(&self, c: usize) -> &Substation {
        &self.file.substations[self.flooded[c]]
    }

    /// Ids of flooded substations in scenario column order.
    pub fn flooded_labels(&self) -> Vec<String> {
        self.flooded
            .iter()
            .map(|&p| self.file.substations[p].id.to_string())
            .collect()
    }

    pub fn bus_column(&self, bus: usize) -> Option<usize> {
        self.bus_column[bus]
    }

    pub fn branch_ends(&self, r: usize) -> (usize, usize) {
        self.branch_ends[r]
    }

    pub fn out_branches(&self, bus: usize) -> &[usize] {
        &self.out_branches[bus]
    }

    pub fn in_branches(&self, bus: usize) -> &[usize] {
        &self.in_branches[bus]
    }

    pub fn total_demand(&self) -> f64 {
        self.file.buses.iter().map(|b| b.demand).sum()
    }

    /// Reorders scenario columns into this grid's flooded-substation order,
    /// matching columns by label.
    pub fn align_scenarios(&self, s: &ScenarioSet) -> Result<ScenarioSet> {
        let labels = self.flooded_labels();
        if s.dim() != labels.len() {
            return Err(Error::Validation(format!(
                "scenario file has {} columns but the grid has {} flooded substations",
                s.dim(),
                labels.len()
            )));
        }
        if s.labels() == labels.as_slice() {
            return Ok(s.clone());
        }
        let position: HashMap<&str, usize> = s
            .labels()
            .iter()
            .enumerate()
            .map(|(c, l)| (l.as_str(), c))
            .collect();
        let mut order = Vec::with_capacity(labels.len());
        for l in &labels {
            match position.get(l.as_str()) {
                Some(&c) => order.push(c),
                None => {
                    return Err(Error::Validation(format!(
                        "flooded substation {l} has no scenario column"
                    )))
                }
            }
        }
        let rows = s
            .rows()
            .iter()
            .map(|r| order.iter().map(|&c| r[c]).collect())
            .collect();
        ScenarioSet::with_probs(labels, rows, s.probs().to_vec())
    }

    /// Bus-level operational status `z` for hardening heights `x` (one per
    /// flooded column) under flood heights `delta`: a bus in a flooded
    /// substation works iff `x >= delta`; every other bus works.
    pub fn operational_topology(&self, heights: &[u32], scenario: &[u32]) -> Result<Vec<bool>> {
        let n = self.n_flooded();
        if heights.len() != n || scenario.len() != n {
            return Err(Error::Contract(format!(
                "expected {n} heights and {n} flood levels, got {} and {}",
                heights.len(),
                scenario.len()
            )));
        }
        Ok(self
            .bus_column
            .iter()
            .map(|col| col.is_none_or(|c| heights[c] >= scenario[c]))
            .collect())
    }

    /// Dead flooded columns, the part of the topology the recourse depends on.
    pub fn dead_columns(&self, heights: &[u32], scenario: &[u32]) -> Vec<bool> {
        heights.iter().zip(scenario).map(|(x, d)| x < d).collect()
    }

    /// Bus status from dead flooded columns.
    pub fn bus_status(&self, dead: &[bool]) -> Vec<bool> {
        self.bus_column
            .iter()
            .map(|col| col.is_none_or(|c| !dead[c]))
            .collect()
    }

    /// Connected components (bus positions, ascending) of the subgraph of
    /// operational buses joined by branches whose ends both operate.
    /// Components are ordered by their smallest bus position.
    pub fn connected_components(&self, z: &[bool]) -> Vec<Vec<usize>> {
        let n = self.file.buses.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut a: usize) -> usize {
            while parent[a] != a {
                parent[a] = parent[parent[a]];
                a = parent[a];
            }
            a
        }
        for &(h, t) in &self.branch_ends {
            if z[h] && z[t] {
                let (rh, rt) = (find(&mut parent, h), find(&mut parent, t));
                if rh != rt {
                    parent[rh.max(rt)] = rh.min(rt);
                }
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut slot: HashMap<usize, usize> = HashMap::new();
        for b in (0..n).filter(|&b| z[b]) {
            let root = find(&mut parent, b);
            let g = *slot.entry(root).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[g].push(b);
        }
        groups
    }

    /// Hardening cost `sum f_i y_i + v_i x_i`.
    pub fn plan_cost(&self, plan: &HardeningPlan) -> f64 {
        plan.height
            .iter()
            .zip(&plan.protect)
            .enumerate()
            .map(|(c, (&x, &y))| {
                let s = self.flooded_substation(c);
                if y {
                    s.fixed_cost + s.var_cost * f64::from(x)
                } else {
                    0.0
                }
            })
            .sum()
    }

    /// Cost of raising column `c` to height `x` from nothing.
    pub fn height_cost(&self, c: usize, x: u32) -> f64 {
        if x == 0 {
            0.0
        } else {
            let s = self.flooded_substation(c);
            s.fixed_cost + s.var_cost * f64::from(x)
        }
    }

    /// Checks the first-stage constraints for a plan under `budget`.
    pub fn check_plan(&self, plan: &HardeningPlan, budget: f64) -> Result<()> {
        let n = self.n_flooded();
        if plan.height.len() != n || plan.protect.len() != n {
            return Err(Error::Validation(format!(
                "plan covers {} substations, grid has {n} flooded",
                plan.height.len()
            )));
        }
        for c in 0..n {
            let s = self.flooded_substation(c);
            let (x, y) = (plan.height[c], plan.protect[c]);
            if x > s.max_height * u32::from(y) {
                return Err(Error::Validation(format!(
                    "substation {}: height {x} exceeds H * y = {}",
                    s.id,
                    s.max_height * u32::from(y)
                )));
            }
            if y && x == 0 {
                return Err(Error::Validation(format!(
                    "substation {}: protected with a zero-height barrier",
                    s.id
                )));
            }
        }
        let cost = self.plan_cost(plan);
        if cost > budget + 1e-9 {
            return Err(Error::Validation(format!(
                "plan costs {cost} which exceeds the budget {budget}"
            )));
        }
        Ok(())
    }
}

/// First-stage decision over flooded substations (scenario column order).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HardeningPlan {
    pub protect: Vec<bool>,
    pub height: Vec<u32>,
}

impl HardeningPlan {
    /// Plan with `y_i = 1` exactly where `x_i >= 1`.
    pub fn from_heights(height: Vec<u32>) -> Self {
        Self {
            protect: height.iter().map(|&x| x >= 1).collect(),
            height,
        }
    }

    pub fn unprotected(n: usize) -> Self {
        Self::from_heights(vec![0; n])
    }
}
