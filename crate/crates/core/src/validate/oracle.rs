//! Breadth-first search over joint robot configurations. Exponential in the
//! robot count; meant for tiny instances only.

use std::collections::{HashMap, VecDeque};

use crate::discrete::{
    build_environment_graph, downwash_edge_conflict, downwash_vertex_conflict, DiscretePlan, EnvironmentGraph,
};
use crate::scenario::ScenarioSpec;
use crate::{Error, Result};

pub const ORACLE_MAX_ROBOTS: usize = 4;
pub const ORACLE_MAX_VERTICES: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleSettings {
    pub max_states: usize,
    pub max_makespan: usize,
}

impl Default for OracleSettings {
    fn default() -> Self {
        OracleSettings {
            max_states: 5_000_000,
            max_makespan: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub makespan: usize,
    pub plan: DiscretePlan,
    pub states: usize,
}

struct Rules<'a> {
    env: &'a EnvironmentGraph,
    cell_size: f64,
    rz: f64,
}

impl Rules<'_> {
    fn transition_ok(&self, from: &[usize], to: &[usize]) -> bool {
        let c = &self.env.cells;
        for i in 0..to.len() {
            for j in i + 1..to.len() {
                if to[i] == to[j] {
                    return false;
                }
                if from[i] != to[i] && from[i] == to[j] && to[i] == from[j] {
                    return false;
                }
                if downwash_vertex_conflict(c[to[i]], c[to[j]], self.cell_size, self.rz) {
                    return false;
                }
                let (a0, a1, b0, b1) = (c[from[i]], c[to[i]], c[from[j]], c[to[j]]);
                if downwash_edge_conflict(a0, a1, b0, b1, self.cell_size, self.rz)
                    || downwash_edge_conflict(b0, b1, a0, a1, self.cell_size, self.rz)
                {
                    return false;
                }
            }
        }
        true
    }

    /// All valid joint successors, in lexicographic move order.
    fn successors(&self, state: &[usize]) -> Vec<Vec<usize>> {
        let options: Vec<Vec<usize>> = state
            .iter()
            .map(|&v| {
                let mut o = vec![v];
                o.extend(&self.env.neighbors[v]);
                o
            })
            .collect();
        let mut out = Vec::new();
        let mut idx = vec![0usize; state.len()];
        'outer: loop {
            let next: Vec<usize> = idx.iter().zip(&options).map(|(&i, o)| o[i]).collect();
            if self.transition_ok(state, &next) {
                out.push(next);
            }
            for d in (0..idx.len()).rev() {
                idx[d] += 1;
                if idx[d] < options[d].len() {
                    continue 'outer;
                }
                idx[d] = 0;
            }
            break;
        }
        out
    }
}

fn canonical(state: &[usize]) -> Vec<usize> {
    let mut s = state.to_vec();
    s.sort_unstable();
    s
}

pub fn mapf_oracle(spec: &ScenarioSpec) -> Result<OracleResult> {
    mapf_oracle_with(spec, &OracleSettings::default())
}

/// Exact minimal makespan by exhaustive search, with goals treated as an
/// unordered set.
pub fn mapf_oracle_with(spec: &ScenarioSpec, settings: &OracleSettings) -> Result<OracleResult> {
    let env = build_environment_graph(spec);
    let n = spec.robot_count();
    if n > ORACLE_MAX_ROBOTS || env.vertex_count() > ORACLE_MAX_VERTICES {
        return Err(Error::Validation(format!(
            "oracle handles at most {ORACLE_MAX_ROBOTS} robots and {ORACLE_MAX_VERTICES} free cells \
             (got {n} and {})",
            env.vertex_count()
        )));
    }
    let lookup = |c| env.vertex(c).ok_or_else(|| Error::Validation(format!("cell {c:?} is not free")));
    let start: Vec<usize> = spec.starts.iter().map(|&c| lookup(c)).collect::<Result<_>>()?;
    let goal_vertices: Vec<usize> = spec.goals.iter().map(|&c| lookup(c)).collect::<Result<_>>()?;
    let goal_set = canonical(&goal_vertices);
    let rules = Rules {
        env: &env,
        cell_size: spec.grid.cell_size,
        rz: spec.robot_radii[2],
    };

    // Parent links keyed by canonical state; values keep the labeled state.
    let mut seen: HashMap<Vec<usize>, (Vec<usize>, Option<Vec<usize>>, usize)> = HashMap::new();
    seen.insert(canonical(&start), (start.clone(), None, 0));
    let mut queue = VecDeque::from([start]);
    let mut found = None;
    while let Some(state) = queue.pop_front() {
        let depth = seen[&canonical(&state)].2;
        if canonical(&state) == goal_set {
            found = Some(state);
            break;
        }
        if depth >= settings.max_makespan {
            continue;
        }
        for next in rules.successors(&state) {
            let key = canonical(&next);
            if seen.contains_key(&key) {
                continue;
            }
            if seen.len() >= settings.max_states {
                return Err(Error::BudgetExceeded(format!(
                    "oracle explored {} joint states",
                    settings.max_states
                )));
            }
            seen.insert(key, (next.clone(), Some(state.clone()), depth + 1));
            queue.push_back(next);
        }
    }
    let states = seen.len();
    let Some(end) = found else {
        return Err(Error::Infeasible(format!(
            "no joint plan within {} steps",
            settings.max_makespan
        )));
    };
    let mut chain = vec![end.clone()];
    let mut cur = end;
    while let Some(prev) = seen[&canonical(&cur)].1.clone() {
        chain.push(prev.clone());
        cur = prev;
    }
    chain.reverse();
    let makespan = chain.len() - 1;
    let paths: Vec<Vec<_>> = (0..n)
        .map(|i| chain.iter().map(|s| env.cells[s[i]]).collect())
        .collect();
    let last = &chain[makespan];
    let assignment = (0..n)
        .map(|i| goal_vertices.iter().position(|&g| g == last[i]).expect("goal reached"))
        .collect();
    Ok(OracleResult {
        makespan,
        plan: DiscretePlan {
            dt: spec.dt,
            k: makespan,
            assignment,
            paths,
        },
        states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete::check_plan;
    use crate::scenario::{Cell, GridSpec};

    fn spec(dims: [usize; 3], obstacles: Vec<Cell>, starts: Vec<Cell>, goals: Vec<Cell>, rz: f64) -> ScenarioSpec {
        let grid = GridSpec {
            dims,
            cell_size: 0.5,
            origin: [0.0; 3],
        };
        let mut s = ScenarioSpec::new(grid, obstacles, starts, goals);
        s.robot_radii[2] = rz;
        s
    }

    #[test]
    fn single_robot_graph_distance() {
        let s = spec([3, 3, 1], vec![[1, 1, 0]], vec![[0, 0, 0]], vec![[2, 2, 0]], 0.3);
        let r = mapf_oracle(&s).unwrap();
        assert_eq!(r.makespan, 4);
        assert!(check_plan(&r.plan, &s).is_empty());
    }

    #[test]
    fn head_on_in_corridor_is_free_when_unlabeled() {
        let s = spec([3, 1, 1], vec![], vec![[0, 0, 0], [2, 0, 0]], vec![[2, 0, 0], [0, 0, 0]], 0.3);
        assert_eq!(mapf_oracle(&s).unwrap().makespan, 0);
        let s = spec([3, 1, 1], vec![], vec![[0, 0, 0], [1, 0, 0]], vec![[1, 0, 0], [2, 0, 0]], 0.3);
        assert_eq!(mapf_oracle(&s).unwrap().makespan, 1);
    }

    #[test]
    fn tall_ellipsoids_cost_extra_steps() {
        // One free cell under a three-cell top row; robot 0 must pass over robot 1.
        let obstacles = vec![[0, 0, 0], [2, 0, 0]];
        let starts = vec![[0, 0, 1], [1, 0, 0]];
        let goals = vec![[2, 0, 1], [1, 0, 0]];
        let short = mapf_oracle(&spec([3, 1, 2], obstacles.clone(), starts.clone(), goals.clone(), 0.2)).unwrap();
        assert_eq!(short.makespan, 2);
        let tall_spec = spec([3, 1, 2], obstacles, starts, goals, 0.3);
        let tall = mapf_oracle(&tall_spec).unwrap();
        assert!(tall.makespan > short.makespan, "{} vs {}", tall.makespan, short.makespan);
        assert!(check_plan(&tall.plan, &tall_spec).is_empty());
    }

    #[test]
    fn rejects_large_instances() {
        let s = spec([5, 5, 2], vec![], vec![[0, 0, 0]], vec![[0, 0, 0]], 0.3);
        assert!(matches!(mapf_oracle(&s), Err(Error::Validation(_))));
    }
}
