use log::{debug, info};

use crate::opt::maxflow::{max_flow_with, Residual};
use crate::opt::{max_flow, FlowNetwork};
use crate::scenario::ScenarioSpec;
use crate::{Error, Result};

use super::env_graph::EnvironmentGraph;
use super::flow_graph::{build_pruned_flow_graph, FlowEdgeKind, TimeExpandedGraph};
use super::plan::DiscretePlan;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteSettings {
    /// Branch-and-bound nodes allowed per makespan.
    pub node_limit: usize,
    /// Largest makespan tried; `None` means 10 × grid diameter.
    pub k_max: Option<usize>,
}

impl Default for DiscreteSettings {
    fn default() -> Self {
        DiscreteSettings {
            node_limit: 200_000,
            k_max: None,
        }
    }
}

impl DiscreteSettings {
    fn k_max(&self, spec: &ScenarioSpec) -> usize {
        self.k_max.unwrap_or(10 * spec.grid.diameter().max(1))
    }
}

/// Largest conflict-free flow in a time-expanded graph.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowIlpResult {
    pub value: usize,
    /// Per graph edge.
    pub flow: Vec<bool>,
    pub nodes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DiscreteStats {
    pub lower_bound: usize,
    pub makespan: usize,
    pub nodes: usize,
}

fn reachability_error(env: &EnvironmentGraph, spec: &ScenarioSpec) -> Option<Error> {
    let starts: Vec<usize> = spec.starts.iter().filter_map(|&c| env.vertex(c)).collect();
    let from = env.distances_from(&starts);
    for &g in &spec.goals {
        if env.vertex(g).is_none_or(|v| from[v] == usize::MAX) {
            return Some(Error::Infeasible(format!("goal {g:?} is unreachable from every start")));
        }
    }
    let goals: Vec<usize> = spec.goals.iter().filter_map(|&c| env.vertex(c)).collect();
    let to = env.distances_from(&goals);
    for &s in &spec.starts {
        if env.vertex(s).is_none_or(|v| to[v] == usize::MAX) {
            return Some(Error::Infeasible(format!("start {s:?} cannot reach any goal")));
        }
    }
    None
}

fn relaxed_feasible(env: &EnvironmentGraph, spec: &ScenarioSpec, k: usize) -> bool {
    let g = build_pruned_flow_graph(env, spec, k, false);
    max_flow(&g.to_network()).value as usize == spec.robot_count()
}

/// Smallest makespan for which robots can reach the goals ignoring downwash:
/// probe `K = 0, 1, 2, 4, …` then bisect.
pub fn lower_bound_makespan(env: &EnvironmentGraph, spec: &ScenarioSpec) -> Result<usize> {
    lower_bound_with(env, spec, &DiscreteSettings::default())
}

pub fn lower_bound_with(env: &EnvironmentGraph, spec: &ScenarioSpec, settings: &DiscreteSettings) -> Result<usize> {
    if spec.starts.is_empty() {
        return Err(Error::Validation("no robots".into()));
    }
    if let Some(e) = reachability_error(env, spec) {
        return Err(e);
    }
    let k_max = settings.k_max(spec);
    if relaxed_feasible(env, spec, 0) {
        return Ok(0);
    }
    let mut lo = 0; // infeasible
    let mut hi = 1;
    loop {
        if hi > k_max {
            if lo < k_max && relaxed_feasible(env, spec, k_max) {
                hi = k_max;
                break;
            }
            return Err(Error::Infeasible(format!("no feasible makespan up to {k_max}")));
        }
        if relaxed_feasible(env, spec, hi) {
            break;
        }
        lo = hi;
        hi *= 2;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if relaxed_feasible(env, spec, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Unit flow stored sparsely as the edges that carry it.
type SparseFlow = Vec<usize>;

struct Node {
    removed: Vec<usize>,
    /// Flow of the parent, still containing the newly removed edge.
    warm: SparseFlow,
}

struct FlowSearch<'a> {
    graph: &'a TimeExpandedGraph,
    net: FlowNetwork,
    residual: Residual,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
}

impl<'a> FlowSearch<'a> {
    fn new(graph: &'a TimeExpandedGraph) -> Self {
        let net = graph.to_network();
        let residual = Residual::new(&net);
        let mut out_edges = vec![Vec::new(); graph.vertex_count];
        let mut in_edges = vec![Vec::new(); graph.vertex_count];
        for (e, &(a, b)) in graph.edges.iter().enumerate() {
            out_edges[a].push(e);
            in_edges[b].push(e);
        }
        FlowSearch {
            graph,
            net,
            residual,
            out_edges,
            in_edges,
        }
    }

    /// Cancel the unit path through `e` in a 0/1 flow on a DAG.
    fn cancel_through(&self, flow: &mut [u32], e: usize) {
        if flow[e] == 0 {
            return;
        }
        flow[e] = 0;
        let (mut u, mut v) = self.graph.edges[e];
        while v != self.graph.sink {
            let next = *self.out_edges[v].iter().find(|&&f| flow[f] > 0).expect("flow conserved");
            flow[next] = 0;
            v = self.graph.edges[next].1;
        }
        while u != self.graph.source {
            let prev = *self.in_edges[u].iter().find(|&&f| flow[f] > 0).expect("flow conserved");
            flow[prev] = 0;
            u = self.graph.edges[prev].0;
        }
    }

    fn first_conflict(&self, flow: &[u32], carrying: &[usize]) -> Option<(usize, usize)> {
        carrying.iter().find_map(|&e| {
            self.graph
                .con(e)
                .iter()
                .find(|&&f| flow[f] > 0)
                .map(|&f| (e, f))
        })
    }

    /// Robot paths of a flow as edge lists, in source-edge order.
    fn paths(&self, flow: &[u32]) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for &s in &self.out_edges[self.graph.source] {
            if flow[s] == 0 {
                continue;
            }
            let mut path = vec![s];
            let mut v = self.graph.edges[s].1;
            while v != self.graph.sink {
                let next = *self.out_edges[v].iter().find(|&&f| flow[f] > 0).expect("flow conserved");
                path.push(next);
                v = self.graph.edges[next].1;
            }
            out.push(path);
        }
        out
    }

    /// Keep paths greedily while they stay conflict-free with those kept.
    fn greedy_repair(&self, flow: &[u32]) -> SparseFlow {
        let mut used = vec![false; self.graph.edges.len()];
        let mut kept = Vec::new();
        for path in self.paths(flow) {
            let clash = path.iter().any(|&e| self.graph.con(e).iter().any(|&f| used[f]));
            if !clash {
                for &e in &path {
                    used[e] = true;
                }
                kept.extend(path);
            }
        }
        kept
    }

    /// Depth-first search over conflict branches. With `target`, stops as
    /// soon as a conflict-free flow of that value is found and prunes nodes
    /// whose bound falls below it.
    fn run(&self, target: Option<usize>, node_limit: usize) -> Result<FlowIlpResult> {
        let m = self.graph.edges.len();
        let mut best: Option<(usize, SparseFlow)> = None;
        let mut stack = vec![Node {
            removed: Vec::new(),
            warm: Vec::new(),
        }];
        let mut nodes = 0;
        let mut capacity = vec![1u32; m];
        let mut flow = vec![0u32; m];
        let upper = self.out_edges[self.graph.source].len();
        while let Some(node) = stack.pop() {
            nodes += 1;
            if nodes > node_limit {
                return Err(Error::BudgetExceeded(format!(
                    "flow search exceeded {node_limit} nodes at K = {} (best {})",
                    self.graph.k,
                    best.map_or(0, |b| b.0)
                )));
            }
            capacity.iter_mut().for_each(|c| *c = 1);
            for &e in &node.removed {
                capacity[e] = 0;
            }
            flow.iter_mut().for_each(|f| *f = 0);
            for &e in &node.warm {
                flow[e] = 1;
            }
            if let Some(&last) = node.removed.last() {
                self.cancel_through(&mut flow, last);
            }
            let r = max_flow_with(&self.net, &self.residual, &capacity, Some(&flow), None);
            flow.copy_from_slice(&r.flow);
            let bound = r.value as usize;
            let incumbent = best.as_ref().map_or(0, |b| b.0);
            let pruned = match target {
                Some(t) => bound < t,
                None => best.is_some() && bound <= incumbent,
            };
            if pruned {
                continue;
            }
            let carrying: Vec<usize> = (0..m).filter(|&e| flow[e] > 0).collect();
            match self.first_conflict(&flow, &carrying) {
                None => {
                    best = Some((bound, carrying));
                    if bound >= target.unwrap_or(upper) {
                        break;
                    }
                }
                Some((e, f)) => {
                    let repaired = self.greedy_repair(&flow);
                    let value = repaired.iter().filter(|&&x| self.graph.edges[x].0 == self.graph.source).count();
                    if best.as_ref().is_none_or(|b| value > b.0) {
                        best = Some((value, repaired));
                    }
                    if target.is_some_and(|t| best.as_ref().is_some_and(|b| b.0 >= t)) {
                        break;
                    }
                    for cut in [f, e] {
                        let mut removed = node.removed.clone();
                        removed.push(cut);
                        stack.push(Node {
                            removed,
                            warm: carrying.clone(),
                        });
                    }
                }
            }
        }
        let (value, edges) = best.unwrap_or((0, Vec::new()));
        let mut flow = vec![false; m];
        for e in edges {
            flow[e] = true;
        }
        Ok(FlowIlpResult { value, flow, nodes })
    }
}

/// Optimal value of the conflict-constrained flow program on `graph`.
pub fn solve_flow_ilp(graph: &TimeExpandedGraph, node_limit: usize) -> Result<FlowIlpResult> {
    FlowSearch::new(graph).run(None, node_limit)
}

/// A conflict-free flow of value `target` if one exists (`value < target` otherwise).
pub fn find_conflict_free_flow(graph: &TimeExpandedGraph, target: usize, node_limit: usize) -> Result<FlowIlpResult> {
    FlowSearch::new(graph).run(Some(target), node_limit)
}

/// Read robot paths out of a full conflict-free flow.
pub fn extract_plan(graph: &TimeExpandedGraph, env: &EnvironmentGraph, spec: &ScenarioSpec, flow: &[bool]) -> DiscretePlan {
    let n = spec.robot_count();
    let k_total = graph.k;
    let mut out_edges = vec![Vec::new(); graph.vertex_count];
    for (e, &(a, _)) in graph.edges.iter().enumerate() {
        if flow[e] {
            out_edges[a].push(e);
        }
    }
    let mut paths = vec![Vec::new(); n];
    let mut assignment = vec![usize::MAX; n];
    for &s in &out_edges[graph.source] {
        let FlowEdgeKind::Source { robot } = graph.kinds[s] else {
            unreachable!()
        };
        let mut v = graph.edges[s].1;
        let mut cells = vec![spec.starts[robot]];
        loop {
            let e = out_edges[v][0];
            match graph.kinds[e] {
                FlowEdgeKind::Wait { v: x, k } | FlowEdgeKind::GadgetExit { to: x, k, .. } if k < k_total => {
                    cells.push(env.cells[x]);
                }
                FlowEdgeKind::Sink { goal } => {
                    assignment[robot] = goal;
                    break;
                }
                _ => {}
            }
            v = graph.edges[e].1;
        }
        paths[robot] = cells;
    }
    DiscretePlan {
        dt: spec.dt,
        k: k_total,
        assignment,
        paths,
    }
}

/// Minimal-makespan plan respecting all collision and downwash rules.
pub fn solve_discrete(env: &EnvironmentGraph, spec: &ScenarioSpec) -> Result<DiscretePlan> {
    solve_discrete_with(env, spec, &DiscreteSettings::default()).map(|(p, _)| p)
}

pub fn solve_discrete_with(
    env: &EnvironmentGraph,
    spec: &ScenarioSpec,
    settings: &DiscreteSettings,
) -> Result<(DiscretePlan, DiscreteStats)> {
    let lb = lower_bound_with(env, spec, settings)?;
    let n = spec.robot_count();
    let mut total_nodes = 0;
    for k in lb..=settings.k_max(spec) {
        let graph = build_pruned_flow_graph(env, spec, k, true);
        let r = find_conflict_free_flow(&graph, n, settings.node_limit)?;
        total_nodes += r.nodes;
        debug!("K = {k}: best flow {} of {n} after {} nodes", r.value, r.nodes);
        if r.value == n {
            info!("discrete plan: LB = {lb}, K = {k}, {total_nodes} search nodes");
            let plan = extract_plan(&graph, env, spec, &r.flow);
            return Ok((
                plan,
                DiscreteStats {
                    lower_bound: lb,
                    makespan: k,
                    nodes: total_nodes,
                },
            ));
        }
    }
    Err(Error::BudgetExceeded(format!(
        "no conflict-free plan up to K = {}",
        settings.k_max(spec)
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete::{build_environment_graph, build_flow_graph, check_plan};
    use crate::opt::solve_ilp;
    use crate::scenario::{Cell, GridSpec};

    fn spec(dims: [usize; 3], obstacles: Vec<Cell>, starts: Vec<Cell>, goals: Vec<Cell>) -> ScenarioSpec {
        let grid = GridSpec {
            dims,
            cell_size: 0.5,
            origin: [0.0; 3],
        };
        ScenarioSpec::new(grid, obstacles, starts, goals)
    }

    #[test]
    fn stationary_robot() {
        let s = spec([3, 3, 1], vec![], vec![[1, 1, 0]], vec![[1, 1, 0]]);
        let env = build_environment_graph(&s);
        assert_eq!(lower_bound_makespan(&env, &s).unwrap(), 0);
        let plan = solve_discrete(&env, &s).unwrap();
        assert_eq!(plan.k, 0);
        assert_eq!(plan.paths, vec![vec![[1, 1, 0]]]);
    }

    #[test]
    fn straight_corridor() {
        let s = spec([6, 1, 1], vec![], vec![[0, 0, 0]], vec![[5, 0, 0]]);
        let env = build_environment_graph(&s);
        assert_eq!(lower_bound_makespan(&env, &s).unwrap(), 5);
    }

    #[test]
    fn adjacent_single_move() {
        let s = spec([2, 1, 1], vec![], vec![[0, 0, 0]], vec![[1, 0, 0]]);
        let env = build_environment_graph(&s);
        let plan = solve_discrete(&env, &s).unwrap();
        assert_eq!(plan.k, 1);
        assert_eq!(plan.paths[0], vec![[0, 0, 0], [1, 0, 0]]);
    }

    #[test]
    fn swapped_goals_need_no_motion() {
        let s = spec([2, 1, 1], vec![], vec![[0, 0, 0], [1, 0, 0]], vec![[1, 0, 0], [0, 0, 0]]);
        let env = build_environment_graph(&s);
        let plan = solve_discrete(&env, &s).unwrap();
        assert_eq!(plan.k, 0);
        assert_eq!(plan.assignment, vec![1, 0]);
        assert!(check_plan(&plan, &s).is_empty());
    }

    #[test]
    fn disconnected_goal_reported() {
        let s = spec([3, 1, 1], vec![[1, 0, 0]], vec![[0, 0, 0]], vec![[2, 0, 0]]);
        let env = build_environment_graph(&s);
        match solve_discrete(&env, &s) {
            Err(Error::Infeasible(msg)) => assert!(msg.contains("[2, 0, 0]"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn downwash_delays_stacked_crossing() {
        // Robot 0 must pass over robot 1; tall ellipsoids forbid the overlap.
        let mut s = spec(
            [3, 1, 2],
            vec![[0, 0, 0], [2, 0, 0]],
            vec![[0, 0, 1], [1, 0, 0]],
            vec![[2, 0, 1], [1, 0, 0]],
        );
        s.robot_radii[2] = 0.2;
        let env = build_environment_graph(&s);
        let short = solve_discrete(&env, &s).unwrap();
        assert!(check_plan(&short, &s).is_empty());
        s.robot_radii[2] = 0.3;
        let (tall, stats) = solve_discrete_with(&env, &s, &DiscreteSettings::default()).unwrap();
        assert!(check_plan(&tall, &s).is_empty(), "{:?}", check_plan(&tall, &s));
        assert_eq!((short.k, tall.k, stats.lower_bound), (2, 3, 2));
    }

    #[test]
    fn flow_search_matches_generic_ilp() {
        let mut s = spec([2, 1, 2], vec![], vec![[0, 0, 1], [1, 0, 0]], vec![[1, 0, 1], [0, 0, 0]]);
        s.robot_radii[2] = 0.3;
        let env = build_environment_graph(&s);
        for k in 0..=2 {
            let g = build_pruned_flow_graph(&env, &s, k, true);
            let fast = solve_flow_ilp(&g, 10_000).unwrap();
            let ilp = solve_ilp(&g.to_ilp()).unwrap();
            assert_eq!(fast.value as f64, ilp.objective, "K = {k}");
        }
        let full = build_flow_graph(&env, &s, 1, true);
        let pruned = build_pruned_flow_graph(&env, &s, 1, true);
        assert_eq!(
            solve_flow_ilp(&full, 10_000).unwrap().value,
            solve_flow_ilp(&pruned, 10_000).unwrap().value
        );
    }
}
