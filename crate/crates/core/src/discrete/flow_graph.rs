use std::collections::HashMap;

use crate::opt::{BinaryIlp, FlowNetwork, Sense};
use crate::scenario::{Cell, ScenarioSpec};

use super::env_graph::EnvironmentGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowEdgeKind {
    /// source → u(start, 0)
    Source { robot: usize },
    /// w(goal, K) → sink
    Sink { goal: usize },
    /// u(v, k) → w(v, k)
    Wait { v: usize, k: usize },
    /// w(v, k) → u(v, k + 1)
    Step { v: usize, k: usize },
    /// u(from, k) → gadget entry
    GadgetEnter { edge: usize, k: usize, from: usize },
    /// gadget entry → gadget exit; shared by both directions
    GadgetPass { edge: usize, k: usize },
    /// gadget exit → w(to, k)
    GadgetExit { edge: usize, k: usize, to: usize },
}

/// Time-expanded flow graph. Moves between steps `k` and `k + 1` happen
/// inside layer `k` (from `u` to `w`); layer `K` only allows waiting.
#[derive(Debug, Clone)]
pub struct TimeExpandedGraph {
    pub k: usize,
    pub env_vertices: usize,
    pub env_edges: Vec<(usize, usize)>,
    pub vertex_count: usize,
    pub source: usize,
    pub sink: usize,
    pub edges: Vec<(usize, usize)>,
    pub kinds: Vec<FlowEdgeKind>,
    /// Mutually exclusive edge pairs `(e, e′)` with `e < e′`, sorted.
    pub conflict_pairs: Vec<(usize, usize)>,
    con: HashMap<usize, Vec<usize>>,
}

impl TimeExpandedGraph {
    pub fn u(&self, v: usize, k: usize) -> usize {
        2 * (k * self.env_vertices + v)
    }

    pub fn w(&self, v: usize, k: usize) -> usize {
        self.u(v, k) + 1
    }

    fn gadget_base(&self) -> usize {
        2 * (self.k + 1) * self.env_vertices + 2
    }

    /// Number of `u`/`w` vertices plus the two terminals.
    pub fn layered_vertex_count(&self) -> usize {
        self.gadget_base()
    }

    /// Edges that may not carry flow together with `e`.
    pub fn con(&self, e: usize) -> &[usize] {
        self.con.get(&e).map_or(&[], |v| v.as_slice())
    }

    pub fn source_edges(&self) -> impl Iterator<Item = usize> + '_ {
        self.kinds
            .iter()
            .enumerate()
            .filter(|(_, k)| matches!(k, FlowEdgeKind::Source { .. }))
            .map(|(e, _)| e)
    }

    pub fn to_network(&self) -> FlowNetwork {
        let mut net = FlowNetwork::new(self.vertex_count, self.source, self.sink);
        for &(a, b) in &self.edges {
            net.add_edge(a, b, 1);
        }
        net
    }

    /// The binary program over edge variables: maximize flow out of the
    /// source subject to conservation and pairwise conflict packing.
    pub fn to_ilp(&self) -> BinaryIlp {
        let mut ilp = BinaryIlp::new(self.edges.len());
        for e in self.source_edges() {
            ilp.objective[e] = 1.0;
        }
        let mut incidence: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.vertex_count];
        for (e, &(a, b)) in self.edges.iter().enumerate() {
            incidence[a].push((e, -1.0));
            incidence[b].push((e, 1.0));
        }
        for (v, row) in incidence.into_iter().enumerate() {
            if v != self.source && v != self.sink && !row.is_empty() {
                ilp.add(row, Sense::Eq, 0.0);
            }
        }
        for &(e, f) in &self.conflict_pairs {
            ilp.add(vec![(e, 1.0), (f, 1.0)], Sense::Le, 1.0);
        }
        ilp.names = self.kinds.iter().map(edge_name).collect();
        ilp
    }
}

fn edge_name(kind: &FlowEdgeKind) -> String {
    match *kind {
        FlowEdgeKind::Source { robot } => format!("src_r{robot}"),
        FlowEdgeKind::Sink { goal } => format!("snk_g{goal}"),
        FlowEdgeKind::Wait { v, k } => format!("wait_v{v}_k{k}"),
        FlowEdgeKind::Step { v, k } => format!("step_v{v}_k{k}"),
        FlowEdgeKind::GadgetEnter { edge, k, from } => format!("in_e{edge}_k{k}_v{from}"),
        FlowEdgeKind::GadgetPass { edge, k } => format!("pass_e{edge}_k{k}"),
        FlowEdgeKind::GadgetExit { edge, k, to } => format!("out_e{edge}_k{k}_v{to}"),
    }
}

/// Vertical downwash clash between two distinct cells occupied at the same time.
pub fn downwash_vertex_conflict(a: Cell, b: Cell, cell_size: f64, rz: f64) -> bool {
    a != b && a[0] == b[0] && a[1] == b[1] && ((a[2] - b[2]) as f64 * cell_size).abs() < 2.0 * rz
}

/// Two simultaneous moves `a0 → a1` and `b0 → b1` that exchange columns while
/// both vertical gaps are too small.
pub fn downwash_edge_conflict(a0: Cell, a1: Cell, b0: Cell, b1: Cell, cell_size: f64, rz: f64) -> bool {
    let xy = |c: Cell| [c[0], c[1]];
    let dz = |p: Cell, q: Cell| ((p[2] - q[2]) as f64 * cell_size).abs();
    xy(a0) == xy(b1) && xy(a1) == xy(b0) && dz(a0, b1) < 2.0 * rz && dz(a1, b0) < 2.0 * rz
}

/// Per-vertex time windows `(earliest, latest)`: `u(v, k)` can lie on a
/// source-sink path only if `earliest ≤ k ≤ latest`.
pub(crate) fn time_windows(env: &EnvironmentGraph, spec: &ScenarioSpec, k: usize) -> Vec<Option<(usize, usize)>> {
    let starts: Vec<usize> = spec.starts.iter().filter_map(|&c| env.vertex(c)).collect();
    let goals: Vec<usize> = spec.goals.iter().filter_map(|&c| env.vertex(c)).collect();
    let from = env.distances_from(&starts);
    let to = env.distances_from(&goals);
    from.iter()
        .zip(&to)
        .map(|(&a, &b)| {
            if a == usize::MAX || b == usize::MAX || a + b > k {
                None
            } else {
                Some((a, k - b))
            }
        })
        .collect()
}

pub fn build_flow_graph(env: &EnvironmentGraph, spec: &ScenarioSpec, k: usize, with_conflicts: bool) -> TimeExpandedGraph {
    build(env, spec, k, with_conflicts, false)
}

/// Like [`build_flow_graph`] but omits edges that cannot lie on any
/// start-to-goal path of length `k`.
pub fn build_pruned_flow_graph(env: &EnvironmentGraph, spec: &ScenarioSpec, k: usize, with_conflicts: bool) -> TimeExpandedGraph {
    build(env, spec, k, with_conflicts, true)
}

fn build(env: &EnvironmentGraph, spec: &ScenarioSpec, k_max: usize, with_conflicts: bool, prune: bool) -> TimeExpandedGraph {
    let nv = env.vertex_count();
    let ne = env.edges.len();
    let mut g = TimeExpandedGraph {
        k: k_max,
        env_vertices: nv,
        env_edges: env.edges.clone(),
        vertex_count: 0,
        source: 0,
        sink: 0,
        edges: Vec::new(),
        kinds: Vec::new(),
        conflict_pairs: Vec::new(),
        con: HashMap::new(),
    };
    let base = g.gadget_base();
    g.source = base - 2;
    g.sink = base - 1;
    g.vertex_count = base + 2 * k_max * ne;
    let windows = if prune {
        time_windows(env, spec, k_max)
    } else {
        vec![Some((0, k_max)); nv]
    };
    let live = |v: usize, k: usize| windows[v].is_some_and(|(lo, hi)| lo <= k && k <= hi);

    let push = |g: &mut TimeExpandedGraph, a: usize, b: usize, kind: FlowEdgeKind| {
        g.edges.push((a, b));
        g.kinds.push(kind);
        g.edges.len() - 1
    };
    for (robot, &c) in spec.starts.iter().enumerate() {
        if let Some(v) = env.vertex(c) {
            let (from, to) = (g.source, g.u(v, 0));
            push(&mut g, from, to, FlowEdgeKind::Source { robot });
        }
    }
    // Per layer: edge ids of steps and of directional gadget exits, for conflicts.
    let mut step_edge: Vec<HashMap<usize, usize>> = vec![HashMap::new(); k_max];
    let mut exit_edge: Vec<HashMap<(usize, usize), usize>> = vec![HashMap::new(); k_max];
    // u(v, k) is "at v at time k"; w(v, k) is "at v at time k + 1" (time K for k = K).
    for k in 0..=k_max {
        for v in 0..nv {
            if live(v, k) && (k == k_max || live(v, k + 1)) {
                let (a, b) = (g.u(v, k), g.w(v, k));
                push(&mut g, a, b, FlowEdgeKind::Wait { v, k });
            }
        }
        if k == k_max {
            break;
        }
        for (edge, &(v1, v2)) in env.edges.iter().enumerate() {
            let (d1, d2) = (live(v1, k), live(v2, k));
            let (a1, a2) = (live(v1, k + 1), live(v2, k + 1));
            if !(d1 || d2) || !(a1 || a2) {
                continue;
            }
            let a = base + 2 * (k * ne + edge);
            let b = a + 1;
            for (from, ok) in [(v1, d1), (v2, d2)] {
                if ok {
                    let u = g.u(from, k);
                    push(&mut g, u, a, FlowEdgeKind::GadgetEnter { edge, k, from });
                }
            }
            push(&mut g, a, b, FlowEdgeKind::GadgetPass { edge, k });
            for (to, other, ok) in [(v1, v2, a1), (v2, v1, a2)] {
                if ok {
                    let wt = g.w(to, k);
                    let id = push(&mut g, b, wt, FlowEdgeKind::GadgetExit { edge, k, to });
                    exit_edge[k].insert((other, to), id);
                }
            }
        }
        for v in 0..nv {
            if live(v, k + 1) {
                let (a, b) = (g.w(v, k), g.u(v, k + 1));
                let id = push(&mut g, a, b, FlowEdgeKind::Step { v, k });
                step_edge[k].insert(v, id);
            }
        }
    }
    for (goal, &c) in spec.goals.iter().enumerate() {
        if let Some(v) = env.vertex(c) {
            if live(v, k_max) {
                let (from, to) = (g.w(v, k_max), g.sink);
                push(&mut g, from, to, FlowEdgeKind::Sink { goal });
            }
        }
    }

    if with_conflicts {
        let cs = spec.grid.cell_size;
        let rz = spec.robot_radii[2];
        let mut pairs = Vec::new();
        // Vertical clashes between distinct vertices sharing a column.
        let mut columns: HashMap<[i64; 2], Vec<usize>> = HashMap::new();
        for (v, c) in env.cells.iter().enumerate() {
            columns.entry([c[0], c[1]]).or_default().push(v);
        }
        let mut clashing = Vec::new();
        let mut col_keys: Vec<_> = columns.keys().copied().collect();
        col_keys.sort_unstable();
        for key in col_keys {
            let col = &columns[&key];
            for (i, &a) in col.iter().enumerate() {
                for &b in &col[i + 1..] {
                    if downwash_vertex_conflict(env.cells[a], env.cells[b], cs, rz) {
                        clashing.push((a, b));
                    }
                }
            }
        }
        for layer in &step_edge {
            for &(a, b) in &clashing {
                if let (Some(&e), Some(&f)) = (layer.get(&a), layer.get(&b)) {
                    pairs.push((e.min(f), e.max(f)));
                }
            }
        }
        // Column-exchanging moves at clashing heights.
        let mut directed: Vec<(usize, usize)> = env
            .edges
            .iter()
            .flat_map(|&(a, b)| [(a, b), (b, a)])
            .collect();
        directed.sort_unstable();
        let mut by_xy: HashMap<([i64; 2], [i64; 2]), Vec<(usize, usize)>> = HashMap::new();
        for &(a, b) in &directed {
            let (ca, cb) = (env.cells[a], env.cells[b]);
            by_xy.entry(([ca[0], ca[1]], [cb[0], cb[1]])).or_default().push((a, b));
        }
        let mut move_pairs = Vec::new();
        for &(a0, a1) in &directed {
            let (c0, c1) = (env.cells[a0], env.cells[a1]);
            let Some(cands) = by_xy.get(&([c1[0], c1[1]], [c0[0], c0[1]])) else {
                continue;
            };
            for &(b0, b1) in cands {
                let same_edge = (b0, b1) == (a1, a0);
                if !same_edge
                    && (a0, a1) < (b0, b1)
                    && downwash_edge_conflict(c0, c1, env.cells[b0], env.cells[b1], cs, rz)
                {
                    move_pairs.push(((a0, a1), (b0, b1)));
                }
            }
        }
        for layer in &exit_edge {
            for (d1, d2) in &move_pairs {
                if let (Some(&e), Some(&f)) = (layer.get(d1), layer.get(d2)) {
                    pairs.push((e.min(f), e.max(f)));
                }
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        for &(e, f) in &pairs {
            g.con.entry(e).or_default().push(f);
            g.con.entry(f).or_default().push(e);
        }
        for list in g.con.values_mut() {
            list.sort_unstable();
        }
        g.conflict_pairs = pairs;
    }
    g
}
