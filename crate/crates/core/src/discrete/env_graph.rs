use std::collections::{HashMap, VecDeque};

use crate::scenario::{cell_center, Cell, ScenarioSpec};
use crate::Vec3;

/// Free grid cells and their 6-connected adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentGraph {
    pub cells: Vec<Cell>,
    pub positions: Vec<Vec3>,
    /// Undirected edges `(a, b)` with `a < b`, sorted.
    pub edges: Vec<(usize, usize)>,
    pub neighbors: Vec<Vec<usize>>,
    index: HashMap<Cell, usize>,
}

pub fn build_environment_graph(spec: &ScenarioSpec) -> EnvironmentGraph {
    let grid = &spec.grid;
    let mut cells = Vec::new();
    let mut index = HashMap::new();
    for lin in 0..grid.cell_count() {
        let c = grid.cell_at(lin);
        if !spec.obstacles.contains(&c) {
            index.insert(c, cells.len());
            cells.push(c);
        }
    }
    let mut edges = Vec::new();
    let mut neighbors = vec![Vec::new(); cells.len()];
    for (a, c) in cells.iter().enumerate() {
        for axis in 0..3 {
            let mut n = *c;
            n[axis] += 1;
            if let Some(&b) = index.get(&n) {
                edges.push((a.min(b), a.max(b)));
            }
        }
    }
    edges.sort_unstable();
    for &(a, b) in &edges {
        neighbors[a].push(b);
        neighbors[b].push(a);
    }
    for n in neighbors.iter_mut() {
        n.sort_unstable();
    }
    let positions = cells.iter().map(|&c| cell_center(grid, c)).collect();
    EnvironmentGraph {
        cells,
        positions,
        edges,
        neighbors,
        index,
    }
}

impl EnvironmentGraph {
    pub fn vertex_count(&self) -> usize {
        self.cells.len()
    }

    pub fn vertex(&self, cell: Cell) -> Option<usize> {
        self.index.get(&cell).copied()
    }

    pub fn are_adjacent(&self, a: usize, b: usize) -> bool {
        self.neighbors[a].binary_search(&b).is_ok()
    }

    /// Multi-source BFS hop counts; `usize::MAX` where unreachable.
    pub fn distances_from(&self, sources: &[usize]) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.vertex_count()];
        let mut queue = VecDeque::new();
        for &s in sources {
            if dist[s] != 0 {
                dist[s] = 0;
                queue.push_back(s);
            }
        }
        while let Some(v) = queue.pop_front() {
            for &n in &self.neighbors[v] {
                if dist[n] == usize::MAX {
                    dist[n] = dist[v] + 1;
                    queue.push_back(n);
                }
            }
        }
        dist
    }
}
