//! Edmonds-Karp maximum flow (shortest augmenting paths by BFS).

use std::collections::VecDeque;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowNetwork {
    pub vertex_count: usize,
    pub edges: Vec<(usize, usize)>,
    pub capacity: Vec<u32>,
    pub source: usize,
    pub sink: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    pub value: u32,
    pub flow: Vec<u32>,
}

impl FlowNetwork {
    pub fn new(vertex_count: usize, source: usize, sink: usize) -> Self {
        FlowNetwork {
            vertex_count,
            edges: Vec::new(),
            capacity: Vec::new(),
            source,
            sink,
        }
    }

    pub fn add_edge(&mut self, from: usize, to: usize, capacity: u32) -> usize {
        debug_assert!(from != to, "self-loop at {from}");
        self.edges.push((from, to));
        self.capacity.push(capacity);
        self.edges.len() - 1
    }

    /// Conservation at every non-terminal vertex and capacity bounds.
    pub fn is_valid_flow(&self, flow: &[u32]) -> bool {
        let mut balance = vec![0i64; self.vertex_count];
        for (e, &(u, v)) in self.edges.iter().enumerate() {
            if flow[e] > self.capacity[e] {
                return false;
            }
            balance[u] -= flow[e] as i64;
            balance[v] += flow[e] as i64;
        }
        balance
            .iter()
            .enumerate()
            .all(|(v, &b)| v == self.source || v == self.sink || b == 0)
    }
}

/// Adjacency of residual arcs; arc `2e` is edge `e` forward, `2e + 1` backward.
pub(crate) struct Residual {
    adj_ptr: Vec<usize>,
    adj: Vec<usize>,
}

impl Residual {
    pub(crate) fn new(net: &FlowNetwork) -> Self {
        let mut deg = vec![0usize; net.vertex_count + 1];
        for &(u, v) in &net.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        let mut adj_ptr = vec![0usize; net.vertex_count + 1];
        for v in 0..net.vertex_count {
            adj_ptr[v + 1] = adj_ptr[v] + deg[v];
        }
        let mut fill = adj_ptr.clone();
        let mut adj = vec![0usize; adj_ptr[net.vertex_count]];
        for (e, &(u, v)) in net.edges.iter().enumerate() {
            adj[fill[u]] = 2 * e;
            fill[u] += 1;
            adj[fill[v]] = 2 * e + 1;
            fill[v] += 1;
        }
        Residual { adj_ptr, adj }
    }
}

pub fn max_flow(net: &FlowNetwork) -> FlowResult {
    let residual = Residual::new(net);
    max_flow_with(net, &residual, &net.capacity, None, None)
}

/// Max flow using `capacity` in place of `net.capacity`, augmenting from a
/// feasible `initial` flow and stopping once `limit` units are routed.
pub(crate) fn max_flow_with(
    net: &FlowNetwork,
    residual: &Residual,
    capacity: &[u32],
    initial: Option<&[u32]>,
    limit: Option<u32>,
) -> FlowResult {
    let m = net.edges.len();
    let mut flow = initial.map_or_else(|| vec![0u32; m], <[u32]>::to_vec);
    let mut value: u32 = net
        .edges
        .iter()
        .zip(&flow)
        .filter(|((u, _), _)| *u == net.source)
        .map(|(_, f)| f)
        .sum::<u32>()
        - net
            .edges
            .iter()
            .zip(&flow)
            .filter(|((_, v), _)| *v == net.source)
            .map(|(_, f)| f)
            .sum::<u32>();
    let mut pred = vec![usize::MAX; net.vertex_count];
    let mut queue = VecDeque::new();
    let residual_cap = |arc: usize, flow: &[u32]| -> u32 {
        let e = arc / 2;
        if arc % 2 == 0 {
            capacity[e] - flow[e]
        } else {
            flow[e]
        }
    };
    let head = |arc: usize| -> usize {
        let (u, v) = net.edges[arc / 2];
        if arc % 2 == 0 {
            v
        } else {
            u
        }
    };
    loop {
        if limit.is_some_and(|l| value >= l) {
            break;
        }
        pred.iter_mut().for_each(|p| *p = usize::MAX);
        queue.clear();
        queue.push_back(net.source);
        let mut found = false;
        'bfs: while let Some(u) = queue.pop_front() {
            for &arc in &residual.adj[residual.adj_ptr[u]..residual.adj_ptr[u + 1]] {
                let v = head(arc);
                if v != net.source && pred[v] == usize::MAX && residual_cap(arc, &flow) > 0 {
                    pred[v] = arc;
                    if v == net.sink {
                        found = true;
                        break 'bfs;
                    }
                    queue.push_back(v);
                }
            }
        }
        if !found {
            break;
        }
        let mut bottleneck = u32::MAX;
        let mut v = net.sink;
        while v != net.source {
            let arc = pred[v];
            bottleneck = bottleneck.min(residual_cap(arc, &flow));
            v = head(arc ^ 1);
        }
        if let Some(l) = limit {
            bottleneck = bottleneck.min(l - value);
        }
        let mut v = net.sink;
        while v != net.source {
            let arc = pred[v];
            if arc % 2 == 0 {
                flow[arc / 2] += bottleneck;
            } else {
                flow[arc / 2] -= bottleneck;
            }
            v = head(arc ^ 1);
        }
        value += bottleneck;
    }
    FlowResult { value, flow }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_edge_and_disjoint_paths() {
        let mut net = FlowNetwork::new(2, 0, 1);
        net.add_edge(0, 1, 1);
        assert_eq!(max_flow(&net).value, 1);

        let mut net = FlowNetwork::new(4, 0, 3);
        net.add_edge(0, 1, 1);
        net.add_edge(1, 3, 1);
        net.add_edge(0, 2, 1);
        net.add_edge(2, 3, 1);
        let r = max_flow(&net);
        assert_eq!(r.value, 2);
        assert!(net.is_valid_flow(&r.flow));
    }

    #[test]
    fn needs_flow_cancellation() {
        // Greedy path 0-1-2-3 must be partially undone.
        let mut net = FlowNetwork::new(4, 0, 3);
        for (u, v) in [(0, 1), (1, 2), (2, 3), (0, 2), (1, 3)] {
            net.add_edge(u, v, 1);
        }
        let r = max_flow(&net);
        assert_eq!(r.value, 2);
        assert!(net.is_valid_flow(&r.flow));
    }
}
