//! Undirected graphs with a visible/latent partition, and the structural
//! predicates the recovery algorithms are built on: marginalizable sets and
//! their witness boundaries, bottlenecks, exclusive views, separator checks.
//!
//! Everything here is purely combinatorial; probabilities never enter.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Node identifier. Nodes of a graph with `n` nodes are `0..n`.
pub type NodeId = u32;

/// An undirected graph whose nodes are partitioned into visible and latent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    node_count: u32,
    edges: BTreeSet<(NodeId, NodeId)>,
    visible: BTreeSet<NodeId>,
}

impl Graph {
    /// Builds a graph from an edge list and the set of visible nodes.
    /// Every node not listed as visible is latent.
    pub fn new(
        node_count: u32,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
        visible: impl IntoIterator<Item = NodeId>,
    ) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::validation(format!("self-loop at node {a}")));
            }
            if a >= node_count || b >= node_count {
                return Err(Error::validation(format!(
                    "edge ({a},{b}) references a node outside 0..{node_count}"
                )));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let visible: BTreeSet<NodeId> = visible.into_iter().collect();
        if let Some(&v) = visible.iter().find(|&&v| v >= node_count) {
            return Err(Error::validation(format!(
                "visible node {v} outside 0..{node_count}"
            )));
        }
        Ok(Graph {
            node_count,
            edges: set,
            visible,
        })
    }

    /// A graph where all nodes are visible.
    pub fn fully_visible(
        node_count: u32,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Result<Self> {
        Graph::new(node_count, edges, 0..node_count)
    }

    pub fn node_count(&self) -> u32 {
        self.node_count
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        0..self.node_count
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    pub fn is_visible(&self, v: NodeId) -> bool {
        self.visible.contains(&v)
    }

    pub fn visible(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.visible.iter().copied()
    }

    pub fn latent(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes().filter(move |v| !self.visible.contains(v))
    }

    pub fn neighbors(&self, v: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        for &(a, b) in &self.edges {
            if a == v {
                out.push(b);
            } else if b == v {
                out.push(a);
            }
        }
        out
    }

    /// Marks the given nodes latent (everything else visible).
    pub fn with_latent(mut self, latent: impl IntoIterator<Item = NodeId>) -> Self {
        let latent: BTreeSet<NodeId> = latent.into_iter().collect();
        self.visible = self.nodes().filter(|v| !latent.contains(v)).collect();
        self
    }

    /// Connected components of the subgraph induced by `keep`.
    fn components_within(&self, keep: &BTreeSet<NodeId>) -> Vec<BTreeSet<NodeId>> {
        let mut seen: BTreeSet<NodeId> = BTreeSet::new();
        let mut comps = Vec::new();
        for &start in keep {
            if seen.contains(&start) {
                continue;
            }
            let mut comp = BTreeSet::new();
            let mut stack = vec![start];
            seen.insert(start);
            while let Some(v) = stack.pop() {
                comp.insert(v);
                for w in self.neighbors(v) {
                    if keep.contains(&w) && seen.insert(w) {
                        stack.push(w);
                    }
                }
            }
            comps.push(comp);
        }
        comps
    }

    /// Components of the graph after deleting `removed`.
    pub fn components_without(&self, removed: &BTreeSet<NodeId>) -> Vec<BTreeSet<NodeId>> {
        let keep: BTreeSet<NodeId> = self.nodes().filter(|v| !removed.contains(v)).collect();
        self.components_within(&keep)
    }

    /// True when `a` and `b` are connected after deleting `removed`.
    /// Nodes inside `removed` are connected to nothing.
    pub fn connected_without(&self, a: NodeId, b: NodeId, removed: &BTreeSet<NodeId>) -> bool {
        if removed.contains(&a) || removed.contains(&b) {
            return false;
        }
        if a == b {
            return true;
        }
        let mut seen = BTreeSet::new();
        let mut stack = vec![a];
        seen.insert(a);
        while let Some(v) = stack.pop() {
            for w in self.neighbors(v) {
                if w == b {
                    return true;
                }
                if !removed.contains(&w) && seen.insert(w) {
                    stack.push(w);
                }
            }
        }
        false
    }
}

/// Witness that a set is marginalizable: every eliminated node's boundary
/// inside the set, plus the edges the elimination adds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarginalizationWitness {
    /// Eliminated node -> its boundary in the kept set (at most two nodes).
    pub boundary_map: BTreeMap<NodeId, BTreeSet<NodeId>>,
    /// Edges added between two-node boundaries.
    pub added_edges: BTreeSet<(NodeId, NodeId)>,
}

/// A bottleneck: removing `center` pairwise separates the three `views`
/// (after conditioning away `conditioned_on`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BottleneckInstance {
    pub center: NodeId,
    pub views: [NodeId; 3],
    pub conditioned_on: BTreeSet<NodeId>,
}

/// An exclusive-view instance: each core node owns a private view that the
/// rest of the core can only reach through it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusiveViewInstance {
    pub core: BTreeSet<NodeId>,
    pub view_map: BTreeMap<NodeId, NodeId>,
    pub conditioned_on: BTreeSet<NodeId>,
}

/// Decides whether `set` is marginalizable: every connected component of the
/// graph minus `set` must attach to at most two of its nodes. Returns the
/// witness (boundaries and added edges) when it is.
pub fn is_marginalizable(graph: &Graph, set: &BTreeSet<NodeId>) -> Option<MarginalizationWitness> {
    let comps = graph.components_without(set);
    let mut boundary_map = BTreeMap::new();
    let mut added_edges = BTreeSet::new();
    for comp in comps {
        let mut boundary: BTreeSet<NodeId> = BTreeSet::new();
        for &v in &comp {
            for w in graph.neighbors(v) {
                if set.contains(&w) {
                    boundary.insert(w);
                }
            }
        }
        if boundary.len() > 2 {
            return None;
        }
        if boundary.len() == 2 {
            let mut it = boundary.iter();
            let (&a, &b) = (it.next().unwrap(), it.next().unwrap());
            added_edges.insert((a.min(b), a.max(b)));
        }
        for &v in &comp {
            boundary_map.insert(v, boundary.clone());
        }
    }
    Some(MarginalizationWitness {
        boundary_map,
        added_edges,
    })
}

/// The graph on `set` induced by elimination: induced edges plus one edge
/// per two-node component boundary.
pub fn marg_graph(graph: &Graph, set: &BTreeSet<NodeId>) -> Result<Graph> {
    let witness = is_marginalizable(graph, set).ok_or_else(|| {
        Error::Structure(format!("set {set:?} is not marginalizable"))
    })?;
    let mut edges: BTreeSet<(NodeId, NodeId)> = graph
        .edges()
        .filter(|(a, b)| set.contains(a) && set.contains(b))
        .collect();
    edges.extend(witness.added_edges.iter().copied());
    // Nodes keep their original ids; eliminated nodes become isolated.
    let visible: Vec<NodeId> = graph.visible().filter(|v| set.contains(v)).collect();
    Graph::new(graph.node_count(), edges, visible)
}

/// Induced subgraph on the complement of `removed`; visibility flags are
/// preserved. Node ids are unchanged, removed nodes become isolated and
/// carry no edges.
pub fn remove_nodes(graph: &Graph, removed: &BTreeSet<NodeId>) -> Graph {
    let edges: BTreeSet<(NodeId, NodeId)> = graph
        .edges()
        .filter(|(a, b)| !removed.contains(a) && !removed.contains(b))
        .collect();
    let visible: BTreeSet<NodeId> = graph.visible().filter(|v| !removed.contains(v)).collect();
    Graph {
        node_count: graph.node_count(),
        edges,
        visible,
    }
}

/// True iff removing `center` disconnects every pair of `views`.
pub fn is_bottleneck(graph: &Graph, center: NodeId, views: [NodeId; 3]) -> bool {
    let [j, k, l] = views;
    if j == k || k == l || j == l || views.contains(&center) {
        return false;
    }
    let removed: BTreeSet<NodeId> = [center].into_iter().collect();
    !graph.connected_without(j, k, &removed)
        && !graph.connected_without(k, l, &removed)
        && !graph.connected_without(j, l, &removed)
}

/// Exhaustive search for bottleneck instances over the given candidate
/// centers and views. Deterministic lexicographic order.
pub fn find_bottlenecks(
    graph: &Graph,
    candidate_centers: &BTreeSet<NodeId>,
    allowed_views: &BTreeSet<NodeId>,
) -> Vec<BottleneckInstance> {
    let mut out = Vec::new();
    for &center in candidate_centers {
        let views: Vec<NodeId> = allowed_views.iter().copied().filter(|&v| v != center).collect();
        let comps = {
            let removed: BTreeSet<NodeId> = [center].into_iter().collect();
            graph.components_without(&removed)
        };
        let comp_of = |v: NodeId| comps.iter().position(|c| c.contains(&v));
        for a in 0..views.len() {
            for b in a + 1..views.len() {
                for c in b + 1..views.len() {
                    let (x, y, z) = (views[a], views[b], views[c]);
                    let (ca, cb, cc) = (comp_of(x), comp_of(y), comp_of(z));
                    if ca != cb && cb != cc && ca != cc {
                        out.push(BottleneckInstance {
                            center,
                            views: [x, y, z],
                            conditioned_on: BTreeSet::new(),
                        });
                    }
                }
            }
        }
    }
    out
}

/// Tries to assign each core node a private view from `candidate_views`:
/// node `i` may take view `j` when every path from `j` to the rest of the
/// core runs through `i`. Greedy assignment with backtracking (maximum
/// bipartite matching).
pub fn exclusive_view_check(
    graph: &Graph,
    core: &BTreeSet<NodeId>,
    candidate_views: &BTreeSet<NodeId>,
) -> Option<ExclusiveViewInstance> {
    if core.is_empty() || !core.is_disjoint(candidate_views) {
        return None;
    }
    let core_vec: Vec<NodeId> = core.iter().copied().collect();
    let views: Vec<NodeId> = candidate_views.iter().copied().collect();
    // eligible[i] = views usable by core node i
    let mut eligible: Vec<Vec<usize>> = Vec::new();
    for &i in &core_vec {
        let removed: BTreeSet<NodeId> = [i].into_iter().collect();
        let mut ok = Vec::new();
        for (vi, &j) in views.iter().enumerate() {
            let separated = core_vec
                .iter()
                .filter(|&&x| x != i)
                .all(|&x| !graph.connected_without(j, x, &removed));
            if separated {
                ok.push(vi);
            }
        }
        eligible.push(ok);
    }

    fn try_assign(
        i: usize,
        eligible: &[Vec<usize>],
        view_owner: &mut Vec<Option<usize>>,
        visited: &mut Vec<bool>,
    ) -> bool {
        for &v in &eligible[i] {
            if visited[v] {
                continue;
            }
            visited[v] = true;
            if view_owner[v].is_none()
                || try_assign(view_owner[v].unwrap(), eligible, view_owner, visited)
            {
                view_owner[v] = Some(i);
                return true;
            }
        }
        false
    }

    let mut view_owner: Vec<Option<usize>> = vec![None; views.len()];
    for i in 0..core_vec.len() {
        let mut visited = vec![false; views.len()];
        if !try_assign(i, &eligible, &mut view_owner, &mut visited) {
            return None;
        }
    }
    let mut view_map = BTreeMap::new();
    for (v, owner) in view_owner.iter().enumerate() {
        if let Some(i) = owner {
            view_map.insert(core_vec[*i], views[v]);
        }
    }
    Some(ExclusiveViewInstance {
        core: core.clone(),
        view_map,
        conditioned_on: BTreeSet::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(ids: &[NodeId]) -> BTreeSet<NodeId> {
        ids.iter().copied().collect()
    }

    fn chain3() -> Graph {
        // a - b - c
        Graph::fully_visible(3, [(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn rejects_self_loops_and_bad_ids() {
        assert!(Graph::fully_visible(2, [(0, 0)]).is_err());
        assert!(Graph::fully_visible(2, [(0, 5)]).is_err());
    }

    #[test]
    fn marginalizable_full_set_has_empty_witness() {
        let g = chain3();
        let w = is_marginalizable(&g, &set(&[0, 1, 2])).unwrap();
        assert!(w.boundary_map.is_empty());
        assert!(w.added_edges.is_empty());
    }

    #[test]
    fn chain_endpoints_are_marginalizable_with_added_edge() {
        let g = chain3();
        let w = is_marginalizable(&g, &set(&[0, 2])).unwrap();
        assert_eq!(w.boundary_map[&1], set(&[0, 2]));
        assert_eq!(w.added_edges, [(0, 2)].into_iter().collect());
        let m = marg_graph(&g, &set(&[0, 2])).unwrap();
        assert!(m.has_edge(0, 2));
        assert_eq!(m.edge_count(), 1);
    }

    #[test]
    fn star_leaves_are_not_marginalizable() {
        // center 0 with leaves 1,2,3; eliminating the center attaches it to
        // three kept nodes.
        let g = Graph::fully_visible(4, [(0, 1), (0, 2), (0, 3)]).unwrap();
        assert!(is_marginalizable(&g, &set(&[1, 2, 3])).is_none());
    }

    #[test]
    fn fig2_configuration_adds_boundary_edge() {
        // Eliminated node i=5 attaches to exactly j=0 and n=1 inside S,
        // through a small outside component {5,6}.
        let g = Graph::fully_visible(
            7,
            [(0, 5), (5, 6), (6, 1), (0, 2), (1, 3), (2, 4), (3, 4)],
        )
        .unwrap();
        let s = set(&[0, 1, 2, 3, 4]);
        let w = is_marginalizable(&g, &s).unwrap();
        assert_eq!(w.boundary_map[&5], set(&[0, 1]));
        assert_eq!(w.boundary_map[&6], set(&[0, 1]));
        let m = marg_graph(&g, &s).unwrap();
        assert!(m.has_edge(0, 1), "marginalization must add the (j,n) edge");
    }

    #[test]
    fn remove_nodes_keeps_flags_and_drops_edges() {
        let g = Graph::new(4, [(0, 1), (1, 2), (2, 3)], [0, 1]).unwrap();
        let r = remove_nodes(&g, &set(&[]));
        assert_eq!(r, g);
        let r = remove_nodes(&g, &set(&[1]));
        assert!(!r.has_edge(0, 1) && !r.has_edge(1, 2));
        assert!(r.has_edge(2, 3));
        assert!(r.is_visible(0) && !r.is_visible(2));
        // removing an articulation node splits the path
        let comps = g.components_without(&set(&[1]));
        assert_eq!(comps.len(), 2);
    }

    #[test]
    fn star_center_is_bottleneck_triangle_is_not() {
        let star = Graph::fully_visible(4, [(0, 1), (0, 2), (0, 3)]).unwrap();
        assert!(is_bottleneck(&star, 0, [1, 2, 3]));
        // triangle 0-1-2 plus pendant 3 on node 0: views 1,2 stay connected
        let tri = Graph::fully_visible(4, [(0, 1), (1, 2), (0, 2), (0, 3)]).unwrap();
        assert!(!is_bottleneck(&tri, 0, [1, 2, 3]));
    }

    #[test]
    fn find_bottlenecks_path_empty_star_full() {
        let path = chain3();
        let all: BTreeSet<NodeId> = path.nodes().collect();
        assert!(find_bottlenecks(&path, &all, &all).is_empty());

        // star with 4 leaves: center listed with all 4 view triples
        let star = Graph::fully_visible(5, [(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap();
        let centers = set(&[0]);
        let views = set(&[1, 2, 3, 4]);
        let found = find_bottlenecks(&star, &centers, &views);
        assert_eq!(found.len(), 4);
        assert!(found.iter().all(|b| b.center == 0));
    }

    #[test]
    fn exclusive_views_single_node_and_shared_neighbor() {
        // single core node: any outside neighbor qualifies
        let g = Graph::fully_visible(2, [(0, 1)]).unwrap();
        let inst = exclusive_view_check(&g, &set(&[0]), &set(&[1])).unwrap();
        assert_eq!(inst.view_map[&0], 1);

        // two core nodes whose only outside neighbor is shared: no assignment
        let g = Graph::fully_visible(3, [(0, 2), (1, 2), (0, 1)]).unwrap();
        assert!(exclusive_view_check(&g, &set(&[0, 1]), &set(&[2])).is_none());
    }

    #[test]
    fn exclusive_views_classic_configuration() {
        // core {0,1} with private views 2 (through 0) and 3 (through 1)
        let g = Graph::fully_visible(4, [(0, 1), (0, 2), (1, 3)]).unwrap();
        let inst = exclusive_view_check(&g, &set(&[0, 1]), &set(&[2, 3])).unwrap();
        assert_eq!(inst.view_map[&0], 2);
        assert_eq!(inst.view_map[&1], 3);
    }
}
