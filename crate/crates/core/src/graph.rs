//! Bipartite interview graphs, m-hop neighbourhoods and tree diagnostics.
//!
//! Vertices use global ids: applicants `0..n_a`, firms `n_a..n_a+n_j`.
//! Edge lists given to or returned from this module use local indices
//! `(applicant, firm)`.

use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::treealg::TreeShape;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InterviewGraph {
    n_applicants: usize,
    n_firms: usize,
    adj: Vec<Vec<usize>>,
    n_edges: usize,
}

impl InterviewGraph {
    pub fn empty(n_applicants: usize, n_firms: usize) -> Self {
        InterviewGraph {
            n_applicants,
            n_firms,
            adj: vec![Vec::new(); n_applicants + n_firms],
            n_edges: 0,
        }
    }

    /// Builds a graph from `(applicant, firm)` pairs. Duplicates are merged.
    pub fn from_edges(n_applicants: usize, n_firms: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj = vec![Vec::new(); n_applicants + n_firms];
        for &(a, j) in edges {
            if a >= n_applicants || j >= n_firms {
                return Err(Error::domain(format!(
                    "edge ({a}, {j}) outside a {n_applicants}x{n_firms} market"
                )));
            }
            adj[a].push(n_applicants + j);
            adj[n_applicants + j].push(a);
        }
        Ok(Self::from_adjacency(n_applicants, n_firms, adj))
    }

    fn from_adjacency(n_applicants: usize, n_firms: usize, mut adj: Vec<Vec<usize>>) -> Self {
        for list in adj.iter_mut() {
            list.sort_unstable();
            list.dedup();
        }
        let n_edges = adj[..n_applicants].iter().map(Vec::len).sum();
        InterviewGraph {
            n_applicants,
            n_firms,
            adj,
            n_edges,
        }
    }

    /// Builds from per-applicant firm lists and per-firm applicant lists (local indices).
    pub(crate) fn from_signal_lists(
        n_applicants: usize,
        n_firms: usize,
        applicant_signals: &[Vec<usize>],
        firm_signals: &[Vec<usize>],
    ) -> Self {
        let mut adj = vec![Vec::new(); n_applicants + n_firms];
        for (a, firms) in applicant_signals.iter().enumerate() {
            for &j in firms {
                adj[a].push(n_applicants + j);
                adj[n_applicants + j].push(a);
            }
        }
        for (j, apps) in firm_signals.iter().enumerate() {
            for &a in apps {
                adj[a].push(n_applicants + j);
                adj[n_applicants + j].push(a);
            }
        }
        Self::from_adjacency(n_applicants, n_firms, adj)
    }

    pub fn complete(n_applicants: usize, n_firms: usize) -> Self {
        let mut adj = vec![Vec::new(); n_applicants + n_firms];
        for (a, list) in adj.iter_mut().enumerate().take(n_applicants) {
            *list = (n_applicants..n_applicants + n_firms).collect();
            let _ = a;
        }
        for list in adj.iter_mut().skip(n_applicants) {
            *list = (0..n_applicants).collect();
        }
        InterviewGraph {
            n_applicants,
            n_firms,
            adj,
            n_edges: n_applicants * n_firms,
        }
    }

    pub fn n_applicants(&self) -> usize {
        self.n_applicants
    }

    pub fn n_firms(&self) -> usize {
        self.n_firms
    }

    pub fn n_vertices(&self) -> usize {
        self.n_applicants + self.n_firms
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn is_applicant(&self, v: usize) -> bool {
        v < self.n_applicants
    }

    pub fn firm_vertex(&self, j: usize) -> usize {
        self.n_applicants + j
    }

    /// Sorted neighbours of a vertex (global ids).
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    /// Whether applicant `a` and firm `j` (local indices) interviewed.
    pub fn has_edge(&self, a: usize, j: usize) -> bool {
        a < self.n_applicants
            && j < self.n_firms
            && self.adj[a].binary_search(&(self.n_applicants + j)).is_ok()
    }

    /// Edge test on global vertex ids, in either order.
    pub fn adjacent(&self, u: usize, v: usize) -> bool {
        u < self.adj.len() && self.adj[u].binary_search(&v).is_ok()
    }

    /// All edges as `(applicant, firm)` local pairs, ascending.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.n_edges);
        for a in 0..self.n_applicants {
            for &f in &self.adj[a] {
                out.push((a, f - self.n_applicants));
            }
        }
        out
    }

    /// Keeps the vertices flagged in `keep` and every edge among them.
    /// Vertex ids are unchanged.
    pub fn induced_subgraph(&self, keep: &[bool]) -> InterviewGraph {
        let adj = self
            .adj
            .iter()
            .enumerate()
            .map(|(v, list)| {
                if keep[v] {
                    list.iter().copied().filter(|&u| keep[u]).collect()
                } else {
                    Vec::new()
                }
            })
            .collect();
        Self::from_adjacency(self.n_applicants, self.n_firms, adj)
    }

    /// One `a,j` line per edge, ascending.
    pub fn edge_list_string(&self) -> String {
        let mut s = String::new();
        for (a, j) in self.edges() {
            let _ = writeln!(s, "{a},{j}");
        }
        s
    }

    fn check_vertex(&self, v: usize) -> Result<()> {
        if v >= self.n_vertices() {
            return Err(Error::domain(format!(
                "vertex {v} is not in a graph with {} vertices",
                self.n_vertices()
            )));
        }
        Ok(())
    }

    /// BFS distances from `root`, `None` for unreachable vertices or beyond `max_depth`.
    pub fn bfs_depths(&self, root: usize, max_depth: usize) -> Vec<Option<usize>> {
        let mut depth = vec![None; self.n_vertices()];
        depth[root] = Some(0);
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            let d = depth[v].expect("queued vertices have depth");
            if d == max_depth {
                continue;
            }
            for &u in &self.adj[v] {
                if depth[u].is_none() {
                    depth[u] = Some(d + 1);
                    queue.push_back(u);
                }
            }
        }
        depth
    }

    /// Vertex-induced subgraph on the vertices within `m` hops of `root`.
    pub fn truncate_m_hop(&self, root: usize, m: usize) -> Result<RootedSubgraph<'_>> {
        self.check_vertex(root)?;
        let depth = self.bfs_depths(root, m);
        let keep: Vec<bool> = depth.iter().map(Option::is_some).collect();
        let vertices: Vec<usize> = (0..self.n_vertices()).filter(|&v| keep[v]).collect();
        Ok(RootedSubgraph {
            parent: self,
            root,
            m,
            depth,
            graph: self.induced_subgraph(&keep),
            vertices,
        })
    }

    /// Connected components as sorted vertex lists, ordered by smallest id.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.n_vertices()];
        let mut out = Vec::new();
        for s in 0..self.n_vertices() {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut comp = vec![s];
            let mut stack = vec![s];
            while let Some(v) = stack.pop() {
                for &u in &self.adj[v] {
                    if !seen[u] {
                        seen[u] = true;
                        comp.push(u);
                        stack.push(u);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Largest `|E| - |V| + 1` over connected components; 0 for a forest.
    pub fn tree_excess(&self) -> usize {
        self.components()
            .iter()
            .map(|comp| {
                let e2: usize = comp.iter().map(|&v| self.adj[v].len()).sum();
                (e2 / 2 + 1).saturating_sub(comp.len())
            })
            .max()
            .unwrap_or(0)
    }

    /// Connected with no cycle. The empty graph is not a tree.
    pub fn is_tree(&self) -> bool {
        self.n_vertices() > 0 && self.n_edges + 1 == self.n_vertices() && self.components().len() == 1
    }

    /// Breadth-first spanning tree of the `m`-hop neighbourhood of `root`.
    ///
    /// Vertices are explored level by level in ascending id order, so each
    /// vertex keeps its lowest-id parent and children come out sorted.
    pub fn bfs_spanning_tree(&self, root: usize, m: usize) -> Result<SpanningTree> {
        self.check_vertex(root)?;
        let mut local = vec![usize::MAX; self.n_vertices()];
        let mut vertex_of = vec![root];
        let mut parent = vec![None];
        local[root] = 0;
        let mut frontier = vec![root];
        for _ in 0..m {
            let mut next = Vec::new();
            for &v in &frontier {
                for &u in &self.adj[v] {
                    if local[u] == usize::MAX {
                        local[u] = vertex_of.len();
                        vertex_of.push(u);
                        parent.push(Some(local[v]));
                        next.push(u);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            next.sort_unstable();
            frontier = next;
        }
        let shape = TreeShape::from_parents(&parent)?;
        Ok(SpanningTree { shape, vertex_of })
    }
}

/// The m-hop neighbourhood of a root, kept in the parent graph's id space.
#[derive(Clone, Debug)]
pub struct RootedSubgraph<'g> {
    parent: &'g InterviewGraph,
    root: usize,
    m: usize,
    depth: Vec<Option<usize>>,
    vertices: Vec<usize>,
    graph: InterviewGraph,
}

impl<'g> RootedSubgraph<'g> {
    pub fn parent(&self) -> &'g InterviewGraph {
        self.parent
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn depth(&self, v: usize) -> Option<usize> {
        self.depth.get(v).copied().flatten()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.depth(v).is_some()
    }

    /// Included vertices, ascending.
    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn graph(&self) -> &InterviewGraph {
        &self.graph
    }

    /// The neighbourhood is connected by construction, so it is a tree iff
    /// it has one edge fewer than vertices.
    pub fn is_tree(&self) -> bool {
        self.graph.n_edges() + 1 == self.vertices.len()
    }

    pub fn into_graph(self) -> InterviewGraph {
        self.graph
    }
}

/// A BFS tree plus the map from tree nodes back to graph vertices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpanningTree {
    pub shape: TreeShape,
    /// `vertex_of[node]` is the graph vertex of tree node `node`; node 0 is the root.
    pub vertex_of: Vec<usize>,
}

impl SpanningTree {
    /// Tree edges as `(parent vertex, child vertex)` pairs in node order.
    pub fn vertex_edges(&self) -> Vec<(usize, usize)> {
        (1..self.vertex_of.len())
            .map(|i| {
                let p = self.shape.parent(i).expect("non-root node");
                (self.vertex_of[p], self.vertex_of[i])
            })
            .collect()
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// The 27-vertex worked example: 14 applicants, 13 firms (1-based names).
    pub(crate) fn worked_example() -> InterviewGraph {
        let e = [
            (1, 1), (1, 2), (1, 3),
            (2, 1), (3, 1), (4, 2), (5, 3), (6, 3),
            (2, 4), (2, 5), (3, 6), (3, 7), (4, 8), (5, 9), (5, 10), (6, 11), (6, 12),
            (7, 4), (8, 4), (9, 5), (10, 8), (11, 11), (12, 12), (13, 12),
            (14, 13), (14, 12), (10, 11), (10, 9), (11, 13),
        ];
        let edges: Vec<(usize, usize)> = e.iter().map(|&(a, j)| (a - 1, j - 1)).collect();
        InterviewGraph::from_edges(14, 13, &edges).unwrap()
    }

    fn cycle4() -> InterviewGraph {
        InterviewGraph::from_edges(2, 2, &[(0, 0), (1, 0), (1, 1), (0, 1)]).unwrap()
    }

    #[test]
    fn adjacency_is_symmetric_and_deduplicated() {
        let g = InterviewGraph::from_edges(2, 3, &[(0, 2), (0, 2), (1, 0), (0, 0)]).unwrap();
        assert_eq!(g.n_edges(), 3);
        assert_eq!(g.neighbors(0), &[2, 4]);
        assert_eq!(g.neighbors(4), &[0]);
        assert!(g.has_edge(0, 2) && !g.has_edge(1, 2));
        assert_eq!(g.edge_list_string(), "0,0\n0,2\n1,0\n");
        assert!(InterviewGraph::from_edges(2, 3, &[(2, 0)]).is_err());
    }

    #[test]
    fn worked_example_neighbourhoods() {
        let g = worked_example();
        assert_eq!(g.n_vertices(), 27);
        let h0 = g.truncate_m_hop(0, 0).unwrap();
        assert_eq!(h0.vertices(), &[0]);
        assert_eq!(h0.graph().n_edges(), 0);
        let h2 = g.truncate_m_hop(0, 2).unwrap();
        assert_eq!(h2.vertices().len(), 9);
        assert_eq!(h2.depth(g.firm_vertex(0)), Some(1));
        assert_eq!(h2.depth(5), Some(2));
        let h3 = g.truncate_m_hop(0, 3).unwrap();
        assert_eq!(h3.vertices().len(), 18);
        assert!(h3.is_tree());
        assert!(!h3.graph().is_tree());
        assert_eq!(h3.graph().n_edges(), 17);
        assert!(g.truncate_m_hop(27, 1).is_err());
    }

    #[test]
    fn path_truncation() {
        // a1 - j1 - a2 - j2
        let g = InterviewGraph::from_edges(2, 2, &[(0, 0), (1, 0), (1, 1)]).unwrap();
        let h = g.truncate_m_hop(0, 2).unwrap();
        assert_eq!(h.vertices(), &[0, 1, 2]);
        assert_eq!(h.graph().n_edges(), 2);
    }

    #[test]
    fn excess_values() {
        assert_eq!(worked_example().truncate_m_hop(0, 3).unwrap().graph().tree_excess(), 0);
        assert_eq!(cycle4().tree_excess(), 1);
        assert_eq!(InterviewGraph::complete(2, 3).tree_excess(), 2);
        assert_eq!(worked_example().tree_excess(), 29 - 27 + 1);
    }

    #[test]
    fn tree_predicate() {
        let path = InterviewGraph::from_edges(2, 2, &[(0, 0), (1, 0), (1, 1)]).unwrap();
        assert!(path.is_tree());
        assert!(!cycle4().is_tree());
        let two = InterviewGraph::from_edges(2, 2, &[(0, 0), (1, 1)]).unwrap();
        assert!(!two.is_tree());
    }

    #[test]
    fn bfs_tree_on_cycle_keeps_lowest_parent() {
        // a1 - j1 - a2 - j2 - a1, root a1: a2 is reachable from j1 (id 2) and j2 (id 3)
        let t = cycle4().bfs_spanning_tree(0, 2).unwrap();
        assert_eq!(t.vertex_of, vec![0, 2, 3, 1]);
        assert_eq!(t.vertex_edges(), vec![(0, 2), (0, 3), (2, 1)]);
        let single = cycle4().bfs_spanning_tree(0, 0).unwrap();
        assert_eq!(single.vertex_of, vec![0]);
        assert_eq!(single.shape.len(), 1);
    }

    #[test]
    fn bfs_tree_of_tree_is_restriction() {
        let g = worked_example();
        let h3 = g.truncate_m_hop(0, 3).unwrap();
        let t = g.bfs_spanning_tree(0, 3).unwrap();
        let mut got = t.vertex_edges();
        for e in got.iter_mut() {
            if e.0 > e.1 {
                *e = (e.1, e.0);
            }
        }
        got.sort_unstable();
        let mut want: Vec<(usize, usize)> = h3
            .graph()
            .edges()
            .into_iter()
            .map(|(a, j)| (a, g.firm_vertex(j)))
            .collect();
        want.sort_unstable();
        assert_eq!(got, want);
    }

    #[test]
    fn nesting_of_neighbourhoods() {
        let g = worked_example();
        for root in 0..g.n_vertices() {
            let mut prev: Vec<usize> = vec![];
            for m in 0..6 {
                let h = g.truncate_m_hop(root, m).unwrap();
                assert!(prev.iter().all(|v| h.contains(*v)));
                prev = h.vertices().to_vec();
            }
        }
    }
}
