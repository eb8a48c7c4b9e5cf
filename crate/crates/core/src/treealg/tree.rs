use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::InterviewGraph;
use crate::prefs::RankedLists;

/// Shape of a rooted tree. Node 0 is the root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeShape {
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    depth: Vec<usize>,
    /// Nodes in breadth-first order from the root.
    order: Vec<usize>,
}

impl TreeShape {
    /// Builds a shape from a parent array; `parent[0]` must be `None` and
    /// every other entry `Some`.
    pub fn from_parents(parent: &[Option<usize>]) -> Result<Self> {
        let n = parent.len();
        if n == 0 {
            return Err(Error::contract("a tree needs at least one node"));
        }
        if parent[0].is_some() {
            return Err(Error::contract("node 0 must be the root"));
        }
        let mut children = vec![Vec::new(); n];
        for (i, p) in parent.iter().enumerate().skip(1) {
            match p {
                Some(p) if *p < n && *p != i => children[*p].push(i),
                Some(p) => {
                    return Err(Error::contract(format!("node {i} has invalid parent {p}")))
                }
                None => return Err(Error::contract(format!("node {i} has no parent"))),
            }
        }
        let mut depth = vec![usize::MAX; n];
        depth[0] = 0;
        let mut order = vec![0];
        let mut head = 0;
        while head < order.len() {
            let v = order[head];
            head += 1;
            for &c in &children[v] {
                depth[c] = depth[v] + 1;
                order.push(c);
            }
        }
        if order.len() != n {
            return Err(Error::contract("parent array contains a cycle"));
        }
        Ok(TreeShape {
            parent: parent.to_vec(),
            children,
            depth,
            order,
        })
    }

    /// Uniformly random recursive tree: node `i` attaches to a uniform earlier node.
    pub fn random_recursive<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let parent: Vec<Option<usize>> = (0..n.max(1))
            .map(|i| if i == 0 { None } else { Some(rng.random_range(0..i)) })
            .collect();
        TreeShape::from_parents(&parent).expect("recursive trees are valid")
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        self.parent[i]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parent
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn depth(&self, i: usize) -> usize {
        self.depth[i]
    }

    pub fn height(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    /// Breadth-first order from the root.
    pub fn bfs_order(&self) -> &[usize] {
        &self.order
    }

    /// Parent (if any) followed by children.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        self.parent[i]
            .into_iter()
            .chain(self.children[i].iter().copied())
            .collect()
    }
}

/// A rooted tree with a strict preference list at every node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RootedPrefTree {
    shape: TreeShape,
    /// Tree neighbours of each node, most preferred first.
    prefs: Vec<Vec<usize>>,
}

/// A tree laid out as a two-sided market: even depths are applicants.
#[derive(Clone, Debug)]
pub struct TreeMarket {
    pub graph: InterviewGraph,
    pub prefs: RankedLists,
    /// Graph vertex of each tree node.
    pub vertex_of: Vec<usize>,
    /// Tree node of each graph vertex.
    pub node_of: Vec<usize>,
}

impl RootedPrefTree {
    pub fn new(shape: TreeShape, prefs: Vec<Vec<usize>>) -> Result<Self> {
        if prefs.len() != shape.len() {
            return Err(Error::contract(format!(
                "{} preference lists for {} nodes",
                prefs.len(),
                shape.len()
            )));
        }
        for (i, list) in prefs.iter().enumerate() {
            let mut want = shape.neighbors(i);
            let mut got = list.clone();
            want.sort_unstable();
            got.sort_unstable();
            if want != got {
                return Err(Error::contract(format!(
                    "preference list of node {i} is {list:?}, expected a permutation of {want:?}"
                )));
            }
        }
        Ok(RootedPrefTree { shape, prefs })
    }

    /// Uniformly random strict preferences on a given shape.
    pub fn random_prefs<R: Rng + ?Sized>(shape: TreeShape, rng: &mut R) -> Self {
        let prefs = (0..shape.len())
            .map(|i| {
                let mut l = shape.neighbors(i);
                l.shuffle(rng);
                l
            })
            .collect();
        RootedPrefTree { shape, prefs }
    }

    pub fn shape(&self) -> &TreeShape {
        &self.shape
    }

    pub fn prefs(&self, i: usize) -> &[usize] {
        &self.prefs[i]
    }

    pub fn len(&self) -> usize {
        self.shape.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shape.is_empty()
    }

    fn rank(&self, i: usize, j: usize) -> usize {
        self.prefs[i]
            .iter()
            .position(|&x| x == j)
            .expect("validated neighbour")
    }

    /// Whether node `i` strictly prefers `x` to `y`.
    pub fn prefers(&self, i: usize, x: usize, y: usize) -> bool {
        self.rank(i, x) < self.rank(i, y)
    }

    /// Hierarchical proposal passing.
    ///
    /// Bottom-up, a node proposes to its parent when it ranks the parent above
    /// every proposal received from its children. Top-down, a node that is
    /// not matched to its parent accepts its favourite child proposal.
    pub fn proposal_passing(&self) -> ProposalTrace {
        let n = self.len();
        let order = self.shape.bfs_order();
        let mut proposes = vec![false; n];
        let mut received: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &i in order.iter().rev() {
            let Some(p) = self.shape.parent(i) else {
                continue;
            };
            if received[i].iter().all(|&w| self.prefers(i, p, w)) {
                proposes[i] = true;
                received[p].push(i);
            }
        }
        for list in received.iter_mut() {
            list.sort_unstable();
        }
        let mut partner = vec![None; n];
        for &i in order {
            let matched_up = match self.shape.parent(i) {
                Some(p) => partner[i] == Some(p),
                None => false,
            };
            if matched_up || received[i].is_empty() {
                continue;
            }
            let best = *received[i]
                .iter()
                .min_by_key(|&&w| self.rank(i, w))
                .expect("non-empty");
            partner[i] = Some(best);
            partner[best] = Some(i);
        }
        ProposalTrace {
            proposes,
            received,
            partner,
        }
    }

    /// Lays the tree out as a market: nodes at even depth become applicants.
    pub fn to_market(&self) -> TreeMarket {
        let n = self.len();
        let even: Vec<usize> = (0..n).filter(|&i| self.shape.depth(i) % 2 == 0).collect();
        let odd: Vec<usize> = (0..n).filter(|&i| self.shape.depth(i) % 2 == 1).collect();
        let n_a = even.len();
        let mut vertex_of = vec![0; n];
        for (k, &i) in even.iter().enumerate() {
            vertex_of[i] = k;
        }
        for (k, &i) in odd.iter().enumerate() {
            vertex_of[i] = n_a + k;
        }
        let mut node_of = vec![0; n];
        for i in 0..n {
            node_of[vertex_of[i]] = i;
        }
        let mut edges = Vec::with_capacity(n.saturating_sub(1));
        for i in 1..n {
            let p = self.shape.parent(i).expect("non-root");
            let (a, f) = if self.shape.depth(i) % 2 == 0 {
                (vertex_of[i], vertex_of[p])
            } else {
                (vertex_of[p], vertex_of[i])
            };
            edges.push((a, f - n_a));
        }
        let graph = InterviewGraph::from_edges(n_a, odd.len(), &edges).expect("tree edges in range");
        let mut lists = vec![Vec::new(); n];
        for i in 0..n {
            lists[vertex_of[i]] = self.prefs[i].iter().map(|&x| vertex_of[x]).collect();
        }
        TreeMarket {
            graph,
            prefs: RankedLists::new(lists),
            vertex_of,
            node_of,
        }
    }
}

/// Output of [`RootedPrefTree::proposal_passing`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProposalTrace {
    /// Whether each node proposed to its parent; `false` at the root.
    pub proposes: Vec<bool>,
    /// Children that proposed to each node, ascending.
    pub received: Vec<Vec<usize>>,
    /// Final partner of each node.
    pub partner: Vec<Option<usize>>,
}

impl ProposalTrace {
    /// Matched pairs `(u, v)` with `u < v`, ascending.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.partner
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.filter(|&p| i < p).map(|p| (i, p)))
            .collect()
    }
}

/// The depth-3 tree rooted at `a1` from the worked example, with node labels.
///
/// Nodes are numbered breadth first: `a1; j1 j2 j3; a2..a6; j4..j12`.
pub fn worked_example_tree() -> (RootedPrefTree, Vec<&'static str>) {
    const LABELS: [&str; 18] = [
        "a1", "j1", "j2", "j3", "a2", "a3", "a4", "a5", "a6", "j4", "j5", "j6", "j7", "j8", "j9",
        "j10", "j11", "j12",
    ];
    let idx = |name: &str| LABELS.iter().position(|&l| l == name).expect("known label");
    let edges = [
        ("a1", "j1"),
        ("a1", "j2"),
        ("a1", "j3"),
        ("j1", "a2"),
        ("j1", "a3"),
        ("j2", "a4"),
        ("j3", "a5"),
        ("j3", "a6"),
        ("a2", "j4"),
        ("a2", "j5"),
        ("a3", "j6"),
        ("a3", "j7"),
        ("a4", "j8"),
        ("a5", "j9"),
        ("a5", "j10"),
        ("a6", "j11"),
        ("a6", "j12"),
    ];
    let mut parent = vec![None; LABELS.len()];
    for (p, c) in edges {
        parent[idx(c)] = Some(idx(p));
    }
    let shape = TreeShape::from_parents(&parent).expect("valid tree");
    let printed: [(&str, &[&str]); 9] = [
        ("a1", &["j1", "j2", "j3"]),
        ("a2", &["j1", "j4", "j5"]),
        ("a3", &["j7", "j6", "j1"]),
        ("a4", &["j8", "j2"]),
        ("a5", &["j10", "j3", "j9"]),
        ("a6", &["j11", "j12", "j3"]),
        ("j1", &["a2", "a3", "a1"]),
        ("j2", &["a4", "a1"]),
        ("j3", &["a5", "a6", "a1"]),
    ];
    let mut prefs: Vec<Vec<usize>> = (0..LABELS.len()).map(|i| shape.neighbors(i)).collect();
    for (who, list) in printed {
        prefs[idx(who)] = list.iter().map(|l| idx(l)).collect();
    }
    (
        RootedPrefTree::new(shape, prefs).expect("valid preferences"),
        LABELS.to_vec(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn label_pairs(trace: &ProposalTrace, labels: &[&str]) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = trace
            .pairs()
            .into_iter()
            .map(|(u, v)| {
                let (x, y) = (labels[u], labels[v]);
                if x.starts_with('a') {
                    (x.to_string(), y.to_string())
                } else {
                    (y.to_string(), x.to_string())
                }
            })
            .collect();
        out.sort();
        out
    }

    #[test]
    fn worked_example_matching() {
        let (tree, labels) = worked_example_tree();
        let trace = tree.proposal_passing();
        let got = label_pairs(&trace, &labels);
        let mut want: Vec<(String, String)> = [
            ("a1", "j2"),
            ("a2", "j1"),
            ("a3", "j7"),
            ("a4", "j8"),
            ("a5", "j10"),
            ("a6", "j11"),
        ]
        .iter()
        .map(|(a, j)| (a.to_string(), j.to_string()))
        .collect();
        want.sort();
        assert_eq!(got, want);
        assert_eq!(trace.partner[3], None, "j3 stays unmatched");
        let to_root: Vec<&str> = trace.received[0].iter().map(|&i| labels[i]).collect();
        assert_eq!(to_root, vec!["j2", "j3"]);
        assert!(trace.proposes[4], "a2 proposes to j1");
        assert!(!trace.proposes[8], "a6 keeps j11 and does not propose");
    }

    #[test]
    fn single_edge_and_star() {
        let shape = TreeShape::from_parents(&[None, Some(0)]).unwrap();
        let t = RootedPrefTree::new(shape, vec![vec![1], vec![0]]).unwrap();
        let tr = t.proposal_passing();
        assert!(tr.proposes[1]);
        assert_eq!(tr.pairs(), vec![(0, 1)]);

        let shape = TreeShape::from_parents(&[None, Some(0), Some(0), Some(0)]).unwrap();
        let t = RootedPrefTree::new(shape, vec![vec![2, 3, 1], vec![0], vec![0], vec![0]]).unwrap();
        let tr = t.proposal_passing();
        assert_eq!(tr.received[0], vec![1, 2, 3]);
        assert_eq!(tr.pairs(), vec![(0, 2)]);
    }

    #[test]
    fn malformed_inputs_are_contract_errors() {
        assert!(TreeShape::from_parents(&[None, Some(2), Some(1)]).is_err());
        assert!(TreeShape::from_parents(&[Some(0)]).is_err());
        let shape = TreeShape::from_parents(&[None, Some(0), Some(0)]).unwrap();
        let e = RootedPrefTree::new(shape.clone(), vec![vec![1], vec![0], vec![0]]).unwrap_err();
        assert!(e.is_contract_violation());
        assert!(RootedPrefTree::new(shape, vec![vec![1, 1], vec![0], vec![0]]).is_err());
    }

    #[test]
    fn proposal_passing_is_stable_on_random_trees() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..300 {
            let n = rng.random_range(1..30);
            let shape = TreeShape::random_recursive(n, &mut rng);
            let t = RootedPrefTree::random_prefs(shape, &mut rng);
            let tr = t.proposal_passing();
            for i in 1..n {
                let p = t.shape().parent(i).unwrap();
                let i_wants = tr.partner[i].is_none_or(|x| t.prefers(i, p, x));
                let p_wants = tr.partner[p].is_none_or(|x| t.prefers(p, i, x));
                assert!(tr.partner[i] == Some(p) || !(i_wants && p_wants));
            }
            for i in 0..n {
                if let Some(x) = tr.partner[i] {
                    assert_eq!(tr.partner[x], Some(i));
                }
            }
        }
    }

    #[test]
    fn market_layout_alternates_sides() {
        let (tree, _) = worked_example_tree();
        let m = tree.to_market();
        assert_eq!(m.graph.n_applicants(), 6);
        assert_eq!(m.graph.n_firms(), 12);
        assert!(m.graph.is_tree());
        assert_eq!(m.vertex_of[0], 0);
        for i in 0..tree.len() {
            assert_eq!(m.node_of[m.vertex_of[i]], i);
        }
    }
}
