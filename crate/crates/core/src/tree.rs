//! Rooted trees with non-negative edge lengths and the metric they induce.
//!
//! A tree is stored in arena style: nodes are dense indices `0..n`, each
//! non-root node knows its parent and the length of the edge to it. Edges
//! are identified with their deeper endpoint, so a tree with `n` nodes has
//! exactly `n - 1` edges and [`Tree::edge_node`] maps every edge to the
//! endpoint farther from the root. The root has depth 1.

use std::collections::VecDeque;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense index of a node within its owning tree.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct NodeId(pub usize);

/// Dense index of an edge within its owning tree. Edge `e` connects
/// [`Tree::edge_node`]`(e)` (the deeper endpoint) to that node's parent.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct EdgeId(pub usize);

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::fmt::Display for EdgeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A rooted tree with non-negative edge lengths and optional node
/// embeddings in some Euclidean space.
///
/// Structure is immutable after construction. Construct via
/// [`TreeBuilder`], [`Tree::from_parents`], or deserialization from the
/// JSON schema (`{"root": r, "nodes": [{"id", "parent", "edge_weight",
/// "embedding"?}, ...]}`).
#[derive(Clone, Serialize, Deserialize)]
#[serde(try_from = "TreeJson", into = "TreeJson")]
pub struct Tree {
    root: NodeId,
    /// `parent[v]` is `None` exactly for the root.
    parent: Vec<Option<NodeId>>,
    /// Children in ascending id order.
    children: Vec<Vec<NodeId>>,
    /// Depth with `depth[root] == 1`.
    depth: Vec<u32>,
    /// `edge_weight[e]` is the length of edge `e`.
    edge_weight: Vec<f64>,
    /// Deeper endpoint of each edge.
    edge_node: Vec<NodeId>,
    /// Edge above each node (`None` for the root).
    node_edge: Vec<Option<EdgeId>>,
    /// Nodes in breadth-first order starting at the root. Reversing this
    /// order visits every child before its parent.
    bfs_order: Vec<NodeId>,
    /// Optional Euclidean embedding per node (all nodes or none).
    embedding: Option<Vec<Vec<f64>>>,
    /// Content hash used to pair edge vectors with the tree they were
    /// computed on.
    fingerprint: u64,
    /// Lazily computed subtree membership bitmasks (`blocks_per_node`
    /// 64-bit blocks per node, flattened).
    #[serde(skip)]
    subtree_masks: OnceLock<Vec<u64>>,
}

impl Tree {
    /// Builds a tree from parent pointers.
    ///
    /// `parents[v]` must be `None` exactly when `v == root`. `weights[v]`
    /// is the length of the edge from `v` to its parent and is ignored for
    /// the root. `embedding`, when given, must hold one finite
    /// equal-dimension coordinate vector per node.
    pub fn from_parents(
        root: usize,
        parents: &[Option<usize>],
        weights: &[f64],
        embedding: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let n = parents.len();
        if n == 0 {
            return Err(Error::structural("tree must have at least one node"));
        }
        if root >= n {
            return Err(Error::structural(format!(
                "root id {root} out of range for {n} nodes"
            )));
        }
        if weights.len() != n {
            return Err(Error::structural(format!(
                "expected {n} edge weights, got {}",
                weights.len()
            )));
        }

        let mut parent = vec![None; n];
        let mut children: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        for (v, &p) in parents.iter().enumerate() {
            match p {
                None => {
                    if v != root {
                        return Err(Error::structural(format!(
                            "node {v} has no parent but is not the root {root}"
                        )));
                    }
                }
                Some(p) => {
                    if v == root {
                        return Err(Error::structural(format!(
                            "root {root} must not have a parent"
                        )));
                    }
                    if p >= n {
                        return Err(Error::structural(format!(
                            "node {v} has out-of-range parent {p}"
                        )));
                    }
                    if p == v {
                        return Err(Error::structural(format!("node {v} is its own parent")));
                    }
                    parent[v] = Some(NodeId(p));
                    children[p].push(NodeId(v));
                }
            }
        }

        // Children were pushed in ascending child id, so each list is sorted.
        let mut depth = vec![0u32; n];
        let mut bfs_order = Vec::with_capacity(n);
        let mut queue = VecDeque::new();
        depth[root] = 1;
        queue.push_back(NodeId(root));
        while let Some(v) = queue.pop_front() {
            bfs_order.push(v);
            for &c in &children[v.0] {
                depth[c.0] = depth[v.0] + 1;
                queue.push_back(c);
            }
        }
        if bfs_order.len() != n {
            return Err(Error::structural(format!(
                "{} of {n} nodes are unreachable from the root (cycle or forest)",
                n - bfs_order.len()
            )));
        }

        let mut edge_weight = Vec::with_capacity(n.saturating_sub(1));
        let mut edge_node = Vec::with_capacity(n.saturating_sub(1));
        let mut node_edge = vec![None; n];
        for v in 0..n {
            if v == root {
                continue;
            }
            let w = weights[v];
            if !w.is_finite() || w < 0.0 {
                return Err(Error::domain(format!(
                    "edge above node {v} has invalid weight {w}"
                )));
            }
            if w == 0.0 {
                log::warn!("edge above node {v} has zero length; nodes collapse in the metric");
            }
            node_edge[v] = Some(EdgeId(edge_node.len()));
            edge_node.push(NodeId(v));
            edge_weight.push(w);
        }

        if let Some(emb) = &embedding {
            if emb.len() != n {
                return Err(Error::structural(format!(
                    "expected {n} embeddings, got {}",
                    emb.len()
                )));
            }
            let dim = emb[0].len();
            for (v, coords) in emb.iter().enumerate() {
                if coords.len() != dim {
                    return Err(Error::structural(format!(
                        "node {v} embedding has dimension {} but node 0 has {dim}",
                        coords.len()
                    )));
                }
                if coords.iter().any(|x| !x.is_finite()) {
                    return Err(Error::domain(format!(
                        "node {v} embedding contains a non-finite coordinate"
                    )));
                }
            }
        }

        let fingerprint = fingerprint_of(root, &parent, &edge_weight);
        Ok(Tree {
            root: NodeId(root),
            parent,
            children,
            depth,
            edge_weight,
            edge_node,
            node_edge,
            bfs_order,
            embedding,
            fingerprint,
            subtree_masks: OnceLock::new(),
        })
    }

    /// Number of nodes.
    pub fn node_count(&self) -> usize {
        self.parent.len()
    }

    /// Number of edges (`node_count() - 1`).
    pub fn edge_count(&self) -> usize {
        self.edge_node.len()
    }

    /// The root node.
    pub fn root(&self) -> NodeId {
        self.root
    }

    /// Parent of `v`, or `None` for the root.
    pub fn parent(&self, v: NodeId) -> Option<NodeId> {
        self.parent[v.0]
    }

    /// Children of `v` in ascending id order.
    pub fn children(&self, v: NodeId) -> &[NodeId] {
        &self.children[v.0]
    }

    /// Depth of `v`; the root has depth 1.
    pub fn depth(&self, v: NodeId) -> u32 {
        self.depth[v.0]
    }

    /// Length of edge `e`.
    pub fn edge_weight(&self, e: EdgeId) -> f64 {
        self.edge_weight[e.0]
    }

    /// Deeper endpoint of edge `e`.
    pub fn edge_node(&self, e: EdgeId) -> NodeId {
        self.edge_node[e.0]
    }

    /// Upper endpoint of edge `e` (the parent of [`Tree::edge_node`]).
    pub fn edge_parent(&self, e: EdgeId) -> NodeId {
        self.parent[self.edge_node(e).0].expect("edge endpoint always has a parent")
    }

    /// Edge connecting `v` to its parent, or `None` for the root.
    pub fn node_edge(&self, v: NodeId) -> Option<EdgeId> {
        self.node_edge[v.0]
    }

    /// Nodes in breadth-first order from the root. Iterating the reverse
    /// of this slice visits children before parents.
    pub fn bfs_order(&self) -> &[NodeId] {
        &self.bfs_order
    }

    /// Euclidean embedding of `v`, if the tree carries embeddings.
    pub fn embedding(&self, v: NodeId) -> Option<&[f64]> {
        self.embedding.as_ref().map(|emb| emb[v.0].as_slice())
    }

    /// Dimension of the node embeddings, if present.
    pub fn embedding_dim(&self) -> Option<usize> {
        self.embedding.as_ref().map(|emb| emb[0].len())
    }

    /// Content hash of the tree topology and edge weights. Two trees with
    /// equal fingerprints are structurally identical for the purposes of
    /// pairing with [`crate::distance::EdgeVector`]s.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub(crate) fn check_node(&self, v: NodeId) -> Result<()> {
        if v.0 >= self.node_count() {
            return Err(Error::structural(format!(
                "node {v} out of range for tree with {} nodes",
                self.node_count()
            )));
        }
        Ok(())
    }

    fn blocks_per_node(&self) -> usize {
        self.node_count().div_ceil(64)
    }

    fn masks(&self) -> &[u64] {
        self.subtree_masks.get_or_init(|| {
            let n = self.node_count();
            let blocks = self.blocks_per_node();
            let mut masks = vec![0u64; n * blocks];
            // Children precede parents when BFS order is reversed, so each
            // node's mask is complete before it is folded into its parent.
            for &v in self.bfs_order.iter().rev() {
                masks[v.0 * blocks + v.0 / 64] |= 1u64 << (v.0 % 64);
                if let Some(p) = self.parent[v.0] {
                    for b in 0..blocks {
                        let bits = masks[v.0 * blocks + b];
                        masks[p.0 * blocks + b] |= bits;
                    }
                }
            }
            masks
        })
    }

    /// Membership mask of the subtree rooted at `v` (the set of nodes whose
    /// path to the root passes through `v`, including `v` itself).
    pub fn subtree(&self, v: NodeId) -> Result<SubtreeMask<'_>> {
        self.check_node(v)?;
        let blocks = self.blocks_per_node();
        let masks = self.masks();
        Ok(SubtreeMask {
            bits: &masks[v.0 * blocks..(v.0 + 1) * blocks],
            node_count: self.node_count(),
        })
    }

    /// Edges on the unique path between `a` and `b`, ordered from `a`'s end
    /// to `b`'s end. Empty when `a == b`.
    pub fn path(&self, a: NodeId, b: NodeId) -> Result<Vec<EdgeId>> {
        self.check_node(a)?;
        self.check_node(b)?;
        let mut from_a = Vec::new();
        let mut from_b = Vec::new();
        let (mut x, mut y) = (a, b);
        while self.depth[x.0] > self.depth[y.0] {
            from_a.push(self.node_edge[x.0].expect("non-root node has an edge"));
            x = self.parent[x.0].expect("non-root node has a parent");
        }
        while self.depth[y.0] > self.depth[x.0] {
            from_b.push(self.node_edge[y.0].expect("non-root node has an edge"));
            y = self.parent[y.0].expect("non-root node has a parent");
        }
        while x != y {
            from_a.push(self.node_edge[x.0].expect("non-root node has an edge"));
            from_b.push(self.node_edge[y.0].expect("non-root node has an edge"));
            x = self.parent[x.0].expect("non-root node has a parent");
            y = self.parent[y.0].expect("non-root node has a parent");
        }
        from_a.extend(from_b.into_iter().rev());
        Ok(from_a)
    }

    /// Tree-metric distance between `a` and `b`: the total length of the
    /// edges on the path connecting them.
    pub fn distance(&self, a: NodeId, b: NodeId) -> Result<f64> {
        self.check_node(a)?;
        self.check_node(b)?;
        let mut total = 0.0;
        let (mut x, mut y) = (a, b);
        while self.depth[x.0] > self.depth[y.0] {
            total += self.edge_weight[self.node_edge[x.0].unwrap().0];
            x = self.parent[x.0].unwrap();
        }
        while self.depth[y.0] > self.depth[x.0] {
            total += self.edge_weight[self.node_edge[y.0].unwrap().0];
            y = self.parent[y.0].unwrap();
        }
        while x != y {
            total += self.edge_weight[self.node_edge[x.0].unwrap().0];
            total += self.edge_weight[self.node_edge[y.0].unwrap().0];
            x = self.parent[x.0].unwrap();
            y = self.parent[y.0].unwrap();
        }
        Ok(total)
    }

    /// Distances from `start` to every node, computed in one sweep.
    pub fn distances_from(&self, start: NodeId) -> Result<Vec<f64>> {
        self.check_node(start)?;
        let n = self.node_count();
        let mut dist = vec![f64::INFINITY; n];
        let mut stack = vec![start];
        dist[start.0] = 0.0;
        while let Some(v) = stack.pop() {
            let d = dist[v.0];
            if let (Some(p), Some(e)) = (self.parent[v.0], self.node_edge[v.0]) {
                if dist[p.0].is_infinite() {
                    dist[p.0] = d + self.edge_weight[e.0];
                    stack.push(p);
                }
            }
            for &c in &self.children[v.0] {
                if dist[c.0].is_infinite() {
                    dist[c.0] = d + self.edge_weight[self.node_edge[c.0].unwrap().0];
                    stack.push(c);
                }
            }
        }
        Ok(dist)
    }

    /// Largest distance between any two nodes (double-sweep algorithm).
    pub fn diameter(&self) -> f64 {
        let far = |from: NodeId| -> (NodeId, f64) {
            let dist = self.distances_from(from).expect("start node is valid");
            let mut best = (from, 0.0);
            for (v, &d) in dist.iter().enumerate() {
                if d > best.1 {
                    best = (NodeId(v), d);
                }
            }
            best
        };
        let (a, _) = far(self.root);
        far(a).1
    }

    /// Serializes the tree to pretty-printed JSON.
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serialization cannot fail")
    }

    /// Parses a tree from its JSON representation.
    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|source| Error::Json {
            context: "tree".to_string(),
            source,
        })
    }
}

impl PartialEq for Tree {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root
            && self.parent == other.parent
            && self.edge_weight == other.edge_weight
            && self.embedding == other.embedding
    }
}

impl std::fmt::Debug for Tree {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tree")
            .field("root", &self.root)
            .field("node_count", &self.node_count())
            .field("edge_count", &self.edge_count())
            .field("embedding_dim", &self.embedding_dim())
            .finish()
    }
}

/// Subtree membership test backed by a bitmask.
pub struct SubtreeMask<'a> {
    bits: &'a [u64],
    node_count: usize,
}

impl SubtreeMask<'_> {
    /// Whether `v` lies in the subtree.
    pub fn contains(&self, v: NodeId) -> bool {
        v.0 < self.node_count && self.bits[v.0 / 64] >> (v.0 % 64) & 1 == 1
    }

    /// Number of nodes in the subtree.
    pub fn len(&self) -> usize {
        self.bits.iter().map(|b| b.count_ones() as usize).sum()
    }

    /// Whether the subtree is empty (never true for a valid node).
    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&b| b == 0)
    }

    /// Iterates the member nodes in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.bits.iter().enumerate().flat_map(|(block, &bits)| {
            (0..64)
                .filter(move |i| bits >> i & 1 == 1)
                .map(move |i| NodeId(block * 64 + i))
        })
    }
}

/// Incremental tree constructor: start from a root, attach children, then
/// [`TreeBuilder::build`]. Node ids are handed out in creation order.
pub struct TreeBuilder {
    parents: Vec<Option<usize>>,
    weights: Vec<f64>,
    embedding: Option<Vec<Vec<f64>>>,
}

impl TreeBuilder {
    /// Starts a tree whose root is node 0, without embeddings.
    pub fn new() -> Self {
        TreeBuilder {
            parents: vec![None],
            weights: vec![0.0],
            embedding: None,
        }
    }

    /// Starts a tree whose root is node 0 and carries `root_embedding`.
    pub fn with_root_embedding(root_embedding: Vec<f64>) -> Self {
        TreeBuilder {
            parents: vec![None],
            weights: vec![0.0],
            embedding: Some(vec![root_embedding]),
        }
    }

    /// Attaches a new node under `parent` with the given edge length,
    /// returning its id.
    pub fn add_child(&mut self, parent: NodeId, weight: f64) -> NodeId {
        let id = NodeId(self.parents.len());
        self.parents.push(Some(parent.0));
        self.weights.push(weight);
        id
    }

    /// Attaches a new embedded node under `parent`, returning its id.
    /// Valid only for builders started with
    /// [`TreeBuilder::with_root_embedding`].
    pub fn add_embedded_child(
        &mut self,
        parent: NodeId,
        weight: f64,
        embedding: Vec<f64>,
    ) -> NodeId {
        let id = self.add_child(parent, weight);
        self.embedding
            .as_mut()
            .expect("builder was created without embeddings")
            .push(embedding);
        id
    }

    /// Number of nodes added so far.
    pub fn node_count(&self) -> usize {
        self.parents.len()
    }

    /// Validates and freezes the tree.
    pub fn build(self) -> Result<Tree> {
        Tree::from_parents(0, &self.parents, &self.weights, self.embedding)
    }
}

impl Default for TreeBuilder {
    fn default() -> Self {
        Self::new()
    }
}

/// JSON wire format: `{"root": r, "nodes": [{"id", "parent",
/// "edge_weight", "embedding"?}]}`. Nodes may appear in any order but ids
/// must form `0..n`.
#[derive(Serialize, Deserialize)]
struct TreeJson {
    root: usize,
    nodes: Vec<TreeNodeJson>,
}

#[derive(Serialize, Deserialize)]
struct TreeNodeJson {
    id: usize,
    parent: Option<usize>,
    edge_weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedding: Option<Vec<f64>>,
}

impl From<Tree> for TreeJson {
    fn from(tree: Tree) -> Self {
        let nodes = (0..tree.node_count())
            .map(|v| TreeNodeJson {
                id: v,
                parent: tree.parent[v].map(|p| p.0),
                edge_weight: tree.node_edge[v]
                    .map(|e| tree.edge_weight[e.0])
                    .unwrap_or(0.0),
                embedding: tree.embedding.as_ref().map(|emb| emb[v].clone()),
            })
            .collect();
        TreeJson {
            root: tree.root.0,
            nodes,
        }
    }
}

impl TryFrom<TreeJson> for Tree {
    type Error = Error;

    fn try_from(json: TreeJson) -> Result<Self> {
        let n = json.nodes.len();
        if n == 0 {
            return Err(Error::structural("tree JSON has no nodes"));
        }
        let mut parents = vec![None; n];
        let mut weights = vec![0.0; n];
        let mut embeddings: Vec<Option<Vec<f64>>> = vec![None; n];
        let mut seen = vec![false; n];
        for node in json.nodes {
            if node.id >= n {
                return Err(Error::structural(format!(
                    "tree JSON: node id {} out of range for {n} nodes",
                    node.id
                )));
            }
            if seen[node.id] {
                return Err(Error::structural(format!(
                    "tree JSON: duplicate node id {}",
                    node.id
                )));
            }
            seen[node.id] = true;
            parents[node.id] = node.parent;
            weights[node.id] = node.edge_weight;
            embeddings[node.id] = node.embedding;
        }
        let with_embedding = embeddings.iter().filter(|e| e.is_some()).count();
        let embedding = if with_embedding == 0 {
            None
        } else if with_embedding == n {
            Some(embeddings.into_iter().map(|e| e.unwrap()).collect())
        } else {
            return Err(Error::structural(
                "tree JSON: embeddings must be present on all nodes or none",
            ));
        };
        Tree::from_parents(json.root, &parents, &weights, embedding)
    }
}

fn fingerprint_of(root: usize, parent: &[Option<NodeId>], edge_weight: &[f64]) -> u64 {
    // FNV-1a over the structural content; HashMap's default hasher is
    // randomized per process, which would break cross-run determinism.
    const OFFSET: u64 = 0xcbf29ce484222325;
    const PRIME: u64 = 0x100000001b3;
    let mut h = OFFSET;
    let mut eat = |x: u64| {
        for byte in x.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(PRIME);
        }
    };
    eat(root as u64);
    eat(parent.len() as u64);
    for p in parent {
        eat(p.map(|p| p.0 as u64).unwrap_or(u64::MAX));
    }
    for &w in edge_weight {
        eat(w.to_bits());
    }
    h
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// The worked reconstruction example: root r with children x1,x2,x3;
    /// x4 under x1; x5,x6 under x2; x7 under x5. Node ids: r=0, x_i=i.
    /// Edge e_i is the edge whose deeper endpoint is x_i.
    pub(crate) fn example_tree(weights: &[f64; 7]) -> Tree {
        let parents = [
            None,
            Some(0),
            Some(0),
            Some(0),
            Some(1),
            Some(2),
            Some(2),
            Some(5),
        ];
        let mut w = vec![0.0; 8];
        w[1..8].copy_from_slice(weights);
        Tree::from_parents(0, &parents, &w, None).unwrap()
    }

    fn unit_example() -> Tree {
        example_tree(&[1.0; 7])
    }

    #[test]
    fn depths_follow_levels() {
        let t = unit_example();
        assert_eq!(t.depth(NodeId(0)), 1);
        assert_eq!(t.depth(NodeId(1)), 2);
        assert_eq!(t.depth(NodeId(2)), 2);
        assert_eq!(t.depth(NodeId(3)), 2);
        assert_eq!(t.depth(NodeId(4)), 3);
        assert_eq!(t.depth(NodeId(5)), 3);
        assert_eq!(t.depth(NodeId(6)), 3);
        assert_eq!(t.depth(NodeId(7)), 4);
    }

    #[test]
    fn edges_point_to_deeper_endpoint() {
        let t = unit_example();
        for e in 0..t.edge_count() {
            let e = EdgeId(e);
            let v = t.edge_node(e);
            let u = t.edge_parent(e);
            assert_eq!(t.depth(v), t.depth(u) + 1);
            assert_eq!(t.node_edge(v), Some(e));
        }
        assert_eq!(t.node_edge(t.root()), None);
    }

    #[test]
    fn subtree_of_x2_holds_its_descendants() {
        let t = unit_example();
        let mask = t.subtree(NodeId(2)).unwrap();
        let members: Vec<usize> = mask.iter().map(|v| v.0).collect();
        assert_eq!(members, vec![2, 5, 6, 7]);
        assert_eq!(mask.len(), 4);
        assert!(mask.contains(NodeId(5)));
        assert!(!mask.contains(NodeId(1)));
    }

    #[test]
    fn subtree_of_root_is_everything() {
        let t = unit_example();
        assert_eq!(t.subtree(t.root()).unwrap().len(), t.node_count());
    }

    #[test]
    fn path_from_root_to_x4_crosses_e1_e4() {
        let t = unit_example();
        // Edge ids follow non-root node order: edge k-1 enters node k here.
        let path = t.path(NodeId(0), NodeId(4)).unwrap();
        let entered: Vec<usize> = path.iter().map(|&e| t.edge_node(e).0).collect();
        assert_eq!(entered, vec![1, 4]);
    }

    #[test]
    fn path_is_symmetric_and_empty_on_equal_nodes() {
        let t = unit_example();
        let ab = t.path(NodeId(4), NodeId(7)).unwrap();
        let ba = t.path(NodeId(7), NodeId(4)).unwrap();
        let rev: Vec<EdgeId> = ba.into_iter().rev().collect();
        assert_eq!(ab, rev);
        assert!(t.path(NodeId(3), NodeId(3)).unwrap().is_empty());
    }

    #[test]
    fn distance_adds_edge_lengths_along_paths() {
        let t = example_tree(&[0.5, 2.0, 1.0, 3.0, 0.25, 4.0, 1.5]);
        // x4 -> x1 -> r -> x2 -> x5 -> x7: 3 + 0.5 + 2 + 0.25 + 1.5
        assert_eq!(t.distance(NodeId(4), NodeId(7)).unwrap(), 7.25);
        assert_eq!(t.distance(NodeId(7), NodeId(4)).unwrap(), 7.25);
        assert_eq!(t.distance(NodeId(6), NodeId(6)).unwrap(), 0.0);
        // Consistency with the one-sweep variant.
        let from4 = t.distances_from(NodeId(4)).unwrap();
        for (v, swept) in from4.iter().enumerate() {
            let d = t.distance(NodeId(4), NodeId(v)).unwrap();
            assert!((swept - d).abs() < 1e-12);
        }
    }

    #[test]
    fn diameter_matches_brute_force() {
        let t = example_tree(&[0.5, 2.0, 1.0, 3.0, 0.25, 4.0, 1.5]);
        let mut best: f64 = 0.0;
        for a in 0..t.node_count() {
            for b in 0..t.node_count() {
                best = best.max(t.distance(NodeId(a), NodeId(b)).unwrap());
            }
        }
        assert_eq!(t.diameter(), best);
    }

    #[test]
    fn single_node_tree_is_valid() {
        let t = Tree::from_parents(0, &[None], &[0.0], None).unwrap();
        assert_eq!(t.node_count(), 1);
        assert_eq!(t.edge_count(), 0);
        assert_eq!(t.depth(t.root()), 1);
        assert_eq!(t.diameter(), 0.0);
    }

    #[test]
    fn cycle_is_rejected() {
        // 0 is the root; 1 and 2 point at each other.
        let err =
            Tree::from_parents(0, &[None, Some(2), Some(1)], &[0.0, 1.0, 1.0], None).unwrap_err();
        assert!(matches!(err, Error::Structural(_)), "got {err:?}");
    }

    #[test]
    fn negative_weight_is_rejected() {
        let err = Tree::from_parents(0, &[None, Some(0)], &[0.0, -1.0], None).unwrap_err();
        assert!(matches!(err, Error::Domain(_)), "got {err:?}");
    }

    #[test]
    fn second_parentless_node_is_rejected() {
        let err = Tree::from_parents(0, &[None, None], &[0.0, 1.0], None).unwrap_err();
        assert!(matches!(err, Error::Structural(_)), "got {err:?}");
    }

    #[test]
    fn mixed_embeddings_are_rejected_in_json() {
        let s = r#"{"root":0,"nodes":[
            {"id":0,"parent":null,"edge_weight":0.0,"embedding":[1.0]},
            {"id":1,"parent":0,"edge_weight":1.0}
        ]}"#;
        let err = Tree::from_json_str(s).unwrap_err();
        let Error::Json { source, .. } = &err else {
            panic!("expected a JSON error, got {err:?}");
        };
        let msg = source.to_string();
        assert!(msg.contains("embedding"), "unexpected message: {msg}");
    }

    #[test]
    fn json_round_trip_is_identical() {
        let t = example_tree(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7]);
        let s = t.to_json_string();
        let back = Tree::from_json_str(&s).unwrap();
        assert_eq!(t, back);
        assert_eq!(t.fingerprint(), back.fingerprint());
        assert_eq!(s, back.to_json_string());
    }

    #[test]
    fn json_accepts_shuffled_node_order() {
        let s = r#"{"root":1,"nodes":[
            {"id":0,"parent":1,"edge_weight":2.5},
            {"id":2,"parent":1,"edge_weight":0.5},
            {"id":1,"parent":null,"edge_weight":0.0}
        ]}"#;
        let t = Tree::from_json_str(s).unwrap();
        assert_eq!(t.root(), NodeId(1));
        assert_eq!(t.distance(NodeId(0), NodeId(2)).unwrap(), 3.0);
    }

    #[test]
    fn fingerprint_tracks_weights_and_shape() {
        let a = example_tree(&[1.0; 7]);
        let b = example_tree(&[1.0; 7]);
        let c = example_tree(&[1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 2.0]);
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn builder_assigns_ids_in_creation_order() {
        let mut b = TreeBuilder::new();
        let root = NodeId(0);
        let c1 = b.add_child(root, 1.0);
        let c2 = b.add_child(root, 2.0);
        let g = b.add_child(c1, 0.5);
        assert_eq!((c1, c2, g), (NodeId(1), NodeId(2), NodeId(3)));
        let t = b.build().unwrap();
        assert_eq!(t.children(root), &[NodeId(1), NodeId(2)]);
        assert_eq!(t.distance(g, c2).unwrap(), 3.5);
    }
}
