//! Fully-persistent enumerable sets: an append-only DAG of singleton,
//! product, and union nodes with constant-time builders and
//! output-linear-delay enumeration.
//!
//! A [`SetHandle`] denotes a set of strings over output letters. The empty
//! string is tracked by a flag on the handle; the node layer below never
//! represents it. Nodes are never mutated after creation, so handles stay
//! valid across any number of later operations.

use std::collections::BTreeSet;

/// One letter of an output string: a string position paired with an
/// annotation id.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct OutputLetter {
    pub pos: u32,
    pub ann: u32,
}

/// An output string.
pub type OutputString = Vec<OutputLetter>;

pub type NodeId = u32;

#[derive(Clone, Copy, Debug)]
enum Node {
    Singleton(OutputLetter),
    Product(NodeId, NodeId),
    /// First child is always a singleton or product node.
    Union2(NodeId, NodeId),
    /// Internal only; never the referent of a handle.
    Union3(NodeId, NodeId, NodeId),
}

/// Handle to an enumerable set: a node (or none, for the empty set at the
/// node layer) plus a flag for the empty string.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct SetHandle {
    node: Option<NodeId>,
    has_eps: bool,
}

impl SetHandle {
    pub fn is_empty(&self) -> bool {
        self.node.is_none() && !self.has_eps
    }

    pub fn has_eps(&self) -> bool {
        self.has_eps
    }

    pub fn node(&self) -> Option<NodeId> {
        self.node
    }
}

/// The empty set.
pub fn make_empty() -> SetHandle {
    SetHandle { node: None, has_eps: false }
}

/// The singleton set containing the empty string.
pub fn make_eps() -> SetHandle {
    SetHandle { node: None, has_eps: true }
}

/// Append-only arena of set nodes.
///
/// The build phase is single-writer. Afterwards the store can be shared
/// freely: enumeration takes `&NodeStore`, so any number of iterators can
/// run concurrently over a frozen store.
#[derive(Default)]
pub struct NodeStore {
    nodes: Vec<Node>,
    debug_checks: bool,
    debug_node_limit: usize,
}

impl NodeStore {
    pub fn new() -> Self {
        NodeStore { nodes: Vec::new(), debug_checks: false, debug_node_limit: 0 }
    }

    /// A store that re-enumerates operands on every union and product to
    /// verify the disjointness preconditions, as long as the store holds at
    /// most `node_limit` nodes. Too slow for anything but tests.
    pub fn with_debug_checks(node_limit: usize) -> Self {
        NodeStore { nodes: Vec::new(), debug_checks: true, debug_node_limit: node_limit }
    }

    /// Number of nodes created so far. A fresh store has zero; the node for
    /// the empty set is never materialized.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn push(&mut self, n: Node) -> NodeId {
        let id = self.nodes.len() as NodeId;
        self.nodes.push(n);
        id
    }

    fn node(&self, id: NodeId) -> Node {
        self.nodes[id as usize]
    }

    /// The singleton set holding the one-letter string `letter`.
    pub fn singleton(&mut self, letter: OutputLetter) -> SetHandle {
        let id = self.push(Node::Singleton(letter));
        SetHandle { node: Some(id), has_eps: false }
    }

    /// Union of two sets. The operands must be disjoint; this is not
    /// checked outside of debug mode, and a violation surfaces as duplicate
    /// outputs during enumeration.
    pub fn union(&mut self, a: SetHandle, b: SetHandle) -> SetHandle {
        if self.debug_checks {
            self.assert_disjoint_union(a, b);
        }
        let node = match (a.node, b.node) {
            (None, n) | (n, None) => n,
            (Some(x), Some(y)) => Some(self.union_nodes(x, y)),
        };
        SetHandle { node, has_eps: a.has_eps || b.has_eps }
    }

    fn union_nodes(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let a_is_union = matches!(self.node(a), Node::Union2(..));
        let b_is_union = matches!(self.node(b), Node::Union2(..));
        match (a_is_union, b_is_union) {
            (false, _) => self.push(Node::Union2(a, b)),
            (true, false) => self.push(Node::Union2(b, a)),
            (true, true) => {
                let Node::Union2(a1, a2) = self.node(a) else { unreachable!() };
                let Node::Union2(b1, b2) = self.node(b) else { unreachable!() };
                let inner = self.push(Node::Union3(b1, a2, b2));
                self.push(Node::Union2(a1, inner))
            }
        }
    }

    /// Concatenation product of two sets. The letters occurring in the two
    /// operands must be disjoint (not checked outside of debug mode).
    ///
    /// The node layer realizes the identity
    /// `S1 . S2 = (S1\eps)(S2\eps) + [eps in S2](S1\eps) + [eps in S1](S2\eps)`
    /// with the empty-string flag carrying `[eps in S1 and eps in S2]`.
    pub fn product(&mut self, a: SetHandle, b: SetHandle) -> SetHandle {
        if self.debug_checks {
            self.assert_disjoint_product(a, b);
        }
        let prod = match (a.node, b.node) {
            (Some(x), Some(y)) => Some(self.push(Node::Product(x, y))),
            _ => None,
        };
        let with_b = match (prod, if b.has_eps { a.node } else { None }) {
            (None, n) | (n, None) => n,
            (Some(x), Some(y)) => Some(self.union_nodes(x, y)),
        };
        let node = match (with_b, if a.has_eps { b.node } else { None }) {
            (None, n) | (n, None) => n,
            (Some(x), Some(y)) => Some(self.union_nodes(x, y)),
        };
        SetHandle { node, has_eps: a.has_eps && b.has_eps }
    }

    /// Structural invariant scan: every union node's first child is a
    /// singleton or product node, and no product or union child is missing.
    pub fn check_invariants(&self) -> bool {
        self.nodes.iter().all(|n| match *n {
            Node::Singleton(_) => true,
            Node::Product(a, b) => (a as usize) < self.nodes.len() && (b as usize) < self.nodes.len(),
            Node::Union2(first, _) | Node::Union3(first, _, _) => {
                matches!(self.node(first), Node::Singleton(_) | Node::Product(..))
            }
        })
    }

    /// Naive recursive expansion of a handle's set; test-grade oracle for
    /// the enumeration path and backing for debug-mode disjointness checks.
    pub fn expand(&self, h: SetHandle) -> BTreeSet<OutputString> {
        let mut out = BTreeSet::new();
        if h.has_eps {
            out.insert(Vec::new());
        }
        if let Some(n) = h.node {
            self.expand_node(n, &mut out);
        }
        out
    }

    fn expand_node(&self, n: NodeId, out: &mut BTreeSet<OutputString>) {
        match self.node(n) {
            Node::Singleton(x) => {
                out.insert(vec![x]);
            }
            Node::Product(a, b) => {
                let mut left = BTreeSet::new();
                self.expand_node(a, &mut left);
                let mut right = BTreeSet::new();
                self.expand_node(b, &mut right);
                for l in &left {
                    for r in &right {
                        let mut s = l.clone();
                        s.extend_from_slice(r);
                        out.insert(s);
                    }
                }
            }
            Node::Union2(a, b) => {
                self.expand_node(a, out);
                self.expand_node(b, out);
            }
            Node::Union3(a, b, c) => {
                self.expand_node(a, out);
                self.expand_node(b, out);
                self.expand_node(c, out);
            }
        }
    }

    fn assert_disjoint_union(&self, a: SetHandle, b: SetHandle) {
        if self.nodes.len() > self.debug_node_limit {
            return;
        }
        let sa = self.expand(a);
        let sb = self.expand(b);
        assert!(sa.is_disjoint(&sb), "union precondition violated: operands share a string");
    }

    fn assert_disjoint_product(&self, a: SetHandle, b: SetHandle) {
        if self.nodes.len() > self.debug_node_limit {
            return;
        }
        let letters = |s: &BTreeSet<OutputString>| -> BTreeSet<OutputLetter> {
            s.iter().flatten().copied().collect()
        };
        let la = letters(&self.expand(a));
        let lb = letters(&self.expand(b));
        assert!(la.is_disjoint(&lb), "product precondition violated: operands share a letter");
    }

    /// Debug dump: one line per node, `id KIND children...`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (i, n) in self.nodes.iter().enumerate() {
            match *n {
                Node::Singleton(x) => out.push_str(&format!("{} SINGLETON ({},{})\n", i, x.pos, x.ann)),
                Node::Product(a, b) => out.push_str(&format!("{} PROD {} {}\n", i, a, b)),
                Node::Union2(a, b) => out.push_str(&format!("{} UNION {} {}\n", i, a, b)),
                Node::Union3(a, b, c) => out.push_str(&format!("{} UNION3 {} {} {}\n", i, a, b, c)),
            }
        }
        out
    }

    /// Enumerate the strings of `h` with output-linear delay. The empty
    /// string comes first when present; after that, exits are visited
    /// depth-first with the left factor of each product varying fastest.
    pub fn enumerate(&self, h: SetHandle) -> EnumIter<'_> {
        EnumIter {
            store: self,
            eps_pending: h.has_eps,
            root_exits: h.node.map(|n| ExitIter::new(n)),
            tree: None,
            done: false,
            steps: 0,
        }
    }
}

/// Streaming enumeration of the exits of a node: the singleton and product
/// nodes reachable through union nodes only. Initialization is constant
/// time and each exit costs at most two stack pops.
#[derive(Clone, Debug)]
pub struct ExitIter {
    stack: Vec<NodeId>,
    pops: u64,
}

impl ExitIter {
    pub fn new(root: NodeId) -> Self {
        ExitIter { stack: vec![root], pops: 0 }
    }

    pub fn has_pending(&self) -> bool {
        !self.stack.is_empty()
    }

    /// Total pops performed, for delay instrumentation.
    pub fn pops(&self) -> u64 {
        self.pops
    }

    pub fn next(&mut self, store: &NodeStore) -> Option<NodeId> {
        while let Some(v) = self.stack.pop() {
            self.pops += 1;
            match store.node(v) {
                Node::Singleton(_) | Node::Product(..) => return Some(v),
                Node::Union2(a, b) => {
                    self.stack.push(b);
                    self.stack.push(a);
                }
                Node::Union3(a, b, c) => {
                    self.stack.push(c);
                    self.stack.push(b);
                    self.stack.push(a);
                }
            }
        }
        None
    }

    fn stack_len(&self) -> usize {
        self.stack.len()
    }
}

/// Enumeration-tree node: either a pointer into the DAG (at a singleton,
/// or at a product that the next unfolding phase will expand) or a
/// concatenation node mirroring a product.
enum TreeNode {
    Leaf(NodeId),
    Concat {
        dag: NodeId,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
        exits_left: ExitIter,
        exits_right: ExitIter,
    },
}

impl TreeNode {
    fn count_nodes(&self) -> usize {
        match self {
            TreeNode::Leaf(_) => 1,
            TreeNode::Concat { left, right, .. } => 1 + left.count_nodes() + right.count_nodes(),
        }
    }

    fn stack_total(&self) -> usize {
        match self {
            TreeNode::Leaf(_) => 0,
            TreeNode::Concat { left, right, exits_left, exits_right, .. } => {
                exits_left.stack_len() + exits_right.stack_len() + left.stack_total() + right.stack_total()
            }
        }
    }
}

/// Iterator over the strings of an enumerable set.
pub struct EnumIter<'s> {
    store: &'s NodeStore,
    eps_pending: bool,
    root_exits: Option<ExitIter>,
    tree: Option<TreeNode>,
    done: bool,
    steps: u64,
}

impl<'s> EnumIter<'s> {
    /// Cumulative count of primitive enumeration steps (stack pops and
    /// tree-node visits). The difference between two outputs is the delay.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Live working-state size: tree nodes plus exit-iterator stack entries.
    pub fn state_size(&self) -> usize {
        let tree = self.tree.as_ref().map_or(0, |t| t.count_nodes() + t.stack_total());
        tree + self.root_exits.as_ref().map_or(0, |e| e.stack_len())
    }

    fn unfold(&mut self, t: &mut TreeNode) {
        self.steps += 1;
        if let TreeNode::Leaf(n) = t {
            if let Node::Product(n1, n2) = self.store.node(*n) {
                let mut exits_left = ExitIter::new(n1);
                let mut exits_right = ExitIter::new(n2);
                let e1 = exits_left.next(self.store).expect("product child has an exit");
                let e2 = exits_right.next(self.store).expect("product child has an exit");
                self.steps += exits_left.pops() + exits_right.pops();
                *t = TreeNode::Concat {
                    dag: *n,
                    left: Box::new(TreeNode::Leaf(e1)),
                    right: Box::new(TreeNode::Leaf(e2)),
                    exits_left,
                    exits_right,
                };
            } else {
                return;
            }
        }
        if let TreeNode::Concat { left, right, .. } = t {
            let (mut l, mut r) = (std::mem::replace(left, Box::new(TreeNode::Leaf(0))), std::mem::replace(right, Box::new(TreeNode::Leaf(0))));
            self.unfold(&mut l);
            self.unfold(&mut r);
            *left = l;
            *right = r;
        }
    }

    fn collect(&mut self, t: &TreeNode, buf: &mut OutputString) {
        self.steps += 1;
        match t {
            TreeNode::Leaf(n) => match self.store.node(*n) {
                Node::Singleton(x) => buf.push(x),
                _ => unreachable!("output phase on a tree that is not output-ready"),
            },
            TreeNode::Concat { left, right, .. } => {
                self.collect(left, buf);
                self.collect(right, buf);
            }
        }
    }

    fn has_next(&mut self, t: &TreeNode) -> bool {
        self.steps += 1;
        match t {
            TreeNode::Leaf(_) => false,
            TreeNode::Concat { left, right, exits_left, exits_right, .. } => {
                exits_left.has_pending()
                    || exits_right.has_pending()
                    || self.has_next(left)
                    || self.has_next(right)
            }
        }
    }

    /// Move the tree to the next solution. Returns false when exhausted.
    fn prune(&mut self, t: &mut TreeNode) -> bool {
        self.steps += 1;
        match t {
            TreeNode::Leaf(_) => false,
            TreeNode::Concat { dag, left, right, exits_left, exits_right } => {
                if {
                    let mut l = std::mem::replace(left, Box::new(TreeNode::Leaf(0)));
                    let advanced = self.prune(&mut l);
                    *left = l;
                    advanced
                } {
                    return true;
                }
                if exits_left.has_pending() {
                    let e = exits_left.next(self.store).unwrap();
                    self.steps += exits_left.pops();
                    **left = TreeNode::Leaf(e);
                    return true;
                }
                // left factor exhausted for the current right solution:
                // advance the right side and restart the left one
                let advanced_right = {
                    let mut r = std::mem::replace(right, Box::new(TreeNode::Leaf(0)));
                    let a = self.prune(&mut r);
                    *right = r;
                    a
                } || {
                    if exits_right.has_pending() {
                        let e = exits_right.next(self.store).unwrap();
                        **right = TreeNode::Leaf(e);
                        true
                    } else {
                        false
                    }
                };
                if advanced_right {
                    let Node::Product(n1, _) = self.store.node(*dag) else { unreachable!() };
                    *exits_left = ExitIter::new(n1);
                    let e = exits_left.next(self.store).unwrap();
                    **left = TreeNode::Leaf(e);
                    true
                } else {
                    false
                }
            }
        }
    }
}

impl<'s> Iterator for EnumIter<'s> {
    type Item = OutputString;

    fn next(&mut self) -> Option<OutputString> {
        self.steps += 1;
        if self.eps_pending {
            self.eps_pending = false;
            return Some(Vec::new());
        }
        if self.done {
            return None;
        }
        if self.tree.is_none() {
            let exits = self.root_exits.as_mut()?;
            match exits.next(self.store) {
                Some(e) => {
                    self.steps += 2;
                    self.tree = Some(TreeNode::Leaf(e));
                }
                None => {
                    self.done = true;
                    return None;
                }
            }
        }

        // unfolding sub-phase
        let mut tree = self.tree.take().unwrap();
        self.unfold(&mut tree);

        // output sub-phase
        let mut buf = Vec::new();
        self.collect(&tree, &mut buf);

        // pruning sub-phase: position the state on the next solution
        if self.has_next(&tree) {
            let advanced = self.prune(&mut tree);
            debug_assert!(advanced);
            self.tree = Some(tree);
        } else {
            // move to the next exit of the root, if any
            match self.root_exits.as_mut().unwrap().next(self.store) {
                Some(e) => self.tree = Some(TreeNode::Leaf(e)),
                None => {
                    self.tree = None;
                    self.done = true;
                }
            }
        }
        Some(buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn letter(pos: u32, ann: u32) -> OutputLetter {
        OutputLetter { pos, ann }
    }

    fn enum_all(store: &NodeStore, h: SetHandle) -> Vec<OutputString> {
        store.enumerate(h).collect()
    }

    #[test]
    fn empty_set_yields_nothing() {
        let store = NodeStore::new();
        assert_eq!(enum_all(&store, make_empty()), Vec::<OutputString>::new());
        assert_eq!(store.node_count(), 0);
    }

    #[test]
    fn eps_yields_only_empty_string() {
        let store = NodeStore::new();
        assert_eq!(enum_all(&store, make_eps()), vec![Vec::new()]);
    }

    #[test]
    fn union_with_empty_is_identity() {
        let mut store = NodeStore::new();
        let h = store.singleton(letter(1, 0));
        let u = store.union(make_empty(), h);
        assert_eq!(u.node(), h.node());
        let u = store.union(h, make_empty());
        assert_eq!(u.node(), h.node());
    }

    #[test]
    fn product_with_empty_is_absorbing() {
        let mut store = NodeStore::new();
        let h = store.singleton(letter(1, 0));
        let p = store.product(make_empty(), h);
        assert!(p.is_empty());
    }

    #[test]
    fn product_with_eps_is_identity() {
        let mut store = NodeStore::new();
        let h = store.singleton(letter(1, 0));
        let p = store.product(make_eps(), h);
        assert_eq!(store.expand(p), store.expand(h));
        let p = store.product(h, make_eps());
        assert_eq!(store.expand(p), store.expand(h));
    }

    #[test]
    fn singleton_product_concatenates() {
        let mut store = NodeStore::new();
        let a = store.singleton(letter(1, 0));
        let b = store.singleton(letter(2, 1));
        let p = store.product(a, b);
        assert_eq!(enum_all(&store, p), vec![vec![letter(1, 0), letter(2, 1)]]);
    }

    #[test]
    fn union_of_singletons() {
        let mut store = NodeStore::new();
        let a = store.singleton(letter(1, 0));
        let b = store.singleton(letter(2, 1));
        let u = store.union(a, b);
        let got: BTreeSet<_> = enum_all(&store, u).into_iter().collect();
        assert_eq!(got.len(), 2);
        assert_eq!(got, store.expand(u));
    }

    #[test]
    fn eps_comes_first() {
        let mut store = NodeStore::new();
        let a = store.singleton(letter(1, 0));
        let b = store.singleton(letter(2, 1));
        let p = store.product(a, b);
        let u = store.union(make_eps(), p);
        let got = enum_all(&store, u);
        assert_eq!(got, vec![vec![], vec![letter(1, 0), letter(2, 1)]]);
    }

    #[test]
    fn union_of_two_union_nodes_builds_union3() {
        let mut store = NodeStore::new();
        let a = store.singleton(letter(1, 0));
        let b = store.singleton(letter(2, 0));
        let c = store.singleton(letter(3, 0));
        let d = store.singleton(letter(4, 0));
        let u1 = store.union(a, b);
        let u2 = store.union(c, d);
        let before = store.node_count();
        let u = store.union(u1, u2);
        assert_eq!(store.node_count(), before + 2); // one Union2 + one Union3
        assert!(store.check_invariants());
        let got: BTreeSet<_> = enum_all(&store, u).into_iter().collect();
        assert_eq!(got.len(), 4);
    }

    #[test]
    fn product_of_eps_carrying_sets_matches_identity() {
        // (e1, true) x (e2, true) must enumerate S1.S2 + S1 + S2 + eps
        let mut store = NodeStore::new();
        let a = store.singleton(letter(1, 0));
        let b = store.singleton(letter(2, 0));
        let ha = store.union(make_eps(), a);
        let hb = store.union(make_eps(), b);
        let p = store.product(ha, hb);
        assert!(p.has_eps());
        let got: BTreeSet<_> = enum_all(&store, p).into_iter().collect();
        let want: BTreeSet<OutputString> = [
            vec![],
            vec![letter(1, 0)],
            vec![letter(2, 0)],
            vec![letter(1, 0), letter(2, 0)],
        ]
        .into_iter()
        .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn asymmetric_eps_product_contributes_other_side() {
        // ({eps, a}) x ({b}) = {ab, b}
        let mut store = NodeStore::new();
        let a = store.singleton(letter(1, 0));
        let b = store.singleton(letter(2, 0));
        let ha = store.union(make_eps(), a);
        let p = store.product(ha, b);
        assert!(!p.has_eps());
        let got: BTreeSet<_> = enum_all(&store, p).into_iter().collect();
        let want: BTreeSet<OutputString> =
            [vec![letter(2, 0)], vec![letter(1, 0), letter(2, 0)]].into_iter().collect();
        assert_eq!(got, want);

        // ({a}) x ({eps, b}) = {a, ab}
        let hb = store.union(make_eps(), b);
        let p = store.product(a, hb);
        let got: BTreeSet<_> = enum_all(&store, p).into_iter().collect();
        let want: BTreeSet<OutputString> =
            [vec![letter(1, 0)], vec![letter(1, 0), letter(2, 0)]].into_iter().collect();
        assert_eq!(got, want);
    }

    #[test]
    fn left_factor_varies_fastest() {
        let mut store = NodeStore::new();
        let a = store.singleton(letter(1, 0));
        let b = store.singleton(letter(1, 1));
        let c = store.singleton(letter(2, 0));
        let d = store.singleton(letter(2, 1));
        let left = store.union(a, b);
        let right = store.union(c, d);
        let p = store.product(left, right);
        let got = enum_all(&store, p);
        assert_eq!(
            got,
            vec![
                vec![letter(1, 0), letter(2, 0)],
                vec![letter(1, 1), letter(2, 0)],
                vec![letter(1, 0), letter(2, 1)],
                vec![letter(1, 1), letter(2, 1)],
            ]
        );
    }

    #[test]
    fn nested_products_enumerate_fully() {
        let mut store = NodeStore::new();
        let mut parts = Vec::new();
        for pos in 1..=3u32 {
            let x = store.singleton(letter(pos, 0));
            let y = store.singleton(letter(pos, 1));
            parts.push(store.union(x, y));
        }
        let p01 = store.product(parts[0], parts[1]);
        let p = store.product(p01, parts[2]);
        let got: BTreeSet<_> = enum_all(&store, p).into_iter().collect();
        assert_eq!(got.len(), 8);
        assert_eq!(got, store.expand(p));
    }

    #[test]
    fn exit_iterator_two_pops_per_exit() {
        let mut store = NodeStore::new();
        let mut h = store.singleton(letter(1, 0));
        for pos in 2..=20u32 {
            let s = store.singleton(letter(pos, 0));
            h = store.union(h, s);
        }
        let mut it = ExitIter::new(h.node().unwrap());
        let mut exits = 0;
        let mut last_pops = 0;
        while let Some(_) = it.next(&store) {
            exits += 1;
            let pops = it.pops();
            assert!(pops - last_pops <= 2, "more than two pops for one exit");
            last_pops = pops;
        }
        assert_eq!(exits, 20);
    }

    #[test]
    fn persistence_under_later_operations() {
        let mut store = NodeStore::new();
        let a = store.singleton(letter(1, 0));
        let b = store.singleton(letter(2, 0));
        let u = store.union(a, b);
        let before = store.expand(u);
        // pile further structure on top of u
        let mut h = u;
        for pos in 3..=12u32 {
            let s = store.singleton(letter(pos, 0));
            h = store.product(h, s);
        }
        assert_eq!(store.expand(u), before);
        let got: BTreeSet<_> = enum_all(&store, u).into_iter().collect();
        assert_eq!(got, before);
    }

    #[test]
    fn debug_checked_store_accepts_legal_builds() {
        let mut store = NodeStore::with_debug_checks(10_000);
        let a = store.singleton(letter(1, 0));
        let b = store.singleton(letter(2, 0));
        let u = store.union(a, b);
        let c = store.singleton(letter(3, 0));
        let _ = store.product(u, c);
    }

    #[test]
    #[should_panic(expected = "union precondition")]
    fn debug_checked_store_rejects_overlapping_union() {
        let mut store = NodeStore::with_debug_checks(10_000);
        let a = store.singleton(letter(1, 0));
        let b = store.singleton(letter(1, 0));
        let _ = store.union(a, b);
    }

    #[test]
    fn dump_lists_every_node() {
        let mut store = NodeStore::new();
        let a = store.singleton(letter(1, 0));
        let b = store.singleton(letter(2, 0));
        let _ = store.union(a, b);
        let dump = store.dump();
        assert_eq!(dump.lines().count(), 3);
        assert!(dump.contains("UNION"));
    }
}
