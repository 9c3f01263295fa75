//! Typed affine decision structures: reduced decision DAGs over linear
//! predicates whose leaves are affine functions, class labels, booleans or ⊥.

mod build;
mod export;
mod ops;
mod paths;

use std::collections::HashMap;

use thiserror::Error;

use crate::affine::{AffineError, AffineFunction, KeyDigit, LinearPredicate, Polytope};
use crate::feasibility::LpConfig;

pub use build::{argmax_tads, plnn_to_tads, plnn_to_tads_with, relu_layer_tads};
pub use ops::{
    class_indicator, compose, compose_with, lift_add, lift_add_with, lift_scale, precondition_project, precondition_project_with,
};
pub use paths::{enumerate_paths, enumerate_paths_checked, Path, PathIter};

pub type NodeId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TadsError {
    #[error(transparent)]
    Affine(#[from] AffineError),
    #[error("input dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("{op} needs {expected} terminals but found {found}")]
    TerminalKind { op: &'static str, expected: &'static str, found: &'static str },
    #[error("terminals of different kinds in one structure: {0} and {1}")]
    MixedTerminals(&'static str, &'static str),
    #[error("affine terminals disagree on output dimension: {0} vs {1}")]
    OutputDimension(usize, usize),
    #[error("label {label} outside 0..{classes}")]
    UnknownLabel { label: usize, classes: usize },
    #[error("malformed structure: {0}")]
    Malformed(String),
    #[error("json: {0}")]
    Json(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Terminal {
    Affine(AffineFunction),
    Class(usize),
    Bool(bool),
    Bottom,
}

impl Terminal {
    pub fn kind(&self) -> &'static str {
        match self {
            Terminal::Affine(_) => "affine",
            Terminal::Class(_) => "class",
            Terminal::Bool(_) => "bool",
            Terminal::Bottom => "bottom",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Decision { predicate: LinearPredicate, on_true: NodeId, on_false: NodeId },
    Terminal(Terminal),
}

/// Result of evaluating a structure at a point.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Vector(Vec<f64>),
    Class(usize),
    Bool(bool),
    /// The point lies outside the structure's domain.
    Bottom,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum NodeKey {
    Affine(usize, Vec<KeyDigit>),
    Class(usize),
    Bool(bool),
    Bottom,
    Decision(Vec<KeyDigit>, NodeId, NodeId),
}

/// Hash-consing node store used while a structure is under construction.
#[derive(Debug)]
pub struct Builder {
    input_dim: usize,
    nodes: Vec<Node>,
    unique: HashMap<NodeKey, NodeId>,
}

impl Builder {
    pub fn new(input_dim: usize) -> Self {
        Builder { input_dim, nodes: Vec::new(), unique: HashMap::new() }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    /// Number of nodes created so far, reachable or not.
    pub fn stored(&self) -> usize {
        self.nodes.len()
    }

    fn intern(&mut self, key: NodeKey, node: impl FnOnce() -> Node) -> NodeId {
        if let Some(id) = self.unique.get(&key) {
            return *id;
        }
        let id = self.nodes.len();
        self.nodes.push(node());
        self.unique.insert(key, id);
        id
    }

    pub fn terminal(&mut self, t: Terminal) -> Result<NodeId, TadsError> {
        let key = match &t {
            Terminal::Affine(a) => {
                if a.input_dim() != self.input_dim {
                    return Err(TadsError::Dimension { expected: self.input_dim, got: a.input_dim() });
                }
                NodeKey::Affine(a.output_dim(), a.canonical_key())
            }
            Terminal::Class(c) => NodeKey::Class(*c),
            Terminal::Bool(b) => NodeKey::Bool(*b),
            Terminal::Bottom => NodeKey::Bottom,
        };
        Ok(self.intern(key, || Node::Terminal(t)))
    }

    pub fn bottom(&mut self) -> NodeId {
        self.intern(NodeKey::Bottom, || Node::Terminal(Terminal::Bottom))
    }

    /// Creates (or finds) the decision node `p ? t : f`, collapsing redundant tests.
    pub fn make_node(&mut self, p: LinearPredicate, on_true: NodeId, on_false: NodeId) -> Result<NodeId, TadsError> {
        if p.dim() != self.input_dim {
            return Err(TadsError::Dimension { expected: self.input_dim, got: p.dim() });
        }
        if on_true == on_false {
            return Ok(on_true);
        }
        let key = NodeKey::Decision(p.canonical_key(), on_true, on_false);
        Ok(self.intern(key, || Node::Decision { predicate: p, on_true, on_false }))
    }

    /// Copies a frozen structure into this store, returning its root.
    pub fn import(&mut self, t: &Tads) -> Result<NodeId, TadsError> {
        if t.input_dim != self.input_dim {
            return Err(TadsError::Dimension { expected: self.input_dim, got: t.input_dim });
        }
        self.map_terminals(t, |term| Ok(term.clone()))
    }

    /// Rebuilds `t` bottom-up with every terminal replaced by `f(terminal)`.
    pub(crate) fn map_terminals(
        &mut self,
        t: &Tads,
        mut f: impl FnMut(&Terminal) -> Result<Terminal, TadsError>,
    ) -> Result<NodeId, TadsError> {
        let mut ids = Vec::with_capacity(t.nodes.len());
        for node in &t.nodes {
            let id = match node {
                Node::Terminal(term) => self.terminal(f(term)?)?,
                Node::Decision { predicate, on_true, on_false } => {
                    self.make_node(predicate.clone(), ids[*on_true], ids[*on_false])?
                }
            };
            ids.push(id);
        }
        Ok(ids[t.root])
    }

    /// Freezes the part reachable from `root`, stored children-first.
    pub fn finish(&self, root: NodeId, domain: Option<Polytope>) -> Result<Tads, TadsError> {
        let mut order = Vec::new();
        let mut remap: HashMap<NodeId, NodeId> = HashMap::new();
        let mut stack = vec![(root, false)];
        while let Some((id, expanded)) = stack.pop() {
            if remap.contains_key(&id) {
                continue;
            }
            match &self.nodes[id] {
                Node::Decision { on_true, on_false, .. } if !expanded => {
                    stack.push((id, true));
                    stack.push((*on_false, false));
                    stack.push((*on_true, false));
                }
                _ => {
                    remap.insert(id, order.len());
                    order.push(id);
                }
            }
        }
        let nodes: Vec<Node> = order
            .iter()
            .map(|id| match &self.nodes[*id] {
                Node::Decision { predicate, on_true, on_false } => {
                    Node::Decision { predicate: predicate.clone(), on_true: remap[on_true], on_false: remap[on_false] }
                }
                Node::Terminal(t) => Node::Terminal(t.clone()),
            })
            .collect();
        if let Some(d) = &domain {
            if d.dim() != self.input_dim {
                return Err(TadsError::Dimension { expected: self.input_dim, got: d.dim() });
            }
        }
        let t = Tads { input_dim: self.input_dim, root: nodes.len() - 1, nodes, domain };
        t.check_terminals()?;
        Ok(t)
    }
}

/// A frozen structure. Nodes are stored children-first; the root comes last.
///
/// A structure may carry a `domain`: outside it evaluation yields [`Value::Bottom`]
/// and inside it the decision graph is only guaranteed to be correct there.
#[derive(Debug, Clone, PartialEq)]
pub struct Tads {
    input_dim: usize,
    nodes: Vec<Node>,
    root: NodeId,
    domain: Option<Polytope>,
}

/// Options shared by the constructions that may prune infeasible branches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildOptions {
    /// Check each new branch with the LP oracle and drop infeasible ones.
    pub eager_pruning: bool,
    pub lp: LpConfig,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { eager_pruning: true, lp: LpConfig::default() }
    }
}

impl BuildOptions {
    pub fn lazy() -> Self {
        BuildOptions { eager_pruning: false, ..Default::default() }
    }
}

/// Counters reported by pruning constructions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildStats {
    pub lp_calls: usize,
    pub pruned_branches: usize,
    pub indeterminate_branches: usize,
}

impl BuildStats {
    pub fn absorb(&mut self, other: BuildStats) {
        self.lp_calls += other.lp_calls;
        self.pruned_branches += other.pruned_branches;
        self.indeterminate_branches += other.indeterminate_branches;
    }
}

impl Tads {
    /// Single-terminal structure.
    pub fn constant(input_dim: usize, t: Terminal) -> Result<Tads, TadsError> {
        let mut b = Builder::new(input_dim);
        let root = b.terminal(t)?;
        b.finish(root, None)
    }

    pub fn affine(a: AffineFunction) -> Tads {
        Tads::constant(a.input_dim(), Terminal::Affine(a)).expect("dimension taken from the function")
    }

    pub fn identity(n: usize) -> Tads {
        Tads::affine(AffineFunction::identity(n))
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn domain(&self) -> Option<&Polytope> {
        self.domain.as_ref()
    }

    /// Output dimension of affine terminals, if any.
    pub fn output_dim(&self) -> Option<usize> {
        self.terminals().find_map(|t| match t {
            Terminal::Affine(a) => Some(a.output_dim()),
            _ => None,
        })
    }

    pub fn terminals(&self) -> impl Iterator<Item = &Terminal> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Terminal(t) => Some(t),
            Node::Decision { .. } => None,
        })
    }

    /// Reachable `(inner, terminal)` node counts.
    pub fn size(&self) -> (usize, usize) {
        let terminals = self.terminals().count();
        (self.nodes.len() - terminals, terminals)
    }

    fn check_terminals(&self) -> Result<(), TadsError> {
        let mut kind: Option<&'static str> = None;
        let mut out_dim: Option<usize> = None;
        for t in self.terminals() {
            if let Terminal::Bottom = t {
                continue;
            }
            match kind {
                None => kind = Some(t.kind()),
                Some(k) if k != t.kind() => return Err(TadsError::MixedTerminals(k, t.kind())),
                _ => {}
            }
            if let Terminal::Affine(a) = t {
                match out_dim {
                    None => out_dim = Some(a.output_dim()),
                    Some(d) if d != a.output_dim() => return Err(TadsError::OutputDimension(d, a.output_dim())),
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// Node id of the terminal reached by `x`, ignoring the domain.
    pub fn leaf_of(&self, x: &[f64]) -> Result<NodeId, TadsError> {
        if x.len() != self.input_dim {
            return Err(TadsError::Dimension { expected: self.input_dim, got: x.len() });
        }
        let mut id = self.root;
        loop {
            match &self.nodes[id] {
                Node::Decision { predicate, on_true, on_false } => id = if predicate.holds(x) { *on_true } else { *on_false },
                Node::Terminal(_) => return Ok(id),
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<Value, TadsError> {
        let leaf = self.leaf_of(x)?;
        if let Some(d) = &self.domain {
            if !d.contains(x, 0.0) {
                return Ok(Value::Bottom);
            }
        }
        let Node::Terminal(t) = &self.nodes[leaf] else { unreachable!("walk stops at terminals") };
        Ok(match t {
            Terminal::Affine(a) => Value::Vector(a.eval(x)?),
            Terminal::Class(c) => Value::Class(*c),
            Terminal::Bool(b) => Value::Bool(*b),
            Terminal::Bottom => Value::Bottom,
        })
    }

    pub(crate) fn with_domain(mut self, domain: Option<Polytope>) -> Tads {
        self.domain = domain;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine::Matrix;

    pub(crate) fn abs_tads() -> Tads {
        let mut b = Builder::new(2);
        let pos = b
            .terminal(Terminal::Affine(AffineFunction::new(Matrix::new(1, 2, vec![1.0, -1.0]).unwrap(), vec![0.0]).unwrap()))
            .unwrap();
        let neg = b
            .terminal(Terminal::Affine(AffineFunction::new(Matrix::new(1, 2, vec![-1.0, 1.0]).unwrap(), vec![0.0]).unwrap()))
            .unwrap();
        let p = LinearPredicate::new(vec![1.0, -1.0], 0.0).unwrap();
        let root = b.make_node(p, pos, neg).unwrap();
        b.finish(root, None).unwrap()
    }

    #[test]
    fn abs_eval() {
        let t = abs_tads();
        assert_eq!(t.eval(&[3.0, 1.0]).unwrap(), Value::Vector(vec![2.0]));
        assert_eq!(t.eval(&[1.0, 3.0]).unwrap(), Value::Vector(vec![2.0]));
        assert_eq!(t.size(), (1, 2));
        assert!(t.eval(&[1.0]).is_err());
    }

    #[test]
    fn identity_terminal() {
        let t = Tads::identity(3);
        assert_eq!(t.eval(&[1.0, -2.0, 0.5]).unwrap(), Value::Vector(vec![1.0, -2.0, 0.5]));
    }

    #[test]
    fn make_node_reductions() {
        let mut b = Builder::new(2);
        let c = b.terminal(Terminal::Class(1)).unwrap();
        let d = b.terminal(Terminal::Class(2)).unwrap();
        let p = LinearPredicate::new(vec![1.0, 2.0], 0.5).unwrap();
        assert_eq!(b.make_node(p.clone(), c, c).unwrap(), c);
        let n1 = b.make_node(p.clone(), c, d).unwrap();
        let n2 = b.make_node(p.clone(), c, d).unwrap();
        assert_eq!(n1, n2);
        let scaled = LinearPredicate::new(vec![3.0, 6.0], 1.5).unwrap();
        assert_eq!(b.make_node(scaled, c, d).unwrap(), n1);
        let flipped = p.negated();
        assert_ne!(b.make_node(flipped, c, d).unwrap(), n1);
        assert_eq!(b.terminal(Terminal::Class(1)).unwrap(), c);
    }

    #[test]
    fn mixed_terminals_rejected() {
        let mut b = Builder::new(1);
        let c = b.terminal(Terminal::Class(0)).unwrap();
        let f = b.terminal(Terminal::Bool(false)).unwrap();
        let root = b.make_node(LinearPredicate::coordinate(1, 0), c, f).unwrap();
        assert!(matches!(b.finish(root, None), Err(TadsError::MixedTerminals(_, _))));
    }

    #[test]
    fn finish_is_postorder_and_compact() {
        let mut b = Builder::new(1);
        let _unused = b.terminal(Terminal::Class(7)).unwrap();
        let c0 = b.terminal(Terminal::Class(0)).unwrap();
        let c1 = b.terminal(Terminal::Class(1)).unwrap();
        let root = b.make_node(LinearPredicate::coordinate(1, 0), c1, c0).unwrap();
        let t = b.finish(root, None).unwrap();
        assert_eq!(t.nodes().len(), 3);
        assert_eq!(t.root(), 2);
        assert_eq!(t.node(0), &Node::Terminal(Terminal::Class(1)));
    }

    #[test]
    fn domain_yields_bottom_outside() {
        let t = Tads::identity(1).with_domain(Some(Polytope::linf_ball(&[0.0], 1.0)));
        assert_eq!(t.eval(&[0.5]).unwrap(), Value::Vector(vec![0.5]));
        assert_eq!(t.eval(&[1.5]).unwrap(), Value::Bottom);
    }
}
