use crate::affine::{Constraint, Polytope};
use crate::feasibility::{check_feasible_with, LpConfig, LpStatus};

use super::{Node, NodeId, Tads, Terminal};

/// One root-to-terminal path: the conjunction of its branch conditions and its leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    /// Domain constraints first, then one constraint per decision from the root down.
    pub region: Polytope,
    pub leaf: NodeId,
    pub terminal: Terminal,
    /// Interior point of `region` when the path was feasibility-checked.
    pub witness: Option<Vec<f64>>,
}

/// Depth-first stream of the paths whose terminal satisfies `select`, TRUE branches first.
pub struct PathIter<'a, F> {
    tads: &'a Tads,
    select: F,
    stack: Vec<(NodeId, Vec<Constraint>)>,
}

impl<F: FnMut(&Terminal) -> bool> Iterator for PathIter<'_, F> {
    type Item = Path;

    fn next(&mut self) -> Option<Path> {
        while let Some((id, cons)) = self.stack.pop() {
            match self.tads.node(id) {
                Node::Decision { predicate, on_true, on_false } => {
                    let mut f = cons.clone();
                    f.push(Constraint::from_false_branch(predicate));
                    self.stack.push((*on_false, f));
                    let mut t = cons;
                    t.push(Constraint::from_true_branch(predicate));
                    self.stack.push((*on_true, t));
                }
                Node::Terminal(term) => {
                    if (self.select)(term) {
                        return Some(Path {
                            region: Polytope::new(self.tads.input_dim(), cons).expect("shared dimension"),
                            leaf: id,
                            terminal: term.clone(),
                            witness: None,
                        });
                    }
                }
            }
        }
        None
    }
}

pub fn enumerate_paths<F: FnMut(&Terminal) -> bool>(t: &Tads, select: F) -> PathIter<'_, F> {
    let start = t.domain().map(|d| d.constraints().to_vec()).unwrap_or_default();
    PathIter { tads: t, select, stack: vec![(t.root(), start)] }
}

/// Like [`enumerate_paths`] but drops paths the LP oracle proves empty.
///
/// Paths on which the oracle abstains are kept without a witness; the second
/// value counts them.
pub fn enumerate_paths_checked<F: FnMut(&Terminal) -> bool>(t: &Tads, select: F, lp: &LpConfig) -> (Vec<Path>, usize) {
    let mut indeterminate = 0;
    let mut out = Vec::new();
    for mut p in enumerate_paths(t, select) {
        match check_feasible_with(&p.region, lp) {
            Ok(v) if v.status == LpStatus::Infeasible => {}
            Ok(v) => {
                p.witness = v.witness;
                out.push(p);
            }
            Err(_) => {
                indeterminate += 1;
                out.push(p);
            }
        }
    }
    (out, indeterminate)
}
