use std::collections::HashMap;
use std::hash::{DefaultHasher, Hash, Hasher};

use crate::affine::{norm, round_key, Constraint, LinearPredicate, Norm, Polytope, Substituted};
use crate::feasibility::{check_feasible_with, remove_redundant, LpError, LpStatus};

use super::{BuildOptions, BuildStats, Builder, Node, NodeId, Tads, TadsError, Terminal};

/// Path constraints collected so far, with a point known to satisfy them.
#[derive(Debug, Clone)]
struct Ctx {
    constraints: Vec<Constraint>,
    hash: u64,
    witness: Option<Vec<f64>>,
    /// Margin of the witness on strict constraints, in row-normalized units.
    slack: f64,
}

impl Ctx {
    fn unconstrained(dim: usize) -> Self {
        Ctx { constraints: Vec::new(), hash: 0, witness: Some(vec![0.0; dim]), slack: f64::INFINITY }
    }

    fn extended(&self, c: Constraint, witness: Option<Vec<f64>>, slack: f64) -> Ctx {
        let hash = self.hash.wrapping_add(constraint_hash(&c));
        let mut constraints = self.constraints.clone();
        constraints.push(c);
        Ctx { constraints, hash, witness, slack }
    }
}

fn constraint_hash(c: &Constraint) -> u64 {
    let s = norm(&c.normal, Norm::Infinity);
    let s = if s == 0.0 { 1.0 } else { 1.0 / s };
    let mut h = DefaultHasher::new();
    for v in c.normal.iter().chain(std::iter::once(&c.offset)) {
        round_key(v * s).hash(&mut h);
    }
    c.strict.hash(&mut h);
    h.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Phase {
    Walk,
    Graft,
    Add,
    Restrict,
}

struct Engine {
    builder: Builder,
    opts: BuildOptions,
    stats: BuildStats,
    memo: HashMap<(Phase, NodeId, NodeId, u64), NodeId>,
}

impl Engine {
    fn new(input_dim: usize, opts: BuildOptions) -> Self {
        Engine { builder: Builder::new(input_dim), opts, stats: BuildStats::default(), memo: HashMap::new() }
    }

    fn memo_key(&self, phase: Phase, a: NodeId, b: NodeId, ctx: &Ctx) -> (Phase, NodeId, NodeId, u64) {
        let h = if self.opts.eager_pruning { ctx.hash } else { 0 };
        (phase, a, b, h)
    }

    /// Context for a domain, or `None` when the domain is empty.
    fn root_ctx(&mut self, domain: Option<&Polytope>) -> Option<Ctx> {
        let dim = self.builder.input_dim();
        let Some(d) = domain.filter(|d| !d.is_empty()) else {
            return Some(Ctx::unconstrained(dim));
        };
        let hash = d.constraints().iter().fold(0u64, |h, c| h.wrapping_add(constraint_hash(c)));
        let mut ctx = Ctx { constraints: d.constraints().to_vec(), hash, witness: None, slack: 0.0 };
        if !self.opts.eager_pruning {
            return Some(ctx);
        }
        self.stats.lp_calls += 1;
        match check_feasible_with(d, &self.opts.lp) {
            Ok(v) if v.status == LpStatus::Infeasible => None,
            Ok(v) => {
                ctx.witness = v.witness;
                ctx.slack = v.slack.unwrap_or(f64::INFINITY);
                Some(ctx)
            }
            Err(_) => {
                self.stats.indeterminate_branches += 1;
                Some(ctx)
            }
        }
    }

    fn check_side(&mut self, ctx: &Ctx, c: Constraint) -> Option<Ctx> {
        let dim = self.builder.input_dim();
        let mut cons = ctx.constraints.clone();
        cons.push(c.clone());
        let poly = Polytope::new(dim, cons).expect("constraints share the input dimension");
        self.stats.lp_calls += 1;
        match check_feasible_with(&poly, &self.opts.lp) {
            Ok(v) if v.status == LpStatus::Infeasible => {
                self.stats.pruned_branches += 1;
                None
            }
            Ok(v) => {
                let slack = v.slack.unwrap_or(f64::INFINITY);
                Some(ctx.extended(c, v.witness, slack))
            }
            Err(LpError::Indeterminate(_)) | Err(_) => {
                self.stats.indeterminate_branches += 1;
                Some(ctx.extended(c, None, 0.0))
            }
        }
    }

    /// Contexts for the TRUE and FALSE branches of `p`; `None` marks an infeasible branch.
    fn split(&mut self, ctx: &Ctx, p: &LinearPredicate) -> (Option<Ctx>, Option<Ctx>) {
        let tc = Constraint::from_true_branch(p);
        let fc = Constraint::from_false_branch(p);
        if !self.opts.eager_pruning {
            return (Some(ctx.clone()), Some(ctx.clone()));
        }
        let margin = self.opts.lp.strict_margin;
        let mut t_side = None;
        let mut f_side = None;
        if let Some(w) = &ctx.witness {
            let v = p.value(w) / norm(p.normal(), Norm::Two);
            if v > margin && ctx.slack > margin {
                t_side = Some(ctx.extended(tc.clone(), Some(w.clone()), ctx.slack.min(v)));
            }
            if v <= 0.0 {
                f_side = Some(ctx.extended(fc.clone(), Some(w.clone()), ctx.slack));
            }
        }
        let t_side = match t_side {
            Some(c) => Some(c),
            None => self.check_side(ctx, tc),
        };
        let f_side = match f_side {
            Some(c) => Some(c),
            None => self.check_side(ctx, fc),
        };
        (t_side, f_side)
    }

    fn join(&mut self, p: &LinearPredicate, t: Option<NodeId>, f: Option<NodeId>) -> Result<NodeId, TadsError> {
        match (t, f) {
            (Some(t), Some(f)) => self.builder.make_node(p.clone(), t, f),
            (Some(x), None) | (None, Some(x)) => Ok(x),
            (None, None) => Ok(self.builder.bottom()),
        }
    }

    fn finish(self, root: NodeId, domain: Option<Polytope>, stats: &mut BuildStats) -> Result<Tads, TadsError> {
        stats.absorb(self.stats);
        self.builder.finish(root, domain)
    }

    fn walk(&mut self, first: &Tads, second: &Tads, node: NodeId, ctx: &Ctx) -> Result<NodeId, TadsError> {
        let key = self.memo_key(Phase::Walk, node, 0, ctx);
        if let Some(id) = self.memo.get(&key) {
            return Ok(*id);
        }
        let id = match first.node(node) {
            Node::Decision { predicate, on_true, on_false } => {
                let (ct, cf) = self.split(ctx, predicate);
                let t = ct.map(|c| self.walk(first, second, *on_true, &c)).transpose()?;
                let f = cf.map(|c| self.walk(first, second, *on_false, &c)).transpose()?;
                self.join(predicate, t, f)?
            }
            Node::Terminal(Terminal::Affine(_)) => self.graft(first, node, second, second.root(), ctx)?,
            Node::Terminal(Terminal::Bottom) => self.builder.bottom(),
            Node::Terminal(t) => return Err(TadsError::TerminalKind { op: "compose", expected: "affine", found: t.kind() }),
        };
        self.memo.insert(key, id);
        Ok(id)
    }

    fn graft(&mut self, first: &Tads, leaf: NodeId, second: &Tads, node: NodeId, ctx: &Ctx) -> Result<NodeId, TadsError> {
        let key = self.memo_key(Phase::Graft, leaf, node, ctx);
        if let Some(id) = self.memo.get(&key) {
            return Ok(*id);
        }
        let Node::Terminal(Terminal::Affine(alpha)) = first.node(leaf) else { unreachable!("grafts start at affine terminals") };
        let id = match second.node(node) {
            Node::Decision { predicate, on_true, on_false } => match predicate.substitute(alpha)? {
                Substituted::Constant(true) => self.graft(first, leaf, second, *on_true, ctx)?,
                Substituted::Constant(false) => self.graft(first, leaf, second, *on_false, ctx)?,
                Substituted::Predicate(q) => {
                    let (ct, cf) = self.split(ctx, &q);
                    let t = ct.map(|c| self.graft(first, leaf, second, *on_true, &c)).transpose()?;
                    let f = cf.map(|c| self.graft(first, leaf, second, *on_false, &c)).transpose()?;
                    self.join(&q, t, f)?
                }
            },
            Node::Terminal(Terminal::Affine(beta)) => self.builder.terminal(Terminal::Affine(beta.compose(alpha)?))?,
            Node::Terminal(t) => self.builder.terminal(t.clone())?,
        };
        self.memo.insert(key, id);
        Ok(id)
    }

    fn add(&mut self, a: &Tads, na: NodeId, b: &Tads, nb: NodeId, ctx: &Ctx) -> Result<NodeId, TadsError> {
        let key = self.memo_key(Phase::Add, na, nb, ctx);
        if let Some(id) = self.memo.get(&key) {
            return Ok(*id);
        }
        let id = match (a.node(na), b.node(nb)) {
            (Node::Decision { predicate, on_true, on_false }, other) => {
                let (bt, bf) = match other {
                    Node::Decision { predicate: q, on_true: qt, on_false: qf }
                        if q.canonical_key() == predicate.canonical_key() =>
                    {
                        (*qt, *qf)
                    }
                    _ => (nb, nb),
                };
                let (ct, cf) = self.split(ctx, predicate);
                let t = ct.map(|c| self.add(a, *on_true, b, bt, &c)).transpose()?;
                let f = cf.map(|c| self.add(a, *on_false, b, bf, &c)).transpose()?;
                self.join(predicate, t, f)?
            }
            (Node::Terminal(_), Node::Decision { predicate, on_true, on_false }) => {
                let (ct, cf) = self.split(ctx, predicate);
                let t = ct.map(|c| self.add(a, na, b, *on_true, &c)).transpose()?;
                let f = cf.map(|c| self.add(a, na, b, *on_false, &c)).transpose()?;
                self.join(predicate, t, f)?
            }
            (Node::Terminal(x), Node::Terminal(y)) => match (x, y) {
                (Terminal::Affine(x), Terminal::Affine(y)) => self.builder.terminal(Terminal::Affine(x.add(y)?))?,
                (Terminal::Bottom, _) | (_, Terminal::Bottom) => self.builder.bottom(),
                (Terminal::Affine(_), other) | (other, _) => {
                    return Err(TadsError::TerminalKind { op: "add", expected: "affine", found: other.kind() })
                }
            },
        };
        self.memo.insert(key, id);
        Ok(id)
    }

    fn restrict(&mut self, t: &Tads, node: NodeId, ctx: &Ctx) -> Result<NodeId, TadsError> {
        let key = self.memo_key(Phase::Restrict, node, 0, ctx);
        if let Some(id) = self.memo.get(&key) {
            return Ok(*id);
        }
        let id = match t.node(node) {
            Node::Decision { predicate, on_true, on_false } => {
                let (ct, cf) = self.split(ctx, predicate);
                let tt = ct.map(|c| self.restrict(t, *on_true, &c)).transpose()?;
                let ff = cf.map(|c| self.restrict(t, *on_false, &c)).transpose()?;
                self.join(predicate, tt, ff)?
            }
            Node::Terminal(term) => self.builder.terminal(term.clone())?,
        };
        self.memo.insert(key, id);
        Ok(id)
    }
}

fn intersect_domains(a: Option<&Polytope>, b: Option<&Polytope>) -> Result<Option<Polytope>, TadsError> {
    Ok(match (a, b) {
        (None, None) => None,
        (Some(d), None) | (None, Some(d)) => Some(d.clone()),
        (Some(x), Some(y)) => Some(x.intersect(y)?),
    })
}

fn check_dims(expected: usize, got: usize) -> Result<(), TadsError> {
    if expected == got {
        Ok(())
    } else {
        Err(TadsError::Dimension { expected, got })
    }
}

/// Pointwise sum of two structures with affine terminals.
pub fn lift_add(a: &Tads, b: &Tads) -> Result<Tads, TadsError> {
    lift_add_with(a, b, &BuildOptions::default(), &mut BuildStats::default())
}

pub fn lift_add_with(a: &Tads, b: &Tads, opts: &BuildOptions, stats: &mut BuildStats) -> Result<Tads, TadsError> {
    check_dims(a.input_dim(), b.input_dim())?;
    if let (Some(x), Some(y)) = (a.output_dim(), b.output_dim()) {
        if x != y {
            return Err(TadsError::OutputDimension(x, y));
        }
    }
    let domain = intersect_domains(a.domain(), b.domain())?;
    let mut engine = Engine::new(a.input_dim(), *opts);
    let root = match engine.root_ctx(domain.as_ref()) {
        Some(ctx) => engine.add(a, a.root(), b, b.root(), &ctx)?,
        None => engine.builder.bottom(),
    };
    engine.finish(root, domain, stats)
}

/// `s · t` for a structure with affine terminals.
pub fn lift_scale(s: f64, t: &Tads) -> Result<Tads, TadsError> {
    let mut b = Builder::new(t.input_dim());
    let root = b.map_terminals(t, |term| match term {
        Terminal::Affine(a) => Ok(Terminal::Affine(a.scale(s)?)),
        Terminal::Bottom => Ok(Terminal::Bottom),
        other => Err(TadsError::TerminalKind { op: "scale", expected: "affine", found: other.kind() }),
    })?;
    b.finish(root, t.domain().cloned())
}

/// The structure computing `x ↦ second(first(x))`.
pub fn compose(first: &Tads, second: &Tads) -> Result<Tads, TadsError> {
    compose_with(first, second, &BuildOptions::default(), &mut BuildStats::default())
}

pub fn compose_with(first: &Tads, second: &Tads, opts: &BuildOptions, stats: &mut BuildStats) -> Result<Tads, TadsError> {
    if let Some(m) = first.output_dim() {
        check_dims(second.input_dim(), m)?;
    }
    let materialized;
    let second = match second.domain() {
        Some(d) => {
            let d = d.clone();
            materialized = precondition_project_with(&second.clone().with_domain(None), &d, false, opts, stats)?;
            &materialized
        }
        None => second,
    };
    let mut engine = Engine::new(first.input_dim(), *opts);
    let root = match engine.root_ctx(first.domain()) {
        Some(ctx) => engine.walk(first, second, first.root(), &ctx)?,
        None => engine.builder.bottom(),
    };
    engine.finish(root, first.domain().cloned(), stats)
}

/// Relabels class terminals: `Class(label)` becomes true, every other class false.
pub fn class_indicator(t: &Tads, label: usize, classes: usize) -> Result<Tads, TadsError> {
    if label >= classes {
        return Err(TadsError::UnknownLabel { label, classes });
    }
    let mut b = Builder::new(t.input_dim());
    let root = b.map_terminals(t, |term| match term {
        Terminal::Class(c) if *c >= classes => Err(TadsError::UnknownLabel { label: *c, classes }),
        Terminal::Class(c) => Ok(Terminal::Bool(*c == label)),
        Terminal::Bottom => Ok(Terminal::Bottom),
        other => Err(TadsError::TerminalKind { op: "class indicator", expected: "class", found: other.kind() }),
    })?;
    b.finish(root, t.domain().cloned())
}

/// Restricts `t` to the polytope `s`.
///
/// Without pruning the result tests every constraint of `s` up front and reaches
/// ⊥ on violation. With pruning `s` becomes the domain of the result: branches
/// that cannot be reached from inside `s` are removed, and evaluation outside
/// `s` yields ⊥ through the domain check.
pub fn precondition_project(t: &Tads, s: &Polytope, prune: bool) -> Result<Tads, TadsError> {
    precondition_project_with(t, s, prune, &BuildOptions::default(), &mut BuildStats::default())
}

pub fn precondition_project_with(
    t: &Tads,
    s: &Polytope,
    prune: bool,
    opts: &BuildOptions,
    stats: &mut BuildStats,
) -> Result<Tads, TadsError> {
    check_dims(t.input_dim(), s.dim())?;
    let dim = t.input_dim();
    let region = match t.domain() {
        Some(d) => s.intersect(d)?,
        None => s.clone(),
    };
    if !prune {
        let mut b = Builder::new(dim);
        let mut cur = b.import(t)?;
        let bottom = b.bottom();
        for c in region.constraints().iter().rev() {
            if c.normal.iter().all(|v| *v == 0.0) {
                let holds = if c.strict { c.offset < 0.0 } else { c.offset <= 0.0 };
                if !holds {
                    cur = bottom;
                }
                continue;
            }
            cur = if c.strict {
                let p = LinearPredicate::new(c.normal.iter().map(|v| -v).collect(), -c.offset)?;
                b.make_node(p, cur, bottom)?
            } else {
                let p = LinearPredicate::new(c.normal.clone(), c.offset)?;
                b.make_node(p, bottom, cur)?
            };
        }
        return b.finish(cur, None);
    }

    let eager = BuildOptions { eager_pruning: true, ..*opts };
    stats.lp_calls += 1;
    let verdict = check_feasible_with(&region, &eager.lp);
    if matches!(&verdict, Ok(v) if v.status == LpStatus::Infeasible) {
        return Tads::constant(dim, Terminal::Bottom);
    }
    let region = if region.len() > 2 * dim {
        stats.lp_calls += region.len();
        remove_redundant(&region).unwrap_or(region)
    } else {
        region
    };
    let mut engine = Engine::new(dim, eager);
    let root = match engine.root_ctx(Some(&region)) {
        Some(ctx) => engine.restrict(t, t.root(), &ctx)?,
        None => engine.builder.bottom(),
    };
    engine.finish(root, Some(region), stats)
}
