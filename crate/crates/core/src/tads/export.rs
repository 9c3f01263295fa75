use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::affine::{write_affine_form, AffineFunction, Constraint, LinearPredicate, Matrix, Polytope};

use super::{Builder, Node, NodeId, Tads, TadsError, Terminal};

#[derive(Serialize, Deserialize)]
struct Document {
    input_dim: usize,
    nodes: Vec<NodeJson>,
    root: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    domain: Option<Vec<Constraint>>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum NodeJson {
    Pred {
        id: NodeId,
        normal: Vec<f64>,
        offset: f64,
        #[serde(rename = "true")]
        on_true: NodeId,
        #[serde(rename = "false")]
        on_false: NodeId,
    },
    Affine {
        id: NodeId,
        rows: usize,
        cols: usize,
        weight: Vec<f64>,
        bias: Vec<f64>,
    },
    Class {
        id: NodeId,
        label: usize,
    },
    Bool {
        id: NodeId,
        value: bool,
    },
    Bottom {
        id: NodeId,
    },
}

impl Tads {
    pub fn to_json(&self) -> String {
        let nodes = self
            .nodes
            .iter()
            .enumerate()
            .map(|(id, n)| match n {
                Node::Decision { predicate, on_true, on_false } => NodeJson::Pred {
                    id,
                    normal: predicate.normal().to_vec(),
                    offset: predicate.offset(),
                    on_true: *on_true,
                    on_false: *on_false,
                },
                Node::Terminal(Terminal::Affine(a)) => NodeJson::Affine {
                    id,
                    rows: a.output_dim(),
                    cols: a.input_dim(),
                    weight: a.weight().as_slice().to_vec(),
                    bias: a.bias().to_vec(),
                },
                Node::Terminal(Terminal::Class(label)) => NodeJson::Class { id, label: *label },
                Node::Terminal(Terminal::Bool(value)) => NodeJson::Bool { id, value: *value },
                Node::Terminal(Terminal::Bottom) => NodeJson::Bottom { id },
            })
            .collect();
        let doc = Document {
            input_dim: self.input_dim,
            nodes,
            root: self.root,
            domain: self.domain.as_ref().map(|d| d.constraints().to_vec()),
        };
        serde_json::to_string(&doc).expect("plain data serializes")
    }

    pub fn from_json(text: &str) -> Result<Tads, TadsError> {
        let doc: Document = serde_json::from_str(text).map_err(|e| TadsError::Json(e.to_string()))?;
        let mut b = Builder::new(doc.input_dim);
        let mut ids: Vec<NodeId> = Vec::with_capacity(doc.nodes.len());
        let child = |ids: &[NodeId], c: NodeId, at: usize| -> Result<NodeId, TadsError> {
            if c < at {
                Ok(ids[c])
            } else {
                Err(TadsError::Malformed(format!("node {at} refers forward to {c}")))
            }
        };
        for (at, n) in doc.nodes.into_iter().enumerate() {
            let declared = match &n {
                NodeJson::Pred { id, .. }
                | NodeJson::Affine { id, .. }
                | NodeJson::Class { id, .. }
                | NodeJson::Bool { id, .. }
                | NodeJson::Bottom { id } => *id,
            };
            if declared != at {
                return Err(TadsError::Malformed(format!("node at position {at} has id {declared}")));
            }
            let id = match n {
                NodeJson::Pred { normal, offset, on_true, on_false, .. } => {
                    let (t, f) = (child(&ids, on_true, at)?, child(&ids, on_false, at)?);
                    b.make_node(LinearPredicate::new(normal, offset)?, t, f)?
                }
                NodeJson::Affine { rows, cols, weight, bias, .. } => {
                    b.terminal(Terminal::Affine(AffineFunction::new(Matrix::new(rows, cols, weight)?, bias)?))?
                }
                NodeJson::Class { label, .. } => b.terminal(Terminal::Class(label))?,
                NodeJson::Bool { value, .. } => b.terminal(Terminal::Bool(value))?,
                NodeJson::Bottom { .. } => b.bottom(),
            };
            ids.push(id);
        }
        let root = *ids.get(doc.root).ok_or_else(|| TadsError::Malformed(format!("root {} out of range", doc.root)))?;
        let domain = doc.domain.map(|c| Polytope::new(doc.input_dim, c)).transpose()?;
        b.finish(root, domain)
    }

    /// Graphviz rendering: inner nodes show their inequality, terminals their payload.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph tads {\n  rankdir=LR;\n  node [fontname=\"Helvetica\"];\n");
        for (id, n) in self.nodes.iter().enumerate() {
            match n {
                Node::Decision { predicate, on_true, on_false } => {
                    let _ = writeln!(out, "  n{id} [shape=ellipse, label=\"{predicate}\"];");
                    let _ = writeln!(out, "  n{id} -> n{on_true} [label=\"T\"];");
                    let _ = writeln!(out, "  n{id} -> n{on_false} [label=\"F\", style=dashed];");
                }
                Node::Terminal(t) => {
                    let _ = writeln!(out, "  n{id} [shape=box, label=\"{}\"];", terminal_label(t));
                }
            }
        }
        out.push_str("}\n");
        out
    }
}

fn terminal_label(t: &Terminal) -> String {
    match t {
        Terminal::Affine(a) => {
            let mut s = String::new();
            for r in 0..a.output_dim() {
                let (w, b) = a.row(r);
                if r > 0 {
                    s.push_str("\\n");
                }
                let _ = write!(s, "y{} = ", r + 1);
                let _ = write_affine_form(&mut s, w, b);
            }
            s
        }
        Terminal::Class(c) => format!("class {c}"),
        Terminal::Bool(b) => b.to_string(),
        Terminal::Bottom => "⊥".to_string(),
    }
}
