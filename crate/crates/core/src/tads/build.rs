use crate::affine::{AffineFunction, LinearPredicate, Matrix, Polytope};
use crate::nn::Plnn;

use super::ops::{compose_with, precondition_project_with};
use super::{BuildOptions, BuildStats, Builder, NodeId, Tads, TadsError, Terminal};

/// Exact structure of the elementwise ReLU on `R^k`.
pub fn relu_layer_tads(k: usize) -> Tads {
    assert!(k >= 1, "ReLU layer needs a positive width");
    fn level(b: &mut Builder, i: usize, mask: &mut Vec<f64>) -> NodeId {
        let k = b.input_dim();
        if i == k {
            let a = AffineFunction::new(Matrix::diagonal(mask), vec![0.0; k]).expect("square mask");
            return b.terminal(Terminal::Affine(a)).expect("matching dimension");
        }
        mask.push(1.0);
        let on = level(b, i + 1, mask);
        mask.pop();
        mask.push(0.0);
        let off = level(b, i + 1, mask);
        mask.pop();
        b.make_node(LinearPredicate::coordinate(k, i), on, off).expect("matching dimension")
    }
    let mut b = Builder::new(k);
    let root = level(&mut b, 0, &mut Vec::with_capacity(k));
    b.finish(root, None).expect("single terminal kind")
}

/// Running-max search returning the smallest index of a maximal coordinate.
///
/// Stage `j` compares `x_j` against the best index so far with the strict test
/// `x_j − x_best > 0`; ties fall to the FALSE branch and keep the earlier index.
pub fn argmax_tads(m: usize) -> Tads {
    assert!(m >= 1, "argmax needs at least one input");
    let mut b = Builder::new(m);
    // nodes[best] holds the subgraph for the current stage given the current best index
    let mut next: Vec<NodeId> = (0..m).map(|c| b.terminal(Terminal::Class(c)).expect("class terminal")).collect();
    for j in (1..m).rev() {
        let mut stage = Vec::with_capacity(j);
        for best in 0..j {
            let mut w = vec![0.0; m];
            w[j] = 1.0;
            w[best] = -1.0;
            let p = LinearPredicate::new(w, 0.0).expect("nonzero normal");
            stage.push(b.make_node(p, next[j], next[best]).expect("matching dimension"));
        }
        next = stage;
    }
    b.finish(next[0], None).expect("single terminal kind")
}

/// Compiles a network into an equivalent structure, optionally restricted to `region`.
pub fn plnn_to_tads(net: &Plnn, region: Option<&Polytope>) -> Result<Tads, TadsError> {
    plnn_to_tads_with(net, region, &BuildOptions::default(), &mut BuildStats::default())
}

pub fn plnn_to_tads_with(
    net: &Plnn,
    region: Option<&Polytope>,
    opts: &BuildOptions,
    stats: &mut BuildStats,
) -> Result<Tads, TadsError> {
    let n = net.input_dim();
    let mut acc = match region {
        Some(s) => precondition_project_with(&Tads::identity(n), s, true, opts, stats)?,
        None => Tads::identity(n),
    };
    let layers = net.layers();
    for (i, layer) in layers.iter().enumerate() {
        acc = compose_with(&acc, &Tads::affine(layer.clone()), opts, stats)?;
        if i + 1 < layers.len() {
            acc = compose_with(&acc, &relu_layer_tads(layer.output_dim()), opts, stats)?;
        }
    }
    Ok(acc)
}
