//! Algebraic property suites, runnable from `#[test]`s and from the acceptance runner.

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::Rng;

use tads::affine::{AffineFunction, LinearPredicate, Polytope};
use tads::tads::{
    argmax_tads, compose, enumerate_paths, lift_add, lift_scale, plnn_to_tads, precondition_project, Builder, Node, NodeId, Tads,
    Terminal, Value,
};

use super::{random_affine, random_hidden, random_net, rng, sample_ball, uniform_vec};

pub struct Suite {
    pub name: &'static str,
    pub cases: u32,
    pub run: fn(u32) -> Result<(), String>,
}

/// Case counts add up to more than ten thousand.
pub const SUITES: &[Suite] = &[
    Suite { name: "affine vector space", cases: 3000, run: affine_vector_space },
    Suite { name: "affine composition monoid", cases: 3000, run: affine_monoid },
    Suite { name: "lifted addition and scaling", cases: 1500, run: lifting_homomorphisms },
    Suite { name: "composition homomorphism", cases: 1500, run: composition_homomorphism },
    Suite { name: "reduction soundness", cases: 2000, run: reduction_soundness },
    Suite { name: "path partition", cases: 1500, run: path_partition },
];

fn runner(cases: u32) -> TestRunner {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn close(a: &[f64], b: &[f64], tol: f64) -> Result<(), TestCaseError> {
    prop_assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        prop_assert!((x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())), "{:?} vs {:?}", a, b);
    }
    Ok(())
}

fn vector(v: Value) -> Result<Vec<f64>, TestCaseError> {
    match v {
        Value::Vector(v) => Ok(v),
        other => Err(TestCaseError::fail(format!("expected a vector, got {other:?}"))),
    }
}

fn eval(f: &AffineFunction, x: &[f64]) -> Vec<f64> {
    f.eval(x).unwrap()
}

pub fn affine_vector_space(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&(any::<u64>(), 1usize..5, 1usize..5), |(seed, n, m)| {
            let mut r = rng(seed);
            let f = random_affine(&mut r, n, m);
            let g = random_affine(&mut r, n, m);
            let h = random_affine(&mut r, n, m);
            let zero = AffineFunction::zero(n, m);
            let s = r.random_range(-3.0..3.0);
            let t = r.random_range(-3.0..3.0);
            let x = uniform_vec(&mut r, n, -2.0, 2.0);

            let fg = f.add(&g).unwrap();
            prop_assert_eq!(&fg, &g.add(&f).unwrap());
            let sum: Vec<f64> = eval(&f, &x).iter().zip(eval(&g, &x)).map(|(a, b)| a + b).collect();
            close(&eval(&fg, &x), &sum, 1e-12)?;
            close(&eval(&fg.add(&h).unwrap(), &x), &eval(&f.add(&g.add(&h).unwrap()).unwrap(), &x), 1e-12)?;
            prop_assert_eq!(&f.add(&zero).unwrap(), &f);
            prop_assert_eq!(&f.scale(1.0).unwrap(), &f);
            close(&eval(&fg.scale(s).unwrap(), &x), &eval(&f.scale(s).unwrap().add(&g.scale(s).unwrap()).unwrap(), &x), 1e-12)?;
            close(
                &eval(&f.scale(s + t).unwrap(), &x),
                &eval(&f.scale(s).unwrap().add(&f.scale(t).unwrap()).unwrap(), &x),
                1e-12,
            )?;
            close(&eval(&f.scale(s * t).unwrap(), &x), &eval(&f.scale(t).unwrap().scale(s).unwrap(), &x), 1e-12)?;
            close(&eval(&f.add(&f.scale(-1.0).unwrap()).unwrap(), &x), &vec![0.0; m], 0.0)?;
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn affine_monoid(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&(any::<u64>(), 1usize..5, 1usize..5, 1usize..5, 1usize..5), |(seed, a, b, c, d)| {
            let mut r = rng(seed);
            let f = random_affine(&mut r, a, b);
            let g = random_affine(&mut r, b, c);
            let h = random_affine(&mut r, c, d);
            let x = uniform_vec(&mut r, a, -2.0, 2.0);

            let left = h.compose(&g).unwrap().compose(&f).unwrap();
            let right = h.compose(&g.compose(&f).unwrap()).unwrap();
            close(&eval(&left, &x), &eval(&right, &x), 1e-12)?;
            close(&eval(&left, &x), &eval(&h, &eval(&g, &eval(&f, &x))), 1e-12)?;
            prop_assert_eq!(&f.compose(&AffineFunction::identity(a)).unwrap(), &f);
            prop_assert_eq!(&AffineFunction::identity(b).compose(&f).unwrap(), &f);
            prop_assert_eq!(g.compose(&h).is_ok(), b == d);
            Ok(())
        })
        .map_err(|e| e.to_string())
}

fn small_net_tads(r: &mut impl Rng, input: usize, output: usize) -> (tads::nn::Plnn, Tads) {
    let hidden = random_hidden(r, 3, 5);
    let net = random_net(r, input, &hidden, output);
    let t = plnn_to_tads(&net, None).unwrap();
    (net, t)
}

pub fn lifting_homomorphisms(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&(any::<u64>(), 1usize..4, 1usize..4), |(seed, n, m)| {
            let mut r = rng(seed);
            let (na, ta) = small_net_tads(&mut r, n, m);
            let (nb, tb) = small_net_tads(&mut r, n, m);
            let s = r.random_range(-3.0..3.0);
            let sum = lift_add(&ta, &tb).unwrap();
            let scaled = lift_scale(s, &ta).unwrap();
            for _ in 0..8 {
                let x = uniform_vec(&mut r, n, -3.0, 3.0);
                let va = na.eval(&x).unwrap();
                let vb = nb.eval(&x).unwrap();
                let expected: Vec<f64> = va.iter().zip(&vb).map(|(a, b)| a + b).collect();
                close(&vector(sum.eval(&x).unwrap())?, &expected, 1e-9)?;
                let ea = vector(ta.eval(&x).unwrap())?;
                let eb = vector(tb.eval(&x).unwrap())?;
                let lifted: Vec<f64> = ea.iter().zip(&eb).map(|(a, b)| a + b).collect();
                close(&vector(sum.eval(&x).unwrap())?, &lifted, 1e-9)?;
                let expected: Vec<f64> = va.iter().map(|a| s * a).collect();
                close(&vector(scaled.eval(&x).unwrap())?, &expected, 1e-9)?;
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn composition_homomorphism(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&(any::<u64>(), 1usize..4, 1usize..4, 2usize..4), |(seed, n, mid, m)| {
            let mut r = rng(seed);
            let (n1, t1) = small_net_tads(&mut r, n, mid);
            let (n2, t2) = small_net_tads(&mut r, mid, m);
            let both = compose(&t1, &t2).unwrap();
            let classes = compose(&t1, &argmax_tads(mid)).unwrap();
            for _ in 0..8 {
                let x = uniform_vec(&mut r, n, -3.0, 3.0);
                let inner = vector(t1.eval(&x).unwrap())?;
                let outer = vector(t2.eval(&inner).unwrap())?;
                let got = vector(both.eval(&x).unwrap())?;
                close(&got, &outer, 1e-9)?;
                close(&got, &n2.eval(&n1.eval(&x).unwrap()).unwrap(), 1e-9)?;
                let logits = n1.eval(&x).unwrap();
                if !near_tie(&logits) {
                    prop_assert_eq!(classes.eval(&x).unwrap(), Value::Class(n1.classify(&x).unwrap()));
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

/// Top two logits closer than rounding noise can reorder.
pub fn near_tie(v: &[f64]) -> bool {
    let mut s = v.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    s.len() > 1 && s[0] - s[1] < 1e-9
}

#[derive(Debug, Clone)]
enum Tree {
    Leaf(usize),
    Test(usize, Box<Tree>, Box<Tree>),
}

fn random_tree(r: &mut impl Rng, depth: usize, predicates: usize) -> Tree {
    if depth == 0 || r.random_bool(0.25) {
        Tree::Leaf(r.random_range(0..3))
    } else {
        Tree::Test(
            r.random_range(0..predicates),
            Box::new(random_tree(r, depth - 1, predicates)),
            Box::new(random_tree(r, depth - 1, predicates)),
        )
    }
}

fn tree_eval(t: &Tree, pool: &[LinearPredicate], x: &[f64]) -> usize {
    match t {
        Tree::Leaf(c) => *c,
        Tree::Test(p, a, b) => {
            if pool[*p].holds(x) {
                tree_eval(a, pool, x)
            } else {
                tree_eval(b, pool, x)
            }
        }
    }
}

fn tree_build(t: &Tree, pool: &[LinearPredicate], b: &mut Builder) -> NodeId {
    match t {
        Tree::Leaf(c) => b.terminal(Terminal::Class(*c)).unwrap(),
        Tree::Test(p, x, y) => {
            let on_true = tree_build(x, pool, b);
            let on_false = tree_build(y, pool, b);
            b.make_node(pool[*p].clone(), on_true, on_false).unwrap()
        }
    }
}

pub fn reduction_soundness(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&(any::<u64>(), 1usize..4, 1usize..7), |(seed, n, depth)| {
            let mut r = rng(seed);
            let pool: Vec<LinearPredicate> = (0..4)
                .map(|_| LinearPredicate::new(uniform_vec(&mut r, n, -1.0, 1.0), r.random_range(-0.5..0.5)).unwrap())
                .collect();
            let tree = random_tree(&mut r, depth, pool.len());
            let mut b = Builder::new(n);
            let root = tree_build(&tree, &pool, &mut b);
            let t = b.finish(root, None).unwrap();

            let nodes = t.nodes();
            for (i, node) in nodes.iter().enumerate() {
                if let Node::Decision { on_true, on_false, .. } = node {
                    prop_assert_ne!(on_true, on_false, "redundant test survived");
                    prop_assert!(*on_true < i && *on_false < i, "children stored first");
                }
                for other in &nodes[..i] {
                    prop_assert_ne!(node, other, "duplicate node");
                }
            }

            let center = uniform_vec(&mut r, n, -0.5, 0.5);
            let radius = r.random_range(0.1..1.0);
            let region = Polytope::linf_ball(&center, radius);
            let pruned = precondition_project(&t, &region, true).unwrap();
            let guarded = precondition_project(&t, &region, false).unwrap();
            for _ in 0..16 {
                let x = uniform_vec(&mut r, n, -2.0, 2.0);
                let expected = Value::Class(tree_eval(&tree, &pool, &x));
                prop_assert_eq!(t.eval(&x).unwrap(), expected.clone());
                let inside = region.contains(&x, 0.0);
                let restricted = if inside { expected } else { Value::Bottom };
                prop_assert_eq!(pruned.eval(&x).unwrap(), restricted.clone());
                prop_assert_eq!(guarded.eval(&x).unwrap(), restricted);
                let y = sample_ball(&mut r, &center, radius);
                prop_assert_eq!(pruned.eval(&y).unwrap(), Value::Class(tree_eval(&tree, &pool, &y)));
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn path_partition(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&(any::<u64>(), 1usize..4, 2usize..4), |(seed, n, m)| {
            let mut r = rng(seed);
            let hidden = random_hidden(&mut r, 3, 6);
            let net = random_net(&mut r, n, &hidden, m);
            let center = uniform_vec(&mut r, n, -1.0, 1.0);
            let radius = r.random_range(0.2..1.5);
            let ball = Polytope::linf_ball(&center, radius);
            let logits = plnn_to_tads(&net, Some(&ball)).unwrap();
            let classes = compose(&logits, &argmax_tads(m)).unwrap();
            let paths: Vec<_> = enumerate_paths(&classes, |_| true).collect();
            for _ in 0..12 {
                let x = sample_ball(&mut r, &center, radius);
                let hits: Vec<_> = paths.iter().filter(|p| p.region.contains(&x, 0.0)).collect();
                prop_assert_eq!(hits.len(), 1, "point lies in {} path regions", hits.len());
                prop_assert_eq!(hits[0].leaf, classes.leaf_of(&x).unwrap());
                let out = net.eval(&x).unwrap();
                if !near_tie(&out) {
                    prop_assert_eq!(&hits[0].terminal, &Terminal::Class(net.classify(&x).unwrap()));
                }
                let value = vector(logits.eval(&x).unwrap())?;
                close(&value, &out, 1e-9)?;
            }
            let outside: Vec<f64> = center.iter().map(|c| c + 2.0 * radius).collect();
            prop_assert!(paths.iter().all(|p| !p.region.contains(&outside, 0.0)));
            prop_assert!(paths.iter().all(|p| p.region.constraints()[..2 * n] == ball.constraints()[..]));
            Ok(())
        })
        .map_err(|e| e.to_string())
}
