mod common;

use rand::Rng;

use common::{linf, rng, uniform_vec, vertices, Halfspace};
use tads::affine::{Constraint, Polytope};
use tads::feasibility::{check_feasible, closest_point_linf, remove_redundant, LpStatus};

const BOX: f64 = 2.0;

fn boxed(mut hs: Vec<Halfspace>, d: usize) -> Vec<Halfspace> {
    for i in 0..d {
        let mut up = vec![0.0; d];
        up[i] = 1.0;
        hs.push((up, -BOX));
        let mut down = vec![0.0; d];
        down[i] = -1.0;
        hs.push((down, -BOX));
    }
    hs
}

fn polytope(hs: &[Halfspace], d: usize, strict: bool) -> Polytope {
    Polytope::new(d, hs.iter().map(|(n, o)| Constraint::new(n.clone(), *o, strict)).collect()).unwrap()
}

fn random_halfspaces(r: &mut impl Rng, count: usize, d: usize) -> Vec<Halfspace> {
    (0..count).map(|_| (uniform_vec(r, d, -1.0, 1.0), r.random_range(-0.6..0.9))).collect()
}

fn shifted(hs: &[Halfspace], by: f64) -> Vec<Halfspace> {
    hs.iter().map(|(n, o)| (n.clone(), o + by)).collect()
}

#[test]
fn feasibility_matches_vertex_enumeration() {
    let mut r = rng(11);
    let d = 3;
    let (mut feasible, mut empty, mut ambiguous) = (0, 0, 0);
    for _ in 0..200 {
        let hs = random_halfspaces(&mut r, 5, d);
        let all = boxed(hs.clone(), d);
        let oracle = !vertices(&all, d).is_empty();
        // instances whose answer flips under a 1e-6 offset perturbation are too close to call
        let tight = !vertices(&boxed(shifted(&hs, 1e-6), d), d).is_empty();
        let loose = !vertices(&boxed(shifted(&hs, -1e-6), d), d).is_empty();
        if tight != loose {
            ambiguous += 1;
            continue;
        }
        let v = check_feasible(&polytope(&all, d, false)).unwrap();
        assert_eq!(v.is_feasible(), oracle, "{all:?}");
        if oracle {
            feasible += 1;
            let w = v.witness.expect("feasible verdicts carry a witness");
            assert!(polytope(&all, d, false).contains(&w, 1e-9), "witness {w:?} outside");
        } else {
            empty += 1;
        }
    }
    assert!(feasible > 20 && empty > 20, "feasible {feasible}, empty {empty}");
    assert!(ambiguous < 5);
}

#[test]
fn strict_polytopes_need_an_interior() {
    let mut r = rng(12);
    let d = 3;
    for _ in 0..200 {
        let hs = boxed(random_halfspaces(&mut r, 5, d), d);
        // a strict interior exists iff shrinking every facet by a margin keeps vertices
        let deep = !vertices(&shifted(&hs, 1e-5), d).is_empty();
        let closed = !vertices(&hs, d).is_empty();
        let v = check_feasible(&polytope(&hs, d, true)).unwrap();
        if deep {
            assert!(v.is_feasible());
            let w = v.witness.unwrap();
            assert!(hs.iter().all(|(n, o)| n.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + o < 0.0));
        } else if !closed {
            assert_eq!(v.status, LpStatus::Infeasible);
        }
    }
    // a hyperplane has no interior but a closed hyperplane slab is non-empty
    let flat = vec![(vec![1.0, 0.0, 0.0], 0.0), (vec![-1.0, 0.0, 0.0], 0.0)];
    let flat = boxed(flat, 3);
    assert!(check_feasible(&polytope(&flat, 3, false)).unwrap().is_feasible());
    assert!(!check_feasible(&polytope(&flat, 3, true)).unwrap().is_feasible());
}

#[test]
fn closest_point_is_optimal() {
    let mut r = rng(13);
    let mut checked = 0;
    for d in [2usize, 3] {
        while checked < 60 * (d - 1) {
            let hs = boxed(random_halfspaces(&mut r, 4, d), d);
            if vertices(&shifted(&hs, 1e-4), d).is_empty() {
                continue;
            }
            let x0 = uniform_vec(&mut r, d, -3.0, 3.0);
            let p = polytope(&hs, d, false);
            let (y, dist) = closest_point_linf(&p, &x0).unwrap();
            assert!(p.contains(&y, 1e-7), "closest point outside");
            assert!((linf(&y, &x0) - dist).abs() < 1e-7);
            let ball = |radius: f64| {
                let mut all = hs.clone();
                for i in 0..d {
                    let mut up = vec![0.0; d];
                    up[i] = 1.0;
                    all.push((up, -(x0[i] + radius)));
                    let mut down = vec![0.0; d];
                    down[i] = -1.0;
                    all.push((down, x0[i] - radius));
                }
                all
            };
            if dist > 1e-6 {
                assert!(vertices(&ball(dist - 1e-6), d).is_empty(), "a closer point exists");
            }
            assert!(!vertices(&ball(dist + 1e-6), d).is_empty());
            checked += 1;
        }
    }
}

#[test]
fn closest_point_beats_a_grid() {
    let mut r = rng(14);
    for _ in 0..20 {
        let hs = boxed(random_halfspaces(&mut r, 4, 2), 2);
        if vertices(&shifted(&hs, 1e-3), 2).is_empty() {
            continue;
        }
        let x0 = uniform_vec(&mut r, 2, -3.0, 3.0);
        let p = polytope(&hs, 2, false);
        let (_, dist) = closest_point_linf(&p, &x0).unwrap();
        let steps = 400;
        let h = 2.0 * BOX / steps as f64;
        for i in 0..=steps {
            for j in 0..=steps {
                let g = [-BOX + i as f64 * h, -BOX + j as f64 * h];
                if p.contains(&g, 0.0) {
                    assert!(linf(&g, &x0) >= dist - 1e-9);
                }
            }
        }
    }
}

#[test]
fn redundancy_removal_keeps_the_set() {
    let mut r = rng(15);
    for _ in 0..50 {
        let hs = boxed(random_halfspaces(&mut r, 6, 2), 2);
        if vertices(&shifted(&hs, 1e-4), 2).is_empty() {
            continue;
        }
        let p = polytope(&hs, 2, false);
        let q = remove_redundant(&p).unwrap();
        assert!(q.len() <= p.len());
        for _ in 0..500 {
            let x = uniform_vec(&mut r, 2, -2.5, 2.5);
            let margin = hs.iter().map(|(n, o)| (n[0] * x[0] + n[1] * x[1] + o).abs()).fold(f64::INFINITY, f64::min);
            if margin > 1e-9 {
                assert_eq!(p.contains(&x, 0.0), q.contains(&x, 0.0));
            }
        }
    }
}
