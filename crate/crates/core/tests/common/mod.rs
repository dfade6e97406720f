#![allow(dead_code)]

use mtdc::graph::GridTopology;
use mtdc::model::ConverterParams;
use mtdc::simulator::Scenario;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub const VNOM: f64 = 1e5;

pub fn ring_lines() -> Vec<(usize, usize, f64)> {
    vec![
        (0, 1, 0.0154),
        (0, 2, 0.0015),
        (1, 3, 0.0015),
        (2, 3, 0.0154),
    ]
}

pub fn ring() -> GridTopology {
    GridTopology::from_resistances(4, ring_lines()).unwrap()
}

pub fn ring_params() -> ConverterParams {
    ConverterParams::uniform(4, 123.79e-6, 10.0, VNOM).unwrap()
}

pub fn pre_step() -> DVector<f64> {
    DVector::from_vec(vec![300.0, 200.0, -100.0, -400.0])
}

pub fn post_step() -> DVector<f64> {
    DVector::from_vec(vec![300.0, 200.0, -300.0, -400.0])
}

pub fn ring_scenario(horizon: f64) -> Scenario {
    Scenario {
        pre_injections: pre_step(),
        post_injections: post_step(),
        step_time: 0.0,
        horizon,
        delay: 0.0,
        sample_interval: 1e-3,
        max_step: None,
    }
}

/// Random spanning tree plus a few extra edges, weights log-uniform in `[lo, hi]`.
pub fn random_connected<R: Rng>(
    rng: &mut R,
    n: usize,
    lo: f64,
    hi: f64,
) -> Vec<(usize, usize, f64)> {
    let weight = |rng: &mut R| (rng.random_range(lo.ln()..=hi.ln())).exp();
    let mut edges = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    for k in 1..n {
        let parent = order[rng.random_range(0..k)];
        edges.push((parent.min(order[k]), parent.max(order[k]), weight(rng)));
    }
    let extra = rng.random_range(0..=n);
    for _ in 0..extra {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        let (a, b) = (a.min(b), a.max(b));
        if a != b && !edges.iter().any(|e| (e.0, e.1) == (a, b)) {
            edges.push((a, b, weight(rng)));
        }
    }
    edges
}

pub fn random_params<R: Rng>(rng: &mut R, n: usize) -> ConverterParams {
    let c = (0..n).map(|_| rng.random_range(20e-6..500e-6)).collect();
    let k = (0..n).map(|_| rng.random_range(1.0..50.0)).collect();
    let mut reg = vec![false; n];
    reg[rng.random_range(0..n)] = true;
    ConverterParams::new(c, k, reg, VNOM).unwrap()
}

pub fn random_injections<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-500.0..500.0))
}

/// Laplacian written out entry by entry from the edge list.
pub fn laplacian_by_hand(n: usize, edges: &[(usize, usize, f64)]) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(n, n);
    for &(a, b, w) in edges {
        l[(a, a)] += w;
        l[(b, b)] += w;
        l[(a, b)] -= w;
        l[(b, a)] -= w;
    }
    l
}

/// Hurwitz test independent of any eigensolver: `A^T P + P A = -I` has a
/// positive definite solution.
pub fn lyapunov_certifies_stable(a: &DMatrix<f64>) -> bool {
    let m = a.nrows();
    let id = DMatrix::<f64>::identity(m, m);
    let big = id.kronecker(&a.transpose()) + a.transpose().kronecker(&id);
    let rhs = -DVector::from_iterator(m * m, id.iter().copied());
    let Some(p) = big.lu().solve(&rhs) else {
        return false;
    };
    let p = DMatrix::from_column_slice(m, m, p.as_slice());
    let p = (&p + p.transpose()) * 0.5;
    p.cholesky().is_some()
}
