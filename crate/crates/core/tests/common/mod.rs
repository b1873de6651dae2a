//! Brute-force reference implementations used by the integration tests.
//! Everything here walks all node pairs or raw counts directly.
#![allow(dead_code)]

use landmark_core::{AttributedGraph, Hyperparams, Matrix, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random graph with edge probability `p` and attribute probability 0.4.
pub fn random_graph(n: usize, l: usize, p: f64, directed: bool, rng: &mut impl Rng) -> AttributedGraph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if u == v || (!directed && v < u) {
                continue;
            }
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    let attrs = (0..n)
        .map(|_| (0..l).map(|_| rng.random_bool(0.4)).collect())
        .collect();
    AttributedGraph::new(
        (0..n).map(|v| format!("v{v}")).collect(),
        directed,
        edges,
        (0..l).map(|i| format!("a{i}")).collect(),
        attrs,
    )
    .unwrap()
}

/// Parameters drawn uniformly from `[lo, hi]`, with `R` symmetric when undirected.
pub fn random_params(n: usize, k: usize, l: usize, directed: bool, lo: f64, hi: f64, rng: &mut impl Rng) -> ModelParams {
    let mut draw = || rng.random_range(lo..=hi);
    let x = Matrix::from_fn(n, k, |_, _| draw());
    let mut r = Matrix::from_fn(k, k, |_, _| draw());
    let w = Matrix::from_fn(k, l, |_, _| draw());
    if !directed {
        r.symmetrize();
    }
    ModelParams { x, r, w, directed }
}

fn rho(m: &ModelParams, u: usize, v: usize) -> f64 {
    let k = m.n_roles();
    let mut s = 0.0;
    for a in 0..k {
        for b in 0..k {
            s += m.x[(u, a)] * m.r[(a, b)] * m.x[(v, b)];
        }
    }
    s
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

fn mu(m: &ModelParams, v: usize, i: usize) -> f64 {
    (0..m.n_roles()).map(|k| m.w[(k, i)] * m.x[(v, k)]).sum()
}

/// Every pair the model scores: ordered when directed, `u < v` otherwise.
pub fn pairs(n: usize, directed: bool) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if u != v && (directed || u < v) {
                out.push((u, v));
            }
        }
    }
    out
}

fn linked(g: &AttributedGraph, u: usize, v: usize) -> bool {
    let e = g.edges();
    e.contains(&(u, v)) || (!g.is_directed() && e.contains(&(v, u)))
}

pub fn ell_e(g: &AttributedGraph, m: &ModelParams, eps: f64) -> f64 {
    pairs(g.n_nodes(), g.is_directed())
        .into_iter()
        .map(|(u, v)| {
            let r = rho(m, u, v);
            if linked(g, u, v) {
                (1.0 - (-r).exp()).max(eps).ln()
            } else {
                -r
            }
        })
        .sum()
}

pub fn ell_a(g: &AttributedGraph, m: &ModelParams, eps: f64) -> f64 {
    let mut s = 0.0;
    for v in 0..g.n_nodes() {
        for i in 0..g.n_attrs() {
            let q = sigmoid(mu(m, v, i)).clamp(eps, 1.0 - eps);
            s += if g.attr(v, i) { q.ln() } else { (1.0 - q).ln() };
        }
    }
    s
}

pub fn objective(g: &AttributedGraph, m: &ModelParams, h: &Hyperparams) -> f64 {
    (1.0 - h.alpha) * ell_e(g, m, h.eps) + h.alpha * ell_a(g, m, h.eps)
        - h.alpha_r * m.r.l1_norm()
        - h.alpha_x * m.x.l1_norm()
}

/// Sum over unlinked pairs of `x_u x_v^T`, symmetrized for undirected graphs.
pub fn absent_outer(g: &AttributedGraph, m: &ModelParams) -> Matrix {
    let k = m.n_roles();
    let mut acc = Matrix::zeros(k, k);
    for (u, v) in pairs(g.n_nodes(), g.is_directed()) {
        if !linked(g, u, v) {
            acc.add_outer(1.0, m.x.row(u), m.x.row(v));
        }
    }
    if !g.is_directed() {
        acc.symmetrize();
    }
    acc
}

fn pair_coef(g: &AttributedGraph, m: &ModelParams, u: usize, v: usize, eps: f64) -> f64 {
    let r = rho(m, u, v);
    if linked(g, u, v) {
        let phi = 1.0 - (-r).exp();
        ((-r).exp() / phi).min(1.0 / eps)
    } else {
        -1.0
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn grad_r(g: &AttributedGraph, m: &ModelParams, h: &Hyperparams) -> Matrix {
    let k = m.n_roles();
    let mut acc = Matrix::zeros(k, k);
    for (u, v) in pairs(g.n_nodes(), g.is_directed()) {
        let c = pair_coef(g, m, u, v, h.eps);
        acc.add_outer(c, m.x.row(u), m.x.row(v));
    }
    let mut out = Matrix::from_fn(k, k, |a, b| (1.0 - h.alpha) * acc[(a, b)] - h.alpha_r * sign(m.r[(a, b)]));
    if !g.is_directed() {
        out.symmetrize();
    }
    out
}

pub fn grad_x(g: &AttributedGraph, m: &ModelParams, h: &Hyperparams, v: usize) -> Vec<f64> {
    let k = m.n_roles();
    let rt = m.r.transpose();
    let mut link = vec![0.0; k];
    for (a, b) in pairs(g.n_nodes(), g.is_directed()) {
        let c = pair_coef(g, m, a, b, h.eps);
        // d rho(a, b) / d x_v
        if a == v {
            for (o, t) in link.iter_mut().zip(m.r.mul_vec(m.x.row(b))) {
                *o += c * t;
            }
        }
        if b == v {
            for (o, t) in link.iter_mut().zip(rt.mul_vec(m.x.row(a))) {
                *o += c * t;
            }
        }
    }
    let mut out: Vec<f64> = link.iter().map(|t| (1.0 - h.alpha) * t).collect();
    for i in 0..g.n_attrs() {
        let resid = if g.attr(v, i) { 1.0 } else { 0.0 } - sigmoid(mu(m, v, i));
        for (kk, o) in out.iter_mut().enumerate() {
            *o += h.alpha * resid * m.w[(kk, i)];
        }
    }
    for (kk, o) in out.iter_mut().enumerate() {
        *o -= h.alpha_x * sign(m.x[(v, kk)]);
    }
    out
}

pub fn grad_w(g: &AttributedGraph, m: &ModelParams, h: &Hyperparams, i: usize) -> Vec<f64> {
    let k = m.n_roles();
    let mut out = vec![0.0; k];
    for v in 0..g.n_nodes() {
        let resid = if g.attr(v, i) { 1.0 } else { 0.0 } - sigmoid(mu(m, v, i));
        for (kk, o) in out.iter_mut().enumerate() {
            *o += h.alpha * resid * m.x[(v, kk)];
        }
    }
    out
}

/// Group members by hand from an assignment vector.
pub fn members(assignment: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); k];
    for (v, &a) in assignment.iter().enumerate() {
        out[a].push(v);
    }
    out
}

pub fn h_attrib(g: &AttributedGraph, assignment: &[usize], k: usize) -> f64 {
    let mut total = 0.0;
    for group in members(assignment, k) {
        if group.is_empty() {
            continue;
        }
        for i in 0..g.n_attrs() {
            let ones = group.iter().filter(|&&v| g.attr(v, i)).count();
            let zeros = group.len() - ones;
            for c in [ones, zeros] {
                if c > 0 {
                    let p = c as f64 / group.len() as f64;
                    total -= p * p.ln();
                }
            }
        }
    }
    total / k as f64
}

pub fn h_link(g: &AttributedGraph, assignment: &[usize], k: usize, lambda: f64) -> f64 {
    let n = g.n_nodes();
    // raw neighbor counts per group, in and out edges alike
    let mut counts = vec![vec![0usize; k]; n];
    for &(u, v) in g.edges() {
        counts[u][assignment[v]] += 1;
        counts[v][assignment[u]] += 1;
    }
    let smooth = |q: &[f64]| -> Vec<f64> {
        let z: f64 = q.iter().map(|x| x + lambda).sum();
        q.iter().map(|x| (x + lambda) / z).collect()
    };
    let mut total = 0.0;
    for group in members(assignment, k) {
        let dists: Vec<Vec<f64>> = group
            .iter()
            .filter_map(|&v| {
                let d: usize = counts[v].iter().sum();
                (d > 0).then(|| counts[v].iter().map(|&c| c as f64 / d as f64).collect())
            })
            .collect();
        if dists.is_empty() {
            continue;
        }
        let mean: Vec<f64> = (0..k)
            .map(|j| dists.iter().map(|q| q[j]).sum::<f64>() / dists.len() as f64)
            .collect();
        let p = smooth(&mean);
        for q in &dists {
            let q = smooth(q);
            total += p.iter().zip(&q).map(|(a, b)| a * (a / b).ln()).sum::<f64>();
        }
    }
    total / k as f64
}

/// Largest relative disagreement between two vectors.
pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let scale = x.abs().max(y.abs());
            if scale == 0.0 {
                0.0
            } else {
                (x - y).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}
