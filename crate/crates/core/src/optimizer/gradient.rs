//! Block gradients and block objectives.
//!
//! Every block objective differs from the full objective by a term that does
//! not depend on the block, so an accepted block step never lowers the full
//! objective. Node blocks only touch the node's adjacency and attribute row.

use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::linalg::{axpy, dot, Matrix};
use crate::model::{link_grad_factor, log_attr, log_link, present_link_term, sigmoid, Hyperparams, ModelParams};
use crate::par;

use super::OptimizerState;

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Quadratic pull of every coordinate not involving a free role towards a
/// target, weighted by `beta`. Used by zooming to hold the unsplit roles in
/// place.
#[derive(Debug, Clone)]
pub struct Anchor {
    pub target: ModelParams,
    /// `free[k]` marks role `k` as unpenalized (a new sub-role).
    pub free: Vec<bool>,
    pub beta: f64,
}

impl Anchor {
    #[inline]
    fn held(&self, k: usize) -> bool {
        !self.free[k]
    }

    /// `beta * sum over held coordinates of (theta - target)^2`.
    pub fn penalty(&self, m: &ModelParams) -> f64 {
        if self.beta == 0.0 {
            return 0.0;
        }
        self.beta * self.squared_distance(m)
    }

    pub fn squared_distance(&self, m: &ModelParams) -> f64 {
        let k = self.free.len();
        let t = &self.target;
        let mut acc = 0.0;
        for v in 0..m.x.rows() {
            for a in (0..k).filter(|&a| self.held(a)) {
                acc += (m.x[(v, a)] - t.x[(v, a)]).powi(2);
            }
        }
        for a in (0..k).filter(|&a| self.held(a)) {
            for b in (0..k).filter(|&b| self.held(b)) {
                acc += (m.r[(a, b)] - t.r[(a, b)]).powi(2);
            }
            for i in 0..m.w.cols() {
                acc += (m.w[(a, i)] - t.w[(a, i)]).powi(2);
            }
        }
        acc
    }

    fn r_penalty(&self, r: &[f64]) -> f64 {
        let k = self.free.len();
        let mut acc = 0.0;
        for a in (0..k).filter(|&a| self.held(a)) {
            for b in (0..k).filter(|&b| self.held(b)) {
                acc += (r[a * k + b] - self.target.r[(a, b)]).powi(2);
            }
        }
        self.beta * acc
    }

    fn r_penalty_grad(&self, r: &[f64], out: &mut Matrix) {
        let k = self.free.len();
        for a in (0..k).filter(|&a| self.held(a)) {
            for b in (0..k).filter(|&b| self.held(b)) {
                out[(a, b)] -= 2.0 * self.beta * (r[a * k + b] - self.target.r[(a, b)]);
            }
        }
    }

    fn row_penalty(&self, y: &[f64], target: &[f64]) -> f64 {
        let acc: f64 = y
            .iter()
            .zip(target)
            .enumerate()
            .filter(|(a, _)| self.held(*a))
            .map(|(_, (yy, tt))| (yy - tt).powi(2))
            .sum();
        self.beta * acc
    }

    fn row_penalty_grad(&self, y: &[f64], target: &[f64], out: &mut [f64]) {
        for (a, o) in out.iter_mut().enumerate() {
            if self.held(a) {
                *o -= 2.0 * self.beta * (y[a] - target[a]);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// R block

/// Gradient wrt `R` given the absent-pair outer sum for the current `X`.
pub(crate) fn r_gradient(
    g: &AttributedGraph,
    x: &Matrix,
    r: &Matrix,
    h: &Hyperparams,
    absent: &Matrix,
    anchor: Option<&Anchor>,
) -> Matrix {
    let k = r.rows();
    let edges = g.edges();
    let present = par::map_chunks(h.execution, edges.len(), |range| {
        let mut acc = Matrix::zeros(k, k);
        for &(u, v) in &edges[range] {
            let (xu, xv) = (x.row(u), x.row(v));
            acc.add_outer(link_grad_factor(r.bilinear(xu, xv), h.eps), xu, xv);
        }
        acc
    })
    .into_iter()
    .fold(Matrix::zeros(k, k), |mut a, b| {
        a.add_assign_scaled(1.0, &b);
        a
    });

    let link_w = 1.0 - h.alpha;
    let mut grad = Matrix::from_fn(k, k, |a, b| {
        link_w * (present[(a, b)] - absent[(a, b)]) - h.alpha_r * sign(r[(a, b)])
    });
    if let Some(anchor) = anchor {
        anchor.r_penalty_grad(r.as_slice(), &mut grad);
    }
    if !g.is_directed() {
        grad.symmetrize();
    }
    grad
}

pub(crate) fn r_value(
    g: &AttributedGraph,
    x: &Matrix,
    r: &Matrix,
    h: &Hyperparams,
    absent: &Matrix,
    anchor: Option<&Anchor>,
) -> f64 {
    let ell = present_link_term(g, x, r, h.eps, h.execution) - r.inner(absent);
    let pen = anchor.map_or(0.0, |a| a.r_penalty(r.as_slice()));
    (1.0 - h.alpha) * ell - h.alpha_r * r.l1_norm() - pen
}

/// Gradient of the objective wrt `R`; symmetrized for undirected graphs.
pub fn grad_r(
    g: &AttributedGraph,
    m: &ModelParams,
    h: &Hyperparams,
    state: &OptimizerState,
) -> Result<Matrix> {
    m.check_graph(g)?;
    state.check(m)?;
    let absent = state.cache.absent_outer(m.directed);
    Ok(r_gradient(g, &m.x, &m.r, h, &absent, None))
}

// ---------------------------------------------------------------------------
// node blocks

/// Everything the objective needs about node `v` with the rest of `X` fixed:
/// `R x_u` / `R^T x_u` for each incident edge and the aggregated absent-pair
/// direction.
pub(crate) struct NodeTerms {
    k: usize,
    link_vecs: Vec<f64>,
    absent: Vec<f64>,
}

impl NodeTerms {
    pub(crate) fn new(
        g: &AttributedGraph,
        x: &Matrix,
        r: &Matrix,
        x_tilde: &[f64],
        v: usize,
    ) -> Self {
        let k = r.rows();
        let xv = x.row(v);
        let other: Vec<f64> = x_tilde.iter().zip(xv).map(|(t, s)| t - s).collect();
        let out = g.out_neighbors(v);
        let inn = g.in_neighbors(v);
        let mut link_vecs = vec![0.0; (out.len() + inn.len()) * k];

        let mut rest = other.clone();
        for (j, &u) in out.iter().enumerate() {
            r.mul_vec_into(x.row(u), &mut link_vecs[j * k..(j + 1) * k]);
            axpy(-1.0, x.row(u), &mut rest);
        }
        let mut absent = r.mul_vec(&rest);

        if g.is_directed() {
            let mut rest = other;
            let off = out.len();
            for (j, &u) in inn.iter().enumerate() {
                r.tmul_vec_into(x.row(u), &mut link_vecs[(off + j) * k..(off + j + 1) * k]);
                axpy(-1.0, x.row(u), &mut rest);
            }
            axpy(1.0, &r.tmul_vec(&rest), &mut absent);
        }
        NodeTerms {
            k,
            link_vecs,
            absent,
        }
    }

    fn links(&self) -> impl Iterator<Item = &[f64]> {
        self.link_vecs.chunks_exact(self.k)
    }
}

/// Data needed to score one node's membership vector.
pub(crate) struct NodeBlock<'a> {
    pub terms: NodeTerms,
    /// `W^T`, one row per attribute.
    pub wt: &'a Matrix,
    pub attrs: &'a [bool],
    pub anchor: Option<(&'a Anchor, &'a [f64])>,
}

impl NodeBlock<'_> {
    pub(crate) fn value(&self, y: &[f64], h: &Hyperparams) -> f64 {
        let ell_e: f64 =
            self.terms.links().map(|b| log_link(dot(y, b), h.eps)).sum::<f64>() - dot(y, &self.terms.absent);
        let ell_a: f64 = self
            .attrs
            .iter()
            .enumerate()
            .map(|(i, &a)| log_attr(a, dot(self.wt.row(i), y), h.eps))
            .sum();
        let pen = self.anchor.map_or(0.0, |(a, t)| a.row_penalty(y, t));
        let l1: f64 = y.iter().map(|v| v.abs()).sum();
        (1.0 - h.alpha) * ell_e + h.alpha * ell_a - h.alpha_x * l1 - pen
    }

    pub(crate) fn gradient(&self, y: &[f64], h: &Hyperparams) -> Vec<f64> {
        let k = y.len();
        let mut link = vec![0.0; k];
        for b in self.terms.links() {
            axpy(link_grad_factor(dot(y, b), h.eps), b, &mut link);
        }
        axpy(-1.0, &self.terms.absent, &mut link);

        let mut attr = vec![0.0; k];
        for (i, &a) in self.attrs.iter().enumerate() {
            let wi = self.wt.row(i);
            axpy(a as u8 as f64 - sigmoid(dot(wi, y)), wi, &mut attr);
        }

        let mut grad: Vec<f64> = (0..k)
            .map(|c| (1.0 - h.alpha) * link[c] + h.alpha * attr[c] - h.alpha_x * sign(y[c]))
            .collect();
        if let Some((a, t)) = self.anchor {
            a.row_penalty_grad(y, t, &mut grad);
        }
        grad
    }
}

/// Gradient of the objective wrt `x_v`, using the cached membership sum.
pub fn grad_x(
    g: &AttributedGraph,
    m: &ModelParams,
    h: &Hyperparams,
    state: &OptimizerState,
    v: usize,
) -> Result<Vec<f64>> {
    m.check_graph(g)?;
    state.check(m)?;
    if v >= g.n_nodes() {
        return Err(Error::OutOfRange {
            index: v,
            len: g.n_nodes(),
        });
    }
    let wt = m.w.transpose();
    let block = NodeBlock {
        terms: NodeTerms::new(g, &m.x, &m.r, &state.cache.x_tilde, v),
        wt: &wt,
        attrs: g.attr_row(v),
        anchor: None,
    };
    Ok(block.gradient(m.x.row(v), h))
}

// ---------------------------------------------------------------------------
// attribute blocks

pub(crate) fn attr_value(
    g: &AttributedGraph,
    x: &Matrix,
    wi: &[f64],
    i: usize,
    h: &Hyperparams,
    anchor: Option<(&Anchor, &[f64])>,
) -> f64 {
    let ll: f64 = (0..g.n_nodes())
        .map(|v| log_attr(g.attr(v, i), dot(wi, x.row(v)), h.eps))
        .sum();
    h.alpha * ll - anchor.map_or(0.0, |(a, t)| a.row_penalty(wi, t))
}

pub(crate) fn attr_gradient(
    g: &AttributedGraph,
    x: &Matrix,
    wi: &[f64],
    i: usize,
    h: &Hyperparams,
    anchor: Option<(&Anchor, &[f64])>,
) -> Vec<f64> {
    let k = wi.len();
    let mut grad = vec![0.0; k];
    for v in 0..g.n_nodes() {
        let xv = x.row(v);
        let resid = g.attr(v, i) as u8 as f64 - sigmoid(dot(wi, xv));
        axpy(h.alpha * resid, xv, &mut grad);
    }
    if let Some((a, t)) = anchor {
        a.row_penalty_grad(wi, t, &mut grad);
    }
    grad
}

/// Gradient of the objective wrt `w_i`.
pub fn grad_w(g: &AttributedGraph, m: &ModelParams, h: &Hyperparams, i: usize) -> Result<Vec<f64>> {
    m.check_graph(g)?;
    if i >= g.n_attrs() {
        return Err(Error::OutOfRange {
            index: i,
            len: g.n_attrs(),
        });
    }
    Ok(attr_gradient(g, &m.x, &m.w.column(i), i, h, None))
}
