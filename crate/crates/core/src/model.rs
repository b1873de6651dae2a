//! The generative role model: parameters, link functions and likelihoods.
//!
//! A link `(u, v)` forms with probability `phi(x_u' R x_v)` where
//! `phi(p) = 1 - exp(-p)`, and node `v` carries attribute `i` with
//! probability `sigmoid(w_i' x_v)`.
//!
//! Pair universe: ordered pairs `u != v` for directed graphs, unordered
//! pairs for undirected ones. The sum of predictors over absent pairs is
//! evaluated in closed form from the membership sum `x~ = sum_v x_v`:
//! `c * (x~' R x~ - sum_v x_v' R x_v) - sum_E rho`, with `c = 1/2` for
//! undirected graphs and `c = 1` otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::linalg::{dot, Matrix};
use crate::par::{self, Execution};

/// Largest `N` accepted by [`reconstruct_probabilities`].
pub const DENSE_CAP: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum CMode {
    /// Every virtual node sits at the same strength `c`.
    Unit { c: f64 },
    /// Per-role strength from the mean affiliation of the nodes holding it.
    Mean,
}

impl Default for CMode {
    fn default() -> Self {
        CMode::Unit { c: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Weight of the attribute log-likelihood, in `[0, 1]`.
    pub alpha: f64,
    pub alpha_r: f64,
    pub alpha_x: f64,
    /// Locality weight used when zooming.
    pub beta: f64,
    pub c_mode: CMode,
    /// Initial normalized step length of every backtracking search.
    pub eta0: f64,
    pub max_outer: usize,
    /// Backtracked gradient steps per block per outer iteration.
    pub max_inner: usize,
    /// Stop once the relative objective improvement falls below this.
    pub tol: f64,
    pub seed: u64,
    /// Probability clamp inside logs and the link-gradient factor.
    pub eps: f64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            alpha: 0.5,
            alpha_r: 0.2,
            alpha_x: 0.2,
            beta: 0.002,
            c_mode: CMode::default(),
            eta0: 1.0,
            max_outer: 100,
            max_inner: 3,
            tol: 1e-6,
            seed: 0,
            eps: 1e-10,
            execution: Execution::default(),
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParam(msg));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        for (name, v) in [
            ("alpha_r", self.alpha_r),
            ("alpha_x", self.alpha_x),
            ("beta", self.beta),
            ("tol", self.tol),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a finite nonnegative number, got {v}"));
            }
        }
        if !(self.eps > 0.0 && self.eps <= 1e-3) {
            return bad(format!("eps must lie in (0, 1e-3], got {}", self.eps));
        }
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return bad(format!("eta0 must be positive, got {}", self.eta0));
        }
        if self.max_inner == 0 {
            return bad("max_inner must be at least 1".into());
        }
        if let CMode::Unit { c } = self.c_mode {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("c must be positive, got {c}"));
            }
        }
        Ok(())
    }
}

/// Fitted (or planted) model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// N x K memberships, nonnegative.
    pub x: Matrix,
    /// K x K role interactions, nonnegative; symmetric when undirected.
    pub r: Matrix,
    /// K x L attribute weights; column `i` is `w_i`.
    pub w: Matrix,
    pub directed: bool,
}

impl ModelParams {
    pub fn zeros(n: usize, k: usize, l: usize, directed: bool) -> Self {
        ModelParams {
            x: Matrix::zeros(n, k),
            r: Matrix::zeros(k, k),
            w: Matrix::zeros(k, l),
            directed,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.x.rows()
    }

    pub fn n_roles(&self) -> usize {
        self.r.rows()
    }

    pub fn n_attrs(&self) -> usize {
        self.w.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.r.rows();
        if !self.r.is_square() || self.x.cols() != k || self.w.rows() != k {
            return Err(Error::Shape(format!(
                "X is {}x{}, R is {}x{}, W is {}x{}",
                self.x.rows(),
                self.x.cols(),
                self.r.rows(),
                self.r.cols(),
                self.w.rows(),
                self.w.cols()
            )));
        }
        if !(self.x.all_finite() && self.r.all_finite() && self.w.all_finite()) {
            return Err(Error::Numeric("non-finite model parameter".into()));
        }
        if self.x.as_slice().iter().chain(self.r.as_slice()).any(|&v| v < 0.0) {
            return Err(Error::InvalidParam("X and R must be nonnegative".into()));
        }
        if !self.directed && !self.r.is_symmetric() {
            return Err(Error::InvalidParam(
                "R must be symmetric for an undirected model".into(),
            ));
        }
        Ok(())
    }

    /// Check that the parameters describe `g`.
    pub fn check_graph(&self, g: &AttributedGraph) -> Result<()> {
        if self.n_nodes() != g.n_nodes() {
            return Err(Error::Shape(format!(
                "model has {} nodes, graph has {}",
                self.n_nodes(),
                g.n_nodes()
            )));
        }
        if self.n_attrs() != g.n_attrs() {
            return Err(Error::Shape(format!(
                "model has {} attributes, graph has {}",
                self.n_attrs(),
                g.n_attrs()
            )));
        }
        if self.directed != g.is_directed() {
            return Err(Error::Shape("model and graph directedness differ".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn rho(&self, u: usize, v: usize) -> f64 {
        self.r.bilinear(self.x.row(u), self.x.row(v))
    }

    pub fn mu(&self, v: usize, i: usize) -> f64 {
        let xv = self.x.row(v);
        (0..self.n_roles()).map(|k| self.w[(k, i)] * xv[k]).sum()
    }
}

#[inline]
pub(crate) fn phi(rho: f64) -> f64 {
    -(-rho).exp_m1()
}

#[inline]
pub(crate) fn sigmoid(mu: f64) -> f64 {
    if mu >= 0.0 {
        1.0 / (1.0 + (-mu).exp())
    } else {
        let e = mu.exp();
        e / (1.0 + e)
    }
}

/// `log phi(rho)` with the probability clamped below at `eps`.
#[inline]
pub(crate) fn log_link(rho: f64, eps: f64) -> f64 {
    phi(rho).max(eps).ln()
}

/// `(1 - phi) / phi`, capped at `1 / eps`.
#[inline]
pub(crate) fn link_grad_factor(rho: f64, eps: f64) -> f64 {
    let p = phi(rho);
    if p < eps {
        1.0 / eps
    } else {
        (-rho).exp() / p
    }
}

/// Bernoulli log-likelihood of one attribute observation, `q` clamped to
/// `[eps, 1 - eps]`.
#[inline]
pub(crate) fn log_attr(present: bool, mu: f64, eps: f64) -> f64 {
    let q = sigmoid(mu).clamp(eps, 1.0 - eps);
    if present {
        q.ln()
    } else {
        (1.0 - q).ln()
    }
}

/// `x_u' R x_v`.
pub fn link_predictor(x_u: &[f64], r: &Matrix, x_v: &[f64]) -> Result<f64> {
    if !r.is_square() || x_u.len() != r.rows() || x_v.len() != r.cols() {
        return Err(Error::Shape(format!(
            "x_u has {} entries, R is {}x{}, x_v has {}",
            x_u.len(),
            r.rows(),
            r.cols(),
            x_v.len()
        )));
    }
    Ok(r.bilinear(x_u, x_v))
}

/// `1 - exp(-rho)`.
pub fn link_probability(rho: f64) -> Result<f64> {
    if rho.is_nan() || rho < 0.0 {
        return Err(Error::InvalidParam(format!(
            "link predictor must be nonnegative, got {rho}"
        )));
    }
    Ok(phi(rho))
}

/// `sigmoid(w_i' x_v)`, no intercept.
pub fn attribute_probability(w_i: &[f64], x_v: &[f64]) -> Result<f64> {
    if w_i.len() != x_v.len() {
        return Err(Error::Shape(format!(
            "w_i has {} entries, x_v has {}",
            w_i.len(),
            x_v.len()
        )));
    }
    Ok(sigmoid(dot(w_i, x_v)))
}

/// Sufficient statistics of `X` for the closed-form absent-pair terms.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkCache {
    /// `sum_v x_v`.
    pub x_tilde: Vec<f64>,
    /// `sum_v x_v x_v'`.
    pub self_outer: Matrix,
    /// `sum_{(u,v) in E} x_u x_v'` over stored edges.
    pub edge_outer: Matrix,
}

impl LinkCache {
    pub fn compute(g: &AttributedGraph, x: &Matrix, exec: Execution) -> Self {
        let k = x.cols();
        let x_tilde = column_sums(x, exec);
        let self_outer = par::map_chunks(exec, x.rows(), |range| {
            let mut acc = Matrix::zeros(k, k);
            for v in range {
                acc.add_outer(1.0, x.row(v), x.row(v));
            }
            acc
        })
        .into_iter()
        .fold(Matrix::zeros(k, k), |mut a, b| {
            a.add_assign_scaled(1.0, &b);
            a
        });
        let edges = g.edges();
        let edge_outer = par::map_chunks(exec, edges.len(), |range| {
            let mut acc = Matrix::zeros(k, k);
            for &(u, v) in &edges[range] {
                acc.add_outer(1.0, x.row(u), x.row(v));
            }
            acc
        })
        .into_iter()
        .fold(Matrix::zeros(k, k), |mut a, b| {
            a.add_assign_scaled(1.0, &b);
            a
        });
        LinkCache {
            x_tilde,
            self_outer,
            edge_outer,
        }
    }

    /// `sum over absent pairs of x_u x_v'`, oriented like the stored edges.
    /// For undirected graphs only its symmetric part is meaningful.
    pub fn absent_outer(&self, directed: bool) -> Matrix {
        let k = self.x_tilde.len();
        let half = if directed { 1.0 } else { 0.5 };
        Matrix::from_fn(k, k, |a, b| {
            half * (self.x_tilde[a] * self.x_tilde[b] - self.self_outer[(a, b)])
                - self.edge_outer[(a, b)]
        })
    }
}

pub(crate) fn column_sums(x: &Matrix, exec: Execution) -> Vec<f64> {
    let k = x.cols();
    par::map_chunks(exec, x.rows(), |range| {
        let mut acc = vec![0.0; k];
        for v in range {
            crate::linalg::axpy(1.0, x.row(v), &mut acc);
        }
        acc
    })
    .into_iter()
    .fold(vec![0.0; k], |mut a, b| {
        crate::linalg::axpy(1.0, &b, &mut a);
        a
    })
}

/// `sum_E log phi(rho_uv)` for an arbitrary interaction matrix.
pub(crate) fn present_link_term(
    g: &AttributedGraph,
    x: &Matrix,
    r: &Matrix,
    eps: f64,
    exec: Execution,
) -> f64 {
    let edges = g.edges();
    par::sum(exec, edges.len(), |e| {
        let (u, v) = edges[e];
        log_link(r.bilinear(x.row(u), x.row(v)), eps)
    })
}

fn check_finite(m: &ModelParams) -> Result<()> {
    if !(m.x.all_finite() && m.r.all_finite() && m.w.all_finite()) {
        return Err(Error::Numeric("NaN or infinite model parameter".into()));
    }
    Ok(())
}

/// Link log-likelihood using the cached closed form for absent pairs.
pub fn log_likelihood_links(
    g: &AttributedGraph,
    m: &ModelParams,
    cache: &LinkCache,
    eps: f64,
    exec: Execution,
) -> Result<f64> {
    m.check_graph(g)?;
    check_finite(m)?;
    if cache.x_tilde.len() != m.n_roles() {
        return Err(Error::Shape("cache does not match model".into()));
    }
    let present = present_link_term(g, &m.x, &m.r, eps, exec);
    let absent = m.r.inner(&cache.absent_outer(m.directed));
    Ok(present - absent)
}

/// Attribute log-likelihood; zero when the graph has no attributes.
pub fn log_likelihood_attrs(
    g: &AttributedGraph,
    m: &ModelParams,
    eps: f64,
    exec: Execution,
) -> Result<f64> {
    m.check_graph(g)?;
    check_finite(m)?;
    let l = g.n_attrs();
    if l == 0 {
        return Ok(0.0);
    }
    let k = m.n_roles();
    Ok(par::sum(exec, g.n_nodes(), |v| {
        let xv = m.x.row(v);
        (0..l)
            .map(|i| {
                let mu: f64 = (0..k).map(|kk| m.w[(kk, i)] * xv[kk]).sum();
                log_attr(g.attr(v, i), mu, eps)
            })
            .sum::<f64>()
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveParts {
    pub f: f64,
    pub ell_e: f64,
    pub ell_a: f64,
    pub r_l1: f64,
    pub x_l1: f64,
}

/// `(1 - alpha) ell_E + alpha ell_A - alpha_R |R|_1 - alpha_X |X|_1`.
pub fn objective_parts(
    g: &AttributedGraph,
    m: &ModelParams,
    h: &Hyperparams,
    cache: &LinkCache,
) -> Result<ObjectiveParts> {
    let ell_e = log_likelihood_links(g, m, cache, h.eps, h.execution)?;
    let ell_a = log_likelihood_attrs(g, m, h.eps, h.execution)?;
    let r_l1 = m.r.l1_norm();
    let x_l1 = m.x.l1_norm();
    let f = (1.0 - h.alpha) * ell_e + h.alpha * ell_a - h.alpha_r * r_l1 - h.alpha_x * x_l1;
    if !f.is_finite() {
        return Err(Error::Numeric(format!("objective is {f}")));
    }
    Ok(ObjectiveParts {
        f,
        ell_e,
        ell_a,
        r_l1,
        x_l1,
    })
}

pub fn objective(
    g: &AttributedGraph,
    m: &ModelParams,
    h: &Hyperparams,
    cache: &LinkCache,
) -> Result<f64> {
    objective_parts(g, m, h, cache).map(|p| p.f)
}

/// Objective with the cache computed on the fly.
pub fn evaluate_objective(g: &AttributedGraph, m: &ModelParams, h: &Hyperparams) -> Result<ObjectiveParts> {
    m.check_graph(g)?;
    let cache = LinkCache::compute(g, &m.x, h.execution);
    objective_parts(g, m, h, &cache)
}

/// Dense `N x N` link probabilities (zero diagonal) and `N x L` attribute
/// probabilities.
pub fn reconstruct_probabilities(
    g: &AttributedGraph,
    m: &ModelParams,
    dense_cap: usize,
) -> Result<(Matrix, Matrix)> {
    m.check_graph(g)?;
    let n = m.n_nodes();
    if n > dense_cap {
        return Err(Error::InvalidParam(format!(
            "dense reconstruction limited to {dense_cap} nodes, graph has {n}"
        )));
    }
    let p = Matrix::from_fn(n, n, |u, v| if u == v { 0.0 } else { phi(m.rho(u, v)) });
    let q = Matrix::from_fn(n, m.n_attrs(), |v, i| sigmoid(m.mu(v, i)));
    Ok((p, q))
}
