//! Block-coordinate projected gradient ascent.
//!
//! One outer iteration updates `R`, then every `x_v` in node order (keeping
//! the membership sum current), then every `w_i`. Each block takes up to
//! `max_inner` normalized-gradient steps with backtracking, so the objective
//! trace never decreases. Gradient components pushing a zero coordinate
//! below the bound are dropped before normalizing, and each block's search
//! starts from twice its last accepted length (capped at `eta0`), which keeps
//! the trial count per block roughly constant as the graph grows. An outer
//! iteration costs `O((N + E) K^2 + N L K)`.

mod gradient;
mod step;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::linalg::Matrix;
use crate::model::{column_sums, objective_parts, Hyperparams, LinkCache, ModelParams, ObjectiveParts};
use crate::par;

pub use gradient::{grad_r, grad_w, grad_x, Anchor};
pub use step::{feasible_direction, project_nonneg, step_with_backtracking, Step, MAX_HALVINGS};

use gradient::{attr_gradient, attr_value, r_gradient, r_value, NodeBlock, NodeTerms};

/// Range of the uniform initializer.
pub const INIT_LOW: f64 = 0.05;
pub const INIT_HIGH: f64 = 0.15;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub cache: LinkCache,
    pub outer_iter: usize,
    /// Objective before the first iteration followed by one value per
    /// completed outer iteration.
    pub f_trace: Vec<f64>,
}

impl OptimizerState {
    pub fn new(g: &AttributedGraph, m: &ModelParams, exec: par::Execution) -> Self {
        OptimizerState {
            cache: LinkCache::compute(g, &m.x, exec),
            outer_iter: 0,
            f_trace: Vec::new(),
        }
    }

    pub fn x_tilde(&self) -> &[f64] {
        &self.cache.x_tilde
    }

    pub fn edge_outer_sum(&self) -> &Matrix {
        &self.cache.edge_outer
    }

    pub fn refresh(&mut self, g: &AttributedGraph, m: &ModelParams, exec: par::Execution) {
        self.cache = LinkCache::compute(g, &m.x, exec);
    }

    fn check(&self, m: &ModelParams) -> Result<()> {
        if self.cache.x_tilde.len() != m.n_roles() {
            return Err(Error::Shape("optimizer state does not match model".into()));
        }
        debug_assert!(
            self.x_tilde_matches(m, 1e-9),
            "cached membership sum is stale"
        );
        Ok(())
    }

    /// Compare the cached membership sum against a full recomputation.
    pub fn x_tilde_matches(&self, m: &ModelParams, rel_tol: f64) -> bool {
        let fresh = column_sums(&m.x, par::Execution::Sequential);
        fresh
            .iter()
            .zip(&self.cache.x_tilde)
            .all(|(a, b)| (a - b).abs() <= rel_tol * a.abs().max(1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub max_outer: usize,
    /// Objective being maximized (includes the locality penalty when zooming).
    pub f: f64,
    pub ell_e: f64,
    pub ell_a: f64,
    pub r_l1: f64,
    pub x_l1: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: ModelParams,
    pub state: OptimizerState,
    pub parts: ObjectiveParts,
    pub records: Vec<IterationRecord>,
    pub converged: bool,
}

/// Uniform `[0.05, 0.15]` memberships and weights, `R = (M + M^T)/2` for
/// undirected graphs and `R = M` otherwise. Draw order: X, M, W.
pub fn initialize(n: usize, k: usize, l: usize, directed: bool, seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || rng.random_range(INIT_LOW..=INIT_HIGH);
    let x = Matrix::from_fn(n, k, |_, _| draw());
    let mut r = Matrix::from_fn(k, k, |_, _| draw());
    let w = Matrix::from_fn(k, l, |_, _| draw());
    if !directed {
        r.symmetrize();
    }
    ModelParams { x, r, w, directed }
}

pub fn fit(g: &AttributedGraph, k: usize, h: &Hyperparams) -> Result<FitResult> {
    fit_observed(g, k, h, &mut |_| {})
}

/// Like [`fit`], calling `observer` after every outer iteration.
pub fn fit_observed(
    g: &AttributedGraph,
    k: usize,
    h: &Hyperparams,
    observer: &mut dyn FnMut(&IterationRecord),
) -> Result<FitResult> {
    if k == 0 {
        return Err(Error::InvalidParam("K must be at least 1".into()));
    }
    if k >= g.n_nodes() {
        return Err(Error::InvalidParam(format!(
            "K = {k} is not smaller than the node count {}; the map would not summarize",
            g.n_nodes()
        )));
    }
    let init = initialize(g.n_nodes(), k, g.n_attrs(), g.is_directed(), h.seed);
    optimize(g, init, h, None, observer)
}

/// Run the block-coordinate ascent from `init`. With an anchor the
/// objective is `f - beta * |held coordinates - target|^2`.
pub fn optimize(
    g: &AttributedGraph,
    init: ModelParams,
    h: &Hyperparams,
    anchor: Option<&Anchor>,
    observer: &mut dyn FnMut(&IterationRecord),
) -> Result<FitResult> {
    h.validate()?;
    init.validate()?;
    init.check_graph(g)?;
    if let Some(a) = anchor {
        if a.free.len() != init.n_roles() {
            return Err(Error::Shape("anchor role mask does not match K".into()));
        }
    }
    let exec = h.execution;
    let penalty = |m: &ModelParams| anchor.map_or(0.0, |a| a.penalty(m));

    let mut m = init;
    let mut state = OptimizerState::new(g, &m, exec);
    let mut parts = objective_parts(g, &m, h, &state.cache)?;
    let mut f_prev = parts.f - penalty(&m);
    state.f_trace.push(f_prev);
    let mut records = Vec::new();
    let mut converged = false;
    let mut starts = StepStarts::new(g.n_nodes(), g.n_attrs(), h.eta0);

    for t in 1..=h.max_outer {
        let start = Instant::now();
        let snapshot = m.clone();

        update_r(g, &mut m, h, &state.cache, anchor, &mut starts);
        update_nodes(g, &mut m, h, &mut state.cache.x_tilde, anchor, &mut starts.nodes);
        debug_assert!(state.x_tilde_matches(&m, 1e-9));
        update_attrs(g, &mut m, h, anchor, &mut starts.attrs);

        state.refresh(g, &m, exec);
        let new_parts = objective_parts(g, &m, h, &state.cache)
            .map_err(|e| Error::Numeric(format!("outer iteration {t}: {e}")))?;
        let f = new_parts.f - penalty(&m);
        if f < f_prev {
            // only rounding in the full re-evaluation can get here
            m = snapshot;
            state.refresh(g, &m, exec);
            converged = true;
            break;
        }
        parts = new_parts;
        state.outer_iter = t;
        state.f_trace.push(f);
        let rec = IterationRecord {
            iter: t,
            max_outer: h.max_outer,
            f,
            ell_e: parts.ell_e,
            ell_a: parts.ell_a,
            r_l1: parts.r_l1,
            x_l1: parts.x_l1,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        observer(&rec);
        records.push(rec);

        let rel = (f - f_prev) / f_prev.abs().max(f64::MIN_POSITIVE);
        f_prev = f;
        if rel < h.tol {
            converged = true;
            break;
        }
    }

    Ok(FitResult {
        params: m,
        state,
        parts,
        records,
        converged,
    })
}

/// Starting length of the next backtracking search of every block: twice the
/// last accepted length, capped at `eta0`. Keeps the number of trial
/// evaluations per block bounded once a block's natural scale is found.
struct StepStarts {
    eta0: f64,
    r: f64,
    nodes: Vec<f64>,
    attrs: Vec<f64>,
}

impl StepStarts {
    fn new(n: usize, l: usize, eta0: f64) -> Self {
        StepStarts {
            eta0,
            r: eta0,
            nodes: vec![eta0; n],
            attrs: vec![eta0; l],
        }
    }
}

fn next_start(accepted: Option<f64>, current: f64, eta0: f64) -> f64 {
    accepted.map_or(current, |eta| (2.0 * eta).min(eta0))
}

fn update_r(
    g: &AttributedGraph,
    m: &mut ModelParams,
    h: &Hyperparams,
    cache: &LinkCache,
    anchor: Option<&Anchor>,
    starts: &mut StepStarts,
) {
    let k = m.n_roles();
    let directed = m.directed;
    let absent = cache.absent_outer(directed);
    let x = &m.x;
    let eval = |r: &[f64]| r_value(g, x, &Matrix::from_vec(k, k, r.to_vec()), h, &absent, anchor);
    let mut value = r_value(g, x, &m.r, h, &absent, anchor);
    for _ in 0..h.max_inner {
        let mut grad = r_gradient(g, x, &m.r, h, &absent, anchor);
        feasible_direction(m.r.as_slice(), grad.as_mut_slice());
        let step = step_with_backtracking(
            m.r.as_slice(),
            grad.as_slice(),
            value,
            starts.r,
            |c| {
                project_nonneg(c);
                if !directed {
                    let mut sym = Matrix::from_vec(k, k, c.to_vec());
                    sym.symmetrize();
                    c.copy_from_slice(sym.as_slice());
                }
            },
            eval,
        );
        starts.r = next_start(step.eta, starts.r, starts.eta0);
        if step.eta.is_none() {
            break;
        }
        m.r = Matrix::from_vec(k, k, step.block);
        value = step.value;
    }
}

fn update_nodes(
    g: &AttributedGraph,
    m: &mut ModelParams,
    h: &Hyperparams,
    x_tilde: &mut [f64],
    anchor: Option<&Anchor>,
    starts: &mut [f64],
) {
    let wt = m.w.transpose();
    for v in 0..g.n_nodes() {
        let old = m.x.row(v).to_vec();
        let block = NodeBlock {
            terms: NodeTerms::new(g, &m.x, &m.r, x_tilde, v),
            wt: &wt,
            attrs: g.attr_row(v),
            anchor: anchor.map(|a| (a, a.target.x.row(v))),
        };
        let mut y = old.clone();
        let mut value = block.value(&y, h);
        for _ in 0..h.max_inner {
            let mut grad = block.gradient(&y, h);
            feasible_direction(&y, &mut grad);
            let step = step_with_backtracking(&y, &grad, value, starts[v], project_nonneg, |c| {
                block.value(c, h)
            });
            starts[v] = next_start(step.eta, starts[v], h.eta0);
            if step.eta.is_none() {
                break;
            }
            y = step.block;
            value = step.value;
        }
        for ((t, new), old) in x_tilde.iter_mut().zip(&y).zip(&old) {
            *t += new - old;
        }
        m.x.row_mut(v).copy_from_slice(&y);
    }
}

fn update_attrs(
    g: &AttributedGraph,
    m: &mut ModelParams,
    h: &Hyperparams,
    anchor: Option<&Anchor>,
    starts: &mut [f64],
) {
    let x = &m.x;
    let w = &m.w;
    let targets = anchor.map(|a| a.target.w.transpose());
    let prev = &*starts;
    let columns = par::map(h.execution, g.n_attrs(), |i| {
        let mut start = prev[i];
        let anchor_i = anchor.zip(targets.as_ref()).map(|(a, t)| (a, t.row(i)));
        let mut wi = w.column(i);
        let mut value = attr_value(g, x, &wi, i, h, anchor_i);
        for _ in 0..h.max_inner {
            let grad = attr_gradient(g, x, &wi, i, h, anchor_i);
            let step = step_with_backtracking(&wi, &grad, value, start, |_| {}, |c| {
                attr_value(g, x, c, i, h, anchor_i)
            });
            start = next_start(step.eta, start, h.eta0);
            if step.eta.is_none() {
                break;
            }
            wi = step.block;
            value = step.value;
        }
        (wi, start)
    });
    for (i, (col, start)) in columns.iter().enumerate() {
        m.w.set_column(i, col);
        starts[i] = *start;
    }
}
