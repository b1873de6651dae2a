//! Projected normalized-gradient steps with backtracking.

use crate::linalg::norm2;

/// Halvings tried after the initial step length.
pub const MAX_HALVINGS: usize = 20;

/// Elementwise `max(z, 0)`.
pub fn project_nonneg(z: &mut [f64]) {
    for v in z.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Drop gradient components that would push a coordinate already at the
/// zero bound further down, so the normalized step spends its length on
/// coordinates that can actually move.
pub fn feasible_direction(block: &[f64], grad: &mut [f64]) {
    for (g, &b) in grad.iter_mut().zip(block) {
        if b <= 0.0 && *g < 0.0 {
            *g = 0.0;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub block: Vec<f64>,
    pub value: f64,
    /// Accepted step length, `None` when the block was left unchanged.
    pub eta: Option<f64>,
}

/// Ascend along `grad / |grad|`, starting at length `eta0` and halving until
/// the constrained candidate does not lower the objective.
///
/// `constrain` maps a raw candidate onto the feasible set; `eval` returns the
/// block objective. The block is returned unchanged when the gradient
/// vanishes or every trial length lowers the objective.
pub fn step_with_backtracking(
    block: &[f64],
    grad: &[f64],
    value: f64,
    eta0: f64,
    mut constrain: impl FnMut(&mut [f64]),
    mut eval: impl FnMut(&[f64]) -> f64,
) -> Step {
    let unchanged = || Step {
        block: block.to_vec(),
        value,
        eta: None,
    };
    let norm = norm2(grad);
    if norm == 0.0 || !norm.is_finite() {
        return unchanged();
    }
    let mut eta = eta0;
    let mut candidate = vec![0.0; block.len()];
    for _ in 0..=MAX_HALVINGS {
        let scale = eta / norm;
        for ((c, &b), &g) in candidate.iter_mut().zip(block).zip(grad) {
            *c = b + scale * g;
        }
        constrain(&mut candidate);
        let trial = eval(&candidate);
        if trial >= value {
            return Step {
                block: candidate,
                value: trial,
                eta: Some(eta),
            };
        }
        eta *= 0.5;
    }
    unchanged()
}
