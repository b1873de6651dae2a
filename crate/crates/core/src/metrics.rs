//! Landmark homogeneity and reconstruction quality.
//!
//! Nodes are grouped by main role. Attribute homogeneity averages, over
//! groups, the summed binary entropy of each attribute inside the group.
//! Link homogeneity averages, over groups, the summed divergence
//! `KL(mean_q || q_v)` where `q_v` is node `v`'s distribution of incident
//! edges over the groups, normalized by its degree. All logs are natural.

use serde::{Deserialize, Serialize};

use crate::cartographer::argmax;
use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::model::{evaluate_objective, Hyperparams, ModelParams};

/// Smoothing added to every component before a KL divergence.
pub const KL_SMOOTHING: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grouping {
    /// Group of every node.
    pub assignment: Vec<usize>,
    /// Member list of every group, ascending.
    pub groups: Vec<Vec<usize>>,
    /// Nodes with an all-zero membership row (assigned to group 0).
    pub zero_rows: usize,
}

impl Grouping {
    pub fn from_assignment(assignment: Vec<usize>, k: usize) -> Self {
        let mut groups = vec![Vec::new(); k];
        for (v, &g) in assignment.iter().enumerate() {
            groups[g].push(v);
        }
        Grouping {
            assignment,
            groups,
            zero_rows: 0,
        }
    }

    pub fn k(&self) -> usize {
        self.groups.len()
    }
}

pub fn main_role_grouping(m: &ModelParams) -> Grouping {
    let assignment: Vec<usize> = (0..m.n_nodes()).map(|v| argmax(m.x.row(v))).collect();
    let zero_rows = (0..m.n_nodes())
        .filter(|&v| m.x.row(v).iter().all(|&x| x == 0.0))
        .count();
    let mut grouping = Grouping::from_assignment(assignment, m.n_roles());
    grouping.zero_rows = zero_rows;
    grouping
}

/// Binary entropy in nats.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |q: f64| if q > 0.0 { -q * q.ln() } else { 0.0 };
    term(p) + term(1.0 - p)
}

fn smooth(q: &[f64]) -> Vec<f64> {
    let denom = 1.0 + KL_SMOOTHING * q.len() as f64;
    q.iter().map(|&x| (x + KL_SMOOTHING) / denom).collect()
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&a, &b)| if a > 0.0 { a * (a / b).ln() } else { 0.0 })
        .sum()
}

/// Distribution of a node's incident edges over the groups, or `None` for
/// isolated nodes.
pub fn link_distribution(g: &AttributedGraph, grouping: &Grouping, v: usize) -> Option<Vec<f64>> {
    let nbrs = g.out_neighbors(v).iter().chain(g.in_neighbors(v));
    let mut counts = vec![0.0; grouping.k()];
    let mut degree = 0usize;
    for &u in nbrs {
        counts[grouping.assignment[u]] += 1.0;
        degree += 1;
    }
    if degree == 0 {
        return None;
    }
    counts.iter_mut().for_each(|c| *c /= degree as f64);
    Some(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub size: usize,
    pub attr_entropies: Vec<f64>,
    /// `(node, KL(mean || q_v))` for every non-isolated member.
    pub kl_terms: Vec<(usize, f64)>,
    pub isolated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityReport {
    pub h_attrib: f64,
    pub h_link: f64,
    pub per_group: Vec<GroupStats>,
    pub empty_groups: usize,
    pub zero_degree_skipped: usize,
    pub zero_membership_nodes: usize,
}

fn attr_entropies(g: &AttributedGraph, members: &[usize]) -> Vec<f64> {
    if members.is_empty() {
        return vec![0.0; g.n_attrs()];
    }
    let n = members.len() as f64;
    (0..g.n_attrs())
        .map(|i| {
            let f = members.iter().filter(|&&v| g.attr(v, i)).count() as f64;
            binary_entropy(f / n)
        })
        .collect()
}

fn kl_terms(g: &AttributedGraph, grouping: &Grouping, members: &[usize]) -> (Vec<(usize, f64)>, usize) {
    let dists: Vec<(usize, Vec<f64>)> = members
        .iter()
        .filter_map(|&v| link_distribution(g, grouping, v).map(|q| (v, q)))
        .collect();
    let isolated = members.len() - dists.len();
    if dists.is_empty() {
        return (Vec::new(), isolated);
    }
    let k = grouping.k();
    let mut mean = vec![0.0; k];
    for (_, q) in &dists {
        for (m, x) in mean.iter_mut().zip(q) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= dists.len() as f64);
    let mean = smooth(&mean);
    let terms = dists
        .into_iter()
        .map(|(v, q)| (v, kl(&mean, &smooth(&q))))
        .collect();
    (terms, isolated)
}

/// Mean over groups of the summed per-attribute entropy. Requires `L >= 1`.
pub fn attribute_homogeneity(g: &AttributedGraph, grouping: &Grouping) -> Result<f64> {
    if g.n_attrs() == 0 {
        return Err(Error::InvalidParam("attribute homogeneity needs at least one attribute".into()));
    }
    check_grouping(g, grouping)?;
    let total: f64 = grouping
        .groups
        .iter()
        .map(|members| attr_entropies(g, members).iter().sum::<f64>())
        .sum();
    Ok(total / grouping.k() as f64)
}

/// Mean over groups of the summed member divergences from the group's mean
/// link distribution.
pub fn link_homogeneity(g: &AttributedGraph, grouping: &Grouping) -> Result<f64> {
    check_grouping(g, grouping)?;
    let total: f64 = grouping
        .groups
        .iter()
        .map(|members| kl_terms(g, grouping, members).0.iter().map(|t| t.1).sum::<f64>())
        .sum();
    Ok(total / grouping.k() as f64)
}

fn check_grouping(g: &AttributedGraph, grouping: &Grouping) -> Result<()> {
    if grouping.assignment.len() != g.n_nodes() || grouping.k() == 0 {
        return Err(Error::Shape(format!(
            "grouping covers {} nodes in {} groups, graph has {} nodes",
            grouping.assignment.len(),
            grouping.k(),
            g.n_nodes()
        )));
    }
    Ok(())
}

pub fn homogeneity(g: &AttributedGraph, grouping: &Grouping) -> Result<HomogeneityReport> {
    check_grouping(g, grouping)?;
    let k = grouping.k() as f64;
    let per_group: Vec<GroupStats> = grouping
        .groups
        .iter()
        .map(|members| {
            let (kl_terms, isolated) = kl_terms(g, grouping, members);
            GroupStats {
                size: members.len(),
                attr_entropies: attr_entropies(g, members),
                kl_terms,
                isolated,
            }
        })
        .collect();
    let h_attrib = per_group.iter().map(|s| s.attr_entropies.iter().sum::<f64>()).sum::<f64>() / k;
    let h_link = per_group
        .iter()
        .map(|s| s.kl_terms.iter().map(|t| t.1).sum::<f64>())
        .sum::<f64>()
        / k;
    Ok(HomogeneityReport {
        h_attrib,
        h_link,
        empty_groups: per_group.iter().filter(|s| s.size == 0).count(),
        zero_degree_skipped: per_group.iter().map(|s| s.isolated).sum(),
        zero_membership_nodes: grouping.zero_rows,
        per_group,
    })
}

/// Column order of [`EvaluationReport::tsv_row`].
pub const EVAL_TSV_HEADER: &str =
    "k\talpha\tf\tell_e\tell_a\tr_l1\tx_l1\th_attrib\th_link\tx_zero_frac\tr_zero_frac";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub k: usize,
    pub alpha: f64,
    pub f: f64,
    pub ell_e: f64,
    pub ell_a: f64,
    pub r_l1: f64,
    pub x_l1: f64,
    pub h_attrib: f64,
    pub h_link: f64,
    pub x_zero_frac: f64,
    pub r_zero_frac: f64,
    pub homogeneity: HomogeneityReport,
}

impl EvaluationReport {
    pub fn tsv_row(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.k,
            self.alpha,
            self.f,
            self.ell_e,
            self.ell_a,
            self.r_l1,
            self.x_l1,
            self.h_attrib,
            self.h_link,
            self.x_zero_frac,
            self.r_zero_frac
        )
    }
}

/// Objective terms, homogeneity (attribute homogeneity is 0 when the graph
/// has no attributes) and sparsity of a fitted model.
pub fn evaluate(g: &AttributedGraph, m: &ModelParams, h: &Hyperparams) -> Result<EvaluationReport> {
    let parts = evaluate_objective(g, m, h)?;
    let grouping = main_role_grouping(m);
    let report = homogeneity(g, &grouping)?;
    let frac = |zeros: usize, total: usize| {
        if total == 0 {
            0.0
        } else {
            zeros as f64 / total as f64
        }
    };
    Ok(EvaluationReport {
        k: m.n_roles(),
        alpha: h.alpha,
        f: parts.f,
        ell_e: parts.ell_e,
        ell_a: parts.ell_a,
        r_l1: parts.r_l1,
        x_l1: parts.x_l1,
        h_attrib: report.h_attrib,
        h_link: report.h_link,
        x_zero_frac: frac(m.x.count_zeros(), m.x.as_slice().len()),
        r_zero_frac: frac(m.r.count_zeros(), m.r.as_slice().len()),
        homogeneity: report,
    })
}
