//! Maps: landmarks labelled with attribute probabilities, roads weighted by
//! interaction probabilities, and locality-constrained zooming.
//!
//! Each role `k` is represented by a virtual node with membership `c_k e_k`.
//! Its attribute probabilities are `psi[k][i] = sigmoid(c_k w[k][i])` and the
//! road between roles `k` and `l` has probability
//! `omega[k][l] = 1 - exp(-c_k c_l r[k][l])`.

use std::fmt::Write as _;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::linalg::Matrix;
use crate::model::{phi, sigmoid, Hyperparams, ModelParams};
use crate::optimizer::{self, Anchor, FitResult, IterationRecord, INIT_HIGH, INIT_LOW};

pub use crate::model::CMode;

/// Memberships at or below this do not count as holding a role.
pub const AFFILIATION_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lineage {
    /// Reference to the parent model document.
    pub parent_ref: String,
    pub split_role: usize,
    pub split_landmark: String,
    /// Landmark ids of the new sub-roles.
    pub children: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkMap {
    pub landmark_ids: Vec<String>,
    pub attr_names: Vec<String>,
    /// K x L attribute probabilities.
    pub psi: Matrix,
    /// K x K road probabilities.
    pub omega: Matrix,
    /// N x K copy of the memberships.
    pub node_coords: Matrix,
    pub main_role: Vec<usize>,
    /// Virtual-node strength per landmark.
    pub c_used: Vec<f64>,
    pub directed: bool,
    pub lineage: Option<Lineage>,
}

impl NetworkMap {
    pub fn k(&self) -> usize {
        self.landmark_ids.len()
    }

    /// Population of each landmark by main role.
    pub fn populations(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k()];
        for &k in &self.main_role {
            counts[k] += 1;
        }
        counts
    }

    /// Up to `n` attributes with the highest probability for `landmark`,
    /// ties broken by attribute order.
    pub fn top_attributes(&self, landmark: usize, n: usize) -> Vec<(usize, f64)> {
        let mut row: Vec<(usize, f64)> = self.psi.row(landmark).iter().copied().enumerate().collect();
        row.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        row.truncate(n);
        row
    }

    /// Roads with `omega >= omega_min`; each unordered pair once for
    /// undirected maps.
    pub fn roads(&self, omega_min: f64) -> Vec<(usize, usize, f64)> {
        let k = self.k();
        let mut out = Vec::new();
        for a in 0..k {
            let start = if self.directed { 0 } else { a };
            for b in start..k {
                let w = self.omega[(a, b)];
                if w >= omega_min {
                    out.push((a, b, w));
                }
            }
        }
        out
    }

    /// Graphviz rendering: one node per landmark labelled with its top three
    /// attributes, one edge per road at or above `omega_min`.
    pub fn to_dot(&self, omega_min: f64) -> String {
        let (kind, arrow) = if self.directed {
            ("digraph", "->")
        } else {
            ("graph", "--")
        };
        let mut s = String::new();
        let _ = writeln!(s, "{kind} map {{");
        let _ = writeln!(s, "  node [shape=ellipse];");
        for (k, id) in self.landmark_ids.iter().enumerate() {
            let mut label = escape(id);
            for (i, p) in self.top_attributes(k, 3) {
                let _ = write!(label, "\\n{}:{:.2}", escape(&self.attr_names[i]), p);
            }
            let _ = writeln!(s, "  \"{}\" [label=\"{}\"];", escape(id), label);
        }
        for (a, b, w) in self.roads(omega_min) {
            let _ = writeln!(
                s,
                "  \"{}\" {arrow} \"{}\" [penwidth={:.2}, label=\"{:.2}\"];",
                escape(&self.landmark_ids[a]),
                escape(&self.landmark_ids[b]),
                5.0 * w,
                w
            );
        }
        s.push_str("}\n");
        s
    }

    /// N x K node coordinates as TSV with the landmark ids as header.
    pub fn coords_tsv(&self) -> String {
        let mut s = self.landmark_ids.join("\t");
        s.push('\n');
        for v in 0..self.node_coords.rows() {
            let row: Vec<String> = self.node_coords.row(v).iter().map(|x| x.to_string()).collect();
            s.push_str(&row.join("\t"));
            s.push('\n');
        }
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

pub fn default_landmark_ids(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("L{i}")).collect()
}

/// Index of the largest entry, lowest index on ties (0 for empty or all-NaN).
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Per-role virtual-node strengths.
pub fn virtual_strengths(m: &ModelParams, c_mode: CMode) -> Vec<f64> {
    let k = m.n_roles();
    match c_mode {
        CMode::Unit { c } => vec![c; k],
        CMode::Mean => (0..k)
            .map(|role| {
                let (sum, count) = (0..m.n_nodes())
                    .map(|v| m.x[(v, role)])
                    .filter(|&x| x > AFFILIATION_THRESHOLD)
                    .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
                if count == 0 {
                    warn!("no node holds role {role}; using c = 1");
                    1.0
                } else {
                    sum / count as f64
                }
            })
            .collect(),
    }
}

pub fn build_map(m: &ModelParams, g: &AttributedGraph, c_mode: CMode) -> Result<NetworkMap> {
    build_map_with_ids(m, g, c_mode, default_landmark_ids(m.n_roles()))
}

pub fn build_map_with_ids(
    m: &ModelParams,
    g: &AttributedGraph,
    c_mode: CMode,
    landmark_ids: Vec<String>,
) -> Result<NetworkMap> {
    m.check_graph(g)?;
    let k = m.n_roles();
    if landmark_ids.len() != k {
        return Err(Error::Shape(format!(
            "{} landmark ids for {k} roles",
            landmark_ids.len()
        )));
    }
    let c = virtual_strengths(m, c_mode);
    let psi = Matrix::from_fn(k, m.n_attrs(), |a, i| sigmoid(c[a] * m.w[(a, i)]));
    let omega = Matrix::from_fn(k, k, |a, b| phi(c[a] * c[b] * m.r[(a, b)]));
    let main_role = (0..m.n_nodes()).map(|v| argmax(m.x.row(v))).collect();
    Ok(NetworkMap {
        landmark_ids,
        attr_names: g.attr_names().to_vec(),
        psi,
        omega,
        node_coords: m.x.clone(),
        main_role,
        c_used: c,
        directed: m.directed,
        lineage: None,
    })
}

/// Drop the listed roles: X columns, R rows and columns, W rows.
pub fn reduce(m: &ModelParams, roles: &[usize]) -> Result<ModelParams> {
    let k = m.n_roles();
    if let Some(&bad) = roles.iter().find(|&&r| r >= k) {
        return Err(Error::OutOfRange { index: bad, len: k });
    }
    let keep: Vec<usize> = (0..k).filter(|r| !roles.contains(r)).collect();
    let all_nodes: Vec<usize> = (0..m.n_nodes()).collect();
    let all_attrs: Vec<usize> = (0..m.n_attrs()).collect();
    Ok(ModelParams {
        x: m.x.select(&all_nodes, &keep),
        r: m.r.select(&keep, &keep),
        w: m.w.select(&keep, &all_attrs),
        directed: m.directed,
    })
}

/// Zero every coordinate that involves a role flagged in `free`.
pub fn mask(m: &ModelParams, free: &[bool]) -> ModelParams {
    let mut out = m.clone();
    for (k, _) in free.iter().enumerate().filter(|(_, &f)| f) {
        for v in 0..out.x.rows() {
            out.x[(v, k)] = 0.0;
        }
        for j in 0..out.r.rows() {
            out.r[(k, j)] = 0.0;
            out.r[(j, k)] = 0.0;
        }
        out.w.row_mut(k).fill(0.0);
    }
    out
}

fn squared_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).powi(2))
        .sum()
}

/// Which parent role was split and where its sub-roles sit in the child.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitInfo {
    pub split_role: usize,
    pub subroles: Vec<usize>,
}

/// Squared distance between the child with its sub-roles removed and the
/// parent with the split role removed.
pub fn d_map(child: &ModelParams, parent: &ModelParams, split: &SplitInfo) -> Result<f64> {
    let a = reduce(child, &split.subroles)?;
    let b = reduce(parent, &[split.split_role])?;
    if a.x.rows() != b.x.rows() || a.n_roles() != b.n_roles() || a.n_attrs() != b.n_attrs() {
        return Err(Error::Shape("reduced models differ in shape".into()));
    }
    Ok(squared_diff(&a.x, &b.x) + squared_diff(&a.r, &b.r) + squared_diff(&a.w, &b.w))
}

#[derive(Debug, Clone)]
pub struct ZoomSpec {
    pub parent: ModelParams,
    pub split_role: usize,
    pub n_subroles: usize,
    pub beta: f64,
    /// Parent landmark ids; defaults to `L0..` when absent.
    pub parent_ids: Option<Vec<String>>,
    /// Reference recorded in the child's lineage.
    pub parent_ref: String,
}

impl ZoomSpec {
    pub fn new(parent: ModelParams, split_role: usize, beta: f64) -> Self {
        ZoomSpec {
            parent,
            split_role,
            n_subroles: 2,
            beta,
            parent_ids: None,
            parent_ref: String::new(),
        }
    }

    pub fn split_info(&self) -> SplitInfo {
        let base = self.parent.n_roles() - 1;
        SplitInfo {
            split_role: self.split_role,
            subroles: (base..base + self.n_subroles).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ZoomResult {
    pub params: ModelParams,
    pub map: NetworkMap,
    pub fit: FitResult,
    /// Parent with the split role removed and fresh sub-role blocks
    /// appended; the starting point and penalty target of the zoom.
    pub extended_parent: ModelParams,
}

/// Remove `split_role` and append `n_subroles` randomly initialized roles at
/// the end. Sub-role blocks are drawn in the order X columns, R (full
/// `K' x K'` draw of which only sub-role entries are used), W rows.
pub fn extend_parent(parent: &ModelParams, split_role: usize, n_subroles: usize, seed: u64) -> Result<ModelParams> {
    let base = reduce(parent, &[split_role])?;
    let keep = base.n_roles();
    let k = keep + n_subroles;
    let n = base.n_nodes();
    let l = base.n_attrs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || rng.random_range(INIT_LOW..=INIT_HIGH);

    let sub_x = Matrix::from_fn(n, n_subroles, |_, _| draw());
    let mut noise_r = Matrix::from_fn(k, k, |_, _| draw());
    let sub_w = Matrix::from_fn(n_subroles, l, |_, _| draw());
    if !parent.directed {
        noise_r.symmetrize();
    }

    let x = Matrix::from_fn(n, k, |v, a| {
        if a < keep {
            base.x[(v, a)]
        } else {
            sub_x[(v, a - keep)]
        }
    });
    let r = Matrix::from_fn(k, k, |a, b| {
        if a < keep && b < keep {
            base.r[(a, b)]
        } else {
            noise_r[(a, b)]
        }
    });
    let w = Matrix::from_fn(k, l, |a, i| {
        if a < keep {
            base.w[(a, i)]
        } else {
            sub_w[(a - keep, i)]
        }
    });
    Ok(ModelParams {
        x,
        r,
        w,
        directed: parent.directed,
    })
}

pub fn zoom(g: &AttributedGraph, spec: &ZoomSpec, h: &Hyperparams) -> Result<ZoomResult> {
    zoom_observed(g, spec, h, &mut |_| {})
}

/// Split one landmark into sub-roles while penalizing movement of the
/// others: maximizes `f(child) - beta * d_map(child, parent)`.
pub fn zoom_observed(
    g: &AttributedGraph,
    spec: &ZoomSpec,
    h: &Hyperparams,
    observer: &mut dyn FnMut(&IterationRecord),
) -> Result<ZoomResult> {
    let parent = &spec.parent;
    let k = parent.n_roles();
    if spec.split_role >= k {
        return Err(Error::OutOfRange {
            index: spec.split_role,
            len: k,
        });
    }
    if parent.n_nodes() != g.n_nodes() {
        return Err(Error::Shape(format!(
            "parent model has {} nodes, graph has {}",
            parent.n_nodes(),
            g.n_nodes()
        )));
    }
    parent.check_graph(g)?;
    if spec.n_subroles < 2 {
        return Err(Error::InvalidParam("a zoom needs at least 2 sub-roles".into()));
    }
    if !(spec.beta >= 0.0 && spec.beta.is_finite()) {
        return Err(Error::InvalidParam(format!("beta must be nonnegative, got {}", spec.beta)));
    }
    let parent_ids = spec.parent_ids.clone().unwrap_or_else(|| default_landmark_ids(k));
    if parent_ids.len() != k {
        return Err(Error::Shape(format!("{} parent ids for {k} roles", parent_ids.len())));
    }

    let extended = extend_parent(parent, spec.split_role, spec.n_subroles, h.seed)?;
    let child_k = extended.n_roles();
    let mut free = vec![false; child_k];
    free[k - 1..].iter_mut().for_each(|f| *f = true);
    let anchor = Anchor {
        target: extended.clone(),
        free,
        beta: spec.beta,
    };
    let fit = optimizer::optimize(g, extended.clone(), h, Some(&anchor), observer)?;

    let split_id = parent_ids[spec.split_role].clone();
    let children: Vec<String> = (1..=spec.n_subroles).map(|j| format!("{split_id}.{j}")).collect();
    let mut ids: Vec<String> = parent_ids
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != spec.split_role)
        .map(|(_, s)| s.clone())
        .collect();
    ids.extend(children.iter().cloned());

    let mut map = build_map_with_ids(&fit.params, g, h.c_mode, ids)?;
    map.lineage = Some(Lineage {
        parent_ref: spec.parent_ref.clone(),
        split_role: spec.split_role,
        split_landmark: split_id,
        children,
    });
    Ok(ZoomResult {
        params: fit.params.clone(),
        map,
        fit,
        extended_parent: extended,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(k: usize, n: usize, l: usize, directed: bool) -> ModelParams {
        let mut m = optimizer::initialize(n, k, l, directed, 11);
        m.w = Matrix::from_fn(k, l, |a, i| (a as f64) - (i as f64) * 0.5);
        m
    }

    fn graph(n: usize, l: usize) -> AttributedGraph {
        let ids = (0..n).map(|i| format!("n{i}")).collect();
        let names = (0..l).map(|i| format!("a{i}")).collect();
        let attrs = (0..n).map(|v| (0..l).map(|i| (v + i) % 2 == 0).collect()).collect();
        let edges = (1..n).map(|v| (v - 1, v));
        AttributedGraph::new(ids, false, edges, names, attrs).unwrap()
    }

    #[test]
    fn unit_mode_examples() {
        let g = graph(3, 1);
        let mut m = ModelParams::zeros(3, 2, 1, false);
        m.r[(0, 1)] = 4f64.ln();
        m.r[(1, 0)] = 4f64.ln();
        let map = build_map(&m, &g, CMode::Unit { c: 1.0 }).unwrap();
        assert_eq!(map.omega[(0, 0)], 0.0);
        assert!((map.omega[(0, 1)] - 0.75).abs() < 1e-15);
        assert_eq!(map.psi[(0, 0)], 0.5);
        assert_eq!(map.main_role, vec![0, 0, 0]);
    }

    #[test]
    fn mean_mode_averages_affiliated_nodes() {
        let g = graph(4, 1);
        let mut m = ModelParams::zeros(4, 2, 1, false);
        for v in 0..4 {
            m.x[(v, 0)] = if v % 2 == 0 { 2.0 } else { 0.0 };
        }
        m.r[(0, 0)] = 0.25;
        let c = virtual_strengths(&m, CMode::Mean);
        assert_eq!(c, vec![2.0, 1.0]);
        let map = build_map(&m, &g, CMode::Mean).unwrap();
        assert!((map.omega[(0, 0)] - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn reduce_selects_survivors() {
        let m = params(3, 4, 2, false);
        let red = reduce(&m, &[1]).unwrap();
        assert_eq!((red.x.cols(), red.r.rows(), red.w.rows(), red.w.cols()), (2, 2, 2, 2));
        assert_eq!(red.r[(1, 1)], m.r[(2, 2)]);
        assert_eq!(red.x[(3, 1)], m.x[(3, 2)]);
        assert_eq!(red.w.row(1), m.w.row(2));
        assert_eq!(reduce(&m, &[]).unwrap(), m);
        assert!(reduce(&m, &[3]).is_err());
    }

    #[test]
    fn d_map_examples() {
        let parent = params(3, 5, 2, false);
        let split = SplitInfo {
            split_role: 1,
            subroles: vec![2, 3],
        };
        let child = extend_parent(&parent, 1, 2, 3).unwrap();
        assert_eq!(d_map(&child, &parent, &split).unwrap(), 0.0);
        let mut moved = child.clone();
        moved.x[(2, 0)] += 0.01;
        let d = d_map(&moved, &parent, &split).unwrap();
        assert!((d - 1e-4).abs() < 1e-15, "{d}");
    }

    #[test]
    fn mask_zeroes_exactly_the_subrole_coordinates() {
        let m = params(4, 3, 2, true);
        let free = [false, false, true, true];
        let masked = mask(&m, &free);
        for a in 0..4 {
            for v in 0..3 {
                assert_eq!(masked.x[(v, a)] == 0.0, free[a] || m.x[(v, a)] == 0.0);
            }
            for b in 0..4 {
                let involves = free[a] || free[b];
                assert_eq!(masked.r[(a, b)] == 0.0, involves || m.r[(a, b)] == 0.0);
            }
            for i in 0..2 {
                if free[a] {
                    assert_eq!(masked.w[(a, i)], 0.0);
                } else {
                    assert_eq!(masked.w[(a, i)], m.w[(a, i)]);
                }
            }
        }
    }

    #[test]
    fn dot_lists_landmarks_and_thresholded_roads() {
        let g = graph(3, 2);
        let mut m = ModelParams::zeros(3, 3, 2, false);
        m.r = Matrix::from_rows(&[
            vec![1.0, 0.01, 0.0],
            vec![0.01, 0.0, 2.0],
            vec![0.0, 2.0, 0.5],
        ])
        .unwrap();
        let map = build_map(&m, &g, CMode::default()).unwrap();
        let dot = map.to_dot(0.05);
        assert_eq!(dot.matches("[label=").count(), 3);
        assert_eq!(dot.matches(" -- ").count(), 3);
        assert_eq!(map.roads(0.05).len(), 3);
        assert!(dot.contains("a0:0.50"));
    }

    #[test]
    fn top_attributes_sorted_by_probability() {
        let g = graph(3, 4);
        let mut m = ModelParams::zeros(3, 1, 4, false);
        m.w = Matrix::from_vec(1, 4, vec![0.1, 2.0, -1.0, 2.0]);
        let map = build_map(&m, &g, CMode::default()).unwrap();
        let top: Vec<usize> = map.top_attributes(0, 3).into_iter().map(|(i, _)| i).collect();
        assert_eq!(top, vec![1, 3, 0]);
    }
}
