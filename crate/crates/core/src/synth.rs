//! Planted-model synthetic graphs.
//!
//! Parameters are planted with a chosen road structure between `K` roles,
//! then a graph is drawn from the model: every eligible pair is linked with
//! probability `phi(x_u' R x_v)` and every attribute is set with probability
//! `sigmoid(w_i' x_v)`.

use std::fmt;
use std::str::FromStr;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::linalg::Matrix;
use crate::model::{phi, sigmoid, ModelParams};
use crate::par::{self, Execution};

/// Weight tying each attribute to its role.
pub const ATTRIBUTE_WEIGHT: f64 = 3.0;
/// Probability that an entry of a `rand` interaction matrix is nonzero.
pub const RAND_SUPPORT_PROB: f64 = 0.4;
/// Node pairs used to calibrate the interaction scale.
const CALIBRATION_PAIRS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Structure {
    /// Two disjoint role sets that only interact with each other.
    Bip,
    /// Role 0 interacts with every other role, nothing else.
    Star,
    /// Each role only interacts with itself.
    Comm,
    /// Each entry independently nonzero.
    Rand,
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Structure::Bip => "bip",
            Structure::Star => "star",
            Structure::Comm => "comm",
            Structure::Rand => "rand",
        })
    }
}

impl FromStr for Structure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bip" => Ok(Structure::Bip),
            "star" => Ok(Structure::Star),
            "comm" => Ok(Structure::Comm),
            "rand" => Ok(Structure::Rand),
            other => Err(Error::InvalidParam(format!(
                "unknown structure '{other}' (expected bip, star, comm or rand)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub structure: Structure,
    pub k: usize,
    pub n: usize,
    pub l: usize,
    /// Membership of a node in its primary role.
    pub membership_strength: f64,
    /// Off-role memberships are `noise * strength * U[0, 1]`.
    pub noise: f64,
    /// Target expected link density over all eligible pairs.
    pub density: f64,
    pub directed: bool,
    pub seed: u64,
}

impl PlantedSpec {
    pub fn new(structure: Structure, n: usize, seed: u64) -> Self {
        PlantedSpec {
            structure,
            k: 5,
            n,
            l: 5,
            membership_strength: 1.0,
            noise: 0.02,
            density: 0.05,
            directed: false,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParam(m));
        if self.k == 0 || self.n < self.k {
            return bad(format!("need 1 <= K <= N, got K = {}, N = {}", self.k, self.n));
        }
        if self.n < 2 {
            return bad("need at least 2 nodes".into());
        }
        if self.structure == Structure::Bip && self.k < 2 {
            return bad("bip needs K >= 2".into());
        }
        if self.structure == Structure::Star && self.k < 2 {
            return bad("star needs K >= 2".into());
        }
        if !(self.membership_strength > 0.0 && self.membership_strength.is_finite()) {
            return bad("membership strength must be positive".into());
        }
        if !(0.0..1.0).contains(&self.noise) {
            return bad(format!("noise must lie in [0, 1), got {}", self.noise));
        }
        if !(self.density > 0.0 && self.density < 1.0) {
            return bad(format!("density must lie in (0, 1), got {}", self.density));
        }
        Ok(())
    }
}

/// Nonzero pattern of the planted interaction matrix.
pub fn support(structure: Structure, k: usize, directed: bool, rng: &mut impl Rng) -> Vec<Vec<bool>> {
    let mut s = vec![vec![false; k]; k];
    match structure {
        Structure::Comm => (0..k).for_each(|a| s[a][a] = true),
        Structure::Star => {
            for l in 1..k {
                s[0][l] = true;
                s[l][0] = true;
            }
        }
        Structure::Bip => {
            let split = k / 2;
            for a in 0..split {
                for b in split..k {
                    s[a][b] = true;
                    s[b][a] = true;
                }
            }
        }
        Structure::Rand => {
            for a in 0..k {
                let start = if directed { 0 } else { a };
                for b in start..k {
                    let on = rng.random_bool(RAND_SUPPORT_PROB);
                    s[a][b] = on;
                    if !directed {
                        s[b][a] = on;
                    }
                }
            }
            if s.iter().flatten().all(|&x| !x) {
                let a = rng.random_range(0..k);
                let b = rng.random_range(0..k);
                s[a][b] = true;
                s[b][a] = true;
            }
        }
    }
    s
}

/// Plant parameters for `spec`. Draw order: support (rand only), R
/// magnitudes, off-role memberships, calibration pairs.
pub fn plant_params(spec: &PlantedSpec) -> Result<ModelParams> {
    spec.validate()?;
    let (k, n, l) = (spec.k, spec.n, spec.l);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let pattern = support(spec.structure, k, spec.directed, &mut rng);
    let mut r = Matrix::zeros(k, k);
    for a in 0..k {
        let start = if spec.directed { 0 } else { a };
        for b in start..k {
            if pattern[a][b] {
                let mag = rng.random_range(0.5..=1.5);
                r[(a, b)] = mag;
                if !spec.directed {
                    r[(b, a)] = mag;
                }
            }
        }
    }

    let strength = spec.membership_strength;
    let mut x = Matrix::zeros(n, k);
    for v in 0..n {
        let primary = v % k;
        for a in 0..k {
            x[(v, a)] = if a == primary {
                strength
            } else {
                spec.noise * strength * rng.random::<f64>()
            };
        }
    }

    let w = Matrix::from_fn(k, l, |a, i| if i % k == a { ATTRIBUTE_WEIGHT } else { 0.0 });

    let mut m = ModelParams {
        x,
        r,
        w,
        directed: spec.directed,
    };
    let scale = calibrate_scale(&m, spec.density, &mut rng);
    for v in m.r.as_mut_slice() {
        *v *= scale;
    }
    Ok(m)
}

/// Find `s` such that the mean of `phi(s * rho_uv)` over pairs hits
/// `target`, estimated on all pairs or a fixed-size sample.
fn calibrate_scale(m: &ModelParams, target: f64, rng: &mut impl Rng) -> f64 {
    let n = m.n_nodes();
    let total_pairs = n * (n - 1);
    let rhos: Vec<f64> = if total_pairs <= CALIBRATION_PAIRS {
        (0..n)
            .flat_map(|u| (0..n).filter(move |&v| v != u).map(move |v| (u, v)))
            .map(|(u, v)| m.rho(u, v))
            .collect()
    } else {
        (0..CALIBRATION_PAIRS)
            .map(|_| {
                let u = rng.random_range(0..n);
                let mut v = rng.random_range(0..n - 1);
                if v >= u {
                    v += 1;
                }
                m.rho(u, v)
            })
            .collect()
    };
    let density = |s: f64| rhos.iter().map(|&p| phi(s * p)).sum::<f64>() / rhos.len() as f64;

    let (mut lo, mut hi) = (1e-9f64, 1e9f64);
    if density(hi) < target {
        warn!("target density {target} unreachable; using the densest scale");
        return hi;
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if density(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo < 1.0 + 1e-12 {
            break;
        }
    }
    (lo * hi).sqrt()
}

/// Expected fraction of eligible pairs that are linked under `m`, computed
/// exactly over all pairs.
pub fn expected_density(m: &ModelParams, exec: Execution) -> f64 {
    let n = m.n_nodes();
    let total = par::sum(exec, n, |u| {
        (0..n).filter(|&v| v != u).map(|v| phi(m.rho(u, v))).sum::<f64>()
    });
    total / (n * (n - 1)) as f64
}

/// Draw a graph from `m`. Node `u` uses its own ChaCha stream for the pairs
/// it heads (`v > u`, or all `v != u` when directed) followed by its
/// attributes, so output does not depend on the execution mode.
pub fn sample_graph(m: &ModelParams, seed: u64, exec: Execution) -> Result<AttributedGraph> {
    m.validate()?;
    let n = m.n_nodes();
    let l = m.n_attrs();
    let directed = m.directed;
    let rows: Vec<(Vec<usize>, Vec<bool>)> = par::map(exec, n, |u| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u as u64);
        let start = if directed { 0 } else { u + 1 };
        let mut targets = Vec::new();
        for v in start..n {
            if v == u {
                continue;
            }
            let p = phi(m.rho(u, v));
            if rng.random::<f64>() < p {
                targets.push(v);
            }
        }
        let attrs = (0..l).map(|i| rng.random::<f64>() < sigmoid(m.mu(u, i))).collect();
        (targets, attrs)
    });
    let mut edges = Vec::new();
    let mut attrs = Vec::with_capacity(n);
    for (u, (targets, a)) in rows.into_iter().enumerate() {
        edges.extend(targets.into_iter().map(|v| (u, v)));
        attrs.push(a);
    }
    let ids = (0..n).map(|v| format!("n{v}")).collect();
    let names = (0..l).map(|i| format!("a{i}")).collect();
    AttributedGraph::new(ids, directed, edges, names, attrs)
}
