//! JSON documents for models and maps, plus the optimization log format.
//!
//! Numbers are written with the shortest representation that round-trips,
//! so a document read back reproduces every matrix entry exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cartographer::{Lineage, NetworkMap};
use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::linalg::Matrix;
use crate::model::{Hyperparams, ModelParams};
use crate::optimizer::IterationRecord;

pub const MODEL_VERSION: u32 = 1;
pub const MAP_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub version: u32,
    #[serde(rename = "K")]
    pub k: usize,
    pub directed: bool,
    pub node_ids: Vec<String>,
    pub attr_names: Vec<String>,
    #[serde(rename = "X")]
    pub x: Matrix,
    #[serde(rename = "R")]
    pub r: Matrix,
    #[serde(rename = "W")]
    pub w: Matrix,
    pub hyperparams: Hyperparams,
    pub objective_trace: Vec<f64>,
}

impl ModelDocument {
    pub fn new(
        m: &ModelParams,
        g: &AttributedGraph,
        hyperparams: &Hyperparams,
        objective_trace: Vec<f64>,
    ) -> Self {
        ModelDocument {
            version: MODEL_VERSION,
            k: m.n_roles(),
            directed: m.directed,
            node_ids: g.node_ids().to_vec(),
            attr_names: g.attr_names().to_vec(),
            x: m.x.clone(),
            r: m.r.clone(),
            w: m.w.clone(),
            hyperparams: hyperparams.clone(),
            objective_trace,
        }
    }

    /// Validated parameters; `x` may be empty-width when `K` is 0, which
    /// validation rejects.
    pub fn params(&self) -> Result<ModelParams> {
        if self.version != MODEL_VERSION {
            return Err(Error::Format(format!(
                "unsupported model version {}",
                self.version
            )));
        }
        let n = self.node_ids.len();
        // nested arrays lose the column count of empty rows
        let x = if self.x.rows() == 0 && n == 0 {
            Matrix::zeros(0, self.k)
        } else {
            self.x.clone()
        };
        let w = if self.attr_names.is_empty() {
            Matrix::zeros(self.k, 0)
        } else {
            self.w.clone()
        };
        if x.rows() != n || w.cols() != self.attr_names.len() || self.r.rows() != self.k {
            return Err(Error::Shape(format!(
                "model document: X has {} rows for {n} nodes, W has {} columns for {} attributes",
                x.rows(),
                w.cols(),
                self.attr_names.len()
            )));
        }
        let m = ModelParams {
            x,
            r: self.r.clone(),
            w,
            directed: self.directed,
        };
        m.validate()?;
        Ok(m)
    }

    /// Ensure the document describes `g` (same node ids, attributes and
    /// directedness).
    pub fn check_graph(&self, g: &AttributedGraph) -> Result<()> {
        if self.node_ids != g.node_ids() {
            return Err(Error::Shape("model node ids do not match the graph".into()));
        }
        if self.attr_names != g.attr_names() {
            return Err(Error::Shape("model attribute names do not match the graph".into()));
        }
        if self.directed != g.is_directed() {
            return Err(Error::Shape("model and graph directedness differ".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Content address of the serialized document.
    pub fn reference(&self) -> Result<String> {
        Ok(content_ref(&self.to_json()?))
    }
}

pub fn content_ref(text: &str) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(text.as_bytes())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapDocument {
    pub version: u32,
    #[serde(rename = "K")]
    pub k: usize,
    pub landmark_ids: Vec<String>,
    pub psi: Matrix,
    pub omega: Matrix,
    pub c_used: Vec<f64>,
    pub main_role: Vec<usize>,
    pub lineage: Option<Lineage>,
    pub attr_names: Vec<String>,
    pub model_ref: String,
    pub directed: bool,
}

impl MapDocument {
    pub fn new(map: &NetworkMap, model_ref: String) -> Self {
        MapDocument {
            version: MAP_VERSION,
            k: map.k(),
            landmark_ids: map.landmark_ids.clone(),
            psi: map.psi.clone(),
            omega: map.omega.clone(),
            c_used: map.c_used.clone(),
            main_role: map.main_role.clone(),
            lineage: map.lineage.clone(),
            attr_names: map.attr_names.clone(),
            model_ref,
            directed: map.directed,
        }
    }

    /// Rebuild a map without node coordinates (those live in the model).
    pub fn to_map(&self) -> Result<NetworkMap> {
        if self.version != MAP_VERSION {
            return Err(Error::Format(format!("unsupported map version {}", self.version)));
        }
        let psi = if self.attr_names.is_empty() {
            Matrix::zeros(self.k, 0)
        } else {
            self.psi.clone()
        };
        if self.landmark_ids.len() != self.k
            || self.omega.rows() != self.k
            || !self.omega.is_square()
            || psi.rows() != self.k
            || psi.cols() != self.attr_names.len()
            || self.c_used.len() != self.k
            || self.main_role.iter().any(|&r| r >= self.k)
        {
            return Err(Error::Shape("map document fields disagree on K".into()));
        }
        Ok(NetworkMap {
            landmark_ids: self.landmark_ids.clone(),
            attr_names: self.attr_names.clone(),
            psi,
            omega: self.omega.clone(),
            node_coords: Matrix::zeros(self.main_role.len(), self.k),
            main_role: self.main_role.clone(),
            c_used: self.c_used.clone(),
            directed: self.directed,
            lineage: self.lineage.clone(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

pub const LOG_HEADER: &str = "iter\tf\tell_e\tell_a\tr_l1\tx_l1\twall_ms";

pub fn log_line(rec: &IterationRecord) -> String {
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}\t{:.3}",
        rec.iter, rec.f, rec.ell_e, rec.ell_a, rec.r_l1, rec.x_l1, rec.wall_ms
    )
}

/// Parse the `f` column of an optimization log.
pub fn read_log_objectives(text: &str) -> Result<Vec<f64>> {
    let mut lines = text.lines();
    if lines.next() != Some(LOG_HEADER) {
        return Err(Error::Format("optimization log header mismatch".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split('\t')
                .nth(1)
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| Error::Format(format!("bad log line {l:?}")))
        })
        .collect()
}
