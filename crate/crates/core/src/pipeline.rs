//! Fit or zoom, then package the result as model and map documents. The CLI
//! and the HTTP service both go through here so their outputs agree byte
//! for byte.

use crate::cartographer::{build_map, zoom_observed, NetworkMap, ZoomSpec};
use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::io::{MapDocument, ModelDocument};
use crate::model::{Hyperparams, ModelParams};
use crate::optimizer::{fit_observed, IterationRecord};

#[derive(Debug, Clone)]
pub struct Outcome {
    pub params: ModelParams,
    pub map: NetworkMap,
    pub model_doc: ModelDocument,
    pub map_doc: MapDocument,
    pub records: Vec<IterationRecord>,
    pub converged: bool,
}

fn package(
    g: &AttributedGraph,
    h: &Hyperparams,
    params: ModelParams,
    map: NetworkMap,
    trace: Vec<f64>,
    records: Vec<IterationRecord>,
    converged: bool,
) -> Result<Outcome> {
    let model_doc = ModelDocument::new(&params, g, h, trace);
    let map_doc = MapDocument::new(&map, model_doc.reference()?);
    Ok(Outcome {
        params,
        map,
        model_doc,
        map_doc,
        records,
        converged,
    })
}

pub fn discover(
    g: &AttributedGraph,
    k: usize,
    h: &Hyperparams,
    observer: &mut dyn FnMut(&IterationRecord),
) -> Result<Outcome> {
    let res = fit_observed(g, k, h, observer)?;
    let map = build_map(&res.params, g, h.c_mode)?;
    package(g, h, res.params, map, res.state.f_trace, res.records, res.converged)
}

/// Split `split_role` of the parent model. `parent_ids` are the landmark ids
/// of the parent map (defaults when absent); the child's lineage points at
/// the parent model document.
pub fn zoom_model(
    g: &AttributedGraph,
    parent: &ModelDocument,
    parent_ids: Option<Vec<String>>,
    split_role: usize,
    beta: f64,
    h: &Hyperparams,
    observer: &mut dyn FnMut(&IterationRecord),
) -> Result<Outcome> {
    parent.check_graph(g)?;
    let params = parent.params()?;
    if split_role >= params.n_roles() {
        return Err(Error::OutOfRange {
            index: split_role,
            len: params.n_roles(),
        });
    }
    let spec = ZoomSpec {
        parent_ids,
        parent_ref: parent.reference()?,
        ..ZoomSpec::new(params, split_role, beta)
    };
    let h = Hyperparams { beta, ..h.clone() };
    let res = zoom_observed(g, &spec, &h, observer)?;
    package(
        g,
        &h,
        res.params,
        res.map,
        res.fit.state.f_trace,
        res.fit.records,
        res.fit.converged,
    )
}
