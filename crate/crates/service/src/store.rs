use std::collections::BTreeMap;
use std::sync::Arc;

use landmark_core::io::ModelDocument;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct Job {
    pub job_id: String,
    pub kind: &'static str,
    pub status: JobState,
    /// Completed outer iterations over the iteration budget.
    pub progress: f64,
    pub iter: usize,
    pub max_outer: usize,
    /// Map produced by the job once it is done.
    pub map_id: Option<String>,
    /// Map being zoomed, for zoom jobs.
    pub parent_map: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug)]
pub struct StoredMap {
    pub parent: Option<String>,
    pub children: Vec<String>,
    pub model_doc: Arc<ModelDocument>,
    pub map_json: Arc<String>,
    pub coords_tsv: Arc<String>,
    pub landmark_ids: Vec<String>,
    pub split_landmark: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct LineageNode {
    pub map_id: String,
    pub k: usize,
    pub landmark_ids: Vec<String>,
    pub split_landmark: Option<String>,
    pub children: Vec<LineageNode>,
}

/// Maps and jobs of one session. Ids are sequential (`m1`, `j1`, ...), so
/// they are unique and a child is always registered after its parent.
#[derive(Debug, Default)]
pub struct Store {
    pub maps: BTreeMap<String, StoredMap>,
    pub jobs: BTreeMap<String, Job>,
    roots: Vec<String>,
    next_map: usize,
    next_job: usize,
}

impl Store {
    pub fn new_job(&mut self, kind: &'static str, max_outer: usize, parent_map: Option<String>) -> String {
        self.next_job += 1;
        let job_id = format!("j{}", self.next_job);
        self.jobs.insert(
            job_id.clone(),
            Job {
                job_id: job_id.clone(),
                kind,
                status: JobState::Queued,
                progress: 0.0,
                iter: 0,
                max_outer,
                map_id: None,
                parent_map,
                error: None,
            },
        );
        job_id
    }

    pub fn job_mut(&mut self, job_id: &str) -> Option<&mut Job> {
        self.jobs.get_mut(job_id)
    }

    pub fn insert_map(&mut self, mut map: StoredMap) -> String {
        self.next_map += 1;
        let id = format!("m{}", self.next_map);
        match map.parent.as_ref().and_then(|p| self.maps.get_mut(p)) {
            Some(parent) => parent.children.push(id.clone()),
            None => {
                map.parent = None;
                self.roots.push(id.clone());
            }
        }
        self.maps.insert(id.clone(), map);
        id
    }

    fn node(&self, id: &str) -> LineageNode {
        let m = &self.maps[id];
        LineageNode {
            map_id: id.to_string(),
            k: m.landmark_ids.len(),
            landmark_ids: m.landmark_ids.clone(),
            split_landmark: m.split_landmark.clone(),
            children: m.children.iter().map(|c| self.node(c)).collect(),
        }
    }

    pub fn lineage(&self) -> Vec<LineageNode> {
        self.roots.iter().map(|r| self.node(r)).collect()
    }
}
