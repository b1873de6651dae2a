//! Node-attributed, unweighted graphs and their text formats.
//!
//! Edge file: one `src<TAB>dst` per line, `#` comments and blank lines
//! skipped. Attribute file: TSV with header `node<TAB>name_1...name_L` and
//! one `node_id<TAB>v_1...v_L` row per node, values in `{0,1}`.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    pub directed: bool,
    /// Duplicate edges and nodes without an attribute row become errors.
    pub strict: bool,
}

/// Immutable after construction; edges of undirected graphs are stored once
/// with `u < v`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributedGraph {
    node_ids: Vec<String>,
    directed: bool,
    edges: Vec<(usize, usize)>,
    out_adj: Vec<Vec<usize>>,
    in_adj: Vec<Vec<usize>>,
    attr_names: Vec<String>,
    attrs: Vec<bool>,
}

impl AttributedGraph {
    /// Build and validate a graph. `attrs` must have one row of length
    /// `attr_names.len()` per node (or be empty when there are no attributes).
    pub fn new(
        node_ids: Vec<String>,
        directed: bool,
        edges: impl IntoIterator<Item = (usize, usize)>,
        attr_names: Vec<String>,
        attrs: Vec<Vec<bool>>,
    ) -> Result<Self> {
        Self::build(node_ids, directed, edges, attr_names, attrs, true)
    }

    fn build(
        node_ids: Vec<String>,
        directed: bool,
        edges: impl IntoIterator<Item = (usize, usize)>,
        attr_names: Vec<String>,
        attrs: Vec<Vec<bool>>,
        strict_duplicates: bool,
    ) -> Result<Self> {
        let n = node_ids.len();
        let mut seen_ids = HashSet::with_capacity(n);
        for id in &node_ids {
            if !seen_ids.insert(id.as_str()) {
                return Err(Error::Format(format!("duplicate node id '{id}'")));
            }
        }

        let l = attr_names.len();
        let mut flat = Vec::with_capacity(n * l);
        if l > 0 || !attrs.is_empty() {
            if attrs.len() != n {
                return Err(Error::Shape(format!(
                    "{} attribute rows for {n} nodes",
                    attrs.len()
                )));
            }
            for (v, row) in attrs.iter().enumerate() {
                if row.len() != l {
                    return Err(Error::Shape(format!(
                        "node '{}' has {} attribute values, expected {l}",
                        node_ids[v],
                        row.len()
                    )));
                }
                flat.extend_from_slice(row);
            }
        }

        let mut out_adj = vec![Vec::new(); n];
        let mut in_adj = vec![Vec::new(); if directed { n } else { 0 }];
        let mut stored = Vec::new();
        let mut seen = HashSet::new();
        for (u, v) in edges {
            for idx in [u, v] {
                if idx >= n {
                    return Err(Error::OutOfRange { index: idx, len: n });
                }
            }
            if u == v {
                return Err(Error::SelfLoop(node_ids[u].clone()));
            }
            let key = if directed { (u, v) } else { (u.min(v), u.max(v)) };
            if !seen.insert(key) {
                if strict_duplicates {
                    return Err(Error::DuplicateEdge(
                        node_ids[u].clone(),
                        node_ids[v].clone(),
                    ));
                }
                warn!(
                    "skipping duplicate edge {} -> {}",
                    node_ids[u], node_ids[v]
                );
                continue;
            }
            stored.push(key);
            if directed {
                out_adj[key.0].push(key.1);
                in_adj[key.1].push(key.0);
            } else {
                out_adj[key.0].push(key.1);
                out_adj[key.1].push(key.0);
            }
        }

        Ok(AttributedGraph {
            node_ids,
            directed,
            edges: stored,
            out_adj,
            in_adj,
            attr_names,
            attrs: flat,
        })
    }

    /// Convenience constructor from string-labelled edges; nodes are indexed
    /// in first-appearance order. Intended for small hand-built graphs.
    pub fn from_labelled_edges(edges: &[(&str, &str)], directed: bool) -> Result<Self> {
        let mut ids = Vec::new();
        let mut index = HashMap::new();
        let mut pairs = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            let mut id_of = |s: &str| {
                *index.entry(s.to_string()).or_insert_with(|| {
                    ids.push(s.to_string());
                    ids.len() - 1
                })
            };
            let u = id_of(a);
            let v = id_of(b);
            pairs.push((u, v));
        }
        Self::new(ids, directed, pairs, Vec::new(), Vec::new())
    }

    pub fn n_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_attrs(&self) -> usize {
        self.attr_names.len()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn attr_names(&self) -> &[String] {
        &self.attr_names
    }

    /// Stored edges; `u < v` for undirected graphs.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Out-neighbors (directed) or all neighbors (undirected).
    #[inline]
    pub fn out_neighbors(&self, v: usize) -> &[usize] {
        &self.out_adj[v]
    }

    /// In-neighbors; empty for undirected graphs.
    #[inline]
    pub fn in_neighbors(&self, v: usize) -> &[usize] {
        if self.directed {
            &self.in_adj[v]
        } else {
            &[]
        }
    }

    #[inline]
    pub fn attr(&self, v: usize, i: usize) -> bool {
        self.attrs[v * self.attr_names.len() + i]
    }

    pub fn attr_row(&self, v: usize) -> &[bool] {
        let l = self.attr_names.len();
        &self.attrs[v * l..(v + 1) * l]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        if self.directed {
            self.out_adj[u].contains(&v)
        } else {
            self.out_adj[u].contains(&v) || self.out_adj[v].contains(&u)
        }
    }

    /// Incident-edge count (in- plus out-degree for directed graphs).
    pub fn degree(&self, v: usize) -> Result<usize> {
        let n = self.n_nodes();
        if v >= n {
            return Err(Error::OutOfRange { index: v, len: n });
        }
        Ok(self.out_adj[v].len() + self.in_neighbors(v).len())
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.node_ids.iter().position(|x| x == id)
    }

    pub fn load(edge_path: &Path, attr_path: Option<&Path>, opts: LoadOptions) -> Result<Self> {
        let edge_text = fs::read_to_string(edge_path)?;
        let mut ids: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut intern = |s: &str, ids: &mut Vec<String>| -> usize {
            if let Some(&i) = index.get(s) {
                return i;
            }
            ids.push(s.to_string());
            index.insert(s.to_string(), ids.len() - 1);
            ids.len() - 1
        };

        let mut pairs = Vec::new();
        for (lineno, raw) in edge_text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 2 || fields.iter().any(|f| f.is_empty()) {
                return Err(Error::Parse {
                    path: edge_path.to_path_buf(),
                    line: lineno + 1,
                    msg: format!("expected 'src<TAB>dst', got {line:?}"),
                });
            }
            if fields[0] == fields[1] {
                return Err(Error::SelfLoop(fields[0].to_string()));
            }
            let u = intern(fields[0], &mut ids);
            let v = intern(fields[1], &mut ids);
            pairs.push((u, v));
        }

        let mut attr_names = Vec::new();
        let mut rows: HashMap<usize, Vec<bool>> = HashMap::new();
        if let Some(path) = attr_path {
            let text = fs::read_to_string(path)?;
            let mut lines = text
                .lines()
                .enumerate()
                .map(|(i, l)| (i, l.trim_end_matches('\r')))
                .filter(|(_, l)| !l.trim().is_empty());
            let (_, header) = lines.next().ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                msg: "missing header".into(),
            })?;
            let mut cols = header.split('\t');
            if cols.next() != Some("node") {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: 1,
                    msg: "header must start with 'node'".into(),
                });
            }
            attr_names = cols.map(str::to_string).collect();
            let l = attr_names.len();
            for (lineno, line) in lines {
                let parse_err = |msg: String| Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    msg,
                };
                let fields: Vec<&str> = line.split('\t').collect();
                if fields.len() != l + 1 || fields[0].is_empty() {
                    return Err(parse_err(format!(
                        "expected node id and {l} values, got {} fields",
                        fields.len()
                    )));
                }
                let values = fields[1..]
                    .iter()
                    .map(|f| match *f {
                        "0" => Ok(false),
                        "1" => Ok(true),
                        other => Err(parse_err(format!(
                            "attribute value {other:?} is not 0 or 1"
                        ))),
                    })
                    .collect::<Result<Vec<bool>>>()?;
                let v = intern(fields[0], &mut ids);
                if rows.insert(v, values).is_some() {
                    return Err(parse_err(format!("duplicate row for node '{}'", fields[0])));
                }
            }
        }

        let attrs = if attr_path.is_some() {
            let l = attr_names.len();
            let mut missing = 0usize;
            let mut attrs = Vec::with_capacity(ids.len());
            for (v, id) in ids.iter().enumerate() {
                match rows.remove(&v) {
                    Some(r) => attrs.push(r),
                    None if opts.strict => return Err(Error::UnknownNode(format!(
                        "{id} (no attribute row)"
                    ))),
                    None => {
                        missing += 1;
                        attrs.push(vec![false; l]);
                    }
                }
            }
            if missing > 0 {
                warn!("{missing} nodes have no attribute row; treating as all-zero");
            }
            attrs
        } else {
            Vec::new()
        };

        Self::build(ids, opts.directed, pairs, attr_names, attrs, opts.strict)
    }

    /// Write the edge file, and the attribute file when `attr_path` is given.
    /// Isolated nodes only survive a round trip through the attribute file.
    pub fn save(&self, edge_path: &Path, attr_path: Option<&Path>) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(edge_path)?);
        for &(u, v) in &self.edges {
            writeln!(w, "{}\t{}", self.node_ids[u], self.node_ids[v])?;
        }
        w.flush()?;
        if let Some(path) = attr_path {
            let mut w = BufWriter::new(fs::File::create(path)?);
            write!(w, "node")?;
            for name in &self.attr_names {
                write!(w, "\t{name}")?;
            }
            writeln!(w)?;
            for (v, id) in self.node_ids.iter().enumerate() {
                write!(w, "{id}")?;
                for &a in self.attr_row(v) {
                    write!(w, "\t{}", a as u8)?;
                }
                writeln!(w)?;
            }
            w.flush()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn loads_simple_path() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(&dir, "e.tsv", "# comment\na\tb\n\nb\tc\n");
        let g = AttributedGraph::load(&e, None, LoadOptions::default()).unwrap();
        assert_eq!((g.n_nodes(), g.n_edges(), g.n_attrs()), (3, 2, 0));
        assert_eq!(g.degree(1).unwrap(), 2);
        assert_eq!(g.degree(0).unwrap(), 1);
        assert!(g.degree(3).is_err());
    }

    #[test]
    fn rejects_self_loop() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(&dir, "e.tsv", "a\ta\n");
        let err = AttributedGraph::load(&e, None, LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::SelfLoop(_)), "{err}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(&dir, "e.tsv", "a\tb\nb c\n");
        match AttributedGraph::load(&e, None, LoadOptions::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicates_dedup_or_fail_in_strict_mode() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(&dir, "e.tsv", "a\tb\nb\ta\n");
        let g = AttributedGraph::load(&e, None, LoadOptions::default()).unwrap();
        assert_eq!(g.n_edges(), 1);
        let strict = LoadOptions {
            strict: true,
            ..Default::default()
        };
        assert!(matches!(
            AttributedGraph::load(&e, None, strict),
            Err(Error::DuplicateEdge(..))
        ));
        // reversed arcs are distinct in a directed graph
        let directed = LoadOptions {
            directed: true,
            strict: true,
        };
        assert_eq!(AttributedGraph::load(&e, None, directed).unwrap().n_edges(), 2);
    }

    #[test]
    fn attribute_file_adds_isolated_nodes_and_validates_values() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(&dir, "e.tsv", "a\tb\n");
        let a = write(&dir, "a.tsv", "node\tx\ty\na\t1\t0\nb\t0\t1\nz\t1\t1\n");
        let g = AttributedGraph::load(&e, Some(&a), LoadOptions::default()).unwrap();
        assert_eq!(g.n_nodes(), 3);
        assert_eq!(g.node_ids()[2], "z");
        assert_eq!(g.degree(2).unwrap(), 0);
        assert_eq!(g.attr_row(2), &[true, true]);

        let bad = write(&dir, "bad.tsv", "node\tx\na\t2\n");
        assert!(matches!(
            AttributedGraph::load(&e, Some(&bad), LoadOptions::default()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn missing_attribute_row_policy() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(&dir, "e.tsv", "a\tb\n");
        let a = write(&dir, "a.tsv", "node\tx\na\t1\n");
        let g = AttributedGraph::load(&e, Some(&a), LoadOptions::default()).unwrap();
        assert_eq!(g.attr_row(1), &[false]);
        let strict = LoadOptions {
            strict: true,
            ..Default::default()
        };
        assert!(matches!(
            AttributedGraph::load(&e, Some(&a), strict),
            Err(Error::UnknownNode(_))
        ));
    }

    #[test]
    fn one_hot_roles_like_a_ward_contact_network() {
        // 75 people, each tagged with exactly one of four occupations.
        let dir = tempfile::tempdir().unwrap();
        let mut edges = String::new();
        for u in 0..75 {
            edges.push_str(&format!("p{u}\tp{}\n", (u + 1 + u % 5) % 75));
        }
        let mut attrs = String::from("node\tpatient\tadmin\tnurse\tdoctor\n");
        for u in 0..75 {
            let mut row = [0; 4];
            row[u % 4] = 1;
            attrs.push_str(&format!(
                "p{u}\t{}\t{}\t{}\t{}\n",
                row[0], row[1], row[2], row[3]
            ));
        }
        let e = write(&dir, "e.tsv", &edges);
        let a = write(&dir, "a.tsv", &attrs);
        let opts = LoadOptions {
            directed: true,
            strict: true,
        };
        let g = AttributedGraph::load(&e, Some(&a), opts).unwrap();
        assert_eq!(g.n_nodes(), 75);
        assert_eq!(g.n_attrs(), 4);
        for v in 0..75 {
            assert_eq!(g.attr_row(v).iter().filter(|&&x| x).count(), 1);
        }
        let out_sum: usize = (0..75).map(|v| g.out_neighbors(v).len()).sum();
        assert_eq!(out_sum, g.n_edges());
    }

    #[test]
    fn save_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let g = AttributedGraph::new(
            vec!["a".into(), "b".into(), "c".into(), "lonely".into()],
            false,
            [(0, 1), (2, 1)],
            vec!["x".into()],
            vec![vec![true], vec![false], vec![true], vec![false]],
        )
        .unwrap();
        let e = dir.path().join("e.tsv");
        let a = dir.path().join("a.tsv");
        g.save(&e, Some(&a)).unwrap();
        let back = AttributedGraph::load(&e, Some(&a), LoadOptions::default()).unwrap();
        assert_eq!(back, g);
    }
}
