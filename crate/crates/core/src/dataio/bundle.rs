use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::{read_text, write_atomic};
use crate::graphs::Graph;
use crate::{Error, Result};

pub const BUNDLE_VERSION: &str = "1";

/// Contents of `meta.txt`.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleMeta {
    pub version: String,
    pub n_nodes: usize,
    pub n_attrs: usize,
    pub n_classes: usize,
    /// Comma-separated `class_names`, empty when absent.
    pub class_names: Vec<String>,
    /// Undirected edge count after deduplication, checked when present.
    pub n_edges: Option<usize>,
    /// Any other keys, kept verbatim.
    pub extra: BTreeMap<String, String>,
}

impl BundleMeta {
    pub fn for_graph(graph: &Graph) -> Self {
        Self {
            version: BUNDLE_VERSION.into(),
            n_nodes: graph.n_nodes(),
            n_attrs: graph.n_attrs(),
            n_classes: graph.n_classes(),
            class_names: Vec::new(),
            n_edges: Some(graph.edge_count()),
            extra: BTreeMap::new(),
        }
    }

    fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "version={}", self.version);
        let _ = writeln!(out, "n_nodes={}", self.n_nodes);
        let _ = writeln!(out, "n_attrs={}", self.n_attrs);
        let _ = writeln!(out, "n_classes={}", self.n_classes);
        if let Some(e) = self.n_edges {
            let _ = writeln!(out, "n_edges={e}");
        }
        if !self.class_names.is_empty() {
            let _ = writeln!(out, "class_names={}", self.class_names.join(","));
        }
        for (k, v) in &self.extra {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }
}

fn parse_usize(path: &Path, line: usize, s: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::parse(path, line, format!("expected a non-negative integer, got {s:?}")))
}

pub fn load_bundle_meta(dir: &Path) -> Result<BundleMeta> {
    let path = dir.join("meta.txt");
    let text = read_text(&path)?;
    let mut kv = BTreeMap::new();
    let mut lines = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(&path, i + 1, "expected key=value"))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
        lines.insert(k.trim().to_string(), i + 1);
    }
    let version = kv.remove("version").unwrap_or_default();
    if version != BUNDLE_VERSION {
        return Err(Error::Version {
            path,
            expected: BUNDLE_VERSION.into(),
            found: version,
        });
    }
    let mut required = |key: &str| -> Result<usize> {
        let v = kv
            .remove(key)
            .ok_or_else(|| Error::parse(&path, 0, format!("missing key {key}")))?;
        parse_usize(&path, lines[key], &v)
    };
    let n_nodes = required("n_nodes")?;
    let n_attrs = required("n_attrs")?;
    let n_classes = required("n_classes")?;
    let n_edges = match kv.remove("n_edges") {
        Some(v) => Some(parse_usize(&path, lines["n_edges"], &v)?),
        None => None,
    };
    let class_names = kv
        .remove("class_names")
        .map(|s| s.split(',').map(|c| c.trim().to_string()).collect())
        .unwrap_or_default();
    Ok(BundleMeta {
        version,
        n_nodes,
        n_attrs,
        n_classes,
        class_names,
        n_edges,
        extra: kv,
    })
}

fn node_id(path: &Path, line: usize, s: &str, n_nodes: usize, context: &str) -> Result<usize> {
    let id = parse_usize(path, line, s)?;
    if id >= n_nodes {
        return Err(Error::NodeOutOfRange {
            id,
            n_nodes,
            context: format!("{}:{line} ({context})", path.display()),
        });
    }
    Ok(id)
}

/// Reads a bundle directory. Reverse edges are added, duplicates merged and
/// self-loops dropped. `split.txt` is optional.
pub fn load_graph_bundle(dir: &Path) -> Result<Graph> {
    let meta = load_bundle_meta(dir)?;
    let n = meta.n_nodes;

    let path = dir.join("edges.tsv");
    let mut edges = Vec::new();
    for (i, line) in read_text(&path)?.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 2 {
            return Err(Error::parse(&path, i + 1, "expected two node ids"));
        }
        edges.push((
            node_id(&path, i + 1, cols[0], n, "edge")?,
            node_id(&path, i + 1, cols[1], n, "edge")?,
        ));
    }

    let path = dir.join("features.csv");
    let mut attrs = Array2::zeros((n, meta.n_attrs));
    let mut rows = 0;
    for (i, line) in read_text(&path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if rows == n {
            return Err(Error::parse(&path, i + 1, format!("more than {n} feature rows")));
        }
        let values: Vec<&str> = line.split(',').collect();
        if values.len() != meta.n_attrs {
            return Err(Error::parse(
                &path,
                i + 1,
                format!("expected {} columns, got {}", meta.n_attrs, values.len()),
            ));
        }
        for (j, v) in values.iter().enumerate() {
            attrs[[rows, j]] = v
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::parse(&path, i + 1, format!("bad number {v:?}")))?;
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::parse(&path, rows, format!("expected {n} feature rows, got {rows}")));
    }

    let path = dir.join("labels.txt");
    let mut labels = Vec::with_capacity(n);
    for (i, line) in read_text(&path)?.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: i64 = line
            .parse()
            .map_err(|_| Error::parse(&path, i + 1, format!("bad label {line:?}")))?;
        labels.push(match v {
            -1 => None,
            c if c >= 0 && (c as usize) < meta.n_classes => Some(c as usize),
            c => {
                return Err(Error::parse(
                    &path,
                    i + 1,
                    format!("label {c} outside -1..{}", meta.n_classes),
                ))
            }
        });
    }
    if labels.len() != n {
        return Err(Error::parse(&path, labels.len(), format!("expected {n} labels, got {}", labels.len())));
    }

    let mut graph = Graph::new(n, &edges, attrs, labels)?;
    if let Some(expected) = meta.n_edges {
        if graph.edge_count() != expected {
            return Err(Error::Shape(format!(
                "{}: meta declares {expected} edges, edge list has {}",
                dir.display(),
                graph.edge_count()
            )));
        }
    }

    let path = dir.join("split.txt");
    if path.exists() {
        let mut train = vec![false; n];
        let mut test = vec![false; n];
        for (i, line) in read_text(&path)?.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 2 {
                return Err(Error::parse(&path, i + 1, "expected `id train|test`"));
            }
            let id = node_id(&path, i + 1, cols[0], n, "split")?;
            match cols[1] {
                "train" => train[id] = true,
                "test" => test[id] = true,
                other => return Err(Error::parse(&path, i + 1, format!("unknown split {other:?}"))),
            }
        }
        graph.set_split(train, test)?;
    }
    Ok(graph)
}

/// Writes `graph` as a bundle; every file is replaced atomically.
pub fn save_graph_bundle(graph: &Graph, meta: &BundleMeta, dir: &Path) -> Result<()> {
    if meta.n_nodes != graph.n_nodes() || meta.n_attrs != graph.n_attrs() {
        return Err(Error::Shape("bundle meta does not describe the graph".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut edges = String::new();
    for (a, b) in graph.edges() {
        let _ = writeln!(edges, "{a}\t{b}");
    }
    let mut features = String::new();
    for row in graph.attributes.rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        features.push_str(&cells.join(","));
        features.push('\n');
    }
    let mut labels = String::new();
    for l in &graph.labels {
        match l {
            Some(c) => {
                let _ = writeln!(labels, "{c}");
            }
            None => labels.push_str("-1\n"),
        }
    }
    let mut split = String::new();
    for i in 0..graph.n_nodes() {
        if graph.train_mask[i] {
            let _ = writeln!(split, "{i} train");
        } else if graph.test_mask[i] {
            let _ = writeln!(split, "{i} test");
        }
    }
    let meta = BundleMeta {
        n_edges: Some(graph.edge_count()),
        ..meta.clone()
    };
    write_atomic(&dir.join("edges.tsv"), edges.as_bytes())?;
    write_atomic(&dir.join("features.csv"), features.as_bytes())?;
    write_atomic(&dir.join("labels.txt"), labels.as_bytes())?;
    write_atomic(&dir.join("split.txt"), split.as_bytes())?;
    write_atomic(&dir.join("meta.txt"), meta.to_text().as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{generate_sbm, label_split, SbmSpec};

    fn write(dir: &Path, name: &str, text: &str) {
        fs::write(dir.join(name), text).unwrap();
    }

    fn tiny(dir: &Path, edges: &str) {
        write(dir, "meta.txt", "version=1\nn_nodes=3\nn_attrs=2\nn_classes=2\n");
        write(dir, "edges.tsv", edges);
        write(dir, "features.csv", "0,1\n0.5,0.5\n1,0\n");
        write(dir, "labels.txt", "0\n1\n-1\n");
    }

    #[test]
    fn empty_edge_file_gives_edgeless_graph() {
        let dir = tempfile::tempdir().unwrap();
        tiny(dir.path(), "");
        let g = load_graph_bundle(dir.path()).unwrap();
        assert_eq!(g.n_nodes(), 3);
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.labels, vec![Some(0), Some(1), None]);
    }

    #[test]
    fn both_directions_dedup_to_one_edge() {
        let dir = tempfile::tempdir().unwrap();
        tiny(dir.path(), "0\t1\n1\t0\n2\t2\n");
        let g = load_graph_bundle(dir.path()).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert!(g.has_edge(1, 0));
    }

    #[test]
    fn errors_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        tiny(dir.path(), "0\t7\n");
        assert!(matches!(load_graph_bundle(dir.path()), Err(Error::NodeOutOfRange { id: 7, .. })));

        tiny(dir.path(), "0 1 2\n");
        assert!(matches!(load_graph_bundle(dir.path()), Err(Error::Parse { line: 1, .. })));

        tiny(dir.path(), "");
        write(dir.path(), "meta.txt", "version=2\nn_nodes=3\nn_attrs=2\nn_classes=2\n");
        assert!(matches!(load_graph_bundle(dir.path()), Err(Error::Version { .. })));

        tiny(dir.path(), "");
        write(dir.path(), "split.txt", "0 train\n5 test\n");
        assert!(matches!(load_graph_bundle(dir.path()), Err(Error::NodeOutOfRange { id: 5, .. })));
    }

    #[test]
    fn save_load_is_idempotent() {
        let mut g = generate_sbm(&SbmSpec::default()).unwrap();
        let (train, test) = label_split(&g.labels, 5, 3).unwrap();
        g.set_split(train, test).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let mut meta = BundleMeta::for_graph(&g);
        meta.class_names = vec!["a".into(), "b".into(), "c".into()];
        save_graph_bundle(&g, &meta, dir.path()).unwrap();
        let once = load_graph_bundle(dir.path()).unwrap();
        assert_eq!(once, g);
        let dir2 = tempfile::tempdir().unwrap();
        save_graph_bundle(&once, &load_bundle_meta(dir.path()).unwrap(), dir2.path()).unwrap();
        assert_eq!(load_graph_bundle(dir2.path()).unwrap(), once);
        assert_eq!(load_bundle_meta(dir2.path()).unwrap().class_names, meta.class_names);
    }
}
