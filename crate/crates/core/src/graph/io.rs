//! Text formats: tab-separated edge lists, CSV features, one-label-per-line files
//! and JSON splits. Loaders read a path; `parse_*` work on in-memory text and
//! `format_*` produce the exact text the loaders accept.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{DatasetSplit, DirectedGraph};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn load_edge_list(path: impl AsRef<Path>, num_nodes: usize) -> Result<DirectedGraph> {
    let path = path.as_ref();
    parse_edge_list(&read(path)?, num_nodes, path)
}

/// Parses `src<TAB>dst` lines. Blank lines and lines starting with `#` are skipped.
pub fn parse_edge_list(text: &str, num_nodes: usize, origin: &Path) -> Result<DirectedGraph> {
    if num_nodes == 0 {
        return Err(Error::Data {
            path: origin.to_path_buf(),
            message: "num_nodes must be positive".into(),
        });
    }
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut edges = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(|c: char| c == '\t' || c.is_whitespace()).filter(|f| !f.is_empty());
        let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(parse_err(line_no, format!("expected \"src<TAB>dst\", got {line:?}")));
        };
        let node = |s: &str| -> Result<usize> {
            let id: usize = s
                .parse()
                .map_err(|_| parse_err(line_no, format!("{s:?} is not a node id")))?;
            if id >= num_nodes {
                return Err(parse_err(
                    line_no,
                    format!("node id {id} out of range for {num_nodes} nodes"),
                ));
            }
            Ok(id)
        };
        edges.push((node(a)?, node(b)?));
    }
    DirectedGraph::new(num_nodes, edges)
}

pub fn format_edge_list(graph: &DirectedGraph) -> String {
    let mut out = String::new();
    for &(s, d) in graph.edges() {
        writeln!(out, "{s}\t{d}").expect("writing to a String");
    }
    out
}

pub fn load_features(path: impl AsRef<Path>, num_nodes: usize) -> Result<Matrix> {
    let path = path.as_ref();
    parse_features(&read(path)?, num_nodes, path)
}

/// Headerless CSV, row `i` holds the features of node `i`.
pub fn parse_features(text: &str, num_nodes: usize, origin: &Path) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(rows.len() + 1, |p| p.line() as usize);
        let mut row = Vec::with_capacity(record.len());
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                path: origin.to_path_buf(),
                line,
                message: format!("column {}: {field:?} is not a number", col + 1),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    line,
                    message: format!("column {}: non-finite value", col + 1),
                });
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.len() != num_nodes {
        return Err(Error::Data {
            path: origin.to_path_buf(),
            message: format!("{} feature rows for {num_nodes} nodes", rows.len()),
        });
    }
    Matrix::from_rows(&rows).map_err(|e| Error::Data {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn format_features(features: &Matrix) -> String {
    let mut out = String::new();
    for i in 0..features.rows() {
        let row = features.row(i);
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{v:?}").expect("writing to a String");
        }
        out.push('\n');
    }
    out
}

/// Labels and the inferred class count (`max + 1`).
pub fn load_labels(path: impl AsRef<Path>, num_nodes: usize) -> Result<(Vec<usize>, usize)> {
    let path = path.as_ref();
    parse_labels(&read(path)?, num_nodes, path)
}

pub fn parse_labels(text: &str, num_nodes: usize, origin: &Path) -> Result<(Vec<usize>, usize)> {
    let mut labels = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let l: usize = line.parse().map_err(|_| Error::Parse {
            path: origin.to_path_buf(),
            line: idx + 1,
            message: format!("{line:?} is not a class label"),
        })?;
        labels.push(l);
    }
    if labels.len() != num_nodes {
        return Err(Error::Data {
            path: origin.to_path_buf(),
            message: format!("{} labels for {num_nodes} nodes", labels.len()),
        });
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    Ok((labels, classes))
}

pub fn format_labels(labels: &[usize]) -> String {
    let mut out = String::with_capacity(labels.len() * 2);
    for l in labels {
        writeln!(out, "{l}").expect("writing to a String");
    }
    out
}

pub fn load_splits(path: impl AsRef<Path>, num_nodes: usize) -> Result<DatasetSplit> {
    let path = path.as_ref();
    let split: DatasetSplit = serde_json::from_str(&read(path)?).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    split.validate(num_nodes).map_err(|e| Error::Data {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(split)
}

pub fn format_splits(split: &DatasetSplit) -> String {
    serde_json::to_string(split).expect("splits serialize")
}
