//! CSV ingestion and export for networks, covariates, masks, and partitions.
//!
//! On-disk node ids are 1-based; everything in memory is 0-based. The
//! edge-list format (`i,j,w`) is the canonical interchange; dense matrices are
//! supported for small examples.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{AdjacencyMatrix, CovariateTensor, MaskSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjacencyFormat {
    DenseCsv,
    EdgeListCsv,
}

impl AdjacencyFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "dense" | "dense-csv" => Ok(AdjacencyFormat::DenseCsv),
            "edges" | "edge-list" | "edge-list-csv" => Ok(AdjacencyFormat::EdgeListCsv),
            other => Err(Error::config(format!("unknown adjacency format `{other}`"))),
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut lines = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| io_err(path, e))?;
        if !line.trim().is_empty() {
            lines.push(line);
        }
    }
    Ok(lines)
}

/// Load an adjacency matrix in either supported format. For edge lists the
/// node count is inferred from the largest id unless `nodes` is given.
pub fn load_adjacency(
    path: &Path,
    format: AdjacencyFormat,
    nodes: Option<usize>,
) -> Result<AdjacencyMatrix> {
    match format {
        AdjacencyFormat::DenseCsv => load_adjacency_dense(path),
        AdjacencyFormat::EdgeListCsv => load_adjacency_edges(path, nodes),
    }
}

pub fn load_adjacency_dense(path: &Path) -> Result<AdjacencyMatrix> {
    let mut lines = read_lines(path)?;
    if lines.is_empty() {
        return Err(Error::data(format!("{}: empty dense matrix", path.display())));
    }
    // Optional header: skip the first row when it does not parse as numbers.
    let first_numeric =
        lines[0].split(',').all(|tok| tok.trim().parse::<u64>().is_ok());
    if !first_numeric {
        lines.remove(0);
    }
    let n = lines.len();
    let mut entries = Vec::with_capacity(n * n);
    for (row, line) in lines.iter().enumerate() {
        let toks: Vec<&str> = line.split(',').map(str::trim).collect();
        if toks.len() != n {
            return Err(Error::data(format!(
                "{}: row {} has {} columns, expected {n}",
                path.display(),
                row + 1,
                toks.len()
            )));
        }
        for tok in toks {
            let v: u64 = tok.parse().map_err(|_| {
                Error::data(format!(
                    "{}: weight `{tok}` is not a nonnegative integer",
                    path.display()
                ))
            })?;
            entries.push(v);
        }
    }
    AdjacencyMatrix::from_dense(n, entries)
}

pub fn load_adjacency_edges(path: &Path, nodes: Option<usize>) -> Result<AdjacencyMatrix> {
    let lines = read_lines(path)?;
    let mut rows = lines.iter();
    let header = rows.next().ok_or_else(|| {
        Error::data(format!("{}: empty edge list", path.display()))
    })?;
    let cols: Vec<String> =
        header.split(',').map(|c| c.trim().to_ascii_lowercase()).collect();
    if cols != ["i", "j", "w"] {
        return Err(Error::data(format!(
            "{}: edge list header must be `i,j,w`, found `{header}`",
            path.display()
        )));
    }
    let mut edges: Vec<(usize, usize, u64)> = Vec::new();
    let mut max_id = 0usize;
    for line in rows {
        let toks: Vec<&str> = line.split(',').map(str::trim).collect();
        if toks.len() != 3 {
            return Err(Error::data(format!("{}: bad edge row `{line}`", path.display())));
        }
        let i: usize = toks[0]
            .parse()
            .map_err(|_| Error::data(format!("bad node id `{}`", toks[0])))?;
        let j: usize = toks[1]
            .parse()
            .map_err(|_| Error::data(format!("bad node id `{}`", toks[1])))?;
        let w: u64 = toks[2].parse().map_err(|_| {
            Error::data(format!("weight `{}` is not a nonnegative integer", toks[2]))
        })?;
        if i == 0 || j == 0 {
            return Err(Error::data("node ids are 1-based".to_string()));
        }
        if i == j {
            return Err(Error::data(format!("self-loop on node {i} is not allowed")));
        }
        max_id = max_id.max(i).max(j);
        edges.push((i - 1, j - 1, w));
    }
    let n = match nodes {
        Some(n) => {
            if max_id > n {
                return Err(Error::data(format!(
                    "edge references node {max_id} beyond declared count {n}"
                )));
            }
            n
        }
        None => max_id,
    };
    let mut a = AdjacencyMatrix::zeros(n);
    let mut seen: HashMap<(usize, usize), u64> = HashMap::new();
    for (i, j, w) in edges {
        let key = (i.min(j), i.max(j));
        if let Some(&prev) = seen.get(&key) {
            if prev != w {
                return Err(Error::data(format!(
                    "conflicting duplicate edge ({}, {}): {prev} vs {w}",
                    key.0 + 1,
                    key.1 + 1
                )));
            }
            continue;
        }
        seen.insert(key, w);
        a.set_pair(i, j, w);
    }
    Ok(a)
}

pub fn save_adjacency_edges(path: &Path, a: &AdjacencyMatrix) -> Result<()> {
    let mut f = File::create(path).map_err(|e| io_err(path, e))?;
    writeln!(f, "i,j,w").map_err(|e| io_err(path, e))?;
    for (i, j) in a.nonzero_pairs() {
        writeln!(f, "{},{},{}", i + 1, j + 1, a.get(i, j)).map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

/// Load long-format pair covariates (`i,j,y1,...,yq`), requiring exactly one
/// row per unordered pair.
pub fn load_covariates(path: &Path, n: usize) -> Result<CovariateTensor> {
    let lines = read_lines(path)?;
    let mut rows = lines.iter();
    let header =
        rows.next().ok_or_else(|| Error::data(format!("{}: empty file", path.display())))?;
    let cols: Vec<String> = header.split(',').map(|c| c.trim().to_ascii_lowercase()).collect();
    if cols.len() < 3 || cols[0] != "i" || cols[1] != "j" {
        return Err(Error::data(format!(
            "{}: covariate header must be `i,j,y1,...`, found `{header}`",
            path.display()
        )));
    }
    let q = cols.len() - 2;
    let pairs = n * (n - 1) / 2;
    let mut values = vec![f64::NAN; pairs * q];
    let mut filled = vec![false; pairs];
    for line in rows {
        let toks: Vec<&str> = line.split(',').map(str::trim).collect();
        if toks.len() != q + 2 {
            return Err(Error::data(format!("{}: bad covariate row `{line}`", path.display())));
        }
        let i: usize =
            toks[0].parse().map_err(|_| Error::data(format!("bad node id `{}`", toks[0])))?;
        let j: usize =
            toks[1].parse().map_err(|_| Error::data(format!("bad node id `{}`", toks[1])))?;
        if i == 0 || j == 0 || i > n || j > n || i == j {
            return Err(Error::data(format!("covariate row names invalid pair ({i}, {j})")));
        }
        let idx = super::pair_index(n, i - 1, j - 1);
        let mut parsed = Vec::with_capacity(q);
        for tok in &toks[2..] {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::data(format!("bad covariate value `{tok}`")))?;
            parsed.push(v);
        }
        if filled[idx] {
            let existing = &values[idx * q..(idx + 1) * q];
            if existing != parsed.as_slice() {
                return Err(Error::data(format!(
                    "duplicate pair ({i}, {j}) with conflicting covariates"
                )));
            }
            continue;
        }
        values[idx * q..(idx + 1) * q].copy_from_slice(&parsed);
        filled[idx] = true;
    }
    if let Some(missing) = filled.iter().position(|f| !f) {
        // Invert the pair index for the error message.
        for i in 0..n {
            for j in (i + 1)..n {
                if super::pair_index(n, i, j) == missing {
                    return Err(Error::data(format!(
                        "missing covariates for pair ({}, {})",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
    }
    CovariateTensor::from_values(n, q, values)
}

pub fn save_covariates(path: &Path, cov: &CovariateTensor) -> Result<()> {
    let mut f = File::create(path).map_err(|e| io_err(path, e))?;
    let header: Vec<String> =
        (1..=cov.dim()).map(|s| format!("y{s}")).collect();
    writeln!(f, "i,j,{}", header.join(",")).map_err(|e| io_err(path, e))?;
    let n = cov.num_nodes();
    for i in 0..n {
        for j in (i + 1)..n {
            let vals: Vec<String> = cov.pair(i, j).iter().map(|v| format!("{v}")).collect();
            writeln!(f, "{},{},{}", i + 1, j + 1, vals.join(","))
                .map_err(|e| io_err(path, e))?;
        }
    }
    Ok(())
}

pub fn save_mask(path: &Path, mask: &MaskSet) -> Result<()> {
    let mut f = File::create(path).map_err(|e| io_err(path, e))?;
    writeln!(f, "i,j,original").map_err(|e| io_err(path, e))?;
    for &(i, j, w) in mask.entries() {
        writeln!(f, "{},{},{}", i + 1, j + 1, w).map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

pub fn load_mask(path: &Path) -> Result<MaskSet> {
    let lines = read_lines(path)?;
    let mut rows = lines.iter();
    let header =
        rows.next().ok_or_else(|| Error::data(format!("{}: empty file", path.display())))?;
    if header.split(',').map(str::trim).collect::<Vec<_>>() != ["i", "j", "original"] {
        return Err(Error::data("mask header must be `i,j,original`".to_string()));
    }
    let mut entries = Vec::new();
    for line in rows {
        let toks: Vec<&str> = line.split(',').map(str::trim).collect();
        if toks.len() != 3 {
            return Err(Error::data(format!("bad mask row `{line}`")));
        }
        let i: usize = toks[0].parse().map_err(|_| Error::data("bad mask node id"))?;
        let j: usize = toks[1].parse().map_err(|_| Error::data("bad mask node id"))?;
        let w: u64 = toks[2].parse().map_err(|_| Error::data("bad mask weight"))?;
        entries.push((i - 1, j - 1, w));
    }
    Ok(MaskSet::new(entries))
}

/// Write a node-label table (`node,label`, both 1-based on disk).
pub fn save_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut f = File::create(path).map_err(|e| io_err(path, e))?;
    writeln!(f, "node,label").map_err(|e| io_err(path, e))?;
    for (i, &l) in labels.iter().enumerate() {
        writeln!(f, "{},{}", i + 1, l + 1).map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

pub fn load_labels(path: &Path) -> Result<Vec<usize>> {
    let lines = read_lines(path)?;
    let mut rows = lines.iter();
    let header =
        rows.next().ok_or_else(|| Error::data(format!("{}: empty file", path.display())))?;
    if header.split(',').map(str::trim).collect::<Vec<_>>() != ["node", "label"] {
        return Err(Error::data("label header must be `node,label`".to_string()));
    }
    let mut pairs = Vec::new();
    for line in rows {
        let toks: Vec<&str> = line.split(',').map(str::trim).collect();
        if toks.len() != 2 {
            return Err(Error::data(format!("bad label row `{line}`")));
        }
        let node: usize = toks[0].parse().map_err(|_| Error::data("bad node id"))?;
        let label: usize = toks[1].parse().map_err(|_| Error::data("bad label"))?;
        if node == 0 || label == 0 {
            return Err(Error::data("node ids and labels are 1-based".to_string()));
        }
        pairs.push((node - 1, label - 1));
    }
    pairs.sort_unstable();
    if pairs.iter().enumerate().any(|(idx, &(node, _))| idx != node) {
        return Err(Error::data("label table must cover nodes 1..n exactly".to_string()));
    }
    Ok(pairs.into_iter().map(|(_, l)| l).collect())
}
