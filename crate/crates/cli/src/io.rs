//! Tab-separated file formats.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use qafd::embeddings::{format_vector, parse_vector, EmbeddingTable};
use qafd::graph::{Edge, Graph, Node};
use qafd::retrieval::Subquery;
use qafd::seeding::KeywordSet;

use crate::error::{CliError, CliResult};

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_output(dir: &Path, name: &str, contents: &str) -> CliResult<PathBuf> {
    let path = dir.join(name);
    std::fs::create_dir_all(dir)
        .and_then(|_| std::fs::write(&path, contents))
        .map_err(|source| CliError::Write {
            path: path.clone(),
            source,
        })?;
    Ok(path)
}

fn file_name(path: &Path) -> String {
    path.display().to_string()
}

/// Non-blank lines that are not `#` comments, numbered from 1.
fn records(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

pub fn load_embeddings(path: &Path) -> CliResult<EmbeddingTable> {
    let text = read_text(path)?;
    EmbeddingTable::parse(&text).map_err(|(line, msg)| CliError::Parse {
        file: file_name(path),
        line,
        msg,
    })
}

/// `label<TAB>v1,...,vd`, or `label` alone when `table` holds its vector.
pub fn parse_nodes(text: &str, file: &str, table: Option<&EmbeddingTable>) -> CliResult<Vec<Node>> {
    let mut seen = HashMap::new();
    let mut nodes = Vec::new();
    for (line, rec) in records(text) {
        let parse_err = |msg: String| CliError::Parse {
            file: file.to_string(),
            line,
            msg,
        };
        let (label, vector) = match rec.split_once('\t') {
            Some((l, v)) => (l, Some(v)),
            None => (rec, None),
        };
        if label.is_empty() {
            return Err(parse_err("empty node label".into()));
        }
        if let Some(first) = seen.insert(label.to_string(), line) {
            return Err(parse_err(format!("duplicate node label {label:?} (first on line {first})")));
        }
        let embedding = match vector {
            Some(v) => parse_vector(v).map_err(parse_err)?,
            None => table
                .and_then(|t| t.get(label))
                .map(<[f64]>::to_vec)
                .ok_or_else(|| CliError::MissingEmbedding(label.to_string()))?,
        };
        nodes.push(Node::new(label, embedding));
    }
    Ok(nodes)
}

/// `label_u<TAB>label_v[<TAB>base_weight[<TAB>relation]]`.
pub fn parse_edges(text: &str, file: &str, nodes: &[Node]) -> CliResult<Vec<Edge>> {
    let index: HashMap<&str, usize> = nodes.iter().enumerate().map(|(i, n)| (n.label.as_str(), i)).collect();
    let mut seen = HashMap::new();
    let mut edges = Vec::new();
    for (line, rec) in records(text) {
        let parse_err = |msg: String| CliError::Parse {
            file: file.to_string(),
            line,
            msg,
        };
        let fields: Vec<&str> = rec.split('\t').collect();
        if !(2..=4).contains(&fields.len()) {
            return Err(parse_err(format!("expected 2 to 4 fields, found {}", fields.len())));
        }
        let endpoint = |label: &str| {
            index.get(label).copied().ok_or_else(|| CliError::DanglingEndpoint {
                file: file.to_string(),
                line,
                label: label.to_string(),
            })
        };
        let (u, v) = (endpoint(fields[0])?, endpoint(fields[1])?);
        if u == v {
            return Err(parse_err(format!("self-loop on {:?}", fields[0])));
        }
        if let Some(first) = seen.insert((u.min(v), u.max(v)), line) {
            return Err(parse_err(format!("duplicate edge (first on line {first})")));
        }
        let mut edge = Edge::new(u, v);
        if let Some(w) = fields.get(2) {
            edge.base_weight = w
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("invalid base weight {w:?}")))?;
        }
        if let Some(r) = fields.get(3) {
            edge = edge.with_relation(*r);
        }
        edges.push(edge);
    }
    Ok(edges)
}

pub fn ingest(nodes_path: &Path, edges_path: &Path, embeddings_path: Option<&Path>) -> CliResult<Graph> {
    let table = embeddings_path.map(load_embeddings).transpose()?;
    let nodes = parse_nodes(&read_text(nodes_path)?, &file_name(nodes_path), table.as_ref())?;
    let edges = parse_edges(&read_text(edges_path)?, &file_name(edges_path), &nodes)?;
    Ok(Graph::build(nodes, edges)?)
}

pub fn export_nodes(g: &Graph) -> String {
    let mut out = String::new();
    for n in g.nodes() {
        let _ = writeln!(out, "{}\t{}", n.label, format_vector(&n.embedding));
    }
    out
}

pub fn export_edges(g: &Graph) -> String {
    let mut out = String::new();
    for e in g.edges() {
        let _ = write!(out, "{}\t{}\t{}", g.node(e.u).label, g.node(e.v).label, e.base_weight);
        if let Some(r) = &e.relation {
            let _ = write!(out, "\t{r}");
        }
        out.push('\n');
    }
    out
}

/// Resolves keyword vectors: the keyword table first, then a node with the
/// same label.
pub struct KeywordLookup<'a> {
    pub table: Option<&'a EmbeddingTable>,
    pub graph: &'a Graph,
}

impl KeywordLookup<'_> {
    pub fn vector(&self, key: &str) -> CliResult<Vec<f64>> {
        if let Some(v) = self.table.and_then(|t| t.get(key)) {
            return Ok(v.to_vec());
        }
        self.graph
            .find_label(key)
            .map(|v| self.graph.embedding(v).to_vec())
            .ok_or_else(|| CliError::MissingEmbedding(key.to_string()))
    }

    pub fn keyword_set(&self, keywords: &[String]) -> CliResult<KeywordSet> {
        let vectors = keywords.iter().map(|k| self.vector(k)).collect::<CliResult<Vec<_>>>()?;
        Ok(KeywordSet::new(keywords.to_vec(), vectors)?)
    }
}

/// One keyword per line.
pub fn parse_keyword_file(text: &str) -> Vec<String> {
    records(text).map(|(_, l)| l.trim().to_string()).collect()
}

pub fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|k| !k.is_empty()).map(String::from).collect()
}

/// `text<TAB>v1,...,vd[<TAB>kw1,kw2,...]`.
pub fn parse_subqueries(text: &str, file: &str, lookup: &KeywordLookup<'_>) -> CliResult<Vec<Subquery>> {
    let mut out = Vec::new();
    for (line, rec) in records(text) {
        let parse_err = |msg: String| CliError::Parse {
            file: file.to_string(),
            line,
            msg,
        };
        let fields: Vec<&str> = rec.split('\t').collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(parse_err(format!("expected 2 or 3 fields, found {}", fields.len())));
        }
        let mut sq = Subquery::new(fields[0], parse_vector(fields[1]).map_err(parse_err)?);
        if let Some(kws) = fields.get(2) {
            let kws = split_list(kws);
            if !kws.is_empty() {
                sq.keywords = Some(lookup.keyword_set(&kws)?);
            }
        }
        out.push(sq);
    }
    Ok(out)
}
