//! Graph, partition, and entropy report serialization.
//!
//! CoGraph exports: GraphML (node attributes domain/kind/mode/community,
//! edge attribute weight), edge-list CSV (source, target, weight), and a
//! JSON mirror of the same schema that round-trips exactly.

use std::io::Write;

use coenet_core::community::Partition;
use coenet_core::entropy::EntropyEstimate;
use coenet_core::graph::{CoGraph, StandardInfo, WeightMode};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("partition covers {assigned} nodes but graph has {nodes}")]
    PartitionMismatch { nodes: usize, assigned: usize },
    #[error("unknown node id {id:?} in edge list")]
    UnknownNode { id: String },
    #[error("invalid {field} value {value:?}")]
    InvalidField { field: &'static str, value: String },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NodeJson {
    pub id: String,
    pub domain: String,
    pub kind: String,
    pub mode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub community: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EdgeJson {
    pub source: String,
    pub target: String,
    pub weight: f64,
}

/// JSON mirror of a CoGraph plus optional community labels.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GraphJson {
    pub weight_mode: String,
    pub nodes: Vec<NodeJson>,
    pub edges: Vec<EdgeJson>,
}

fn check_partition(g: &CoGraph, partition: Option<&Partition>) -> Result<(), ExportError> {
    if let Some(p) = partition {
        if p.len() != g.node_count() {
            return Err(ExportError::PartitionMismatch {
                nodes: g.node_count(),
                assigned: p.len(),
            });
        }
    }
    Ok(())
}

pub fn to_graph_json(g: &CoGraph, partition: Option<&Partition>) -> Result<GraphJson, ExportError> {
    check_partition(g, partition)?;
    let nodes = g
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, n)| NodeJson {
            id: n.id.clone(),
            domain: n.domain.clone(),
            kind: n.kind.to_string(),
            mode: n.mode.to_string(),
            community: partition.map(|p| p.community_of(i)),
        })
        .collect();
    let edges = g
        .edges()
        .map(|(a, b, w)| EdgeJson {
            source: g.nodes()[a].id.clone(),
            target: g.nodes()[b].id.clone(),
            weight: w,
        })
        .collect();
    Ok(GraphJson {
        weight_mode: match g.weight_mode() {
            WeightMode::RawCount => "raw_count".into(),
            WeightMode::Rcp => "rcp".into(),
        },
        nodes,
        edges,
    })
}

pub fn from_graph_json(json: &GraphJson) -> Result<(CoGraph, Option<Partition>), ExportError> {
    let weight_mode = match json.weight_mode.as_str() {
        "raw_count" => WeightMode::RawCount,
        "rcp" => WeightMode::Rcp,
        other => {
            return Err(ExportError::InvalidField {
                field: "weight_mode",
                value: other.into(),
            })
        }
    };
    let mut nodes = Vec::with_capacity(json.nodes.len());
    let mut labels = Vec::with_capacity(json.nodes.len());
    for n in &json.nodes {
        nodes.push(StandardInfo {
            id: n.id.clone(),
            domain: n.domain.clone(),
            kind: n.kind.parse().map_err(|_| ExportError::InvalidField {
                field: "kind",
                value: n.kind.clone(),
            })?,
            mode: n.mode.parse().map_err(|_| ExportError::InvalidField {
                field: "mode",
                value: n.mode.clone(),
            })?,
        });
        labels.push(n.community);
    }
    let index_of = |id: &str| -> Result<usize, ExportError> {
        nodes
            .iter()
            .position(|n| n.id == id)
            .ok_or_else(|| ExportError::UnknownNode { id: id.into() })
    };
    let mut edges = Vec::with_capacity(json.edges.len());
    for e in &json.edges {
        edges.push((index_of(&e.source)?, index_of(&e.target)?, e.weight));
    }
    let graph = CoGraph::from_edges(nodes, &edges, weight_mode);
    let partition = if labels.iter().all(Option::is_some) && !labels.is_empty() {
        let raw: Vec<usize> = labels.into_iter().map(Option::unwrap).collect();
        Some(Partition::from_labels(&raw))
    } else {
        None
    };
    Ok((graph, partition))
}

pub fn write_graph_json<W: Write>(
    writer: W,
    g: &CoGraph,
    partition: Option<&Partition>,
) -> Result<(), ExportError> {
    let json = to_graph_json(g, partition)?;
    serde_json::to_writer_pretty(writer, &json)?;
    Ok(())
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// GraphML with node attributes (domain, kind, mode, community when a
/// partition is given) and the edge weight attribute.
pub fn write_graphml<W: Write>(
    mut writer: W,
    g: &CoGraph,
    partition: Option<&Partition>,
) -> Result<(), ExportError> {
    check_partition(g, partition)?;
    writeln!(writer, r#"<?xml version="1.0" encoding="UTF-8"?>"#)?;
    writeln!(
        writer,
        r#"<graphml xmlns="http://graphml.graphdrawing.org/xmlns">"#
    )?;
    writeln!(
        writer,
        r#"  <key id="d0" for="node" attr.name="domain" attr.type="string"/>"#
    )?;
    writeln!(
        writer,
        r#"  <key id="d1" for="node" attr.name="kind" attr.type="string"/>"#
    )?;
    writeln!(
        writer,
        r#"  <key id="d2" for="node" attr.name="mode" attr.type="string"/>"#
    )?;
    if partition.is_some() {
        writeln!(
            writer,
            r#"  <key id="d3" for="node" attr.name="community" attr.type="long"/>"#
        )?;
    }
    writeln!(
        writer,
        r#"  <key id="w" for="edge" attr.name="weight" attr.type="double"/>"#
    )?;
    writeln!(writer, r#"  <graph edgedefault="undirected">"#)?;
    for (i, node) in g.nodes().iter().enumerate() {
        writeln!(writer, r#"    <node id="{}">"#, xml_escape(&node.id))?;
        writeln!(
            writer,
            r#"      <data key="d0">{}</data>"#,
            xml_escape(&node.domain)
        )?;
        writeln!(writer, r#"      <data key="d1">{}</data>"#, node.kind)?;
        writeln!(writer, r#"      <data key="d2">{}</data>"#, node.mode)?;
        if let Some(p) = partition {
            writeln!(
                writer,
                r#"      <data key="d3">{}</data>"#,
                p.community_of(i)
            )?;
        }
        writeln!(writer, "    </node>")?;
    }
    for (a, b, w) in g.edges() {
        writeln!(
            writer,
            r#"    <edge source="{}" target="{}"><data key="w">{}</data></edge>"#,
            xml_escape(&g.nodes()[a].id),
            xml_escape(&g.nodes()[b].id),
            w
        )?;
    }
    writeln!(writer, "  </graph>")?;
    writeln!(writer, "</graphml>")?;
    Ok(())
}

/// Edge-list CSV: source, target, weight.
pub fn write_edge_csv<W: Write>(writer: W, g: &CoGraph) -> Result<(), ExportError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["source", "target", "weight"])?;
    for (a, b, weight) in g.edges() {
        w.write_record([
            g.nodes()[a].id.as_str(),
            g.nodes()[b].id.as_str(),
            &weight.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parse an edge-list CSV back into (source, target, weight) triples.
pub fn read_edge_csv<R: std::io::Read>(reader: R) -> Result<Vec<(String, String, f64)>, ExportError> {
    let mut r = csv::Reader::from_reader(reader);
    let mut edges = Vec::new();
    for row in r.records() {
        let row = row?;
        let weight: f64 = row
            .get(2)
            .unwrap_or("")
            .parse()
            .map_err(|_| ExportError::InvalidField {
                field: "weight",
                value: row.get(2).unwrap_or("").into(),
            })?;
        edges.push((
            row.get(0).unwrap_or("").to_string(),
            row.get(1).unwrap_or("").to_string(),
            weight,
        ));
    }
    Ok(edges)
}

/// Partition CSV: standard_id, community_label.
pub fn write_partition_csv<W: Write>(
    writer: W,
    g: &CoGraph,
    partition: &Partition,
) -> Result<(), ExportError> {
    check_partition(g, Some(partition))?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["standard_id", "community"])?;
    for (i, node) in g.nodes().iter().enumerate() {
        w.write_record([node.id.as_str(), &partition.community_of(i).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One row of the entropy report.
#[derive(Debug, Clone)]
pub struct EntropyRow {
    pub slice: String,
    pub selector: String,
    pub x_total: u64,
    pub n_standards: usize,
    pub estimate: EntropyEstimate,
}

pub fn write_entropy_csv<W: Write>(writer: W, rows: &[EntropyRow]) -> Result<(), ExportError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "slice",
        "selector",
        "x_total",
        "n_standards",
        "S_point",
        "S_mean",
        "S_std",
        "ci_low",
        "ci_high",
        "reps",
        "seed",
    ])?;
    for row in rows {
        let e = &row.estimate;
        w.write_record([
            row.slice.as_str(),
            row.selector.as_str(),
            &row.x_total.to_string(),
            &row.n_standards.to_string(),
            &e.point.to_string(),
            &e.mean.to_string(),
            &e.std.to_string(),
            &e.ci_low.to_string(),
            &e.ci_high.to_string(),
            &e.reps.to_string(),
            &e.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
