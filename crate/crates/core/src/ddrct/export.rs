use std::fmt::Write as _;

use super::DdrctTree;
use crate::error::{Error, Result};

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// `node,depth,est,se,ci_lo,ci_hi,n,significant,rules` with one row per
/// node in id order. Rules are joined with ` & `; the root's rule cell is
/// empty. Undefined statistics are empty cells.
pub fn nodes_csv(tree: &DdrctTree) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = ["node", "depth", "est", "se", "ci_lo", "ci_hi", "n", "significant", "rules"];
    w.write_record(header).expect("in-memory write");
    for node in tree.nodes() {
        let (lo, hi) = node.ci.map_or((None, None), |(l, h)| (Some(l), Some(h)));
        w.write_record([
            node.id.to_string(),
            node.depth.to_string(),
            opt(node.estimate),
            opt(node.se),
            opt(lo),
            opt(hi),
            node.n.to_string(),
            node.significant.to_string(),
            node.rules.join(" & "),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn fmt3(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| format!("{v:.3}"))
}

/// Graphviz description of the tree. Each node shows its estimate, standard
/// error and estimation count; significant nodes are filled. Edges carry the
/// split condition.
pub fn to_dot(tree: &DdrctTree) -> String {
    let mut out = String::new();
    let c = tree.contrast;
    let _ = writeln!(out, "digraph ddrct {{");
    let _ = writeln!(out, "  label=\"{}\";", dot_escape(&c.to_string()));
    let _ = writeln!(out, "  node [shape=box, style=\"rounded,filled\", fillcolor=white];");
    for node in tree.nodes() {
        let fill = if node.significant { "lightblue" } else { "white" };
        let _ = writeln!(
            out,
            "  n{} [label=\"node {}\\nest {}\\nse {}\\nn {}\", fillcolor={fill}];",
            node.id,
            node.id,
            fmt3(node.estimate),
            fmt3(node.se),
            node.n
        );
    }
    for node in tree.nodes() {
        for child in &node.children {
            let rule = child.rules.last().map(String::as_str).unwrap_or("");
            let _ = writeln!(out, "  n{} -> n{} [label=\"{}\"];", node.id, child.id, dot_escape(rule));
        }
    }
    out.push_str("}\n");
    out
}

pub fn tree_to_json(tree: &DdrctTree) -> String {
    let mut s = serde_json::to_string_pretty(tree).expect("tree serialises");
    s.push('\n');
    s
}

pub fn tree_from_json(text: &str) -> Result<DdrctTree> {
    let tree: DdrctTree = serde_json::from_str(text).map_err(|e| Error::Data(format!("tree JSON: {e}")))?;
    check_ids(&tree)?;
    Ok(tree)
}

fn check_ids(tree: &DdrctTree) -> Result<()> {
    for (k, node) in tree.nodes().iter().enumerate() {
        if node.id != k + 1 {
            return Err(Error::Data(format!("tree JSON: node ids are not breadth-first (found {} at position {})", node.id, k + 1)));
        }
        if !(node.children.is_empty() || node.children.len() == 2 && node.split.is_some()) {
            return Err(Error::Data(format!("tree JSON: node {} must have zero or two children and a split", node.id)));
        }
    }
    Ok(())
}
