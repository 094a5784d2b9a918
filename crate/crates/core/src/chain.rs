//! Graphical chains: labeled BN edges leaving the effective node states of
//! an extracted rule set.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::BayesianNetwork;
use crate::rule::Rule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChainMode {
    /// Every child of an effective node.
    AllChildren,
    /// Only children that still lead to the target.
    #[default]
    PathToTarget,
}

impl std::str::FromStr for ChainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(ChainMode::AllChildren),
            "path" => Ok(ChainMode::PathToTarget),
            _ => Err(Error::Argument(format!("unknown chain mode `{s}` (all, path)"))),
        }
    }
}

/// Edge `(from, to, state of from)`.
pub type ChainEdge = (usize, usize, usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainGraph {
    pub target: usize,
    pub node_count: usize,
    pub edges: BTreeSet<ChainEdge>,
}

pub fn build_chain_graph(rules: &[Rule], net: &BayesianNetwork, target: usize, mode: ChainMode) -> Result<ChainGraph> {
    if target >= net.len() {
        return Err(Error::Argument(format!("target id {target} out of range")));
    }
    let mut emitted: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut edges = BTreeSet::new();
    for rule in rules {
        for (var, state) in rule.antecedent() {
            if !emitted.insert((var, state)) {
                continue;
            }
            for &child in net.children(var)? {
                if mode == ChainMode::AllChildren || net.has_directed_path(child, target)? {
                    edges.insert((var, child, state));
                }
            }
        }
    }
    Ok(ChainGraph {
        target,
        node_count: net.len(),
        edges,
    })
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Deterministic Graphviz text: nodes in id order, edges sorted by
/// `(from, to, label)`, target drawn as a double circle.
pub fn to_dot(g: &ChainGraph, net: &BayesianNetwork) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph {} {{", quote(&format!("{}_chain", net.name())));
    out.push_str("  rankdir=LR;\n  node [shape=ellipse];\n");
    for v in 0..g.node_count {
        let name = quote(net.variable(v).name());
        if v == g.target {
            let _ = writeln!(out, "  {name} [shape=doublecircle, style=bold];");
        } else {
            let _ = writeln!(out, "  {name};");
        }
    }
    let mut edges: Vec<(usize, usize, &str)> = g
        .edges
        .iter()
        .map(|&(a, b, s)| (a, b, net.variable(a).states()[s].as_str()))
        .collect();
    edges.sort();
    for (a, b, label) in edges {
        let _ = writeln!(
            out,
            "  {} -> {} [label={}];",
            quote(net.variable(a).name()),
            quote(net.variable(b).name()),
            quote(label)
        );
    }
    out.push_str("}\n");
    out
}
