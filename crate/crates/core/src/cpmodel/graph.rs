use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{AlignedSequence, Node, Template};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CpEdge {
    pub from: Node,
    pub to: Node,
    pub flow: u64,
    pub bold: bool,
}

/// Positioned-state flow graph of one cluster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CpGraph {
    pub cluster: usize,
    pub template: String,
    pub members: u64,
    pub bold_coverage: f64,
    /// Members on the paths whose edges are bold.
    pub covered: u64,
    pub nodes: Vec<Node>,
    pub edges: Vec<CpEdge>,
}

fn full_path(a: &AlignedSequence) -> Vec<Node> {
    let mut p = Vec::with_capacity(a.path.len() + 2);
    p.push(Node::Start);
    p.extend(a.path.iter().copied().map(Node::State));
    p.push(Node::End);
    p
}

fn off_template(n: &Node) -> bool {
    matches!(n, Node::State(s) if s.off_template)
}

/// Builds the flow graph of a cluster from its members' alignments.
///
/// Complete paths are ranked by frequency (ties by path order) and taken
/// until they cover at least `bold_coverage` of the members; their edges are
/// bold unless they touch an off-template node.
pub fn build_cp_graph(alignments: &[AlignedSequence], template: &Template, bold_coverage: f64) -> Result<CpGraph> {
    if alignments.is_empty() {
        return Err(Error::NoAlignments(template.cluster));
    }
    let mut paths: BTreeMap<Vec<Node>, u64> = BTreeMap::new();
    for a in alignments {
        *paths.entry(full_path(a)).or_default() += 1;
    }
    let mut flows: BTreeMap<(Node, Node), u64> = BTreeMap::new();
    let mut nodes = BTreeSet::new();
    for (path, &n) in &paths {
        nodes.extend(path.iter().copied());
        for w in path.windows(2) {
            *flows.entry((w[0], w[1])).or_default() += n;
        }
    }
    let total = alignments.len() as u64;
    let mut ranked: Vec<(&Vec<Node>, u64)> = paths.iter().map(|(p, &n)| (p, n)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut bold = BTreeSet::new();
    let mut covered = 0;
    for (path, n) in ranked {
        if covered as f64 >= bold_coverage * total as f64 - 1e-9 {
            break;
        }
        covered += n;
        for w in path.windows(2) {
            if !off_template(&w[0]) && !off_template(&w[1]) {
                bold.insert((w[0], w[1]));
            }
        }
    }
    let edges = flows
        .into_iter()
        .map(|((from, to), flow)| CpEdge {
            from,
            to,
            flow,
            bold: bold.contains(&(from, to)),
        })
        .collect();
    Ok(CpGraph {
        cluster: template.cluster,
        template: template.codes.clone(),
        members: total,
        bold_coverage,
        covered,
        nodes: nodes.into_iter().collect(),
        edges,
    })
}

impl CpGraph {
    pub fn in_flow(&self, n: Node) -> u64 {
        self.edges.iter().filter(|e| e.to == n).map(|e| e.flow).sum()
    }

    pub fn out_flow(&self, n: Node) -> u64 {
        self.edges.iter().filter(|e| e.from == n).map(|e| e.flow).sum()
    }

    pub fn edge(&self, from: Node, to: Node) -> Option<&CpEdge> {
        self.edges.iter().find(|e| e.from == from && e.to == to)
    }

    /// Graphviz rendering with bold edges styled and widths scaled by flow.
    pub fn to_dot(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "digraph cluster_{} {{", self.cluster);
        let _ = writeln!(out, "  rankdir=LR;\n  label=\"cluster #{} ({}) n={}\";", self.cluster, self.template, self.members);
        for n in &self.nodes {
            let style = match n {
                Node::Start | Node::End => "shape=point, width=0.15",
                Node::State(s) if s.off_template => "shape=ellipse, style=dashed",
                Node::State(_) => "shape=ellipse",
            };
            let _ = writeln!(out, "  \"{n}\" [{style}];");
        }
        let max = self.edges.iter().map(|e| e.flow).max().unwrap_or(1) as f64;
        for e in &self.edges {
            let width = 1.0 + 4.0 * e.flow as f64 / max;
            let style = if e.bold { ", style=bold, color=black" } else { ", color=gray50" };
            let _ = writeln!(out, "  \"{}\" -> \"{}\" [label=\"{}\", penwidth={width:.2}{style}];", e.from, e.to, e.flow);
        }
        out.push_str("}\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::cpmodel::{align, TemplateSource};

    fn tpl(codes: &str) -> Template {
        Template {
            cluster: 0,
            codes: codes.into(),
            source: TemplateSource::MedoidFallback,
        }
    }

    fn graph(seqs: &[&str], template: &str) -> CpGraph {
        let t = tpl(template);
        let al: Vec<_> = seqs.iter().enumerate().map(|(i, s)| align(&i.to_string(), s, &t)).collect();
        build_cp_graph(&al, &t, 0.7).unwrap()
    }

    fn n(s: &str) -> Node {
        s.parse().unwrap()
    }

    #[test]
    fn single_case_is_linear_and_bold() {
        let g = graph(&["AFE"], "AFE");
        let labels: Vec<String> = g.nodes.iter().map(|n| n.to_string()).collect();
        assert_eq!(labels, ["START", "A0", "F1", "E2", "END"]);
        assert_eq!(g.edges.len(), 4);
        assert!(g.edges.iter().all(|e| e.flow == 1 && e.bold));
    }

    #[test]
    fn seventy_percent_is_inclusive() {
        let mut seqs = vec!["AFE"; 7];
        seqs.extend(["ACE"; 3]);
        let g = graph(&seqs, "AFCE");
        assert_eq!(g.covered, 7);
        assert!(g.edge(n("A0"), n("F1")).unwrap().bold);
        assert!(g.edge(n("F1"), n("E3")).unwrap().bold);
        assert!(!g.edge(n("A0"), n("C2")).unwrap().bold);
        assert!(!g.edge(n("C2"), n("E3")).unwrap().bold);
        // Shared edges stay bold.
        assert!(g.edge(Node::Start, n("A0")).unwrap().bold);
    }

    #[test]
    fn below_threshold_takes_next_path() {
        let mut seqs = vec!["AFE"; 6];
        seqs.extend(["ACE"; 3]);
        seqs.push("AE");
        let g = graph(&seqs, "AFCE");
        assert_eq!(g.covered, 9);
        assert!(g.edge(n("A0"), n("C2")).unwrap().bold);
        assert!(!g.edge(n("A0"), n("E3")).unwrap().bold);
    }

    #[test]
    fn off_template_edges_never_bold() {
        let g = graph(&["AFNE"; 4], "AFE");
        assert!(g.nodes.contains(&n("N^2")));
        assert!(!g.edge(n("F1"), n("N^2")).unwrap().bold);
        assert!(g.edge(Node::Start, n("A0")).unwrap().bold);
    }

    #[test]
    fn empty_alignments_error() {
        assert!(matches!(build_cp_graph(&[], &tpl("AFE"), 0.7), Err(Error::NoAlignments(0))));
    }

    #[test]
    fn dot_marks_bold() {
        let dot = graph(&["AFE"], "AFE").to_dot();
        assert!(dot.contains("\"A0\" -> \"F1\""));
        assert!(dot.contains("style=bold"));
    }

    proptest! {
        #[test]
        fn flow_is_conserved(seqs in prop::collection::vec("A[FEICND]{0,8}", 1..40), template in "A[FEICND]{1,8}") {
            let refs: Vec<&str> = seqs.iter().map(String::as_str).collect();
            let g = graph(&refs, &template);
            prop_assert_eq!(g.out_flow(Node::Start), seqs.len() as u64);
            prop_assert_eq!(g.in_flow(Node::End), seqs.len() as u64);
            // Recount from the raw alignments.
            let t = tpl(&template);
            let mut visits: BTreeMap<Node, u64> = BTreeMap::new();
            for s in &seqs {
                for p in align("x", s, &t).path {
                    *visits.entry(Node::State(p)).or_default() += 1;
                }
            }
            for node in &g.nodes {
                if let Node::State(_) = node {
                    prop_assert_eq!(g.in_flow(*node), g.out_flow(*node));
                    prop_assert_eq!(g.in_flow(*node), visits[node]);
                }
            }
            prop_assert!(g.covered as f64 >= 0.7 * seqs.len() as f64 - 1e-9);
        }
    }
}
