//! Templates, positioned-state alignment, pathway graphs and the fitted
//! distributions that drive the simulator.

mod align;
mod fit;
mod graph;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use align::{align, align_all, AlignedSequence};
pub use fit::{
    fit_distributions, sample_arrivals, ChainState, FitOptions, FlowDistributions, StateChain,
};
pub use graph::{build_cp_graph, CpEdge, CpGraph};

use crate::cluster::ClusterModel;
use crate::error::{Error, Result};
use crate::pathway::CodeMap;

/// A code letter tied to a template slot.
///
/// Letters matched by alignment carry their template position. Unmatched
/// letters are off-template and carry their insertion point instead: one past
/// the last matched template position before them (0 when none).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct PositionedState {
    pub pos: usize,
    pub off_template: bool,
    pub letter: char,
}

impl PositionedState {
    pub fn on(letter: char, pos: usize) -> Self {
        PositionedState { pos, off_template: false, letter }
    }

    pub fn off(letter: char, insertion: usize) -> Self {
        PositionedState { pos: insertion, off_template: true, letter }
    }
}

impl fmt::Display for PositionedState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.off_template {
            write!(f, "{}^{}", self.letter, self.pos)
        } else {
            write!(f, "{}{}", self.letter, self.pos)
        }
    }
}

impl FromStr for PositionedState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Invalid(format!("bad positioned state `{s}`"));
        let mut chars = s.chars();
        let letter = chars.next().ok_or_else(bad)?;
        let rest = chars.as_str();
        let (off, digits) = match rest.strip_prefix('^') {
            Some(d) => (true, d),
            None => (false, rest),
        };
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let pos = digits.parse().map_err(|_| bad())?;
        Ok(PositionedState { pos, off_template: off, letter })
    }
}

/// Graph node: a positioned state or one of the two virtual terminals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Node {
    Start,
    State(PositionedState),
    End,
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Start => f.write_str("START"),
            Node::End => f.write_str("END"),
            Node::State(s) => s.fmt(f),
        }
    }
}

impl FromStr for Node {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "START" => Ok(Node::Start),
            "END" => Ok(Node::End),
            _ => s.parse().map(Node::State),
        }
    }
}

impl From<PositionedState> for String {
    fn from(p: PositionedState) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for PositionedState {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Node> for String {
    fn from(n: Node) -> String {
        n.to_string()
    }
}

impl TryFrom<String> for Node {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateSource {
    Config,
    MedoidFallback,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub cluster: usize,
    pub codes: String,
    pub source: TemplateSource,
}

impl Template {
    pub fn new(cluster: usize, codes: &str, source: TemplateSource, map: &CodeMap) -> Result<Self> {
        if codes.is_empty() {
            return Err(Error::Invalid(format!("empty template for cluster {cluster}")));
        }
        if let Some(letter) = codes.chars().find(|&c| !map.contains(c)) {
            return Err(Error::InvalidTemplate {
                template: codes.to_string(),
                letter,
            });
        }
        Ok(Template {
            cluster,
            codes: codes.to_string(),
            source,
        })
    }
}

/// One template per retained cluster: the override when given, else the medoid.
pub fn derive_templates(
    model: &ClusterModel,
    overrides: &BTreeMap<usize, String>,
    map: &CodeMap,
) -> Result<Vec<Template>> {
    for (&cluster, codes) in overrides {
        if cluster >= model.k {
            return Err(Error::Invalid(format!(
                "template override for cluster {cluster}, but the model has {} clusters",
                model.k
            )));
        }
        Template::new(cluster, codes, TemplateSource::Config, map)?;
    }
    model
        .retained()
        .into_iter()
        .map(|c| match overrides.get(&c) {
            Some(codes) => Template::new(c, codes, TemplateSource::Config, map),
            None => Template::new(c, &model.medoids[c], TemplateSource::MedoidFallback, map),
        })
        .collect()
}
