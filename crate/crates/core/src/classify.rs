//! CART classification of cluster membership from sequence features.
//!
//! Splits minimise weighted Gini impurity over thresholds placed midway
//! between adjacent distinct feature values. Routing sends
//! `feature <= threshold` to the `le` child. Leaves hold class frequencies.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pathway::Features;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Feature {
    LoS,
    NoC,
    NoS,
}

impl Feature {
    pub const ALL: [Feature; 3] = [Feature::LoS, Feature::NoC, Feature::NoS];

    pub fn value(self, f: &Features) -> f64 {
        match self {
            Feature::LoS => f.los_feat as f64,
            Feature::NoC => f.noc as f64,
            Feature::NoS => f.nos as f64,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Feature::LoS => "LoS",
            Feature::NoC => "NoC",
            Feature::NoS => "NoS",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { max_depth: 6, min_leaf: 5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        counts: Vec<usize>,
        probs: Vec<f64>,
    },
    Split {
        feature: Feature,
        threshold: f64,
        samples: usize,
        le: Box<Node>,
        gt: Box<Node>,
    },
}

impl Node {
    fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { le, gt, .. } => 1 + le.depth().max(gt.depth()),
        }
    }

    fn leaves<'a>(&'a self, out: &mut Vec<&'a Node>) {
        match self {
            Node::Leaf { .. } => out.push(self),
            Node::Split { le, gt, .. } => {
                le.leaves(out);
                gt.leaves(out);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    /// Cluster index of each probability slot, ascending.
    pub classes: Vec<usize>,
    pub params: TreeParams,
    pub root: Node,
}

fn gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

struct Builder<'a> {
    samples: &'a [([f64; 3], usize)],
    n_classes: usize,
    params: &'a TreeParams,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &i in idx {
            c[self.samples[i].1] += 1;
        }
        c
    }

    fn leaf(&self, counts: Vec<usize>, n: usize) -> Node {
        let probs = counts.iter().map(|&c| c as f64 / n as f64).collect();
        Node::Leaf { counts, probs }
    }

    fn best_split(&self, idx: &[usize], parent: f64) -> Option<(usize, f64, f64)> {
        let n = idx.len();
        let min_leaf = self.params.min_leaf.max(1);
        let mut best: Option<(usize, f64, f64)> = None;
        for f in 0..3 {
            let mut sorted: Vec<(f64, usize)> = idx.iter().map(|&i| (self.samples[i].0[f], self.samples[i].1)).collect();
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = vec![0usize; self.n_classes];
            let mut right = self.counts(idx);
            for pos in 0..n - 1 {
                let (v, label) = sorted[pos];
                left[label] += 1;
                right[label] -= 1;
                let next = sorted[pos + 1].0;
                if next <= v {
                    continue;
                }
                let (nl, nr) = (pos + 1, n - pos - 1);
                if nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let impurity = (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / n as f64;
                if impurity < parent - 1e-12 && best.is_none_or(|(_, _, b)| impurity < b) {
                    best = Some((f, (v + next) / 2.0, impurity));
                }
            }
        }
        best
    }

    fn build(&self, idx: Vec<usize>, depth: usize) -> Node {
        let n = idx.len();
        let counts = self.counts(&idx);
        let parent = gini(&counts, n);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.params.max_depth || n < 2 * self.params.min_leaf.max(1) {
            return self.leaf(counts, n);
        }
        match self.best_split(&idx, parent) {
            None => self.leaf(counts, n),
            Some((f, threshold, _)) => {
                let (le, gt): (Vec<usize>, Vec<usize>) =
                    idx.into_iter().partition(|&i| self.samples[i].0[f] <= threshold);
                Node::Split {
                    feature: Feature::ALL[f],
                    threshold,
                    samples: n,
                    le: Box::new(self.build(le, depth + 1)),
                    gt: Box::new(self.build(gt, depth + 1)),
                }
            }
        }
    }
}

/// Grows a tree on `(features, cluster)` samples.
pub fn train(samples: &[(Features, usize)], params: &TreeParams) -> Result<DecisionTree> {
    if samples.is_empty() {
        return Err(Error::NoSamples);
    }
    let mut classes: Vec<usize> = samples.iter().map(|s| s.1).collect();
    classes.sort_unstable();
    classes.dedup();
    let slot: BTreeMap<usize, usize> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let encoded: Vec<([f64; 3], usize)> = samples.iter().map(|(f, c)| (f.as_array(), slot[c])).collect();
    let builder = Builder {
        samples: &encoded,
        n_classes: classes.len(),
        params,
    };
    let root = builder.build((0..encoded.len()).collect(), 0);
    Ok(DecisionTree {
        classes,
        params: params.clone(),
        root,
    })
}

impl DecisionTree {
    fn reach(&self, f: &Features) -> (&Node, usize) {
        let mut node = &self.root;
        let mut leaf_no = 0;
        loop {
            match node {
                Node::Leaf { .. } => return (node, leaf_no),
                Node::Split { feature, threshold, le, gt, .. } => {
                    if feature.value(f) <= *threshold {
                        node = le;
                    } else {
                        leaf_no += count_leaves(le);
                        node = gt;
                    }
                }
            }
        }
    }

    /// Probabilities over `self.classes` at the leaf reached by `f`.
    pub fn predict(&self, f: &Features) -> &[f64] {
        match self.reach(f).0 {
            Node::Leaf { probs, .. } => probs,
            Node::Split { .. } => unreachable!(),
        }
    }

    /// Left-to-right index of the leaf reached by `f`.
    pub fn leaf_index(&self, f: &Features) -> usize {
        self.reach(f).1
    }

    pub fn predict_map(&self, f: &Features) -> BTreeMap<usize, f64> {
        self.classes.iter().copied().zip(self.predict(f).iter().copied()).collect()
    }

    /// Most probable cluster; ties go to the lower index.
    pub fn predict_class(&self, f: &Features) -> usize {
        let probs = self.predict(f);
        let mut best = 0;
        for i in 1..probs.len() {
            if probs[i] > probs[best] {
                best = i;
            }
        }
        self.classes[best]
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn leaves(&self) -> Vec<&Node> {
        let mut out = Vec::new();
        self.root.leaves(&mut out);
        out
    }

    /// Graphviz rendering; the `<=` branch is drawn first (upper).
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph tree {\n  node [shape=box, fontname=\"Helvetica\"];\n");
        let mut next = 0;
        self.dot_node(&self.root, &mut next, &mut out);
        out.push_str("}\n");
        out
    }

    fn dot_node(&self, node: &Node, next: &mut usize, out: &mut String) -> usize {
        let id = *next;
        *next += 1;
        match node {
            Node::Leaf { counts, probs } => {
                let n: usize = counts.iter().sum();
                let mut label = format!("n = {n}");
                for (c, p) in self.classes.iter().zip(probs) {
                    if *p > 0.0 {
                        let _ = write!(label, "\\n#{c}: {p:.2}");
                    }
                }
                let _ = writeln!(out, "  n{id} [label=\"{label}\", style=rounded];");
            }
            Node::Split { feature, threshold, samples, le, gt } => {
                let _ = writeln!(out, "  n{id} [label=\"{} <= {threshold}\\nn = {samples}\"];", feature.name());
                let a = self.dot_node(le, next, out);
                let b = self.dot_node(gt, next, out);
                let _ = writeln!(out, "  n{id} -> n{a} [label=\"yes\"];");
                let _ = writeln!(out, "  n{id} -> n{b} [label=\"no\"];");
            }
        }
        id
    }
}

fn count_leaves(node: &Node) -> usize {
    match node {
        Node::Leaf { .. } => 1,
        Node::Split { le, gt, .. } => count_leaves(le) + count_leaves(gt),
    }
}
