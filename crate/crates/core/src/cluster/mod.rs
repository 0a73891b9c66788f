//! Levenshtein k-medoids clustering of pathway strings.

mod kmedoids;
mod levenshtein;
mod select;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use kmedoids::{kmedoids, kmedoids_with, DistanceMatrix, DistinctSequences};
pub use levenshtein::{levenshtein, levenshtein_chars};
pub use select::{cv_ratio, select_k, select_k_with, CvPoint};

use crate::pathway::PathwaySequence;

/// Anything carrying a case id and an encoded state string.
pub trait Coded {
    fn id(&self) -> &str;
    fn codes(&self) -> &str;
}

impl Coded for PathwaySequence {
    fn id(&self) -> &str {
        &self.case_id
    }
    fn codes(&self) -> &str {
        &self.codes
    }
}

impl Coded for (String, String) {
    fn id(&self) -> &str {
        &self.0
    }
    fn codes(&self) -> &str {
        &self.1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterParams {
    /// Clusters smaller than this are flagged as discarded.
    pub min_cluster_size: usize,
    /// Compute CV statistics over distinct strings instead of cases.
    pub cv_unweighted: bool,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            min_cluster_size: 5,
            cv_unweighted: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub medoids: Vec<String>,
    /// Case count per cluster.
    pub sizes: Vec<usize>,
    /// Total member-to-medoid distance over all cases.
    pub cost: u64,
    pub cv_curve: Vec<CvPoint>,
    pub assignment: BTreeMap<String, usize>,
    pub discarded: Vec<usize>,
}

impl ClusterModel {
    pub fn is_discarded(&self, cluster: usize) -> bool {
        self.discarded.contains(&cluster)
    }

    pub fn retained(&self) -> Vec<usize> {
        (0..self.k).filter(|c| !self.is_discarded(*c)).collect()
    }

    pub fn cluster_of(&self, case_id: &str) -> Option<usize> {
        self.assignment.get(case_id).copied()
    }

    /// Cluster of the closest medoid; ties go to the lower index.
    pub fn nearest(&self, codes: &str) -> usize {
        let mut best = (usize::MAX, 0);
        for (c, m) in self.medoids.iter().enumerate() {
            let d = levenshtein(codes, m);
            if d < best.0 {
                best = (d, c);
            }
        }
        best.1
    }

    /// Retained clusters ordered by size, largest first (ties by index).
    pub fn by_size(&self) -> Vec<usize> {
        let mut order = self.retained();
        order.sort_by(|&a, &b| self.sizes[b].cmp(&self.sizes[a]).then(a.cmp(&b)));
        order
    }
}

impl fmt::Display for ClusterModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "k = {} (cost {})", self.k, self.cost)?;
        for (i, m) in self.medoids.iter().enumerate() {
            let mark = if self.is_discarded(i) { " [discarded]" } else { "" };
            writeln!(f, "  #{i}: {m} ({} cases){mark}", self.sizes[i])?;
        }
        Ok(())
    }
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let n = a.len() as f64;
    let choose2 = |x: f64| x * (x - 1.0) / 2.0;
    let mut table: HashMap<(usize, usize), f64> = HashMap::new();
    let mut rows: HashMap<usize, f64> = HashMap::new();
    let mut cols: HashMap<usize, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *rows.entry(x).or_default() += 1.0;
        *cols.entry(y).or_default() += 1.0;
    }
    let index: f64 = table.values().map(|&v| choose2(v)).sum();
    let sum_a: f64 = rows.values().map(|&v| choose2(v)).sum();
    let sum_b: f64 = cols.values().map(|&v| choose2(v)).sum();
    let expected = sum_a * sum_b / choose2(n);
    let max = (sum_a + sum_b) / 2.0;
    if (max - expected).abs() < 1e-12 {
        return 1.0;
    }
    (index - expected) / (max - expected)
}
