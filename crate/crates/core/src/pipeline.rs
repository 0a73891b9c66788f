//! End-to-end mining and fitting with one parameter set.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::classify::{self, DecisionTree, TreeParams};
use crate::cluster::{kmedoids_with, select_k_with, ClusterModel, ClusterParams, DistinctSequences};
use crate::cpmodel::{
    align_all, build_cp_graph, derive_templates, fit_distributions, AlignedSequence, CpGraph, FitOptions,
    FlowDistributions, Template,
};
use crate::error::{Error, Result};
use crate::eventlog::{clean, ClinicalCase, CleanReport};
use crate::pathway::{encode_all, CodeMap, PathwaySequence};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MineParams {
    pub krange: Vec<usize>,
    pub seed: u64,
    pub cluster: ClusterParams,
    pub tree: TreeParams,
    pub template_overrides: BTreeMap<usize, String>,
    pub bold_coverage: f64,
}

impl Default for MineParams {
    fn default() -> Self {
        MineParams {
            krange: (2..=8).collect(),
            seed: 42,
            cluster: ClusterParams::default(),
            tree: TreeParams::default(),
            template_overrides: BTreeMap::new(),
            bold_coverage: 0.70,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Mined {
    pub cases: Vec<ClinicalCase>,
    pub clean_report: CleanReport,
    pub sequences: Vec<PathwaySequence>,
    pub model: ClusterModel,
    pub tree: DecisionTree,
    pub templates: Vec<Template>,
    pub alignments: Vec<AlignedSequence>,
    pub graphs: Vec<CpGraph>,
}

/// Clean, encode, cluster, classify, align and build one graph per retained
/// cluster.
///
/// Values of `krange` above the number of distinct sequences are dropped.
pub fn mine(raw: &[ClinicalCase], map: &CodeMap, params: &MineParams) -> Result<Mined> {
    map.validate()?;
    if raw.is_empty() {
        return Err(Error::NoSamples);
    }
    let (cases, clean_report) = clean(raw);
    let sequences = encode_all(&cases, map)?;
    let distinct = DistinctSequences::new(&sequences).len();
    let ks: Vec<usize> = params.krange.iter().copied().filter(|&k| k >= 1 && k <= distinct).collect();
    let model = match ks.as_slice() {
        [] => {
            return Err(Error::InvalidRange(format!(
                "no k in {:?} fits {distinct} distinct sequences",
                params.krange
            )))
        }
        [k] => kmedoids_with(&sequences, *k, params.seed, &params.cluster)?,
        _ => select_k_with(&sequences, &ks, params.seed, &params.cluster)?,
    };
    if ks.len() < params.krange.len() {
        log::warn!("k range clipped to {ks:?} ({distinct} distinct sequences)");
    }
    let samples: Vec<_> = sequences
        .iter()
        .filter_map(|s| {
            let c = model.cluster_of(&s.case_id)?;
            (!model.is_discarded(c)).then_some((s.features, c))
        })
        .collect();
    let tree = classify::train(&samples, &params.tree)?;
    let templates = derive_templates(&model, &params.template_overrides, map)?;
    let alignments = align_all(&sequences, |id| model.cluster_of(id), &templates);
    let graphs = templates
        .iter()
        .map(|t| {
            let members: Vec<AlignedSequence> = alignments.iter().filter(|a| a.cluster == t.cluster).cloned().collect();
            build_cp_graph(&members, t, params.bold_coverage)
        })
        .collect::<Result<_>>()?;
    Ok(Mined {
        cases,
        clean_report,
        sequences,
        model,
        tree,
        templates,
        alignments,
        graphs,
    })
}

pub fn fit(mined: &Mined, map: &CodeMap, opts: &FitOptions) -> Result<FlowDistributions> {
    fit_distributions(
        &mined.cases,
        &mined.sequences,
        &mined.model,
        &mined.alignments,
        &mined.graphs,
        map,
        opts,
    )
}
