use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use pathflow::classify::TreeParams;
use pathflow::cluster::ClusterParams;
use pathflow::cpmodel::FitOptions;
use pathflow::eventlog::SynthSpec;
use pathflow::pathway::CodeMap;
use pathflow::pipeline::MineParams;
use pathflow::simengine::{ScenarioConfig, ScenarioGrid, TargetModel};
use serde::{Deserialize, Serialize};

use crate::Usage;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSection {
    pub krange: Vec<usize>,
    pub seed: u64,
    pub cv_unweighted: bool,
    pub min_cluster_size: usize,
}

impl Default for ClusterSection {
    fn default() -> Self {
        let p = ClusterParams::default();
        ClusterSection {
            krange: (2..=8).collect(),
            seed: 42,
            cv_unweighted: p.cv_unweighted,
            min_cluster_size: p.min_cluster_size,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub n_angiography: Vec<usize>,
    pub scales: Vec<f64>,
    pub horizon_days: usize,
    pub replications: usize,
    pub base_seed: u64,
    pub target_scale: f64,
    pub background_volume: f64,
    pub warmup_days: usize,
    pub background_competes: bool,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        let s = ScenarioConfig::default();
        let g = ScenarioGrid::default();
        ScenarioSection {
            n_angiography: g.n_angiography,
            scales: g.scales,
            horizon_days: s.horizon_days,
            replications: s.replications,
            base_seed: s.base_seed,
            target_scale: s.target_scale,
            background_volume: s.background_volume,
            warmup_days: s.warmup_days,
            background_competes: s.background_competes,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    /// Compare only the largest N retained clusters; 0 keeps all.
    pub top_clusters: usize,
    pub per_replication: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceMode {
    None,
    #[default]
    First,
    All,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub background_patients: bool,
    pub traces: TraceMode,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoSection {
    pub log: Option<PathBuf>,
    pub model_dir: Option<PathBuf>,
    pub dists: Option<PathBuf>,
    pub class_aware_dir: Option<PathBuf>,
    pub baseline_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub cluster: ClusterSection,
    pub tree: TreeParams,
    /// Template overrides keyed by cluster index.
    pub templates: BTreeMap<String, String>,
    pub distributions: FitOptions,
    pub scenario: ScenarioSection,
    pub analysis: AnalysisSection,
    pub output: OutputSection,
    pub io: IoSection,
    pub code_map: CodeMap,
    pub synth: SynthSpec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            schema_version: SCHEMA_VERSION,
            cluster: ClusterSection::default(),
            tree: TreeParams::default(),
            templates: BTreeMap::new(),
            distributions: FitOptions::default(),
            scenario: ScenarioSection::default(),
            analysis: AnalysisSection::default(),
            output: OutputSection::default(),
            io: IoSection::default(),
            code_map: CodeMap::default(),
            synth: SynthSpec::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Usage(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| Usage(format!("invalid config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn dump(&self) -> anyhow::Result<String> {
        toml::to_string(self).context("serializing config")
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            bail!(Usage(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.code_map.validate().map_err(|e| Usage(e.to_string()))?;
        if self.cluster.krange.is_empty() {
            bail!(Usage("cluster.krange is empty".into()));
        }
        self.grid().validate().map_err(|e| Usage(e.to_string()))?;
        self.template_overrides()?;
        for cell in self.grid().cells(&self.scenario_config(TargetModel::ClassAware)) {
            cell.validate().map_err(|e| Usage(e.to_string()))?;
        }
        Ok(())
    }

    pub fn apply_seed(&mut self, seed: u64) {
        self.synth.seed = seed;
        self.cluster.seed = seed;
        self.scenario.base_seed = seed;
    }

    pub fn template_overrides(&self) -> anyhow::Result<BTreeMap<usize, String>> {
        self.templates
            .iter()
            .map(|(k, v)| {
                let c = k
                    .parse::<usize>()
                    .map_err(|_| Usage(format!("template key `{k}` is not a cluster index")))?;
                Ok((c, v.clone()))
            })
            .collect()
    }

    pub fn mine_params(&self) -> anyhow::Result<MineParams> {
        Ok(MineParams {
            krange: self.cluster.krange.clone(),
            seed: self.cluster.seed,
            cluster: ClusterParams {
                min_cluster_size: self.cluster.min_cluster_size,
                cv_unweighted: self.cluster.cv_unweighted,
            },
            tree: self.tree.clone(),
            template_overrides: self.template_overrides()?,
            bold_coverage: self.distributions.bold_coverage,
        })
    }

    pub fn grid(&self) -> ScenarioGrid {
        ScenarioGrid {
            n_angiography: self.scenario.n_angiography.clone(),
            scales: self.scenario.scales.clone(),
        }
    }

    /// Base scenario; grid cells override servers and scale.
    pub fn scenario_config(&self, target_model: TargetModel) -> ScenarioConfig {
        let s = &self.scenario;
        ScenarioConfig {
            horizon_days: s.horizon_days,
            n_angiography: s.n_angiography.first().copied().unwrap_or(1),
            background_scale: s.scales.first().copied().unwrap_or(1.0),
            target_scale: s.target_scale,
            background_volume: s.background_volume,
            replications: s.replications,
            base_seed: s.base_seed,
            warmup_days: s.warmup_days,
            background_competes: s.background_competes,
            target_model,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = PipelineConfig::default();
        let text = cfg.dump().unwrap();
        assert!(text.starts_with("schema_version = 1"));
        let back: PipelineConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg: PipelineConfig = toml::from_str("schema_version = 1\n[scenario]\nreplications = 3\n[templates]\n2 = \"AEFNINFEDE\"\n").unwrap();
        assert_eq!(cfg.scenario.replications, 3);
        assert_eq!(cfg.scenario.horizon_days, 60);
        assert_eq!(cfg.template_overrides().unwrap()[&2], "AEFNINFEDE");
        cfg.validate().unwrap();
    }

    #[test]
    fn bad_configs_are_rejected() {
        let cfg: PipelineConfig = toml::from_str("schema_version = 7").unwrap();
        assert!(cfg.validate().is_err());
        assert!(toml::from_str::<PipelineConfig>("[scenario]\nbogus = 1").is_err());
        let cfg: PipelineConfig = toml::from_str("[scenario]\nscales = []").unwrap();
        assert!(cfg.validate().is_err());
        let cfg: PipelineConfig = toml::from_str("[templates]\nx = \"AFE\"").unwrap();
        assert!(cfg.validate().is_err());
    }
}
