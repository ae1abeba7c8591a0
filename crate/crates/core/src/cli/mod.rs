//! Configuration-driven runs.
//!
//! A run reads a TOML config (or a previous run's `run_manifest.json`),
//! loads the data, regroups treatment arms, fits the pipeline and writes
//! `ate.csv`, `nodes.csv`, `tree.dot`, `tree.json`, `cate_histogram.csv`
//! and `run_manifest.json`. See `configs/` for the grammar by example.

mod histogram;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

pub use histogram::{emit_histogram, HistogramSpec};

use crate::data::{load_table, CovariateRule, Dataset, Schema};
use crate::ddrct::{
    ddrct_for_contrast, fit_nuisance_stage, nodes_csv, to_dot, tree_from_json, tree_to_json, DdrctParams,
    PipelineParams,
};
use crate::error::{Error, Result};
use crate::forest::ForestParams;
use crate::scores::{ate_table_csv, dr_ate, dr_scores, Contrast, DEFAULT_CLIP};
use crate::synthetic::{generate, DgpSpec};

/// Input table and column roles. A relative `path` is resolved against the
/// config file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    pub outcome: String,
    pub treatment: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<String>,
    #[serde(default)]
    pub covariates: CovariateRule,
}

impl DataConfig {
    pub fn schema(&self) -> Schema {
        Schema {
            outcome: self.outcome.clone(),
            treatment: self.treatment.clone(),
            cluster: self.cluster.clone(),
            covariates: self.covariates.clone(),
        }
    }
}

fn default_labelling() -> usize {
    1
}

fn default_conditioning() -> Vec<usize> {
    vec![2, 3, 4]
}

/// How raw treatment arms map onto the contrasts of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ArmGrouping {
    /// Every arm other than `control` pooled against it.
    AnyVsControl {
        #[serde(default)]
        control: usize,
    },
    /// Pooled `conditioning` arms against `labelling`; other arms dropped.
    ConditioningVsLabelling {
        #[serde(default = "default_labelling")]
        labelling: usize,
        #[serde(default = "default_conditioning")]
        conditioning: Vec<usize>,
    },
    /// Each arm against `baseline`, over `arms` (all arms when absent). The
    /// tree is grown for `ddrct_arm`, by default the first non-baseline arm.
    EachVsBaseline {
        baseline: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        arms: Option<Vec<usize>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ddrct_arm: Option<usize>,
    },
    /// Arbitrary pooled groups; arms in neither group are dropped.
    Custom {
        treated: Vec<usize>,
        control: Vec<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
}

/// A labelled contrast over the regrouped dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelledContrast {
    pub label: String,
    pub contrast: Contrast,
}

/// Dataset with regrouped arms, the contrasts to report and the one that
/// gets a tree.
#[derive(Clone, Debug)]
pub struct GroupedData {
    pub dataset: Dataset,
    /// Original row of each kept row.
    pub rows: Vec<usize>,
    pub contrasts: Vec<LabelledContrast>,
    pub ddrct_contrast: usize,
}

fn arm_set(name: &str, arms: &[usize], n_arms: usize) -> Result<()> {
    if arms.is_empty() {
        return Err(Error::Config(format!("arm group `{name}` is empty")));
    }
    if let Some(&a) = arms.iter().find(|&&a| a >= n_arms) {
        return Err(Error::Data(format!(
            "arm {a} in group `{name}` is absent (data has arms 0..{})",
            n_arms - 1
        )));
    }
    Ok(())
}

fn join_arms(arms: &[usize]) -> String {
    arms.iter().map(ToString::to_string).collect::<Vec<_>>().join("+")
}

/// Maps treatment arms per `rule`. Pooled presets produce a binary dataset
/// with arm 1 the pooled treated group and arm 0 the control group.
pub fn arm_grouping(dataset: &Dataset, rule: &ArmGrouping) -> Result<GroupedData> {
    let k = dataset.n_arms();
    let pooled = |treated: &[usize], control: &[usize], label: String| -> Result<GroupedData> {
        arm_set("treated", treated, k)?;
        arm_set("control", control, k)?;
        if let Some(a) = treated.iter().find(|a| control.contains(a)) {
            return Err(Error::Config(format!("arm {a} is in both groups")));
        }
        let rows: Vec<usize> = (0..dataset.n_rows())
            .filter(|&i| {
                let w = dataset.treatment()[i];
                treated.contains(&w) || control.contains(&w)
            })
            .collect();
        let data = dataset.subset_relabelled(&rows, |w| usize::from(treated.contains(&w)))?;
        Ok(GroupedData {
            dataset: data,
            rows,
            contrasts: vec![LabelledContrast {
                label,
                contrast: Contrast::new(1, 0),
            }],
            ddrct_contrast: 0,
        })
    };
    match rule {
        ArmGrouping::AnyVsControl { control } => {
            let treated: Vec<usize> = (0..k).filter(|a| a != control).collect();
            pooled(&treated, &[*control], format!("any-vs-arm{control}"))
        }
        ArmGrouping::ConditioningVsLabelling {
            labelling,
            conditioning,
        } => pooled(
            conditioning,
            &[*labelling],
            format!("arms{}-vs-arm{labelling}", join_arms(conditioning)),
        ),
        ArmGrouping::Custom { treated, control, label } => {
            let label = label
                .clone()
                .unwrap_or_else(|| format!("arms{}-vs-arms{}", join_arms(treated), join_arms(control)));
            pooled(treated, control, label)
        }
        ArmGrouping::EachVsBaseline {
            baseline,
            arms,
            ddrct_arm,
        } => {
            let mut kept: Vec<usize> = arms.clone().unwrap_or_else(|| (0..k).collect());
            if !kept.contains(baseline) {
                kept.push(*baseline);
            }
            kept.sort_unstable();
            kept.dedup();
            arm_set("arms", &kept, k)?;
            if kept.len() < 2 {
                return Err(Error::Config("each-vs-baseline needs an arm besides the baseline".into()));
            }
            let rows: Vec<usize> = (0..dataset.n_rows())
                .filter(|&i| kept.contains(&dataset.treatment()[i]))
                .collect();
            let new_id = |w: usize| kept.iter().position(|&a| a == w).expect("kept arm");
            let data = dataset.subset_relabelled(&rows, new_id)?;
            let others: Vec<usize> = kept.iter().copied().filter(|a| a != baseline).collect();
            let target = ddrct_arm.unwrap_or(others[0]);
            let ddrct_contrast = others.iter().position(|&a| a == target).ok_or_else(|| {
                Error::Config(format!("ddrct_arm {target} is not among the compared arms"))
            })?;
            let contrasts = others
                .iter()
                .map(|&a| LabelledContrast {
                    label: format!("arm{a}-vs-arm{baseline}"),
                    contrast: Contrast::new(new_id(a), new_id(*baseline)),
                })
                .collect();
            Ok(GroupedData {
                dataset: data,
                rows,
                contrasts,
                ddrct_contrast,
            })
        }
    }
}

/// Unset keys of a forest block, filled from a base.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ForestOverrides {
    n_trees: Option<usize>,
    subsample_fraction: Option<f64>,
    honesty_fraction: Option<f64>,
    mtry: Option<usize>,
    min_leaf: Option<usize>,
    max_depth: Option<usize>,
    seed: Option<u64>,
}

impl ForestOverrides {
    fn over(self, base: ForestParams) -> ForestParams {
        ForestParams {
            n_trees: self.n_trees.unwrap_or(base.n_trees),
            subsample_fraction: self.subsample_fraction.unwrap_or(base.subsample_fraction),
            honesty_fraction: self.honesty_fraction.unwrap_or(base.honesty_fraction),
            mtry: self.mtry.or(base.mtry),
            min_leaf: self.min_leaf.unwrap_or(base.min_leaf),
            max_depth: self.max_depth.or(base.max_depth),
            seed: self.seed.unwrap_or(base.seed),
        }
    }
}

fn default_nuisance_forest() -> ForestParams {
    PipelineParams::default().nuisance_forest
}

fn default_causal_forest() -> ForestParams {
    PipelineParams::default().causal_forest
}

fn nuisance_forest<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<ForestParams, D::Error> {
    Ok(ForestOverrides::deserialize(d)?.over(default_nuisance_forest()))
}

fn causal_forest<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<ForestParams, D::Error> {
    Ok(ForestOverrides::deserialize(d)?.over(default_causal_forest()))
}

fn default_k_folds() -> usize {
    5
}

fn default_clip() -> f64 {
    DEFAULT_CLIP
}

fn default_true() -> bool {
    true
}

/// A complete run description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub contrast: ArmGrouping,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; `None` uses every core. Never affects results.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Output directory; relative paths resolve against the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default = "default_k_folds")]
    pub k_folds: usize,
    #[serde(default = "default_clip")]
    pub clip: f64,
    #[serde(default = "default_true")]
    pub cluster_mode: bool,
    #[serde(default = "default_nuisance_forest", deserialize_with = "nuisance_forest")]
    pub nuisance_forest: ForestParams,
    #[serde(default = "default_causal_forest", deserialize_with = "causal_forest")]
    pub causal_forest: ForestParams,
    #[serde(default)]
    pub ddrct: DdrctParams,
    #[serde(default)]
    pub histogram: HistogramSpec,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().replace('\n', " ")))
    }

    /// Parses a TOML config, or the `config` block of a run manifest when
    /// the text is JSON.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            let manifest: RunManifest =
                serde_json::from_str(text).map_err(|e| Error::Config(format!("manifest: {e}")))?;
            Ok(manifest.config)
        } else {
            Self::from_toml(text)
        }
    }

    pub fn pipeline_params(&self) -> PipelineParams {
        PipelineParams {
            seed: self.seed,
            k_folds: self.k_folds,
            clip: self.clip,
            cluster_mode: self.cluster_mode,
            nuisance_forest: self.nuisance_forest.clone(),
            causal_forest: self.causal_forest.clone(),
            ddrct: self.ddrct.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.k_folds < 2 {
            return bad(format!("k_folds must be at least 2, got {}", self.k_folds));
        }
        if !(self.clip > 0.0 && self.clip < 0.5) {
            return bad(format!("clip must lie in (0, 0.5), got {}", self.clip));
        }
        if self.workers == Some(0) {
            return bad("workers must be positive".into());
        }
        self.ddrct.validate().map_err(|e| Error::Config(format!("ddrct: {e}")))?;
        self.histogram.validate()
    }
}

/// Written next to the artifacts; accepted by [`run`] as a config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config: RunConfig,
    pub rows_used: usize,
    pub rows_dropped: usize,
    pub columns_dropped: Vec<String>,
    pub covariates: usize,
}

/// Command-line overrides of config values.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

fn config_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn read_text(path: &Path, what: &str) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {what} {}: {e}", path.display())))
}

/// Writes `files` into `dir`, removing anything written (and `dir`, when
/// created here) if a write fails.
pub fn write_artifacts(dir: &Path, files: &[(&str, String)]) -> Result<Vec<PathBuf>> {
    let created = !dir.exists();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for (name, content) in files {
        let path = dir.join(name);
        if let Err(e) = std::fs::write(&path, content) {
            for p in &written {
                let _ = std::fs::remove_file(p);
            }
            if created {
                let _ = std::fs::remove_dir(dir);
            }
            return Err(Error::io(path, e));
        }
        written.push(path);
    }
    Ok(written)
}

fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(f)
}

/// Artifacts of a run, in memory.
pub struct RunArtifacts {
    pub files: Vec<(&'static str, String)>,
    pub log: Vec<String>,
}

/// Resolves `config` paths against `base_dir` and computes every artifact.
pub fn execute(mut config: RunConfig, base_dir: &Path) -> Result<RunArtifacts> {
    config.validate()?;
    if config.data.path.is_relative() {
        config.data.path = base_dir.join(&config.data.path);
    }
    let loaded = load_table(&config.data.path, &config.data.schema())?;
    let mut log = loaded.screening.log_lines();
    if loaded.screening.dropped_rows > 0 {
        log.push(format!("DROPPED_ROWS {}", loaded.screening.dropped_rows));
    }
    let grouped = arm_grouping(&loaded.dataset, &config.contrast)?;
    let data = &grouped.dataset;
    let params = config.pipeline_params();

    let files = with_workers(config.workers, || {
        let (_, nuisance) = fit_nuisance_stage(data, &params)?;
        let clusters = data.cluster_ids().filter(|_| params.cluster_mode);
        let mut ate_rows = Vec::new();
        for c in &grouped.contrasts {
            let scores = dr_scores(data, &nuisance, c.contrast)?;
            ate_rows.push((c.label.clone(), dr_ate(&scores, clusters)?));
        }
        let target = grouped.contrasts[grouped.ddrct_contrast].contrast;
        let (_, ate, _, cate, tree) = ddrct_for_contrast(data, &nuisance, target, &params)?;
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            config: config.clone(),
            rows_used: data.n_rows(),
            rows_dropped: loaded.screening.dropped_rows,
            columns_dropped: loaded.screening.dropped_columns.iter().map(|d| d.column.clone()).collect(),
            covariates: data.covariates().n_cols(),
        };
        let mut manifest_json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
        manifest_json.push('\n');
        Ok(vec![
            ("ate.csv", ate_table_csv(&ate_rows)),
            ("nodes.csv", nodes_csv(&tree)),
            ("tree.dot", to_dot(&tree)),
            ("tree.json", tree_to_json(&tree)),
            ("cate_histogram.csv", emit_histogram(&cate, &ate, &config.histogram)?),
            ("run_manifest.json", manifest_json),
        ])
    })?;
    Ok(RunArtifacts { files, log })
}

/// `run <config>`: fits the pipeline and writes the artifacts. Returns the
/// output directory.
pub fn run(config_path: &Path, overrides: &Overrides) -> Result<PathBuf> {
    let text = read_text(config_path, "config")?;
    let mut config = RunConfig::parse(&text)?;
    let base = config_dir(config_path);
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if overrides.workers.is_some() {
        config.workers = overrides.workers;
    }
    let out = match (&overrides.out, &config.out) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) if o.is_relative() => base.join(o),
        (None, Some(o)) => o.clone(),
        (None, None) => base.join("ddrct-out"),
    };
    let artifacts = execute(config, &base)?;
    for line in &artifacts.log {
        eprintln!("{line}");
    }
    write_artifacts(&out, &artifacts.files)?;
    Ok(out)
}

/// `simulate <dgp-config>`: writes `data.csv` and `truth.json`.
pub fn simulate(dgp_path: &Path, overrides: &Overrides) -> Result<PathBuf> {
    let text = read_text(dgp_path, "dgp config")?;
    let mut spec: DgpSpec = toml::from_str(&text).map_err(|e| Error::Config(e.message().replace('\n', " ")))?;
    if let Some(seed) = overrides.seed {
        spec.seed = seed;
    }
    spec.validate()?;
    let truth = generate(&spec)?;
    let out = overrides.out.clone().unwrap_or_else(|| config_dir(dgp_path));
    write_artifacts(&out, &[("data.csv", truth.to_csv()), ("truth.json", truth.truth_json(&spec))])?;
    Ok(out)
}

/// `report <tree.json>`: re-renders `nodes.csv` and `tree.dot`.
pub fn report(tree_path: &Path, overrides: &Overrides) -> Result<PathBuf> {
    let text = std::fs::read_to_string(tree_path).map_err(|e| Error::io(tree_path, e))?;
    let tree = tree_from_json(&text)?;
    let out = overrides.out.clone().unwrap_or_else(|| config_dir(tree_path));
    write_artifacts(&out, &[("nodes.csv", nodes_csv(&tree)), ("tree.dot", to_dot(&tree))])?;
    Ok(out)
}
