//! Tabular input: loading and screening, the maths-index outcome, and the
//! fold/half partitions shared by every downstream estimator.
//!
//! Missing covariate values are stored as `NaN` and left for the tree layer
//! to route; nothing is imputed.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Column-major numeric table. Missing cells are `NaN`.
#[derive(Clone, Debug, PartialEq)]
pub struct CovariateTable {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    n_rows: usize,
}

impl CovariateTable {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::Data(format!(
                "{} column names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for name in &names {
            if name.is_empty() {
                return Err(Error::Data("empty covariate name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::Data(format!("duplicate covariate name `{name}`")));
            }
        }
        let n_rows = columns.first().map_or(0, Vec::len);
        if let Some((j, _)) = columns.iter().enumerate().find(|(_, c)| c.len() != n_rows) {
            return Err(Error::Data(format!(
                "covariate `{}` has {} rows, expected {n_rows}",
                names[j],
                columns[j].len()
            )));
        }
        Ok(Self {
            names,
            columns,
            n_rows,
        })
    }

    /// Builds a table from row-major data, naming columns `x1..xp`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        let columns = (0..p).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        let names = (1..=p).map(|j| format!("x{j}")).collect();
        Self::new(names, columns)
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    #[inline]
    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    #[inline]
    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.columns[col][row]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, j: usize) -> &str {
        &self.names[j]
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&i| c[i]).collect())
                .collect(),
            n_rows: rows.len(),
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        Self::new(
            cols.iter().map(|&j| self.names[j].clone()).collect(),
            cols.iter().map(|&j| self.columns[j].clone()).collect(),
        )
    }
}

/// Outcome, arm assignment, optional randomisation cluster and covariates.
///
/// Arms are `0..n_arms`, arm 0 being the reference group; every arm holds at
/// least two units.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    outcome: Vec<f64>,
    treatment: Vec<usize>,
    clusters: Option<Clusters>,
    covariates: CovariateTable,
    n_arms: usize,
}

/// Opaque cluster labels mapped to dense ids in order of first appearance.
#[derive(Clone, Debug, PartialEq)]
pub struct Clusters {
    pub id_of: Vec<usize>,
    pub labels: Vec<String>,
}

impl Clusters {
    pub fn from_labels<S: AsRef<str>>(labels: &[S]) -> Self {
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut names = Vec::new();
        let id_of = labels
            .iter()
            .map(|l| {
                let l = l.as_ref();
                *index.entry(l).or_insert_with(|| {
                    names.push(l.to_string());
                    names.len() - 1
                })
            })
            .collect();
        Self {
            id_of,
            labels: names,
        }
    }

    pub fn n_clusters(&self) -> usize {
        self.labels.len()
    }

    fn select(&self, rows: &[usize]) -> Self {
        let labels: Vec<&str> = rows
            .iter()
            .map(|&i| self.labels[self.id_of[i]].as_str())
            .collect();
        Self::from_labels(&labels)
    }
}

impl Dataset {
    pub fn new(
        outcome: Vec<f64>,
        treatment: Vec<usize>,
        clusters: Option<Clusters>,
        covariates: CovariateTable,
    ) -> Result<Self> {
        let n = outcome.len();
        if treatment.len() != n {
            return Err(Error::Data(format!(
                "treatment has {} rows, outcome has {n}",
                treatment.len()
            )));
        }
        if covariates.n_cols() > 0 && covariates.n_rows() != n {
            return Err(Error::Data(format!(
                "covariates have {} rows, outcome has {n}",
                covariates.n_rows()
            )));
        }
        if let Some(c) = &clusters {
            if c.id_of.len() != n {
                return Err(Error::Data(format!(
                    "cluster column has {} rows, outcome has {n}",
                    c.id_of.len()
                )));
            }
        }
        if let Some(i) = outcome.iter().position(|y| !y.is_finite()) {
            return Err(Error::Data(format!("outcome is missing or non-finite at row {i}")));
        }
        let n_arms = treatment.iter().max().map_or(0, |&m| m + 1);
        if n_arms < 2 {
            return Err(Error::Data(format!(
                "need at least 2 treatment arms, found {n_arms}"
            )));
        }
        let mut counts = vec![0usize; n_arms];
        for &w in &treatment {
            counts[w] += 1;
        }
        if let Some(k) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Data(format!(
                "treatment arms must be contiguous 0..{}; arm {k} is empty",
                n_arms - 1
            )));
        }
        if let Some(k) = counts.iter().position(|&c| c < 2) {
            return Err(Error::Data(format!("arm {k} has fewer than 2 units")));
        }
        Ok(Self {
            outcome,
            treatment,
            clusters,
            covariates,
            n_arms,
        })
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.outcome.len()
    }

    #[inline]
    pub fn n_arms(&self) -> usize {
        self.n_arms
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn treatment(&self) -> &[usize] {
        &self.treatment
    }

    pub fn covariates(&self) -> &CovariateTable {
        &self.covariates
    }

    pub fn clusters(&self) -> Option<&Clusters> {
        self.clusters.as_ref()
    }

    /// Dense cluster id per row, if a cluster column was supplied.
    pub fn cluster_ids(&self) -> Option<&[usize]> {
        self.clusters.as_ref().map(|c| c.id_of.as_slice())
    }

    pub fn column_names(&self) -> &[String] {
        self.covariates.names()
    }

    pub fn arm_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_arms];
        for &w in &self.treatment {
            counts[w] += 1;
        }
        counts
    }

    /// Units whose arm is `arm`, ascending.
    pub fn units_in_arm(&self, arm: usize) -> Vec<usize> {
        (0..self.n_rows())
            .filter(|&i| self.treatment[i] == arm)
            .collect()
    }

    /// Rows `rows` with treatment relabelled by `relabel`, which must produce
    /// contiguous arms.
    pub fn subset_relabelled(&self, rows: &[usize], relabel: impl Fn(usize) -> usize) -> Result<Self> {
        Dataset::new(
            rows.iter().map(|&i| self.outcome[i]).collect(),
            rows.iter().map(|&i| relabel(self.treatment[i])).collect(),
            self.clusters.as_ref().map(|c| c.select(rows)),
            self.covariates.select_rows(rows),
        )
    }
}

/// Which columns of the input become covariates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum CovariateRule {
    /// Exactly these columns, in this order.
    Explicit { columns: Vec<String> },
    /// Every column whose name starts with one of the prefixes.
    Prefix { prefixes: Vec<String> },
    /// Every column not assigned another role.
    #[default]
    AllNumeric,
}

/// Maps input columns to roles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub outcome: String,
    pub treatment: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<String>,
    #[serde(default)]
    pub covariates: CovariateRule,
}

impl Schema {
    pub fn new(outcome: impl Into<String>, treatment: impl Into<String>) -> Self {
        Self {
            outcome: outcome.into(),
            treatment: treatment.into(),
            cluster: None,
            covariates: CovariateRule::AllNumeric,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DroppedColumn {
    pub column: String,
    pub reason: String,
}

impl fmt::Display for DroppedColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DROPPED {} {}", self.column, self.reason)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ScreeningReport {
    pub dropped_columns: Vec<DroppedColumn>,
    /// Rows removed for a missing outcome, treatment or cluster cell.
    pub dropped_rows: usize,
}

impl ScreeningReport {
    pub fn log_lines(&self) -> Vec<String> {
        self.dropped_columns.iter().map(ToString::to_string).collect()
    }
}

#[derive(Clone, Debug)]
pub struct LoadedTable {
    pub dataset: Dataset,
    pub screening: ScreeningReport,
}

fn parse_cell(cell: &str) -> Option<std::result::Result<f64, ()>> {
    let cell = cell.trim();
    if cell.is_empty() {
        None
    } else {
        Some(cell.parse::<f64>().map_err(|_| ()))
    }
}

fn parse_arm(cell: &str) -> Option<std::result::Result<usize, ()>> {
    parse_cell(cell).map(|v| {
        v.and_then(|x| {
            if x >= 0.0 && x.fract() == 0.0 && x < 1e9 {
                Ok(x as usize)
            } else {
                Err(())
            }
        })
    })
}

/// Reads a comma-separated table with a header row.
///
/// Dialect: `,` separator, `.` decimal point, an empty cell is missing.
/// Candidate covariates with any non-numeric cell are dropped and reported.
/// Rows with a missing outcome, treatment or (when configured) cluster are
/// dropped and counted.
pub fn load_table(path: impl AsRef<Path>, schema: &Schema) -> Result<LoadedTable> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Data(format!("{}: {other:?}", path.display())),
        })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Data(format!("{}: bad header: {e}", path.display())))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let find = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("column `{name}` not found in {}", path.display())))
    };
    let y_col = find(&schema.outcome)?;
    let w_col = find(&schema.treatment)?;
    let c_col = schema.cluster.as_deref().map(find).transpose()?;
    let reserved = |j: usize| j == y_col || j == w_col || Some(j) == c_col;

    let candidates: Vec<usize> = match &schema.covariates {
        CovariateRule::Explicit { columns } => columns
            .iter()
            .map(|c| find(c))
            .collect::<Result<Vec<_>>>()?,
        CovariateRule::Prefix { prefixes } => (0..header.len())
            .filter(|&j| !reserved(j) && prefixes.iter().any(|p| header[j].starts_with(p.as_str())))
            .collect(),
        CovariateRule::AllNumeric => (0..header.len()).filter(|&j| !reserved(j)).collect(),
    };

    let mut records = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data(format!("{}: row {}: {e}", path.display(), line + 2)))?;
        if rec.len() != header.len() {
            return Err(Error::Data(format!(
                "{}: row {} has {} fields, header has {}",
                path.display(),
                line + 2,
                rec.len(),
                header.len()
            )));
        }
        records.push(rec);
    }

    let mut screening = ScreeningReport::default();
    let mut kept_rows = Vec::with_capacity(records.len());
    let mut outcome = Vec::new();
    let mut treatment = Vec::new();
    let mut cluster_labels = Vec::new();
    for (r, rec) in records.iter().enumerate() {
        let y = match parse_cell(&rec[y_col]) {
            None => None,
            Some(Ok(v)) if v.is_finite() => Some(v),
            Some(_) => {
                return Err(Error::Data(format!(
                    "non-numeric outcome `{}` at row {}",
                    &rec[y_col],
                    r + 2
                )))
            }
        };
        let w = match parse_arm(&rec[w_col]) {
            None => None,
            Some(Ok(v)) => Some(v),
            Some(Err(())) => {
                return Err(Error::Data(format!(
                    "treatment `{}` at row {} is not a non-negative integer arm id",
                    &rec[w_col],
                    r + 2
                )))
            }
        };
        let c = c_col.map(|j| rec[j].trim().to_string());
        match (y, w) {
            (Some(y), Some(w)) if c.as_deref() != Some("") => {
                kept_rows.push(r);
                outcome.push(y);
                treatment.push(w);
                if let Some(c) = c {
                    cluster_labels.push(c);
                }
            }
            _ => screening.dropped_rows += 1,
        }
    }

    let mut names = Vec::new();
    let mut columns = Vec::new();
    for &j in &candidates {
        let mut col = Vec::with_capacity(kept_rows.len());
        let mut bad = None;
        for &r in &kept_rows {
            match parse_cell(&records[r][j]) {
                None => col.push(f64::NAN),
                Some(Ok(v)) if v.is_finite() => col.push(v),
                Some(_) => {
                    bad = Some(records[r][j].to_string());
                    break;
                }
            }
        }
        match bad {
            Some(cell) => screening.dropped_columns.push(DroppedColumn {
                column: header[j].clone(),
                reason: format!("non-numeric value `{cell}`"),
            }),
            None => {
                names.push(header[j].clone());
                columns.push(col);
            }
        }
    }
    if columns.is_empty() {
        return Err(Error::Data("zero covariates selected".into()));
    }
    let distinct_arms: BTreeSet<usize> = treatment.iter().copied().collect();
    if distinct_arms.len() < 2 {
        return Err(Error::Data(format!(
            "fewer than 2 treatment arms after filtering ({} present)",
            distinct_arms.len()
        )));
    }
    let clusters = c_col.map(|_| Clusters::from_labels(&cluster_labels));
    let dataset = Dataset::new(outcome, treatment, clusters, CovariateTable::new(names, columns)?)?;
    Ok(LoadedTable { dataset, screening })
}

/// Points earned and available in one test category.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CategoryScore {
    pub earned: f64,
    pub max: f64,
}

impl CategoryScore {
    pub fn new(earned: f64, max: f64) -> Self {
        Self { earned, max }
    }
}

/// Maths index per unit: each of the four categories (digit recognition,
/// number recognition, subtraction, division) scaled to a maximum of one,
/// then summed. Range `[0, 4]`.
pub fn build_maths_index(units: &[[CategoryScore; 4]]) -> Result<Vec<f64>> {
    units
        .iter()
        .enumerate()
        .map(|(i, cats)| {
            cats.iter().try_fold(0.0, |acc, c| {
                if !(c.max > 0.0) {
                    Err(Error::Data(format!("unit {i}: category maximum must be positive")))
                } else if c.earned < 0.0 {
                    Err(Error::Data(format!("unit {i}: negative points")))
                } else if c.earned > c.max {
                    Err(Error::Data(format!(
                        "unit {i}: earned {} exceeds maximum {}",
                        c.earned, c.max
                    )))
                } else {
                    Ok(acc + c.earned / c.max)
                }
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Half {
    Fit,
    Estimate,
}

/// Cross-fitting folds and the fit/estimate halves.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitPlan {
    pub fold_of: Vec<usize>,
    pub half_of: Vec<Half>,
    pub k_folds: usize,
    pub seed: u64,
}

impl SplitPlan {
    pub fn fold_units(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] == fold)
            .collect()
    }

    pub fn fold_complement(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] != fold)
            .collect()
    }

    pub fn half_units(&self, half: Half) -> Vec<usize> {
        (0..self.half_of.len())
            .filter(|&i| self.half_of[i] == half)
            .collect()
    }
}

/// Greedy balancing: clusters in random order, stably sorted by size
/// (largest first), each assigned to the currently smallest group (lowest
/// index on ties).
fn balance_clusters(sizes: &[usize], groups: usize, rng: &mut impl rand::Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.shuffle(rng);
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]));
    let mut load = vec![0usize; groups];
    let mut group_of = vec![0; sizes.len()];
    for c in order {
        let g = (0..groups).min_by_key(|&g| (load[g], g)).unwrap();
        group_of[c] = g;
        load[g] += sizes[c];
    }
    group_of
}

fn round_robin(n: usize, groups: usize, rng: &mut impl rand::Rng) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut group_of = vec![0; n];
    for (j, &i) in perm.iter().enumerate() {
        group_of[i] = j % groups;
    }
    group_of
}

/// Assigns every unit a cross-fitting fold and a fit/estimate half.
///
/// Unit mode gives folds (and halves) whose sizes differ by at most one. In
/// cluster-respecting mode (ignored when the dataset has no clusters) whole
/// clusters are placed by greedy size balancing, so each cluster lies in a
/// single fold and a single half.
pub fn make_split_plan(
    dataset: &Dataset,
    k_folds: usize,
    seed: u64,
    cluster_respecting: bool,
) -> Result<SplitPlan> {
    let n = dataset.n_rows();
    if k_folds < 2 {
        return Err(Error::InvalidParameter(format!("k_folds must be >= 2, got {k_folds}")));
    }
    if n < 2 * k_folds {
        return Err(Error::Data(format!(
            "{n} rows cannot populate {k_folds} folds (need at least {})",
            2 * k_folds
        )));
    }
    let mut fold_rng = rng::stream(seed, &[rng::STREAM_SPLIT_PLAN, 0]);
    let mut half_rng = rng::stream(seed, &[rng::STREAM_SPLIT_PLAN, 1]);
    let (fold_of, half_group) = match dataset.clusters() {
        Some(clusters) if cluster_respecting => {
            let g = clusters.n_clusters();
            if g < k_folds.max(2) {
                return Err(Error::Data(format!(
                    "{g} clusters cannot populate {k_folds} folds and two halves"
                )));
            }
            let mut sizes = vec![0; g];
            for &c in &clusters.id_of {
                sizes[c] += 1;
            }
            let fold_of_cluster = balance_clusters(&sizes, k_folds, &mut fold_rng);
            let half_of_cluster = balance_clusters(&sizes, 2, &mut half_rng);
            (
                clusters.id_of.iter().map(|&c| fold_of_cluster[c]).collect(),
                clusters.id_of.iter().map(|&c| half_of_cluster[c]).collect::<Vec<_>>(),
            )
        }
        _ => (
            round_robin(n, k_folds, &mut fold_rng),
            round_robin(n, 2, &mut half_rng),
        ),
    };
    Ok(SplitPlan {
        fold_of,
        half_of: half_group
            .into_iter()
            .map(|h| if h == 0 { Half::Fit } else { Half::Estimate })
            .collect(),
        k_folds,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    fn toy(n: usize, clusters: Option<Vec<String>>) -> Dataset {
        let cov = CovariateTable::new(vec!["x".into()], vec![(0..n).map(|i| i as f64).collect()]).unwrap();
        Dataset::new(
            vec![0.0; n],
            (0..n).map(|i| i % 2).collect(),
            clusters.map(|c| Clusters::from_labels(&c)),
            cov,
        )
        .unwrap()
    }

    #[test]
    fn smallest_valid_table() {
        // one unit per arm is below the two-per-arm minimum
        let f = write_csv("y,w,x\n1.0,0,3\n2.0,1,4\n");
        assert!(load_table(f.path(), &Schema::new("y", "w")).is_err());
        let f = write_csv("y,w,x\n1.0,0,3\n2.0,1,4\n1.5,0,\n0.5,1,2\n");
        let t = load_table(f.path(), &Schema::new("y", "w")).unwrap();
        assert_eq!(t.dataset.n_rows(), 4);
        assert!(t.dataset.covariates().value(2, 0).is_nan());
    }

    #[test]
    fn text_column_is_dropped_and_reported() {
        let f = write_csv("y,w,x,name\n1,0,3,a\n2,1,4,b\n1,0,5,c\n2,1,6,d\n");
        let t = load_table(f.path(), &Schema::new("y", "w")).unwrap();
        assert_eq!(t.dataset.n_rows(), 4);
        assert_eq!(t.dataset.column_names(), &["x".to_string()]);
        assert_eq!(t.screening.log_lines(), vec!["DROPPED name non-numeric value `a`"]);
    }

    #[test]
    fn rows_with_missing_roles_are_dropped() {
        let f = write_csv("y,w,x\n1,0,3\n,1,4\n1,,5\n2,1,6\n0,0,1\n3,1,1\n");
        let t = load_table(f.path(), &Schema::new("y", "w")).unwrap();
        assert_eq!(t.dataset.n_rows(), 4);
        assert_eq!(t.screening.dropped_rows, 2);
    }

    #[test]
    fn load_errors() {
        let missing = load_table("/nonexistent/file.csv", &Schema::new("y", "w"));
        assert!(matches!(missing, Err(Error::Io { .. })));

        let f = write_csv("y,w,x\n1,0,3\n2,0,4\n");
        assert!(load_table(f.path(), &Schema::new("y", "treat")).is_err());
        assert!(load_table(f.path(), &Schema::new("y", "w")).is_err(), "one arm");

        let f = write_csv("y,w,name\n1,0,a\n2,1,b\n1,0,c\n2,1,d\n");
        let err = load_table(f.path(), &Schema::new("y", "w")).unwrap_err();
        assert!(err.to_string().contains("zero covariates"));
    }

    #[test]
    fn covariate_rules() {
        let f = write_csv("y,w,a1,a2,b1,s\n1,0,1,2,3,s1\n2,1,1,2,3,s1\n1,0,1,2,3,s2\n2,1,1,2,3,s2\n");
        let mut schema = Schema::new("y", "w");
        schema.cluster = Some("s".into());
        schema.covariates = CovariateRule::Prefix {
            prefixes: vec!["a".into()],
        };
        let t = load_table(f.path(), &schema).unwrap();
        assert_eq!(t.dataset.column_names(), &["a1".to_string(), "a2".to_string()]);
        assert_eq!(t.dataset.clusters().unwrap().n_clusters(), 2);

        schema.covariates = CovariateRule::Explicit {
            columns: vec!["b1".into(), "a1".into()],
        };
        let t = load_table(f.path(), &schema).unwrap();
        assert_eq!(t.dataset.column_names(), &["b1".to_string(), "a1".to_string()]);

        schema.covariates = CovariateRule::Explicit {
            columns: vec!["zz".into()],
        };
        assert!(load_table(f.path(), &schema).is_err());
    }

    #[test]
    fn dataset_invariants() {
        let cov = CovariateTable::new(vec!["x".into()], vec![vec![0.0; 5]]).unwrap();
        // arm 1 missing from {0, 2}
        assert!(Dataset::new(vec![0.0; 5], vec![0, 0, 2, 2, 2], None, cov.clone()).is_err());
        // arm with a single unit
        assert!(Dataset::new(vec![0.0; 5], vec![0, 0, 0, 0, 1], None, cov.clone()).is_err());
        assert!(Dataset::new(vec![0.0, 1.0, f64::NAN, 0.0, 0.0], vec![0, 0, 1, 1, 1], None, cov.clone()).is_err());
        assert!(CovariateTable::new(vec!["a".into(), "a".into()], vec![vec![], vec![]]).is_err());
        assert!(CovariateTable::new(vec!["".into()], vec![vec![]]).is_err());
    }

    #[test]
    fn maths_index() {
        let full = [CategoryScore::new(5.0, 5.0); 4];
        let zero = [CategoryScore::new(0.0, 3.0); 4];
        let mixed = [
            CategoryScore::new(2.0, 4.0),
            CategoryScore::new(3.0, 3.0),
            CategoryScore::new(0.0, 2.0),
            CategoryScore::new(1.0, 5.0),
        ];
        let idx = build_maths_index(&[full, zero, mixed]).unwrap();
        assert_eq!(idx[0], 4.0);
        assert_eq!(idx[1], 0.0);
        assert!((idx[2] - 1.7).abs() < 1e-12);

        let mut neg = full;
        neg[1].earned = -1.0;
        assert!(build_maths_index(&[neg]).is_err());
        let mut over = full;
        over[3].earned = 6.0;
        assert!(build_maths_index(&[over]).is_err());
        let mut nomax = full;
        nomax[0] = CategoryScore::new(0.0, 0.0);
        assert!(build_maths_index(&[nomax]).is_err());
    }

    #[test]
    fn ten_units_five_folds() {
        let d = toy(10, None);
        let plan = make_split_plan(&d, 5, 3, true).unwrap();
        for f in 0..5 {
            assert_eq!(plan.fold_units(f).len(), 2);
        }
        assert_eq!(plan.half_units(Half::Fit).len(), 5);
        assert_eq!(plan, make_split_plan(&d, 5, 3, true).unwrap());
        assert_ne!(plan.fold_of, make_split_plan(&d, 5, 4, true).unwrap().fold_of);
    }

    #[test]
    fn clusters_stay_whole_and_balance() {
        let labels: Vec<String> = ["a", "a", "a", "b", "b", "b", "c", "c", "d", "d"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let d = toy(10, Some(labels));
        for seed in 0..20 {
            let plan = make_split_plan(&d, 2, seed, true).unwrap();
            let ids = d.cluster_ids().unwrap();
            for i in 0..10 {
                for j in 0..10 {
                    if ids[i] == ids[j] {
                        assert_eq!(plan.fold_of[i], plan.fold_of[j]);
                        assert_eq!(plan.half_of[i], plan.half_of[j]);
                    }
                }
            }
            assert_eq!(plan.fold_units(0).len(), 5);
            assert_eq!(plan.fold_units(1).len(), 5);
        }
        assert!(make_split_plan(&d, 5, 0, true).is_err(), "4 clusters, 5 folds");
        assert!(make_split_plan(&d, 5, 0, false).is_ok());
    }

    #[test]
    fn too_few_rows() {
        let d = toy(6, None);
        assert!(make_split_plan(&d, 4, 0, false).is_err());
        assert!(make_split_plan(&d, 1, 0, false).is_err());
    }
}
