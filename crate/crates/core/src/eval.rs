//! Detection-power evaluation on labeled pools.
//!
//! Test groups mix a controlled proportion of target-label samples (e.g.
//! `creative`) with `normal` ones; null groups hold only `normal` samples.
//! Each group is scored by its group-scan score, and detection power is the
//! AUC separating the two populations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{write_atomic, ActivationMatrix, PValueMatrix};
use crate::pvalue::compute_pvalues;
use crate::rng;
use crate::scan::{compare_results, scan_group, scan_individual, ScanConfig, ScanResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Normal,
    NonCreative,
    Creative,
    Inconclusive,
}

impl Label {
    pub const ALL: [Label; 4] = [
        Label::Normal,
        Label::NonCreative,
        Label::Creative,
        Label::Inconclusive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::NonCreative => "non_creative",
            Label::Creative => "creative",
            Label::Inconclusive => "inconclusive",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Label::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}

/// Test activations with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPool {
    activations: ActivationMatrix,
    labels: Vec<Label>,
}

impl LabeledPool {
    pub fn new(activations: ActivationMatrix, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != activations.rows() {
            return Err(Error::Labels(format!(
                "{} labels for {} rows",
                labels.len(),
                activations.rows()
            )));
        }
        Ok(Self {
            activations,
            labels,
        })
    }

    pub fn activations(&self) -> &ActivationMatrix {
        &self.activations
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn indices_with(&self, label: Label) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&i| self.labels[i] == label)
            .collect()
    }
}

/// Reads a labels file: a header (`label` or `sample_id,label`) followed by
/// one row per pool sample, in pool order.
pub fn read_labels(reader: impl BufRead) -> Result<Vec<Label>> {
    let mut lines = reader
        .lines()
        .map(|l| l.map_err(|e| Error::io("<labels>", e)))
        .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty() || s.starts_with('#')));
    let header = lines
        .next()
        .ok_or_else(|| Error::Labels("missing header".into()))??;
    let column = header
        .trim()
        .split(',')
        .map(str::trim)
        .position(|c| c == "label")
        .ok_or_else(|| {
            Error::Labels(format!("header `{}` has no `label` column", header.trim()))
        })?;
    let mut labels = Vec::new();
    for (row, line) in lines.enumerate() {
        let line = line?;
        let field = line
            .trim()
            .split(',')
            .nth(column)
            .ok_or_else(|| Error::Labels(format!("row {} has no label field", row + 1)))?;
        labels.push(field.trim().parse()?);
    }
    Ok(labels)
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<Label>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_labels(BufReader::new(file))
}

pub fn save_labels(pool: &LabeledPool, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), |out| {
        writeln!(out, "sample_id,label")?;
        for (i, label) in pool.labels.iter().enumerate() {
            writeln!(out, "{},{}", pool.activations.sample_label(i), label)?;
        }
        Ok(())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub group_size: usize,
    pub proportions: Vec<f64>,
    pub trials_per_proportion: usize,
    pub seed: u64,
    pub scan: ScanConfig,
    /// Label whose samples are mixed into the anomaly-bearing groups.
    pub target: Label,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            group_size: 50,
            proportions: vec![0.5, 0.1],
            trials_per_proportion: 40,
            seed: 0,
            scan: ScanConfig::default(),
            target: Label::Creative,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self, pool: &LabeledPool) -> Result<()> {
        self.scan.validate()?;
        if self.group_size == 0 || self.trials_per_proportion == 0 {
            return Err(Error::InvalidConfig(
                "group_size and trials_per_proportion must be at least 1".into(),
            ));
        }
        if self.proportions.is_empty() {
            return Err(Error::Empty("proportions"));
        }
        for &p in &self.proportions {
            check_strata(pool, self.target, self.group_size, p)?;
        }
        Ok(())
    }
}

fn target_count(group_size: usize, proportion: f64) -> usize {
    (proportion * group_size as f64).round() as usize
}

fn check_strata(
    pool: &LabeledPool,
    target: Label,
    group_size: usize,
    proportion: f64,
) -> Result<(Vec<usize>, Vec<usize>, usize)> {
    if !(0.0..=1.0).contains(&proportion) {
        return Err(Error::InvalidConfig(format!(
            "proportion must lie in [0, 1], got {proportion}"
        )));
    }
    if matches!(target, Label::Normal | Label::Inconclusive) {
        return Err(Error::InvalidConfig(format!(
            "target label must be creative or non_creative, got {target}"
        )));
    }
    let k = target_count(group_size, proportion);
    let targets = pool.indices_with(target);
    let normals = pool.indices_with(Label::Normal);
    if targets.len() < k {
        return Err(Error::InsufficientPool {
            label: target.to_string(),
            needed: k,
            available: targets.len(),
        });
    }
    if normals.len() < group_size - k {
        return Err(Error::InsufficientPool {
            label: Label::Normal.to_string(),
            needed: group_size - k,
            available: normals.len(),
        });
    }
    Ok((targets, normals, k))
}

/// Draws `trials` groups of `group_size` pool rows, each holding exactly
/// `round(proportion * group_size)` target-label rows and the rest `normal`.
/// Rows are drawn without replacement within a group and independently
/// across groups. Each group is returned sorted.
pub fn build_groups(
    pool: &LabeledPool,
    target: Label,
    group_size: usize,
    proportion: f64,
    trials: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    let (targets, normals, k) = check_strata(pool, target, group_size, proportion)?;
    let mut rng = rng::stream(seed, 0);
    Ok((0..trials)
        .map(|_| {
            let mut group: Vec<usize> = index::sample(&mut rng, targets.len(), k)
                .into_iter()
                .map(|i| targets[i])
                .chain(
                    index::sample(&mut rng, normals.len(), group_size - k)
                        .into_iter()
                        .map(|i| normals[i]),
                )
                .collect();
            group.sort_unstable();
            group
        })
        .collect())
}

/// Mann-Whitney AUC: the fraction of (positive, null) pairs in which the
/// positive score is larger, ties counting one half.
pub fn auc(positive_scores: &[f64], null_scores: &[f64]) -> Result<f64> {
    if positive_scores.is_empty() {
        return Err(Error::Empty("positive scores"));
    }
    if null_scores.is_empty() {
        return Err(Error::Empty("null scores"));
    }
    let mut nulls = null_scores.to_vec();
    nulls.sort_by(f64::total_cmp);
    let wins: f64 = positive_scores
        .iter()
        .map(|&s| {
            let below = nulls.partition_point(|&x| x < s);
            let tied = nulls[below..].partition_point(|&x| x <= s);
            below as f64 + 0.5 * tied as f64
        })
        .sum();
    Ok(wins / (positive_scores.len() as f64 * nulls.len() as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    pub histogram: BTreeMap<usize, usize>,
    pub min: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: usize,
    pub mean: f64,
}

impl SizeSummary {
    fn from_sizes(mut sizes: Vec<usize>) -> Self {
        sizes.sort_unstable();
        let mut histogram = BTreeMap::new();
        for &s in &sizes {
            *histogram.entry(s).or_insert(0) += 1;
        }
        Self {
            histogram,
            min: sizes[0],
            q1: quantile(&sizes, 0.25),
            median: quantile(&sizes, 0.5),
            q3: quantile(&sizes, 0.75),
            max: sizes[sizes.len() - 1],
            mean: sizes.iter().sum::<usize>() as f64 / sizes.len() as f64,
        }
    }
}

/// Linearly interpolated quantile of sorted data.
fn quantile(sorted: &[usize], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] as f64 + (h - lo as f64) * (sorted[hi] as f64 - sorted[lo] as f64)
}

/// Distribution of `|O_S|` (nodes) and `|X_S|` (samples) over scan results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardinalityDistribution {
    pub nodes: SizeSummary,
    pub samples: SizeSummary,
}

pub fn cardinality_distribution(results: &[ScanResult]) -> Result<CardinalityDistribution> {
    if results.is_empty() {
        return Err(Error::Empty("scan results"));
    }
    Ok(CardinalityDistribution {
        nodes: SizeSummary::from_sizes(results.iter().map(|r| r.subset.nodes().len()).collect()),
        samples: SizeSummary::from_sizes(
            results.iter().map(|r| r.subset.samples().len()).collect(),
        ),
    })
}

/// Group-scan outcome for one proportion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionReport {
    pub proportion: f64,
    pub auc: f64,
    pub positive_scores: Vec<f64>,
    pub null_scores: Vec<f64>,
    pub positive_cardinality: CardinalityDistribution,
    pub null_cardinality: CardinalityDistribution,
    /// Optimal subsets of the anomaly-bearing groups, in pool row indices.
    #[serde(skip)]
    pub positive_results: Vec<ScanResult>,
    #[serde(skip)]
    pub null_results: Vec<ScanResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualReport {
    pub auc: f64,
    pub positive_scores: Vec<f64>,
    pub null_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub target: Label,
    pub group_size: usize,
    pub trials_per_proportion: usize,
    pub groups: Vec<ProportionReport>,
    pub individual: IndividualReport,
}

impl EvalReport {
    /// `(column, AUC)` pairs in table order: one per proportion, then the
    /// individual scan.
    pub fn auc_row(&self) -> Vec<(String, f64)> {
        self.groups
            .iter()
            .map(|g| (format!("{}%", (g.proportion * 100.0).round()), g.auc))
            .chain(std::iter::once(("Indv.".to_string(), self.individual.auc)))
            .collect()
    }
}

/// Scores every group, mapping subset sample indices back to pool rows.
fn score_groups(
    pvalues: &PValueMatrix,
    groups: &[Vec<usize>],
    scan: &ScanConfig,
) -> Result<Vec<ScanResult>> {
    groups
        .par_iter()
        .map(|group| {
            let mut r = scan_group(&pvalues.select_rows(group)?, scan)?;
            let rows: Vec<usize> = r.subset.samples().iter().map(|&i| group[i]).collect();
            r.subset = crate::scan::Subset::new(rows, r.subset.nodes().to_vec())?;
            Ok(r)
        })
        .collect()
}

/// Detection power of group and individual scanning on a labeled pool.
pub fn detection_power(
    pool: &LabeledPool,
    background: &ActivationMatrix,
    config: &EvalConfig,
) -> Result<EvalReport> {
    config.validate(pool)?;
    let pvalues = compute_pvalues(background, pool.activations())?;

    let mut groups = Vec::with_capacity(config.proportions.len());
    for (idx, &proportion) in config.proportions.iter().enumerate() {
        let stream = 2 * idx as u64;
        let positive = build_groups(
            pool,
            config.target,
            config.group_size,
            proportion,
            config.trials_per_proportion,
            rng::derive_seed(config.seed, stream),
        )?;
        let null = build_groups(
            pool,
            config.target,
            config.group_size,
            0.0,
            config.trials_per_proportion,
            rng::derive_seed(config.seed, stream + 1),
        )?;
        let positive_results = score_groups(&pvalues, &positive, &config.scan)?;
        let null_results = score_groups(&pvalues, &null, &config.scan)?;
        let positive_scores: Vec<f64> = positive_results.iter().map(|r| r.score).collect();
        let null_scores: Vec<f64> = null_results.iter().map(|r| r.score).collect();
        groups.push(ProportionReport {
            proportion,
            auc: auc(&positive_scores, &null_scores)?,
            positive_cardinality: cardinality_distribution(&positive_results)?,
            null_cardinality: cardinality_distribution(&null_results)?,
            positive_scores,
            null_scores,
            positive_results,
            null_results,
        });
    }

    let individual = scan_individual(&pvalues, &config.scan)?;
    let positive_scores: Vec<f64> = pool
        .indices_with(config.target)
        .into_iter()
        .map(|i| individual[i].score)
        .collect();
    let null_scores: Vec<f64> = pool
        .indices_with(Label::Normal)
        .into_iter()
        .map(|i| individual[i].score)
        .collect();
    let individual = IndividualReport {
        auc: auc(&positive_scores, &null_scores)?,
        positive_scores,
        null_scores,
    };

    Ok(EvalReport {
        target: config.target,
        group_size: config.group_size,
        trials_per_proportion: config.trials_per_proportion,
        groups,
        individual,
    })
}

/// Which anomalous node subset the PCA characterization projects onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PcaNodes {
    /// Union of `O_S` over every anomaly-bearing group.
    #[default]
    Union,
    /// `O_S` of the single highest-scoring anomaly-bearing group.
    Best,
}

pub fn anomalous_nodes(report: &EvalReport, source: PcaNodes) -> Vec<usize> {
    let results = report.groups.iter().flat_map(|g| &g.positive_results);
    match source {
        PcaNodes::Union => results
            .flat_map(|r| r.subset.nodes().iter().copied())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
        PcaNodes::Best => results
            .min_by(|a, b| compare_results(a, b))
            .map(|r| r.subset.nodes().to_vec())
            .unwrap_or_default(),
    }
}
