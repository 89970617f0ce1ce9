//! Synthetic activations with a planted anomalous submatrix.

use std::path::Path;

use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{Label, LabeledPool};
use crate::matrix::{default_node_ids, write_atomic, ActivationMatrix};
use crate::rng;
use crate::scan::Subset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Background rows.
    pub z: usize,
    /// Test rows.
    pub m: usize,
    /// Nodes.
    pub j: usize,
    pub anomalous_sample_fraction: f64,
    pub anomalous_node_fraction: f64,
    /// Additive shift of planted cells, in background standard deviations.
    pub shift: f64,
    pub seed: u64,
    /// Pass every activation through `max(0, x)`, producing heavy ties at 0.
    pub rectified: bool,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            z: 250,
            m: 200,
            j: 64,
            anomalous_sample_fraction: 0.5,
            anomalous_node_fraction: 0.25,
            shift: 2.0,
            seed: 0,
            rectified: false,
        }
    }
}

impl SynthSpec {
    pub fn planted_samples(&self) -> usize {
        (self.m as f64 * self.anomalous_sample_fraction).round() as usize
    }

    pub fn planted_nodes(&self) -> usize {
        (self.j as f64 * self.anomalous_node_fraction).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.z == 0 || self.m == 0 || self.j == 0 {
            return Err(Error::InvalidConfig("z, m and j must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.anomalous_sample_fraction) {
            return Err(Error::InvalidConfig(format!(
                "anomalous sample fraction must lie in [0, 1], got {}",
                self.anomalous_sample_fraction
            )));
        }
        if !(self.anomalous_node_fraction > 0.0 && self.anomalous_node_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "anomalous node fraction must lie in (0, 1], got {}",
                self.anomalous_node_fraction
            )));
        }
        if !self.shift.is_finite() {
            return Err(Error::InvalidConfig("shift must be finite".into()));
        }
        if self.anomalous_sample_fraction > 0.0 && self.planted_samples() == 0 {
            return Err(Error::InvalidConfig(
                "anomalous sample fraction rounds to zero samples".into(),
            ));
        }
        if self.planted_nodes() == 0 {
            return Err(Error::InvalidConfig(
                "anomalous node fraction rounds to zero nodes".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub background: ActivationMatrix,
    pub test: ActivationMatrix,
    /// Planted submatrix; `None` when no sample is planted.
    pub truth: Option<Subset>,
    /// Test rows labeled `creative` (planted) or `normal`.
    pub pool: LabeledPool,
}

/// Draws background and test matrices from a standard normal and adds
/// `shift` to a random `round(m * f_s) x round(j * f_n)` submatrix of the
/// test matrix.
pub fn synth_generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let draw = |rows: usize, stream: u64| -> Vec<f64> {
        let mut rng = rng::stream(spec.seed, stream);
        (0..rows * spec.j)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect()
    };
    let mut background = draw(spec.z, 0);
    let mut test = draw(spec.m, 1);

    let mut picker = rng::stream(spec.seed, 2);
    let mut planted_rows = index::sample(&mut picker, spec.m, spec.planted_samples()).into_vec();
    let mut planted_nodes = index::sample(&mut picker, spec.j, spec.planted_nodes()).into_vec();
    planted_rows.sort_unstable();
    planted_nodes.sort_unstable();
    for &i in &planted_rows {
        for &c in &planted_nodes {
            test[i * spec.j + c] += spec.shift;
        }
    }
    if spec.rectified {
        for v in background.iter_mut().chain(test.iter_mut()) {
            *v = v.max(0.0);
        }
    }

    let node_ids = default_node_ids(spec.j);
    let background = ActivationMatrix::from_row_major(
        spec.z,
        spec.j,
        background,
        node_ids.clone(),
        Some((0..spec.z).map(|i| format!("b{i}")).collect()),
    )?;
    let test = ActivationMatrix::from_row_major(
        spec.m,
        spec.j,
        test,
        node_ids,
        Some((0..spec.m).map(|i| format!("s{i}")).collect()),
    )?;
    let mut labels = vec![Label::Normal; spec.m];
    for &i in &planted_rows {
        labels[i] = Label::Creative;
    }
    let truth = if planted_rows.is_empty() {
        None
    } else {
        Some(Subset::new(planted_rows, planted_nodes)?)
    };
    let pool = LabeledPool::new(test.clone(), labels)?;
    Ok(SynthData {
        background,
        test,
        truth,
        pool,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub sample_indices: Vec<usize>,
    pub node_indices: Vec<usize>,
}

impl From<Option<&Subset>> for GroundTruth {
    fn from(truth: Option<&Subset>) -> Self {
        match truth {
            Some(s) => Self {
                sample_indices: s.samples().to_vec(),
                node_indices: s.nodes().to_vec(),
            },
            None => Self {
                sample_indices: Vec::new(),
                node_indices: Vec::new(),
            },
        }
    }
}

pub fn save_truth(truth: Option<&Subset>, path: impl AsRef<Path>) -> Result<()> {
    let json = serde_json::to_string_pretty(&GroundTruth::from(truth))?;
    write_atomic(path.as_ref(), |out| writeln!(out, "{json}"))
}

/// `|a ∩ b| / |a ∪ b|` of two sorted index sets.
pub fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    let (mut i, mut k, mut common) = (0, 0, 0);
    while i < a.len() && k < b.len() {
        match a[i].cmp(&b[k]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => k += 1,
            std::cmp::Ordering::Equal => {
                common += 1;
                i += 1;
                k += 1;
            }
        }
    }
    let union = a.len() + b.len() - common;
    if union == 0 {
        1.0
    } else {
        common as f64 / union as f64
    }
}
