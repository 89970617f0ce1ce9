//! Berk-Jones subset scanning over p-value matrices.
//!
//! A subset is a submatrix `X_S x O_S` (samples by nodes). Its score is
//!
//! ```text
//! F(S) = max_alpha  N(S) * KL(N_alpha(S) / N(S), alpha)
//! ```
//!
//! taken over the observed p-values `alpha <= alpha_max`, where `N(S)` counts
//! the cells of `S` and `N_alpha(S)` those with `p <= alpha`. The score is
//! clamped to zero when the observed proportion does not exceed `alpha`.
//!
//! With the node set fixed, the best sample set for a given `alpha` is a
//! prefix of the samples sorted by their significance count (and vice versa),
//! so each conditional step checks `M` (or `J`) candidates per threshold
//! instead of `2^M`. [`scan_group`] alternates the two steps from random node
//! subsets; [`scan_exhaustive`] enumerates everything and serves as an oracle
//! on small inputs.

use std::cmp::Ordering;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::PValueMatrix;
use crate::rng;

/// Largest side length accepted by [`scan_exhaustive`].
pub const EXHAUSTIVE_LIMIT: usize = 12;

/// A submatrix `X_S x O_S`, both index sets sorted, unique and non-empty.
///
/// Ordering is lexicographic on the sample indices, then the node indices.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Subset {
    sample_indices: Vec<usize>,
    node_indices: Vec<usize>,
}

impl Subset {
    pub fn new(mut samples: Vec<usize>, mut nodes: Vec<usize>) -> Result<Self> {
        for (set, what) in [(&mut samples, "sample"), (&mut nodes, "node")] {
            if set.is_empty() {
                return Err(Error::InvalidSubset(format!("{what} set is empty")));
            }
            set.sort_unstable();
            if set.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidSubset(format!("duplicate {what} index")));
            }
        }
        Ok(Self {
            sample_indices: samples,
            node_indices: nodes,
        })
    }

    pub fn samples(&self) -> &[usize] {
        &self.sample_indices
    }

    pub fn nodes(&self) -> &[usize] {
        &self.node_indices
    }

    /// `N(S) = |X_S| * |O_S|`.
    pub fn cells(&self) -> usize {
        self.sample_indices.len() * self.node_indices.len()
    }

    pub fn check_bounds(&self, rows: usize, cols: usize) -> Result<()> {
        check_set(&self.sample_indices, rows, "sample")?;
        check_set(&self.node_indices, cols, "node")
    }
}

fn check_set(set: &[usize], bound: usize, what: &str) -> Result<()> {
    if set.is_empty() {
        return Err(Error::InvalidSubset(format!("{what} set is empty")));
    }
    if let Some(&i) = set.iter().find(|&&i| i >= bound) {
        return Err(Error::InvalidSubset(format!(
            "{what} index {i} out of bounds ({bound})"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub alpha_max: f64,
    pub restarts: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            alpha_max: 0.5,
            restarts: 10,
            max_iterations: 30,
            tolerance: 1e-9,
            seed: 0,
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_max > 0.0 && self.alpha_max <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha_max must lie in (0, 1], got {}",
                self.alpha_max
            )));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidConfig("restarts must be at least 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            return Err(Error::InvalidConfig(
                "tolerance must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Optimal subset found by a scan, with its score and diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub score: f64,
    pub alpha_star: f64,
    pub n: usize,
    pub n_alpha: usize,
    #[serde(flatten)]
    pub subset: Subset,
    pub restarts_run: usize,
    pub converged: bool,
}

/// Score of one subset at its maximizing threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsetScore {
    pub score: f64,
    pub alpha_star: f64,
    pub n: usize,
    pub n_alpha: usize,
}

/// Outcome of a conditional step: the chosen index set on the free axis.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub indices: Vec<usize>,
    pub score: f64,
    pub alpha_star: f64,
    pub n_alpha: usize,
}

fn kl(x: f64, y: f64) -> f64 {
    let head = if x > 0.0 { x * (x / y).ln() } else { 0.0 };
    let tail = if x < 1.0 {
        (1.0 - x) * ((1.0 - x) / (1.0 - y)).ln()
    } else {
        0.0
    };
    head + tail
}

/// Berk-Jones statistic `n * KL(n_alpha / n, alpha)`, natural log, clamped to
/// zero unless `n_alpha / n > alpha`.
pub fn bj_score(n_alpha: usize, n: usize, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    if n == 0 || n_alpha > n {
        return Err(Error::InvalidConfig(format!(
            "need 0 <= n_alpha <= n and n >= 1, got n_alpha={n_alpha}, n={n}"
        )));
    }
    let x = n_alpha as f64 / n as f64;
    if x <= alpha {
        return Ok(0.0);
    }
    Ok(n as f64 * kl(x, alpha))
}

/// Sorted distinct p-values present in the matrix that are `<= alpha_max`,
/// or the single smallest p-value if none qualify.
pub fn alpha_grid(pvalues: &PValueMatrix, alpha_max: f64) -> Vec<f64> {
    let grid = Grid::new(pvalues, alpha_max);
    let denom = grid.denom as f64;
    if grid.admissible() {
        grid.ks.iter().map(|&k| k as f64 / denom).collect()
    } else {
        vec![grid.smallest as f64 / denom]
    }
}

const NO_LEVEL: u32 = u32::MAX;

/// Threshold levels of a matrix as grid numerators, with a lookup from
/// numerator to level.
struct Grid {
    ks: Vec<u32>,
    level_of: Vec<u32>,
    denom: u32,
    smallest: u32,
    alpha_max: f64,
}

impl Grid {
    fn new(pvalues: &PValueMatrix, alpha_max: f64) -> Self {
        let denom = pvalues.denominator();
        let mut present = vec![false; denom as usize + 1];
        for &k in pvalues.ranks() {
            present[k as usize] = true;
        }
        let smallest = present.iter().position(|&p| p).unwrap_or(denom as usize) as u32;
        let mut ks = Vec::new();
        let mut level_of = vec![NO_LEVEL; denom as usize + 1];
        for (k, &p) in present.iter().enumerate() {
            if p && k as f64 / denom as f64 <= alpha_max && (k as u32) < denom {
                level_of[k] = ks.len() as u32;
                ks.push(k as u32);
            }
        }
        Self {
            ks,
            level_of,
            denom,
            smallest,
            alpha_max,
        }
    }

    /// False when no observed p-value is usable as a threshold; every score
    /// is then zero.
    fn admissible(&self) -> bool {
        !self.ks.is_empty()
    }

    fn alpha(&self, level: usize) -> f64 {
        self.ks[level] as f64 / self.denom as f64
    }

    /// Alpha reported for zero-score results.
    fn default_alpha(&self) -> f64 {
        if self.admissible() {
            self.alpha(0)
        } else {
            self.alpha_max
        }
    }

    fn score(&self, n_alpha: usize, n: usize, level: usize) -> f64 {
        let k = self.ks[level] as u64;
        if (n_alpha as u64) * self.denom as u64 <= (n as u64) * k {
            return 0.0;
        }
        n as f64 * kl(n_alpha as f64 / n as f64, k as f64 / self.denom as f64)
    }
}

/// Evaluates `F(S)` for one subset: the maximum Berk-Jones score over the
/// matrix's alpha grid, with the smallest maximizing alpha.
pub fn score_subset(
    pvalues: &PValueMatrix,
    subset: &Subset,
    alpha_max: f64,
) -> Result<SubsetScore> {
    subset.check_bounds(pvalues.rows(), pvalues.cols())?;
    let grid = Grid::new(pvalues, alpha_max);
    let n = subset.cells();
    let mut best = SubsetScore {
        score: 0.0,
        alpha_star: grid.default_alpha(),
        n,
        n_alpha: 0,
    };
    if !grid.admissible() {
        return Ok(best);
    }
    let mut per_level = vec![0usize; grid.ks.len()];
    for &i in subset.samples() {
        for &j in subset.nodes() {
            let level = grid.level_of[pvalues.rank(i, j) as usize];
            if level != NO_LEVEL {
                per_level[level as usize] += 1;
            }
        }
    }
    let mut n_alpha = 0;
    for (level, &c) in per_level.iter().enumerate() {
        n_alpha += c;
        if level == 0 {
            best.n_alpha = n_alpha;
        }
        let score = grid.score(n_alpha, n, level);
        if score > best.score {
            best = SubsetScore {
                score,
                alpha_star: grid.alpha(level),
                n,
                n_alpha,
            };
        }
    }
    Ok(best)
}

/// Linear-time step: picks the best subset of `lines` (rows or columns) given
/// a fixed set on the other axis. `value(line, t)` yields the grid numerator
/// of `line` against the `t`-th fixed index.
fn ltss(
    grid: &Grid,
    lines: usize,
    fixed: usize,
    value: impl Fn(usize, usize) -> u32,
) -> StepResult {
    let levels = grid.ks.len();
    if levels == 0 {
        return StepResult {
            indices: vec![0],
            score: 0.0,
            alpha_star: grid.default_alpha(),
            n_alpha: 0,
        };
    }

    // counts[line * levels + g] = #{t : p(line, t) <= alpha_g}
    let mut counts = vec![0u32; lines * levels];
    for line in 0..lines {
        let row = &mut counts[line * levels..(line + 1) * levels];
        for t in 0..fixed {
            let level = grid.level_of[value(line, t) as usize];
            if level != NO_LEVEL {
                row[level as usize] += 1;
            }
        }
        for g in 1..levels {
            row[g] += row[g - 1];
        }
    }

    let mut best: Option<(f64, usize, Vec<usize>, usize)> = None;
    let mut order = vec![0usize; lines];
    let mut bucket = vec![0usize; fixed + 2];
    for g in 0..levels {
        // Counting sort: count descending, index ascending within a count.
        bucket.iter_mut().for_each(|b| *b = 0);
        for line in 0..lines {
            let c = counts[line * levels + g] as usize;
            bucket[fixed - c + 1] += 1;
        }
        for b in 1..bucket.len() {
            bucket[b] += bucket[b - 1];
        }
        for line in 0..lines {
            let c = counts[line * levels + g] as usize;
            let slot = &mut bucket[fixed - c];
            order[*slot] = line;
            *slot += 1;
        }

        let mut n_alpha = 0usize;
        for len in 1..=lines {
            n_alpha += counts[order[len - 1] * levels + g] as usize;
            let score = grid.score(n_alpha, len * fixed, g);
            let replace = match &best {
                None => true,
                Some((s, level, set, _)) => {
                    score > *s
                        || (score == *s && *level == g && {
                            let mut cand = order[..len].to_vec();
                            cand.sort_unstable();
                            cand < *set
                        })
                }
            };
            if replace {
                let mut set = order[..len].to_vec();
                set.sort_unstable();
                best = Some((score, g, set, n_alpha));
            }
        }
    }

    let (score, level, indices, n_alpha) = best.expect("at least one line");
    StepResult {
        indices,
        score,
        alpha_star: grid.alpha(level),
        n_alpha,
    }
}

fn samples_step(grid: &Grid, pvalues: &PValueMatrix, nodes: &[usize]) -> StepResult {
    ltss(grid, pvalues.rows(), nodes.len(), |i, t| {
        pvalues.rank(i, nodes[t])
    })
}

fn nodes_step(grid: &Grid, pvalues: &PValueMatrix, samples: &[usize]) -> StepResult {
    ltss(grid, pvalues.cols(), samples.len(), |j, t| {
        pvalues.rank(samples[t], j)
    })
}

fn check_fixed(set: &[usize], bound: usize, what: &str) -> Result<()> {
    check_set(set, bound, what)?;
    let mut sorted = set.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidSubset(format!("duplicate {what} index")));
    }
    Ok(())
}

/// Most anomalous sample set for a fixed node set. Exact over all
/// `2^M - 1` sample subsets.
pub fn optimize_samples(
    pvalues: &PValueMatrix,
    fixed_nodes: &[usize],
    alpha_max: f64,
) -> Result<StepResult> {
    check_fixed(fixed_nodes, pvalues.cols(), "node")?;
    let grid = Grid::new(pvalues, alpha_max);
    Ok(samples_step(&grid, pvalues, fixed_nodes))
}

/// Most anomalous node set for a fixed sample set. Exact over all
/// `2^J - 1` node subsets.
pub fn optimize_nodes(
    pvalues: &PValueMatrix,
    fixed_samples: &[usize],
    alpha_max: f64,
) -> Result<StepResult> {
    check_fixed(fixed_samples, pvalues.rows(), "sample")?;
    let grid = Grid::new(pvalues, alpha_max);
    Ok(nodes_step(&grid, pvalues, fixed_samples))
}

/// One alternating ascent and the score after every conditional step.
#[derive(Debug, Clone)]
pub struct Ascent {
    pub result: ScanResult,
    pub history: Vec<f64>,
}

fn ascend_on(
    grid: &Grid,
    pvalues: &PValueMatrix,
    mut nodes: Vec<usize>,
    config: &ScanConfig,
) -> Ascent {
    let mut history = Vec::with_capacity(2 * config.max_iterations);
    let mut previous: Option<f64> = None;
    let mut converged = false;
    let mut state = None;
    for _ in 0..config.max_iterations {
        let by_samples = samples_step(grid, pvalues, &nodes);
        history.push(by_samples.score);
        let by_nodes = nodes_step(grid, pvalues, &by_samples.indices);
        history.push(by_nodes.score);
        nodes = by_nodes.indices.clone();
        let score = by_nodes.score;
        state = Some((by_samples.indices, by_nodes));
        if previous.is_some_and(|p| score - p <= config.tolerance) {
            converged = true;
            break;
        }
        previous = Some(score);
    }
    let (samples, step) = state.expect("max_iterations >= 1");
    let subset = Subset {
        sample_indices: samples,
        node_indices: step.indices,
    };
    Ascent {
        result: ScanResult {
            score: step.score,
            alpha_star: step.alpha_star,
            n: subset.cells(),
            n_alpha: step.n_alpha,
            subset,
            restarts_run: 1,
            converged,
        },
        history,
    }
}

/// Runs one alternating ascent from `initial_nodes`.
pub fn ascend(
    pvalues: &PValueMatrix,
    initial_nodes: &[usize],
    config: &ScanConfig,
) -> Result<Ascent> {
    config.validate()?;
    check_fixed(initial_nodes, pvalues.cols(), "node")?;
    let grid = Grid::new(pvalues, config.alpha_max);
    let mut nodes = initial_nodes.to_vec();
    nodes.sort_unstable();
    Ok(ascend_on(&grid, pvalues, nodes, config))
}

/// Random starting node set for restart `restart`: each node kept with
/// probability 1/2, redrawn while empty.
pub fn initial_nodes(cols: usize, seed: u64, restart: u64) -> Vec<usize> {
    let mut rng = rng::stream(seed, restart);
    loop {
        let nodes: Vec<usize> = (0..cols).filter(|_| rng.random_bool(0.5)).collect();
        if !nodes.is_empty() {
            return nodes;
        }
    }
}

/// Total order used for every argmax: higher score, then smaller alpha,
/// then the lexicographically smaller subset.
pub fn compare_results(a: &ScanResult, b: &ScanResult) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.alpha_star.total_cmp(&b.alpha_star))
        .then_with(|| a.subset.cmp(&b.subset))
}

/// Group scan: best local maximum of the alternating ascent across seeded
/// restarts.
pub fn scan_group(pvalues: &PValueMatrix, config: &ScanConfig) -> Result<ScanResult> {
    config.validate()?;
    let grid = Grid::new(pvalues, config.alpha_max);
    let runs: Vec<ScanResult> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let nodes = initial_nodes(pvalues.cols(), config.seed, r as u64);
            ascend_on(&grid, pvalues, nodes, config).result
        })
        .collect();
    let mut best = runs
        .into_iter()
        .min_by(compare_results)
        .expect("restarts >= 1");
    best.restarts_run = config.restarts;
    Ok(best)
}

/// Individual scan: for each sample, the exact best node set with that
/// sample alone.
pub fn scan_individual(pvalues: &PValueMatrix, config: &ScanConfig) -> Result<Vec<ScanResult>> {
    config.validate()?;
    let grid = Grid::new(pvalues, config.alpha_max);
    Ok((0..pvalues.rows())
        .map(|i| {
            let step = nodes_step(&grid, pvalues, &[i]);
            let subset = Subset {
                sample_indices: vec![i],
                node_indices: step.indices,
            };
            ScanResult {
                score: step.score,
                alpha_star: step.alpha_star,
                n: subset.cells(),
                n_alpha: step.n_alpha,
                subset,
                restarts_run: 1,
                converged: true,
            }
        })
        .collect())
}

fn mask_indices(mut mask: u32) -> Vec<usize> {
    let mut out = Vec::with_capacity(mask.count_ones() as usize);
    while mask != 0 {
        out.push(mask.trailing_zeros() as usize);
        mask &= mask - 1;
    }
    out
}

/// Lexicographic comparison of the sorted index lists encoded by two masks.
fn cmp_masks(mut a: u32, mut b: u32) -> Ordering {
    loop {
        match (a, b) {
            (0, 0) => return Ordering::Equal,
            (0, _) => return Ordering::Less,
            (_, 0) => return Ordering::Greater,
            _ => {}
        }
        let (la, lb) = (a.trailing_zeros(), b.trailing_zeros());
        if la != lb {
            return la.cmp(&lb);
        }
        a &= a - 1;
        b &= b - 1;
    }
}

/// Brute-force maximum of `F` over every non-empty `X_S x O_S`. Limited to
/// matrices of at most [`EXHAUSTIVE_LIMIT`] rows and columns.
pub fn scan_exhaustive(pvalues: &PValueMatrix, alpha_max: f64) -> Result<ScanResult> {
    let (rows, cols) = (pvalues.rows(), pvalues.cols());
    if rows > EXHAUSTIVE_LIMIT || cols > EXHAUSTIVE_LIMIT {
        return Err(Error::DimensionGuard {
            rows,
            cols,
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    let grid = Grid::new(pvalues, alpha_max);
    let levels = grid.ks.len();

    // (score, level, sample mask, node mask, n_alpha)
    let mut best = (0.0f64, 0usize, 1u32, 1u32, 0usize);
    if levels > 0 {
        best.4 = usize::from(pvalues.rank(0, 0) <= grid.ks[0]);
    }
    let node_masks = 1usize << cols;
    let mut col_counts = vec![0usize; cols];
    let mut sums = vec![0usize; node_masks];
    for sample_mask in 1u32..(1 << rows) {
        let samples = mask_indices(sample_mask);
        for level in 0..levels {
            let k = grid.ks[level];
            for (j, c) in col_counts.iter_mut().enumerate() {
                *c = samples.iter().filter(|&&i| pvalues.rank(i, j) <= k).count();
            }
            for node_mask in 1..node_masks {
                let low = node_mask.trailing_zeros() as usize;
                sums[node_mask] = sums[node_mask & (node_mask - 1)] + col_counts[low];
                let n = samples.len() * node_mask.count_ones() as usize;
                let score = grid.score(sums[node_mask], n, level);
                let better = score > best.0
                    || (score == best.0
                        && (level < best.1
                            || (level == best.1
                                && cmp_masks(sample_mask, best.2)
                                    .then(cmp_masks(node_mask as u32, best.3))
                                    == Ordering::Less)));
                if better {
                    best = (score, level, sample_mask, node_mask as u32, sums[node_mask]);
                }
            }
        }
    }

    let subset = Subset {
        sample_indices: mask_indices(best.2),
        node_indices: mask_indices(best.3),
    };
    Ok(ScanResult {
        score: best.0,
        alpha_star: if levels > 0 {
            grid.alpha(best.1)
        } else {
            grid.default_alpha()
        },
        n: subset.cells(),
        n_alpha: if levels > 0 { best.4 } else { 0 },
        subset,
        restarts_run: 0,
        converged: true,
    })
}
