use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use subscan::eval::{detection_power, EvalConfig};
use subscan::matrix::{default_node_ids, ActivationMatrix, PValueMatrix};
use subscan::pvalue::compute_pvalues;
use subscan::scan::{ascend, scan_exhaustive, scan_group, ScanConfig};
use subscan::synth::{jaccard, synth_generate, SynthSpec};

fn grid_matrix(seed: u64, rows: usize, cols: usize, z: u32) -> PValueMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ranks = (0..rows * cols)
        .map(|_| rng.random_range(1..=z + 1))
        .collect();
    PValueMatrix::from_ranks(rows, cols, z, ranks, default_node_ids(cols), None).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ascent_never_decreases(seed in any::<u64>(), rows in 1usize..12, cols in 1usize..12, start in any::<u64>()) {
        let m = grid_matrix(seed, rows, cols, 30);
        let mut rng = ChaCha8Rng::seed_from_u64(start);
        let mut nodes: Vec<usize> = (0..cols).filter(|_| rng.random_bool(0.5)).collect();
        if nodes.is_empty() {
            nodes.push(0);
        }
        let run = ascend(&m, &nodes, &ScanConfig::default()).unwrap();
        prop_assert!(run.history.windows(2).all(|w| w[1] >= w[0]));
        prop_assert_eq!(*run.history.last().unwrap(), run.result.score);
    }

    #[test]
    fn group_scan_never_beats_oracle(seed in any::<u64>(), rows in 1usize..7, cols in 1usize..7) {
        let m = grid_matrix(seed, rows, cols, 20);
        let g = scan_group(&m, &ScanConfig { restarts: 3, seed, ..ScanConfig::default() }).unwrap();
        let e = scan_exhaustive(&m, 0.5).unwrap();
        prop_assert!(g.score <= e.score);
        prop_assert_eq!(g.n, g.subset.cells());
        prop_assert!(g.n_alpha <= g.n);
        prop_assert!(g.alpha_star <= 0.5);
    }

    #[test]
    fn scores_depend_only_on_ranks(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bg: Vec<Vec<f64>> = (0..30).map(|_| (0..5).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let test: Vec<Vec<f64>> = (0..8).map(|_| (0..5).map(|_| rng.random_range(-2.5..2.5)).collect()).collect();
        let warp = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
            rows.iter().map(|r| r.iter().map(|&x| x.powi(3) + 2.0 * x.exp()).collect()).collect()
        };
        let m = |rows: &[Vec<f64>]| ActivationMatrix::from_rows(rows).unwrap();
        let p1 = compute_pvalues(&m(&bg), &m(&test)).unwrap();
        let p2 = compute_pvalues(&m(&warp(&bg)), &m(&warp(&test))).unwrap();
        prop_assert_eq!(&p1, &p2);
        let cfg = ScanConfig::default();
        prop_assert_eq!(scan_group(&p1, &cfg).unwrap(), scan_group(&p2, &cfg).unwrap());
    }
}

#[test]
fn group_scan_is_deterministic() {
    let m = grid_matrix(3, 20, 15, 99);
    let cfg = ScanConfig {
        seed: 12,
        ..ScanConfig::default()
    };
    assert_eq!(scan_group(&m, &cfg).unwrap(), scan_group(&m, &cfg).unwrap());
}

#[test]
fn planted_nodes_recovered() {
    let mut hits = 0;
    for seed in 0..50 {
        let spec = SynthSpec {
            z: 250,
            m: 50,
            j: 64,
            anomalous_sample_fraction: 0.3,
            anomalous_node_fraction: 0.3,
            shift: 3.0,
            seed,
            rectified: false,
        };
        let d = synth_generate(&spec).unwrap();
        let p = compute_pvalues(&d.background, &d.test).unwrap();
        let r = scan_group(
            &p,
            &ScanConfig {
                seed,
                ..ScanConfig::default()
            },
        )
        .unwrap();
        if jaccard(r.subset.nodes(), d.truth.unwrap().nodes()) >= 0.8 {
            hits += 1;
        }
    }
    assert!(hits >= 45, "node Jaccard >= 0.8 in {hits}/50 runs");
}

fn small_eval(shift: f64, seed: u64, proportions: Vec<f64>) -> subscan::eval::EvalReport {
    let d = synth_generate(&SynthSpec {
        z: 250,
        m: 200,
        j: 32,
        shift,
        seed,
        ..SynthSpec::default()
    })
    .unwrap();
    let config = EvalConfig {
        proportions,
        trials_per_proportion: 30,
        seed,
        scan: ScanConfig {
            restarts: 4,
            ..ScanConfig::default()
        },
        ..EvalConfig::default()
    };
    detection_power(&d.pool, &d.background, &config).unwrap()
}

#[test]
fn report_mirrors_table_shape() {
    let r = small_eval(2.0, 1, vec![0.5, 0.1]);
    let row = r.auc_row();
    let columns: Vec<&str> = row.iter().map(|(c, _)| c.as_str()).collect();
    assert_eq!(columns, ["50%", "10%", "Indv."]);
    assert!(row.iter().all(|(_, a)| (0.0..=1.0).contains(a)));
    assert!(r.groups[0].auc >= 0.95);
    assert_eq!(r.groups[0].positive_scores.len(), 30);
    assert_eq!(r.groups[0].null_scores.len(), 30);
}

#[test]
fn null_pool_gives_chance_auc() {
    let mean: f64 = (0..3)
        .map(|seed| small_eval(0.0, seed, vec![0.5]).groups[0].auc)
        .sum::<f64>()
        / 3.0;
    assert!((mean - 0.5).abs() <= 0.1, "mean null AUC {mean}");
}

#[test]
fn detection_power_is_deterministic() {
    assert_eq!(small_eval(1.0, 4, vec![0.2]), small_eval(1.0, 4, vec![0.2]));
}

#[test]
fn rectified_activations_scan_cleanly() {
    let d = synth_generate(&SynthSpec {
        m: 40,
        j: 16,
        shift: 3.0,
        rectified: true,
        ..SynthSpec::default()
    })
    .unwrap();
    let p = compute_pvalues(&d.background, &d.test).unwrap();
    // values at or below zero tie with the background minimum
    assert!(p.ranks().iter().any(|&k| k == p.denominator()));
    let r = scan_group(&p, &ScanConfig::default()).unwrap();
    let truth = d.truth.unwrap();
    assert!(jaccard(r.subset.nodes(), truth.nodes()) >= 0.5);
}
