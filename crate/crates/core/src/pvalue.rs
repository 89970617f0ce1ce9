//! Empirical p-values of test activations against a background sample.

use crate::error::{Error, Result};
use crate::matrix::{ActivationMatrix, PValueMatrix};

/// Right-tail empirical p-value of every test cell:
/// `p_ij = (1 + #{z : background_zj >= test_ij}) / (Z + 1)`.
///
/// Ties with background values count toward the numerator, so a test value
/// at or below the background minimum gets `p = 1` and one above the maximum
/// gets `p = 1/(Z+1)`.
pub fn compute_pvalues(
    background: &ActivationMatrix,
    test: &ActivationMatrix,
) -> Result<PValueMatrix> {
    check_nodes(background, test)?;
    let z = background.rows();
    let z_u32 = u32::try_from(z)
        .map_err(|_| Error::Shape(format!("background of {z} rows is too large")))?;
    let cols = test.cols();
    let mut ranks = vec![0u32; test.rows() * cols];
    let mut column = Vec::with_capacity(z);
    for j in 0..cols {
        column.clear();
        column.extend((0..z).map(|r| background.get(r, j)));
        column.sort_by(f64::total_cmp);
        for i in 0..test.rows() {
            let a = test.get(i, j);
            let below = column.partition_point(|&b| b < a);
            ranks[i * cols + j] = 1 + (z - below) as u32;
        }
    }
    PValueMatrix::from_ranks(
        test.rows(),
        cols,
        z_u32,
        ranks,
        test.node_ids().to_vec(),
        test.sample_ids().map(<[String]>::to_vec),
    )
}

fn check_nodes(background: &ActivationMatrix, test: &ActivationMatrix) -> Result<()> {
    let (b, t) = (background.node_ids(), test.node_ids());
    if let Some(index) = b.iter().zip(t).position(|(x, y)| x != y) {
        return Err(Error::NodeMismatch {
            index,
            background: b[index].clone(),
            test: t[index].clone(),
        });
    }
    if b.len() != t.len() {
        return Err(Error::NodeCountMismatch {
            background: b.len(),
            test: t.len(),
        });
    }
    Ok(())
}

/// Kolmogorov-Smirnov distance between the pooled p-values and the uniform
/// law on the grid `{1/(z+1), ..., 1}`, which is the exact null distribution
/// of the p-values for continuous activations.
///
/// Both CDFs are step functions jumping only at grid points, so the supremum
/// is attained on the grid.
pub fn uniformity_diagnostic(pvalues: &PValueMatrix) -> f64 {
    let denom = pvalues.denominator() as usize;
    let mut counts = vec![0usize; denom + 1];
    for &k in pvalues.ranks() {
        counts[k as usize] += 1;
    }
    let n = pvalues.ranks().len() as f64;
    let mut cumulative = 0usize;
    let mut distance = 0.0f64;
    for (k, &c) in counts.iter().enumerate().skip(1) {
        cumulative += c;
        let empirical = cumulative as f64 / n;
        let expected = k as f64 / denom as f64;
        distance = distance.max((empirical - expected).abs());
    }
    distance
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::default_node_ids;
    use proptest::prelude::*;

    fn column(values: &[f64]) -> ActivationMatrix {
        let rows: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
        ActivationMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn counts_background_at_or_above() {
        let bg = column(&[1.0, 2.0, 3.0]);
        let p = compute_pvalues(&bg, &column(&[2.5, 5.0, 0.5, 2.0])).unwrap();
        assert_eq!(p.z(), 3);
        assert_eq!(p.get(0, 0), 0.5);
        assert_eq!(p.get(1, 0), 0.25);
        assert_eq!(p.get(2, 0), 1.0);
        // tie with 2.0 counts: {2,3} plus the shift
        assert_eq!(p.get(3, 0), 0.75);
    }

    #[test]
    fn tie_with_minimum_gives_one() {
        let bg = column(&[1.0, 2.0, 3.0]);
        let p = compute_pvalues(&bg, &column(&[1.0])).unwrap();
        assert_eq!(p.get(0, 0), 1.0);
    }

    #[test]
    fn node_mismatch_names_column() {
        let bg = ActivationMatrix::from_row_major(
            1,
            2,
            vec![0.0, 0.0],
            vec!["a".into(), "b".into()],
            None,
        )
        .unwrap();
        let test = ActivationMatrix::from_row_major(
            1,
            2,
            vec![0.0, 0.0],
            vec!["a".into(), "c".into()],
            None,
        )
        .unwrap();
        match compute_pvalues(&bg, &test).unwrap_err() {
            Error::NodeMismatch { index, test, .. } => {
                assert_eq!(index, 1);
                assert_eq!(test, "c");
            }
            e => panic!("unexpected {e}"),
        }
        let narrow = ActivationMatrix::from_rows(&[vec![0.0]]).unwrap();
        let wide = ActivationMatrix::from_rows(&[vec![0.0, 1.0]]).unwrap();
        assert!(matches!(
            compute_pvalues(&narrow, &wide),
            Err(Error::NodeCountMismatch { .. })
        ));
    }

    #[test]
    fn diagnostic_all_ones() {
        let z = 250;
        let m =
            PValueMatrix::from_ranks(4, 1, z, vec![z + 1; 4], default_node_ids(1), None).unwrap();
        let d = uniformity_diagnostic(&m);
        assert!((d - (1.0 - 1.0 / 251.0)).abs() < 1e-12);
    }

    #[test]
    fn diagnostic_full_grid() {
        let z = 9;
        let ranks: Vec<u32> = (1..=z + 1).collect();
        let m = PValueMatrix::from_ranks(10, 1, z, ranks, default_node_ids(1), None).unwrap();
        assert!(uniformity_diagnostic(&m) <= 1.0 / 10.0);
    }

    proptest! {
        #[test]
        fn output_on_grid_and_monotone(
            bg in proptest::collection::vec(-5i32..5, 1..20),
            test in proptest::collection::vec(-6i32..6, 1..20),
        ) {
            let bgm = column(&bg.iter().map(|&v| v as f64).collect::<Vec<_>>());
            let tm = column(&test.iter().map(|&v| v as f64).collect::<Vec<_>>());
            let p = compute_pvalues(&bgm, &tm).unwrap();
            let z = bg.len() as u32;
            for i in 0..test.len() {
                let k = p.rank(i, 0);
                prop_assert!((1..=z + 1).contains(&k));
                // direct count
                let count = bg.iter().filter(|&&b| b >= test[i]).count() as u32;
                prop_assert_eq!(k, 1 + count);
                for i2 in 0..test.len() {
                    if test[i2] > test[i] {
                        prop_assert!(p.rank(i2, 0) <= k);
                    }
                }
            }
        }
    }
}
