//! Oversampling of rare-target regions by seed/neighbor interpolation,
//! carried out in raw numeric space so engineered features stay
//! formula-consistent when recomputed from the synthetic rows.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{CleanRecord, Standardizer};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub enabled: bool,
    /// Targets strictly above this empirical quantile count as rare.
    pub rare_quantile: f64,
    /// Neighbor pool size per seed (clamped to the rare-set size − 1).
    pub k_neighbors: usize,
    /// Synthetic count = round(factor · |rare set|).
    pub oversample_factor: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            enabled: true,
            rare_quantile: 0.9,
            k_neighbors: 5,
            oversample_factor: 1.0,
            seed: 0,
        }
    }
}

/// Where a training row came from, for downstream leakage audits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    /// Index into the caller's original row list.
    Real(usize),
    /// Interpolated between two original rows (indices into the caller's list).
    Synthetic { seed: usize, neighbor: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoteResult {
    pub rows: Vec<Vec<f64>>,
    /// One row per sample; as many columns as target dimensions supplied.
    pub targets: Vec<Vec<f64>>,
    pub origins: Vec<Origin>,
    /// Set when fewer than 2 rare rows exist: inputs returned unchanged.
    pub too_few_rare: bool,
}

/// Indices whose value strictly exceeds the nearest-rank `rare_quantile`
/// order statistic of `targets`.
pub fn identify_rare(targets: &[f64], rare_quantile: f64) -> Vec<usize> {
    assert!(!targets.is_empty(), "identify_rare needs at least one target");
    assert!(
        rare_quantile > 0.0 && rare_quantile < 1.0,
        "rare_quantile must lie in (0,1)"
    );
    let mut sorted: Vec<f64> = targets.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((rare_quantile * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    let threshold = sorted[rank - 1];
    targets
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > threshold)
        .map(|(i, _)| i)
        .collect()
}

/// Single-target convenience wrapper over [`smote_multi`].
pub fn smote_regression(rows: &[Vec<f64>], targets: &[f64], cfg: &AugmentConfig) -> SmoteResult {
    let cols: Vec<Vec<f64>> = targets.iter().map(|t| vec![*t]).collect();
    smote_multi(rows, &cols, cfg)
}

/// Joint oversampling: rarity is judged per target column, the union of
/// rare sets is oversampled once, and every target column is interpolated
/// with the same λ as the features. Neighbors are the k nearest rare rows
/// by Euclidean distance in z-scored feature space.
pub fn smote_multi(rows: &[Vec<f64>], targets: &[Vec<f64>], cfg: &AugmentConfig) -> SmoteResult {
    assert_eq!(rows.len(), targets.len(), "row/target length mismatch");
    let n = rows.len();
    let passthrough = |too_few: bool| SmoteResult {
        rows: rows.to_vec(),
        targets: targets.to_vec(),
        origins: (0..n).map(Origin::Real).collect(),
        too_few_rare: too_few,
    };
    if n == 0 || !cfg.enabled || cfg.oversample_factor == 0.0 {
        return passthrough(false);
    }

    let target_dim = targets[0].len();
    let mut rare: Vec<usize> = Vec::new();
    for col in 0..target_dim {
        let column: Vec<f64> = targets.iter().map(|t| t[col]).collect();
        rare.extend(identify_rare(&column, cfg.rare_quantile));
    }
    rare.sort_unstable();
    rare.dedup();
    if rare.len() < 2 {
        return passthrough(true);
    }

    let standardizer = Standardizer::fit(&rows.to_vec()).expect("rows non-empty");
    let z: Vec<Vec<f64>> = rare.iter().map(|&i| standardizer.transform_row(&rows[i])).collect();
    let k = cfg.k_neighbors.max(1).min(rare.len() - 1);
    // For each rare row, its k nearest rare peers (stable order: distance,
    // then original index).
    let neighbor_table: Vec<Vec<usize>> = (0..rare.len())
        .map(|a| {
            let mut peers: Vec<(f64, usize)> = (0..rare.len())
                .filter(|b| *b != a)
                .map(|b| (euclidean(&z[a], &z[b]), b))
                .collect();
            peers.sort_by(|x, y| x.partial_cmp(y).unwrap());
            peers.into_iter().take(k).map(|(_, b)| b).collect()
        })
        .collect();

    let n_synth = (cfg.oversample_factor * rare.len() as f64).round() as usize;
    let mut out = passthrough(false);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..n_synth {
        let a = rng.random_range(0..rare.len());
        let b = neighbor_table[a][rng.random_range(0..neighbor_table[a].len())];
        let lambda: f64 = rng.random();
        let (seed_idx, nbr_idx) = (rare[a], rare[b]);
        out.rows.push(lerp(&rows[seed_idx], &rows[nbr_idx], lambda));
        out.targets.push(lerp(&targets[seed_idx], &targets[nbr_idx], lambda));
        out.origins.push(Origin::Synthetic { seed: seed_idx, neighbor: nbr_idx });
    }
    out
}

/// Record-level augmentation: interpolates the six numeric fields and all
/// four targets, copying categorical fields from the seed record.
pub fn augment_records(records: &[CleanRecord], cfg: &AugmentConfig) -> (Vec<CleanRecord>, Vec<Origin>, bool) {
    let rows: Vec<Vec<f64>> = records.iter().map(|r| r.numeric_features().to_vec()).collect();
    let targets: Vec<Vec<f64>> = records.iter().map(|r| r.targets().y.to_vec()).collect();
    let result = smote_multi(&rows, &targets, cfg);

    let mut out = records.to_vec();
    for (i, origin) in result.origins.iter().enumerate().skip(records.len()) {
        let Origin::Synthetic { seed, .. } = origin else {
            unreachable!("appended rows are synthetic")
        };
        let mut rec = records[*seed].clone();
        rec.set_numeric_features(result.rows[i].clone().try_into().expect("six numeric fields"));
        rec.set_targets(result.targets[i].clone().try_into().expect("four targets"));
        out.push(rec);
    }
    (out, result.origins, result.too_few_rare)
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn lerp(a: &[f64], b: &[f64], lambda: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + lambda * (y - x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rare_set_of_one_to_ten() {
        let targets: Vec<f64> = (1..=10).map(|v| v as f64).collect();
        assert_eq!(identify_rare(&targets, 0.9), vec![9]);
    }

    #[test]
    fn all_equal_targets_have_no_rare_rows() {
        assert!(identify_rare(&[4.0; 12], 0.9).is_empty());
    }

    #[test]
    fn rare_count_for_distinct_280() {
        let targets: Vec<f64> = (0..280).map(|v| v as f64).collect();
        assert_eq!(identify_rare(&targets, 0.9).len(), 28);
    }

    #[test]
    fn lerp_endpoints_and_midpoint() {
        let seed = vec![1.0, 2.0];
        let nbr = vec![3.0, 6.0];
        assert_eq!(lerp(&seed, &nbr, 0.0), seed);
        assert_eq!(lerp(&[10.0], &[20.0], 0.5), vec![15.0]);
    }

    fn toy_rows(n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![i as f64, (i * i) as f64 * 0.1, 5.0 - i as f64 * 0.2])
            .collect();
        let targets: Vec<f64> = (0..n).map(|i| i as f64).collect();
        (rows, targets)
    }

    #[test]
    fn synthetic_count_matches_factor() {
        let (rows, targets) = toy_rows(30);
        let cfg = AugmentConfig { oversample_factor: 2.0, ..AugmentConfig::default() };
        let res = smote_regression(&rows, &targets, &cfg);
        let rare = identify_rare(&targets, cfg.rare_quantile).len();
        assert_eq!(res.rows.len(), 30 + 2 * rare);
        assert!(!res.too_few_rare);
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let (rows, targets) = toy_rows(25);
        let cfg = AugmentConfig::default();
        let a = smote_regression(&rows, &targets, &cfg);
        let b = smote_regression(&rows, &targets, &cfg);
        assert_eq!(a, b);
        let c = smote_regression(&rows, &targets, &AugmentConfig { seed: 1, ..cfg });
        assert_ne!(a.rows, c.rows);
    }

    #[test]
    fn factor_zero_is_identity() {
        let (rows, targets) = toy_rows(20);
        let cfg = AugmentConfig { oversample_factor: 0.0, ..AugmentConfig::default() };
        let res = smote_regression(&rows, &targets, &cfg);
        assert_eq!(res.rows, rows);
        assert!(!res.too_few_rare);
    }

    #[test]
    fn under_two_rare_rows_passes_through_with_flag() {
        let rows = vec![vec![0.0], vec![1.0], vec![2.0]];
        let res = smote_regression(&rows, &[7.0, 7.0, 7.0], &AugmentConfig::default());
        assert_eq!(res.rows, rows);
        assert!(res.too_few_rare);
    }

    #[test]
    fn synthetics_lie_between_their_parents() {
        let (rows, targets) = toy_rows(40);
        let cfg = AugmentConfig { oversample_factor: 250.0, ..AugmentConfig::default() };
        let res = smote_regression(&rows, &targets, &cfg);
        let synth = res.origins.iter().enumerate().skip(40);
        let mut count = 0;
        for (i, origin) in synth {
            let Origin::Synthetic { seed, neighbor } = origin else { panic!() };
            for c in 0..rows[0].len() {
                let (lo, hi) = minmax(rows[*seed][c], rows[*neighbor][c]);
                assert!(res.rows[i][c] >= lo && res.rows[i][c] <= hi);
            }
            let (lo, hi) = minmax(targets[*seed], targets[*neighbor]);
            assert!(res.targets[i][0] >= lo && res.targets[i][0] <= hi);
            count += 1;
        }
        assert!(count >= 1000, "wanted ≥1000 synthetics, got {count}");
    }

    fn minmax(a: f64, b: f64) -> (f64, f64) {
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    }

    #[test]
    fn record_level_synthetics_copy_seed_categoricals() {
        use crate::dataset::*;
        let base = CleanRecord {
            type_np: NpType::Organic,
            mat: Material::Liposomes,
            shape: NpShape::Spherical,
            hd: 100.0,
            zp: -12.0,
            charge: Charge::Negative,
            ts: Targeting::Passive,
            tm: TumorModel::XenograftHeterotopic,
            ct: CancerType::Breast,
            tw: 0.5,
            tsiz: 0.8,
            dose: 10.0,
            bw: 22.0,
            ar: AdminRoute::Iv,
            ktres_release: 0.05,
            ktres_max: 2.0,
            ktres_n: 1.5,
            ktres_50: 24.0,
        };
        let records: Vec<CleanRecord> = (0..30)
            .map(|i| {
                let mut r = base.clone();
                r.hd = 40.0 + i as f64 * 7.0;
                r.ktres_max = i as f64;
                if i % 2 == 0 {
                    r.mat = Material::Gold;
                    r.charge = Charge::Positive;
                }
                r
            })
            .collect();
        let (augmented, origins, flag) = augment_records(&records, &AugmentConfig::default());
        assert!(!flag);
        assert!(augmented.len() > records.len());
        for (i, origin) in origins.iter().enumerate().skip(records.len()) {
            let Origin::Synthetic { seed, neighbor } = origin else { panic!() };
            assert_eq!(augmented[i].mat, records[*seed].mat);
            assert_eq!(augmented[i].charge, records[*seed].charge);
            let (lo, hi) = minmax(records[*seed].hd, records[*neighbor].hd);
            assert!(augmented[i].hd >= lo && augmented[i].hd <= hi);
        }
    }

    proptest! {
        #[test]
        fn rare_rows_always_exceed_some_peer(values in prop::collection::vec(-50.0f64..50.0, 5..60)) {
            let rare = identify_rare(&values, 0.9);
            let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for i in rare {
                // A rare row is never the minimum and the maximum is rare
                // whenever anything is.
                prop_assert!(values[i] > values.iter().cloned().fold(f64::INFINITY, f64::min));
                prop_assert!(values[i] <= max);
            }
        }
    }
}
