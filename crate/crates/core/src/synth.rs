//! Synthetic dataset generation with a documented planted signal, so the
//! whole pipeline can be exercised end-to-end without the published file.
//!
//! Every target is an exact linear function of the basis expansion in
//! [`design_row`] (main effects, three interactions, three indicator
//! effects), plus optional Gaussian noise scaled to a fraction of each
//! signal column's standard deviation. With zero noise, ridge regression on
//! the design matrix recovers [`COEFFICIENTS`] in closed form.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::{
    AdminRoute, CancerType, Charge, CleanRecord, Material, NpShape, NpType, Targeting, TumorModel,
};

/// Width of the planted-signal basis.
pub const BASIS_DIM: usize = 13;

/// Labels for the basis columns, in [`design_row`] order.
pub const BASIS_LABELS: [&str; BASIS_DIM] = [
    "intercept",
    "ln_hd",
    "zp_over_10",
    "ln_tw",
    "ln_tsiz",
    "ln_dose",
    "bw_over_20",
    "ln_hd_x_zp",
    "ln_tw_x_ln_tsiz",
    "zp_x_ln_dose",
    "is_positive_charge",
    "is_active_targeting",
    "is_gold",
];

/// Planted coefficient matrix: `COEFFICIENTS[j][o]` weights basis column j
/// in target o (order: KTRESmax, KTRESn, KTRES50, KTRESrelease).
pub const COEFFICIENTS: [[f64; 4]; BASIS_DIM] = [
    [1.20, 3.50, 12.0, 0.080],   // intercept
    [-0.40, 0.30, -1.50, -0.010], // ln_hd
    [0.25, -0.20, 0.80, 0.004],  // zp_over_10
    [0.30, -0.40, 1.10, 0.006],  // ln_tw
    [-0.20, 0.25, -0.90, 0.005], // ln_tsiz
    [0.45, 0.15, 1.60, 0.012],   // ln_dose
    [0.10, -0.30, 0.70, -0.008], // bw_over_20
    [0.08, -0.06, 0.30, 0.002],  // ln_hd_x_zp
    [0.05, 0.07, -0.25, -0.001], // ln_tw_x_ln_tsiz
    [-0.06, 0.05, 0.20, 0.002],  // zp_x_ln_dose
    [0.35, -0.25, 1.20, 0.010],  // is_positive_charge
    [0.50, 0.20, -1.40, 0.015],  // is_active_targeting
    [-0.30, 0.40, 0.90, -0.012], // is_gold
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    /// Noise standard deviation as a fraction of each signal column's
    /// standard deviation (0 = noiseless).
    pub noise_sd_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { n: 280, noise_sd_fraction: 0.3, seed: 0 }
    }
}

/// The documented basis expansion of the planted signal.
pub fn design_row(rec: &CleanRecord) -> [f64; BASIS_DIM] {
    let lh = rec.hd.ln();
    let z = rec.zp / 10.0;
    let lt = rec.tw.ln();
    let ls = rec.tsiz.ln();
    let ld = rec.dose.ln();
    let b = rec.bw / 20.0;
    [
        1.0,
        lh,
        z,
        lt,
        ls,
        ld,
        b,
        lh * z,
        lt * ls,
        z * ld,
        (rec.charge == Charge::Positive) as u8 as f64,
        (rec.ts == Targeting::Active) as u8 as f64,
        (rec.mat == Material::Gold) as u8 as f64,
    ]
}

/// Noiseless target vector for one record.
pub fn signal(rec: &CleanRecord) -> [f64; 4] {
    let g = design_row(rec);
    let mut y = [0.0; 4];
    for (row, gj) in COEFFICIENTS.iter().zip(&g) {
        for (yo, c) in y.iter_mut().zip(row) {
            *yo += c * gj;
        }
    }
    y
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..hi.ln()).exp()
}

/// Maps a uniform draw on [−1, 1) to a zeta potential in ±[2, 40) mV.
/// The band around zero is excluded on purpose: the secondary feature map
/// contains the ratio hd/zp, and a lone near-zero draw would put one sample
/// thousands of standard deviations from the rest of the corpus, turning
/// every evaluation into a test of that row's luck rather than of the
/// pipeline. Measured zeta potentials that close to zero are reported as
/// neutral in practice, so the excluded band also keeps the marginals
/// physically plausible.
fn banded_zeta(t: f64) -> f64 {
    let sign = if t < 0.0 { -1.0 } else { 1.0 };
    sign * (2.0 + 38.0 * t.abs())
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, all: &[T]) -> T {
    all[rng.random_range(0..all.len())]
}

fn standard_normal(rng: &mut ChaCha8Rng, normal: &Normal) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return normal.inverse_cdf(u);
        }
    }
}

/// Generates `cfg.n` schema-complete records. Numeric features are drawn
/// from plausible marginal ranges (sizes and doses log-uniform), categorical
/// fields uniformly; targets are the planted signal plus scaled noise.
pub fn generate(cfg: &SynthConfig) -> Vec<CleanRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut recs: Vec<CleanRecord> = (0..cfg.n)
        .map(|_| CleanRecord {
            type_np: pick(&mut rng, &NpType::ALL),
            mat: pick(&mut rng, &Material::ALL),
            shape: pick(&mut rng, &NpShape::ALL),
            hd: log_uniform(&mut rng, 10.0, 400.0),
            zp: banded_zeta(rng.random_range(-1.0..1.0)),
            charge: pick(&mut rng, &Charge::ALL),
            ts: pick(&mut rng, &Targeting::ALL),
            tm: pick(&mut rng, &TumorModel::ALL),
            ct: pick(&mut rng, &CancerType::ALL),
            tw: log_uniform(&mut rng, 50.0, 2000.0),
            tsiz: log_uniform(&mut rng, 50.0, 500.0),
            dose: log_uniform(&mut rng, 1.0, 50.0),
            bw: rng.random_range(18.0..25.0),
            ar: AdminRoute::Iv,
            ktres_release: 0.0,
            ktres_max: 0.0,
            ktres_n: 0.0,
            ktres_50: 0.0,
        })
        .collect();

    let clean_signal: Vec<[f64; 4]> = recs.iter().map(signal).collect();
    let mut sds = [0.0; 4];
    if cfg.noise_sd_fraction > 0.0 && cfg.n > 1 {
        for (o, sd) in sds.iter_mut().enumerate() {
            let mean = clean_signal.iter().map(|y| y[o]).sum::<f64>() / cfg.n as f64;
            let var = clean_signal.iter().map(|y| (y[o] - mean).powi(2)).sum::<f64>()
                / cfg.n as f64;
            *sd = var.sqrt();
        }
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    for (rec, base) in recs.iter_mut().zip(&clean_signal) {
        let mut y = *base;
        if cfg.noise_sd_fraction > 0.0 {
            for (yo, sd) in y.iter_mut().zip(&sds) {
                *yo += cfg.noise_sd_fraction * sd * standard_normal(&mut rng, &normal);
            }
        }
        rec.set_targets(y);
    }
    recs
}

/// Serializes records in the ingestion schema (round-trips through the
/// loader without loss of rows).
pub fn to_csv(records: &[CleanRecord]) -> String {
    let mut out = String::from(
        "Type,MAT,Shape,HD,ZP,Charge,TS,TM,CT,TW,TSiz,Dose,BW,AR,KTRESrelease,KTRESmax,KTRESn,KTRES50\n",
    );
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.type_np.label(),
            r.mat.label(),
            r.shape.label(),
            r.hd,
            r.zp,
            r.charge.label(),
            r.ts.label(),
            r.tm.label(),
            r.ct.label(),
            r.tw,
            r.tsiz,
            r.dose,
            r.bw,
            r.ar.label(),
            r.ktres_release,
            r.ktres_max,
            r.ktres_n,
            r.ktres_50,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{clean, load_dataset};
    use crate::models::fit_ridge;
    use approx::assert_abs_diff_eq;
    use std::io::Write;

    #[test]
    fn generates_the_requested_row_count_and_round_trips_the_loader() {
        let recs = generate(&SynthConfig { n: 280, ..SynthConfig::default() });
        assert_eq!(recs.len(), 280);
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(to_csv(&recs).as_bytes()).unwrap();
        let loaded = load_dataset(f.path()).unwrap();
        let cleaned = clean(&loaded).unwrap();
        assert_eq!(cleaned.loaded_rows, 280);
        assert_eq!(cleaned.records.len(), 280);
        for (a, b) in recs.iter().zip(&cleaned.records) {
            assert_eq!(a.charge, b.charge);
            assert_abs_diff_eq!(a.hd, b.hd, epsilon = 0.0);
            assert_abs_diff_eq!(a.ktres_n, b.ktres_n, epsilon = 0.0);
        }
    }

    #[test]
    fn noiseless_targets_are_recovered_by_ridge_in_closed_form() {
        let recs = generate(&SynthConfig { n: 200, noise_sd_fraction: 0.0, seed: 3 });
        let design: Vec<Vec<f64>> = recs.iter().map(|r| design_row(r).to_vec()).collect();
        let targets: Vec<Vec<f64>> = recs.iter().map(|r| r.targets().y.to_vec()).collect();
        let coef = fit_ridge(&design, &targets, 0.0).unwrap();
        for (j, row) in COEFFICIENTS.iter().enumerate() {
            for (o, expect) in row.iter().enumerate() {
                assert_abs_diff_eq!(coef[j][o], *expect, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn fixed_seed_is_byte_identical_and_seeds_differ() {
        let cfg = SynthConfig::default();
        let a = to_csv(&generate(&cfg));
        let b = to_csv(&generate(&cfg));
        assert_eq!(a, b);
        let c = to_csv(&generate(&SynthConfig { seed: 1, ..cfg }));
        assert_ne!(a, c);
    }

    #[test]
    fn noise_scale_matches_the_requested_fraction() {
        let cfg = SynthConfig { n: 4000, noise_sd_fraction: 0.3, seed: 5 };
        let recs = generate(&cfg);
        for o in 0..4 {
            let residuals: Vec<f64> =
                recs.iter().map(|r| r.targets().y[o] - signal(r)[o]).collect();
            let clean: Vec<f64> = recs.iter().map(|r| signal(r)[o]).collect();
            let sd = |v: &[f64]| {
                let m = v.iter().sum::<f64>() / v.len() as f64;
                (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
            };
            let ratio = sd(&residuals) / sd(&clean);
            assert!(
                (ratio - 0.3).abs() < 0.03,
                "output {o}: residual/signal sd ratio {ratio}"
            );
        }
    }

    #[test]
    fn positive_features_respect_their_ranges() {
        let recs = generate(&SynthConfig { n: 500, ..SynthConfig::default() });
        for r in &recs {
            assert!(r.hd >= 10.0 && r.hd <= 400.0);
            assert!(r.zp.abs() >= 2.0 && r.zp.abs() <= 40.0);
            assert!(r.tw >= 50.0 && r.tw <= 2000.0);
            assert!(r.tsiz >= 50.0 && r.tsiz <= 500.0);
            assert!(r.dose >= 1.0 && r.dose <= 50.0);
            assert!(r.bw >= 18.0 && r.bw <= 25.0);
        }
    }
}
