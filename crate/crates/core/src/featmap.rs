//! The 16-dimensional secondary feature vector x̃: two organ-prior scores
//! followed by fourteen engineered transforms of the raw physical fields.

use thiserror::Error;

use crate::dataset::{Charge, CleanRecord, NpShape};
use crate::priors::{f_charge, f_size, OrganCriteria};

pub const SECONDARY_DIM: usize = 16;

/// Fixed column labels for the secondary vector, in storage order.
pub const SECONDARY_COLUMNS: [&str; SECONDARY_DIM] = [
    "f_size", "f_charge", "f1", "f2", "f3", "f4", "f5", "f6", "f7", "f8", "f9", "f10", "f11",
    "f12", "f13", "f14",
];

/// Denominator guard for ratios: |b| is floored at this value, sign kept
/// (b = 0 treated as positive).
pub const RATIO_EPS: f64 = 1e-6;

/// Additive guard inside logarithms.
pub const LOG_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum FeatError {
    #[error("logarithm argument {0} is not positive after the {LOG_EPS} guard")]
    LogDomain(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecondaryFeatures {
    pub xt: [f64; SECONDARY_DIM],
}

impl SecondaryFeatures {
    pub fn to_vec(&self) -> Vec<f64> {
        self.xt.to_vec()
    }
}

/// a / b with the denominator's magnitude floored at [`RATIO_EPS`]
/// (sign-preserving; exactly zero counts as positive).
pub fn phi_ratio(a: f64, b: f64) -> f64 {
    let sign = if b < 0.0 { -1.0 } else { 1.0 };
    a / (b.abs().max(RATIO_EPS) * sign)
}

/// ln(a + ε); errors when the guarded argument is still non-positive.
pub fn phi_log(a: f64) -> Result<f64, FeatError> {
    let guarded = a + LOG_EPS;
    if guarded <= 0.0 {
        return Err(FeatError::LogDomain(a));
    }
    Ok(guarded.ln())
}

pub fn phi_polynomial(a: f64) -> f64 {
    a * a
}

pub fn phi_interaction(args: &[f64]) -> f64 {
    args.iter().product()
}

/// Signed scalar stand-in for the charge category inside interaction terms.
pub fn charge_num(charge: Charge) -> f64 {
    match charge {
        Charge::Positive => 1.0,
        Charge::Negative => -1.0,
        Charge::Neutral => 0.0,
    }
}

/// Ordinal scalar stand-in for the shape category inside interaction terms.
pub fn shape_num(shape: NpShape) -> f64 {
    match shape {
        NpShape::Spherical => 1.0,
        NpShape::Rod => 2.0,
        NpShape::Plate => 3.0,
        NpShape::Others => 4.0,
    }
}

/// Computes x̃ = (f_size, f_charge, f1..f14) from raw physical units.
pub fn extract_secondary(
    record: &CleanRecord,
    criteria: &OrganCriteria,
) -> Result<SecondaryFeatures, FeatError> {
    let hd = record.hd;
    let zp = record.zp;
    let tw = record.tw;
    let tsiz = record.tsiz;
    let ch = charge_num(record.charge);
    let sh = shape_num(record.shape);

    let xt = [
        f_size(record, criteria) as f64,
        f_charge(record, criteria) as f64,
        phi_ratio(hd, tsiz),                  // f1
        phi_ratio(hd, zp),                    // f2
        phi_ratio(hd, tw),                    // f3
        phi_ratio(tw, tsiz),                  // f4
        phi_log(tw)?,                         // f5
        phi_polynomial(tw),                   // f6
        phi_ratio(zp, hd),                    // f7
        phi_interaction(&[hd, zp, ch]),       // f8
        phi_interaction(&[zp, sh, ch]),       // f9
        phi_polynomial(tsiz),                 // f10
        phi_polynomial(zp),                   // f11
        phi_log(tsiz)?,                       // f12
        phi_log(hd)?,                         // f13
        phi_interaction(&[tsiz, hd]),         // f14
    ];
    debug_assert!(xt.iter().all(|v| v.is_finite()));
    Ok(SecondaryFeatures { xt })
}

/// Convenience: x̃ for every record, same order.
pub fn extract_all(
    records: &[CleanRecord],
    criteria: &OrganCriteria,
) -> Result<Vec<Vec<f64>>, FeatError> {
    records
        .iter()
        .map(|r| extract_secondary(r, criteria).map(|s| s.to_vec()))
        .collect()
}
