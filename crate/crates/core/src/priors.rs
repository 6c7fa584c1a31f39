//! Organ-affinity prior scores: how many of the four clearance organs
//! (kidney, spleen, liver, lung) a particle's size and surface charge
//! align with.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Charge, CleanRecord};

#[derive(Debug, Error)]
pub enum PriorsError {
    #[error("unknown organ '{0}' (expected kidney, spleen, liver, or lung)")]
    UnknownOrgan(String),
    #[error("organ '{organ}' size band is invalid: min {min} must be < max {max} and both ≥ 0")]
    BadBand { organ: &'static str, min: f64, max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Organ {
    Kidney,
    Spleen,
    Liver,
    Lung,
}

impl Organ {
    pub const ALL: [Organ; 4] = [Organ::Kidney, Organ::Spleen, Organ::Liver, Organ::Lung];

    pub fn label(self) -> &'static str {
        match self {
            Organ::Kidney => "kidney",
            Organ::Spleen => "spleen",
            Organ::Liver => "liver",
            Organ::Lung => "lung",
        }
    }

    pub fn parse(s: &str) -> Result<Self, PriorsError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "kidney" => Ok(Organ::Kidney),
            "spleen" => Ok(Organ::Spleen),
            "liver" => Ok(Organ::Liver),
            "lung" => Ok(Organ::Lung),
            other => Err(PriorsError::UnknownOrgan(other.to_string())),
        }
    }
}

/// Half-open hydrodynamic-diameter band `[min, max)` in nm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeBand {
    pub min: f64,
    /// May be infinite (band open above); JSON renders that as `null`.
    #[serde(with = "unbounded_edge")]
    pub max: f64,
}

/// JSON has no infinity literal, so an unbounded band edge round-trips
/// through `null`.
mod unbounded_edge {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl SizeBand {
    pub fn contains(&self, hd: f64) -> bool {
        self.min <= hd && hd < self.max
    }
}

/// Per-organ size bands and admissible charge sets. Defaults encode the
/// conventional biodistribution reading: kidney filters particles below
/// 6 nm, alveolar deposition favors particles below 100 nm, hepatic uptake
/// spans 10–200 nm, splenic capture takes over above 200 nm; positively
/// charged particles align with liver and lung, neutral/negative with
/// spleen, neutral with renal clearance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrganCriteria {
    pub size: [(Organ, SizeBand); 4],
    pub charge: [(Organ, Vec<Charge>); 4],
}

impl Default for OrganCriteria {
    fn default() -> Self {
        OrganCriteria {
            size: [
                (Organ::Kidney, SizeBand { min: 0.0, max: 6.0 }),
                (Organ::Spleen, SizeBand { min: 200.0, max: f64::INFINITY }),
                (Organ::Liver, SizeBand { min: 10.0, max: 200.0 }),
                (Organ::Lung, SizeBand { min: 0.0, max: 100.0 }),
            ],
            charge: [
                (Organ::Kidney, vec![Charge::Neutral]),
                (Organ::Spleen, vec![Charge::Neutral, Charge::Negative]),
                (Organ::Liver, vec![Charge::Positive]),
                (Organ::Lung, vec![Charge::Positive]),
            ],
        }
    }
}

impl OrganCriteria {
    pub fn size_band(&self, organ: Organ) -> SizeBand {
        self.size.iter().find(|(o, _)| *o == organ).map(|(_, b)| *b).unwrap()
    }

    pub fn charge_set(&self, organ: Organ) -> &[Charge] {
        self.charge
            .iter()
            .find(|(o, _)| *o == organ)
            .map(|(_, c)| c.as_slice())
            .unwrap()
    }

    pub fn set_size_band(&mut self, organ: Organ, band: SizeBand) -> Result<(), PriorsError> {
        if !(band.min >= 0.0 && band.min < band.max) {
            return Err(PriorsError::BadBand { organ: organ.label(), min: band.min, max: band.max });
        }
        for (o, b) in &mut self.size {
            if *o == organ {
                *b = band;
            }
        }
        Ok(())
    }

    pub fn set_charge_set(&mut self, organ: Organ, charges: Vec<Charge>) {
        for (o, c) in &mut self.charge {
            if *o == organ {
                *c = charges.clone();
            }
        }
    }

    /// All hd values at which `f_size` can change (band edges), for
    /// piecewise-constancy checks.
    pub fn size_breakpoints(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = self
            .size
            .iter()
            .flat_map(|(_, b)| [b.min, b.max])
            .filter(|v| v.is_finite() && *v > 0.0)
            .collect();
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pts.dedup();
        pts
    }
}

/// 1 iff `hd` falls inside `organ`'s size band.
pub fn organ_size_score(hd: f64, organ: Organ, criteria: &OrganCriteria) -> u32 {
    u32::from(criteria.size_band(organ).contains(hd))
}

/// 1 iff `charge` is in `organ`'s admissible set.
pub fn organ_charge_score(charge: Charge, organ: Organ, criteria: &OrganCriteria) -> u32 {
    u32::from(criteria.charge_set(organ).contains(&charge))
}

/// Number of organs whose size band contains the record's hydrodynamic
/// diameter; range 0..=4.
pub fn f_size(record: &CleanRecord, criteria: &OrganCriteria) -> u32 {
    f_size_hd(record.hd, criteria)
}

pub fn f_size_hd(hd: f64, criteria: &OrganCriteria) -> u32 {
    Organ::ALL
        .iter()
        .map(|&o| organ_size_score(hd, o, criteria))
        .sum()
}

/// Number of organs whose admissible charge set contains the record's
/// surface charge; range 0..=4.
pub fn f_charge(record: &CleanRecord, criteria: &OrganCriteria) -> u32 {
    f_charge_of(record.charge, criteria)
}

pub fn f_charge_of(charge: Charge, criteria: &OrganCriteria) -> u32 {
    Organ::ALL
        .iter()
        .map(|&o| organ_charge_score(charge, o, criteria))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn crit() -> OrganCriteria {
        OrganCriteria::default()
    }

    #[test]
    fn organ_size_scores_at_reference_points() {
        let c = crit();
        assert_eq!(organ_size_score(5.0, Organ::Kidney, &c), 1);
        assert_eq!(organ_size_score(5.0, Organ::Spleen, &c), 0);
        assert_eq!(organ_size_score(50.0, Organ::Liver, &c), 1);
        assert_eq!(organ_size_score(6.0, Organ::Kidney, &c), 0); // band is exclusive at 6
        assert_eq!(organ_size_score(456.0, Organ::Spleen, &c), 1);
    }

    #[test]
    fn organ_charge_scores_match_affinity_sets() {
        let c = crit();
        assert_eq!(organ_charge_score(Charge::Positive, Organ::Liver, &c), 1);
        assert_eq!(organ_charge_score(Charge::Neutral, Organ::Spleen, &c), 1);
        assert_eq!(organ_charge_score(Charge::Neutral, Organ::Kidney, &c), 1);
        assert_eq!(organ_charge_score(Charge::Negative, Organ::Liver, &c), 0);
    }

    #[test]
    fn size_totals_at_reference_diameters() {
        let c = crit();
        assert_eq!(f_size_hd(5.0, &c), 2); // kidney + lung
        assert_eq!(f_size_hd(456.0, &c), 1); // spleen only
        assert_eq!(f_size_hd(50.0, &c), 2); // liver + lung
        assert_eq!(f_size_hd(200.0, &c), 1); // hand-off point: exactly one of liver/spleen
    }

    #[test]
    fn charge_totals_for_each_polarity() {
        let c = crit();
        assert_eq!(f_charge_of(Charge::Positive, &c), 2); // liver + lung
        assert_eq!(f_charge_of(Charge::Negative, &c), 1); // spleen
        assert_eq!(f_charge_of(Charge::Neutral, &c), 2); // spleen + kidney
    }

    #[test]
    fn unknown_organ_is_rejected() {
        assert!(matches!(Organ::parse("pancreas"), Err(PriorsError::UnknownOrgan(_))));
        assert_eq!(Organ::parse("Liver").unwrap(), Organ::Liver);
    }

    #[test]
    fn bad_band_rejected() {
        let mut c = crit();
        assert!(c
            .set_size_band(Organ::Liver, SizeBand { min: 50.0, max: 10.0 })
            .is_err());
        assert!(c
            .set_size_band(Organ::Liver, SizeBand { min: 20.0, max: 300.0 })
            .is_ok());
        assert_eq!(c.size_band(Organ::Liver).max, 300.0);
    }

    proptest! {
        #[test]
        fn scores_stay_in_range(hd in 1e-3f64..1e4) {
            let c = crit();
            let s = f_size_hd(hd, &c);
            prop_assert!(s <= 4);
        }

        // Between consecutive band edges the score is constant.
        #[test]
        fn piecewise_constant_between_breakpoints(a in 1e-3f64..1e4, b in 1e-3f64..1e4) {
            let c = crit();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let crossing = c
                .size_breakpoints()
                .iter()
                .any(|&p| lo < p && p <= hi);
            if !crossing {
                prop_assert_eq!(f_size_hd(lo, &c), f_size_hd(hi, &c));
            }
        }
    }
}
