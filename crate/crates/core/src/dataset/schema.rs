//! Record types and the fixed categorical vocabularies of the nanoparticle
//! pharmacokinetic dataset.

use serde::{Deserialize, Serialize};

use super::DataError;

/// Order of the four regression targets everywhere in this crate.
pub const TARGET_NAMES: [&str; 4] = ["KTRESmax", "KTRESn", "KTRES50", "KTRESrelease"];

macro_rules! categorical {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $label:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            /// Vocabulary in its fixed (one-hot) order.
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn label(self) -> &'static str {
                match self {
                    $($name::$variant => $label),+
                }
            }

            /// Case-insensitive lookup; whitespace is trimmed by the caller.
            pub fn parse(s: &str) -> Result<Self, DataError> {
                $(if s.eq_ignore_ascii_case($label) {
                    return Ok($name::$variant);
                })+
                Err(DataError::UnknownCategory {
                    field: stringify!($name),
                    value: s.to_string(),
                })
            }

            /// Position within the vocabulary (one-hot index).
            pub fn index(self) -> usize {
                Self::ALL.iter().position(|v| *v == self).expect("variant in ALL")
            }
        }
    };
}

categorical!(
    /// Type of nanoparticle (symbol `Type`).
    NpType {
        Inorganic => "Inorganic",
        Organic => "Organic",
        Hybrid => "Hybrid",
    }
);

categorical!(
    /// Core material (symbol `MAT`).
    Material {
        Gold => "Gold",
        Dendrimers => "Dendrimers",
        Liposomes => "Liposomes",
        Polymeric => "Polymeric",
        Hydrogels => "Hydrogels",
        OtherOrganic => "Other Organic Material",
        OtherInorganic => "Other Inorganic Material",
    }
);

categorical!(
    /// Particle shape (symbol `Shape`).
    NpShape {
        Spherical => "Spherical",
        Rod => "Rod",
        Plate => "Plate",
        Others => "Others",
    }
);

categorical!(
    /// Surface charge class (symbol `Charge`).
    Charge {
        Positive => "Positive",
        Negative => "Negative",
        Neutral => "Neutral",
    }
);

categorical!(
    /// Targeting strategy (symbol `TS`).
    Targeting {
        Passive => "Passive",
        Active => "Active",
    }
);

categorical!(
    /// Tumor model (symbol `TM`).
    TumorModel {
        AllograftHeterotopic => "Allograft Heterotopic",
        AllograftOrthotopic => "Allograft Orthotopic",
        XenograftHeterotopic => "Xenograft Heterotopic",
        XenograftOrthotopic => "Xenograft Orthotopic",
    }
);

categorical!(
    /// Cancer type (symbol `CT`).
    CancerType {
        Brain => "Brain",
        Breast => "Breast",
        Cervix => "Cervix",
        Colon => "Colon",
        Liver => "Liver",
        Lung => "Lung",
        Ovary => "Ovary",
        Pancreas => "Pancreas",
        Prostate => "Prostate",
        Skin => "Skin",
    }
);

categorical!(
    /// Administration route (symbol `AR`); the dataset only contains IV.
    AdminRoute {
        Iv => "IV",
    }
);

/// One raw dataset row. Every field is optional: anything unparseable,
/// out of vocabulary, or violating a physical-range invariant (`hd`, `tw`,
/// `tsiz` must be positive) is recorded as missing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleRecord {
    pub type_np: Option<NpType>,
    pub mat: Option<Material>,
    pub shape: Option<NpShape>,
    /// Hydrodynamic diameter, nm.
    pub hd: Option<f64>,
    /// Zeta potential, mV (may be negative).
    pub zp: Option<f64>,
    pub charge: Option<Charge>,
    pub ts: Option<Targeting>,
    pub tm: Option<TumorModel>,
    pub ct: Option<CancerType>,
    /// Tumor weight, g.
    pub tw: Option<f64>,
    /// Tumor size, cm.
    pub tsiz: Option<f64>,
    /// Dose, mg/kg.
    pub dose: Option<f64>,
    /// Body weight, g.
    pub bw: Option<f64>,
    pub ar: Option<AdminRoute>,
    /// Release rate constant of tumor cells, 1/h.
    pub ktres_release: Option<f64>,
    /// Maximum uptake rate constant of tumor cells, 1/h.
    pub ktres_max: Option<f64>,
    /// Hill coefficient of tumor cells, dimensionless.
    pub ktres_n: Option<f64>,
    /// Time reaching half maximum uptake rate, h.
    pub ktres_50: Option<f64>,
}

impl SampleRecord {
    pub fn is_complete(&self) -> bool {
        self.type_np.is_some()
            && self.mat.is_some()
            && self.shape.is_some()
            && self.hd.is_some()
            && self.zp.is_some()
            && self.charge.is_some()
            && self.ts.is_some()
            && self.tm.is_some()
            && self.ct.is_some()
            && self.tw.is_some()
            && self.tsiz.is_some()
            && self.dose.is_some()
            && self.bw.is_some()
            && self.ar.is_some()
            && self.ktres_release.is_some()
            && self.ktres_max.is_some()
            && self.ktres_n.is_some()
            && self.ktres_50.is_some()
    }
}

/// A fully populated row; the invariants of [`SampleRecord`] hold by
/// construction (`hd`, `tw`, `tsiz` positive, all numerics finite).
#[derive(Debug, Clone, PartialEq)]
pub struct CleanRecord {
    pub type_np: NpType,
    pub mat: Material,
    pub shape: NpShape,
    pub hd: f64,
    pub zp: f64,
    pub charge: Charge,
    pub ts: Targeting,
    pub tm: TumorModel,
    pub ct: CancerType,
    pub tw: f64,
    pub tsiz: f64,
    pub dose: f64,
    pub bw: f64,
    pub ar: AdminRoute,
    pub ktres_release: f64,
    pub ktres_max: f64,
    pub ktres_n: f64,
    pub ktres_50: f64,
}

impl CleanRecord {
    pub fn from_sample(r: &SampleRecord) -> Option<Self> {
        Some(CleanRecord {
            type_np: r.type_np?,
            mat: r.mat?,
            shape: r.shape?,
            hd: r.hd?,
            zp: r.zp?,
            charge: r.charge?,
            ts: r.ts?,
            tm: r.tm?,
            ct: r.ct?,
            tw: r.tw?,
            tsiz: r.tsiz?,
            dose: r.dose?,
            bw: r.bw?,
            ar: r.ar?,
            ktres_release: r.ktres_release?,
            ktres_max: r.ktres_max?,
            ktres_n: r.ktres_n?,
            ktres_50: r.ktres_50?,
        })
    }

    /// The six numeric input features in schema order (HD, ZP, TW, TSiz, Dose, BW).
    pub fn numeric_features(&self) -> [f64; 6] {
        [self.hd, self.zp, self.tw, self.tsiz, self.dose, self.bw]
    }

    pub fn set_numeric_features(&mut self, v: [f64; 6]) {
        self.hd = v[0];
        self.zp = v[1];
        self.tw = v[2];
        self.tsiz = v[3];
        self.dose = v[4];
        self.bw = v[5];
    }

    /// Targets in report order (KTRESmax, KTRESn, KTRES50, KTRESrelease).
    pub fn targets(&self) -> TargetVector {
        TargetVector {
            y: [self.ktres_max, self.ktres_n, self.ktres_50, self.ktres_release],
        }
    }

    pub fn set_targets(&mut self, y: [f64; 4]) {
        self.ktres_max = y[0];
        self.ktres_n = y[1];
        self.ktres_50 = y[2];
        self.ktres_release = y[3];
    }
}

impl From<&CleanRecord> for SampleRecord {
    fn from(r: &CleanRecord) -> Self {
        SampleRecord {
            type_np: Some(r.type_np),
            mat: Some(r.mat),
            shape: Some(r.shape),
            hd: Some(r.hd),
            zp: Some(r.zp),
            charge: Some(r.charge),
            ts: Some(r.ts),
            tm: Some(r.tm),
            ct: Some(r.ct),
            tw: Some(r.tw),
            tsiz: Some(r.tsiz),
            dose: Some(r.dose),
            bw: Some(r.bw),
            ar: Some(r.ar),
            ktres_release: Some(r.ktres_release),
            ktres_max: Some(r.ktres_max),
            ktres_n: Some(r.ktres_n),
            ktres_50: Some(r.ktres_50),
        }
    }
}

/// The four regression targets, ordered (KTRESmax, KTRESn, KTRES50, KTRESrelease).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetVector {
    pub y: [f64; 4],
}
