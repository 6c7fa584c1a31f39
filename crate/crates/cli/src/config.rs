//! Flat key=value run configuration.
//!
//! One `key=value` per line; `#` starts a comment; blank lines are ignored.
//! Command-line flags override file values. Unknown or duplicate keys are
//! rejected so typos fail loudly instead of silently running defaults.
//!
//! Recognized keys (all optional):
//!
//! ```text
//! dataset=PATH                 out=DIR                  seed=U64
//! roster=benchmark|ablation|A,B,…   budget=N           folds=K
//! ratios=0.6,0.2,0.2           grid_step=0.05
//! synth_n=280                  synth_noise=0.3
//! augment=on|off               augment_quantile=0.9
//! augment_neighbors=5          augment_factor=1.0
//! hidden_units=128  aux_mlp_layers=2  tq=4  tk=4
//! attn_dropout=0.3  mlp_dropout=0.2   head_layers=2,2,2,2
//! head_width=64     head_l2=0.02      optimizer=adam|sgd
//! learning_rate=0.001  batch_size=32  max_epochs=1000  patience=50
//! variant=full|primary|secondary|mlp
//! forest_trees=200  forest_depth=16  forest_min_leaf=2
//! forest_features_per_split=auto|N   forest_bootstrap=on|off
//! gbt_rounds=300  gbt_learning_rate=0.1  gbt_depth=3
//! gbt_leaf_l2=1.0  gbt_min_leaf=2
//! size_band.kidney=MIN:MAX     (organ ∈ kidney|spleen|liver|lung;
//!                               MAX may be "inf")
//! charge_set.liver=positive[,…] (charges ∈ positive|negative|neutral)
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use indexmap::IndexMap;
use nanopk::augment::AugmentConfig;
use nanopk::autodiff::OptKind;
use nanopk::dataset::Charge;
use nanopk::eval::{parse_roster, CvOptions};
use nanopk::models::{Variant, N_OUTPUTS};
use nanopk::priors::{Organ, SizeBand};
use nanopk::synth::SynthConfig;

use crate::error::CliError;

fn usage<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Usage(msg.into()))
}

/// Global flags shared by every command; they win over file values.
#[derive(Debug, Default, Clone)]
pub struct GlobalFlags {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub roster: Option<String>,
    pub budget: Option<usize>,
}

/// Raw parsed file: keys are consumed during assembly; leftovers are
/// reported as unknown.
pub struct ConfigMap {
    map: IndexMap<String, String>,
}

impl ConfigMap {
    pub fn empty() -> Self {
        ConfigMap { map: IndexMap::new() }
    }

    pub fn parse_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Usage(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut map = IndexMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return usage(format!(
                    "{}:{}: expected key=value, got {:?}",
                    path.display(),
                    lineno + 1,
                    line
                ));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if map.insert(key.clone(), value).is_some() {
                return usage(format!(
                    "{}:{}: duplicate key {key:?}",
                    path.display(),
                    lineno + 1
                ));
            }
        }
        Ok(ConfigMap { map })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.map.shift_remove(key)
    }

    /// Removes and parses `key`, reporting the offending value on failure.
    fn parsed<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => match v.parse::<T>() {
                Ok(t) => Ok(Some(t)),
                Err(_) => usage(format!("config key {key}={v:?} is not a valid value")),
            },
        }
    }

    fn finish(self) -> Result<(), CliError> {
        if let Some(key) = self.map.keys().next() {
            return usage(format!("unknown configuration key {key:?}"));
        }
        Ok(())
    }
}

fn parse_switch(key: &str, v: &str) -> Result<bool, CliError> {
    match v.to_ascii_lowercase().as_str() {
        "on" | "true" | "1" | "yes" => Ok(true),
        "off" | "false" | "0" | "no" => Ok(false),
        _ => usage(format!("config key {key}={v:?} must be on or off")),
    }
}

fn parse_list<T: FromStr, const N: usize>(key: &str, v: &str) -> Result<[T; N], CliError> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.len() != N {
        return usage(format!("config key {key}={v:?} needs exactly {N} comma-separated values"));
    }
    let mut out = Vec::with_capacity(N);
    for p in parts {
        match p.parse::<T>() {
            Ok(t) => out.push(t),
            Err(_) => return usage(format!("config key {key}: {p:?} is not a valid value")),
        }
    }
    Ok(out.try_into().map_err(|_| ()).expect("length checked"))
}

/// Fully assembled run settings: defaults ← config file ← flags.
#[derive(Debug, Clone)]
pub struct Settings {
    pub dataset: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub folds: usize,
    pub ratios: [f64; 3],
    pub synth: SynthConfig,
    pub opts: CvOptions,
}

impl Settings {
    pub fn assemble(flags: &GlobalFlags) -> Result<Self, CliError> {
        let mut cfg = match &flags.config {
            Some(path) => ConfigMap::parse_file(path)?,
            None => ConfigMap::empty(),
        };

        let dataset = cfg.take("dataset").map(PathBuf::from);
        let out = flags
            .out
            .clone()
            .or_else(|| cfg.take("out").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"));
        let seed = match flags.seed {
            Some(s) => s,
            None => cfg.parsed("seed")?.unwrap_or(0),
        };
        let folds = cfg.parsed("folds")?.unwrap_or(5);

        let ratios = match cfg.take("ratios") {
            Some(v) => {
                let r: [f64; 3] = parse_list("ratios", &v)?;
                if r.iter().any(|x| *x <= 0.0) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return usage(format!("ratios {v:?} must be positive and sum to 1"));
                }
                r
            }
            None => [0.6, 0.2, 0.2],
        };

        let mut opts = CvOptions { seed, ..CvOptions::default() };

        let roster_spec = flags.roster.clone().or_else(|| cfg.take("roster"));
        if let Some(spec) = roster_spec {
            opts.roster = parse_roster(&spec).map_err(CliError::Usage)?;
        }
        opts.budget = match flags.budget {
            Some(b) => b,
            None => cfg.parsed("budget")?.unwrap_or(0),
        };
        if let Some(v) = cfg.parsed("grid_step")? {
            if !(v > 0.0 && v <= 1.0) {
                return usage(format!("grid_step {v} must lie in (0, 1]"));
            }
            opts.grid_step = v;
        }

        let synth = SynthConfig {
            n: cfg.parsed("synth_n")?.unwrap_or(280),
            noise_sd_fraction: cfg.parsed("synth_noise")?.unwrap_or(0.3),
            seed,
        };

        let mut aug = AugmentConfig { seed, ..AugmentConfig::default() };
        if let Some(v) = cfg.take("augment") {
            aug.enabled = parse_switch("augment", &v)?;
        }
        if let Some(v) = cfg.parsed("augment_quantile")? {
            aug.rare_quantile = v;
        }
        if let Some(v) = cfg.parsed("augment_neighbors")? {
            aug.k_neighbors = v;
        }
        if let Some(v) = cfg.parsed("augment_factor")? {
            aug.oversample_factor = v;
        }
        opts.augment = aug;

        let net = &mut opts.base_config;
        if let Some(v) = cfg.parsed("hidden_units")? {
            net.hidden_units = v;
        }
        if let Some(v) = cfg.parsed("aux_mlp_layers")? {
            net.aux_mlp_layers = v;
        }
        if let Some(v) = cfg.parsed("tq")? {
            net.tq = v;
        }
        if let Some(v) = cfg.parsed("tk")? {
            net.tk = v;
        }
        if let Some(v) = cfg.parsed("attn_dropout")? {
            net.attn_dropout = v;
        }
        if let Some(v) = cfg.parsed("mlp_dropout")? {
            net.mlp_dropout = v;
        }
        if let Some(v) = cfg.take("head_layers") {
            net.head_layers = parse_list::<usize, N_OUTPUTS>("head_layers", &v)?;
        }
        if let Some(v) = cfg.parsed("head_width")? {
            net.head_width = v;
        }
        if let Some(v) = cfg.parsed("head_l2")? {
            net.head_l2 = v;
        }
        if let Some(v) = cfg.take("optimizer") {
            net.optimizer = match v.to_ascii_lowercase().as_str() {
                "adam" => OptKind::Adam,
                "sgd" => OptKind::Sgd,
                _ => return usage(format!("optimizer {v:?} must be adam or sgd")),
            };
        }
        if let Some(v) = cfg.parsed("learning_rate")? {
            net.learning_rate = v;
        }
        if let Some(v) = cfg.parsed("batch_size")? {
            net.batch_size = v;
        }
        if let Some(v) = cfg.parsed("max_epochs")? {
            net.max_epochs = v;
        }
        if let Some(v) = cfg.parsed("patience")? {
            net.patience = v;
        }
        if let Some(v) = cfg.take("variant") {
            net.variant = match v.to_ascii_lowercase().as_str() {
                "full" => Variant::Full,
                "primary" => Variant::PrimaryOnly,
                "secondary" => Variant::SecondaryOnly,
                "mlp" => Variant::MlpBaseline,
                _ => {
                    return usage(format!(
                        "variant {v:?} must be full, primary, secondary, or mlp"
                    ))
                }
            };
        }

        if let Some(v) = cfg.parsed("forest_trees")? {
            opts.forest.n_trees = v;
        }
        if let Some(v) = cfg.parsed("forest_depth")? {
            opts.forest.max_depth = v;
        }
        if let Some(v) = cfg.parsed("forest_min_leaf")? {
            opts.forest.min_leaf = v;
        }
        if let Some(v) = cfg.take("forest_features_per_split") {
            opts.forest.features_per_split = if v.eq_ignore_ascii_case("auto") {
                None
            } else {
                match v.parse() {
                    Ok(n) => Some(n),
                    Err(_) => {
                        return usage(format!(
                            "forest_features_per_split {v:?} must be a count or auto"
                        ))
                    }
                }
            };
        }
        if let Some(v) = cfg.take("forest_bootstrap") {
            opts.forest.bootstrap = parse_switch("forest_bootstrap", &v)?;
        }

        if let Some(v) = cfg.parsed("gbt_rounds")? {
            opts.gbt.n_rounds = v;
        }
        if let Some(v) = cfg.parsed("gbt_learning_rate")? {
            opts.gbt.learning_rate = v;
        }
        if let Some(v) = cfg.parsed("gbt_depth")? {
            opts.gbt.max_depth = v;
        }
        if let Some(v) = cfg.parsed("gbt_leaf_l2")? {
            opts.gbt.leaf_l2 = v;
        }
        if let Some(v) = cfg.parsed("gbt_min_leaf")? {
            opts.gbt.min_leaf = v;
        }

        for organ in Organ::ALL {
            if let Some(v) = cfg.take(&format!("size_band.{}", organ.label())) {
                let band = parse_size_band(organ.label(), &v)?;
                opts.criteria
                    .set_size_band(organ, band)
                    .map_err(|e| CliError::Usage(e.to_string()))?;
            }
            if let Some(v) = cfg.take(&format!("charge_set.{}", organ.label())) {
                let mut charges = Vec::new();
                for part in v.split(',') {
                    charges.push(Charge::parse(part.trim()).map_err(|e| {
                        CliError::Usage(format!("charge_set.{}: {e}", organ.label()))
                    })?);
                }
                opts.criteria.set_charge_set(organ, charges);
            }
        }

        cfg.finish()?;
        Ok(Settings { dataset, out, seed, folds, ratios, synth, opts })
    }

    /// The dataset path for a command: positional argument wins, then the
    /// config file.
    pub fn dataset_path(&self, positional: Option<PathBuf>) -> Result<PathBuf, CliError> {
        positional.or_else(|| self.dataset.clone()).map_or_else(
            || usage("no dataset given (pass a path or set dataset= in the config file)"),
            Ok,
        )
    }
}

fn parse_size_band(organ: &str, v: &str) -> Result<SizeBand, CliError> {
    let Some((lo, hi)) = v.split_once(':') else {
        return usage(format!("size_band.{organ}={v:?} must be MIN:MAX"));
    };
    let min: f64 = lo
        .trim()
        .parse()
        .or_else(|_| usage(format!("size_band.{organ}: bad minimum {lo:?}")))?;
    let hi = hi.trim();
    let max: f64 = if hi.eq_ignore_ascii_case("inf") {
        f64::INFINITY
    } else {
        hi.parse()
            .or_else(|_| usage(format!("size_band.{organ}: bad maximum {hi:?}")))?
    };
    Ok(SizeBand { min, max })
}
