//! The cross-attention multiview network and its ablation variants.
//!
//! Architecture: the primary features x are projected and reshaped into the
//! attention keys; the engineered secondary features x̃ are projected twice,
//! giving the queries and the values. The attention output passes through
//! layer norm, dropout, and batch norm; a parallel MLP consumes the two
//! views concatenated; both branch outputs are concatenated and fed to four
//! per-output head MLPs. Ablation variants reroute one view into every
//! input, and the plain-MLP baseline drops the attention branch entirely.

use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{OptKind, ParamStore, Tape, Tensor, Var};

use super::ModelError;

/// Layer tag for parameters outside the output heads.
pub const LAYER_BODY: usize = 0;
/// Layer tag for output-head parameters (the L2-penalized group).
pub const LAYER_HEAD: usize = 1;

/// Epsilon inside layer-norm and batch-norm denominators.
pub const NORM_EPS: f64 = 1e-5;
/// Exponential-average momentum for the batch-norm running statistics.
pub const BN_MOMENTUM: f64 = 0.1;

pub const N_OUTPUTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Keys from x; queries and values from x̃; aux MLP on concat(x, x̃).
    Full,
    /// Every input sourced from x alone (x̃ is never read).
    PrimaryOnly,
    /// Every input sourced from x̃ alone (x is never read).
    SecondaryOnly,
    /// No attention branch; the aux MLP on concat(x, x̃) feeds the heads.
    MlpBaseline,
}

impl Variant {
    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "DNN",
            Variant::PrimaryOnly => "DNN-Primary",
            Variant::SecondaryOnly => "DNN-Secondary",
            Variant::MlpBaseline => "MLP",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiviewConfig {
    /// Width of every projection and MLP layer; in [64, 256] and divisible
    /// by the token count.
    pub hidden_units: usize,
    pub aux_mlp_layers: usize,
    /// Query tokens (from the secondary view).
    pub tq: usize,
    /// Key tokens (from the primary view). Values inherit the query token
    /// count, so tq must equal tk.
    pub tk: usize,
    pub attn_dropout: f64,
    pub mlp_dropout: f64,
    /// Dense layers per output head, one entry per target.
    pub head_layers: [usize; N_OUTPUTS],
    /// Hidden width inside head MLPs.
    pub head_width: usize,
    /// L2 penalty applied to head-layer parameters only.
    pub head_l2: f64,
    pub optimizer: OptKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub variant: Variant,
}

impl Default for MultiviewConfig {
    fn default() -> Self {
        MultiviewConfig {
            hidden_units: 128,
            aux_mlp_layers: 2,
            tq: 4,
            tk: 4,
            attn_dropout: 0.3,
            mlp_dropout: 0.2,
            head_layers: [2, 2, 2, 2],
            head_width: 64,
            head_l2: 0.02,
            optimizer: OptKind::Adam,
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 1000,
            patience: 50,
            seed: 0,
            variant: Variant::Full,
        }
    }
}

pub const LEARNING_RATE_GRID: [f64; 3] = [1e-3, 5e-4, 1e-4];

fn validate(cfg: &MultiviewConfig) -> Result<(), ModelError> {
    let bad = |reason: String| Err(ModelError::BadConfig { reason });
    if !(64..=256).contains(&cfg.hidden_units) {
        return bad(format!("hidden_units {} outside [64, 256]", cfg.hidden_units));
    }
    if cfg.tq == 0 || cfg.tk == 0 {
        return bad("token counts must be positive".into());
    }
    if cfg.tq != cfg.tk {
        return bad(format!(
            "tq {} must equal tk {}: values carry the query-view token count \
             and the attention-weighted sum runs over key tokens",
            cfg.tq, cfg.tk
        ));
    }
    if cfg.hidden_units % cfg.tk != 0 {
        return bad(format!(
            "hidden_units {} not divisible by token count {}",
            cfg.hidden_units, cfg.tk
        ));
    }
    if !(1..=3).contains(&cfg.aux_mlp_layers) {
        return bad(format!("aux_mlp_layers {} outside [1, 3]", cfg.aux_mlp_layers));
    }
    if !(0.2..=0.4).contains(&cfg.attn_dropout) {
        return bad(format!("attn_dropout {} outside [0.2, 0.4]", cfg.attn_dropout));
    }
    if !(0.1..=0.3).contains(&cfg.mlp_dropout) {
        return bad(format!("mlp_dropout {} outside [0.1, 0.3]", cfg.mlp_dropout));
    }
    for (o, &layers) in cfg.head_layers.iter().enumerate() {
        let max = if o == 3 { 5 } else { 3 };
        if !(1..=max).contains(&layers) {
            return bad(format!("head {o} layer count {layers} outside [1, {max}]"));
        }
    }
    if cfg.head_width == 0 {
        return bad("head_width must be positive".into());
    }
    if cfg.head_l2 < 0.0 {
        return bad(format!("head_l2 {} must be nonnegative", cfg.head_l2));
    }
    if !LEARNING_RATE_GRID.contains(&cfg.learning_rate) {
        return bad(format!(
            "learning_rate {} not one of {LEARNING_RATE_GRID:?}",
            cfg.learning_rate
        ));
    }
    if cfg.batch_size < 2 {
        return bad("batch_size must be at least 2 (batch norm needs 2 rows)".into());
    }
    if cfg.max_epochs == 0 {
        return bad("max_epochs must be positive".into());
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct MultiviewModel {
    pub cfg: MultiviewConfig,
    pub d_primary: usize,
    pub d_secondary: usize,
    pub params: ParamStore,
    pub bn_running_mean: Vec<f64>,
    pub bn_running_var: Vec<f64>,
    /// Optimizer steps applied so far; training requires 0.
    pub steps_trained: usize,
}

/// Input widths per variant: (key source, query/value source, aux input).
fn branch_widths(cfg: &MultiviewConfig, dp: usize, ds: usize) -> (usize, usize, usize) {
    match cfg.variant {
        Variant::Full => (dp, ds, dp + ds),
        Variant::PrimaryOnly => (dp, dp, dp),
        Variant::SecondaryOnly => (ds, ds, ds),
        Variant::MlpBaseline => (0, 0, dp + ds),
    }
}

fn trunk_width(cfg: &MultiviewConfig) -> usize {
    if cfg.variant == Variant::MlpBaseline {
        cfg.hidden_units
    } else {
        2 * cfg.hidden_units
    }
}

pub fn build_multiview(
    cfg: &MultiviewConfig,
    d_primary: usize,
    d_secondary: usize,
) -> Result<MultiviewModel, ModelError> {
    validate(cfg)?;
    if d_primary == 0 || d_secondary == 0 {
        return Err(ModelError::BadConfig { reason: "input widths must be positive".into() });
    }
    let h = cfg.hidden_units;
    let (k_in, qv_in, aux_in) = branch_widths(cfg, d_primary, d_secondary);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ParamStore::new();
    let mut dense = |params: &mut ParamStore, name: &str, i: usize, o: usize, layer: usize| {
        params.insert(&format!("{name}.w"), layer, Tensor::glorot(i, o, &mut rng));
        params.insert(&format!("{name}.b"), layer, Tensor::zeros(1, o));
    };

    if cfg.variant != Variant::MlpBaseline {
        dense(&mut params, "proj_k", k_in, h, LAYER_BODY);
        dense(&mut params, "proj_q", qv_in, h, LAYER_BODY);
        dense(&mut params, "proj_v", qv_in, h, LAYER_BODY);
        params.insert("attn_ln.gain", LAYER_BODY, Tensor::from_vec(1, h, vec![1.0; h]));
        params.insert("attn_ln.shift", LAYER_BODY, Tensor::zeros(1, h));
        params.insert("attn_bn.gamma", LAYER_BODY, Tensor::from_vec(1, h, vec![1.0; h]));
        params.insert("attn_bn.beta", LAYER_BODY, Tensor::zeros(1, h));
    }
    for l in 0..cfg.aux_mlp_layers {
        let input = if l == 0 { aux_in } else { h };
        dense(&mut params, &format!("aux.{l}"), input, h, LAYER_BODY);
    }
    let trunk = trunk_width(cfg);
    for (o, &layers) in cfg.head_layers.iter().enumerate() {
        for l in 0..layers {
            let input = if l == 0 { trunk } else { cfg.head_width };
            let output = if l == layers - 1 { 1 } else { cfg.head_width };
            dense(&mut params, &format!("head.{o}.{l}"), input, output, LAYER_HEAD);
        }
    }

    let bn_len = if cfg.variant == Variant::MlpBaseline { 0 } else { h };
    Ok(MultiviewModel {
        cfg: cfg.clone(),
        d_primary,
        d_secondary,
        params,
        bn_running_mean: vec![0.0; bn_len],
        bn_running_var: vec![1.0; bn_len],
        steps_trained: 0,
    })
}

pub enum Mode<'a> {
    Train { rng: &'a mut ChaCha8Rng },
    Eval,
}

pub struct ForwardOutput {
    /// B×4 prediction matrix.
    pub yhat: Var,
    /// The four B×1 head outputs, in target order.
    pub heads: [Var; N_OUTPUTS],
    /// Batch-norm batch statistics (mean, variance), present in train mode.
    pub bn_stats: Option<(Vec<f64>, Vec<f64>)>,
}

fn lookup(vars: &IndexMap<String, Var>, name: &str) -> Var {
    *vars.get(name).unwrap_or_else(|| panic!("parameter {name} was not registered"))
}

fn maybe_dropout(
    tape: &mut Tape,
    x: Var,
    rate: f64,
    mode: &mut Mode,
) -> Result<Var, ModelError> {
    match mode {
        Mode::Train { rng } => Ok(tape.dropout(x, rate, rng)?),
        Mode::Eval => Ok(x),
    }
}

impl MultiviewModel {
    /// Registers every parameter on the tape, returning name → node handles.
    pub fn register(&self, tape: &mut Tape) -> IndexMap<String, Var> {
        self.params
            .iter()
            .map(|(name, entry)| (name.clone(), tape.param(&entry.tensor)))
            .collect()
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &IndexMap<String, Var>,
        x: Var,
        xt: Var,
        mode: &mut Mode,
    ) -> Result<ForwardOutput, ModelError> {
        let (bx, wx) = tape.value(x).shape();
        let (bt, wt) = tape.value(xt).shape();
        if wx != self.d_primary || wt != self.d_secondary || bx != bt {
            return Err(ModelError::ShapeMismatch {
                context: format!(
                    "got x {bx}\u{d7}{wx} and x\u{303} {bt}\u{d7}{wt}, model expects widths \
                     {} and {} with equal batch sizes",
                    self.d_primary, self.d_secondary
                ),
            });
        }
        let cfg = &self.cfg;
        let h = cfg.hidden_units;

        let mut bn_stats = None;
        let attention_branch = if cfg.variant == Variant::MlpBaseline {
            None
        } else {
            let (k_src, qv_src) = match cfg.variant {
                Variant::Full => (x, xt),
                Variant::PrimaryOnly => (x, x),
                Variant::SecondaryOnly => (xt, xt),
                Variant::MlpBaseline => unreachable!(),
            };
            let keys = tape.dense(k_src, lookup(vars, "proj_k.w"), lookup(vars, "proj_k.b"));
            let queries = tape.dense(qv_src, lookup(vars, "proj_q.w"), lookup(vars, "proj_q.b"));
            let values = tape.dense(qv_src, lookup(vars, "proj_v.w"), lookup(vars, "proj_v.b"));
            let d_model = h / cfg.tk;
            let att = tape.attention(queries, keys, values, cfg.tq, cfg.tk, d_model, d_model);
            let normed = tape.layer_norm(
                att,
                lookup(vars, "attn_ln.gain"),
                lookup(vars, "attn_ln.shift"),
                NORM_EPS,
            );
            let dropped = maybe_dropout(tape, normed, cfg.attn_dropout, mode)?;
            let gamma = lookup(vars, "attn_bn.gamma");
            let beta = lookup(vars, "attn_bn.beta");
            let bn_out = match mode {
                Mode::Train { .. } => {
                    let (out, mean, var) = tape.batch_norm_train(dropped, gamma, beta, NORM_EPS)?;
                    bn_stats = Some((mean, var));
                    out
                }
                Mode::Eval => tape.batch_norm_eval(
                    dropped,
                    gamma,
                    beta,
                    &self.bn_running_mean,
                    &self.bn_running_var,
                    NORM_EPS,
                ),
            };
            Some(bn_out)
        };

        let aux_input = match cfg.variant {
            Variant::Full | Variant::MlpBaseline => tape.concat(x, xt),
            Variant::PrimaryOnly => x,
            Variant::SecondaryOnly => xt,
        };
        let mut aux = aux_input;
        for l in 0..cfg.aux_mlp_layers {
            aux = tape.dense(
                aux,
                lookup(vars, &format!("aux.{l}.w")),
                lookup(vars, &format!("aux.{l}.b")),
            );
            aux = tape.relu(aux);
            aux = maybe_dropout(tape, aux, cfg.mlp_dropout, mode)?;
        }

        let trunk = match attention_branch {
            Some(attn) => tape.concat(attn, aux),
            None => aux,
        };

        let mut heads = Vec::with_capacity(N_OUTPUTS);
        for (o, &layers) in cfg.head_layers.iter().enumerate() {
            let mut cur = trunk;
            for l in 0..layers - 1 {
                cur = tape.dense(
                    cur,
                    lookup(vars, &format!("head.{o}.{l}.w")),
                    lookup(vars, &format!("head.{o}.{l}.b")),
                );
                cur = tape.relu(cur);
                cur = maybe_dropout(tape, cur, cfg.mlp_dropout, mode)?;
            }
            let last = layers - 1;
            heads.push(tape.dense(
                cur,
                lookup(vars, &format!("head.{o}.{last}.w")),
                lookup(vars, &format!("head.{o}.{last}.b")),
            ));
        }
        let pair_a = tape.concat(heads[0], heads[1]);
        let pair_b = tape.concat(pair_a, heads[2]);
        let yhat = tape.concat(pair_b, heads[3]);

        Ok(ForwardOutput { yhat, heads: [heads[0], heads[1], heads[2], heads[3]], bn_stats })
    }

    /// Folds fresh batch statistics into the running estimates.
    pub fn update_bn_stats(&mut self, mean: &[f64], var: &[f64]) {
        debug_assert_eq!(mean.len(), self.bn_running_mean.len());
        for (r, b) in self.bn_running_mean.iter_mut().zip(mean) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
        }
        for (r, b) in self.bn_running_var.iter_mut().zip(var) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
        }
    }
}

/// Deterministic eval-mode prediction: dropout off, batch norm frozen to
/// the running statistics.
pub fn predict_multiview(
    model: &MultiviewModel,
    x_rows: &[Vec<f64>],
    xt_rows: &[Vec<f64>],
) -> Result<Vec<[f64; N_OUTPUTS]>, ModelError> {
    if x_rows.is_empty()
        || x_rows.len() != xt_rows.len()
        || x_rows.iter().any(|r| r.len() != model.d_primary)
        || xt_rows.iter().any(|r| r.len() != model.d_secondary)
    {
        return Err(ModelError::ShapeMismatch {
            context: format!(
                "prediction inputs must be equal-length non-empty row sets of widths {} and {}",
                model.d_primary, model.d_secondary
            ),
        });
    }
    let mut tape = Tape::new();
    let vars = model.register(&mut tape);
    let x = tape.constant(Tensor::from_rows(x_rows));
    let xt = tape.constant(Tensor::from_rows(xt_rows));
    let out = model.forward(&mut tape, &vars, x, xt, &mut Mode::Eval)?;
    let values = tape.value(out.yhat);
    Ok((0..values.rows)
        .map(|r| [values.get(r, 0), values.get(r, 1), values.get(r, 2), values.get(r, 3)])
        .collect())
}
