//! The time-aware attention network.
//!
//! An item embedding is a fully-connected stack over the concatenation of
//! the raw feature vector, a category reduction and four temporal one-hot
//! reductions. Histories run through a two-layer GRU; a relative-time
//! sinusoidal encoding feeds the attention that pools the hidden states;
//! the sample embedding concatenates history, target item and auxiliary
//! embeddings and a linear head turns it into a score.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::data::{Sample, RAW_DIM};
use crate::error::{Error, Result};
use crate::param::{ParamId, ParamSet};
use crate::rng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::time::{DAY_VOCAB, HOUR_VOCAB, MONTH_VOCAB, WEEK_VOCAB};

/// Width of each one-hot reduction (category and the four time signals).
pub const ONEHOT_DIM: usize = 8;
/// Width of the auxiliary embedding.
pub const AUX_EMBED_DIM: usize = 8;

/// Structural configuration of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDims {
    /// Item embedding width `d`.
    pub embed_dim: usize,
    /// GRU hidden width `h`.
    pub hidden_dim: usize,
    /// Attention projection width `v`.
    pub attn_dim: usize,
    /// History length `L`.
    pub history_len: usize,
    /// Auxiliary feature width.
    pub aux_dim: usize,
    /// Category vocabulary size (cid3 values live in `0..n_categories`).
    pub n_categories: usize,
    /// With `false`, the temporal components are stripped: no absolute-time
    /// one-hots in the item embedder and no relative-time term in the
    /// attention (the "GRU attention" ablation).
    pub time_aware: bool,
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.embed_dim % 2 != 0 {
            return Err(Error::Config(format!(
                "embed dim must be positive and even, got {}",
                self.embed_dim
            )));
        }
        if self.hidden_dim == 0 || self.attn_dim == 0 || self.history_len == 0 {
            return Err(Error::Config("hidden, attention and history dims must be positive".into()));
        }
        if self.aux_dim == 0 {
            return Err(Error::Config("aux dim must be positive".into()));
        }
        if self.n_categories < 2 {
            return Err(Error::Config(
                "category vocabulary must hold the padding index and one real category".into(),
            ));
        }
        Ok(())
    }

    /// Input width of the item embedder's fully-connected stack.
    pub fn item_input_dim(&self) -> usize {
        RAW_DIM + ONEHOT_DIM + if self.time_aware { 4 * ONEHOT_DIM } else { 0 }
    }

    /// Width of the sample embedding `concat(e_h, e_i0, e_a)`.
    pub fn sample_dim(&self) -> usize {
        self.hidden_dim + self.embed_dim + AUX_EMBED_DIM
    }
}

#[derive(Debug, Clone)]
pub struct ItemEmbedderParams {
    pub w_c: ParamId,
    /// `[w_m, w_w, w_d, w_h]`; absent when the model is time-stripped.
    pub time: Option<[ParamId; 4]>,
    /// Three fully-connected layers: two hidden ReLU, one tanh output.
    pub fc: [(ParamId, ParamId); 3],
}

#[derive(Debug, Clone)]
pub struct GruLayerParams {
    pub w_er: ParamId,
    pub w_hr: ParamId,
    pub b_r: ParamId,
    pub w_ez: ParamId,
    pub w_hz: ParamId,
    pub b_z: ParamId,
    pub w_ec: ParamId,
    pub w_hc: ParamId,
    pub b_c: ParamId,
}

#[derive(Debug, Clone)]
pub struct AttentionParams {
    pub w_h: ParamId,
    pub w_i: ParamId,
    pub w_t: Option<ParamId>,
    pub v: ParamId,
}

#[derive(Debug, Clone)]
pub struct ModelParams {
    pub dims: ModelDims,
    /// Target and history item embedders share structure, not weights.
    pub target_embedder: ItemEmbedderParams,
    pub history_embedder: ItemEmbedderParams,
    pub gru: [GruLayerParams; 2],
    pub attention: AttentionParams,
    pub aux_w: ParamId,
    pub aux_b: ParamId,
    pub score_w: ParamId,
    pub score_b: ParamId,
    params: ParamSet,
}

/// Tape handles for the pieces of one embedded sample.
#[derive(Debug, Clone, Copy)]
pub struct SampleVars {
    pub e_h: Var,
    pub e_i0: Var,
    pub e_a: Var,
    pub e_s: Var,
    /// Attention weights over the `L` history positions.
    pub attn: Var,
}

impl ModelParams {
    /// Fresh network with Glorot-uniform weights and zero biases, fully
    /// determined by `seed`.
    pub fn init(dims: ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut ps = ParamSet::new();
        let mut stream = rng::stream(seed, "model_init");

        let embedder = |ps: &mut ParamSet, prefix: &str, rng: &mut rand_chacha::ChaCha12Rng| {
            let w_c = ps.matrix_glorot(&name(prefix, "w_c"), ONEHOT_DIM, dims.n_categories, rng);
            let time = dims.time_aware.then(|| {
                [
                    ps.matrix_glorot(&name(prefix, "w_m"), ONEHOT_DIM, MONTH_VOCAB, rng),
                    ps.matrix_glorot(&name(prefix, "w_w"), ONEHOT_DIM, WEEK_VOCAB, rng),
                    ps.matrix_glorot(&name(prefix, "w_d"), ONEHOT_DIM, DAY_VOCAB, rng),
                    ps.matrix_glorot(&name(prefix, "w_h"), ONEHOT_DIM, HOUR_VOCAB, rng),
                ]
            });
            let mut fc = Vec::with_capacity(3);
            let mut in_dim = dims.item_input_dim();
            for layer in 0..3 {
                let w = ps.matrix_glorot(
                    &name(prefix, &format!("fc{layer}.w")),
                    dims.embed_dim,
                    in_dim,
                    rng,
                );
                let b = ps.zeros(&name(prefix, &format!("fc{layer}.b")), dims.embed_dim);
                fc.push((w, b));
                in_dim = dims.embed_dim;
            }
            ItemEmbedderParams { w_c, time, fc: [fc[0], fc[1], fc[2]] }
        };

        let target_embedder = embedder(&mut ps, "target", &mut stream);
        let history_embedder = embedder(&mut ps, "hist", &mut stream);

        let gru_layer = |ps: &mut ParamSet, layer: usize, input: usize, rng: &mut _| {
            let p = format!("gru{layer}");
            GruLayerParams {
                w_er: ps.matrix_glorot(&name(&p, "w_er"), dims.hidden_dim, input, rng),
                w_hr: ps.matrix_glorot(&name(&p, "w_hr"), dims.hidden_dim, dims.hidden_dim, rng),
                b_r: ps.zeros(&name(&p, "b_r"), dims.hidden_dim),
                w_ez: ps.matrix_glorot(&name(&p, "w_ez"), dims.hidden_dim, input, rng),
                w_hz: ps.matrix_glorot(&name(&p, "w_hz"), dims.hidden_dim, dims.hidden_dim, rng),
                b_z: ps.zeros(&name(&p, "b_z"), dims.hidden_dim),
                w_ec: ps.matrix_glorot(&name(&p, "w_ec"), dims.hidden_dim, input, rng),
                w_hc: ps.matrix_glorot(&name(&p, "w_hc"), dims.hidden_dim, dims.hidden_dim, rng),
                b_c: ps.zeros(&name(&p, "b_c"), dims.hidden_dim),
            }
        };
        let gru = [
            gru_layer(&mut ps, 0, dims.embed_dim, &mut stream),
            gru_layer(&mut ps, 1, dims.hidden_dim, &mut stream),
        ];

        let attention = AttentionParams {
            w_h: ps.matrix_glorot("attn.w_h", dims.attn_dim, dims.hidden_dim, &mut stream),
            w_i: ps.matrix_glorot("attn.w_i", dims.attn_dim, dims.embed_dim, &mut stream),
            w_t: dims
                .time_aware
                .then(|| ps.matrix_glorot("attn.w_t", dims.attn_dim, dims.embed_dim, &mut stream)),
            v: ps.vector_glorot("attn.v", dims.attn_dim, &mut stream),
        };

        let aux_w = ps.matrix_glorot("aux.w", AUX_EMBED_DIM, dims.aux_dim, &mut stream);
        let aux_b = ps.zeros("aux.b", AUX_EMBED_DIM);
        let score_w = ps.matrix_glorot("score.w", 1, dims.sample_dim(), &mut stream);
        let score_b = ps.zeros("score.b", 1);

        Ok(Self {
            dims,
            target_embedder,
            history_embedder,
            gru,
            attention,
            aux_w,
            aux_b,
            score_w,
            score_b,
            params: ps,
        })
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Embed one item with the given embedder head.
    pub fn embed_item(
        &self,
        tape: &mut Tape,
        embedder: &ItemEmbedderParams,
        item: &crate::data::ItemRecord,
    ) -> Result<Var> {
        if item.raw.len() != RAW_DIM {
            return Err(Error::Validation(format!(
                "raw feature vector has {} entries, expected {RAW_DIM}",
                item.raw.len()
            )));
        }
        let ps = &self.params;
        let raw = tape.input_vector(item.raw.clone());

        let c_col = tape.onehot_col(ps, embedder.w_c, item.cid3)?;
        let e_c = tape.relu(c_col);

        let mut parts = vec![raw, e_c];
        if let Some(tw) = &embedder.time {
            let t = &item.time;
            let cols = [
                tape.onehot_col(ps, tw[0], t.t_m as usize)?,
                tape.onehot_col(ps, tw[1], t.t_w as usize)?,
                tape.onehot_col(ps, tw[2], t.t_d as usize)?,
                tape.onehot_col(ps, tw[3], t.t_h as usize)?,
            ];
            let cat = tape.concat(&cols);
            parts.push(tape.relu(cat));
        }
        let mut x = tape.concat(&parts);
        for (layer, &(w, b)) in embedder.fc.iter().enumerate() {
            let z = tape.affine(ps, w, Some(b), x)?;
            x = if layer + 1 < embedder.fc.len() {
                tape.relu(z)
            } else {
                tape.tanh(z)
            };
        }
        Ok(x)
    }

    /// Two-layer GRU over the item embeddings; returns the top-layer states.
    pub fn gru_forward(&self, tape: &mut Tape, inputs: &[Var]) -> Result<Vec<Var>> {
        if inputs.is_empty() {
            return Err(Error::Config("gru over an empty sequence".into()));
        }
        let ps = &self.params;
        let mut states = inputs.to_vec();
        for layer in &self.gru {
            let mut h = tape.input(Tensor::zeros(vec![self.dims.hidden_dim]));
            let mut out = Vec::with_capacity(states.len());
            for &x in &states {
                let r_in = tape.affine(ps, layer.w_er, Some(layer.b_r), x)?;
                let r_h = tape.affine(ps, layer.w_hr, None, h)?;
                let r_pre = tape.add(r_in, r_h)?;
                let r = tape.sigmoid(r_pre);

                let z_in = tape.affine(ps, layer.w_ez, Some(layer.b_z), x)?;
                let z_h = tape.affine(ps, layer.w_hz, None, h)?;
                let z_pre = tape.add(z_in, z_h)?;
                let z = tape.sigmoid(z_pre);

                let gated = tape.mul(r, h)?;
                let c_in = tape.affine(ps, layer.w_ec, Some(layer.b_c), x)?;
                let c_h = tape.affine(ps, layer.w_hc, None, gated)?;
                let c_pre = tape.add(c_in, c_h)?;
                let cand = tape.tanh(c_pre);

                let keep = tape.scale_shift(z, -1.0, 1.0);
                let kept = tape.mul(keep, h)?;
                let new = tape.mul(z, cand)?;
                h = tape.add(kept, new)?;
                out.push(h);
            }
            states = out;
        }
        Ok(states)
    }

    /// Attention over the hidden states. `rel_times` must be present exactly
    /// when the model is time-aware; `mask[l] == false` positions get weight
    /// exactly zero. Returns `(pooled history embedding, weights)`.
    pub fn attention_pool(
        &self,
        tape: &mut Tape,
        hidden: &[Var],
        target_embed: Var,
        rel_times: Option<&[Var]>,
        mask: Option<&[bool]>,
    ) -> Result<(Var, Var)> {
        let ps = &self.params;
        let att = &self.attention;
        if self.dims.time_aware != rel_times.is_some() {
            return Err(Error::Config(
                "relative-time encodings must match the model's time awareness".into(),
            ));
        }
        if let Some(r) = rel_times {
            if r.len() != hidden.len() {
                return Err(Error::Config(format!(
                    "{} relative-time encodings against {} hidden states",
                    r.len(),
                    hidden.len()
                )));
            }
        }
        let target_proj = tape.affine(ps, att.w_i, None, target_embed)?;
        let mut logits = Vec::with_capacity(hidden.len());
        for (l, &h) in hidden.iter().enumerate() {
            let mut pre = tape.affine(ps, att.w_h, None, h)?;
            pre = tape.add(pre, target_proj)?;
            if let (Some(w_t), Some(r)) = (att.w_t, rel_times) {
                let t_proj = tape.affine(ps, w_t, None, r[l])?;
                pre = tape.add(pre, t_proj)?;
            }
            let act = tape.tanh(pre);
            logits.push(tape.dot_param(ps, att.v, act)?);
        }
        let u = tape.stack_scalars(&logits)?;
        let a = tape.softmax_masked(u, mask)?;
        let pooled = tape.weighted_sum(a, hidden)?;
        Ok((pooled, a))
    }

    /// Full sample embedding: target item, history GRU + attention, aux net.
    pub fn embed_sample(&self, tape: &mut Tape, sample: &Sample) -> Result<SampleVars> {
        let dims = &self.dims;
        if sample.history.len() != dims.history_len {
            return Err(Error::Validation(format!(
                "history has {} items, model expects {}",
                sample.history.len(),
                dims.history_len
            )));
        }
        if sample.aux.len() != dims.aux_dim {
            return Err(Error::Validation(format!(
                "aux vector has {} entries, model expects {}",
                sample.aux.len(),
                dims.aux_dim
            )));
        }

        let e_i0 = self.embed_item(tape, &self.target_embedder, &sample.target)?;

        let mut hist_embeds = Vec::with_capacity(sample.history.len());
        for item in &sample.history {
            hist_embeds.push(self.embed_item(tape, &self.history_embedder, item)?);
        }
        let hidden = self.gru_forward(tape, &hist_embeds)?;

        let rel: Option<Vec<Var>> = if dims.time_aware {
            let mut rel = Vec::with_capacity(sample.history.len());
            for item in &sample.history {
                let enc =
                    relative_time_encoding(sample.target.time.t_a, item.time.t_a, dims.embed_dim)?;
                rel.push(tape.input(enc));
            }
            Some(rel)
        } else {
            None
        };

        let mask: Option<Vec<bool>> = (sample.n_padded > 0)
            .then(|| (0..sample.history.len()).map(|l| l >= sample.n_padded).collect());

        let (e_h, attn) = self.attention_pool(
            tape,
            &hidden,
            e_i0,
            rel.as_deref(),
            mask.as_deref(),
        )?;

        let aux_in = tape.input_vector(sample.aux.clone());
        let aux_pre = tape.affine(&self.params, self.aux_w, Some(self.aux_b), aux_in)?;
        let e_a = tape.tanh(aux_pre);

        let e_s = tape.concat(&[e_h, e_i0, e_a]);
        Ok(SampleVars { e_h, e_i0, e_a, e_s, attn })
    }

    /// Linear score head over a sample embedding.
    pub fn score(&self, tape: &mut Tape, e_s: Var) -> Result<Var> {
        tape.affine(&self.params, self.score_w, Some(self.score_b), e_s)
    }

    /// Forward-only convenience: the scalar score of one sample.
    pub fn score_sample(&self, sample: &Sample) -> Result<f64> {
        let mut tape = Tape::forward_only();
        let vars = self.embed_sample(&mut tape, sample)?;
        let f = self.score(&mut tape, vars.e_s)?;
        tape.scalar(f)
    }
}

fn name(prefix: &str, part: &str) -> String {
    format!("{prefix}.{part}")
}

/// Central finite differences over every model parameter for an arbitrary
/// scalar forward built from the model; returns the max relative error.
pub fn model_gradient_check<F>(model: &mut ModelParams, h: f64, forward: F) -> Result<f64>
where
    F: Fn(&ModelParams, &mut Tape) -> Result<Var>,
{
    if !(1e-7..=1e-4).contains(&h) {
        return Err(Error::Contract(format!(
            "finite-difference step {h:e} outside [1e-7, 1e-4]"
        )));
    }
    model.params.zero_grads();
    let mut tape = Tape::new();
    let root = forward(model, &mut tape)?;
    if !tape.value(root).is_scalar() {
        return Err(Error::Contract("gradient check needs a scalar forward".into()));
    }
    tape.backward(root, &mut model.params)?;
    let analytic = model.params.flat_grads();

    let mut max_rel = 0.0f64;
    for i in 0..model.params.flat_len() {
        let theta = model.params.get_flat(i);
        let mut eval = |value: f64| -> Result<f64> {
            model.params.set_flat(i, value);
            let mut tape = Tape::forward_only();
            let root = forward(model, &mut tape)?;
            tape.scalar(root)
        };
        let f_plus = eval(theta + h)?;
        let f_minus = eval(theta - h)?;
        model.params.set_flat(i, theta);
        let cd = (f_plus - f_minus) / (2.0 * h);
        let denom = analytic[i].abs().max(cd.abs()).max(1e-12);
        max_rel = max_rel.max((analytic[i] - cd).abs() / denom);
    }
    model.params.zero_grads();
    Ok(max_rel)
}

/// Finite-difference check of the scalar `score(embed_sample(sample))`.
pub fn score_gradient_check(model: &mut ModelParams, sample: &Sample, h: f64) -> Result<f64> {
    model_gradient_check(model, h, |m, tape| {
        let vars = m.embed_sample(tape, sample)?;
        m.score(tape, vars.e_s)
    })
}

/// Sinusoidal encoding of the gap between the exposure time `t0` and a
/// historical click `tl`, in raw seconds: pair `j` (1-based) holds
/// `sin(dt / 10000^(2j/d))` and `cos` of the same argument.
pub fn relative_time_encoding(t0: i64, tl: i64, d: usize) -> Result<Tensor> {
    if d == 0 || d % 2 != 0 {
        return Err(Error::Config(format!("encoding dim must be positive and even, got {d}")));
    }
    if t0 < tl {
        return Err(Error::Validation(format!(
            "history click at {tl} is after the exposure at {t0}"
        )));
    }
    let dt = (t0 - tl) as f64;
    let mut out = vec![0.0; d];
    for pair in 0..d / 2 {
        let exponent = 2.0 * (pair as f64 + 1.0) / d as f64;
        let arg = dt / 10000f64.powf(exponent);
        out[2 * pair] = arg.sin();
        out[2 * pair + 1] = arg.cos();
    }
    Tensor::new(vec![d], out)
}

/// Negated log-likelihood of Bernoulli clicks under sigmoid scores, summed
/// over the batch; sigmoids are clamped to `[1e-12, 1 - 1e-12]` before logs.
pub fn pointwise_loss(tape: &mut Tape, scored: &[(Var, bool)]) -> Result<Var> {
    if scored.is_empty() {
        return Err(Error::Contract("pointwise loss over an empty batch".into()));
    }
    let mut terms = Vec::with_capacity(scored.len());
    for &(f, label) in scored {
        let s = tape.sigmoid(f);
        let sc = tape.clamp(s, 1e-12, 1.0 - 1e-12);
        let p = if label { sc } else { tape.scale_shift(sc, -1.0, 1.0) };
        terms.push(tape.log(p));
    }
    let stacked = tape.stack_scalars(&terms)?;
    let ll = tape.sum(stacked);
    Ok(tape.scale_shift(ll, -1.0, 0.0))
}

/// Marginal hinge `max(0, -f_pos + f_neg + gamma)`.
pub fn pairwise_hinge(tape: &mut Tape, f_pos: Var, f_neg: Var, gamma: f64) -> Result<Var> {
    if gamma <= 0.0 {
        return Err(Error::Config(format!("hinge margin must be positive, got {gamma}")));
    }
    let diff = tape.sub(f_neg, f_pos)?;
    let shifted = tape.scale_shift(diff, 1.0, gamma);
    Ok(tape.relu(shifted))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ItemRecord;
    use crate::time::decompose_timestamp;

    pub(crate) fn toy_dims() -> ModelDims {
        ModelDims {
            embed_dim: 16,
            hidden_dim: 8,
            attn_dim: 8,
            history_len: 4,
            aux_dim: 3,
            n_categories: 6,
            time_aware: true,
        }
    }

    pub(crate) fn toy_sample(seed: u64, dims: &ModelDims) -> Sample {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let base = 1_600_000_000i64;
        let mut item = |t: i64| ItemRecord {
            raw: (0..RAW_DIM).map(|_| rng.random_range(-1.0..1.0)).collect(),
            time: decompose_timestamp(t).unwrap(),
            cid3: rng.random_range(1..dims.n_categories),
        };
        let history: Vec<ItemRecord> =
            (0..dims.history_len).map(|l| item(base - 86_400 * (dims.history_len - l) as i64)).collect();
        let target = item(base);
        Sample {
            history,
            n_padded: 0,
            target,
            aux: (0..dims.aux_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            label: true,
            user: Some(1),
        }
    }

    #[test]
    fn relative_time_encoding_matches_the_scalar_oracle() {
        let enc = relative_time_encoding(10_000, 0, 2).unwrap();
        assert!((enc.data()[0] - 1f64.sin()).abs() < 1e-12);
        assert!((enc.data()[1] - 1f64.cos()).abs() < 1e-12);
        assert!((enc.data()[0] - 0.841470985).abs() < 1e-9);
        assert!((enc.data()[1] - 0.540302306).abs() < 1e-9);
    }

    #[test]
    fn relative_time_encoding_zero_gap_alternates() {
        let enc = relative_time_encoding(500, 500, 6).unwrap();
        assert_eq!(enc.data(), &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn relative_time_encoding_pairs_sit_on_the_unit_circle() {
        let enc = relative_time_encoding(1_700_000_000, 1_600_000_123, 10).unwrap();
        for pair in enc.data().chunks(2) {
            assert!((pair[0] * pair[0] + pair[1] * pair[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn relative_time_encoding_rejects_future_history() {
        assert!(matches!(
            relative_time_encoding(10, 20, 4),
            Err(Error::Validation(_))
        ));
        assert!(matches!(relative_time_encoding(10, 5, 3), Err(Error::Config(_))));
    }

    #[test]
    fn sample_embedding_has_the_documented_width() {
        let dims = ModelDims {
            embed_dim: 90,
            hidden_dim: 90,
            attn_dim: 64,
            history_len: 10,
            aux_dim: 4,
            n_categories: 12,
            time_aware: true,
        };
        let model = ModelParams::init(dims.clone(), 11).unwrap();
        let mut wide = toy_sample(3, &dims);
        wide.history = (0..10)
            .map(|l| {
                let mut it = wide.history[l % wide.history.len()].clone();
                it.time = decompose_timestamp(1_600_000_000 - 3600 * (10 - l) as i64).unwrap();
                it
            })
            .collect();
        let mut tape = Tape::forward_only();
        let vars = model.embed_sample(&mut tape, &wide).unwrap();
        assert_eq!(tape.value(vars.e_s).len(), 90 + 90 + 8);
        assert_eq!(tape.value(vars.e_s).len(), dims.sample_dim());
    }

    #[test]
    fn embedding_is_pure() {
        let dims = toy_dims();
        let model = ModelParams::init(dims.clone(), 5).unwrap();
        let s = toy_sample(9, &dims);
        let a = model.score_sample(&s).unwrap();
        let b = model.score_sample(&s).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn independent_seeds_disagree() {
        let dims = toy_dims();
        let a = ModelParams::init(dims.clone(), 5).unwrap();
        let b = ModelParams::init(dims.clone(), 6).unwrap();
        let s = toy_sample(9, &dims);
        assert_ne!(a.score_sample(&s).unwrap(), b.score_sample(&s).unwrap());
    }

    #[test]
    fn tanh_output_bounds_item_embedding() {
        let dims = toy_dims();
        let model = ModelParams::init(dims.clone(), 8).unwrap();
        let s = toy_sample(4, &dims);
        let mut tape = Tape::forward_only();
        let e = model.embed_item(&mut tape, &model.target_embedder, &s.target).unwrap();
        assert!(tape.value(e).data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn singleton_attention_weight_is_one() {
        let mut dims = toy_dims();
        dims.history_len = 1;
        let model = ModelParams::init(dims.clone(), 8).unwrap();
        let mut s = toy_sample(4, &dims);
        s.history.truncate(1);
        let mut tape = Tape::forward_only();
        let vars = model.embed_sample(&mut tape, &s).unwrap();
        assert_eq!(tape.value(vars.attn).data(), &[1.0]);
        let e = model
            .embed_item(&mut tape, &model.history_embedder, &s.history[0])
            .unwrap();
        assert!(model.gru_forward(&mut tape, &[e]).is_ok());
    }

    #[test]
    fn padded_positions_get_zero_weight() {
        let dims = toy_dims();
        let model = ModelParams::init(dims.clone(), 8).unwrap();
        let mut s = toy_sample(4, &dims);
        s.n_padded = 2;
        for l in 0..2 {
            s.history[l] = ItemRecord::null_at(s.target.time);
        }
        let mut tape = Tape::forward_only();
        let vars = model.embed_sample(&mut tape, &s).unwrap();
        let a = tape.value(vars.attn).data();
        assert_eq!(a[0], 0.0);
        assert_eq!(a[1], 0.0);
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gru_causality_ignores_the_future() {
        let dims = toy_dims();
        let model = ModelParams::init(dims.clone(), 8).unwrap();
        let s = toy_sample(4, &dims);
        let mut tape = Tape::forward_only();
        let e1 = model.embed_item(&mut tape, &model.history_embedder, &s.history[0]).unwrap();
        let e2 = model.embed_item(&mut tape, &model.history_embedder, &s.history[1]).unwrap();
        let one = model.gru_forward(&mut tape, &[e1]).unwrap();
        let two = model.gru_forward(&mut tape, &[e1, e2]).unwrap();
        assert_eq!(tape.value(one[0]).data(), tape.value(two[0]).data());
    }

    #[test]
    fn score_head_is_linear() {
        let dims = toy_dims();
        let model = ModelParams::init(dims.clone(), 8).unwrap();
        let mut tape = Tape::forward_only();
        let n = dims.sample_dim();
        let e1: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let e2: Vec<f64> = (0..n).map(|i| (i as f64 * 0.11).cos()).collect();
        let sum: Vec<f64> = e1.iter().zip(&e2).map(|(a, b)| a + b).collect();
        let f = |tape: &mut Tape, v: Vec<f64>| {
            let x = tape.input_vector(v);
            let s = model.score(tape, x).unwrap();
            tape.scalar(s).unwrap()
        };
        let (f1, f2, f12, f0) = (
            f(&mut tape, e1),
            f(&mut tape, e2),
            f(&mut tape, sum),
            f(&mut tape, vec![0.0; n]),
        );
        assert!((f1 + f2 - f0 - f12).abs() < 1e-9);
    }

    #[test]
    fn pointwise_loss_balanced_pair_at_zero_scores() {
        let mut tape = Tape::new();
        let f1 = tape.input_scalar(0.0);
        let f2 = tape.input_scalar(0.0);
        let loss = pointwise_loss(&mut tape, &[(f1, true), (f2, false)]).unwrap();
        assert!((tape.scalar(loss).unwrap() - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn pointwise_gradient_on_a_positive_is_sigma_minus_one() {
        let mut ps = ParamSet::new();
        for f_val in [-1.3, 0.0, 2.4] {
            let mut tape = Tape::new();
            let f = tape.input_scalar(f_val);
            let loss = pointwise_loss(&mut tape, &[(f, true)]).unwrap();
            tape.backward(loss, &mut ps).unwrap();
            let g = tape.grad(f).unwrap().data()[0];
            let sig = crate::tape::sigmoid(f_val);
            assert!((g - (sig - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn hinge_cases() {
        let mut tape = Tape::new();
        let fp = tape.input_scalar(2.0);
        let fn_ = tape.input_scalar(0.5);
        let l = pairwise_hinge(&mut tape, fp, fn_, 1.0).unwrap();
        assert_eq!(tape.scalar(l).unwrap(), 0.0);

        let fp = tape.input_scalar(0.7);
        let fn_ = tape.input_scalar(0.7);
        let l = pairwise_hinge(&mut tape, fp, fn_, 1.0).unwrap();
        assert_eq!(tape.scalar(l).unwrap(), 1.0);

        assert!(pairwise_hinge(&mut tape, fp, fn_, 0.0).is_err());
    }

    #[test]
    fn hinge_subgradients() {
        let mut ps = ParamSet::new();
        // strictly inactive: gap beyond the margin
        let mut tape = Tape::new();
        let fp = tape.input_scalar(3.0);
        let fn_ = tape.input_scalar(0.0);
        let l = pairwise_hinge(&mut tape, fp, fn_, 1.0).unwrap();
        tape.backward(l, &mut ps).unwrap();
        assert!(tape.grad(fp).is_none() || tape.grad(fp).unwrap().data()[0] == 0.0);

        // active: (-1, +1) on (f_pos, f_neg)
        let mut tape = Tape::new();
        let fp = tape.input_scalar(0.2);
        let fn_ = tape.input_scalar(0.1);
        let l = pairwise_hinge(&mut tape, fp, fn_, 1.0).unwrap();
        tape.backward(l, &mut ps).unwrap();
        assert_eq!(tape.grad(fp).unwrap().data()[0], -1.0);
        assert_eq!(tape.grad(fn_).unwrap().data()[0], 1.0);
    }
}
