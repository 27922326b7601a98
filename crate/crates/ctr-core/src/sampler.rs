//! Negative-sample selection: the regularized adversarial (rGAN) strategy
//! with its reward ablations, plus the uniform, 1:5 under-sampling,
//! user-fixed, pointwise and nonpositive-swap baselines.

mod train;

pub use train::{adversarial_train, evaluate_auc, tau_diagnostic, train, StepRow, TrainConfig, TrainOutput};

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::data::{Dataset, ItemRecord, Sample};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::rng::{draw_index, draw_without_replacement, sample_categorical};
use crate::tape::{Tape, Var};

/// Which strategy picks the negative for each positive during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    /// Uniform draw over the observed negatives.
    Uniform,
    /// Keep all positives and a uniform 1:5 negative subset, pointwise loss.
    UnderSample1to5,
    /// Uniform among the same user's negatives, global uniform fallback.
    UserFixed,
    /// Pointwise training over every available sample.
    Pointwise,
    /// Regularized adversarial sampling over observed negatives.
    Rgan,
    /// rGAN with the distance penalty removed (reward = score only).
    RganScoreOnly,
    /// rGAN with the score removed (reward = negative penalty only).
    RganPenaltyOnly,
    /// Adversarial sampling over nonpositive target swaps (the reward's
    /// "without negatives" branch).
    IrganStyle,
}

impl SamplerKind {
    pub fn is_adversarial(self) -> bool {
        matches!(
            self,
            SamplerKind::Rgan
                | SamplerKind::RganScoreOnly
                | SamplerKind::RganPenaltyOnly
                | SamplerKind::IrganStyle
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SamplerKind::Uniform => "uniform",
            SamplerKind::UnderSample1to5 => "under-sample-1to5",
            SamplerKind::UserFixed => "user-fixed",
            SamplerKind::Pointwise => "pointwise",
            SamplerKind::Rgan => "rgan",
            SamplerKind::RganScoreOnly => "rgan-score-only",
            SamplerKind::RganPenaltyOnly => "rgan-penalty-only",
            SamplerKind::IrganStyle => "irgan-style",
        }
    }
}

impl core::str::FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(SamplerKind::Uniform),
            "under-sample-1to5" => Ok(SamplerKind::UnderSample1to5),
            "user-fixed" => Ok(SamplerKind::UserFixed),
            "pointwise" => Ok(SamplerKind::Pointwise),
            "rgan" => Ok(SamplerKind::Rgan),
            "rgan-score-only" => Ok(SamplerKind::RganScoreOnly),
            "rgan-penalty-only" => Ok(SamplerKind::RganPenaltyOnly),
            "irgan-style" => Ok(SamplerKind::IrganStyle),
            other => Err(Error::Config(format!("unknown sampler kind {other:?}"))),
        }
    }
}

impl core::fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether rewards see observed negatives (full penalty) or nonpositive
/// swaps sharing the positive's user part (item penalty only).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardMode {
    WithNegatives,
    WithoutNegatives,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardConfig {
    pub lambda_i: f64,
    pub lambda_h: f64,
    pub mode: RewardMode,
    /// Dropped by the penalty-only ablation.
    pub include_score: bool,
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_i < 0.0 || self.lambda_h < 0.0 {
            return Err(Error::Config("penalty coefficients must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Generator side of the adversarial sampler: an independent network of the
/// same structure, the annealed temperature and the REINFORCE baseline.
#[derive(Debug, Clone)]
pub struct GeneratorState {
    pub model: ModelParams,
    pub temperature: f64,
    pub t_decay: f64,
    pub baseline: f64,
}

impl GeneratorState {
    pub fn new(model: ModelParams, t0: f64, t_decay: f64) -> Result<Self> {
        if t0 <= 0.0 {
            return Err(Error::Config(format!("temperature must be positive, got {t0}")));
        }
        if !(0.0 < t_decay && t_decay <= 1.0) {
            return Err(Error::Config(format!("temperature decay {t_decay} outside (0, 1]")));
        }
        Ok(Self { model, temperature: t0, t_decay, baseline: 0.0 })
    }

    pub fn anneal(&mut self) {
        self.temperature *= self.t_decay;
    }
}

/// One negative uniformly at random; index into the pool.
pub fn uniform_sample<R: Rng>(pool_len: usize, rng: &mut R) -> Result<usize> {
    if pool_len == 0 {
        return Err(Error::Validation("uniform sampling from an empty negative pool".into()));
    }
    Ok(draw_index(rng, pool_len))
}

/// All positives plus a uniform `ratio`-fold subset of negatives. When there
/// are not enough negatives the dataset is returned whole and the flag says
/// so.
pub fn under_sample_build(ds: &Dataset, ratio: usize, rng: &mut ChaCha12Rng) -> (Dataset, bool) {
    let want = ds.positives.len() * ratio;
    if ds.negatives.len() <= want {
        return (
            Dataset {
                positives: ds.positives.clone(),
                negatives: ds.negatives.clone(),
                n_categories: ds.n_categories,
                truth: None,
            },
            false,
        );
    }
    let keep = draw_without_replacement(rng, ds.negatives.len(), want);
    let negatives = keep.iter().map(|&i| ds.negatives[i].clone()).collect();
    (
        Dataset {
            positives: ds.positives.clone(),
            negatives,
            n_categories: ds.n_categories,
            truth: None,
        },
        true,
    )
}

/// Negatives grouped by user identity, for user-fixed sampling. Samples
/// without a user id are reachable only through the uniform fallback.
pub struct UserIndex {
    by_user: BTreeMap<u64, Vec<usize>>,
}

impl UserIndex {
    pub fn build(negatives: &[Sample]) -> Self {
        let mut by_user: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (i, s) in negatives.iter().enumerate() {
            if let Some(u) = s.user {
                by_user.entry(u).or_default().push(i);
            }
        }
        Self { by_user }
    }

    /// Uniform among the positive's own negatives; global uniform otherwise.
    pub fn draw<R: Rng>(&self, positive: &Sample, pool_len: usize, rng: &mut R) -> Result<usize> {
        if let Some(user) = positive.user {
            if let Some(own) = self.by_user.get(&user) {
                if !own.is_empty() {
                    return Ok(own[draw_index(rng, own.len())]);
                }
            }
        }
        uniform_sample(pool_len, rng)
    }
}

/// Candidate negatives for one positive: `C` distinct indices drawn
/// uniformly from the observed negatives (all of them if fewer than `C`).
pub fn draw_candidates<R: Rng>(pool_len: usize, c: usize, rng: &mut R) -> Result<Vec<usize>> {
    if pool_len == 0 {
        return Err(Error::Validation("candidate draw from an empty negative pool".into()));
    }
    if c == 0 {
        return Err(Error::Config("candidate size must be >= 1".into()));
    }
    Ok(draw_without_replacement(rng, pool_len, c))
}

/// Distinct items observed as targets, for building nonpositive swaps.
pub struct ItemPool {
    items: Vec<ItemRecord>,
}

impl ItemPool {
    pub fn build(ds: &Dataset) -> Self {
        let mut seen: BTreeMap<(usize, Vec<u64>), usize> = BTreeMap::new();
        let mut items = Vec::new();
        for s in ds.positives.iter().chain(&ds.negatives) {
            let key = (s.target.cid3, s.target.raw.iter().map(|v| v.to_bits()).collect());
            seen.entry(key).or_insert_with(|| {
                items.push(s.target.clone());
                items.len() - 1
            });
        }
        Self { items }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Swap the target of `s` for an item the user has not interacted with
    /// (not the target, not in the history), keeping the user part and the
    /// exposure time fixed.
    pub fn swap_target<R: Rng>(&self, s: &Sample, rng: &mut R) -> Sample {
        let same = |a: &ItemRecord, b: &ItemRecord| a.cid3 == b.cid3 && a.raw == b.raw;
        let mut pick = self.items[draw_index(rng, self.items.len())].clone();
        for _ in 0..8 {
            let interacted =
                same(&pick, &s.target) || s.history.iter().any(|h| same(&pick, h));
            if !interacted {
                break;
            }
            pick = self.items[draw_index(rng, self.items.len())].clone();
        }
        let mut out = s.clone();
        out.target = ItemRecord { raw: pick.raw, time: s.target.time, cid3: pick.cid3 };
        out.label = false;
        out
    }
}

/// Tape handles for one embedded candidate inside the generator graph.
pub struct PolicyGraph {
    pub logits: Var,
    pub probs: Vec<f64>,
}

/// Build the sampling-policy graph over one positive and its candidates on
/// the given tape: logit_k = e(s'_k).e(s) / (T * ||e(s'_k)||), softmax over
/// the candidate set. Zero-norm candidate embeddings contribute logit 0.
pub fn policy_graph(
    tape: &mut Tape,
    generator: &ModelParams,
    positive: &Sample,
    candidates: &[&Sample],
    temperature: f64,
) -> Result<PolicyGraph> {
    if temperature <= 0.0 {
        return Err(Error::Config(format!(
            "policy temperature must be positive, got {temperature}"
        )));
    }
    if candidates.is_empty() {
        return Err(Error::Contract("policy over an empty candidate set".into()));
    }
    let pos = generator.embed_sample(tape, positive)?;
    let mut logit_vars = Vec::with_capacity(candidates.len());
    for cand in candidates {
        let c = generator.embed_sample(tape, cand)?;
        let num = tape.dot(c.e_s, pos.e_s)?;
        let norm = tape.l2_norm(c.e_s);
        let scaled = tape.scale_shift(norm, temperature, 0.0);
        logit_vars.push(tape.div_guard(num, scaled)?);
    }
    let logits = tape.stack_scalars(&logit_vars)?;
    let sm = tape.softmax(logits)?;
    let probs = tape.value(sm).data().to_vec();
    Ok(PolicyGraph { logits, probs })
}

/// Forward-only policy probabilities over the candidate set.
pub fn policy_distribution(
    generator: &ModelParams,
    positive: &Sample,
    candidates: &[&Sample],
    temperature: f64,
) -> Result<Vec<f64>> {
    let mut tape = Tape::forward_only();
    Ok(policy_graph(&mut tape, generator, positive, candidates, temperature)?.probs)
}

/// Draw one candidate index according to the policy. A single candidate is
/// picked deterministically without consuming randomness, so with `C = 1`
/// the draw stream coincides with the uniform sampler's.
pub fn policy_select<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    sample_categorical(rng, probs)
}

/// Discriminator-space embeddings of one sample, as plain values.
#[derive(Debug, Clone)]
pub struct EmbeddedParts {
    pub item: Vec<f64>,
    pub history: Vec<f64>,
    pub score: f64,
}

pub fn embed_parts(model: &ModelParams, sample: &Sample) -> Result<EmbeddedParts> {
    let mut tape = Tape::forward_only();
    let vars = model.embed_sample(&mut tape, sample)?;
    let f = model.score(&mut tape, vars.e_s)?;
    Ok(EmbeddedParts {
        item: tape.value(vars.e_i0).data().to_vec(),
        history: tape.value(vars.e_h).data().to_vec(),
        score: tape.scalar(f)?,
    })
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Distance penalty of Eq.-style regularization, in discriminator space:
/// `lambda_i ||e_i(s) - e_i(s')|| + lambda_h ||e_h(s) - e_h(s')||`.
pub fn compute_penalty(cfg: &RewardConfig, pos: &EmbeddedParts, neg: &EmbeddedParts) -> f64 {
    let item = euclidean(&pos.item, &neg.item);
    match cfg.mode {
        RewardMode::WithNegatives => {
            cfg.lambda_i * item + cfg.lambda_h * euclidean(&pos.history, &neg.history)
        }
        RewardMode::WithoutNegatives => cfg.lambda_i * item,
    }
}

/// Reward for one selected negative: the discriminator score minus the
/// distance penalty (mode-dependent), with the ablation switches applied.
pub fn compute_reward(cfg: &RewardConfig, pos: &EmbeddedParts, neg: &EmbeddedParts) -> f64 {
    let score = if cfg.include_score { neg.score } else { 0.0 };
    score - compute_penalty(cfg, pos, neg)
}

/// Mean reward of the mini-batch; becomes the next step's baseline.
pub fn update_baseline(rewards: &[f64]) -> Result<f64> {
    if rewards.is_empty() {
        return Err(Error::Contract("baseline over an empty reward batch".into()));
    }
    Ok(rewards.iter().sum::<f64>() / rewards.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelDims;
    use crate::rng::stream;

    fn toy_dims() -> ModelDims {
        ModelDims {
            embed_dim: 8,
            hidden_dim: 6,
            attn_dim: 4,
            history_len: 3,
            aux_dim: 2,
            n_categories: 5,
            time_aware: true,
        }
    }

    fn toy_sample(seed: u64) -> Sample {
        use crate::data::RAW_DIM;
        use crate::time::decompose_timestamp;
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let dims = toy_dims();
        let base = 1_600_000_000i64;
        let mut item = |t: i64| ItemRecord {
            raw: (0..RAW_DIM).map(|_| rng.random_range(-1.0..1.0)).collect(),
            time: decompose_timestamp(t).unwrap(),
            cid3: rng.random_range(1..dims.n_categories),
        };
        Sample {
            history: (0..dims.history_len)
                .map(|l| item(base - 7200 * (dims.history_len - l) as i64))
                .collect(),
            n_padded: 0,
            target: item(base),
            aux: (0..dims.aux_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            label: false,
            user: Some(seed % 7),
        }
    }

    #[test]
    fn uniform_sample_singleton_and_empty() {
        let mut rng = stream(1, "t");
        assert_eq!(uniform_sample(1, &mut rng).unwrap(), 0);
        assert!(uniform_sample(0, &mut rng).is_err());
    }

    #[test]
    fn under_sample_keeps_ratio_and_subset() {
        let mut ds = Dataset::empty(5);
        for i in 0..20 {
            let mut s = toy_sample(i);
            s.label = true;
            ds.positives.push(s);
        }
        for i in 0..500 {
            ds.negatives.push(toy_sample(1000 + i));
        }
        let mut rng = stream(2, "under");
        let (reduced, did) = under_sample_build(&ds, 5, &mut rng);
        assert!(did);
        assert_eq!(reduced.positives.len(), 20);
        assert_eq!(reduced.negatives.len(), 100);
        for n in &reduced.negatives {
            assert!(ds.negatives.contains(n));
        }
        // determinism
        let mut rng2 = stream(2, "under");
        let (again, _) = under_sample_build(&ds, 5, &mut rng2);
        assert_eq!(reduced, again);

        let mut tiny = Dataset::empty(5);
        tiny.positives.push(toy_sample(1));
        tiny.negatives.push(toy_sample(2));
        let (kept, did) = under_sample_build(&tiny, 5, &mut rng);
        assert!(!did);
        assert_eq!(kept.negatives.len(), 1);
    }

    #[test]
    fn user_fixed_prefers_own_negatives_and_falls_back() {
        let mut negatives = Vec::new();
        for i in 0..30 {
            let mut s = toy_sample(i);
            s.user = Some(if i == 17 { 99 } else { 1 });
            negatives.push(s);
        }
        let index = UserIndex::build(&negatives);
        let mut rng = stream(3, "uf");

        let mut pos = toy_sample(40);
        pos.user = Some(99);
        for _ in 0..10 {
            assert_eq!(index.draw(&pos, negatives.len(), &mut rng).unwrap(), 17);
        }
        pos.user = Some(777); // nobody: global fallback
        let idx = index.draw(&pos, negatives.len(), &mut rng).unwrap();
        assert!(idx < negatives.len());
        assert!(!negatives[idx].label);
    }

    #[test]
    fn policy_is_a_distribution_and_symmetric() {
        let g = ModelParams::init(toy_dims(), 5).unwrap();
        let pos = toy_sample(1);
        let c1 = toy_sample(2);
        let c2 = toy_sample(3);
        let cands = [&c1, &c2, &c1];
        let p = policy_distribution(&g, &pos, &cands, 2.0).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(p.iter().all(|&x| x >= 0.0));
        // identical candidates share probability
        assert!((p[0] - p[2]).abs() < 1e-12);

        let single = policy_distribution(&g, &pos, &[&c1], 2.0).unwrap();
        assert_eq!(single, alloc::vec![1.0]);
    }

    #[test]
    fn high_temperature_flattens_the_policy() {
        let g = ModelParams::init(toy_dims(), 6).unwrap();
        let pos = toy_sample(1);
        let cands: Vec<Sample> = (2..8).map(toy_sample).collect();
        let refs: Vec<&Sample> = cands.iter().collect();
        let p = policy_distribution(&g, &pos, &refs, 1e6).unwrap();
        let c = refs.len() as f64;
        for &pk in &p {
            assert!((pk - 1.0 / c).abs() < 1e-4, "{pk} far from uniform at high T");
        }
    }

    #[test]
    fn temperature_orders_kl_to_uniform() {
        let g = ModelParams::init(toy_dims(), 7).unwrap();
        let pos = toy_sample(1);
        let cands: Vec<Sample> = (2..7).map(toy_sample).collect();
        let refs: Vec<&Sample> = cands.iter().collect();
        let kl = |p: &[f64]| -> f64 {
            let u = 1.0 / p.len() as f64;
            p.iter().map(|&x| if x > 0.0 { x * (x / u).ln() } else { 0.0 }).sum()
        };
        let mut prev = f64::INFINITY;
        for t in [1.0, 10.0, 100.0, 1e6] {
            let p = policy_distribution(&g, &pos, &refs, t).unwrap();
            let k = kl(&p);
            assert!(k <= prev + 1e-12, "KL not decreasing in T");
            prev = k;
        }
        assert!(prev < 1e-7);
    }

    #[test]
    fn reward_modes_and_ablations() {
        let d = ModelParams::init(toy_dims(), 8).unwrap();
        let pos = embed_parts(&d, &toy_sample(1)).unwrap();
        let neg = embed_parts(&d, &toy_sample(2)).unwrap();

        let full = RewardConfig {
            lambda_i: 3.0,
            lambda_h: 5.0,
            mode: RewardMode::WithNegatives,
            include_score: true,
        };
        let r_full = compute_reward(&full, &pos, &neg);
        assert!((r_full - (neg.score - compute_penalty(&full, &pos, &neg))).abs() < 1e-12);

        // coincident samples: zero penalty, reward is the raw score
        let r_self = compute_reward(&full, &pos, &pos);
        assert!((r_self - pos.score).abs() < 1e-12);

        // zero coefficients degenerate to score-only
        let score_only = RewardConfig { lambda_i: 0.0, lambda_h: 0.0, ..full };
        assert!((compute_reward(&score_only, &pos, &neg) - neg.score).abs() < 1e-12);
        assert_eq!(compute_penalty(&score_only, &pos, &neg), 0.0);

        // doubling the coefficients doubles the penalty
        let doubled = RewardConfig { lambda_i: 6.0, lambda_h: 10.0, ..full };
        assert!(
            (compute_penalty(&doubled, &pos, &neg) - 2.0 * compute_penalty(&full, &pos, &neg))
                .abs()
                < 1e-12
        );

        // penalty-only drops the score term
        let pen_only = RewardConfig { include_score: false, ..full };
        assert!(
            (compute_reward(&pen_only, &pos, &neg) + compute_penalty(&full, &pos, &neg)).abs()
                < 1e-12
        );

        // without-negatives mode never sees the history penalty
        let without = RewardConfig { mode: RewardMode::WithoutNegatives, ..full };
        let expect = neg.score - 3.0 * euclidean(&pos.item, &neg.item);
        assert!((compute_reward(&without, &pos, &neg) - expect).abs() < 1e-12);
    }

    #[test]
    fn baseline_is_the_batch_mean() {
        assert_eq!(update_baseline(&[2.0]).unwrap(), 2.0);
        assert_eq!(update_baseline(&[1.0, 3.0]).unwrap(), 2.0);
        let shifted: Vec<f64> = [1.0, 3.0].iter().map(|r| r + 10.0).collect();
        assert_eq!(update_baseline(&shifted).unwrap(), 12.0);
        assert!(update_baseline(&[]).is_err());
    }

    #[test]
    fn item_pool_dedups_and_swaps_keep_the_user_part() {
        let mut ds = Dataset::empty(5);
        for i in 0..12 {
            ds.negatives.push(toy_sample(i));
        }
        // duplicate targets should collapse
        let dup = ds.negatives[0].clone();
        ds.negatives.push(dup);
        let pool = ItemPool::build(&ds);
        assert_eq!(pool.len(), 12);

        let mut rng = stream(4, "swap");
        let s = toy_sample(100);
        let swapped = pool.swap_target(&s, &mut rng);
        assert_eq!(swapped.history, s.history);
        assert_eq!(swapped.aux, s.aux);
        assert_eq!(swapped.user, s.user);
        assert_eq!(swapped.target.time, s.target.time);
        assert!(!swapped.label);
        assert!(swapped.target.raw != s.target.raw);
    }
}
