//! Synthetic CTR datasets with planted temporal structure.
//!
//! Each user carries a drifting 50-d interest vector and a per-dataset
//! global periodic click-propensity profile over hour-of-day and
//! day-of-week. Item raw vectors cluster per category. A sample's click
//! logit combines interest-item affinity, a recency-weighted match between
//! the history and the target, the periodic profile at exposure time and a
//! per-user bias (exposed through the aux features); a global offset is
//! solved so the mean click probability hits the target CTR. Ground-truth
//! logits (full and with the periodic part removed) ride along for oracle
//! tests.
//!
//! Every sample is generated from its own `(seed, index)`-keyed stream, so
//! generation order is irrelevant and labels are a pure function of
//! `(user, item, time, seed)` plus the dataset-wide offset.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::data::{Dataset, ItemRecord, Sample, TruthSidecar, RAW_DIM};
use crate::error::{Error, Result};
use crate::rng::{stream, subseed};
use crate::tape::sigmoid;
use crate::time::decompose_timestamp;

/// Generation epoch: 2019-01-01T00:00:00Z.
pub const HORIZON_START: i64 = 1_546_300_800;

/// Width of the synthetic auxiliary feature vector.
pub const SYNTH_AUX_DIM: usize = 4;

const INTEREST_CANDIDATES: usize = 4;
const RECENCY_TAU_SECS: f64 = 2.0 * 86_400.0;
const AFFINITY_SCALE: f64 = 1.2;
const MATCH_SCALE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_categories: usize,
    pub ctr: f64,
    pub horizon_days: u32,
    pub history_len: usize,
    pub periodic_amplitude: f64,
    pub drift_rate: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_users: 200,
            n_items: 1000,
            n_categories: 20,
            ctr: 0.012,
            horizon_days: 28,
            history_len: 10,
            periodic_amplitude: 1.0,
            drift_rate: 0.2,
            n_samples: 20_000,
            seed: 1,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 || self.n_items == 0 || self.n_samples == 0 {
            return Err(Error::Validation("user, item and sample counts must be positive".into()));
        }
        if self.n_categories < 2 {
            return Err(Error::Validation(
                "need at least two categories (index 0 is reserved for padding)".into(),
            ));
        }
        if !(0.0 < self.ctr && self.ctr < 1.0) {
            return Err(Error::Validation(format!("target CTR {} outside (0, 1)", self.ctr)));
        }
        if self.ctr * (self.n_samples as f64) < 1.0 {
            return Err(Error::Validation(format!(
                "infeasible config: ctr {} over {} samples expects under one positive",
                self.ctr, self.n_samples
            )));
        }
        if self.horizon_days == 0 || self.history_len == 0 {
            return Err(Error::Validation("horizon and history length must be positive".into()));
        }
        if self.periodic_amplitude < 0.0 || self.drift_rate < 0.0 {
            return Err(Error::Validation("amplitude and drift must be nonnegative".into()));
        }
        Ok(())
    }

    /// Parse the `key = value` config format (`#` starts a comment).
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw_line) in text.lines().enumerate() {
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Validation(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| {
                Error::Validation(format!("line {}: bad {what} value {value:?}", lineno + 1))
            };
            match key {
                "n_users" => cfg.n_users = value.parse().map_err(|_| bad("n_users"))?,
                "n_items" => cfg.n_items = value.parse().map_err(|_| bad("n_items"))?,
                "n_categories" => {
                    cfg.n_categories = value.parse().map_err(|_| bad("n_categories"))?
                }
                "ctr" => cfg.ctr = value.parse().map_err(|_| bad("ctr"))?,
                "horizon_days" => {
                    cfg.horizon_days = value.parse().map_err(|_| bad("horizon_days"))?
                }
                "L" | "l" => cfg.history_len = value.parse().map_err(|_| bad("L"))?,
                "periodic_amplitude" => {
                    cfg.periodic_amplitude =
                        value.parse().map_err(|_| bad("periodic_amplitude"))?
                }
                "drift_rate" => cfg.drift_rate = value.parse().map_err(|_| bad("drift_rate"))?,
                "n_samples" => cfg.n_samples = value.parse().map_err(|_| bad("n_samples"))?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("seed"))?,
                other => {
                    return Err(Error::Validation(format!(
                        "line {}: unknown key {other:?}",
                        lineno + 1
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn horizon_secs(&self) -> i64 {
        self.horizon_days as i64 * 86_400
    }
}

struct Catalog {
    raws: Vec<Vec<f64>>,
    cids: Vec<usize>,
}

struct UserProfile {
    interest_from: Vec<f64>,
    interest_to: Vec<f64>,
    bias: f64,
    aux: Vec<f64>,
}

fn normal(rng: &mut ChaCha12Rng) -> f64 {
    // Box-Muller on two uniform draws.
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * core::f64::consts::PI * u2).cos()
}

fn unit_vector(rng: &mut ChaCha12Rng, dim: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| normal(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

fn build_catalog(cfg: &SyntheticConfig, seed: u64) -> Catalog {
    let mut rng = stream(seed, "synth_items");
    let n_real_categories = cfg.n_categories - 1;
    let centers: Vec<Vec<f64>> = (0..n_real_categories)
        .map(|_| (0..RAW_DIM).map(|_| 0.8 * normal(&mut rng)).collect())
        .collect();
    let mut raws = Vec::with_capacity(cfg.n_items);
    let mut cids = Vec::with_capacity(cfg.n_items);
    for i in 0..cfg.n_items {
        let c = i % n_real_categories;
        raws.push(
            centers[c]
                .iter()
                .map(|&m| m + 0.6 * normal(&mut rng))
                .collect(),
        );
        cids.push(c + 1);
    }
    Catalog { raws, cids }
}

fn build_users(cfg: &SyntheticConfig, seed: u64) -> Vec<UserProfile> {
    let mut rng = stream(seed, "synth_users");
    (0..cfg.n_users)
        .map(|_| {
            let bias = 0.5 * normal(&mut rng);
            let mut aux = vec![bias];
            for _ in 1..SYNTH_AUX_DIM {
                aux.push(rng.random_range(-1.0..1.0));
            }
            UserProfile {
                interest_from: unit_vector(&mut rng, RAW_DIM),
                interest_to: unit_vector(&mut rng, RAW_DIM),
                bias,
                aux,
            }
        })
        .collect()
}

fn interest_at(user: &UserProfile, cfg: &SyntheticConfig, t: i64) -> Vec<f64> {
    let frac = ((t - HORIZON_START) as f64 / cfg.horizon_secs() as f64).clamp(0.0, 1.0);
    let delta = (cfg.drift_rate * frac).clamp(0.0, 1.0);
    let mut v: Vec<f64> = user
        .interest_from
        .iter()
        .zip(&user.interest_to)
        .map(|(a, b)| (1.0 - delta) * a + delta * b)
        .collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

/// Pick an item near the user's interest: best affinity among a few uniform
/// candidates.
fn interest_draw(
    rng: &mut ChaCha12Rng,
    catalog: &Catalog,
    interest: &[f64],
) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for _ in 0..INTEREST_CANDIDATES {
        let i = rng.random_range(0..catalog.raws.len());
        let s = dot(interest, &catalog.raws[i]);
        if s > best_score {
            best_score = s;
            best = i;
        }
    }
    best
}

fn periodic_term(cfg: &SyntheticConfig, h_star: f64, d_star: f64, t: i64) -> f64 {
    if cfg.periodic_amplitude == 0.0 {
        return 0.0;
    }
    let sig = decompose_timestamp(t).expect("generated times are valid");
    let two_pi = 2.0 * core::f64::consts::PI;
    let hour = two_pi * (sig.t_h as f64 - h_star) / 24.0;
    let day = two_pi * (sig.t_d as f64 - d_star) / 7.0;
    cfg.periodic_amplitude * (hour.cos() + 0.5 * day.cos())
}

struct DraftSample {
    sample: Sample,
    /// Logit before the global offset, with and without the periodic part.
    z_full: f64,
    z_timeblind: f64,
}

/// Generate one dataset. Determinism: the byte-level content depends only on
/// the config (the seed included).
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Dataset> {
    cfg.validate()?;
    let seed = cfg.seed;
    let catalog = build_catalog(cfg, seed);
    let users = build_users(cfg, seed);

    let mut phase_rng = stream(seed, "synth_phase");
    let h_star = phase_rng.random_range(0.0..24.0);
    let d_star = phase_rng.random_range(0.0..7.0);

    let sample_key = subseed(seed, "synth_sample");
    let label_key = subseed(seed, "synth_label");

    let mut drafts = Vec::with_capacity(cfg.n_samples);
    for i in 0..cfg.n_samples {
        use rand::SeedableRng;
        let mut rng =
            ChaCha12Rng::seed_from_u64(sample_key ^ (i as u64).wrapping_mul(0x9e3779b97f4a7c15));

        let user_idx = rng.random_range(0..cfg.n_users);
        let user = &users[user_idx];
        let t0 = HORIZON_START + rng.random_range(0..cfg.horizon_secs());

        // History: L clicks walking back from the exposure, newest last.
        let mut click_times = Vec::with_capacity(cfg.history_len);
        let mut t = t0;
        for _ in 0..cfg.history_len {
            t -= rng.random_range(3_600..2 * 86_400);
            click_times.push(t);
        }
        click_times.reverse();
        let history: Vec<ItemRecord> = click_times
            .iter()
            .map(|&tl| {
                let interest = interest_at(user, cfg, tl);
                let idx = interest_draw(&mut rng, &catalog, &interest);
                Ok(ItemRecord {
                    raw: catalog.raws[idx].clone(),
                    time: decompose_timestamp(tl.max(0))?,
                    cid3: catalog.cids[idx],
                })
            })
            .collect::<Result<_>>()?;

        let interest_now = interest_at(user, cfg, t0);
        let target_idx = if rng.random_range(0.0..1.0) < 0.3 {
            interest_draw(&mut rng, &catalog, &interest_now)
        } else {
            rng.random_range(0..catalog.raws.len())
        };
        let target = ItemRecord {
            raw: catalog.raws[target_idx].clone(),
            time: decompose_timestamp(t0)?,
            cid3: catalog.cids[target_idx],
        };

        let affinity = AFFINITY_SCALE * dot(&interest_now, &target.raw);
        let mut weight_sum = 0.0;
        let mut match_acc = 0.0;
        for item in &history {
            let w = (-((t0 - item.time.t_a) as f64) / RECENCY_TAU_SECS).exp();
            match_acc += w * cosine(&item.raw, &target.raw);
            weight_sum += w;
        }
        let match_term = MATCH_SCALE * match_acc / weight_sum.max(1e-12);
        let periodic = periodic_term(cfg, h_star, d_star, t0);
        let z_timeblind = affinity + match_term + user.bias;
        let z_full = z_timeblind + periodic;

        drafts.push(DraftSample {
            sample: Sample {
                history,
                n_padded: 0,
                target,
                aux: user.aux.clone(),
                label: false,
                user: Some(user_idx as u64),
            },
            z_full,
            z_timeblind,
        });
    }

    // Solve the global offset so the mean click probability hits the CTR.
    let zs: Vec<f64> = drafts.iter().map(|d| d.z_full).collect();
    let offset = solve_offset(&zs, cfg.ctr);

    let mut ds = Dataset::empty(cfg.n_categories);
    let mut truth = TruthSidecar::default();
    for (i, mut draft) in drafts.into_iter().enumerate() {
        use rand::SeedableRng;
        let mut rng =
            ChaCha12Rng::seed_from_u64(label_key ^ (i as u64).wrapping_mul(0x9e3779b97f4a7c15));
        let p = sigmoid(offset + draft.z_full);
        let clicked = rng.random_range(0.0..1.0) < p;
        draft.sample.label = clicked;
        let (full, blind) = (offset + draft.z_full, offset + draft.z_timeblind);
        if clicked {
            truth.pos_full.push(full);
            truth.pos_timeblind.push(blind);
            ds.positives.push(draft.sample);
        } else {
            truth.neg_full.push(full);
            truth.neg_timeblind.push(blind);
            ds.negatives.push(draft.sample);
        }
    }
    ds.truth = Some(truth);
    Ok(ds)
}

fn solve_offset(zs: &[f64], target: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    let mean_p = |b: f64| zs.iter().map(|&z| sigmoid(b + z)).sum::<f64>() / zs.len() as f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_p(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Split a dataset by the exposure-time boundary: samples strictly before
/// `boundary` go to the first half, the rest to the second. Truth sidecars
/// are carried along.
pub fn split_by_time(ds: Dataset, boundary: i64) -> (Dataset, Dataset) {
    let n_categories = ds.n_categories;
    let mut early = Dataset::empty(n_categories);
    let mut late = Dataset::empty(n_categories);
    let mut early_truth = TruthSidecar::default();
    let mut late_truth = TruthSidecar::default();
    let truth = ds.truth;

    let mut route = |samples: Vec<Sample>, full: Vec<f64>, blind: Vec<f64>, positive: bool| {
        for (i, s) in samples.into_iter().enumerate() {
            let is_early = s.target.time.t_a < boundary;
            let (bucket, t) = if is_early {
                (&mut early, &mut early_truth)
            } else {
                (&mut late, &mut late_truth)
            };
            if positive {
                bucket.positives.push(s);
                if !full.is_empty() {
                    t.pos_full.push(full[i]);
                    t.pos_timeblind.push(blind[i]);
                }
            } else {
                bucket.negatives.push(s);
                if !full.is_empty() {
                    t.neg_full.push(full[i]);
                    t.neg_timeblind.push(blind[i]);
                }
            }
        }
    };

    let (pf, pb, nf, nb) = match truth {
        Some(t) => (t.pos_full, t.pos_timeblind, t.neg_full, t.neg_timeblind),
        None => (Vec::new(), Vec::new(), Vec::new(), Vec::new()),
    };
    route(ds.positives, pf, pb, true);
    route(ds.negatives, nf, nb, false);
    early.truth = Some(early_truth);
    late.truth = Some(late_truth);
    (early, late)
}

impl core::fmt::Display for SyntheticConfig {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        writeln!(f, "n_users = {}", self.n_users)?;
        writeln!(f, "n_items = {}", self.n_items)?;
        writeln!(f, "n_categories = {}", self.n_categories)?;
        writeln!(f, "ctr = {}", self.ctr)?;
        writeln!(f, "horizon_days = {}", self.horizon_days)?;
        writeln!(f, "L = {}", self.history_len)?;
        writeln!(f, "periodic_amplitude = {}", self.periodic_amplitude)?;
        writeln!(f, "drift_rate = {}", self.drift_rate)?;
        writeln!(f, "n_samples = {}", self.n_samples)?;
        writeln!(f, "seed = {}", self.seed)
    }
}
