//! Ranking metrics: AUC, relative AUC improvement, Kendall tau and the
//! score-versus-penalty agreement diagnostic used during adversarial runs.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{Error, Result};

/// Rank-based AUC: the probability that a random positive outscores a random
/// negative, ties counted half. `O((P+N) log(P+N))` via average ranks.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Contract("scores and labels differ in length".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Validation(
            "AUC needs at least one positive and one negative".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Average ranks over tie groups (1-based), then the Mann-Whitney identity.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let p = pos as f64;
    let n = neg as f64;
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// Relative AUC improvement over a base model, measured against the 0.5
/// random-guess floor, in percent.
pub fn rela_impr(auc_measured: f64, auc_base: f64) -> Result<f64> {
    if auc_base == 0.5 {
        return Err(Error::Validation(
            "RelaImpr is undefined for a random-guess base (AUC 0.5)".into(),
        ));
    }
    Ok(((auc_measured - 0.5) / (auc_base - 0.5) - 1.0) * 100.0)
}

/// Kendall tau-b between two rankings given as score vectors; tie-adjusted,
/// and 0 by convention when either ranking is all ties. `O(n log n)` by
/// sorting plus mergesort inversion counting.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Contract("rankings differ in length".into()));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Contract("tau needs at least two elements".into()));
    }
    let n0 = (n * (n - 1) / 2) as f64;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i].total_cmp(&a[j]).then(b[i].total_cmp(&b[j])));

    let tie_pairs = |sorted_vals: &[f64]| -> f64 {
        let mut t = 0.0;
        let mut i = 0;
        while i < sorted_vals.len() {
            let mut j = i;
            while j + 1 < sorted_vals.len() && sorted_vals[j + 1] == sorted_vals[i] {
                j += 1;
            }
            let g = (j - i + 1) as f64;
            t += g * (g - 1.0) / 2.0;
            i = j + 1;
        }
        t
    };

    let a_sorted: Vec<f64> = order.iter().map(|&i| a[i]).collect();
    let n1 = tie_pairs(&a_sorted);
    let mut b_vals: Vec<f64> = b.to_vec();
    b_vals.sort_by(|x, y| x.total_cmp(y));
    let n2 = tie_pairs(&b_vals);

    // Joint ties: groups of equal (a, b).
    let mut n3 = 0.0;
    {
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n
                && a[order[j + 1]] == a[order[i]]
                && b[order[j + 1]] == b[order[i]]
            {
                j += 1;
            }
            let g = (j - i + 1) as f64;
            n3 += g * (g - 1.0) / 2.0;
            i = j + 1;
        }
    }

    // Discordant pairs: inversions of b in a-order. Within an a-tie group b is
    // sorted ascending, so those pairs contribute nothing.
    let mut seq: Vec<f64> = order.iter().map(|&i| b[i]).collect();
    let discordant = count_inversions(&mut seq);

    let denom = ((n0 - n1) * (n0 - n2)).sqrt();
    if denom == 0.0 {
        return Ok(0.0);
    }
    let concordant_minus_discordant = n0 - n1 - n2 + n3 - 2.0 * discordant;
    Ok(concordant_minus_discordant / denom)
}

/// Strict inversions (x_i > x_j for i < j) by mergesort.
fn count_inversions(vals: &mut [f64]) -> f64 {
    let n = vals.len();
    if n < 2 {
        return 0.0;
    }
    let mut buf = vec![0.0; n];
    merge_count(vals, &mut buf)
}

fn merge_count(vals: &mut [f64], buf: &mut [f64]) -> f64 {
    let n = vals.len();
    if n < 2 {
        return 0.0;
    }
    let mid = n / 2;
    let mut inv = {
        let (left, right) = vals.split_at_mut(mid);
        merge_count(left, &mut buf[..mid]) + merge_count(right, &mut buf[mid..])
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if vals[i] <= vals[j] {
            buf[k] = vals[i];
            i += 1;
        } else {
            buf[k] = vals[j];
            inv += (mid - i) as f64;
            j += 1;
        }
        k += 1;
    }
    while i < mid {
        buf[k] = vals[i];
        i += 1;
        k += 1;
    }
    while j < n {
        buf[k] = vals[j];
        j += 1;
        k += 1;
    }
    vals.copy_from_slice(&buf[..n]);
    inv
}

/// Per-epoch training diagnostics collected by the harness.
#[derive(Debug, Clone, Default)]
pub struct MetricReport {
    pub final_auc: Option<f64>,
    pub rela_impr_pct: Option<f64>,
    pub epochs: Vec<EpochMetrics>,
}

#[derive(Debug, Clone, Default)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub test_auc: Option<f64>,
    pub d_loss: f64,
    pub mean_reward: Option<f64>,
    /// Tau between score and negative-penalty rankings, batch-averaged.
    pub tau: Option<f64>,
    /// Tau between the score ranking and a seeded random permutation.
    pub tau_random: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    /// O(P*N) pair-count oracle with half credit for ties.
    fn auc_bruteforce(scores: &[f64], labels: &[bool]) -> f64 {
        let mut pairs = 0.0;
        let mut won = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            if !li {
                continue;
            }
            for (j, &lj) in labels.iter().enumerate() {
                if lj {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    won += 1.0;
                } else if scores[i] == scores[j] {
                    won += 0.5;
                }
            }
        }
        won / pairs
    }

    /// O(C^2) tau-b oracle.
    pub(crate) fn tau_bruteforce(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len();
        let (mut c, mut d, mut ta, mut tb) = (0.0, 0.0, 0.0, 0.0);
        let n0 = (n * (n - 1) / 2) as f64;
        for i in 0..n {
            for j in i + 1..n {
                let da = a[i] - a[j];
                let db = b[i] - b[j];
                if da == 0.0 && db == 0.0 {
                    ta += 1.0;
                    tb += 1.0;
                } else if da == 0.0 {
                    ta += 1.0;
                } else if db == 0.0 {
                    tb += 1.0;
                } else if da * db > 0.0 {
                    c += 1.0;
                } else {
                    d += 1.0;
                }
            }
        }
        let denom = ((n0 - ta) * (n0 - tb)).sqrt();
        if denom == 0.0 {
            0.0
        } else {
            (c - d) / denom
        }
    }

    #[test]
    fn auc_separated_and_tied() {
        let labels = [true, true, false, false];
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &labels).unwrap(), 1.0);
        assert_eq!(auc(&[0.5, 0.5, 0.5, 0.5], &labels).unwrap(), 0.5);
        assert!(auc(&[1.0, 2.0], &[true, true]).is_err());
    }

    #[test]
    fn auc_matches_the_pair_count_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.random_range(10..=200);
            let scores: Vec<f64> = (0..n)
                .map(|_| {
                    // coarse grid forces ties
                    (rng.random_range(0..20) as f64) / 10.0
                })
                .collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.random_range(0..5) == 0).collect();
            labels[0] = true;
            labels[1] = false;
            let fast = auc(&scores, &labels).unwrap();
            let slow = auc_bruteforce(&scores, &labels);
            assert!((fast - slow).abs() < 1e-12, "{fast} vs {slow}");
        }
    }

    #[test]
    fn auc_is_invariant_under_monotone_transforms() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let scores: Vec<f64> = (0..64).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut labels: Vec<bool> = (0..64).map(|_| rng.random_range(0..4) == 0).collect();
        labels[0] = true;
        labels[1] = false;
        let base = auc(&scores, &labels).unwrap();
        let squashed: Vec<f64> = scores.iter().map(|&s| crate::tape::sigmoid(3.0 * s + 1.0)).collect();
        assert!((auc(&squashed, &labels).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn rela_impr_reproduces_the_reference_pairs() {
        let a = rela_impr(0.7745, 0.7639).unwrap();
        assert!((a - 4.02).abs() < 0.01, "{a}");
        let b = rela_impr(0.7745, 0.7405).unwrap();
        assert!((b - 14.14).abs() < 0.01, "{b}");
        assert_eq!(rela_impr(0.81, 0.81).unwrap(), 0.0);
        assert!(rela_impr(0.7, 0.5).is_err());
    }

    #[test]
    fn tau_identity_and_reversal() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let rev = [5.0, 4.0, 3.0, 2.0, 1.0];
        assert_eq!(kendall_tau(&a, &a).unwrap(), 1.0);
        assert_eq!(kendall_tau(&a, &rev).unwrap(), -1.0);
        assert!(kendall_tau(&a, &rev[..3]).is_err());
    }

    #[test]
    fn tau_matches_the_exhaustive_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..300 {
            let n = rng.random_range(2..=10);
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(0..5) as f64).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(0..5) as f64).collect();
            let fast = kendall_tau(&a, &b).unwrap();
            let slow = tau_bruteforce(&a, &b);
            assert!((fast - slow).abs() < 1e-12, "{a:?} {b:?}: {fast} vs {slow}");
        }
    }

    #[test]
    fn tau_all_tie_convention_is_zero() {
        assert_eq!(kendall_tau(&[1.0, 1.0, 1.0], &[3.0, 1.0, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn tau_is_symmetric_and_antisymmetric() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        for _ in 0..50 {
            let n = rng.random_range(2..=9);
            // distinct values: no ties
            let mut a: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let mut b: Vec<f64> = (0..n).map(|i| i as f64).collect();
            use rand::seq::SliceRandom;
            a.shuffle(&mut rng);
            b.shuffle(&mut rng);
            let t = kendall_tau(&a, &b).unwrap();
            assert!((kendall_tau(&b, &a).unwrap() - t).abs() < 1e-12);
            let neg_b: Vec<f64> = b.iter().map(|x| -x).collect();
            assert!((kendall_tau(&a, &neg_b).unwrap() + t).abs() < 1e-12);
        }
    }
}
