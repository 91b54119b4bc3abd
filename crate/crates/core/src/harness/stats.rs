use serde::{Deserialize, Serialize};

use super::HarnessError;

/// Seven-number summary of a score list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator); 0 for one score.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
}

/// Percentile with linear interpolation between closest ranks:
/// rank `q·(n−1)` into the sorted list.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

pub fn summarize(scores: &[f64]) -> Result<SummaryStats, HarnessError> {
    if scores.is_empty() {
        return Err(HarnessError::EmptyScores);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    // summing in sorted order keeps the result independent of input order
    let mean = sorted.iter().sum::<f64>() / n;
    let std = if sorted.len() > 1 {
        (sorted.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(SummaryStats {
        mean,
        std,
        min: sorted[0],
        max: sorted[sorted.len() - 1],
        p25: percentile(&sorted, 0.25),
        p50: percentile(&sorted, 0.5),
        p75: percentile(&sorted, 0.75),
    })
}

/// Mean score of each consecutive block of `epoch_size` episodes; a short
/// final block is averaged over what it has.
pub fn epoch_means(scores: &[f64], epoch_size: usize) -> Vec<f64> {
    assert!(epoch_size > 0);
    scores.chunks(epoch_size).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn four_scores() {
        let s = summarize(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((s.mean, s.p50, s.min, s.max), (2.5, 2.5, 1.0, 4.0));
        assert_eq!((s.p25, s.p75), (1.75, 3.25));
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn constant_scores() {
        let s = summarize(&[43.0; 30]).unwrap();
        assert_eq!((s.mean, s.std, s.min, s.max), (43.0, 0.0, 43.0, 43.0));
        assert_eq!(summarize(&[7.0]).unwrap().std, 0.0);
    }

    #[test]
    fn empty_rejected() {
        assert!(matches!(summarize(&[]), Err(HarnessError::EmptyScores)));
    }

    #[test]
    fn epochs() {
        assert_eq!(epoch_means(&[1.0, 2.0, 3.0, 4.0, 5.0], 2), vec![1.5, 3.5, 5.0]);
    }

    proptest! {
        #[test]
        fn ordering_and_permutation(mut v in prop::collection::vec(0.0f64..1e4, 1..60), seed in any::<u64>()) {
            let s = summarize(&v).unwrap();
            prop_assert!(s.p25 <= s.p50 && s.p50 <= s.p75);
            prop_assert!(s.min <= s.mean + 1e-9 && s.mean <= s.max + 1e-9);
            let k = (seed as usize) % v.len();
            v.rotate_left(k);
            v.reverse();
            prop_assert_eq!(summarize(&v).unwrap(), s);
        }

        #[test]
        fn epoch_mean_is_block_average(v in prop::collection::vec(0.0f64..1e3, 1..100), size in 1usize..15) {
            let means = epoch_means(&v, size);
            for (i, m) in means.iter().enumerate() {
                let block = &v[i * size..((i + 1) * size).min(v.len())];
                let direct: f64 = block.iter().sum::<f64>() / block.len() as f64;
                prop_assert!((m - direct).abs() < 1e-9);
            }
        }
    }
}
