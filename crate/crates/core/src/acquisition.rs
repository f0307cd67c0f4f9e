//! Failure probabilities, classification entropy, and Pareto-front
//! acquisition over (entropy, predictive standard deviation).

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dgp::{AggregatedPosterior, MomentSamples};
use crate::error::{Error, Result};
use crate::testfns::std_normal_cdf;

/// Standard deviations below this are raised to it before standardizing.
pub const SIGMA_FLOOR: f64 = 1e-10;
const PROB_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Responses strictly above the limit state fail.
    FailAbove,
    /// Responses strictly below the limit state fail.
    FailBelow,
}

/// Limit state `g` and which side of it counts as failure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Threshold {
    pub g: f64,
    pub direction: Direction,
}

impl Threshold {
    pub fn new(g: f64, direction: Direction) -> Result<Self> {
        if !g.is_finite() {
            return Err(Error::NonFinite("limit state"));
        }
        Ok(Self { g, direction })
    }

    pub fn fails(&self, y: f64) -> bool {
        match self.direction {
            Direction::FailAbove => y > self.g,
            Direction::FailBelow => y < self.g,
        }
    }
}

/// Probability that a `N(mu, sigma²)` response fails.
pub fn failure_prob(mu: f64, sigma: f64, thr: &Threshold) -> Result<f64> {
    if !mu.is_finite() {
        return Err(Error::NonFinite("predictive mean"));
    }
    if !(sigma >= 0.0) || sigma.is_infinite() {
        return Err(Error::NonFinite("predictive standard deviation"));
    }
    let z = (thr.g - mu) / sigma.max(SIGMA_FLOOR);
    Ok(match thr.direction {
        Direction::FailAbove => std_normal_cdf(-z),
        Direction::FailBelow => std_normal_cdf(z),
    })
}

/// Binary entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(p: f64) -> Result<f64> {
    if !(-PROB_SLACK..=1.0 + PROB_SLACK).contains(&p) {
        return Err(Error::ProbabilityRange(p));
    }
    let p = p.clamp(0.0, 1.0);
    let term = |q: f64| if q > 0.0 { -q * q.ln() } else { 0.0 };
    // ln(1 - p) through ln_1p keeps precision for tiny p.
    let rest = if p < 1.0 { -(1.0 - p) * (-p).ln_1p() } else { 0.0 };
    Ok(term(p) + rest)
}

/// Entropy from the aggregated mean and standard deviation.
pub fn posthoc_entropy(agg: &AggregatedPosterior, thr: &Threshold) -> Result<Array1<f64>> {
    agg.mu
        .iter()
        .zip(agg.sigma.iter())
        .map(|(m, s)| entropy(failure_prob(*m, *s, thr)?))
        .collect()
}

/// Entropy averaged over the per-sample predictive distributions.
pub fn mcmc_entropy(ms: &MomentSamples, thr: &Threshold) -> Result<Array1<f64>> {
    let mut total = Array1::<f64>::zeros(ms.points());
    for (mu, var) in ms.mu.iter().zip(&ms.var) {
        for (i, (m, v)) in mu.iter().zip(var.iter()).enumerate() {
            total[i] += entropy(failure_prob(*m, v.sqrt(), thr)?)?;
        }
    }
    Ok(total / ms.len() as f64)
}

/// Indices of points not strictly dominated in both coordinates (larger is
/// better), in ascending order.
///
/// Sorting by entropy descending, a point survives iff its sigma is at least
/// the largest sigma among points with strictly larger entropy.
pub fn pareto_front(entropy: &[f64], sigma: &[f64]) -> Result<Vec<usize>> {
    if entropy.len() != sigma.len() {
        return Err(Error::DimensionMismatch {
            expected: entropy.len(),
            got: sigma.len(),
        });
    }
    if entropy.iter().chain(sigma).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("criterion value"));
    }
    let mut order: Vec<usize> = (0..entropy.len()).collect();
    order.sort_by(|&a, &b| entropy[b].total_cmp(&entropy[a]));
    let mut front = Vec::new();
    let mut best_above = f64::NEG_INFINITY;
    let mut start = 0;
    while start < order.len() {
        let h = entropy[order[start]];
        let mut end = start;
        while end < order.len() && entropy[order[end]] == h {
            end += 1;
        }
        let group = &order[start..end];
        front.extend(group.iter().copied().filter(|&i| sigma[i] >= best_above));
        best_above = group.iter().map(|&i| sigma[i]).fold(best_above, f64::max);
        start = end;
    }
    front.sort_unstable();
    Ok(front)
}

/// How the next design point is chosen from the scored candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AcquisitionKind {
    /// Uniform over the Pareto front of (entropy, sigma).
    #[serde(rename = "pareto")]
    Pareto,
    /// Highest entropy, ties broken uniformly.
    #[serde(rename = "entropy-only")]
    EntropyOnly,
    /// Uniform over all candidates.
    #[serde(rename = "random-candidate")]
    RandomCandidate,
}

impl AcquisitionKind {
    pub fn id(self) -> &'static str {
        match self {
            Self::Pareto => "pareto",
            Self::EntropyOnly => "entropy-only",
            Self::RandomCandidate => "random-candidate",
        }
    }
}

impl fmt::Display for AcquisitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for AcquisitionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pareto" => Ok(Self::Pareto),
            "entropy-only" => Ok(Self::EntropyOnly),
            "random-candidate" => Ok(Self::RandomCandidate),
            other => Err(Error::Config(format!(
                "unknown acquisition `{other}` (expected pareto, entropy-only or random-candidate)"
            ))),
        }
    }
}

/// Candidates with their two criteria and Pareto membership.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateScores {
    pub x: Array2<f64>,
    pub entropy: Array1<f64>,
    pub sigma: Array1<f64>,
    pub pareto_mask: Vec<bool>,
}

impl CandidateScores {
    pub fn new(x: Array2<f64>, entropy: Array1<f64>, sigma: Array1<f64>) -> Result<Self> {
        let n = x.nrows();
        if entropy.len() != n || sigma.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: entropy.len().min(sigma.len()),
            });
        }
        if n == 0 {
            return Err(Error::EmptyFront);
        }
        let ln2 = std::f64::consts::LN_2;
        if entropy.iter().any(|h| !(*h >= 0.0 && *h <= ln2 + PROB_SLACK)) {
            return Err(Error::InvalidData("entropy outside [0, ln 2]".into()));
        }
        if sigma.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::InvalidData("negative or NaN standard deviation".into()));
        }
        let front = pareto_front(
            entropy.as_slice().expect("contiguous"),
            sigma.as_slice().expect("contiguous"),
        )?;
        let mut pareto_mask = vec![false; n];
        front.into_iter().for_each(|i| pareto_mask[i] = true);
        Ok(Self {
            x,
            entropy,
            sigma,
            pareto_mask,
        })
    }

    /// Post-hoc entropy and aggregated sigma for each candidate row.
    pub fn posthoc(x: Array2<f64>, agg: &AggregatedPosterior, thr: &Threshold) -> Result<Self> {
        let h = posthoc_entropy(agg, thr)?;
        Self::new(x, h, agg.sigma.clone())
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn front(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.pareto_mask[i]).collect()
    }

    /// Indices eligible under `kind`, ascending.
    pub fn eligible(&self, kind: AcquisitionKind) -> Vec<usize> {
        match kind {
            AcquisitionKind::Pareto => self.front(),
            AcquisitionKind::RandomCandidate => (0..self.len()).collect(),
            AcquisitionKind::EntropyOnly => {
                let best = self.entropy.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (0..self.len()).filter(|&i| self.entropy[i] == best).collect()
            }
        }
    }
}

/// Uniform draw from the Pareto front.
pub fn select_acquisition<R: Rng + ?Sized>(scores: &CandidateScores, rng: &mut R) -> Result<usize> {
    select_from(&scores.front(), rng)
}

pub(crate) fn select_from<R: Rng + ?Sized>(eligible: &[usize], rng: &mut R) -> Result<usize> {
    if eligible.is_empty() {
        return Err(Error::EmptyFront);
    }
    Ok(eligible[rng.random_range(0..eligible.len())])
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const ABOVE: Threshold = Threshold {
        g: 0.0,
        direction: Direction::FailAbove,
    };
    const BELOW: Threshold = Threshold {
        g: 0.0,
        direction: Direction::FailBelow,
    };

    #[test]
    fn failure_probability_examples() {
        assert_eq!(failure_prob(0.0, 1.0, &ABOVE).unwrap(), 0.5);
        assert_eq!(failure_prob(0.0, 1.0, &BELOW).unwrap(), 0.5);
        let thr = Threshold::new(3.0, Direction::FailAbove).unwrap();
        let p = failure_prob(3.0 - 1.96 * 0.5, 0.5, &thr).unwrap();
        assert!((p - 0.02499789514822044).abs() < 1e-14);
        let p = failure_prob(3.0 + 2.0 * 0.5, 0.5, &thr).unwrap();
        assert!((p - 0.9772498680518208).abs() < 1e-14);
        assert!(failure_prob(f64::NAN, 1.0, &ABOVE).is_err());
        assert!(failure_prob(0.0, f64::INFINITY, &ABOVE).is_err());
        assert!(Threshold::new(f64::INFINITY, Direction::FailAbove).is_err());
    }

    #[test]
    fn zero_sigma_is_floored() {
        assert_eq!(failure_prob(1.0, 0.0, &ABOVE).unwrap(), 1.0);
        assert_eq!(failure_prob(-1.0, 0.0, &ABOVE).unwrap(), 0.0);
        assert_eq!(failure_prob(0.0, 0.0, &ABOVE).unwrap(), 0.5);
    }

    #[test]
    fn entropy_examples() {
        assert!((entropy(0.5).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(entropy(0.0).unwrap(), 0.0);
        assert_eq!(entropy(1.0).unwrap(), 0.0);
        assert!((entropy(0.2).unwrap() - 0.5004024235381879).abs() < 1e-15);
        assert!(entropy(1.0 + 1e-13).is_ok());
        assert!(entropy(-1e-9).is_err());
        assert!(entropy(f64::NAN).is_err());
    }

    #[test]
    fn posthoc_examples() {
        let agg = AggregatedPosterior {
            mu: array![0.0, 6.0, -0.3],
            sigma: array![2.0, 1.0, 0.4],
        };
        let h = posthoc_entropy(&agg, &ABOVE).unwrap();
        assert_eq!(h.len(), 3);
        assert!((h[0] - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(h[1] < 1e-7);
        assert!(h[2] > 0.0 && h[2] < std::f64::consts::LN_2);
    }

    #[test]
    fn mcmc_and_posthoc_entropy_differ() {
        // Two confident samples that disagree.
        let ms = MomentSamples::new(vec![array![-50.0], array![50.0]], vec![array![1e-4], array![1e-4]]).unwrap();
        let h_mcmc = mcmc_entropy(&ms, &ABOVE).unwrap();
        assert_eq!(h_mcmc[0], 0.0);
        let h_post = posthoc_entropy(&crate::dgp::aggregate(&ms), &ABOVE).unwrap();
        assert!(h_post[0] > 0.5);

        let one = MomentSamples::new(vec![array![0.3, -1.0]], vec![array![0.25, 4.0]]).unwrap();
        let same = MomentSamples::new(vec![array![0.3, -1.0]; 3], vec![array![0.25, 4.0]; 3]).unwrap();
        let a = posthoc_entropy(&crate::dgp::aggregate(&one), &ABOVE).unwrap();
        assert_eq!(mcmc_entropy(&one, &ABOVE).unwrap(), a);
        let b = mcmc_entropy(&same, &ABOVE).unwrap();
        assert!((&b - &a).iter().all(|d| d.abs() < 1e-15));
    }

    fn brute_front(h: &[f64], s: &[f64]) -> Vec<usize> {
        (0..h.len())
            .filter(|&i| !(0..h.len()).any(|j| h[j] > h[i] && s[j] > s[i]))
            .collect()
    }

    #[test]
    fn pareto_examples() {
        assert_eq!(
            pareto_front(&[1.0, 2.0, 3.0, 1.0], &[3.0, 2.0, 1.0, 1.0]).unwrap(),
            vec![0, 1, 2]
        );
        assert_eq!(pareto_front(&[0.4], &[0.1]).unwrap(), vec![0]);
        assert_eq!(pareto_front(&[0.4; 5], &[0.1; 5]).unwrap(), vec![0, 1, 2, 3, 4]);
        // Equal in one coordinate only is not strict domination.
        assert_eq!(pareto_front(&[1.0, 1.0, 2.0], &[1.0, 2.0, 1.0]).unwrap(), vec![0, 1, 2]);
        assert!(pareto_front(&[1.0], &[f64::NAN]).is_err());
    }

    proptest! {
        #[test]
        fn pareto_matches_brute_force(pairs in prop::collection::vec((0u8..6, 0u8..6), 1..80)) {
            let h: Vec<f64> = pairs.iter().map(|p| p.0 as f64 / 8.0).collect();
            let s: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
            let front = pareto_front(&h, &s).unwrap();
            prop_assert_eq!(&front, &brute_front(&h, &s));
            for &i in &front {
                for &j in &front {
                    prop_assert!(!(h[j] > h[i] && s[j] > s[i]));
                }
            }
        }

        #[test]
        fn entropy_is_symmetric(p in 0.0f64..=1.0) {
            prop_assert!((entropy(p).unwrap() - entropy(1.0 - p).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn entropy_peaks_at_limit_state() {
        let thr = Threshold::new(0.7, Direction::FailBelow).unwrap();
        let grid: Vec<f64> = (0..=2000).map(|i| -0.3 + i as f64 * 1e-3).collect();
        let hs: Vec<f64> = grid
            .iter()
            .map(|m| entropy(failure_prob(*m, 0.2, &thr).unwrap()).unwrap())
            .collect();
        let best = (0..grid.len()).max_by(|&a, &b| hs[a].total_cmp(&hs[b])).unwrap();
        assert!((grid[best] - 0.7).abs() < 1e-9);
    }

    #[test]
    fn selection_is_uniform_over_front() {
        let x = Array2::from_shape_fn((6, 1), |(i, _)| i as f64 / 6.0);
        let scores = CandidateScores::new(
            x,
            array![0.1, 0.5, 0.3, 0.2, 0.6, 0.0],
            array![0.9, 0.4, 0.5, 0.1, 0.2, 0.0],
        )
        .unwrap();
        assert_eq!(scores.front(), vec![0, 1, 2, 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let draws = 10_000;
        let mut counts = [0usize; 6];
        for _ in 0..draws {
            counts[select_acquisition(&scores, &mut rng).unwrap()] += 1;
        }
        let expect = draws as f64 / 4.0;
        let sd = (draws as f64 * 0.25 * 0.75).sqrt();
        for i in [0, 1, 2, 4] {
            assert!((counts[i] as f64 - expect).abs() < 3.0 * sd, "{counts:?}");
        }
        assert_eq!(counts[3] + counts[5], 0);

        let a = select_acquisition(&scores, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = select_acquisition(&scores, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn singleton_front_always_selected() {
        let scores = CandidateScores::new(array![[0.1], [0.2]], array![0.6, 0.1], array![0.5, 0.2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!((0..100).all(|_| select_acquisition(&scores, &mut rng).unwrap() == 0));
        assert!(select_from(&[], &mut rng).is_err());
    }

    #[test]
    fn score_validation() {
        assert!(CandidateScores::new(array![[0.1]], array![0.8], array![0.1]).is_err());
        assert!(CandidateScores::new(array![[0.1]], array![0.1], array![-0.1]).is_err());
        assert!(CandidateScores::new(array![[0.1], [0.2]], array![0.1], array![0.1]).is_err());
    }

    #[test]
    fn eligibility_by_kind() {
        let scores = CandidateScores::new(
            array![[0.1], [0.2], [0.3]],
            array![0.6, 0.6, 0.1],
            array![0.1, 0.3, 0.9],
        )
        .unwrap();
        assert_eq!(scores.eligible(AcquisitionKind::EntropyOnly), vec![0, 1]);
        assert_eq!(scores.eligible(AcquisitionKind::RandomCandidate), vec![0, 1, 2]);
        assert_eq!(scores.eligible(AcquisitionKind::Pareto), vec![0, 1, 2]);
        assert_eq!(
            "entropy-only".parse::<AcquisitionKind>().unwrap(),
            AcquisitionKind::EntropyOnly
        );
    }
}
