//! Degree distributions for the droplet encoder.
//!
//! A droplet's degree (how many blocks it XORs together) is drawn from
//! one of three pmfs over 1..=k:
//!
//! - the ideal soliton: mass 1/k at degree 1, then 1/(d(d-1));
//! - the robust soliton: the ideal plus an extra boost at low degrees
//!   and a spike near k/R, normalized; this is what makes peeling
//!   succeed with k + O(sqrt(k) ln^2(k/delta)) droplets w.p. 1-delta;
//! - all-at-once: a point mass, the degenerate case used to express
//!   uncoded baselines in the same machinery.
//!
//! Sampling is inverse-CDF against a precomputed table, so a seeded
//! generator reproduces the same degree sequence exactly.

use rand::distributions::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the robust soliton distribution.
///
/// `c` trades expected overhead against decode failure probability;
/// `delta` is the target failure probability the tuning aims at.
#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
pub struct SolitonParams {
    pub k: usize,
    pub c: f64,
    pub delta: f64,
}

impl SolitonParams {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::config("soliton k must be >= 1"));
        }
        if self.c <= 0.0 || !self.c.is_finite() {
            return Err(Error::config(format!("soliton c must be > 0, got {}", self.c)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config(format!(
                "soliton delta must be in (0, 1), got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// Which pmf a [`DegreePmf`] holds, with the derived quantities the
/// robust construction produces along the way.
#[derive(Clone, Copy, PartialEq, Debug)]
pub enum PmfKind {
    Ideal,
    Robust {
        c: f64,
        delta: f64,
        /// R = c * sqrt(k) * ln(k/delta), the expected ripple size the
        /// tuning keeps alive during peeling.
        r: f64,
        /// Normalizer: sum of ideal and boost terms before division.
        beta: f64,
        /// Location of the boost spike, round(k/R).
        spike_degree: usize,
    },
    AllAtOnce {
        s: usize,
    },
}

/// A degree pmf over 1..=k with its sampling table.
#[derive(Clone, PartialEq, Debug)]
pub struct DegreePmf {
    k: usize,
    /// probs[i] = P(degree = i + 1).
    probs: Vec<f64>,
    cdf: Vec<f64>,
    kind: PmfKind,
}

impl DegreePmf {
    fn new(k: usize, probs: Vec<f64>, kind: PmfKind) -> Result<DegreePmf> {
        debug_assert_eq!(probs.len(), k);
        if probs.iter().any(|p| *p < 0.0 || !p.is_finite()) {
            return Err(Error::config(
                "degree pmf has a negative or non-finite entry",
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::config(format!(
                "degree pmf sums to {sum}, expected 1 within 1e-12"
            )));
        }
        let mut cdf = Vec::with_capacity(k);
        let mut acc = 0.0;
        for p in &probs {
            acc += p;
            cdf.push(acc);
        }
        Ok(DegreePmf { k, probs, cdf, kind })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Probability table indexed by degree minus one: `probs()[i]` = P(degree = i+1).
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// P(degree = d), for d in 1..=k.
    pub fn prob(&self, d: usize) -> f64 {
        self.probs[d - 1]
    }

    pub fn kind(&self) -> &PmfKind {
        &self.kind
    }

    pub fn mean_degree(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, p)| (i + 1) as f64 * p)
            .sum()
    }

    /// Draws a degree in 1..=k by inverse-CDF lookup.
    pub fn sample_degree<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        // partition_point returns the count of entries <= u, i.e. the
        // zero-based index of the first bucket whose cdf exceeds u.
        let idx = self.cdf.partition_point(|&cum| cum <= u);
        (idx + 1).min(self.k)
    }
}

impl Distribution<usize> for DegreePmf {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.sample_degree(rng)
    }
}

/// Ideal soliton: rho(1) = 1/k, rho(d) = 1/(d(d-1)) for d in 2..=k.
pub fn ideal_soliton(k: usize) -> Result<DegreePmf> {
    if k < 1 {
        return Err(Error::config("soliton k must be >= 1"));
    }
    let probs = ideal_terms(k);
    DegreePmf::new(k, probs, PmfKind::Ideal)
}

fn ideal_terms(k: usize) -> Vec<f64> {
    let mut probs = Vec::with_capacity(k);
    probs.push(1.0 / k as f64);
    for d in 2..=k {
        probs.push(1.0 / (d as f64 * (d as f64 - 1.0)));
    }
    probs
}

/// Robust soliton: mu(d) = (rho(d) + theta(d)) / beta, where theta
/// boosts degrees below the spike by R/(dk), puts (R/k) ln(R/delta) on
/// the spike round(k/R), and is zero above it.
pub fn robust_soliton(params: SolitonParams) -> Result<DegreePmf> {
    params.validate()?;
    let SolitonParams { k, c, delta } = params;
    let kf = k as f64;
    let r = c * kf.sqrt() * (kf / delta).ln();
    let spike = (kf / r).round();
    if spike < 1.0 || spike > kf {
        return Err(Error::config(format!(
            "spike degree round(k/R) = {spike} falls outside 1..={k} (k={k}, c={c}, delta={delta})"
        )));
    }
    let spike = spike as usize;
    let mut terms = ideal_terms(k);
    for (i, t) in terms.iter_mut().enumerate().take(spike - 1) {
        let d = (i + 1) as f64;
        *t += r / (d * kf);
    }
    terms[spike - 1] += (r / kf) * (r / delta).ln();
    let beta: f64 = terms.iter().sum();
    let probs: Vec<f64> = terms.iter().map(|t| t / beta).collect();
    DegreePmf::new(
        k,
        probs,
        PmfKind::Robust { c, delta, r, beta, spike_degree: spike },
    )
}

/// Point mass at degree s.
pub fn all_at_once(k: usize, s: usize) -> Result<DegreePmf> {
    if k < 1 {
        return Err(Error::config("soliton k must be >= 1"));
    }
    if s < 1 || s > k {
        return Err(Error::config(format!("point-mass degree {s} outside 1..={k}")));
    }
    let mut probs = vec![0.0; k];
    probs[s - 1] = 1.0;
    DegreePmf::new(k, probs, PmfKind::AllAtOnce { s })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ideal_k4_exact_values() {
        let pmf = ideal_soliton(4).unwrap();
        let want = [0.25, 0.5, 1.0 / 6.0, 1.0 / 12.0];
        for (got, want) in pmf.probs().iter().zip(want) {
            assert!((got - want).abs() < 1e-15, "{got} vs {want}");
        }
    }

    #[test]
    fn ideal_k1_is_point_mass() {
        assert_eq!(ideal_soliton(1).unwrap().probs(), &[1.0]);
    }

    #[test]
    fn ideal_sums_to_one_telescoping() {
        for k in [1usize, 2, 7, 100, 5000] {
            let sum: f64 = ideal_soliton(k).unwrap().probs().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "k={k} sum={sum}");
        }
    }

    #[test]
    fn robust_stores_tuning_quantities() {
        let pmf = robust_soliton(SolitonParams { k: 10_000, c: 0.03, delta: 0.5 }).unwrap();
        match *pmf.kind() {
            PmfKind::Robust { r, beta, spike_degree, .. } => {
                let want_r = 0.03 * (10_000f64).sqrt() * (10_000f64 / 0.5).ln();
                assert!((r - want_r).abs() < 1e-9);
                assert_eq!(spike_degree, (10_000.0 / want_r).round() as usize);
                assert!(beta > 1.0);
            }
            _ => panic!("wrong kind"),
        }
        let sum: f64 = pmf.probs().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn robust_sums_to_one_across_grid() {
        for k in [100usize, 1000] {
            for c in [0.01, 0.03, 0.1, 0.3] {
                for delta in [0.1, 0.3, 0.5, 0.7] {
                    match robust_soliton(SolitonParams { k, c, delta }) {
                        Ok(pmf) => {
                            let sum: f64 = pmf.probs().iter().sum();
                            assert!((sum - 1.0).abs() < 1e-12);
                            assert!(pmf.probs().iter().all(|p| *p >= 0.0));
                        }
                        // Corners where the spike lands outside 1..=k
                        // are rejected, not mis-built.
                        Err(Error::Config(_)) => {}
                        Err(e) => panic!("unexpected error {e}"),
                    }
                }
            }
        }
    }

    #[test]
    fn robust_average_degree_tracks_log_k() {
        for k in [100usize, 1000, 10_000] {
            let pmf = robust_soliton(SolitonParams { k, c: 0.1, delta: 0.5 }).unwrap();
            let ratio = pmf.mean_degree() / (k as f64 / 0.5).ln();
            assert!((0.1..=10.0).contains(&ratio), "k={k} ratio={ratio}");
        }
    }

    #[test]
    fn spike_out_of_range_is_config_error() {
        // R = 0.01 * 2 * ln(40) ~ 0.074, so round(k/R) = 54 > k = 4.
        let err = robust_soliton(SolitonParams { k: 4, c: 0.01, delta: 0.1 }).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn bad_params_rejected() {
        assert!(robust_soliton(SolitonParams { k: 0, c: 0.1, delta: 0.5 }).is_err());
        assert!(robust_soliton(SolitonParams { k: 10, c: 0.0, delta: 0.5 }).is_err());
        assert!(robust_soliton(SolitonParams { k: 10, c: -1.0, delta: 0.5 }).is_err());
        assert!(robust_soliton(SolitonParams { k: 10, c: 0.1, delta: 0.0 }).is_err());
        assert!(robust_soliton(SolitonParams { k: 10, c: 0.1, delta: 1.0 }).is_err());
        assert!(ideal_soliton(0).is_err());
    }

    #[test]
    fn all_at_once_point_mass() {
        let pmf = all_at_once(10, 3).unwrap();
        assert_eq!(pmf.prob(3), 1.0);
        assert_eq!(pmf.probs().iter().sum::<f64>(), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(pmf.sample_degree(&mut rng), 3);
        }
        assert!(all_at_once(10, 0).is_err());
        assert!(all_at_once(10, 11).is_err());
    }

    #[test]
    fn sampling_is_deterministic_for_a_seed() {
        let pmf = robust_soliton(SolitonParams { k: 500, c: 0.1, delta: 0.5 }).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..64).map(|_| pmf.sample_degree(&mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
        assert_ne!(draw(9), draw(10));
    }

    #[test]
    fn ideal_sampler_matches_degree_one_mass() {
        let pmf = ideal_soliton(100).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 1_000_000;
        let ones = (0..n).filter(|_| pmf.sample_degree(&mut rng) == 1).count();
        let freq = ones as f64 / n as f64;
        // 3 sigma around p = 1/100 at a million draws.
        let sigma = (0.01 * 0.99 / n as f64).sqrt();
        assert!((freq - 0.01).abs() < 3.0 * sigma, "freq {freq}");
    }

    #[test]
    fn robust_sampler_mean_matches_analytic() {
        let pmf = robust_soliton(SolitonParams { k: 100, c: 0.1, delta: 0.5 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 1_000_000;
        let mean = (0..n).map(|_| pmf.sample_degree(&mut rng)).sum::<usize>() as f64 / n as f64;
        let want = pmf.mean_degree();
        assert!((mean - want).abs() < 0.02 * want, "{mean} vs {want}");
    }

    #[test]
    fn robust_sampler_chi_square_accepts() {
        let pmf = robust_soliton(SolitonParams { k: 100, c: 0.1, delta: 0.5 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 1_000_000usize;
        let mut counts = vec![0u64; 100];
        for _ in 0..n {
            counts[pmf.sample_degree(&mut rng) - 1] += 1;
        }
        let chi2: f64 = counts
            .iter()
            .zip(pmf.probs())
            .map(|(obs, p)| {
                let exp = p * n as f64;
                (*obs as f64 - exp).powi(2) / exp
            })
            .sum();
        // Smallest expected count here is ~75 (>5), so the plain chi
        // square statistic applies with dof = 99. 148.23 is the 0.999
        // quantile of chi-square(99).
        assert!(chi2 < 148.23, "chi2 = {chi2}");
    }
}
