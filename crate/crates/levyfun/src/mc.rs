//! Monte Carlo sampler for the functionals in this crate, and the
//! Kolmogorov–Smirnov statistic used to compare samples with analytic laws.
//!
//! Sample `i` draws from its own ChaCha8 stream `(seed, i)`, so results do
//! not depend on the thread count or scheduling.

use crate::catalog::{IvsSpec, JumpPmf};
use crate::error::{invalid, Error, Result};
use crate::general::DecreasingFunctional;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{weighted::WeightedAliasIndex, Distribution};
use rayon::prelude::*;
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub n_samples: usize,
    pub seed: u64,
    /// A sample stops once its remainder bound is below this share of its value.
    pub series_tol: f64,
    pub max_terms: usize,
    /// Return the partial sum at `max_terms` instead of failing.
    pub truncate_at_max: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { n_samples: 100_000, seed: 1, series_tol: 1e-10, max_terms: 10_000_000, truncate_at_max: false }
    }
}

impl McConfig {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        Self { n_samples, seed, ..Self::default() }
    }

    fn check(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(invalid("n_samples", "need at least one sample"));
        }
        if !(self.series_tol > 0.0 && self.series_tol < 1.0) {
            return Err(invalid("series_tol", format!("must lie in (0, 1), got {}", self.series_tol)));
        }
        if self.max_terms == 0 {
            return Err(invalid("max_terms", "need at least one term"));
        }
        Ok(())
    }

    fn exhausted(&self, index: usize, partial: f64) -> Result<f64> {
        if self.truncate_at_max {
            Ok(partial)
        } else {
            Err(Error::MaxTermsExceeded { index, max_terms: self.max_terms })
        }
    }
}

/// Independent generator for sample `index`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Exponential variate with the given rate, by inversion.
#[inline]
pub fn exponential<R: Rng>(rng: &mut R, rate: f64) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln() / rate
}

/// Alias table over the positive jump sizes of a law. Mass beyond the stored
/// range is put on the largest stored size; the zero atom is dropped.
#[derive(Debug, Clone)]
pub struct JumpSampler {
    alias: WeightedAliasIndex<f64>,
}

impl JumpSampler {
    pub fn new(pmf: &JumpPmf) -> Result<Self> {
        let mut w = pmf.masses().to_vec();
        *w.last_mut().expect("pmf has at least one atom") += pmf.tail_mass();
        let alias = WeightedAliasIndex::new(w).map_err(|e| Error::InvalidPmf(format!("alias table: {e}")))?;
        Ok(Self { alias })
    }

    #[inline]
    pub fn draw<R: Rng>(&self, rng: &mut R) -> u64 {
        self.alias.sample(rng) as u64 + 1
    }
}

fn run<F>(cfg: &McConfig, f: F) -> Result<Vec<f64>>
where
    F: Fn(usize, &mut ChaCha8Rng) -> Result<f64> + Sync,
{
    cfg.check()?;
    (0..cfg.n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(cfg.seed, i as u64);
            f(i, &mut rng)
        })
        .collect()
}

/// Samples of `∫ q^{S_t + μt} dt`, with `μ = spec.drift()` possibly zero.
///
/// Without drift each sample is `Σ_k q^{S_k} E_{k+1}`, stopped once
/// `q^{S_k} / (λ̃ (1 − E q^Z))`, the mean of the remainder, is small. With
/// drift the path is integrated exactly between jumps, and the remainder is
/// bounded by `q^{S_k} q^{μ T_{k+1}} / μ_q`.
pub fn sample_exp_functional(spec: &IvsSpec, q: f64, cfg: &McConfig) -> Result<Vec<f64>> {
    if !(q > 0.0 && q < 1.0) {
        return Err(invalid("q", format!("base must lie in (0, 1), got {q}")));
    }
    let jumps = JumpSampler::new(spec.jumps())?;
    let rate = spec.intensity();
    let lq = -q.ln();
    let mu_q = lq * spec.drift();
    let remainder_scale = 1.0 / (rate * (1.0 - spec.jumps().pgf(q)));
    run(cfg, |i, rng| {
        let mut s = 0u64;
        let mut x = 0.0;
        let mut t = 0.0;
        for _ in 0..cfg.max_terms {
            let e = exponential(rng, rate);
            let level = (-lq * s as f64).exp();
            if mu_q > 0.0 {
                let start = (-mu_q * t).exp();
                x += level * start * -(-mu_q * e).exp_m1() / mu_q;
                t += e;
                if level * (-mu_q * t).exp() / mu_q < cfg.series_tol * x {
                    return Ok(x);
                }
            } else {
                x += level * e;
                if level * remainder_scale < cfg.series_tol * x {
                    return Ok(x);
                }
            }
            s += jumps.draw(rng);
        }
        cfg.exhausted(i, x)
    })
}

/// Samples of `J_p = Σ_{k≥1} E_k / (S_{k−1} + 1)^p`.
///
/// With partial sum `S_K` the mean remainder is at most
/// `((S_K+1)^{−p} + (S_K+1)^{1−p}/(p−1)) / λ̃`, since later sums grow by at
/// least one per step.
pub fn sample_inverse_power(spec: &IvsSpec, p: f64, cfg: &McConfig) -> Result<Vec<f64>> {
    if !(p > 1.0) {
        return Err(invalid("p", format!("power must exceed 1, got {p}")));
    }
    let jumps = JumpSampler::new(spec.jumps())?;
    let rate = spec.intensity();
    run(cfg, |i, rng| {
        let mut s = 0u64;
        let mut x = 0.0;
        for _ in 0..cfg.max_terms {
            let base = s as f64 + 1.0;
            x += exponential(rng, rate) * base.powf(-p);
            s += jumps.draw(rng);
            let next = s as f64 + 1.0;
            let bound = (next.powf(-p) + next.powf(1.0 - p) / (p - 1.0)) / rate;
            if bound < cfg.series_tol * x {
                return Ok(x);
            }
        }
        cfg.exhausted(i, x)
    })
}

/// Samples of `∫ g(S_t) dt` split as `(g(0) E_1, Λ)` with
/// `Λ = Σ_{k≥1} g(S_k) E_{k+1}`, stopped with the remainder bound of
/// [`DecreasingFunctional::tail_sum_bound`].
pub fn sample_general(df: &DecreasingFunctional, spec: &IvsSpec, cfg: &McConfig) -> Result<Vec<(f64, f64)>> {
    cfg.check()?;
    let jumps = JumpSampler::new(spec.jumps())?;
    let rate = spec.intensity();
    (0..cfg.n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(cfg.seed, i as u64);
            let first = df.g0() * exponential(&mut rng, rate);
            let mut rest = 0.0;
            let mut s = 0u64;
            for k in 1..=cfg.max_terms {
                s += jumps.draw(&mut rng);
                rest += df.eval(s as f64) * exponential(&mut rng, rate);
                if k % 32 == 0 && df.tail_sum_bound(s as f64 + 1.0) / rate < cfg.series_tol * (first + rest) {
                    return Ok((first, rest));
                }
            }
            cfg.exhausted(i, first + rest).map(|_| (first, rest))
        })
        .collect()
}

/// `n` jump sizes drawn from the law's alias table.
pub fn sample_jumps(pmf: &JumpPmf, n: usize, seed: u64) -> Result<Vec<u64>> {
    let jumps = JumpSampler::new(pmf)?;
    let mut rng = stream(seed, 0);
    Ok((0..n).map(|_| jumps.draw(&mut rng)).collect())
}

/// Two-sided Kolmogorov–Smirnov distance between the empirical law of
/// `samples` and `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64 + Sync) -> f64 {
    assert!(!samples.is_empty(), "KS statistic needs samples");
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let f: Vec<f64> = xs.par_iter().map(|&x| cdf(x)).collect();
    f.iter().enumerate().map(|(i, &fi)| ((i as f64 + 1.0) / n - fi).max(fi - i as f64 / n)).fold(0.0, f64::max)
}

/// Writes a single `sample` column.
pub fn write_samples_csv<W: Write>(mut out: W, samples: &[f64]) -> std::io::Result<()> {
    writeln!(out, "sample")?;
    for s in samples {
        writeln!(out, "{s:.16e}")?;
    }
    Ok(())
}

/// Sample mean and its standard error.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = crate::dd::sum(xs.iter().copied()) / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, (v / n).sqrt())
}
