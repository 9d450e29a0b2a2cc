//! Decreasing functionals `∫₀^∞ g(S_t) dt`: a conservative convergence
//! certificate, the Monte Carlo Laplace limit, and the inverse-power case
//! `g(x) = (x+1)^{−p}` whose truncated law is a mixture of hypoexponentials.

use crate::catalog::IvsSpec;
use crate::dd::Accumulator;
use crate::error::{invalid, Error, Result};
use crate::mc::{stream, JumpSampler};
use crate::quad::{integrate, QuadOptions};
use num_complex::Complex64;
use rayon::prelude::*;
use std::sync::Arc;

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Nonnegative nonincreasing integrand `g` with `g(0) > 0`.
#[derive(Clone)]
pub struct DecreasingFunctional {
    label: String,
    g: RealFn,
    /// `s ↦ ∫_s^∞ g`, when known in closed form.
    tail_integral: Option<RealFn>,
    g0: f64,
    eventually_convex: bool,
}

impl std::fmt::Debug for DecreasingFunctional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DecreasingFunctional")
            .field("label", &self.label)
            .field("g0", &self.g0)
            .field("eventually_convex", &self.eventually_convex)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convergence {
    Converges,
    Diverges,
    Unknown,
}

/// Evidence behind a [`Convergence`] verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub verdict: Convergence,
    /// `Σ_{k=1}^{k_probe} g(k)`.
    pub partial_sum: f64,
    /// Bound on `Σ_{k≥k_probe} g(k)`, present only for [`Convergence::Converges`].
    pub tail_bound: Option<f64>,
    /// Ratios of consecutive condensed terms `2^m k_probe g(2^m k_probe)`.
    pub probe_ratios: Vec<f64>,
}

const PROBE_DOUBLINGS: u32 = 40;
const CONVERGE_RATIO: f64 = 0.9;

impl DecreasingFunctional {
    /// Checks `g(0) > 0` and monotonicity on a geometric grid up to `10⁹`.
    pub fn new(
        label: impl Into<String>,
        g: impl Fn(f64) -> f64 + Send + Sync + 'static,
        eventually_convex: bool,
    ) -> Result<Self> {
        let g0 = g(0.0);
        if !(g0 > 0.0 && g0.is_finite()) {
            return Err(invalid("g", format!("g(0) must be positive and finite, got {g0}")));
        }
        let mut prev = g0;
        let mut x = 1e-3;
        while x < 1e9 {
            let v = g(x);
            if !(v >= 0.0) || v > prev * (1.0 + 1e-12) {
                return Err(invalid("g", format!("not nonnegative and nonincreasing near x = {x}")));
            }
            prev = v;
            x *= 1.5;
        }
        Ok(Self { label: label.into(), g: Arc::new(g), tail_integral: None, g0, eventually_convex })
    }

    /// Supplies `s ↦ ∫_s^∞ g` for the sampler's stopping rule.
    pub fn with_tail_integral(mut self, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.tail_integral = Some(Arc::new(f));
        self
    }

    /// `g(x) = q^x`.
    pub fn exponential(q: f64) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(invalid("q", format!("base must lie in (0, 1), got {q}")));
        }
        let lq = -q.ln();
        Ok(Self::new(format!("q^x, q = {q}"), move |x| (-lq * x).exp(), true)?
            .with_tail_integral(move |s| (-lq * s).exp() / lq))
    }

    /// `g(x) = (x + 1)^{−p}` for any `p > 0`; it is integrable only for `p > 1`.
    pub fn inverse_power(p: f64) -> Result<Self> {
        if !(p > 0.0) {
            return Err(invalid("p", format!("power must be positive, got {p}")));
        }
        Ok(Self::new(format!("(x+1)^-{p}"), move |x| (x + 1.0).powf(-p), true)?.with_tail_integral(move |s| {
            if p > 1.0 {
                (s + 1.0).powf(1.0 - p) / (p - 1.0)
            } else {
                f64::INFINITY
            }
        }))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.g)(x)
    }

    pub fn g0(&self) -> f64 {
        self.g0
    }

    /// Upper bound on `Σ_{m≥0} g(s + m)`: `g(s) + ∫_s^∞ g`.
    pub fn tail_sum_bound(&self, s: f64) -> f64 {
        let integral = match &self.tail_integral {
            Some(f) => f(s),
            None => {
                let g = &self.g;
                let mapped = |t: f64| {
                    if t >= 1.0 {
                        return 0.0;
                    }
                    let x = s + t / (1.0 - t);
                    g(x) / ((1.0 - t) * (1.0 - t))
                };
                integrate(mapped, 0.0, 1.0, QuadOptions::tol(1e-14, 1e-8)).map(|q| q.value).unwrap_or(f64::INFINITY)
            }
        };
        self.eval(s) + integral
    }

    /// Three-valued test of `Σ_k g(k) < ∞` by Cauchy condensation.
    ///
    /// The condensed terms `t_m = 2^m k_probe g(2^m k_probe)` are probed for
    /// `m ≤ 40`. Nondecreasing terms over the last six probes witness
    /// divergence (`k g(k)` does not vanish). Convergence is reported only
    /// for integrands flagged eventually convex whose last six ratios stay
    /// below 0.9, with the tail bound `Σ t_m + t_last · ρ/(1 − ρ)`.
    pub fn converges(&self, k_probe: usize) -> Certificate {
        assert!(k_probe >= 10, "probe depth must be at least 10");
        let partial_sum: f64 = (1..=k_probe).map(|k| self.eval(k as f64)).sum();
        let t: Vec<f64> = (0..=PROBE_DOUBLINGS)
            .map(|m| {
                let x = k_probe as f64 * 2f64.powi(m as i32);
                x * self.eval(x)
            })
            .collect();
        let ratios: Vec<f64> = t.windows(2).map(|w| if w[0] == 0.0 { 0.0 } else { w[1] / w[0] }).collect();
        let last = &ratios[ratios.len() - 6..];
        let verdict = if last.iter().all(|&r| r >= 1.0 - 1e-12) {
            Convergence::Diverges
        } else if self.eventually_convex && last.iter().all(|&r| r <= CONVERGE_RATIO) {
            Convergence::Converges
        } else {
            Convergence::Unknown
        };
        let tail_bound = (verdict == Convergence::Converges).then(|| {
            let rho = last.iter().fold(0.0f64, |s, &r| s.max(r));
            t.iter().sum::<f64>() + t[t.len() - 1] * rho / (1.0 - rho)
        });
        Certificate { verdict, partial_sum, tail_bound, probe_ratios: ratios }
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceEstimate {
    pub value: Complex64,
    pub std_error: f64,
}

/// `E Π_{k=0}^{K} λ̃/(λ̃ + g(S̃_k) u)` averaged over `n_mc` jump paths, with
/// `S̃_0 = 0` and the zero-atom-free jumps of `spec`.
pub fn laplace_limit(
    df: &DecreasingFunctional,
    spec: &IvsSpec,
    u: Complex64,
    depth: usize,
    n_mc: usize,
    seed: u64,
) -> Result<LaplaceEstimate> {
    match df.converges(16).verdict {
        Convergence::Converges => {}
        Convergence::Diverges => return Err(Error::DivergentFunctional),
        Convergence::Unknown => return Err(Error::UncertifiedFunctional),
    }
    let lam = spec.intensity();
    if !(u.re > -lam / df.g0()) {
        return Err(invalid("u", format!("need Re u > {}, got {u}", -lam / df.g0())));
    }
    if n_mc < 2 {
        return Err(invalid("n_mc", "need at least two paths"));
    }
    let jumps = JumpSampler::new(spec.jumps())?;
    let draws: Vec<Complex64> = (0..n_mc)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            let mut s = 0u64;
            let mut prod = Complex64::new(lam, 0.0) / (lam + df.eval(0.0) * u);
            for _ in 0..depth {
                s += jumps.draw(&mut rng);
                prod *= Complex64::new(lam, 0.0) / (lam + df.eval(s as f64) * u);
            }
            prod
        })
        .collect();
    let n = n_mc as f64;
    let mean = draws.iter().sum::<Complex64>() / n;
    let var = draws.iter().map(|d| (d - mean).norm_sqr()).sum::<f64>() / (n - 1.0);
    Ok(LaplaceEstimate { value: mean, std_error: (var / n).sqrt() })
}

/// Partial-fraction weights `Π_{j≠k} (1 − r_k/r_j)^{−1}` of a sum of
/// independent exponentials with distinct rates, by direct products.
pub fn partial_fraction_weights(rates: &[f64]) -> Result<Vec<f64>> {
    check_rates(rates)?;
    Ok((0..rates.len())
        .map(|k| {
            rates.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, &rj)| 1.0 / (1.0 - rates[k] / rj)).product()
        })
        .collect())
}

/// The same weights as Lagrange basis polynomials at the rate points
/// evaluated at zero, `ℓ(0) β_k / (0 − r_k)`, with barycentric `β_k`.
pub fn lagrange_weights(rates: &[f64]) -> Result<Vec<f64>> {
    check_rates(rates)?;
    let ell0: f64 = rates.iter().map(|r| -r).product();
    Ok((0..rates.len())
        .map(|k| {
            let beta: f64 =
                1.0 / rates.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, &rj)| rates[k] - rj).product::<f64>();
            ell0 * beta / -rates[k]
        })
        .collect())
}

fn check_rates(rates: &[f64]) -> Result<()> {
    if rates.is_empty() || rates.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
        return Err(invalid("rates", "need positive finite rates"));
    }
    for (i, a) in rates.iter().enumerate() {
        if rates[i + 1..].contains(a) {
            return Err(Error::DegenerateRates);
        }
    }
    Ok(())
}

/// Density of a sum of independent exponentials with distinct `rates`.
pub fn hypoexponential_density(rates: &[f64], x: f64) -> Result<f64> {
    let w = partial_fraction_weights(rates)?;
    Ok(w.iter().zip(rates).map(|(wk, rk)| wk * rk * (-rk * x).exp()).sum())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversePowerOptions {
    /// Outer depth `K`: number of exponential stages kept.
    pub k: usize,
    /// Largest jump size enumerated per level; `None` picks the smallest size
    /// covering `1 − 10⁻³` of the jump law.
    pub nested_depth: Option<usize>,
    /// Index vectors whose probability falls below this are dropped.
    pub prune: f64,
    /// Divide by the enumerated probability mass.
    pub renormalize: bool,
    pub max_vectors: usize,
}

impl Default for InversePowerOptions {
    fn default() -> Self {
        Self { k: 10, nested_depth: None, prune: 1e-10, renormalize: true, max_vectors: 50_000_000 }
    }
}

const NESTED_COVERAGE: f64 = 1.0 - 1e-3;

/// Truncated law of `J_p = ∫ (S_t + 1)^{−p} dt`.
///
/// Summing over the index vectors `(z_1, …, z_{K−1})` and collecting equal
/// partial sums `s` turns the density into the Dirichlet-type series
/// `Σ_s W_s r_s e^{−r_s x}` with `r_s = λ̃ (1 + s)^p`.
#[derive(Debug, Clone)]
pub struct InversePowerModel {
    p: f64,
    lambda_eff: f64,
    k: usize,
    nested_depth: usize,
    kept_mass: f64,
    renormalize: bool,
    vectors: usize,
    rates: Vec<f64>,
    weights: Vec<f64>,
}

struct Enumeration {
    acc: Vec<Accumulator>,
    mass: f64,
    vectors: usize,
}

impl InversePowerModel {
    pub fn new(spec: &IvsSpec, p: f64, opts: &InversePowerOptions) -> Result<Self> {
        if !(p > 1.0) {
            return Err(invalid("p", format!("power must exceed 1, got {p}")));
        }
        if opts.k == 0 {
            return Err(invalid("k", "need at least one stage"));
        }
        if !(opts.prune >= 0.0 && opts.prune < 1.0) {
            return Err(invalid("prune", format!("must lie in [0, 1), got {}", opts.prune)));
        }
        let pmf = spec.jumps();
        let coverage = |d: usize| (1..=d).map(|k| pmf.mass(k)).sum::<f64>();
        let depth = match opts.nested_depth {
            Some(d) => {
                if d == 0 {
                    return Err(invalid("nested_depth", "need at least one jump size"));
                }
                if opts.k > 1 && coverage(d) < NESTED_COVERAGE {
                    return Err(invalid(
                        "nested_depth",
                        format!("sizes up to {d} cover only {:.6} of the jump law", coverage(d)),
                    ));
                }
                d
            }
            None => (1..=pmf.max_k()).find(|&d| coverage(d) >= NESTED_COVERAGE).unwrap_or(pmf.max_k()),
        };
        let depth = depth.min(pmf.max_k());
        let probs: Vec<f64> = (1..=depth).map(|k| pmf.mass(k)).collect();
        let levels = opts.k - 1;
        let slots = levels * depth + 1;

        let explore = |first: Option<usize>| -> Result<Enumeration> {
            let mut e = Enumeration { acc: vec![Accumulator::new(); slots], mass: 0.0, vectors: 0 };
            let mut sums = vec![0usize; opts.k];
            let (start_s, start_p, start_level) = match first {
                Some(z) => (z + 1, probs[z], 1),
                None => (0, 1.0, 0),
            };
            if first.is_some() {
                sums[1] = start_s;
            }
            dfs(start_level, start_s, start_p, &mut sums, &probs, p, opts, &mut e)?;
            Ok(e)
        };
        let parts: Vec<Enumeration> = if levels == 0 {
            vec![explore(None)?]
        } else {
            (0..depth).into_par_iter().map(|z| explore(Some(z))).collect::<Result<Vec<_>>>()?
        };
        let mut acc = vec![Accumulator::new(); slots];
        let (mut mass, mut vectors) = (0.0, 0);
        for part in &parts {
            for (a, b) in acc.iter_mut().zip(&part.acc) {
                a.add_dd(b.value());
            }
            mass += part.mass;
            vectors += part.vectors;
        }
        if vectors > opts.max_vectors {
            return Err(Error::TruncationBudgetExceeded(vectors));
        }
        // the last jump only matters through its truncation
        let last = if opts.k > 1 { coverage(depth) } else { 1.0 };
        let lambda_eff = spec.intensity();
        let (mut rates, mut weights) = (Vec::new(), Vec::new());
        for (s, a) in acc.iter().enumerate() {
            let w = a.value().to_f64();
            if w != 0.0 {
                rates.push(lambda_eff * (1.0 + s as f64).powf(p));
                weights.push(w * last);
            }
        }
        Ok(Self {
            p,
            lambda_eff,
            k: opts.k,
            nested_depth: depth,
            kept_mass: mass * last,
            renormalize: opts.renormalize,
            vectors,
            rates,
            weights,
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn lambda_eff(&self) -> f64 {
        self.lambda_eff
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn nested_depth(&self) -> usize {
        self.nested_depth
    }

    /// Probability of the enumerated index vectors.
    pub fn kept_mass(&self) -> f64 {
        self.kept_mass
    }

    /// Number of index vectors summed.
    pub fn vectors(&self) -> usize {
        self.vectors
    }

    /// `(r_s, W_s)` pairs of the collected series.
    pub fn terms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.rates.iter().copied().zip(self.weights.iter().copied())
    }

    fn norm(&self) -> f64 {
        if self.renormalize {
            self.kept_mass
        } else {
            1.0
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return 0.0;
        }
        let mut acc = Accumulator::new();
        for (r, w) in self.terms() {
            acc.add(w * r * (-r * x).exp());
        }
        (acc.value().to_f64() / self.norm()).max(0.0)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return 0.0;
        }
        let mut acc = Accumulator::new();
        for (r, w) in self.terms() {
            acc.add(w * -(-r * x).exp_m1());
        }
        (acc.value().to_f64() / self.norm()).clamp(0.0, 1.0)
    }

    /// Truncated Laplace transform `Σ_s W_s r_s / (r_s + u)`.
    pub fn laplace(&self, u: Complex64) -> Result<Complex64> {
        if !(u.re > -self.lambda_eff) {
            return Err(invalid("u", format!("need Re u > {}, got {u}", -self.lambda_eff)));
        }
        let s: Complex64 = self.terms().map(|(r, w)| w * r / (r + u)).sum();
        Ok(s / self.norm())
    }

    /// `Σ_s W_s / r_s`, the mean of the truncated law.
    pub fn mean(&self) -> f64 {
        self.moment(1)
    }

    /// `m! Σ_s W_s / r_s^m`.
    pub fn moment(&self, m: u32) -> f64 {
        let fact: f64 = (1..=m).map(f64::from).product();
        fact * self.terms().map(|(r, w)| w * r.powi(-(m as i32))).sum::<f64>() / self.norm()
    }

    /// `|Σ_{k≥K+2} log(λ̃ / (λ̃ + k^{−p} u))|`, the heuristic size of the
    /// stages beyond `K`.
    pub fn log_tail_bound(&self, u: Complex64) -> f64 {
        log_tail(self.lambda_eff, self.p, self.k, u)
    }
}

fn log_tail(lambda: f64, p: f64, k: usize, u: Complex64) -> f64 {
    let mut sum = Complex64::new(0.0, 0.0);
    let mut j = k + 2;
    loop {
        let z = u * (j as f64).powf(-p) / lambda;
        let term = if z.norm() < 1e-4 { -(z - z * z / 2.0 + z * z * z / 3.0) } else { -(1.0 + z).ln() };
        sum += term;
        if z.norm() < 1e-12 || j > 10_000_000 {
            // the remaining terms behave like −u j^{−p}/λ
            let rest = (j as f64 + 0.5).powf(1.0 - p) / (p - 1.0);
            sum -= u / lambda * rest;
            break;
        }
        j += 1;
    }
    sum.norm()
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    level: usize,
    s: usize,
    prob: f64,
    sums: &mut [usize],
    probs: &[f64],
    p: f64,
    opts: &InversePowerOptions,
    e: &mut Enumeration,
) -> Result<()> {
    if prob < opts.prune {
        return Ok(());
    }
    if level + 1 == opts.k {
        e.vectors += 1;
        if e.vectors > opts.max_vectors {
            return Err(Error::TruncationBudgetExceeded(e.vectors));
        }
        e.mass += prob;
        let rho: Vec<f64> = sums.iter().map(|&t| (1.0 + t as f64).powf(p)).collect();
        for (kk, &t) in sums.iter().enumerate() {
            let w: f64 =
                rho.iter().enumerate().filter(|&(j, _)| j != kk).map(|(_, &rj)| 1.0 / (1.0 - rho[kk] / rj)).product();
            e.acc[t].add(prob * w);
        }
        return Ok(());
    }
    for (z, &pz) in probs.iter().enumerate() {
        let next = s + z + 1;
        sums[level + 1] = next;
        dfs(level + 1, next, prob * pz, sums, probs, p, opts, e)?;
    }
    Ok(())
}
