//! Driftless exponential functional `I_q = ∫₀^∞ q^{S_t} dt`.
//!
//! The density is the generalized Dirichlet series
//! `φ(x) = (a/D) Σ_j c_j exp(−a q^{−j} x)` with `a = λ·P{Z ≥ 1}`,
//! `D = Σ_j c_j q^j`, `c_0 = 1` and
//! `c_j = Σ_{k≤j} q^{−k} P{Z=k} c_{j−k} / ((1 − q^{−j}) P{Z ≥ 1})`.
//!
//! The recurrence is run in the rescaled form
//! `c_j = Σ_k q^{j−k} p̃_k c_{j−k} / (q^j − 1)`, which never forms `q^{−k}`.
//! Accumulation is double-double; when the cancellation factor
//! `Σ|c_j q^j| / |D|` exceeds [`SeriesOptions::max_condition`] the table is
//! rebuilt in MPFR arithmetic (feature `mp`).
//!
//! `K` is the smallest index with `|a Σ_{j≤K} c_j / Σ_{j≤K} c_j q^j|` below the
//! threshold. By default evaluation keeps extending the table past `K` until
//! that quantity (the value of the truncated density at `0⁺`) is negligible,
//! see [`EvalDepth`].

use crate::catalog::IvsSpec;
use crate::dd::{Accumulator, Dd};
use crate::error::{invalid, Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[cfg(feature = "mp")]
mod multi;

/// How many coefficients evaluation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalDepth {
    /// Exactly `c_0..c_K`.
    Criterion,
    /// Continue past `K` until the partial sum `Σ c_j` is negligible or the
    /// extension budget `max(K, 64)` runs out.
    Extended,
}

/// Arithmetic used for the coefficient table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arithmetic {
    /// Double-double, falling back to multiprecision when ill-conditioned.
    Auto,
    Double,
    /// MPFR with at least this many bits (raised automatically if needed).
    Multi {
        bits: u32,
    },
}

/// What to do when the criterion is unmet at `k_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapPolicy {
    Error,
    /// Keep the table truncated at `k_max` and flag it.
    Accept,
}

/// Base of the functional. `ExpNeg(ε)` means `q = e^{−ε}`, evaluated in the
/// working precision rather than rounded to a double first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QBase {
    Value(f64),
    ExpNeg(f64),
}

impl QBase {
    pub fn value(self) -> f64 {
        match self {
            QBase::Value(q) => q,
            QBase::ExpNeg(e) => (-e).exp(),
        }
    }

    fn dd(self) -> Dd {
        match self {
            QBase::Value(q) => Dd::new(q),
            QBase::ExpNeg(e) => Dd::exp_neg(Dd::new(e)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesOptions {
    pub threshold: f64,
    pub k_max: usize,
    /// Compute at least `c_0..c_{min_terms}` regardless of the criterion.
    pub min_terms: usize,
    pub depth: EvalDepth,
    pub arithmetic: Arithmetic,
    pub on_cap: CapPolicy,
    /// Largest cancellation factor accepted in double-double.
    pub max_condition: f64,
    /// Relative tolerance for negative density values (to the maximum).
    pub tol_neg: f64,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        Self {
            threshold: 1e-3,
            k_max: 10_000,
            min_terms: 0,
            depth: EvalDepth::Extended,
            arithmetic: Arithmetic::Auto,
            on_cap: CapPolicy::Error,
            max_condition: 1e8,
            tol_neg: 1e-9,
        }
    }
}

/// Built coefficient table with its evaluators.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpFunctionalModel {
    q: f64,
    scale_a: f64,
    coeffs: Vec<f64>,
    coeffs_q: Vec<f64>,
    denom: f64,
    #[serde(rename = "K")]
    k: usize,
    criterion_value: f64,
    criterion_met: bool,
    tail_criterion: f64,
    condition_log10: f64,
    density_max: f64,
    tol_neg: f64,
    precision_bits: u32,
    #[serde(skip)]
    aq_inv: Vec<f64>,
    #[cfg(feature = "mp")]
    #[serde(skip)]
    multi: Option<std::sync::Arc<multi::MultiTable>>,
}

/// Raw output of a coefficient run, shared by both arithmetics.
struct Table {
    coeffs: Vec<f64>,
    coeffs_q: Vec<f64>,
    aq_inv: Vec<f64>,
    denom: f64,
    k: usize,
    criterion_value: f64,
    criterion_met: bool,
    tail_criterion: f64,
    condition_log10: f64,
}

/// Decides `K` and the evaluation length from the running criterion values.
struct Stopper {
    threshold: f64,
    k_max: usize,
    min_terms: usize,
    depth: EvalDepth,
    negligible: f64,
    k: Option<usize>,
    crit_k: f64,
}

impl Stopper {
    fn new(opts: &SeriesOptions, negligible: f64) -> Self {
        Self {
            threshold: opts.threshold,
            k_max: opts.k_max,
            min_terms: opts.min_terms,
            depth: opts.depth,
            negligible,
            k: None,
            crit_k: f64::NAN,
        }
    }

    /// Feed `crit(j)`; returns true when the table is long enough.
    fn done(&mut self, j: usize, crit: f64) -> bool {
        if self.k.is_none() && j >= 1 && crit < self.threshold {
            self.k = Some(j);
            self.crit_k = crit;
        }
        if j >= self.k_max {
            return true;
        }
        if j < self.min_terms {
            return false;
        }
        match (self.k, self.depth) {
            (None, _) => false,
            (Some(_), EvalDepth::Criterion) => true,
            (Some(k), EvalDepth::Extended) => crit <= self.negligible || j >= k + k.max(64),
        }
    }
}

fn check_inputs(spec: &IvsSpec, q: f64, opts: &SeriesOptions) -> Result<()> {
    if !(q > 0.0 && q < 1.0) {
        return Err(invalid("q", format!("base must lie in (0, 1), got {q}")));
    }
    if spec.drift() != 0.0 {
        return Err(invalid("drift", "series engine needs a driftless process"));
    }
    if !(opts.threshold > 0.0) {
        return Err(invalid("threshold", format!("must be positive, got {}", opts.threshold)));
    }
    if opts.k_max == 0 {
        return Err(invalid("k_max", "must be at least 1"));
    }
    Ok(())
}

/// Builds the coefficient table for a driftless spec at base `q`.
pub fn build_coefficients(spec: &IvsSpec, q: f64, opts: &SeriesOptions) -> Result<ExpFunctionalModel> {
    build_coefficients_base(spec, QBase::Value(q), opts)
}

/// As [`build_coefficients`] with the base given symbolically.
pub fn build_coefficients_base(spec: &IvsSpec, base: QBase, opts: &SeriesOptions) -> Result<ExpFunctionalModel> {
    let q = base.value();
    check_inputs(spec, q, opts)?;
    let a = spec.intensity();
    let p = spec.jumps().masses();
    // density scale is 1/E I; extension stops once the density at 0⁺ is
    // below 1e-13 of it
    let negligible = 1e-13 * a * (1.0 - spec.jumps().pgf(q));
    let max_log10 = opts.max_condition.log10();

    let prepared = match opts.arithmetic {
        Arithmetic::Double => {
            let t = build_double(p, base, a, opts, negligible)?;
            if !(t.condition_log10 <= max_log10) {
                return Err(Error::IllConditioned(10f64.powf(t.condition_log10)));
            }
            Prepared::Double(t)
        }
        Arithmetic::Auto => {
            let t = build_double(p, base, a, opts, negligible);
            match t {
                Ok(t) if t.condition_log10 <= max_log10 => Prepared::Double(t),
                Ok(t) => multi_or_fail(p, base, a, opts, negligible, 128, t.condition_log10)?,
                Err(Error::IllConditioned(_)) | Err(Error::DegenerateDenominator(_)) => {
                    multi_or_fail(p, base, a, opts, negligible, 128, f64::INFINITY)?
                }
                Err(e) => return Err(e),
            }
        }
        Arithmetic::Multi { bits } => multi_or_fail(p, base, a, opts, negligible, bits.max(64), f64::NAN)?,
    };
    finish(spec, q, a, prepared, opts)
}

enum Prepared {
    Double(Table),
    #[cfg(feature = "mp")]
    Multi(Table, u32, multi::MultiTable),
}

#[allow(unused_variables)]
fn multi_or_fail(
    p: &[f64],
    base: QBase,
    a: f64,
    opts: &SeriesOptions,
    negligible: f64,
    bits: u32,
    condition_log10: f64,
) -> Result<Prepared> {
    #[cfg(feature = "mp")]
    {
        let (t, bits, m) = multi::build(p, base, a, opts, negligible, bits)?;
        Ok(Prepared::Multi(t, bits, m))
    }
    #[cfg(not(feature = "mp"))]
    {
        if condition_log10.is_nan() {
            Err(invalid("arithmetic", "multiprecision needs the `mp` feature"))
        } else {
            Err(Error::IllConditioned(10f64.powf(condition_log10)))
        }
    }
}

/// Resolves `K` once the run has stopped.
fn settle_k(k: Option<usize>, crit_k: f64, crit_last: f64, opts: &SeriesOptions) -> Result<(usize, f64, bool)> {
    match k {
        Some(k) => Ok((k, crit_k, true)),
        None => match opts.on_cap {
            CapPolicy::Error => Err(Error::CapExceeded { cap: opts.k_max, achieved: crit_last }),
            CapPolicy::Accept => Ok((opts.k_max, crit_last, false)),
        },
    }
}

fn build_double(p: &[f64], base: QBase, a: f64, opts: &SeriesOptions, negligible: f64) -> Result<Table> {
    let qd = base.dd();
    let mut qpow = vec![Dd::ONE];
    let mut c: Vec<Dd> = vec![Dd::ONE];
    let mut cq: Vec<Dd> = vec![Dd::ONE];
    let mut sum_c = Dd::ONE;
    let mut sum_cq = Dd::ONE;
    let mut abs_cq = 1.0;
    let mut stop = Stopper::new(opts, negligible);
    let mut crit = a;
    let mut j = 0usize;
    while !stop.done(j, crit) {
        j += 1;
        let qj = qpow[j - 1] * qd;
        qpow.push(qj);
        let mut acc = Accumulator::new();
        for k in 1..=j.min(p.len()) {
            if p[k - 1] != 0.0 {
                acc.add_dd(cq[j - k] * p[k - 1]);
            }
        }
        let cj = acc.value() / (qj - Dd::ONE);
        if !cj.is_finite() {
            return Err(Error::IllConditioned(f64::INFINITY));
        }
        let cqj = cj * qj;
        c.push(cj);
        cq.push(cqj);
        sum_c = sum_c + cj;
        sum_cq = sum_cq + cqj;
        abs_cq += cqj.to_f64().abs();
        crit = (Dd::new(a) * sum_c / sum_cq).to_f64().abs();
    }
    let denom = sum_cq.to_f64();
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::DegenerateDenominator(denom));
    }
    let (k, crit_k, met) = settle_k(stop.k, stop.crit_k, crit, opts)?;
    let qinv = Dd::ONE / qd;
    let mut aq_inv = Vec::with_capacity(c.len());
    let mut s = Dd::new(a);
    for _ in 0..c.len() {
        aq_inv.push(s.to_f64());
        s = s * qinv;
    }
    Ok(Table {
        coeffs: c.iter().map(|x| x.to_f64()).collect(),
        coeffs_q: cq.iter().map(|x| x.to_f64()).collect(),
        aq_inv,
        denom,
        k,
        criterion_value: crit_k,
        criterion_met: met,
        tail_criterion: crit,
        condition_log10: (abs_cq / denom.abs()).log10(),
    })
}

/// Unrepresented jump mass below this only gets a debug message.
const NEGLIGIBLE_TAIL: f64 = 1e-10;

fn finish(spec: &IvsSpec, q: f64, a: f64, prepared: Prepared, opts: &SeriesOptions) -> Result<ExpFunctionalModel> {
    #[cfg(feature = "mp")]
    let (t, bits, multi) = match prepared {
        Prepared::Double(t) => (t, 106, None),
        Prepared::Multi(t, b, m) => (t, b, Some(std::sync::Arc::new(m))),
    };
    #[cfg(not(feature = "mp"))]
    let (t, bits) = match prepared {
        Prepared::Double(t) => (t, 106),
    };
    if t.coeffs.len() > spec.jumps().max_k() + 1 && spec.jumps().tail_mass() > 0.0 {
        let level = if spec.jumps().tail_mass() > NEGLIGIBLE_TAIL { log::Level::Warn } else { log::Level::Debug };
        log::log!(
            level,
            "coefficient index {} exceeds the stored jump support {}; tail mass {:e} is not represented",
            t.coeffs.len() - 1,
            spec.jumps().max_k(),
            spec.jumps().tail_mass()
        );
    }
    let mut model = ExpFunctionalModel {
        q,
        scale_a: a,
        coeffs: t.coeffs,
        coeffs_q: t.coeffs_q,
        denom: t.denom,
        k: t.k,
        criterion_value: t.criterion_value,
        criterion_met: t.criterion_met,
        tail_criterion: t.tail_criterion,
        condition_log10: t.condition_log10,
        density_max: 0.0,
        tol_neg: opts.tol_neg,
        precision_bits: bits,
        aq_inv: t.aq_inv,
        #[cfg(feature = "mp")]
        multi,
    };
    model.validate_sign(spec)?;
    Ok(model)
}

impl ExpFunctionalModel {
    pub fn q(&self) -> f64 {
        self.q
    }

    /// `a = λ·P{Z ≥ 1}`.
    pub fn scale_a(&self) -> f64 {
        self.scale_a
    }

    /// Coefficients used for evaluation, `c_0..c_J` with `J ≥ K`.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// `Σ_{j≤J} c_j q^j`.
    pub fn denom(&self) -> f64 {
        self.denom
    }

    /// Truncation index selected by the criterion.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of terms used in evaluation.
    pub fn eval_terms(&self) -> usize {
        self.coeffs.len()
    }

    /// `|a Σ_{j≤K} c_j / Σ_{j≤K} c_j q^j|`.
    pub fn criterion_value(&self) -> f64 {
        self.criterion_value
    }

    /// False when the table was accepted at the cap without meeting the criterion.
    pub fn criterion_met(&self) -> bool {
        self.criterion_met
    }

    /// Criterion value at the last evaluated index, i.e. the truncated
    /// density at `0⁺`.
    pub fn tail_criterion(&self) -> f64 {
        self.tail_criterion
    }

    /// `log10` of the cancellation factor `Σ|c_j q^j| / |D|`.
    pub fn condition_log10(&self) -> f64 {
        self.condition_log10
    }

    /// Significand bits of the arithmetic that produced the table.
    pub fn precision_bits(&self) -> u32 {
        self.precision_bits
    }

    /// Largest density value seen on the validation grid.
    pub fn density_max(&self) -> f64 {
        self.density_max
    }

    fn ensure_exponents(&mut self) {
        if self.aq_inv.len() != self.coeffs.len() {
            let mut s = self.scale_a;
            self.aq_inv = (0..self.coeffs.len())
                .map(|_| {
                    let v = s;
                    s /= self.q;
                    v
                })
                .collect();
        }
    }

    /// Re-attaches derived data after deserialization.
    pub fn restore(mut self) -> Self {
        self.ensure_exponents();
        self
    }

    fn raw_density(&self, x: f64) -> f64 {
        #[cfg(feature = "mp")]
        if let Some(m) = &self.multi {
            return m.density(x);
        }
        let mut acc = Accumulator::new();
        for (c, s) in self.coeffs.iter().zip(&self.aq_inv) {
            let t = s * x;
            if t > 745.0 {
                break;
            }
            acc.add(c * (-t).exp());
        }
        self.scale_a * acc.value().to_f64() / self.denom
    }

    /// Density `φ_q(x)`; small negative truncation noise is clamped to 0.
    pub fn density(&self, x: f64) -> f64 {
        assert!(x > 0.0, "density needs x > 0, got {x}");
        let v = self.raw_density(x);
        if v < 0.0 {
            if v < -self.tol_neg * self.density_max {
                log::warn!("density {v:e} at x = {x:e} below the negativity tolerance; clamped");
            } else {
                log::debug!("clamped density {v:e} at x = {x:e}");
            }
            return 0.0;
        }
        v
    }

    /// Density with an estimate of the truncation remainder, `crit·e^{−a q^{−J−1} x}`.
    pub fn density_with_error(&self, x: f64) -> (f64, f64) {
        let next = self.scale_a / self.q.powi(self.coeffs.len() as i32);
        (self.density(x), self.tail_criterion * (-next * x).exp())
    }

    /// Below this point the remainder estimate exceeds `tol_neg × max density`.
    pub fn crossover(&self) -> f64 {
        let next = self.scale_a / self.q.powi(self.coeffs.len() as i32);
        let floor = self.tol_neg * self.density_max;
        if self.tail_criterion <= floor || floor == 0.0 {
            0.0
        } else {
            (self.tail_criterion / floor).ln() / next
        }
    }

    /// `P{I_q ≤ x} = 1 − (1/D) Σ c_j q^j exp(−a q^{−j} x)`, clamped to `[0, 1]`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        #[cfg(feature = "mp")]
        if let Some(m) = &self.multi {
            return m.cdf(x).clamp(0.0, 1.0);
        }
        let mut acc = Accumulator::new();
        acc.add(self.denom);
        for (cq, s) in self.coeffs_q.iter().zip(&self.aq_inv) {
            let t = s * x;
            if t > 745.0 {
                break;
            }
            acc.add(-cq * (-t).exp());
        }
        (acc.value().to_f64() / self.denom).clamp(0.0, 1.0)
    }

    /// `E e^{−uI} = (a/D) Σ c_j / (u + a q^{−j})` for `Re u ≥ 0`.
    pub fn laplace(&self, u: Complex64) -> Complex64 {
        assert!(u.re > -self.scale_a, "Laplace transform needs Re u > -a");
        #[cfg(feature = "mp")]
        if let Some(m) = &self.multi {
            return m.laplace(u);
        }
        let mut re = Accumulator::new();
        let mut im = Accumulator::new();
        let mut qj = 1.0;
        for cq in &self.coeffs_q {
            let t = cq / (u * qj + self.scale_a);
            re.add(t.re);
            im.add(t.im);
            qj *= self.q;
        }
        Complex64::new(re.value().to_f64(), im.value().to_f64()) * (self.scale_a / self.denom)
    }

    /// Moment of the truncated series, `m! Σ c_j q^{(m+1)j} / (a^m D)`.
    pub fn series_moment(&self, m: u32) -> f64 {
        #[cfg(feature = "mp")]
        if let Some(t) = &self.multi {
            return t.moment(m);
        }
        let mut acc = Accumulator::new();
        let qm = self.q.powi(m as i32 + 1);
        let mut w = 1.0;
        for c in &self.coeffs {
            acc.add(c * w);
            w *= qm;
        }
        let fact: f64 = (1..=m).map(f64::from).product();
        fact * acc.value().to_f64() / (self.scale_a.powi(m as i32) * self.denom)
    }

    /// Checks sign-definiteness on a log grid around the mean and records the
    /// maximum.
    fn validate_sign(&mut self, spec: &IvsSpec) -> Result<()> {
        let m = mean(spec, self.q);
        // multiprecision evaluation is costly; a coarser grid suffices there
        let points = if self.precision_bits > 106 { 48 } else { 400 };
        let grid = log_grid(1e-6 * m, 60.0 * m, points);
        let vals: Vec<(f64, f64)> = grid.iter().map(|&x| (x, self.raw_density(x))).collect();
        let max = vals.iter().map(|v| v.1).fold(0.0, f64::max);
        self.density_max = max;
        if let Some(&(x, v)) = vals.iter().filter(|(_, v)| *v < -self.tol_neg * max).min_by(|a, b| a.1.total_cmp(&b.1))
        {
            return Err(Error::NegativeDensity { x, value: v });
        }
        Ok(())
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (l, h) = (lo.ln(), hi.ln());
    (0..n).map(|i| (l + (h - l) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// `Ψ_q(j) = λ(1 − E q^{jZ})`, the Laplace exponent of `(−log q)S` at `j`.
fn psi_q(spec: &IvsSpec, q: f64, j: u32) -> f64 {
    spec.intensity() * (1.0 - spec.jumps().pgf(q.powi(j as i32)))
}

/// `E I_q = 1 / (λ(1 − E q^Z))`.
pub fn mean(spec: &IvsSpec, q: f64) -> f64 {
    1.0 / psi_q(spec, q, 1)
}

/// `E I_q^m = m! / Π_{j≤m} Ψ_q(j)`.
pub fn moment(spec: &IvsSpec, q: f64, m: u32) -> f64 {
    let mut v = 1.0;
    for j in 1..=m {
        v *= j as f64 / psi_q(spec, q, j);
    }
    v
}

/// `Π_{i≥1} (1 − E q^{iZ})`, the value the normalizer `Σ_j c_j q^j` converges to.
pub fn normalizer_product(spec: &IvsSpec, q: f64) -> f64 {
    let mut prod = 1.0;
    let mut i = 1;
    loop {
        let f = 1.0 - spec.jumps().pgf(q.powi(i));
        prod *= f;
        if (1.0 - f).abs() < 1e-17 || i > 100_000 {
            break;
        }
        i += 1;
    }
    prod
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{space_fractional_jumps, IvsSpec};
    use crate::quad::{integrate_pieces, QuadOptions};
    use proptest::prelude::*;

    const E_INV: f64 = 0.36787944117144233;

    fn poisson_closed_form(q: f64, j: usize) -> f64 {
        // (−1)^j q^{j(j−1)/2} / (q;q)_j, computed independently of the engine
        let mut den = 1.0;
        let mut qi = q;
        for _ in 0..j {
            den *= 1.0 - qi;
            qi *= q;
        }
        let sign = if j.is_multiple_of(2) { 1.0 } else { -1.0 };
        sign * q.powf((j * (j.saturating_sub(1))) as f64 / 2.0) / den
    }

    #[test]
    fn poisson_coefficients_have_closed_form() {
        let spec = IvsSpec::poisson(1.0).unwrap();
        let opts = SeriesOptions { min_terms: 30, ..Default::default() };
        for q in [0.2, E_INV, 0.6] {
            let m = build_coefficients(&spec, q, &opts).unwrap();
            assert_eq!(m.coeffs()[0], 1.0);
            for j in 0..=30 {
                let want = poisson_closed_form(q, j);
                let got = m.coeffs()[j];
                if want.abs() > 1e-280 {
                    assert!((got - want).abs() <= 1e-10 * want.abs(), "q={q} j={j}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn first_coefficients_of_catalog_laws() {
        let q = E_INV;
        let sf = IvsSpec::new(1.0, space_fractional_jumps(0.9).unwrap(), 0.0).unwrap();
        let m = build_coefficients(&sf, q, &SeriesOptions::default()).unwrap();
        let want = 0.9 / q / (1.0 - 1.0 / q);
        assert!((m.coeffs()[1] - want).abs() < 1e-14);

        let mipp = IvsSpec::mipp(2, 1.0).unwrap();
        let m = build_coefficients(&mipp, q, &SeriesOptions::default()).unwrap();
        let e = (-1.0f64).exp();
        let want = (1.0 / q) * e / ((1.0 - 1.0 / q) * (1.0 - e));
        assert!((m.coeffs()[1] - want).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_inputs() {
        let spec = IvsSpec::poisson(1.0).unwrap();
        assert!(build_coefficients(&spec, 1.5, &SeriesOptions::default()).is_err());
        assert!(build_coefficients(&spec, 0.0, &SeriesOptions::default()).is_err());
        let drifted = spec.with_drift(1.0).unwrap();
        assert!(build_coefficients(&drifted, 0.5, &SeriesOptions::default()).is_err());
    }

    #[test]
    fn reported_criterion_is_the_value_at_k() {
        let spec = IvsSpec::mipp(2, 1.0).unwrap();
        let mut kinds = vec![Arithmetic::Double];
        #[cfg(feature = "mp")]
        kinds.push(Arithmetic::Multi { bits: 128 });
        for arithmetic in kinds {
            let m = build_coefficients(&spec, E_INV, &SeriesOptions { arithmetic, ..Default::default() }).unwrap();
            let c = &m.coeffs()[..=m.k()];
            let num: f64 = c.iter().sum();
            let den: f64 = c.iter().enumerate().map(|(j, cj)| cj * E_INV.powi(j as i32)).sum();
            let direct = (m.scale_a() * num / den).abs();
            assert!(m.criterion_value() < 1e-3);
            assert!(
                (m.criterion_value() - direct).abs() <= 1e-9 * direct,
                "{:?}: {} vs {direct}",
                arithmetic,
                m.criterion_value()
            );
        }
    }

    #[test]
    fn left_tail_vanishes() {
        let e = std::f64::consts::E;
        let cases = [
            (IvsSpec::poisson(1.0).unwrap(), 0.5),
            (IvsSpec::mipp(2, 1.0).unwrap(), 0.5),
            (IvsSpec::negative_binomial(2.0, 0.5).unwrap(), 1.0),
        ];
        for (spec, lowest) in &cases {
            for q in [0.5, 1.0, 1.5, 2.0].into_iter().filter(|m| m >= lowest).map(|m| m / e) {
                let m = build_coefficients(spec, q, &SeriesOptions::default()).unwrap();
                let r = m.density(1e-4 * mean(spec, q)) / m.density_max();
                assert!(r < 1e-2, "q = {q}: {r}");
            }
        }
    }

    #[test]
    fn cap_is_reported() {
        let spec = IvsSpec::space_fractional(0.9, 1.0).unwrap();
        let opts = SeriesOptions { k_max: 5, ..Default::default() };
        match build_coefficients(&spec, E_INV, &opts) {
            Err(Error::CapExceeded { cap: 5, achieved }) => assert!(achieved > 1e-3),
            other => panic!("expected CapExceeded, got {other:?}"),
        }
        let lenient = SeriesOptions { on_cap: CapPolicy::Accept, ..opts };
        let m = build_coefficients(&spec, E_INV, &lenient).unwrap();
        assert!(!m.criterion_met());
        assert_eq!(m.k(), 5);
    }

    #[test]
    fn poisson_density_matches_product_form() {
        // λ = 1, q = 1/e: φ(x) = Σ (−1)^j q^{j(j−1)/2}/((q;q)_j (q;q)_∞) e^{−q^{−j} x}
        let q = E_INV;
        let m = build_coefficients(&IvsSpec::poisson(1.0).unwrap(), q, &SeriesOptions::default()).unwrap();
        let qq_inf: f64 = (1..200).map(|i| 1.0 - q.powi(i)).product();
        for x in [0.5, 1.0, 2.0] {
            let mut s = 0.0;
            for j in 0..40 {
                s += poisson_closed_form(q, j) / qq_inf * (-x / q.powi(j as i32)).exp();
            }
            assert!((m.density(x) - s).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn poisson_laplace_matches_q_pochhammer() {
        let q = E_INV;
        let m = build_coefficients(&IvsSpec::poisson(1.0).unwrap(), q, &SeriesOptions::default()).unwrap();
        assert!((m.laplace(Complex64::new(0.0, 0.0)) - 1.0).norm() < 1e-14);
        for u in [1.0, 5.0] {
            let prod: f64 = (0..200).map(|i| 1.0 + u * q.powi(i)).product();
            let got = m.laplace(Complex64::new(u, 0.0));
            assert!((got.re - 1.0 / prod).abs() < 1e-8 && got.im.abs() < 1e-15, "u={u}");
        }
    }

    #[test]
    fn laplace_slope_is_minus_mean() {
        let spec = IvsSpec::negative_binomial(2.0, 0.5).unwrap();
        let q = 0.5;
        let m = build_coefficients(&spec, q, &SeriesOptions::default()).unwrap();
        let h = 1e-5;
        let d = (m.laplace(Complex64::new(h, 0.0)).re - m.laplace(Complex64::new(0.0, 0.0)).re) / h;
        let mean = mean(&spec, q);
        assert!((d + mean).abs() < 1e-4 * mean, "{d} vs {mean}");
    }

    #[test]
    fn mean_limits() {
        let spec = IvsSpec::poisson(1.0).unwrap();
        assert!((mean(&spec, E_INV) - 1.0 / (1.0 - E_INV)).abs() < 1e-15);
        assert!((mean(&spec, 1e-12) - 1.0).abs() < 1e-11);
        assert_eq!(moment(&spec, 0.3, 0), 1.0);
        assert_eq!(moment(&spec, 0.3, 1), mean(&spec, 0.3));
    }

    #[test]
    fn cdf_limits_and_consistency() {
        let q = E_INV;
        let spec = IvsSpec::poisson(1.0).unwrap();
        let m = build_coefficients(&spec, q, &SeriesOptions::default()).unwrap();
        assert!(m.cdf(1e-9) < 1e-12);
        assert!(m.cdf(60.0) > 1.0 - 1e-15);
        let x = mean(&spec, q);
        let quad =
            integrate_pieces(|t| m.density(t), &[1e-12, 0.1, 0.5, x], QuadOptions::tol(1e-13, 1e-12)).unwrap().value;
        assert!((m.cdf(x) - quad).abs() < 1e-6);
    }

    #[test]
    fn criterion_depth_reports_negative_truncation() {
        // at q = 1/e the MIPP partial sum Σ_{j≤K} c_j is negative, so the
        // literal K-term density dips below zero near the origin
        let spec = IvsSpec::mipp(2, 1.0).unwrap();
        let opts = SeriesOptions { depth: EvalDepth::Criterion, ..Default::default() };
        match build_coefficients(&spec, E_INV, &opts) {
            Err(Error::NegativeDensity { value, .. }) => assert!(value < 0.0),
            other => panic!("expected NegativeDensity, got {other:?}"),
        }
        let ext = build_coefficients(&spec, E_INV, &SeriesOptions::default()).unwrap();
        assert!(ext.eval_terms() > ext.k() + 1);
        assert!(ext.tail_criterion() < 1e-12);
    }

    #[test]
    fn serialization_round_trip() {
        let m = build_coefficients(&IvsSpec::poisson(1.0).unwrap(), 0.5, &SeriesOptions::default()).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        let back: ExpFunctionalModel = serde_json::from_str::<ExpFunctionalModel>(&text).unwrap().restore();
        for x in [0.1, 1.0, 3.0] {
            assert!((back.density(x) - m.density(x)).abs() < 1e-14);
        }
        assert_eq!(back.k(), m.k());
    }

    proptest! {
        #[test]
        fn cdf_is_monotone(q in 0.05f64..0.75, lambda in 0.3f64..3.0) {
            let m = build_coefficients(&IvsSpec::poisson(lambda).unwrap(), q, &SeriesOptions::default()).unwrap();
            let hi = 40.0 * mean(&IvsSpec::poisson(lambda).unwrap(), q);
            let mut prev = 0.0;
            for i in 1..=200 {
                let v = m.cdf(hi * i as f64 / 200.0);
                prop_assert!(v >= prev - 1e-14);
                prev = v;
            }
        }

        #[test]
        fn laplace_is_bounded_on_imaginary_axis(t in -50.0f64..50.0) {
            let m = build_coefficients(&IvsSpec::negative_binomial(2.0, 0.5).unwrap(), E_INV, &SeriesOptions::default()).unwrap();
            prop_assert!(m.laplace(Complex64::new(0.0, t)).norm() <= 1.0 + 1e-10);
        }
    }
}
