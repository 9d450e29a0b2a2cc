//! Lattice approximation of general pure-jump subordinators.
//!
//! A Lévy measure `ν` on `(0, ∞)` is pushed down onto the lattice `εℕ`: the
//! process `X^{(ε)}` jumps by `εk` at rate `υ_{ε,k} = ν([εk, ε(k+1)))`. Then
//! `∫ e^{−X^{(ε)}_t} dt = ∫ q^{S_t} dt` with `q = e^{−ε}` and `S` the
//! integer-valued compound Poisson process with rate `Σ_k υ_{ε,k}`, so the
//! driftless series engine applies unchanged.

use crate::catalog::{IvsSpec, JumpPmf, SupportKind};
use crate::error::{invalid, Error, Result};
use crate::quad::{integrate, QuadOptions};
use crate::series::{build_coefficients_base, CapPolicy, EvalDepth, ExpFunctionalModel, QBase, SeriesOptions};
use crate::special::{exp_int_e1, upper_gamma_neg};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::io::BufRead;
use std::sync::Arc;

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Cells whose remaining tail falls below this fraction of the total are cut.
pub const CELL_CUT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LevyKind {
    /// Compound Poisson with exponential jumps, `ν(dz) = a e^{−bz} dz`.
    Cpe {
        a: f64,
        b: f64,
    },
    /// `ν(dz) = a z^{−χ−1} e^{−bz} dz`; `χ = 0` is the gamma subordinator.
    TemperedStable {
        a: f64,
        b: f64,
        chi: f64,
    },
    Custom,
}

/// A Lévy measure given by its tail `z ↦ ν([z, ∞))`.
#[derive(Clone)]
pub struct LevyMeasureSpec {
    kind: LevyKind,
    tail: RealFn,
    density: Option<RealFn>,
}

impl std::fmt::Debug for LevyMeasureSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LevyMeasureSpec").field("kind", &self.kind).finish()
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be positive, got {v}")))
    }
}

impl LevyMeasureSpec {
    pub fn cpe(a: f64, b: f64) -> Result<Self> {
        positive("a", a)?;
        positive("b", b)?;
        Ok(Self {
            kind: LevyKind::Cpe { a, b },
            tail: Arc::new(move |z| if z <= 0.0 { a / b } else { a / b * (-b * z).exp() }),
            density: Some(Arc::new(move |z| a * (-b * z).exp())),
        })
    }

    pub fn tempered_stable(a: f64, b: f64, chi: f64) -> Result<Self> {
        positive("a", a)?;
        positive("b", b)?;
        if !(0.0..1.0).contains(&chi) {
            return Err(invalid("chi", format!("must lie in [0, 1), got {chi}")));
        }
        let scale = a * b.powf(chi);
        Ok(Self {
            kind: LevyKind::TemperedStable { a, b, chi },
            tail: Arc::new(move |z| if z <= 0.0 { f64::INFINITY } else { scale * upper_gamma_neg(chi, b * z) }),
            density: Some(Arc::new(move |z| a * z.powf(-chi - 1.0) * (-b * z).exp())),
        })
    }

    /// Gamma subordinator, `ν(dz) = a z^{−1} e^{−bz} dz`.
    pub fn gamma(a: f64, b: f64) -> Result<Self> {
        Self::tempered_stable(a, b, 0.0)
    }

    /// User tail, spot-checked for monotonicity, decay at infinity and
    /// `z ν([z, ∞)) → 0` at the origin.
    pub fn custom(tail: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        let spec = Self { kind: LevyKind::Custom, tail: Arc::new(tail), density: None };
        spec.check_tail()?;
        Ok(spec)
    }

    pub fn with_density(mut self, density: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.density = Some(Arc::new(density));
        self
    }

    /// Tail tabulated at increasing abscissae, log-interpolated in both
    /// coordinates. Below the first point the first log-log slope is
    /// extended; beyond the last point the tail is zero.
    pub fn from_table(z: Vec<f64>, tail: Vec<f64>) -> Result<Self> {
        if z.len() != tail.len() || z.len() < 2 {
            return Err(Error::InvalidTail("need at least two (z, tail) pairs".into()));
        }
        if z[0] <= 0.0 || z.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidTail("abscissae must be positive and strictly increasing".into()));
        }
        if tail.iter().any(|t| !(*t >= 0.0 && t.is_finite())) || tail.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidTail("tail values must be finite, nonnegative and nonincreasing".into()));
        }
        if tail[1] <= 0.0 {
            return Err(Error::InvalidTail("the first two tail values must be positive".into()));
        }
        let slope = (tail[1] / tail[0]).ln() / (z[1] / z[0]).ln();
        if slope <= -1.0 {
            return Err(Error::InvalidTail(format!("log-log slope {slope} at the origin makes z tail(z) diverge")));
        }
        let f = move |x: f64| -> f64 {
            if x <= z[0] {
                return tail[0] * (x / z[0]).powf(slope);
            }
            let n = z.len();
            if x > z[n - 1] {
                return 0.0;
            }
            let i = z.partition_point(|&zi| zi < x) - 1;
            let (t0, t1) = (tail[i], tail[i + 1]);
            let s = (x / z[i]).ln() / (z[i + 1] / z[i]).ln();
            if t1 > 0.0 {
                t0 * (t1 / t0).powf(s)
            } else {
                t0 * (1.0 - s)
            }
        };
        Self::custom(f)
    }

    /// Reads `z,tail` rows; a non-numeric first row is taken as a header and
    /// `#` lines are skipped.
    pub fn from_csv(reader: impl BufRead) -> Result<Self> {
        let (mut z, mut t) = (Vec::new(), Vec::new());
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::InvalidTail(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed = match cols.as_slice() {
                [a, b] => a.parse::<f64>().ok().zip(b.parse::<f64>().ok()),
                _ => None,
            };
            match parsed {
                Some((a, b)) => {
                    z.push(a);
                    t.push(b);
                }
                None if z.is_empty() && n == 0 => continue,
                None => return Err(Error::InvalidTail(format!("line {}: expected `z,tail`", n + 1))),
            }
        }
        Self::from_table(z, t)
    }

    pub fn kind(&self) -> LevyKind {
        self.kind
    }

    /// `ν([z, ∞))`.
    pub fn tail(&self, z: f64) -> f64 {
        (self.tail)(z)
    }

    pub fn density(&self, z: f64) -> Option<f64> {
        self.density.as_ref().map(|d| d(z))
    }

    fn check_tail(&self) -> Result<()> {
        let mut prev = f64::INFINITY;
        let mut z = 1e-9;
        while z < 1e6 {
            let t = self.tail(z);
            if !(t >= 0.0) || t > prev * (1.0 + 1e-12) {
                return Err(Error::InvalidTail(format!("tail is not nonnegative and nonincreasing near z = {z}")));
            }
            prev = t;
            z *= 1.25;
        }
        if prev > 1e-8 * self.tail(1.0).max(1e-300) && prev > 0.0 {
            return Err(Error::InvalidTail("tail does not vanish at infinity".into()));
        }
        let near0 = [1e-6, 1e-8, 1e-10].map(|z| z * self.tail(z));
        if !(near0[2] <= near0[0] && near0[2] < 1e-3 * self.tail(1.0).max(1.0)) {
            return Err(Error::InvalidTail("z tail(z) does not vanish at the origin".into()));
        }
        Ok(())
    }

    /// `Ψ(u) = ∫ (1 − e^{−uz}) ν(dz) = u ∫_0^∞ e^{−uz} ν([z, ∞)) dz`.
    pub fn laplace_exponent(&self, u: f64) -> Result<f64> {
        if !(u >= 0.0) {
            return Err(invalid("u", format!("must be nonnegative, got {u}")));
        }
        match self.kind {
            LevyKind::Cpe { a, b } => Ok(a / b - a / (b + u)),
            LevyKind::TemperedStable { a, b, chi: 0.0 } => Ok(a * (1.0 + u / b).ln()),
            _ if u == 0.0 => Ok(0.0),
            _ => {
                // t = uz, then t = s² to soften the origin
                let f = |s: f64| {
                    if s == 0.0 {
                        return 0.0;
                    }
                    let t = s * s;
                    2.0 * s * (-t).exp() * self.tail(t / u)
                };
                let head = integrate(f, 0.0, 1.0, QuadOptions::tol(1e-15, 1e-11))?;
                let rest = integrate(f, 1.0, 8.0, QuadOptions::tol(1e-15, 1e-11))?;
                Ok(head.value + rest.value)
            }
        }
    }
}

/// `ρ(ε) = (∫_0^ε ν([z, ∞)) dz)^{1/2}`.
pub fn rho(spec: &LevyMeasureSpec, epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    let sq = match spec.kind {
        LevyKind::Cpe { a, b } => a / (b * b) * -(-b * epsilon).exp_m1(),
        LevyKind::TemperedStable { a, b, chi: 0.0 } => {
            let y = b * epsilon;
            a / b * (y * exp_int_e1(y) - (-y).exp_m1())
        }
        _ => {
            // z = εu²
            let f = |u: f64| if u == 0.0 { 0.0 } else { 2.0 * epsilon * u * spec.tail(epsilon * u * u) };
            integrate(f, 0.0, 1.0, QuadOptions::tol(1e-300, 1e-11))?.value
        }
    };
    Ok(sq.sqrt())
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(invalid("epsilon", format!("must lie in (0, 1), got {epsilon}")))
    }
}

/// Lattice rates `υ_{ε,k}` for `k = 1..=k_cut`.
#[derive(Debug, Clone, Serialize)]
pub struct LevyGrid {
    pub epsilon: f64,
    /// `masses[i] = υ_{ε, i+1}`.
    pub masses: Vec<f64>,
    /// `ν([ε, ∞))`, including the part beyond `k_cut`.
    pub total: f64,
    /// `ν([ε(k_cut + 1), ∞))`.
    pub tail_beyond: f64,
    pub rho: f64,
    pub k_cut: usize,
}

/// Builds the lattice rates. The cut is the first `k` with
/// `ν([ε(k+1), ∞)) < 10⁻¹² ν([ε, ∞))`.
pub fn discretize(spec: &LevyMeasureSpec, epsilon: f64) -> Result<LevyGrid> {
    check_epsilon(epsilon)?;
    let total = spec.tail(epsilon);
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::InvalidTail(format!("ν([ε, ∞)) = {total} must be positive and finite")));
    }
    let cut = CELL_CUT * total;
    let k_cut = match spec.kind {
        // a/b e^{−bε(k+1)} < cut·a/b e^{−bε}
        LevyKind::Cpe { b, .. } => ((-CELL_CUT.ln()) / (b * epsilon)).floor() as usize + 1,
        _ => {
            let mut hi = 1usize;
            while spec.tail(epsilon * (hi + 1) as f64) >= cut {
                hi *= 2;
                if hi > 1 << 40 {
                    return Err(Error::InvalidTail("tail does not decay".into()));
                }
            }
            let mut lo = hi / 2;
            while lo + 1 < hi {
                let mid = (lo + hi) / 2;
                if spec.tail(epsilon * (mid + 1) as f64) >= cut {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            hi
        }
    };
    let masses: Vec<f64> = (1..=k_cut)
        .into_par_iter()
        .map(|k| {
            let (l, r) = (epsilon * k as f64, epsilon * (k + 1) as f64);
            match spec.kind {
                LevyKind::Cpe { a, b } => a / b * -(-b * epsilon).exp_m1() * (-b * l).exp(),
                _ => spec.tail(l) - spec.tail(r),
            }
        })
        .collect();
    for (i, &m) in masses.iter().enumerate() {
        if m < -1e-12 * total || !m.is_finite() {
            return Err(Error::InvalidTail(format!("cell {} has mass {m:e}", i + 1)));
        }
    }
    let masses: Vec<f64> = masses.into_iter().map(|m| m.max(0.0)).collect();
    let tail_beyond = spec.tail(epsilon * (k_cut + 1) as f64);
    Ok(LevyGrid { epsilon, masses, total, tail_beyond, rho: rho(spec, epsilon)?, k_cut })
}

impl LevyGrid {
    /// The integer-valued process `X^{(ε)}/ε`: rate `total`, jump `k` with
    /// probability `υ_{ε,k}/total`.
    pub fn ivs(&self) -> Result<IvsSpec> {
        let masses: Vec<f64> = self.masses.iter().map(|m| m / self.total).collect();
        let stored = crate::dd::sum(masses.iter().copied());
        let tail = (1.0 - stored).max(0.0);
        let kind = if tail > 0.0 { SupportKind::TruncatedInfinite } else { SupportKind::Finite };
        IvsSpec::new(self.total, JumpPmf::new(masses, 0.0, tail, kind)?, 0.0)
    }

    /// `Ψ^{(ε)}(u) = Σ_k (1 − e^{−uεk}) υ_{ε,k}`, with the cut tail counted at
    /// full weight.
    pub fn laplace_exponent(&self, u: f64) -> f64 {
        let mut acc = crate::dd::Accumulator::new();
        for (i, m) in self.masses.iter().enumerate() {
            acc.add(-(-u * self.epsilon * (i + 1) as f64).exp_m1() * m);
        }
        acc.value().to_f64() + self.tail_beyond
    }

    /// `E I^m = m! / Π_{j≤m} Ψ^{(ε)}(j)` for the lattice process.
    pub fn moment(&self, m: u32) -> f64 {
        (1..=m).map(|j| j as f64 / self.laplace_exponent(j as f64)).product()
    }
}

/// Series options that keep exactly `c_0..c_terms`.
pub fn fixed_terms(terms: usize) -> SeriesOptions {
    SeriesOptions {
        threshold: f64::MIN_POSITIVE,
        k_max: terms,
        min_terms: terms,
        depth: EvalDepth::Criterion,
        on_cap: CapPolicy::Accept,
        ..SeriesOptions::default()
    }
}

/// Criterion-driven defaults: threshold `10⁻⁶` with a cap of `⌈20/ε⌉`
/// coefficients. Infinite-activity measures need on the order of `10/ε`.
pub fn default_options(epsilon: f64) -> SeriesOptions {
    SeriesOptions { threshold: 1e-6, k_max: (20.0 / epsilon).ceil() as usize, ..SeriesOptions::default() }
}

/// Density and distribution of `∫ e^{−X^{(ε)}_t} dt`.
#[derive(Debug, Clone)]
pub struct LevyApprox {
    grid: LevyGrid,
    model: ExpFunctionalModel,
}

/// Discretizes at `epsilon` and builds the series with `opts`
/// (see [`fixed_terms`]).
pub fn approx_model(spec: &LevyMeasureSpec, epsilon: f64, opts: &SeriesOptions) -> Result<LevyApprox> {
    let grid = discretize(spec, epsilon)?;
    let ivs = grid.ivs()?;
    let model = build_coefficients_base(&ivs, QBase::ExpNeg(epsilon), opts)?;
    Ok(LevyApprox { grid, model })
}

impl LevyApprox {
    pub fn grid(&self) -> &LevyGrid {
        &self.grid
    }

    pub fn model(&self) -> &ExpFunctionalModel {
        &self.model
    }

    pub fn density(&self, x: f64) -> f64 {
        self.model.density(x)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.model.cdf(x)
    }

    pub fn laplace(&self, u: Complex64) -> Complex64 {
        self.model.laplace(u)
    }

    pub fn moment(&self, m: u32) -> f64 {
        self.model.series_moment(m)
    }
}

/// Successive sup-differences of the approximate distribution functions.
#[derive(Debug, Clone, Serialize)]
pub struct RefinementReport {
    pub epsilons: Vec<f64>,
    pub rho: Vec<f64>,
    /// `d_i = sup_x |F_{ε_i} − F_{ε_{i+1}}|`.
    pub sup_diffs: Vec<f64>,
    /// `d_{i+1}/d_i`.
    pub diff_ratios: Vec<f64>,
    /// `ρ(ε_{i+1})/ρ(ε_i)`.
    pub rho_ratios: Vec<f64>,
    /// The differences strictly decrease.
    pub monotone: bool,
    /// Every `diff_ratio/rho_ratio` lies in `[1/4, 4]`.
    pub consistent: bool,
}

/// Compares the approximations at successive `epsilons` on `xs`, building
/// each level with `opts(ε)`.
pub fn cdf_error_bound(
    spec: &LevyMeasureSpec,
    epsilons: &[f64],
    xs: &[f64],
    opts: impl Fn(f64) -> SeriesOptions + Sync,
) -> Result<RefinementReport> {
    if epsilons.len() < 3 {
        return Err(invalid("epsilons", "need at least three levels"));
    }
    if xs.is_empty() {
        return Err(invalid("xs", "need at least one point"));
    }
    let models: Vec<LevyApprox> =
        epsilons.par_iter().map(|&e| approx_model(spec, e, &opts(e))).collect::<Result<_>>()?;
    let cdfs: Vec<Vec<f64>> = models.iter().map(|m| xs.iter().map(|&x| m.cdf(x)).collect()).collect();
    let sup_diffs: Vec<f64> =
        cdfs.windows(2).map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)).collect();
    let rho: Vec<f64> = models.iter().map(|m| m.grid.rho).collect();
    let diff_ratios: Vec<f64> = sup_diffs.windows(2).map(|w| w[1] / w[0]).collect();
    let rho_ratios: Vec<f64> = rho.windows(2).skip(1).map(|w| w[1] / w[0]).collect();
    let monotone = sup_diffs.windows(2).all(|w| w[1] < w[0]);
    let consistent = diff_ratios.iter().zip(&rho_ratios).all(|(d, r)| (0.25..=4.0).contains(&(d / r)));
    Ok(RefinementReport { epsilons: epsilons.to_vec(), rho, sup_diffs, diff_ratios, rho_ratios, monotone, consistent })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cpe_total_and_masses() {
        let s = LevyMeasureSpec::cpe(1.0, 1.0).unwrap();
        let g = discretize(&s, 0.01).unwrap();
        assert!((g.total - (-0.01f64).exp()).abs() < 1e-15);
        let stored: f64 = g.masses.iter().sum();
        assert!((stored + g.tail_beyond - g.total).abs() < 1e-13);
        assert!(g.tail_beyond < CELL_CUT * g.total);
        let k = 7.0f64;
        let exact = (-0.01 * k).exp() - (-0.01 * (k + 1.0)).exp();
        assert!((g.masses[6] - exact).abs() < 1e-16);
    }

    #[test]
    fn gamma_masses_are_e1_differences() {
        let s = LevyMeasureSpec::gamma(1.0, 1.0).unwrap();
        let e = 0.05;
        let g = discretize(&s, e).unwrap();
        for k in [1usize, 2, 10, 100] {
            let l = e * k as f64;
            let exact = integrate(|z| (-z).exp() / z, l, l + e, QuadOptions::tol(1e-18, 1e-13)).unwrap().value;
            assert!((g.masses[k - 1] - exact).abs() < 1e-11 * exact, "k={k}");
        }
    }

    #[test]
    fn rho_closed_forms_match_quadrature() {
        let shapes = [LevyMeasureSpec::cpe(2.0, 0.7).unwrap(), LevyMeasureSpec::gamma(1.5, 2.0).unwrap()];
        for s in shapes {
            let custom = LevyMeasureSpec { kind: LevyKind::Custom, ..s.clone() };
            for e in [0.5, 0.1, 1e-3] {
                let (a, b) = (rho(&s, e).unwrap(), rho(&custom, e).unwrap());
                assert!((a - b).abs() < 1e-9 * a, "{:?} ε={e}: {a} vs {b}", s.kind());
            }
        }
    }

    #[test]
    fn rho_is_order_root_epsilon_for_finite_measures() {
        let s = LevyMeasureSpec::cpe(1.0, 1.0).unwrap();
        let r: Vec<f64> = (1..12).map(|i| rho(&s, 2f64.powi(-i)).unwrap() / 2f64.powi(-i).sqrt()).collect();
        assert!(r.iter().all(|&x| x > 0.5 && x <= 1.0));
    }

    #[test]
    fn lattice_exponent_closed_form() {
        // Σ_k (1 − e^{−uεk}) (1 − e^{−ε}) e^{−εk} summed as geometric series
        let s = LevyMeasureSpec::cpe(1.0, 1.0).unwrap();
        for e in [1e-3, 1e-2] {
            let g = discretize(&s, e).unwrap();
            for u in [1.0, 2.0, 3.0, 4.0] {
                let r = (-e).exp();
                let ru = (-(1.0 + u) * e).exp();
                let exact = -(-e).exp_m1() * (r / (1.0 - r) - ru / (1.0 - ru));
                let got = g.laplace_exponent(u);
                assert!((got - exact).abs() < 1e-6 * exact, "ε={e} u={u}");
                assert!(got <= s.laplace_exponent(u).unwrap());
            }
        }
    }

    #[test]
    fn lattice_exponent_increases_under_refinement() {
        for s in [LevyMeasureSpec::cpe(1.0, 1.0).unwrap(), LevyMeasureSpec::gamma(1.0, 1.0).unwrap()] {
            for u in [1.0, 2.0, 3.0, 4.0] {
                let psi: Vec<f64> =
                    [0.04, 0.02, 0.01, 0.005].iter().map(|&e| discretize(&s, e).unwrap().laplace_exponent(u)).collect();
                assert!(psi.windows(2).all(|w| w[1] > w[0]), "{:?} u={u}: {psi:?}", s.kind());
                assert!(psi[3] < s.laplace_exponent(u).unwrap());
            }
        }
    }

    #[test]
    fn quadrature_exponent_matches_closed_forms() {
        let s = LevyMeasureSpec::tempered_stable(1.0, 2.0, 0.5).unwrap();
        let custom = LevyMeasureSpec::custom({
            let s = s.clone();
            move |z| s.tail(z)
        })
        .unwrap();
        // Ψ(u) = a Γ(−χ) ((b + u)^χ − b^χ)
        let g = crate::special::gamma(-0.5);
        for u in [0.5f64, 1.0, 4.0] {
            let exact = g * ((2.0 + u).sqrt() - 2f64.sqrt());
            assert!((s.laplace_exponent(u).unwrap() - exact).abs() < 1e-9 * exact);
            assert!((custom.laplace_exponent(u).unwrap() - exact).abs() < 1e-9 * exact);
        }
    }

    #[test]
    fn bad_tails() {
        assert!(LevyMeasureSpec::custom(|z| 1.0 / (z * z)).is_err());
        assert!(LevyMeasureSpec::custom(|z| z).is_err());
        assert!(LevyMeasureSpec::custom(|_| 1.0).is_err());
        assert!(LevyMeasureSpec::from_table(vec![1.0, 0.5], vec![1.0, 0.5]).is_err());
        assert!(LevyMeasureSpec::from_table(vec![0.1, 1.0], vec![1000.0, 1.0]).is_err());
        assert!(discretize(&LevyMeasureSpec::cpe(1.0, 1.0).unwrap(), 1.0).is_err());
    }

    #[test]
    fn csv_tail_interpolates_exponential() {
        let zs: Vec<f64> = (0..=400).map(|i| 1e-3 * 1.03f64.powi(i)).collect();
        let mut csv = String::from("z,tail\n# exponential tail\n");
        for z in &zs {
            csv.push_str(&format!("{z},{}\n", (-z).exp()));
        }
        let s = LevyMeasureSpec::from_csv(csv.as_bytes()).unwrap();
        for z in [0.01, 0.3, 2.0, 5.0] {
            assert!((s.tail(z) / (-z).exp() - 1.0).abs() < 1e-3);
        }
        let g = discretize(&s, 0.01).unwrap();
        assert!((g.total - (-0.01f64).exp()).abs() < 1e-3);
    }

    #[test]
    fn cpe_limit_coefficients_are_binomial() {
        let s = LevyMeasureSpec::cpe(1.0, 1.0).unwrap();
        let m = approx_model(&s, 1e-3, &fixed_terms(12)).unwrap();
        let c = m.model().coeffs();
        assert!((c[0] - 1.0).abs() < 1e-2 && (c[1] + 1.0).abs() < 1e-2);
        assert!(c[2..=10].iter().all(|x| x.abs() < 1e-2), "{c:?}");
    }

    #[test]
    fn identical_levels_give_zero_difference() {
        let s = LevyMeasureSpec::cpe(1.0, 1.0).unwrap();
        let xs: Vec<f64> = (1..60).map(|i| 0.1 * i as f64).collect();
        let r = cdf_error_bound(&s, &[0.02, 0.02, 0.02], &xs, default_options).unwrap();
        assert!(r.sup_diffs.iter().all(|&d| d == 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn masses_telescope(a in 0.2f64..3.0, b in 0.2f64..3.0, chi in 0.0f64..0.9, e in 0.01f64..0.5) {
            for s in [LevyMeasureSpec::cpe(a, b).unwrap(), LevyMeasureSpec::tempered_stable(a, b, chi).unwrap()] {
                let g = discretize(&s, e).unwrap();
                prop_assert!(g.masses.iter().all(|&m| m >= 0.0));
                let stored = crate::dd::sum(g.masses.iter().copied());
                prop_assert!(stored <= s.tail(e) * (1.0 + 1e-12));
                prop_assert!((stored + g.tail_beyond - g.total).abs() <= 1e-10 * g.total);
            }
        }

        #[test]
        fn rho_nondecreasing(e1 in 0.001f64..0.9, e2 in 0.001f64..0.9, chi in 0.0f64..0.9) {
            let s = LevyMeasureSpec::tempered_stable(1.0, 1.0, chi).unwrap();
            let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
            prop_assert!(rho(&s, lo).unwrap() <= rho(&s, hi).unwrap() * (1.0 + 1e-12));
        }
    }
}
