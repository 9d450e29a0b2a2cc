//! Jump laws and process specifications for integer-valued subordinators.
//!
//! A [`JumpPmf`] stores `P{Z = k}` for `k = 1..=max_k` together with the mass
//! of the zero atom (kept as metadata) and the mass beyond the stored range.
//! An [`IvsSpec`] always holds the zero-atom-free normalization: intensity
//! `λ·P{Z ≥ 1}` and conditional masses `P{Z = k}/P{Z ≥ 1}`.

use crate::dd;
use crate::error::{invalid, Error, Result};
use serde::{Deserialize, Serialize};

/// Default cumulative tail tolerance for infinite-support laws.
pub const DEFAULT_TAIL_TOL: f64 = 1e-12;

/// Stored atoms for the space-fractional law, whose tail decays like `k^{-α}`.
pub const DEFAULT_MAX_ATOMS: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportKind {
    Finite,
    TruncatedInfinite,
}

/// Where a jump law came from; carries the intensity convention of each family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    Poisson,
    /// Jumps of the `n`-fold iterated Poisson process with rate `lambda`.
    Mipp {
        n: u32,
        lambda: f64,
    },
    SpaceFractional {
        alpha: f64,
    },
    /// Logarithmic jumps; the negative-binomial process with `r` has
    /// intensity `−r·log(1 − p0)`.
    NegativeBinomial {
        p0: f64,
    },
    Custom,
}

/// Probability mass function of a jump size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpPmf {
    masses: Vec<f64>,
    zero_mass: f64,
    tail_mass: f64,
    support_kind: SupportKind,
    family: Family,
}

impl JumpPmf {
    /// Validating constructor. `masses[i]` is `P{Z = i + 1}`.
    pub fn new(masses: Vec<f64>, zero_mass: f64, tail_mass: f64, support_kind: SupportKind) -> Result<Self> {
        Self::with_family(masses, zero_mass, tail_mass, support_kind, Family::Custom)
    }

    /// Custom law from positive-k masses; the deficit from 1 becomes tail mass.
    pub fn from_masses(masses: Vec<f64>, zero_mass: f64) -> Result<Self> {
        let total = zero_mass + dd::sum(masses.iter().copied());
        let tail = (1.0 - total).max(0.0);
        let kind = if tail > 0.0 { SupportKind::TruncatedInfinite } else { SupportKind::Finite };
        Self::new(masses, zero_mass, tail, kind)
    }

    fn with_family(
        mut masses: Vec<f64>,
        zero_mass: f64,
        tail_mass: f64,
        support_kind: SupportKind,
        family: Family,
    ) -> Result<Self> {
        for (i, &m) in masses.iter().enumerate() {
            if !(0.0..=1.0).contains(&m) {
                return Err(Error::InvalidPmf(format!("mass at k={} is {m}", i + 1)));
            }
        }
        if !(0.0..=1.0).contains(&zero_mass) || !(0.0..=1.0).contains(&tail_mass) {
            return Err(Error::InvalidPmf(format!("zero mass {zero_mass} or tail mass {tail_mass} outside [0, 1]")));
        }
        let stored = zero_mass + dd::sum(masses.iter().copied());
        let covered = stored + tail_mass;
        if stored > 1.0 + 1e-12 || !(1.0 - 1e-12..=1.0 + 1e-12).contains(&covered) {
            return Err(Error::InvalidPmf(format!(
                "stored mass {stored} plus tail {tail_mass} does not account for 1"
            )));
        }
        if zero_mass >= 1.0 {
            return Err(Error::InvalidPmf("no mass on positive jumps".into()));
        }
        while masses.last() == Some(&0.0) && masses.len() > 1 {
            masses.pop();
        }
        if masses.is_empty() {
            return Err(Error::InvalidPmf("empty mass list".into()));
        }
        Ok(Self { masses, zero_mass, tail_mass, support_kind, family })
    }

    /// `P{Z = k}`; zero for `k` beyond the stored range.
    pub fn mass(&self, k: usize) -> f64 {
        match k {
            0 => self.zero_mass,
            k => self.masses.get(k - 1).copied().unwrap_or(0.0),
        }
    }

    /// Stored masses, `masses()[i] = P{Z = i + 1}`.
    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Largest stored jump size.
    pub fn max_k(&self) -> usize {
        self.masses.len()
    }

    pub fn zero_mass(&self) -> f64 {
        self.zero_mass
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn support_kind(&self) -> SupportKind {
        self.support_kind
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// `P{Z ≥ 1}`.
    pub fn positive_mass(&self) -> f64 {
        1.0 - self.zero_mass
    }

    /// Conditional law of `Z` given `Z ≥ 1`.
    pub fn normalized(&self) -> JumpPmf {
        let s = self.positive_mass();
        if self.zero_mass == 0.0 {
            return self.clone();
        }
        JumpPmf {
            masses: self.masses.iter().map(|m| m / s).collect(),
            zero_mass: 0.0,
            tail_mass: self.tail_mass / s,
            support_kind: self.support_kind,
            family: self.family,
        }
    }

    /// `E wᶻ` for `w ∈ [0, 1]`, counting the tail at `max_k + 1` (an upper
    /// bound, exact when the tail is empty).
    pub fn pgf(&self, w: f64) -> f64 {
        let mut acc = dd::Accumulator::new();
        acc.add(self.zero_mass);
        let mut wk = 1.0;
        for &m in &self.masses {
            wk *= w;
            if wk == 0.0 {
                break;
            }
            acc.add(m * wk);
        }
        acc.add(self.tail_mass * wk * w);
        acc.value().to_f64()
    }

    /// `Σ_k (1 − e^{−uk}) P{Z = k}` with the tail counted at `max_k + 1`.
    fn bernstein_sum(&self, u: f64) -> f64 {
        let mut acc = dd::Accumulator::new();
        for (i, &m) in self.masses.iter().enumerate() {
            acc.add(m * -(-u * (i + 1) as f64).exp_m1());
        }
        acc.add(self.tail_mass * -(-u * (self.max_k() + 1) as f64).exp_m1());
        acc.value().to_f64()
    }
}

/// Unit jumps.
pub fn poisson_jumps() -> JumpPmf {
    JumpPmf::with_family(vec![1.0], 0.0, 0.0, SupportKind::Finite, Family::Poisson).expect("Dirac mass is valid")
}

fn ln_factorial(k: usize) -> f64 {
    // exact products while they fit in a double's mantissa
    if k <= 20 {
        return (1..=k).map(|i| i as f64).product::<f64>().ln();
    }
    crate::special::ln_gamma(k as f64 + 1.0)
}

/// Law of `V₁^{(n−1)}`, the jump of the `n`-fold iterated Poisson process.
///
/// Starts from the Poisson(`lambda`) law and applies the mixed-Poisson map
/// `P{V⁽ᵐ⁾=k} = λᵏ/k! Σ_j jᵏ e^{−λj} P{V⁽ᵐ⁻¹⁾=j}` `n − 2` times. Each level
/// stops once the mass still missing is below `tol`; deficits are kept as tail
/// mass, never renormalized away.
pub fn mipp_jumps(n: u32, lambda: f64, tol: f64) -> Result<JumpPmf> {
    if n < 2 {
        return Err(invalid("n", format!("iteration count must be at least 2, got {n}")));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid("lambda", format!("rate must be positive, got {lambda}")));
    }
    if !(tol > 0.0 && tol < 1.0) {
        return Err(invalid("tol", format!("tail tolerance must lie in (0, 1), got {tol}")));
    }
    const MAX_LEVEL_ATOMS: usize = 100_000;

    // level 1: Poisson(λ) on {0, 1, ...}
    let mut level = Vec::new();
    let mut acc = dd::Accumulator::new();
    for k in 0..MAX_LEVEL_ATOMS {
        let p = (k as f64 * lambda.ln() - lambda - ln_factorial(k)).exp();
        level.push(p);
        acc.add(p);
        if 1.0 - acc.value().to_f64() < tol && k as f64 > lambda {
            break;
        }
    }

    for _ in 2..n {
        let available = dd::sum(level.iter().copied());
        let mut next = Vec::new();
        let mut acc = dd::Accumulator::new();
        for k in 0..MAX_LEVEL_ATOMS {
            let p = mixed_poisson_mass(&level, lambda, k);
            next.push(p);
            acc.add(p);
            if available - acc.value().to_f64() < tol {
                break;
            }
        }
        level = next;
    }

    let zero = level[0];
    let masses = level[1..].to_vec();
    let stored = zero + dd::sum(masses.iter().copied());
    let tail = (1.0 - stored).max(0.0);
    JumpPmf::with_family(masses, zero, tail, SupportKind::TruncatedInfinite, Family::Mipp { n, lambda })
}

/// One atom of the mixed-Poisson map; the sum over `j` stops after three
/// consecutive summands below `1e-16` of the running sum.
fn mixed_poisson_mass(prev: &[f64], lambda: f64, k: usize) -> f64 {
    let lnk = ln_factorial(k);
    let mut acc = dd::Accumulator::new();
    let mut small = 0;
    for (j, &pj) in prev.iter().enumerate() {
        let term = if j == 0 {
            if k == 0 {
                pj
            } else {
                0.0
            }
        } else {
            let lj = lambda * j as f64;
            (k as f64 * lj.ln() - lj - lnk).exp() * pj
        };
        acc.add(term);
        let running = acc.value().to_f64();
        if running > 0.0 && term < 1e-16 * running {
            small += 1;
            if small >= 3 {
                break;
            }
        } else {
            small = 0;
        }
    }
    acc.value().to_f64()
}

/// Sibuya law `P{Z = k} = −(−α)_k / k! = (α/k) Π_{i<k} (1 − α/i)`.
///
/// Atoms are stored up to cumulative mass `1 − 10⁻¹²` or [`DEFAULT_MAX_ATOMS`],
/// whichever comes first; the tail `Π_{i≤K} (1 − α/i)` is recorded exactly.
pub fn space_fractional_jumps(alpha: f64) -> Result<JumpPmf> {
    space_fractional_jumps_with(alpha, DEFAULT_TAIL_TOL, DEFAULT_MAX_ATOMS)
}

pub fn space_fractional_jumps_with(alpha: f64, tol: f64, max_atoms: usize) -> Result<JumpPmf> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", format!("stability index must lie in (0, 1), got {alpha}")));
    }
    if max_atoms == 0 {
        return Err(invalid("max_atoms", "need at least one atom"));
    }
    let mut masses = Vec::with_capacity(max_atoms.min(1 << 16));
    // survival P{Z > k}
    let mut survival = 1.0;
    for k in 1..=max_atoms {
        masses.push(survival * alpha / k as f64);
        survival *= 1.0 - alpha / k as f64;
        if survival < tol {
            break;
        }
    }
    JumpPmf::with_family(masses, 0.0, survival, SupportKind::TruncatedInfinite, Family::SpaceFractional { alpha })
}

/// Logarithmic law `P{Z = k} = −p0ᵏ / (k log(1 − p0))`.
pub fn negative_binomial_jumps(p0: f64) -> Result<JumpPmf> {
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(invalid("p0", format!("success parameter must lie in (0, 1), got {p0}")));
    }
    let norm = -(-p0).ln_1p();
    let mut masses = Vec::new();
    let mut acc = dd::Accumulator::new();
    let mut pk = 1.0;
    for k in 1..1_000_000usize {
        pk *= p0;
        let m = pk / (k as f64 * norm);
        masses.push(m);
        acc.add(m);
        if 1.0 - acc.value().to_f64() < DEFAULT_TAIL_TOL || m == 0.0 {
            break;
        }
    }
    let tail = (1.0 - acc.value().to_f64()).max(0.0);
    JumpPmf::with_family(masses, 0.0, tail, SupportKind::TruncatedInfinite, Family::NegativeBinomial { p0 })
}

/// An integer-valued subordinator `S_t = μt + Σ_{i ≤ N_t} Z_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IvsSpec {
    intensity: f64,
    jumps: JumpPmf,
    drift: f64,
    raw_intensity: f64,
}

impl IvsSpec {
    /// Builds the spec from a raw rate and jump law, removing the zero atom.
    pub fn new(intensity: f64, jumps: JumpPmf, drift: f64) -> Result<Self> {
        if !(intensity > 0.0 && intensity.is_finite()) {
            return Err(invalid("intensity", format!("must be positive, got {intensity}")));
        }
        if !(drift >= 0.0 && drift.is_finite()) {
            return Err(invalid("drift", format!("must be nonnegative, got {drift}")));
        }
        let eff = intensity * jumps.positive_mass();
        Ok(Self { intensity: eff, jumps: jumps.normalized(), drift, raw_intensity: intensity })
    }

    pub fn poisson(lambda: f64) -> Result<Self> {
        Self::new(lambda, poisson_jumps(), 0.0)
    }

    pub fn mipp(n: u32, lambda: f64) -> Result<Self> {
        Self::new(lambda, mipp_jumps(n, lambda, DEFAULT_TAIL_TOL)?, 0.0)
    }

    /// Space-fractional Poisson process; the compound-Poisson rate is `λ^α`.
    pub fn space_fractional(alpha: f64, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(invalid("lambda", format!("must be positive, got {lambda}")));
        }
        Self::new(lambda.powf(alpha), space_fractional_jumps(alpha)?, 0.0)
    }

    /// Negative-binomial process; the compound-Poisson rate is `−r log(1 − p0)`.
    pub fn negative_binomial(r: f64, p0: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(invalid("r", format!("must be positive, got {r}")));
        }
        let jumps = negative_binomial_jumps(p0)?;
        Self::new(-r * (-p0).ln_1p(), jumps, 0.0)
    }

    /// Same process with drift `mu`.
    pub fn with_drift(&self, mu: f64) -> Result<Self> {
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(invalid("drift", format!("must be nonnegative, got {mu}")));
        }
        Ok(Self { drift: mu, ..self.clone() })
    }

    /// Effective intensity `λ̃ = λ·P{Z ≥ 1}`.
    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    /// Rate as supplied, before zero-atom removal.
    pub fn raw_intensity(&self) -> f64 {
        self.raw_intensity
    }

    /// Normalized jump law (no zero atom).
    pub fn jumps(&self) -> &JumpPmf {
        &self.jumps
    }

    pub fn drift(&self) -> f64 {
        self.drift
    }
}

/// `Ψ(u) = μu + λ Σ_k (1 − e^{−uk}) P{Z = k}`.
pub fn laplace_exponent(spec: &IvsSpec, u: f64) -> f64 {
    assert!(u >= 0.0, "Laplace exponent needs u >= 0");
    spec.drift * u + spec.intensity * spec.jumps.bernstein_sum(u)
}

/// Laplace exponent from a raw rate and a law that may carry a zero atom.
pub fn laplace_exponent_raw(intensity: f64, jumps: &JumpPmf, drift: f64, u: f64) -> f64 {
    drift * u + intensity * jumps.bernstein_sum(u)
}
