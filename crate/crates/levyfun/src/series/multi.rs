//! MPFR coefficient tables for discretizations whose Dirichlet series cancel
//! far beyond double-double range (small-ε gamma-type measures).
//!
//! Precision is raised until `log2(Σ|c_j q^j| / |D|) + 80` bits fit; an
//! under-resolved run inflates that estimate, so the loop only stops once the
//! table is resolved.

use super::{settle_k, QBase, SeriesOptions, Stopper, Table};
use crate::error::{Error, Result};
use num_complex::Complex64;
use rug::ops::{NegAssign, Pow};
use rug::{Assign, Float};

const GUARD_BITS: i64 = 80;
const MAX_BITS: u32 = 1 << 18;

pub(crate) struct MultiTable {
    bits: u32,
    a: Float,
    q: Float,
    denom: Float,
    c: Vec<Float>,
    cq: Vec<Float>,
    aq_inv: Vec<Float>,
    /// Exponent beyond which terms are below the working precision.
    cutoff: f64,
}

impl std::fmt::Debug for MultiTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MultiTable").field("bits", &self.bits).field("terms", &self.c.len()).finish()
    }
}

struct Run {
    q: Float,
    c: Vec<Float>,
    cq: Vec<Float>,
    sum_cq: Float,
    log2_condition: f64,
    k: Option<usize>,
    crit_k: f64,
    crit_last: f64,
}

fn log2_abs(x: &Float) -> f64 {
    if x.is_zero() {
        return f64::NEG_INFINITY;
    }
    let e = x.get_exp().unwrap_or(0) as f64;
    let m = Float::with_val(64, x >> x.get_exp().unwrap_or(0)).to_f64().abs();
    e + m.log2()
}

fn run(p: &[f64], base: QBase, a: f64, opts: &SeriesOptions, negligible: f64, bits: u32) -> Run {
    let q = match base {
        QBase::Value(q) => Float::with_val(bits, q),
        QBase::ExpNeg(e) => Float::with_val(bits, -e).exp(),
    };
    let one = Float::with_val(bits, 1);
    let mut qj = one.clone();
    let mut c = vec![one.clone()];
    let mut cq = vec![one.clone()];
    let mut sum_c = one.clone();
    let mut sum_cq = one.clone();
    let mut abs_cq = one.clone();
    let mut acc = Float::new(bits);
    let mut t = Float::new(bits);
    let mut stop = Stopper::new(opts, negligible);
    let mut crit = a;
    let mut j = 0usize;
    while !stop.done(j, crit) {
        j += 1;
        qj *= &q;
        acc.assign(0);
        for k in 1..=j.min(p.len()) {
            let pk = p[k - 1];
            if pk != 0.0 {
                t.assign(&cq[j - k] * pk);
                acc += &t;
            }
        }
        t.assign(&qj - 1u32);
        acc /= &t;
        let cj = acc.clone();
        let cqj = Float::with_val(bits, &cj * &qj);
        sum_c += &cj;
        sum_cq += &cqj;
        t.assign(cqj.abs_ref());
        abs_cq += &t;
        c.push(cj);
        cq.push(cqj);
        crit = if sum_cq.is_zero() {
            f64::INFINITY
        } else {
            t.assign(&sum_c / &sum_cq);
            t *= a;
            t.to_f64().abs()
        };
    }
    let log2_condition = log2_abs(&abs_cq) - log2_abs(&sum_cq);
    Run { q, c, cq, sum_cq, log2_condition, k: stop.k, crit_k: stop.crit_k, crit_last: crit }
}

pub(crate) fn build(
    p: &[f64],
    base: QBase,
    a: f64,
    opts: &SeriesOptions,
    negligible: f64,
    start_bits: u32,
) -> Result<(Table, u32, MultiTable)> {
    let mut bits = start_bits;
    loop {
        let r = run(p, base, a, opts, negligible, bits);
        let need =
            if r.log2_condition.is_finite() { r.log2_condition.ceil() as i64 + GUARD_BITS } else { 2 * bits as i64 };
        if need > bits as i64 {
            if bits >= MAX_BITS {
                return Err(Error::IllConditioned(f64::INFINITY));
            }
            bits = ((2 * bits as i64).max(need + 64) as u32).min(MAX_BITS);
            log::debug!("coefficient table unresolved, retrying with {bits} bits");
            continue;
        }
        if r.sum_cq.is_zero() {
            return Err(Error::DegenerateDenominator(0.0));
        }
        let (k, crit_k, met) = settle_k(r.k, r.crit_k, r.crit_last, opts)?;
        let a_mp = Float::with_val(bits, a);
        let qinv = Float::with_val(bits, 1u32 / &r.q);
        let mut s = a_mp.clone();
        let mut aq_inv = Vec::with_capacity(r.c.len());
        for _ in 0..r.c.len() {
            aq_inv.push(s.clone());
            s *= &qinv;
        }
        let table = Table {
            coeffs: r.c.iter().map(Float::to_f64).collect(),
            coeffs_q: r.cq.iter().map(Float::to_f64).collect(),
            aq_inv: aq_inv.iter().map(Float::to_f64).collect(),
            denom: r.sum_cq.to_f64(),
            k,
            criterion_value: crit_k,
            criterion_met: met,
            tail_criterion: r.crit_last,
            condition_log10: r.log2_condition * std::f64::consts::LOG10_2,
        };
        let multi = MultiTable {
            bits,
            a: a_mp,
            q: r.q,
            denom: r.sum_cq,
            c: r.c,
            cq: r.cq,
            aq_inv,
            cutoff: bits as f64 * std::f64::consts::LN_2 + 40.0,
        };
        return Ok((table, bits, multi));
    }
}

impl MultiTable {
    /// `Σ_j w_j exp(−a q^{−j} x)` in working precision.
    fn exp_sum(&self, w: &[Float], x: f64) -> Float {
        let mut sum = Float::new(self.bits);
        let mut t = Float::new(self.bits);
        for (wj, s) in w.iter().zip(&self.aq_inv) {
            t.assign(s * x);
            if t.to_f64() > self.cutoff {
                break;
            }
            t.neg_assign();
            t.exp_mut();
            t *= wj;
            sum += &t;
        }
        sum
    }

    pub(crate) fn density(&self, x: f64) -> f64 {
        let mut s = self.exp_sum(&self.c, x);
        s *= &self.a;
        s /= &self.denom;
        s.to_f64()
    }

    pub(crate) fn cdf(&self, x: f64) -> f64 {
        let mut s = self.exp_sum(&self.cq, x);
        s /= &self.denom;
        Float::with_val(self.bits, 1u32 - &s).to_f64()
    }

    pub(crate) fn laplace(&self, u: Complex64) -> Complex64 {
        let mut re = Float::new(self.bits);
        let mut im = Float::new(self.bits);
        let mut qj = Float::with_val(self.bits, 1);
        let mut dr = Float::new(self.bits);
        let mut di = Float::new(self.bits);
        let mut n2 = Float::new(self.bits);
        let mut t = Float::new(self.bits);
        for cq in &self.cq {
            dr.assign(&qj * u.re);
            dr += &self.a;
            di.assign(&qj * u.im);
            n2.assign(dr.square_ref());
            t.assign(di.square_ref());
            n2 += &t;
            t.assign(cq * &dr);
            t /= &n2;
            re += &t;
            t.assign(cq * &di);
            t /= &n2;
            im -= &t;
            qj *= &self.q;
        }
        let mut scale = Float::with_val(self.bits, &self.a / &self.denom);
        re *= &scale;
        im *= &scale;
        scale.assign(0);
        Complex64::new(re.to_f64(), im.to_f64())
    }

    pub(crate) fn moment(&self, m: u32) -> f64 {
        let qm = Float::with_val(self.bits, (&self.q).pow(m + 1));
        let mut w = Float::with_val(self.bits, 1);
        let mut sum = Float::new(self.bits);
        let mut t = Float::new(self.bits);
        for c in &self.c {
            t.assign(c * &w);
            sum += &t;
            w *= &qm;
        }
        let mut den = Float::with_val(self.bits, (&self.a).pow(m));
        den *= &self.denom;
        sum /= &den;
        let fact: f64 = (1..=m).map(f64::from).product();
        sum.to_f64() * fact
    }
}
