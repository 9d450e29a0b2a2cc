//! Density of the drifted functional `I_q = ∫₀^∞ q^{S_t + μt} dt`, `μ > 0`.
//!
//! The support is `(0, 1/μ_q]` with `μ_q = −μ log q`, cut at the breakpoints
//! `a_j = q^j/μ_q`. On `(a_{j+1}, a_j]` the unnormalized density is the basis
//! `h_j`, and `h_0(x) = (1 − μ_q x)^{σ−1}` with `σ = λ̃/μ_q`.
//!
//! Each basis is tabulated in the coordinate `v = 1 − x/a_j ∈ [0, 1−q)`. The
//! shift `x ↦ x/q^k` maps basis `j` onto basis `j−k` at the same `v`, so all
//! bases share one set of Chebyshev–Lobatto panels. The panels refine
//! geometrically toward `v = 0`, where the bases carry `v^σ`-type terms.
//!
//! The bases are not built from the recurrence in its "boundary value minus
//! integral" form. For small drift that form cancels catastrophically. The
//! build uses the equivalent form
//!
//! ```text
//! h_j(v) = α_j(v) (a_j H_j(v) + R_j(v)),   α_j = λ̃ / (1 − q^j + q^j v),
//! H_j(v) = ∫_0^v ((1 − q^j + q^j v)/(1 − q^j + q^j w))^σ α_j(w) R_j(w) dw,
//! ```
//!
//! where `R_j(v) = Σ_k p̃_k ∫_{a_j}^{x/q^k} φ` collects the mass of earlier
//! bases that a jump of size `k` reaches. Every term is nonnegative.
//! Each basis keeps its own log scale, so values from `σ ≈ 10³` (drift near
//! zero) do not under- or overflow.

use crate::catalog::IvsSpec;
use crate::cheb::{self, Cheb};
use crate::error::{invalid, Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftedOptions {
    /// Stop at the first `K` whose basis mass is below this share of the total.
    pub mass_tol: f64,
    pub quad_tol: f64,
    pub continuity_tol: f64,
    /// Polynomial degree on each panel.
    pub panel_degree: usize,
    pub k_max: usize,
}

impl Default for DriftedOptions {
    fn default() -> Self {
        Self { mass_tol: 1e-3, quad_tol: 1e-9, continuity_tol: 1e-6, panel_degree: 24, k_max: 400 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Basis {
    /// Natural log of the factor applied to `values` and `hcum`.
    log_scale: f64,
    values: Vec<f64>,
    /// `∫_0^v h_j(w) dw` at the nodes.
    hcum: Vec<f64>,
}

/// Tabulated drifted density; immutable once built.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PiecewiseDensity {
    q: f64,
    mu_q: f64,
    scale_a: f64,
    sigma: f64,
    /// `a_0, …, a_{K+1}`.
    breakpoints: Vec<f64>,
    /// Panel edges in `v`, ascending from 0.
    panels: Vec<f64>,
    panel_degree: usize,
    /// Bases `1..=K`; `h_0` is analytic.
    bases: Vec<Basis>,
    /// Basis masses `∫ h_j` over their subintervals, as natural logs.
    log_masses: Vec<f64>,
    log_normalizer: f64,
    #[serde(rename = "K")]
    k: usize,
    criterion_value: f64,
    continuity_defect: f64,
    quad_error: f64,
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn panel_edges(q: f64, sigma: f64, quad_tol: f64) -> Vec<f64> {
    let top = 1.0 - q;
    let v_min = (quad_tol * 1e-3).powf(1.0 / sigma).clamp(1e-300, top / 4.0);
    let mut coarse = vec![top];
    let mut v = top;
    while v / 2.0 > v_min {
        v /= 2.0;
        coarse.push(v);
    }
    coarse.push(v_min);
    coarse.push(0.0);
    coarse.reverse();
    // Split further so the factor (e_1(r)/e_1(l))^σ stays below e² on a panel;
    // basis 1 has the steepest such factor.
    let e1 = |v: f64| 1.0 - q + q * v;
    let mut edges = vec![0.0];
    for w in coarse.windows(2) {
        let (l, r) = (w[0], w[1]);
        let growth = sigma * (e1(r) / e1(l)).ln();
        let m = (growth / 2.0).ceil().max(1.0) as usize;
        for i in 1..=m {
            edges.push(if i == m { r } else { l + (r - l) * i as f64 / m as f64 });
        }
    }
    edges
}

/// Builds the tabulated density of `∫ q^{S_t + μt} dt` for `spec.drift() = μ > 0`.
pub fn build_piecewise(spec: &IvsSpec, q: f64, opts: &DriftedOptions) -> Result<PiecewiseDensity> {
    if !(q > 0.0 && q < 1.0) {
        return Err(invalid("q", format!("base must lie in (0, 1), got {q}")));
    }
    if !(spec.drift() > 0.0) {
        return Err(invalid("drift", format!("needs a positive drift, got {}", spec.drift())));
    }
    if !(opts.mass_tol > 0.0 && opts.mass_tol < 1.0) {
        return Err(invalid("mass_tol", format!("must lie in (0, 1), got {}", opts.mass_tol)));
    }
    if !(opts.quad_tol > 0.0 && opts.quad_tol < 1e-2) {
        return Err(invalid("quad_tol", format!("must lie in (0, 1e-2), got {}", opts.quad_tol)));
    }
    if opts.panel_degree < 4 {
        return Err(invalid("panel_degree", "need at least degree 4"));
    }
    let a = spec.intensity();
    let mu_q = -q.ln() * spec.drift();
    let sigma = a / mu_q;
    let top = 1.0 - q;
    let pmf = spec.jumps();
    let cheb = Cheb::new(opts.panel_degree);
    let np = cheb.len();
    let panels = panel_edges(q, sigma, opts.quad_tol);
    let n_panels = panels.len() - 1;
    let nodes: Vec<f64> = panels.windows(2).flat_map(|w| cheb.map(w[0], w[1]).collect::<Vec<_>>()).collect();
    let n_nodes = nodes.len();
    let a_of = |j: usize| q.powi(j as i32) / mu_q;

    // h_0 in its own scale: values (v/(1−q))^{σ−1}; tail parts A_0(v) = ∫ left of v.
    let log_scale0 = (sigma - 1.0) * top.ln();
    let mass0 = a_of(0) * top / sigma;
    // A_m(v): mass of basis m left of v, in basis m's scale.
    let mut tails: Vec<Vec<f64>> =
        vec![nodes.iter().map(|&v| a_of(0) * top * (1.0 - (v / top).powf(sigma)) / sigma).collect()];
    let mut log_scales = vec![log_scale0];
    let mut masses = vec![mass0];
    let mut bases = Vec::new();
    let mut continuity_defect = 0.0f64;
    let mut quad_error = 0.0f64;
    let mut prev_top_value = 1.0; // h_{j−1}(v = 1−q) in its own scale

    let mut r = vec![0.0; n_nodes];
    let mut f = vec![0.0; np];
    let mut g = vec![0.0; np];
    let mut k_found = None;
    let mut crit = 1.0;
    for j in 1..=opts.k_max {
        let reference = log_scales[j - 1];
        let rel: Vec<f64> = log_scales.iter().map(|&l| (l - reference).exp()).collect();
        let scaled_mass: Vec<f64> = masses.iter().zip(&rel).map(|(m, s)| m * s).collect();
        let right_total: f64 = scaled_mass.iter().sum();
        let kmax = j.min(pmf.max_k());
        let mut covered = 0.0;
        r.iter_mut().for_each(|x| *x = 0.0);
        for k in 1..=kmax {
            let pk = pmf.mass(k);
            if pk == 0.0 {
                continue;
            }
            covered += pk;
            let window: f64 = scaled_mass[j + 1 - k..j].iter().sum();
            let src = &tails[j - k];
            let s = rel[j - k];
            for (ri, &ti) in r.iter_mut().zip(src) {
                *ri += pk * (window + s * ti);
            }
        }
        let beyond = (1.0 - covered).max(0.0) * right_total;
        r.iter_mut().for_each(|x| *x += beyond);

        let qj = q.powi(j as i32);
        let aj = a_of(j);
        let e = |v: f64| 1.0 - qj + qj * v;
        let mut values = vec![0.0; n_nodes];
        let mut hcum = vec![0.0; n_nodes];
        let mut h_left = 0.0;
        let mut err = 0.0;
        for p in 0..n_panels {
            let (lo, hi) = (panels[p], panels[p + 1]);
            let el = e(lo);
            let idx = p * np;
            for i in 0..np {
                let v = nodes[idx + i];
                let damp = (-sigma * (qj * (v - lo) / el).ln_1p()).exp();
                f[i] = damp * a / e(v) * r[idx + i];
            }
            cheb.cumulative(&f, (hi - lo) / 2.0, &mut g);
            let fmax = f.iter().fold(0.0f64, |s, x| s.max(x.abs()));
            err += cheb.tail_estimate(&f) * fmax * (hi - lo);
            for i in 0..np {
                let v = nodes[idx + i];
                let grow = (sigma * (qj * (v - lo) / el).ln_1p()).exp();
                let hv = grow * (h_left + g[i]);
                hcum[idx + i] = hv;
                values[idx + i] = a / e(v) * (aj * hv + r[idx + i]);
            }
            h_left = hcum[idx + np - 1];
            err *= (sigma * (qj * (hi - lo) / el).ln_1p()).exp();
        }
        let h_total = h_left;
        if h_total > 0.0 {
            quad_error = quad_error.max(err / h_total);
        }
        if !values.iter().all(|x| x.is_finite() && *x >= 0.0) {
            return Err(Error::QuadratureFailure { tol: opts.quad_tol, estimate: f64::INFINITY });
        }
        let peak = values.iter().fold(0.0f64, |s, &x| s.max(x));
        if peak == 0.0 {
            return Err(Error::QuadratureFailure { tol: opts.quad_tol, estimate: f64::INFINITY });
        }
        values.iter_mut().for_each(|x| *x /= peak);
        hcum.iter_mut().for_each(|x| *x /= peak);
        let log_scale = reference + peak.ln();

        // h_j(a_j) against h_{j−1}(a_j), both in the reference scale
        let here = values[0] * peak;
        let defect = (here - prev_top_value).abs() / here.abs().max(prev_top_value.abs());
        continuity_defect = continuity_defect.max(defect);
        prev_top_value = values[n_nodes - 1];

        let mass = aj * hcum[n_nodes - 1];
        tails.push(hcum.iter().map(|&h| mass - aj * h).collect());
        masses.push(mass);
        log_scales.push(log_scale);
        bases.push(Basis { log_scale, values, hcum });

        let log_m: Vec<f64> = masses.iter().zip(&log_scales).map(|(m, l)| m.ln() + l).collect();
        crit = (log_m[j] - log_sum_exp(log_m.iter().copied())).exp();
        log::trace!("drifted basis {j}: mass share {crit:.3e}");
        if crit < opts.mass_tol {
            k_found = Some(j);
            break;
        }
    }
    let k = k_found.ok_or(Error::CapExceeded { cap: opts.k_max, achieved: crit })?;
    if quad_error > opts.quad_tol {
        return Err(Error::QuadratureFailure { tol: opts.quad_tol, estimate: quad_error });
    }
    if continuity_defect > opts.continuity_tol {
        log::warn!("continuity defect {continuity_defect:.2e} exceeds {:.1e}", opts.continuity_tol);
    }
    let log_masses: Vec<f64> = masses.iter().zip(&log_scales).map(|(m, l)| m.ln() + l).collect();
    let log_normalizer = log_sum_exp(log_masses.iter().copied());
    Ok(PiecewiseDensity {
        q,
        mu_q,
        scale_a: a,
        sigma,
        breakpoints: (0..=k + 1).map(a_of).collect(),
        panels,
        panel_degree: opts.panel_degree,
        bases,
        log_masses,
        log_normalizer,
        k,
        criterion_value: crit,
        continuity_defect,
        quad_error,
    })
}

impl PiecewiseDensity {
    pub fn q(&self) -> f64 {
        self.q
    }

    /// `μ_q = −μ log q`.
    pub fn mu_q(&self) -> f64 {
        self.mu_q
    }

    pub fn scale_a(&self) -> f64 {
        self.scale_a
    }

    /// `λ̃/μ_q`, the exponent of `h_0`.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `a_0 > a_1 > … > a_{K+1}`.
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Support supremum `1/μ_q`.
    pub fn support_max(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Mass share of basis `K`, the value that stopped the build.
    pub fn criterion_value(&self) -> f64 {
        self.criterion_value
    }

    pub fn continuity_defect(&self) -> f64 {
        self.continuity_defect
    }

    /// Estimated relative quadrature error of the basis integrals.
    pub fn quad_error(&self) -> f64 {
        self.quad_error
    }

    /// `log C`, with `C = Σ_{j≤K} ∫ h_j`.
    pub fn log_normalizer(&self) -> f64 {
        self.log_normalizer
    }

    /// `C`; may underflow for drift close to zero, see [`Self::log_normalizer`].
    pub fn normalizer(&self) -> f64 {
        self.log_normalizer.exp()
    }

    /// `∫ h_j` over `(a_{j+1}, a_j]`, relative to `C`.
    pub fn basis_share(&self, j: usize) -> f64 {
        (self.log_masses[j] - self.log_normalizer).exp()
    }

    /// Total node count per basis.
    pub fn node_count(&self) -> usize {
        (self.panels.len() - 1) * (self.panel_degree + 1)
    }

    /// Index `j` with `x ∈ (a_{j+1}, a_j]`, or `None` off `(0, a_0]`.
    fn interval(&self, x: f64) -> Option<usize> {
        if !(x > 0.0 && x <= self.breakpoints[0]) {
            return None;
        }
        let mut j = ((x * self.mu_q).ln() / self.q.ln()).floor().max(0.0) as usize;
        // nudge across rounding at the breakpoints
        while x > self.a(j) && j > 0 {
            j -= 1;
        }
        while x <= self.a(j + 1) {
            j += 1;
        }
        Some(j)
    }

    fn a(&self, j: usize) -> f64 {
        self.q.powi(j as i32) / self.mu_q
    }

    fn locate(&self, v: f64) -> (usize, f64) {
        let n = self.panels.len() - 1;
        let p = match self.panels.binary_search_by(|e| e.total_cmp(&v)) {
            Ok(i) => i.min(n - 1),
            Err(i) => i.saturating_sub(1).min(n - 1),
        };
        let (lo, hi) = (self.panels[p], self.panels[p + 1]);
        (p, ((2.0 * v - lo - hi) / (hi - lo)).clamp(-1.0, 1.0))
    }

    fn panel_interp(&self, table: &[f64], v: f64) -> f64 {
        let (p, t) = self.locate(v);
        let np = self.panel_degree + 1;
        cheb::interp_lobatto(&table[p * np..(p + 1) * np], t)
    }

    /// Unnormalized basis `h_j(x)` for `x ∈ (a_{j+1}, a_j]`, with the
    /// constant fixed by `h_0(x) = (1 − μ_q x)^{σ−1}`.
    pub fn basis_value(&self, j: usize, x: f64) -> f64 {
        assert!(j <= self.k, "basis {j} was not built (K = {})", self.k);
        let v = 1.0 - x / self.a(j);
        if j == 0 {
            return v.powf(self.sigma - 1.0);
        }
        let b = &self.bases[j - 1];
        self.panel_interp(&b.values, v) * b.log_scale.exp()
    }

    /// `φ_q(x)`; zero above `1/μ_q` and on the truncated range `(0, a_{K+1}]`.
    pub fn density(&self, x: f64) -> f64 {
        let Some(j) = self.interval(x) else { return 0.0 };
        if j > self.k {
            return 0.0;
        }
        let v = 1.0 - x / self.a(j);
        let value = if j == 0 {
            ((self.sigma - 1.0) * v.ln() - self.log_normalizer).exp()
        } else {
            let b = &self.bases[j - 1];
            self.panel_interp(&b.values, v) * (b.log_scale - self.log_normalizer).exp()
        };
        value.max(0.0)
    }

    /// `P{I_q ≤ x}`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x >= self.breakpoints[0] {
            return 1.0;
        }
        let Some(j) = self.interval(x) else { return 0.0 };
        if j > self.k {
            return 0.0;
        }
        let v = 1.0 - x / self.a(j);
        let right: f64 = (0..j).map(|i| self.basis_share(i)).sum();
        let own = if j == 0 {
            self.a(0) * ((self.sigma * v.ln() - self.log_normalizer).exp() / self.sigma)
        } else {
            let b = &self.bases[j - 1];
            self.a(j) * self.panel_interp(&b.hcum, v) * (b.log_scale - self.log_normalizer).exp()
        };
        (1.0 - right - own).clamp(0.0, 1.0)
    }
}

/// `E I^m = m! / Π_{j≤m} Ψ(−j log q)`, with `Ψ` the Laplace exponent
/// including the drift.
pub fn moment(spec: &IvsSpec, q: f64, m: u32) -> f64 {
    let lq = -q.ln();
    (1..=m).map(|j| j as f64 / crate::catalog::laplace_exponent(spec, j as f64 * lq)).product()
}
