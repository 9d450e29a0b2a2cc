//! Chebyshev–Lobatto panels: nodes, cumulative (Clenshaw–Curtis) integration
//! and barycentric interpolation on `[-1, 1]`.

use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub(crate) struct Cheb {
    n: usize,
    /// Ascending nodes `−cos(πi/n)`.
    nodes: Vec<f64>,
    /// `cum[i * (n+1) + m]`: contribution of value `m` to `∫_{-1}^{t_i}`.
    cum: Vec<f64>,
    /// `coef[k * (n+1) + m]`: contribution of value `m` to coefficient `a_k`.
    coef: Vec<f64>,
}

impl Cheb {
    pub(crate) fn new(n: usize) -> Self {
        assert!(n >= 2);
        let m = n + 1;
        let theta: Vec<f64> = (0..m).map(|i| PI - PI * i as f64 / n as f64).collect();
        let nodes: Vec<f64> = (0..m).map(|i| -(PI * i as f64 / n as f64).cos()).collect();

        let mut coef = vec![0.0; m * m];
        for k in 0..m {
            for i in 0..m {
                let end = if i == 0 || i == n { 0.5 } else { 1.0 };
                let mut c = 2.0 / n as f64 * end * (k as f64 * theta[i]).cos();
                if k == 0 || k == n {
                    c /= 2.0;
                }
                coef[k * m + i] = c;
            }
        }

        let mut cum = vec![0.0; m * m];
        for col in 0..m {
            let a: Vec<f64> = (0..m).map(|k| coef[k * m + col]).collect();
            let mut b = vec![0.0; m + 1];
            b[1] += a[0];
            if m > 1 {
                b[2] += a[1] / 4.0;
            }
            for k in 2..m {
                b[k + 1] += a[k] / (2.0 * (k + 1) as f64);
                b[k - 1] -= a[k] / (2.0 * (k - 1) as f64);
            }
            b[0] = -(1..=m).map(|k| if k % 2 == 0 { b[k] } else { -b[k] }).sum::<f64>();
            for i in 0..m {
                cum[i * m + col] = (0..=m).map(|k| b[k] * (k as f64 * theta[i]).cos()).sum();
            }
        }
        Self { n, nodes, cum, coef }
    }

    pub(crate) fn len(&self) -> usize {
        self.n + 1
    }

    #[cfg(test)]
    pub(crate) fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Nodes mapped to `[lo, hi]`.
    pub(crate) fn map(&self, lo: f64, hi: f64) -> impl Iterator<Item = f64> + '_ {
        let (c, h) = ((lo + hi) / 2.0, (hi - lo) / 2.0);
        self.nodes.iter().map(move |&t| {
            if t == -1.0 {
                lo
            } else if t == 1.0 {
                hi
            } else {
                c + h * t
            }
        })
    }

    /// `∫_{lo}^{x_i} f` at every mapped node, from node values of `f`.
    pub(crate) fn cumulative(&self, vals: &[f64], half_width: f64, out: &mut [f64]) {
        let m = self.len();
        for (i, o) in out.iter_mut().enumerate().take(m) {
            *o = half_width * self.cum[i * m..(i + 1) * m].iter().zip(vals).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    /// Size of the two highest Chebyshev coefficients relative to the largest.
    pub(crate) fn tail_estimate(&self, vals: &[f64]) -> f64 {
        let m = self.len();
        let a: Vec<f64> =
            (0..m).map(|k| self.coef[k * m..(k + 1) * m].iter().zip(vals).map(|(w, v)| w * v).sum()).collect();
        let big = a.iter().fold(0.0f64, |s, x| s.max(x.abs()));
        if big == 0.0 {
            return 0.0;
        }
        (a[m - 1].abs() + a[m - 2].abs()) / big
    }
}

/// Barycentric interpolation on the `vals.len()` Lobatto nodes, without a
/// prebuilt [`Cheb`].
pub(crate) fn interp_lobatto(vals: &[f64], t: f64) -> f64 {
    let n = vals.len() - 1;
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &v) in vals.iter().enumerate() {
        let x = -(PI * i as f64 / n as f64).cos();
        let d = t - x;
        if d == 0.0 || (i == 0 && t == -1.0) || (i == n && t == 1.0) {
            return v;
        }
        let s = if i % 2 == 0 { 1.0 } else { -1.0 };
        let r = if i == 0 || i == n { s / 2.0 / d } else { s / d };
        num += r * v;
        den += r;
    }
    num / den
}
