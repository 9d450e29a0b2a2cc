//! Subcommand implementations. Each returns the full CSV document.

use crate::config::{FunctionalKind, GKind, RunConfig};
use crate::output::{num, Table};
use crate::CliError;
use levyfun::drifted::{self, build_piecewise, DriftedOptions, PiecewiseDensity};
use levyfun::general::{laplace_limit, DecreasingFunctional, InversePowerModel, InversePowerOptions};
use levyfun::levy::{self, approx_model, cdf_error_bound, default_options, discretize, fixed_terms, LevyApprox};
use levyfun::mc::{self, ks_statistic, mean_and_se, McConfig};
use levyfun::quad::{integrate_pieces, QuadOptions};
use levyfun::series::{self, build_coefficients, CapPolicy, ExpFunctionalModel};
use levyfun::{IvsSpec, SeriesOptions};
use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Density,
    Cdf,
    Laplace,
    Moments,
    Validate,
    Approx,
    Sample,
}

enum Model {
    Exp(ExpFunctionalModel),
    Drifted(PiecewiseDensity),
    InversePower(InversePowerModel),
    General(DecreasingFunctional),
    Levy(LevyApprox),
}

struct Built {
    spec: Option<IvsSpec>,
    model: Model,
}

fn series_options(cfg: &RunConfig) -> SeriesOptions {
    let t = &cfg.tolerances;
    SeriesOptions {
        threshold: t.threshold,
        k_max: t.k_max,
        min_terms: t.min_terms,
        depth: t.depth,
        arithmetic: cfg.arithmetic(),
        on_cap: t.on_cap,
        tol_neg: t.tol_neg,
        ..SeriesOptions::default()
    }
}

/// `relaxed` accepts truncated or slightly negative models so that
/// `validate` can report on them instead of refusing to build.
fn build(cfg: &RunConfig, relaxed: bool) -> Result<Built, CliError> {
    let f = &cfg.functional;
    let t = &cfg.tolerances;
    let mut sopts = series_options(cfg);
    if relaxed {
        sopts.on_cap = CapPolicy::Accept;
        sopts.tol_neg = f64::INFINITY;
    }
    let spec = match f.kind {
        FunctionalKind::LevyApprox => None,
        _ => Some(cfg.ivs()?),
    };
    let model = match f.kind {
        FunctionalKind::Exp => Model::Exp(build_coefficients(spec.as_ref().unwrap(), f.q.unwrap(), &sopts)?),
        FunctionalKind::ExpDrifted => {
            let opts =
                DriftedOptions { mass_tol: t.mass_tol, quad_tol: t.quad_tol, k_max: t.k_max, ..Default::default() };
            Model::Drifted(build_piecewise(spec.as_ref().unwrap(), f.q.unwrap(), &opts)?)
        }
        FunctionalKind::InversePower => {
            let opts =
                InversePowerOptions { k: t.stages, nested_depth: t.nested_depth, prune: t.prune, ..Default::default() };
            Model::InversePower(InversePowerModel::new(spec.as_ref().unwrap(), f.p.unwrap(), &opts)?)
        }
        FunctionalKind::GeneralLaplace => Model::General(match f.g.unwrap() {
            GKind::Exponential => DecreasingFunctional::exponential(f.q.unwrap())?,
            GKind::InversePower => DecreasingFunctional::inverse_power(f.p.unwrap())?,
        }),
        FunctionalKind::LevyApprox => {
            let eps = f.epsilon.unwrap();
            let mut opts = match t.terms {
                Some(n) => fixed_terms(n),
                None => default_options(eps),
            };
            opts.arithmetic = cfg.arithmetic();
            opts.tol_neg = if relaxed { f64::INFINITY } else { t.tol_neg };
            Model::Levy(approx_model(&cfg.levy_spec()?, eps, &opts)?)
        }
    };
    Ok(Built { spec, model })
}

fn mc_config(cfg: &RunConfig) -> McConfig {
    McConfig {
        series_tol: cfg.mc.series_tol,
        max_terms: cfg.mc.max_terms,
        ..McConfig::new(cfg.mc.samples, cfg.mc.seed)
    }
}

impl Built {
    fn density(&self, x: f64) -> Option<f64> {
        match &self.model {
            Model::Exp(m) => Some(m.density(x)),
            Model::Drifted(m) => Some(m.density(x)),
            Model::InversePower(m) => Some(m.density(x)),
            Model::Levy(m) => Some(m.density(x)),
            Model::General(_) => None,
        }
    }

    fn cdf(&self, x: f64) -> Option<f64> {
        match &self.model {
            Model::Exp(m) => Some(m.cdf(x)),
            Model::Drifted(m) => Some(m.cdf(x)),
            Model::InversePower(m) => Some(m.cdf(x)),
            Model::Levy(m) => Some(m.cdf(x)),
            Model::General(_) => None,
        }
    }

    fn moment(&self, cfg: &RunConfig, m: u32) -> Option<f64> {
        match &self.model {
            Model::Exp(_) => Some(series::moment(self.spec.as_ref()?, cfg.functional.q?, m)),
            Model::Drifted(_) => Some(drifted::moment(self.spec.as_ref()?, cfg.functional.q?, m)),
            Model::InversePower(model) => Some(model.moment(m)),
            Model::Levy(model) => Some(model.moment(m)),
            Model::General(_) => None,
        }
    }

    /// Breakpoints for quadrature of the density over its support.
    fn pieces(&self, cfg: &RunConfig) -> Vec<f64> {
        if let Model::Drifted(m) = &self.model {
            let mut pts: Vec<f64> = m.breakpoints().to_vec();
            pts.push(0.0);
            pts.reverse();
            return pts;
        }
        let mean = self.moment(cfg, 1).unwrap_or(1.0);
        let rate = match &self.model {
            Model::Levy(m) => m.grid().total,
            _ => self.spec.as_ref().map(|s| s.intensity()).unwrap_or(1.0),
        };
        let mut pts = vec![0.0];
        let mut x = mean / 1024.0;
        while x < 60.0 * mean + 40.0 / rate {
            pts.push(x);
            x *= 1.5;
        }
        pts
    }

    fn laplace(&self, cfg: &RunConfig, u: f64) -> Result<(f64, Option<f64>), CliError> {
        let z = Complex64::new(u, 0.0);
        Ok(match &self.model {
            Model::Exp(m) => (m.laplace(z).re, None),
            Model::InversePower(m) => (m.laplace(z)?.re, None),
            Model::Levy(m) => (m.laplace(z).re, None),
            Model::Drifted(m) => {
                let opts = QuadOptions::tol(1e-15, 1e-12);
                (integrate_pieces(|x| (-u * x).exp() * m.density(x), &self.pieces(cfg), opts)?.value, None)
            }
            Model::General(g) => {
                let est = laplace_limit(
                    g,
                    self.spec.as_ref().unwrap(),
                    z,
                    cfg.tolerances.laplace_depth,
                    cfg.mc.samples,
                    cfg.mc.seed,
                )?;
                (est.value.re, Some(est.std_error))
            }
        })
    }

    fn sample(&self, cfg: &RunConfig) -> Result<Vec<f64>, CliError> {
        let mc = mc_config(cfg);
        let f = &cfg.functional;
        Ok(match &self.model {
            Model::Exp(_) | Model::Drifted(_) => {
                mc::sample_exp_functional(self.spec.as_ref().unwrap(), f.q.unwrap(), &mc)?
            }
            Model::InversePower(_) => mc::sample_inverse_power(self.spec.as_ref().unwrap(), f.p.unwrap(), &mc)?,
            Model::General(g) => {
                mc::sample_general(g, self.spec.as_ref().unwrap(), &mc)?.into_iter().map(|(a, b)| a + b).collect()
            }
            Model::Levy(m) => {
                let eps = f.epsilon.unwrap();
                mc::sample_exp_functional(&m.grid().ivs()?, (-eps).exp(), &mc)?
            }
        })
    }

    fn metadata(&self, cfg: &RunConfig) -> Vec<String> {
        let t = &cfg.tolerances;
        let mut out = Vec::new();
        if let Some(p) = &cfg.process {
            out.push(format!("process = {:?}", p.kind));
        }
        out.push(format!("functional = {:?}", cfg.functional.kind));
        match &self.model {
            Model::Exp(m) => {
                out.push(format!("q = {}", num(m.q())));
                out.push(format!("K = {}", m.k()));
                out.push(format!("criterion = {}", num(m.criterion_value())));
                out.push(format!("terms evaluated = {}", m.eval_terms()));
                out.push(format!("precision bits = {}", m.precision_bits()));
                out.push(format!("tolerances: threshold = {}, k_max = {}", num(t.threshold), t.k_max));
            }
            Model::Drifted(m) => {
                out.push(format!("q = {}, mu = {}", num(m.q()), num(self.spec.as_ref().unwrap().drift())));
                out.push(format!("K = {}", m.k()));
                out.push(format!("criterion = {}", num(m.criterion_value())));
                out.push(format!("support max = {}", num(m.support_max())));
                out.push(format!("tolerances: mass_tol = {}, quad_tol = {}", num(t.mass_tol), num(t.quad_tol)));
            }
            Model::InversePower(m) => {
                out.push(format!("p = {}", num(m.p())));
                out.push(format!("K = {}", m.k()));
                out.push(format!("nested depth = {}", m.nested_depth()));
                out.push(format!("index vectors = {}", m.vectors()));
                out.push(format!("kept mass = {}", num(m.kept_mass())));
                let u = Complex64::new(0.99 * m.lambda_eff(), 0.0);
                out.push(format!("log tail bound at u = 0.99 lambda = {}", num(m.log_tail_bound(u))));
            }
            Model::General(g) => {
                out.push(format!("g = {}", g.label()));
                out.push(format!(
                    "laplace depth = {}, samples = {}, seed = {}",
                    t.laplace_depth, cfg.mc.samples, cfg.mc.seed
                ));
            }
            Model::Levy(m) => {
                let g = m.grid();
                out.push(format!("levy = {:?}", cfg.levy.as_ref().unwrap().kind));
                out.push(format!("epsilon = {}, rho = {}", num(g.epsilon), num(g.rho)));
                out.push(format!("total rate = {}, k_cut = {}", num(g.total), g.k_cut));
                out.push(format!("K = {}, terms evaluated = {}", m.model().k(), m.model().eval_terms()));
                out.push(format!("precision bits = {}", m.model().precision_bits()));
            }
        }
        out
    }
}

fn unsupported(what: &str, cfg: &RunConfig) -> CliError {
    CliError::Config(format!("functional.kind: {what} is not available for {:?}", cfg.functional.kind))
}

pub fn run(
    cmd: Command,
    runs: &[(Option<f64>, RunConfig)],
    sweep_name: Option<&str>,
) -> Result<(String, bool), CliError> {
    let mut table = Table::new(env!("CARGO_PKG_VERSION"), sweep_name);
    let mut all_pass = true;
    for (label, cfg) in runs {
        let pass = run_one(cmd, cfg, *label, &mut table)?;
        all_pass &= pass;
    }
    Ok((table.finish(), all_pass))
}

fn run_one(cmd: Command, cfg: &RunConfig, label: Option<f64>, table: &mut Table) -> Result<bool, CliError> {
    if cmd == Command::Approx {
        return approx(cfg, label, table).map(|_| true);
    }
    let built = build(cfg, cmd == Command::Validate)?;
    table.meta(label, built.metadata(cfg));
    match cmd {
        Command::Density | Command::Cdf => {
            let (name, density) = if cmd == Command::Density { ("density", true) } else { ("cdf", false) };
            table.header(&["x", name]);
            for x in cfg.grid() {
                let v = if density { built.density(x) } else { built.cdf(x) };
                let v = v.ok_or_else(|| unsupported(name, cfg))?;
                table.row(label, &[num(x), num(v)]);
            }
        }
        Command::Laplace => {
            let general = matches!(built.model, Model::General(_));
            if general {
                table.header(&["u", "laplace", "std_error"]);
            } else {
                table.header(&["u", "laplace"]);
            }
            for u in cfg.grid() {
                let (v, se) = built.laplace(cfg, u)?;
                match se {
                    Some(se) => table.row(label, &[num(u), num(v), num(se)]),
                    None => table.row(label, &[num(u), num(v)]),
                }
            }
        }
        Command::Moments => {
            table.header(&["m", "moment"]);
            for m in 0..=cfg.output.moments {
                let v = if m == 0 { Some(1.0) } else { built.moment(cfg, m) };
                table.row(label, &[m.to_string(), num(v.ok_or_else(|| unsupported("moments", cfg))?)]);
            }
        }
        Command::Sample => {
            table.header(&["sample"]);
            for s in built.sample(cfg)? {
                table.row(label, &[num(s)]);
            }
        }
        Command::Validate => return validate(cfg, &built, label, table),
        Command::Approx => unreachable!(),
    }
    Ok(true)
}

fn validate(cfg: &RunConfig, built: &Built, label: Option<f64>, table: &mut Table) -> Result<bool, CliError> {
    if matches!(built.model, Model::General(_)) {
        return Err(unsupported("validate", cfg));
    }
    let t = &cfg.tolerances;
    table.header(&["check", "value", "limit", "status"]);
    let mut pass = true;
    let mut emit = |table: &mut Table, name: &str, value: f64, limit: f64| {
        let ok = value <= limit;
        pass &= ok;
        table.row(label, &[name.to_string(), num(value), num(limit), if ok { "pass" } else { "fail" }.to_string()]);
    };
    match &built.model {
        Model::Exp(m) => emit(table, "criterion", m.criterion_value(), t.threshold),
        Model::Levy(m) if t.terms.is_none() => emit(table, "criterion", m.model().criterion_value(), 1e-6),
        Model::Drifted(m) => emit(table, "criterion", m.criterion_value(), t.mass_tol),
        _ => {}
    }
    let mass = integrate_pieces(|x| built.density(x).unwrap(), &built.pieces(cfg), QuadOptions::tol(1e-14, 1e-11))?;
    emit(table, "normalization", (mass.value - 1.0).abs(), t.norm_tol);
    let samples = built.sample(cfg)?;
    let ks = ks_statistic(&samples, |x| built.cdf(x).unwrap());
    let ks_default = match built.model {
        Model::Exp(_) => 0.01,
        Model::Drifted(_) => 0.015,
        _ => 0.02,
    };
    emit(table, "ks", ks, t.ks_max.unwrap_or(ks_default));
    let (m, se) = mean_and_se(&samples);
    let mean = built.moment(cfg, 1).unwrap();
    emit(table, "mean_z", (m - mean).abs() / se, t.mean_z_max);
    Ok(pass)
}

fn approx(cfg: &RunConfig, label: Option<f64>, table: &mut Table) -> Result<(), CliError> {
    if cfg.functional.kind != FunctionalKind::LevyApprox {
        return Err(unsupported("approx", cfg));
    }
    let spec = cfg.levy_spec()?;
    let eps = cfg.functional.epsilon.unwrap();
    let levels = &cfg.levy.as_ref().unwrap().epsilons;
    if levels.is_empty() {
        let g = discretize(&spec, eps)?;
        table.meta(
            label,
            vec![
                format!("epsilon = {}, rho = {}", num(g.epsilon), num(g.rho)),
                format!("total rate = {}, k_cut = {}, tail beyond = {}", num(g.total), g.k_cut, num(g.tail_beyond)),
            ],
        );
        table.header(&["k", "z", "mass"]);
        for (i, m) in g.masses.iter().enumerate() {
            table.row(label, &[(i + 1).to_string(), num(eps * (i + 1) as f64), num(*m)]);
        }
        return Ok(());
    }
    let terms = cfg.tolerances.terms;
    let r = cdf_error_bound(&spec, levels, &cfg.grid(), |e| match terms {
        Some(n) => fixed_terms(n),
        None => levy::default_options(e),
    })?;
    let fmt = |v: &[f64]| v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(" ");
    table.meta(
        label,
        vec![
            format!("diff ratios = {}", fmt(&r.diff_ratios)),
            format!("rho ratios = {}", fmt(&r.rho_ratios)),
            format!("monotone = {}, consistent = {}", r.monotone, r.consistent),
        ],
    );
    table.header(&["epsilon", "next_epsilon", "rho", "next_rho", "sup_diff"]);
    for (i, d) in r.sup_diffs.iter().enumerate() {
        table.row(label, &[num(r.epsilons[i]), num(r.epsilons[i + 1]), num(r.rho[i]), num(r.rho[i + 1]), num(*d)]);
    }
    Ok(())
}
