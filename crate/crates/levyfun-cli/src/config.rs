//! Run configuration: TOML sections, `--set` overrides, sweeps and range checks.

use crate::CliError;
use levyfun::catalog::JumpPmf;
use levyfun::levy::LevyMeasureSpec;
use levyfun::series::{Arithmetic, CapPolicy, EvalDepth};
use levyfun::IvsSpec;
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub process: Option<ProcessConfig>,
    pub functional: FunctionalConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub mc: McSection,
    pub levy: Option<LevySection>,
    /// Directory that relative paths in the document resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessKind {
    Poisson,
    Mipp,
    SpaceFractional,
    NegativeBinomial,
    Custom,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessConfig {
    pub kind: ProcessKind,
    pub lambda: Option<f64>,
    pub n: Option<u32>,
    pub alpha: Option<f64>,
    pub r: Option<f64>,
    pub p0: Option<f64>,
    /// `masses[i] = P{Z = i + 1}` for `custom`.
    pub masses: Option<Vec<f64>>,
    pub zero_mass: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalKind {
    Exp,
    ExpDrifted,
    InversePower,
    GeneralLaplace,
    LevyApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GKind {
    Exponential,
    InversePower,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalConfig {
    pub kind: FunctionalKind,
    pub q: Option<f64>,
    pub mu: Option<f64>,
    pub p: Option<f64>,
    pub epsilon: Option<f64>,
    /// Integrand family for `general_laplace`.
    pub g: Option<GKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    /// Dotted key such as `functional.q`.
    pub key: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub spacing: Spacing,
    /// Highest moment order for `moments`.
    pub moments: u32,
    pub sweep: Option<Sweep>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { min: 0.01, max: 5.0, points: 200, spacing: Spacing::Linear, moments: 4, sweep: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArithmeticName {
    Auto,
    Double,
    Multi,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub threshold: f64,
    pub k_max: usize,
    pub min_terms: usize,
    pub depth: EvalDepth,
    pub arithmetic: ArithmeticName,
    pub mp_bits: u32,
    pub on_cap: CapPolicy,
    pub tol_neg: f64,
    pub mass_tol: f64,
    pub quad_tol: f64,
    /// Stages `K` of the inverse-power expansion.
    pub stages: usize,
    pub nested_depth: Option<usize>,
    pub prune: f64,
    /// Fixed number of series terms for `levy_approx`; criterion-driven when absent.
    pub terms: Option<usize>,
    /// Product depth of the Monte Carlo Laplace limit.
    pub laplace_depth: usize,
    pub ks_max: Option<f64>,
    pub mean_z_max: f64,
    pub norm_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            threshold: 1e-3,
            k_max: 10_000,
            min_terms: 0,
            depth: EvalDepth::Extended,
            arithmetic: ArithmeticName::Auto,
            mp_bits: 128,
            on_cap: CapPolicy::Error,
            tol_neg: 1e-9,
            mass_tol: 1e-3,
            quad_tol: 1e-9,
            stages: 10,
            nested_depth: None,
            prune: 1e-10,
            terms: None,
            laplace_depth: 200,
            ks_max: None,
            mean_z_max: 4.0,
            norm_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSection {
    pub samples: usize,
    pub seed: u64,
    pub series_tol: f64,
    pub max_terms: usize,
}

impl Default for McSection {
    fn default() -> Self {
        Self { samples: 100_000, seed: 1, series_tol: 1e-10, max_terms: 10_000_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevyKindName {
    Cpe,
    TemperedStable,
    Gamma,
    Custom,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevySection {
    pub kind: LevyKindName,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub chi: Option<f64>,
    /// Two-column `z,tail` file for `custom`.
    pub tail_csv: Option<String>,
    /// Refinement levels for `approx`.
    #[serde(default)]
    pub epsilons: Vec<f64>,
}

fn config_err(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {msg}"))
}

fn need<T: Copy>(v: Option<T>, path: &str) -> Result<T, CliError> {
    v.ok_or_else(|| config_err(path, "missing"))
}

fn check(ok: bool, path: &str, msg: impl std::fmt::Display) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(config_err(path, msg))
    }
}

/// Reads the document, applies `--set` overrides and expands the sweep.
/// Returns one configuration per sweep value, labelled by that value.
pub fn load(path: &Path, sets: &[String]) -> Result<Vec<(Option<f64>, RunConfig)>, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut doc: toml::Table =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    for s in sets {
        let (key, raw) =
            s.split_once('=').ok_or_else(|| CliError::Config(format!("--set {s}: expected section.key=value")))?;
        set_path(&mut doc, key.trim(), parse_value(raw.trim()))?;
    }
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let sweep = doc
        .get("output")
        .and_then(|o| o.get("sweep"))
        .cloned()
        .map(|s| s.try_into::<Sweep>().map_err(|e| config_err("output.sweep", e.to_string().trim_end())))
        .transpose()?;
    match sweep {
        None => Ok(vec![(None, parse(doc, &base_dir)?)]),
        Some(sw) => {
            check(!sw.values.is_empty(), "output.sweep.values", "needs at least one value")?;
            sw.values
                .iter()
                .map(|&v| {
                    let mut d = doc.clone();
                    // integral values also fill integer fields
                    let value = if v.fract() == 0.0 && v.abs() < 9e15 {
                        toml::Value::Integer(v as i64)
                    } else {
                        toml::Value::Float(v)
                    };
                    set_path(&mut d, &sw.key, value)
                        .map_err(|_| config_err("output.sweep.key", format!("cannot set `{}`", sw.key)))?;
                    Ok((Some(v), parse(d, &base_dir)?))
                })
                .collect()
        }
    }
}

fn parse(doc: toml::Table, base_dir: &Path) -> Result<RunConfig, CliError> {
    let mut cfg: RunConfig = toml::Value::Table(doc)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.to_string().trim_end().replace('\n', " ")))?;
    cfg.base_dir = base_dir.to_path_buf();
    cfg.validate()?;
    Ok(cfg)
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(doc: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), CliError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| CliError::Config(format!("bad key `{key}`")))?;
    let mut table = doc;
    for p in parts {
        let entry = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| CliError::Config(format!("`{p}` in `{key}` is not a section")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    fn validate(&self) -> Result<(), CliError> {
        let o = &self.output;
        check(o.min.is_finite() && o.max.is_finite() && o.min < o.max, "output.min", "must be below output.max")?;
        check(o.points >= 2, "output.points", "must be at least 2")?;
        check(o.spacing == Spacing::Linear || o.min > 0.0, "output.min", "log spacing needs a positive minimum")?;
        let t = &self.tolerances;
        check(t.threshold > 0.0, "tolerances.threshold", "must be positive")?;
        check(t.k_max >= 1, "tolerances.k_max", "must be at least 1")?;
        check(t.mass_tol > 0.0 && t.mass_tol < 1.0, "tolerances.mass_tol", "must lie in (0, 1)")?;
        check(t.quad_tol > 0.0, "tolerances.quad_tol", "must be positive")?;
        check(t.stages >= 1, "tolerances.stages", "must be at least 1")?;
        check(t.laplace_depth >= 1, "tolerances.laplace_depth", "must be at least 1")?;
        check(self.mc.samples >= 2, "mc.samples", "must be at least 2")?;
        check(self.mc.series_tol > 0.0 && self.mc.series_tol < 1.0, "mc.series_tol", "must lie in (0, 1)")?;
        let f = &self.functional;
        let unit = |v: Option<f64>, path: &str| -> Result<(), CliError> {
            let v = need(v, path)?;
            check(v > 0.0 && v < 1.0, path, format!("must lie in (0, 1), got {v}"))
        };
        match f.kind {
            FunctionalKind::Exp => unit(f.q, "functional.q")?,
            FunctionalKind::ExpDrifted => {
                unit(f.q, "functional.q")?;
                let mu = need(f.mu, "functional.mu")?;
                check(mu > 0.0 && mu.is_finite(), "functional.mu", format!("must be positive, got {mu}"))?;
            }
            FunctionalKind::InversePower => {
                let p = need(f.p, "functional.p")?;
                check(p > 1.0, "functional.p", format!("must exceed 1, got {p}"))?;
            }
            FunctionalKind::GeneralLaplace => match need(f.g, "functional.g")? {
                GKind::Exponential => unit(f.q, "functional.q")?,
                GKind::InversePower => {
                    let p = need(f.p, "functional.p")?;
                    check(p > 0.0, "functional.p", format!("must be positive, got {p}"))?;
                }
            },
            FunctionalKind::LevyApprox => {
                unit(f.epsilon, "functional.epsilon")?;
                check(self.levy.is_some(), "levy", "section required for levy_approx")?;
            }
        }
        if f.kind != FunctionalKind::LevyApprox {
            check(self.process.is_some(), "process", "section required")?;
        }
        if let Some(l) = &self.levy {
            for (i, e) in l.epsilons.iter().enumerate() {
                check(*e > 0.0 && *e < 1.0, &format!("levy.epsilons[{i}]"), format!("must lie in (0, 1), got {e}"))?;
            }
        }
        Ok(())
    }

    pub fn ivs(&self) -> Result<IvsSpec, CliError> {
        let p = self.process.as_ref().ok_or_else(|| config_err("process", "section required"))?;
        let pos = |v: Option<f64>, path: &str| -> Result<f64, CliError> {
            let v = need(v, path)?;
            check(v > 0.0 && v.is_finite(), path, format!("must be positive, got {v}"))?;
            Ok(v)
        };
        let spec = match p.kind {
            ProcessKind::Poisson => IvsSpec::poisson(pos(p.lambda, "process.lambda")?),
            ProcessKind::Mipp => {
                let n = need(p.n, "process.n")?;
                check(n >= 1, "process.n", "must be at least 1")?;
                IvsSpec::mipp(n, pos(p.lambda, "process.lambda")?)
            }
            ProcessKind::SpaceFractional => {
                let a = need(p.alpha, "process.alpha")?;
                check(a > 0.0 && a < 1.0, "process.alpha", format!("must lie in (0, 1), got {a}"))?;
                IvsSpec::space_fractional(a, pos(p.lambda, "process.lambda")?)
            }
            ProcessKind::NegativeBinomial => {
                let p0 = need(p.p0, "process.p0")?;
                check(p0 > 0.0 && p0 < 1.0, "process.p0", format!("must lie in (0, 1), got {p0}"))?;
                IvsSpec::negative_binomial(pos(p.r, "process.r")?, p0)
            }
            ProcessKind::Custom => {
                let masses = p.masses.clone().ok_or_else(|| config_err("process.masses", "missing"))?;
                let pmf = JumpPmf::from_masses(masses, p.zero_mass.unwrap_or(0.0))
                    .map_err(|e| config_err("process.masses", e))?;
                IvsSpec::new(pos(p.lambda, "process.lambda")?, pmf, 0.0)
            }
        }
        .map_err(|e| config_err("process", e))?;
        match (self.functional.kind, self.functional.mu) {
            (FunctionalKind::ExpDrifted, Some(mu)) => spec.with_drift(mu).map_err(|e| config_err("functional.mu", e)),
            _ => Ok(spec),
        }
    }

    pub fn levy_spec(&self) -> Result<LevyMeasureSpec, CliError> {
        let l = self.levy.as_ref().ok_or_else(|| config_err("levy", "section required"))?;
        let map = |e: levyfun::Error| config_err("levy", e);
        match l.kind {
            LevyKindName::Cpe => LevyMeasureSpec::cpe(need(l.a, "levy.a")?, need(l.b, "levy.b")?).map_err(map),
            LevyKindName::Gamma => LevyMeasureSpec::gamma(need(l.a, "levy.a")?, need(l.b, "levy.b")?).map_err(map),
            LevyKindName::TemperedStable => {
                LevyMeasureSpec::tempered_stable(need(l.a, "levy.a")?, need(l.b, "levy.b")?, need(l.chi, "levy.chi")?)
                    .map_err(map)
            }
            LevyKindName::Custom => {
                let rel = l.tail_csv.as_ref().ok_or_else(|| config_err("levy.tail_csv", "missing"))?;
                let path = self.base_dir.join(rel);
                let file = std::fs::File::open(&path)
                    .map_err(|e| config_err("levy.tail_csv", format!("{}: {e}", path.display())))?;
                LevyMeasureSpec::from_csv(std::io::BufReader::new(file)).map_err(|e| config_err("levy.tail_csv", e))
            }
        }
    }

    pub fn arithmetic(&self) -> Arithmetic {
        match self.tolerances.arithmetic {
            ArithmeticName::Auto => Arithmetic::Auto,
            ArithmeticName::Double => Arithmetic::Double,
            ArithmeticName::Multi => Arithmetic::Multi { bits: self.tolerances.mp_bits },
        }
    }

    /// Evaluation points of the output grid.
    pub fn grid(&self) -> Vec<f64> {
        let o = &self.output;
        let n = o.points - 1;
        (0..=n)
            .map(|i| {
                let t = i as f64 / n as f64;
                match o.spacing {
                    Spacing::Linear => o.min + (o.max - o.min) * t,
                    Spacing::Log => (o.min.ln() + (o.max / o.min).ln() * t).exp(),
                }
            })
            .collect()
    }
}
