//! Instance configuration files.
//!
//! ```toml
//! [system]
//! d = 1
//! m = 1
//! p = 1
//! horizon = 1.0
//! steps = 200
//! a = [0.0]
//! b = [1.0]
//! c = [1.0]
//!
//! [kernel]
//! kind = "exponential"
//! terms = [{ g = [1.0], rate = 0.0 }]
//!
//! [reference]
//! kind = "polynomial"
//! coefficients = [[0.0, 1.0]]
//!
//! [initial]
//! head = [1.0]
//! ```

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use toml::Spanned;

use memtrack::{ControlSignal, ExpTerm, InitialState, KernelSpec, ReferenceSignal, SystemSpec, TimeGrid};

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    pub system: SystemSection,
    #[serde(default)]
    pub kernel: KernelSection,
    #[serde(default)]
    pub reference: SignalSection,
    pub initial: InitialSection,
    #[serde(default)]
    pub control: SignalSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub d: usize,
    pub m: usize,
    pub p: usize,
    pub horizon: f64,
    pub steps: usize,
    pub a: Spanned<Vec<f64>>,
    pub b: Spanned<Vec<f64>>,
    pub c: Spanned<Vec<f64>>,
}

/// `kind` is `zero`, `exponential` (with `terms`) or `table` (with `values`).
#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    #[serde(default)]
    pub kind: Option<Spanned<String>>,
    /// `N(t) = sum_k G_k exp(-rate_k t)`.
    #[serde(default)]
    pub terms: Vec<ExpTermSection>,
    /// Row-major `d x d` values at every node.
    #[serde(default)]
    pub values: Option<Spanned<Vec<Vec<f64>>>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpTermSection {
    pub g: Spanned<Vec<f64>>,
    pub rate: f64,
}

/// A vector signal of time. `kind` is `zero`, `polynomial` or `table`.
///
/// For `polynomial`, `coefficients[j] = [c0, c1, ...]` gives channel `j` as
/// `c0 + c1 t + ...`; `table` lists one row per node.
#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SignalSection {
    #[serde(default)]
    pub kind: Option<Spanned<String>>,
    #[serde(default)]
    pub coefficients: Option<Spanned<Vec<Vec<f64>>>>,
    #[serde(default)]
    pub values: Option<Spanned<Vec<Vec<f64>>>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub head: Spanned<Vec<f64>>,
    #[serde(default)]
    pub tau_index: usize,
    /// History on `[0, tau]`; ignored when `tau_index = 0`.
    #[serde(default)]
    pub tail: SignalSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub route: Option<String>,
    #[serde(default)]
    pub checkpoint: usize,
    #[serde(default)]
    pub convergence_grids: Vec<usize>,
    #[serde(default = "default_blowup")]
    pub blowup_bound: f64,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            route: None,
            checkpoint: 0,
            convergence_grids: Vec::new(),
            blowup_bound: default_blowup(),
            tolerances: Tolerances::default(),
        }
    }
}

fn default_blowup() -> f64 {
    1e8
}

/// Thresholds used by `verify`.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub symmetry: f64,
    pub agreement: f64,
    pub gradient: f64,
    pub slack: f64,
    pub restart: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { symmetry: 1e-10, agreement: 5e-2, gradient: 1e-6, slack: 1e-8, restart: 1e-8 }
    }
}

/// Everything the solvers need, built from a validated configuration.
#[derive(Debug, Clone)]
pub struct Instance {
    pub grid: TimeGrid,
    pub sys: SystemSpec,
    pub xi: InitialState,
    pub y: ReferenceSignal,
    pub control: ControlSignal,
}

pub struct Source<'a> {
    name: &'a str,
    text: &'a str,
}

impl<'a> Source<'a> {
    pub fn new(name: &'a str, text: &'a str) -> Self {
        Self { name, text }
    }

    fn line(&self, span: Range<usize>) -> usize {
        self.text[..span.start.min(self.text.len())].matches('\n').count() + 1
    }

    fn err(&self, span: Range<usize>, field: &str, msg: String) -> CliError {
        CliError::Input(format!("{}:{}: {field}: {msg}", self.name, self.line(span)))
    }
}

pub fn parse(src: &Source) -> Result<InstanceConfig, CliError> {
    toml::from_str(src.text).map_err(|e| CliError::Input(format!("{}: {}", src.name, e.to_string().trim_end())))
}

fn matrix(src: &Source, field: &str, v: &Spanned<Vec<f64>>, rows: usize, cols: usize) -> Result<DMatrix<f64>, CliError> {
    if v.get_ref().len() != rows * cols {
        return Err(src.err(
            v.span(),
            field,
            format!("expected {} entries ({rows}x{cols} row-major), got {}", rows * cols, v.get_ref().len()),
        ));
    }
    Ok(DMatrix::from_row_slice(rows, cols, v.get_ref()))
}

fn kind<'s>(src: &Source, field: &str, kind: &'s Option<Spanned<String>>, allowed: &[&str]) -> Result<(&'s str, Range<usize>), CliError> {
    match kind {
        None => Ok(("zero", 0..0)),
        Some(k) if allowed.contains(&k.get_ref().as_str()) => Ok((k.get_ref().as_str(), k.span())),
        Some(k) => Err(src.err(k.span(), field, format!("unknown kind {:?}, expected one of {}", k.get_ref(), allowed.join(", ")))),
    }
}

fn required<'s, T>(src: &Source, span: Range<usize>, field: &str, v: &'s Option<Spanned<T>>) -> Result<&'s Spanned<T>, CliError> {
    v.as_ref().ok_or_else(|| src.err(span, field, "missing for this kind".into()))
}

fn signal(
    src: &Source,
    field: &str,
    spec: &SignalSection,
    dim: usize,
    nodes: usize,
    t0: usize,
    grid: &TimeGrid,
) -> Result<Vec<DVector<f64>>, CliError> {
    let (kind, span) = kind(src, &format!("{field}.kind"), &spec.kind, &["zero", "polynomial", "table"])?;
    match kind {
        "polynomial" => {
            let coefficients = required(src, span, &format!("{field}.coefficients"), &spec.coefficients)?;
            let c = coefficients.get_ref();
            if c.len() != dim {
                return Err(src.err(
                    coefficients.span(),
                    &format!("{field}.coefficients"),
                    format!("expected {dim} channels, got {}", c.len()),
                ));
            }
            Ok((t0..t0 + nodes)
                .map(|i| {
                    let t = grid.node(i);
                    DVector::from_fn(dim, |j, _| c[j].iter().rev().fold(0.0, |acc, x| acc * t + x))
                })
                .collect())
        }
        "table" => {
            let values = required(src, span, &format!("{field}.values"), &spec.values)?;
            let v = values.get_ref();
            let name = format!("{field}.values");
            if v.len() != nodes {
                return Err(src.err(values.span(), &name, format!("expected {nodes} rows, got {}", v.len())));
            }
            if let Some(i) = v.iter().position(|r| r.len() != dim) {
                return Err(src.err(values.span(), &name, format!("row {i} has {} entries, expected {dim}", v[i].len())));
            }
            Ok(v.iter().map(|r| DVector::from_column_slice(r)).collect())
        }
        _ => Ok(vec![DVector::zeros(dim); nodes]),
    }
}

impl InstanceConfig {
    /// Builds the instance, optionally on a different number of steps.
    pub fn instance(&self, src: &Source, steps: Option<usize>) -> Result<Instance, CliError> {
        let s = &self.system;
        let n = steps.unwrap_or(s.steps);
        if s.d == 0 || s.m == 0 || s.p == 0 {
            return Err(CliError::Input(format!("{}: system: dimensions d, m, p must be positive", src.name)));
        }
        if n < 2 {
            return Err(CliError::Input(format!("{}: system.steps: need at least 2 steps, got {n}", src.name)));
        }
        if !s.horizon.is_finite() || s.horizon <= 0.0 {
            return Err(CliError::Input(format!("{}: system.horizon: must be positive, got {}", src.name, s.horizon)));
        }
        let grid = TimeGrid::new(s.horizon, n)?;
        let a = matrix(src, "system.a", &s.a, s.d, s.d)?;
        let b = matrix(src, "system.b", &s.b, s.d, s.m)?;
        let c = matrix(src, "system.c", &s.c, s.p, s.d)?;
        let (kind, span) = kind(src, "kernel.kind", &self.kernel.kind, &["zero", "exponential", "table"])?;
        let kernel = match kind {
            "exponential" => {
                let mut out = Vec::with_capacity(self.kernel.terms.len());
                for (i, t) in self.kernel.terms.iter().enumerate() {
                    if t.rate.is_nan() || t.rate < 0.0 {
                        return Err(src.err(
                            t.g.span(),
                            &format!("kernel.terms[{i}].rate"),
                            format!("must be nonnegative, got {}", t.rate),
                        ));
                    }
                    out.push(ExpTerm { weight: matrix(src, &format!("kernel.terms[{i}].g"), &t.g, s.d, s.d)?, rate: t.rate });
                }
                KernelSpec::Exponential(out)
            }
            "table" => {
                let values = required(src, span, "kernel.values", &self.kernel.values)?;
                let v = values.get_ref();
                if v.len() != n + 1 {
                    return Err(src.err(values.span(), "kernel.values", format!("expected {} rows, got {}", n + 1, v.len())));
                }
                let mut out = Vec::with_capacity(v.len());
                for (i, row) in v.iter().enumerate() {
                    if row.len() != s.d * s.d {
                        return Err(src.err(
                            values.span(),
                            "kernel.values",
                            format!("row {i} has {} entries, expected {}", row.len(), s.d * s.d),
                        ));
                    }
                    out.push(DMatrix::from_row_slice(s.d, s.d, row));
                }
                KernelSpec::Table(out)
            }
            _ => KernelSpec::zero(),
        };
        let sys = SystemSpec::sampled(a, b, c, &kernel, &grid)?;
        let ini = &self.initial;
        let k = match steps {
            Some(n) if n != s.steps && ini.tau_index > 0 => {
                let tau = ini.tau_index as f64 * s.horizon / s.steps as f64;
                grid.index_of(tau).ok_or_else(|| {
                    src.err(ini.head.span(), "initial.tau_index", format!("start time {tau} is not a node of the {n}-step grid"))
                })?
            }
            _ => ini.tau_index,
        };
        if k >= n {
            return Err(src.err(ini.head.span(), "initial.tau_index", format!("must be below the number of steps {n}, got {k}")));
        }
        let head = DVector::from_column_slice(ini.head.get_ref());
        if head.len() != s.d {
            return Err(src.err(ini.head.span(), "initial.head", format!("expected {} entries, got {}", s.d, head.len())));
        }
        let tail = if k == 0 { Vec::new() } else { signal(src, "initial.tail", &ini.tail, s.d, k + 1, 0, &grid)? };
        let xi = InitialState::new(k, head, tail)?;
        let y = ReferenceSignal::new(signal(src, "reference", &self.reference, s.p, n + 1, 0, &grid)?);
        let control = ControlSignal::new(k, signal(src, "control", &self.control, s.m, n + 1 - k, k, &grid)?);
        Ok(Instance { grid, sys, xi, y, control })
    }
}
