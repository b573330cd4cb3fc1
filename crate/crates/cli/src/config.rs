//! `key = value` configuration files.
//!
//! ```text
//! lambda = 5
//! pressure = 0
//!
//! [domain]
//! kind = interval        # or ball
//! length = 1
//! resolution = 256
//!
//! [profile]
//! kind = constant
//! value = 1
//! ```
//!
//! Keys before the first header belong to the problem itself. Every key is
//! optional; see [`GRAMMAR_HELP`] for the defaults.

use std::cell::Cell;
use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use memsq_core::{DomainSpec, InitialSpec, ProblemSpec, ProfileSpec, SolverControls};

/// Grammar and defaults, shown by `--help`.
pub const GRAMMAR_HELP: &str = "\
CONFIG FILE
  One `key = value` per line; `#` starts a comment. Sections: [domain],
  [profile], [initial], [solver], [command]. Keys before the first section
  describe the problem. Unknown or repeated keys are errors (exit code 3).

  (top)      lambda = 0            pressure = 0
  [domain]   kind = interval       length = 1          resolution = 256
             kind = ball           radius = 1          dim = 2
  [profile]  kind = constant       value = 1
             kind = bump           base, amplitude, center, width
             kind = affine         base, slope
  [initial]  kind = zero
             kind = scaled_steady  factor
             kind = bump           amplitude, center, width
  [solver]   dt_max = 1e-3         dt_safety = 0.02    quench_gap = 1e-3
             steady_tol = 1e-8     global_gap = 0.05   t_max = 10
             snapshot_interval = 0.05                  snapshots_per_decade = 10
  [command]  out = <dir>           lambdas = 15, 30    pressures = 0, 1, 2
             tol = 1e-3            control_point = <x> store = <file>
             refine = true         p_star = <value>

EXIT CODES
  0 success, 2 undecided verdict, 3 configuration error, 4 I/O error,
  1 any other failure.

ENVIRONMENT
  MEMSQ_THREADS  upper bound on worker threads for `sweep` and `critical`.
";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        ConfigError { line: Some(line), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(n) => write!(f, "line {n}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Options of the `[command]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandOptions {
    pub out: Option<PathBuf>,
    pub lambdas: Vec<f64>,
    pub pressures: Vec<f64>,
    pub tol: f64,
    pub control_point: Option<f64>,
    pub store: Option<PathBuf>,
    pub refine: bool,
    pub p_star: Option<f64>,
}

impl Default for CommandOptions {
    fn default() -> Self {
        CommandOptions {
            out: None,
            lambdas: Vec::new(),
            pressures: Vec::new(),
            tol: 1e-3,
            control_point: None,
            store: None,
            refine: true,
            p_star: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub spec: ProblemSpec,
    pub command: CommandOptions,
}

const SECTIONS: [(&str, &[&str]); 6] = [
    ("", &["lambda", "pressure"]),
    ("domain", &["kind", "length", "radius", "dim", "resolution"]),
    ("profile", &["kind", "value", "base", "amplitude", "center", "width", "slope"]),
    ("initial", &["kind", "factor", "amplitude", "center", "width"]),
    (
        "solver",
        &[
            "dt_max",
            "dt_safety",
            "quench_gap",
            "steady_tol",
            "global_gap",
            "t_max",
            "snapshot_interval",
            "snapshots_per_decade",
        ],
    ),
    ("command", &["out", "lambdas", "pressures", "tol", "control_point", "store", "refine", "p_star"]),
];

struct Entry {
    value: String,
    line: usize,
    used: Cell<bool>,
}

#[derive(Default)]
struct Table {
    entries: BTreeMap<(&'static str, &'static str), Entry>,
}

type Res<T> = std::result::Result<T, ConfigError>;

impl Table {
    fn parse(text: &str) -> Res<Table> {
        let mut table = Table::default();
        let mut section: (&'static str, &'static [&'static str]) = SECTIONS[0];
        let mut seen_sections: Vec<&str> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::at(line, format!("malformed section header `{content}`")))?
                    .trim();
                section = *SECTIONS[1..]
                    .iter()
                    .find(|(s, _)| *s == name)
                    .ok_or_else(|| ConfigError::at(line, format!("unknown section [{name}]")))?;
                if seen_sections.contains(&section.0) {
                    return Err(ConfigError::at(line, format!("section [{name}] appears twice")));
                }
                seen_sections.push(section.0);
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| ConfigError::at(line, format!("expected `key = value`, got `{content}`")))?;
            let key = key.trim();
            let value = value.trim().trim_matches('"').to_string();
            let key: &'static str = section.1.iter().copied().find(|k| *k == key).ok_or_else(|| {
                let place = if section.0.is_empty() { "the top level".to_string() } else { format!("[{}]", section.0) };
                ConfigError::at(line, format!("unknown key `{key}` in {place}"))
            })?;
            if value.is_empty() {
                return Err(ConfigError::at(line, format!("`{key}` has no value")));
            }
            if let Some(prev) = table.entries.get(&(section.0, key)) {
                return Err(ConfigError::at(line, format!("duplicate key `{key}` (first set on line {})", prev.line)));
            }
            table.entries.insert((section.0, key), Entry { value, line, used: Cell::new(false) });
        }
        Ok(table)
    }

    fn raw(&self, section: &'static str, key: &'static str) -> Option<&Entry> {
        let e = self.entries.get(&(section, key))?;
        e.used.set(true);
        Some(e)
    }

    fn line_of(&self, section: &'static str, key: &'static str) -> Option<usize> {
        self.entries.get(&(section, key)).map(|e| e.line)
    }

    fn parsed<T: std::str::FromStr>(&self, section: &'static str, key: &'static str, what: &str) -> Res<Option<(T, usize)>> {
        match self.raw(section, key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse::<T>()
                .map(|v| Some((v, e.line)))
                .map_err(|_| ConfigError::at(e.line, format!("`{key}` must be {what}, got `{}`", e.value))),
        }
    }

    fn number(&self, section: &'static str, key: &'static str, default: f64) -> Res<(f64, Option<usize>)> {
        Ok(match self.parsed::<f64>(section, key, "a number")? {
            Some((v, line)) if !v.is_finite() => {
                return Err(ConfigError::at(line, format!("`{key}` must be finite")));
            }
            Some((v, line)) => (v, Some(line)),
            None => (default, None),
        })
    }

    fn optional(&self, section: &'static str, key: &'static str) -> Res<Option<f64>> {
        if self.entries.contains_key(&(section, key)) {
            Ok(Some(self.number(section, key, 0.0)?.0))
        } else {
            Ok(None)
        }
    }

    fn required(&self, section: &'static str, key: &'static str, kind: &str) -> Res<f64> {
        if self.entries.contains_key(&(section, key)) {
            Ok(self.number(section, key, 0.0)?.0)
        } else {
            Err(ConfigError {
                line: self.line_of(section, "kind"),
                message: format!("[{section}] kind = {kind} needs `{key}`"),
            })
        }
    }

    fn kind(&self, section: &'static str, default: &str) -> (String, Option<usize>) {
        match self.raw(section, "kind") {
            Some(e) => (e.value.clone(), Some(e.line)),
            None => (default.to_string(), None),
        }
    }

    fn list(&self, section: &'static str, key: &'static str) -> Res<Vec<f64>> {
        let Some(e) = self.raw(section, key) else { return Ok(Vec::new()) };
        e.value
            .split(',')
            .map(|item| {
                let item = item.trim();
                item.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| ConfigError::at(e.line, format!("`{key}` entry `{item}` is not a number")))
            })
            .collect()
    }

    fn unused(&self) -> Option<ConfigError> {
        self.entries.iter().find(|(_, e)| !e.used.get()).map(|((section, key), e)| {
            ConfigError::at(e.line, format!("key `{key}` does not apply to the chosen [{section}] kind"))
        })
    }
}

fn require(cond: bool, line: Option<usize>, message: impl Into<String>) -> Res<()> {
    if cond {
        Ok(())
    } else {
        Err(ConfigError { line, message: message.into() })
    }
}

fn unknown_kind(section: &str, kind: &str, line: Option<usize>, options: &str) -> ConfigError {
    ConfigError { line, message: format!("unknown [{section}] kind `{kind}` (expected {options})") }
}

fn domain(t: &Table) -> Res<(DomainSpec, usize)> {
    let resolution = match t.parsed::<usize>("domain", "resolution", "a positive integer")? {
        Some((n, line)) => {
            require(n >= memsq_core::domain::MIN_RESOLUTION, Some(line), format!(
                "resolution must be at least {}",
                memsq_core::domain::MIN_RESOLUTION
            ))?;
            n
        }
        None => 256,
    };
    let (kind, kind_line) = t.kind("domain", "interval");
    let domain = match kind.as_str() {
        "interval" => {
            let (length, line) = t.number("domain", "length", 1.0)?;
            require(length > 0.0, line, "length must be positive")?;
            DomainSpec::Interval { length }
        }
        "ball" => {
            let (radius, line) = t.number("domain", "radius", 1.0)?;
            require(radius > 0.0, line, "radius must be positive")?;
            let dim = match t.parsed::<u32>("domain", "dim", "a positive integer")? {
                Some((d, line)) => {
                    require(d >= 1, Some(line), "dim must be at least 1")?;
                    d
                }
                None => 2,
            };
            DomainSpec::RadialBall { radius, dim }
        }
        other => return Err(unknown_kind("domain", other, kind_line, "interval or ball")),
    };
    Ok((domain, resolution))
}

fn profile(t: &Table) -> Res<ProfileSpec> {
    let (kind, kind_line) = t.kind("profile", "constant");
    Ok(match kind.as_str() {
        "constant" => {
            let (value, line) = t.number("profile", "value", 1.0)?;
            require(value > 0.0, line, "profile value must be positive")?;
            ProfileSpec::Constant { value }
        }
        "bump" => {
            let p = ProfileSpec::Bump {
                base: t.required("profile", "base", "bump")?,
                amplitude: t.required("profile", "amplitude", "bump")?,
                center: t.required("profile", "center", "bump")?,
                width: t.required("profile", "width", "bump")?,
            };
            if let ProfileSpec::Bump { width, .. } = p {
                require(width > 0.0, t.line_of("profile", "width"), "bump width must be positive")?;
            }
            p
        }
        "affine" => ProfileSpec::Affine {
            base: t.required("profile", "base", "affine")?,
            slope: t.required("profile", "slope", "affine")?,
        },
        other => return Err(unknown_kind("profile", other, kind_line, "constant, bump or affine")),
    })
}

fn initial(t: &Table) -> Res<InitialSpec> {
    let (kind, kind_line) = t.kind("initial", "zero");
    Ok(match kind.as_str() {
        "zero" => InitialSpec::Zero,
        "scaled_steady" => {
            let factor = t.required("initial", "factor", "scaled_steady")?;
            require((0.0..1.0).contains(&factor), t.line_of("initial", "factor"), "factor must lie in [0, 1)")?;
            InitialSpec::ScaledSteady { factor }
        }
        "bump" => InitialSpec::BumpInit {
            amplitude: t.required("initial", "amplitude", "bump")?,
            center: t.required("initial", "center", "bump")?,
            width: t.required("initial", "width", "bump")?,
        },
        other => return Err(unknown_kind("initial", other, kind_line, "zero, scaled_steady or bump")),
    })
}

fn controls(t: &Table) -> Res<SolverControls> {
    let d = SolverControls::default();
    let positive = |key: &'static str, default: f64| -> Res<f64> {
        let (v, line) = t.number("solver", key, default)?;
        require(v > 0.0, line, format!("`{key}` must be positive"))?;
        Ok(v)
    };
    let c = SolverControls {
        dt_max: positive("dt_max", d.dt_max)?,
        dt_safety: positive("dt_safety", d.dt_safety)?,
        quench_gap: positive("quench_gap", d.quench_gap)?,
        steady_tol: positive("steady_tol", d.steady_tol)?,
        global_gap: positive("global_gap", d.global_gap)?,
        t_max: positive("t_max", d.t_max)?,
        snapshot_interval: positive("snapshot_interval", d.snapshot_interval)?,
        snapshots_per_decade: match t.parsed::<u32>("solver", "snapshots_per_decade", "a positive integer")? {
            Some((v, line)) => {
                require(v >= 1, Some(line), "`snapshots_per_decade` must be at least 1")?;
                v
            }
            None => d.snapshots_per_decade,
        },
    };
    c.validate().map_err(|e| ConfigError { line: t.line_of("solver", "global_gap"), message: e.to_string() })?;
    Ok(c)
}

fn command(t: &Table) -> Res<CommandOptions> {
    let d = CommandOptions::default();
    let (tol, tol_line) = t.number("command", "tol", d.tol)?;
    require(tol > 0.0 && tol < 1.0, tol_line, "`tol` must lie in (0, 1)")?;
    let pressures = t.list("command", "pressures")?;
    require(
        pressures.iter().all(|p| *p >= 0.0),
        t.line_of("command", "pressures"),
        "pressures must be >= 0",
    )?;
    let lambdas = t.list("command", "lambdas")?;
    require(lambdas.iter().all(|l| *l >= 0.0), t.line_of("command", "lambdas"), "lambdas must be >= 0")?;
    Ok(CommandOptions {
        out: t.raw("command", "out").map(|e| PathBuf::from(&e.value)),
        lambdas,
        pressures,
        tol,
        control_point: t.optional("command", "control_point")?,
        store: t.raw("command", "store").map(|e| PathBuf::from(&e.value)),
        refine: t.parsed::<bool>("command", "refine", "true or false")?.map_or(d.refine, |v| v.0),
        p_star: t.optional("command", "p_star")?,
    })
}

/// Parses and validates a configuration file.
pub fn parse_config(text: &str) -> Result<Config, ConfigError> {
    let t = Table::parse(text)?;
    let (lambda, lambda_line) = t.number("", "lambda", 0.0)?;
    require(lambda >= 0.0, lambda_line, "lambda must be >= 0")?;
    let (pressure, pressure_line) = t.number("", "pressure", 0.0)?;
    require(pressure >= 0.0, pressure_line, "pressure must be >= 0")?;
    let (domain, resolution) = domain(&t)?;
    let spec = ProblemSpec {
        domain,
        resolution,
        profile: profile(&t)?,
        lambda,
        pressure,
        initial: initial(&t)?,
        controls: controls(&t)?,
    };
    let command = command(&t)?;
    if let Some(err) = t.unused() {
        return Err(err);
    }
    spec.validate().map_err(|e| ConfigError { line: None, message: e.to_string() })?;
    Ok(Config { spec, command })
}
