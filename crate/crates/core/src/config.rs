//! Run configuration in TOML.
//!
//! Grammar: TOML with the sections below; unknown sections or keys are errors.
//!
//! ```toml
//! [model]                 # required
//! kind = "linear_meanfield" # or "porous_medium"
//! a_self = 0.0            # linear_meanfield only; all default to 0
//! b_delay = 0.0
//! c_mean = 0.0
//! e_mean_delay = 0.0
//! sigma = 1.0             # isotropic diffusion, default 1
//! dim = 1                 # 1..=6, default 1
//! p = 2.0                 # porous_medium only, default 2
//! domain_length = 3.14159 # porous_medium only, default π
//!
//! [grid]                  # required
//! m = 64                  # delay steps, r0 = m·dt
//! dt = 0.015625
//! T = 3.0                 # integer multiple of dt
//!
//! [solver]
//! particles = 1000
//! max_iters = 12
//! tol = 1e-6
//! seed = 0
//! macro_stride = 1
//!
//! [initial]               # ψ(θ) = value + slope·θ in every coordinate
//! value = 1.0
//! slope = 0.0
//! shift = 0.1             # offset of the second initial segment in coupled runs
//!
//! [galerkin]
//! n_modes = 16
//! n_x = 0                 # 0 picks 8·n_modes
//! modes_sweep = []
//! init_mode = 1
//! init_amplitude = 1.0
//! noise_amplitude = 1.0
//!
//! [output]
//! directory = "out"
//! snapshots = false
//! ```

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use toml::{Spanned, Table, Value};

use crate::error::{Error, Result};

/// Largest dimension for which the linear model constants are valid.
pub const MAX_LINEAR_DIM: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// 1-based; 0 when the error has no location.
    pub line: usize,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "line {}: {}: {}", self.line, self.key, self.message)
        } else {
            write!(f, "{}: {}", self.key, self.message)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelConfig {
    LinearMeanField { a_self: f64, b_delay: f64, c_mean: f64, e_mean_delay: f64, sigma: f64, dim: usize },
    PorousMedium { p: f64, domain_length: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub m: usize,
    pub dt: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub particles: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
    pub macro_stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialConfig {
    pub value: f64,
    pub slope: f64,
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinConfig {
    pub n_modes: usize,
    pub n_x: usize,
    pub modes_sweep: Vec<usize>,
    pub init_mode: usize,
    pub init_amplitude: f64,
    pub noise_amplitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub directory: String,
    pub snapshots: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub solver: SolverConfig,
    pub initial: InitialConfig,
    pub galerkin: GalerkinConfig,
    pub output: OutputConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { particles: 1000, max_iters: 12, tol: 1e-6, seed: 0, macro_stride: 1 }
    }
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self { value: 1.0, slope: 0.0, shift: 0.1 }
    }
}

impl Default for GalerkinConfig {
    fn default() -> Self {
        Self { n_modes: 16, n_x: 0, modes_sweep: vec![], init_mode: 1, init_amplitude: 1.0, noise_amplitude: 1.0 }
    }
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: "out".into(), snapshots: false }
    }
}

type RawSection = BTreeMap<String, Spanned<Value>>;
type RawDoc = BTreeMap<String, Spanned<RawSection>>;

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

struct Reader<'a> {
    text: &'a str,
    errors: Vec<ConfigError>,
}

/// One section being consumed; leftover keys are reported as unknown.
struct Section {
    name: &'static str,
    line: usize,
    entries: RawSection,
}

impl<'a> Reader<'a> {
    fn error(&mut self, line: usize, key: impl Into<String>, message: impl Into<String>) {
        self.errors.push(ConfigError { line, key: key.into(), message: message.into() });
    }

    fn take<T>(
        &mut self,
        sec: &mut Section,
        key: &str,
        default: Option<T>,
        convert: impl Fn(&Value) -> std::result::Result<T, String>,
    ) -> Option<T> {
        let full = format!("{}.{}", sec.name, key);
        match sec.entries.remove(key) {
            Some(v) => {
                let line = line_of(self.text, v.span().start);
                match convert(v.get_ref()) {
                    Ok(x) => Some(x),
                    Err(msg) => {
                        self.error(line, full, msg);
                        None
                    }
                }
            }
            None => {
                if default.is_none() {
                    self.error(sec.line, full, "missing required key");
                }
                default
            }
        }
    }

    fn finish(&mut self, sec: Section) {
        for (k, v) in sec.entries {
            let line = line_of(self.text, v.span().start);
            self.error(line, format!("{}.{}", sec.name, k), "unknown key");
        }
    }
}

fn as_f64(v: &Value) -> std::result::Result<f64, String> {
    match v {
        Value::Float(x) if x.is_finite() => Ok(*x),
        Value::Float(_) => Err("must be finite".into()),
        Value::Integer(i) => Ok(*i as f64),
        other => Err(format!("expected a number, found {}", other.type_str())),
    }
}

fn as_u64(v: &Value) -> std::result::Result<u64, String> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        Value::Integer(_) => Err("must be nonnegative".into()),
        other => Err(format!("expected an integer, found {}", other.type_str())),
    }
}

fn as_usize(v: &Value) -> std::result::Result<usize, String> {
    as_u64(v).map(|x| x as usize)
}

fn positive(v: &Value) -> std::result::Result<f64, String> {
    let x = as_f64(v)?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err(format!("must be > 0, got {x}"))
    }
}

fn at_least_one(v: &Value) -> std::result::Result<usize, String> {
    let x = as_usize(v)?;
    if x >= 1 {
        Ok(x)
    } else {
        Err("must be >= 1".into())
    }
}

/// Parses and validates a configuration, reporting every error found.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut doc: RawDoc = toml::from_str(text).map_err(|e| {
        let line = e.span().map_or(0, |s| line_of(text, s.start));
        Error::Config(vec![ConfigError { line, key: "<syntax>".into(), message: e.message().to_string() }])
    })?;
    let mut r = Reader { text, errors: vec![] };
    let mut section = |r: &mut Reader<'_>, name: &'static str, required: bool| -> Section {
        match doc.remove(name) {
            Some(s) => {
                let line = line_of(text, s.span().start);
                Section { name, line, entries: s.into_inner() }
            }
            None => {
                if required {
                    r.error(0, format!("[{name}]"), "missing required section");
                }
                Section { name, line: 0, entries: RawSection::new() }
            }
        }
    };

    let mut s = section(&mut r, "model", true);
    let absent = s.line == 0;
    let kind = r.take(&mut s, "kind", absent.then(String::new), |v| {
        v.as_str().map(str::to_string).ok_or_else(|| format!("expected a string, found {}", v.type_str()))
    });
    let model = match kind.as_deref() {
        Some("linear_meanfield") => {
            let a_self = r.take(&mut s, "a_self", Some(0.0), as_f64);
            let b_delay = r.take(&mut s, "b_delay", Some(0.0), as_f64);
            let c_mean = r.take(&mut s, "c_mean", Some(0.0), as_f64);
            let e_mean_delay = r.take(&mut s, "e_mean_delay", Some(0.0), as_f64);
            let sigma = r.take(&mut s, "sigma", Some(1.0), as_f64);
            let dim = r.take(&mut s, "dim", Some(1), |v| {
                let d = as_usize(v)?;
                if (1..=MAX_LINEAR_DIM).contains(&d) {
                    Ok(d)
                } else {
                    Err(format!("must be in 1..={MAX_LINEAR_DIM}, got {d}"))
                }
            });
            match (a_self, b_delay, c_mean, e_mean_delay, sigma, dim) {
                (Some(a_self), Some(b_delay), Some(c_mean), Some(e_mean_delay), Some(sigma), Some(dim)) => {
                    Some(ModelConfig::LinearMeanField { a_self, b_delay, c_mean, e_mean_delay, sigma, dim })
                }
                _ => None,
            }
        }
        Some("porous_medium") => {
            let p = r.take(&mut s, "p", Some(2.0), |v| {
                let p = as_f64(v)?;
                if p >= 2.0 {
                    Ok(p)
                } else {
                    Err(format!("must be >= 2, got {p}"))
                }
            });
            let domain_length = r.take(&mut s, "domain_length", Some(PI), positive);
            match (p, domain_length) {
                (Some(p), Some(domain_length)) => Some(ModelConfig::PorousMedium { p, domain_length }),
                _ => None,
            }
        }
        Some("") | None => None,
        Some(other) => {
            let line = s.line;
            r.error(line, "model.kind", format!("unknown model kind `{other}`"));
            s.entries.clear();
            None
        }
    };
    r.finish(s);

    let mut s = section(&mut r, "grid", true);
    let absent = s.line == 0;
    let m = r.take(&mut s, "m", absent.then_some(0), at_least_one).filter(|&m| m > 0);
    let dt_line = s.entries.get("dt").map(|v| line_of(text, v.span().start)).unwrap_or(s.line);
    let dt = r.take(&mut s, "dt", absent.then_some(0.0), positive).filter(|&x| x > 0.0);
    let horizon = r.take(&mut s, "T", absent.then_some(0.0), positive).filter(|&x| x > 0.0);
    let grid = match (m, dt, horizon) {
        (Some(m), Some(dt), Some(horizon)) => {
            let steps = horizon / dt;
            if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
                r.error(dt_line, "grid.T", format!("T not multiple of dt (T = {horizon}, dt = {dt})"));
                None
            } else {
                Some(GridConfig { m, dt, horizon })
            }
        }
        _ => None,
    };
    r.finish(s);

    let mut s = section(&mut r, "solver", false);
    let d = SolverConfig::default();
    let particles = r.take(&mut s, "particles", Some(d.particles), at_least_one);
    let max_iters = r.take(&mut s, "max_iters", Some(d.max_iters), at_least_one);
    let tol = r.take(&mut s, "tol", Some(d.tol), positive);
    let seed = r.take(&mut s, "seed", Some(d.seed), as_u64);
    let macro_stride = r.take(&mut s, "macro_stride", Some(d.macro_stride), at_least_one);
    r.finish(s);
    let solver = match (particles, max_iters, tol, seed, macro_stride) {
        (Some(particles), Some(max_iters), Some(tol), Some(seed), Some(macro_stride)) => {
            Some(SolverConfig { particles, max_iters, tol, seed, macro_stride })
        }
        _ => None,
    };

    let mut s = section(&mut r, "initial", false);
    let d = InitialConfig::default();
    let value = r.take(&mut s, "value", Some(d.value), as_f64);
    let slope = r.take(&mut s, "slope", Some(d.slope), as_f64);
    let shift = r.take(&mut s, "shift", Some(d.shift), as_f64);
    r.finish(s);
    let initial = match (value, slope, shift) {
        (Some(value), Some(slope), Some(shift)) => Some(InitialConfig { value, slope, shift }),
        _ => None,
    };

    let mut s = section(&mut r, "galerkin", false);
    let d = GalerkinConfig::default();
    let n_modes = r.take(&mut s, "n_modes", Some(d.n_modes), at_least_one);
    let n_x = r.take(&mut s, "n_x", Some(d.n_x), as_usize);
    let modes_sweep = r.take(&mut s, "modes_sweep", Some(d.modes_sweep.clone()), |v| match v {
        Value::Array(items) => items.iter().map(at_least_one).collect(),
        other => Err(format!("expected an array of integers, found {}", other.type_str())),
    });
    let init_mode = r.take(&mut s, "init_mode", Some(d.init_mode), at_least_one);
    let init_amplitude = r.take(&mut s, "init_amplitude", Some(d.init_amplitude), as_f64);
    let noise_amplitude = r.take(&mut s, "noise_amplitude", Some(d.noise_amplitude), |v| {
        let x = as_f64(v)?;
        if x >= 0.0 {
            Ok(x)
        } else {
            Err(format!("must be >= 0, got {x}"))
        }
    });
    let line = s.line;
    r.finish(s);
    let galerkin = match (n_modes, n_x, modes_sweep, init_mode, init_amplitude, noise_amplitude) {
        (Some(n_modes), Some(n_x), Some(modes_sweep), Some(init_mode), Some(init_amplitude), Some(noise_amplitude)) => {
            if n_x != 0 && n_x < n_modes {
                r.error(line, "galerkin.n_x", format!("must be 0 or >= n_modes ({n_modes})"));
            }
            if init_mode > n_modes {
                r.error(line, "galerkin.init_mode", format!("must be <= n_modes ({n_modes})"));
            }
            Some(GalerkinConfig { n_modes, n_x, modes_sweep, init_mode, init_amplitude, noise_amplitude })
        }
        _ => None,
    };

    let mut s = section(&mut r, "output", false);
    let d = OutputConfig::default();
    let directory = r.take(&mut s, "directory", Some(d.directory), |v| {
        v.as_str().map(str::to_string).ok_or_else(|| format!("expected a string, found {}", v.type_str()))
    });
    let snapshots = r.take(&mut s, "snapshots", Some(d.snapshots), |v| {
        v.as_bool().ok_or_else(|| format!("expected a boolean, found {}", v.type_str()))
    });
    r.finish(s);

    for (name, sec) in doc {
        let line = line_of(text, sec.span().start);
        r.error(line, format!("[{name}]"), "unknown section");
    }

    if !r.errors.is_empty() {
        r.errors.sort_by_key(|e| e.line);
        return Err(Error::Config(r.errors));
    }
    Ok(RunConfig {
        model: model.expect("checked"),
        grid: grid.expect("checked"),
        solver: solver.expect("checked"),
        initial: initial.expect("checked"),
        galerkin: galerkin.expect("checked"),
        output: OutputConfig { directory: directory.expect("checked"), snapshots: snapshots.expect("checked") },
    })
}

impl RunConfig {
    /// Canonical TOML text; `parse_config(&c.serialize()) == c`.
    pub fn serialize(&self) -> String {
        let mut doc = Table::new();
        let mut model = Table::new();
        match &self.model {
            ModelConfig::LinearMeanField { a_self, b_delay, c_mean, e_mean_delay, sigma, dim } => {
                model.insert("kind".into(), "linear_meanfield".into());
                model.insert("a_self".into(), (*a_self).into());
                model.insert("b_delay".into(), (*b_delay).into());
                model.insert("c_mean".into(), (*c_mean).into());
                model.insert("e_mean_delay".into(), (*e_mean_delay).into());
                model.insert("sigma".into(), (*sigma).into());
                model.insert("dim".into(), (*dim as i64).into());
            }
            ModelConfig::PorousMedium { p, domain_length } => {
                model.insert("kind".into(), "porous_medium".into());
                model.insert("p".into(), (*p).into());
                model.insert("domain_length".into(), (*domain_length).into());
            }
        }
        doc.insert("model".into(), model.into());

        let mut grid = Table::new();
        grid.insert("m".into(), (self.grid.m as i64).into());
        grid.insert("dt".into(), self.grid.dt.into());
        grid.insert("T".into(), self.grid.horizon.into());
        doc.insert("grid".into(), grid.into());

        let s = &self.solver;
        let mut solver = Table::new();
        solver.insert("particles".into(), (s.particles as i64).into());
        solver.insert("max_iters".into(), (s.max_iters as i64).into());
        solver.insert("tol".into(), s.tol.into());
        solver.insert("seed".into(), (s.seed as i64).into());
        solver.insert("macro_stride".into(), (s.macro_stride as i64).into());
        doc.insert("solver".into(), solver.into());

        let mut initial = Table::new();
        initial.insert("value".into(), self.initial.value.into());
        initial.insert("slope".into(), self.initial.slope.into());
        initial.insert("shift".into(), self.initial.shift.into());
        doc.insert("initial".into(), initial.into());

        let g = &self.galerkin;
        let mut gal = Table::new();
        gal.insert("n_modes".into(), (g.n_modes as i64).into());
        gal.insert("n_x".into(), (g.n_x as i64).into());
        gal.insert(
            "modes_sweep".into(),
            Value::Array(g.modes_sweep.iter().map(|&n| Value::Integer(n as i64)).collect()),
        );
        gal.insert("init_mode".into(), (g.init_mode as i64).into());
        gal.insert("init_amplitude".into(), g.init_amplitude.into());
        gal.insert("noise_amplitude".into(), g.noise_amplitude.into());
        doc.insert("galerkin".into(), gal.into());

        let mut out = Table::new();
        out.insert("directory".into(), self.output.directory.clone().into());
        out.insert("snapshots".into(), self.output.snapshots.into());
        doc.insert("output".into(), out.into());

        toml::to_string(&doc).expect("plain tables serialize")
    }

    pub fn r0(&self) -> f64 {
        self.grid.m as f64 * self.grid.dt
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = "[model]\nkind = \"linear_meanfield\"\n\n[grid]\nm = 4\ndt = 0.25\nT = 2.0\n";

    fn errors(text: &str) -> Vec<ConfigError> {
        match parse_config(text) {
            Err(Error::Config(e)) => e,
            other => panic!("expected config errors, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(
            c.model,
            ModelConfig::LinearMeanField { a_self: 0.0, b_delay: 0.0, c_mean: 0.0, e_mean_delay: 0.0, sigma: 1.0, dim: 1 }
        );
        assert_eq!(c.grid, GridConfig { m: 4, dt: 0.25, horizon: 2.0 });
        assert_eq!(c.solver, SolverConfig::default());
        assert_eq!(c.initial, InitialConfig::default());
        assert_eq!(c.galerkin, GalerkinConfig::default());
        assert_eq!(c.output, OutputConfig::default());
        assert_eq!(c.r0(), 1.0);
    }

    #[test]
    fn zero_dt_names_the_key() {
        let e = errors("[model]\nkind = \"linear_meanfield\"\n[grid]\nm = 4\ndt = 0\nT = 1.0\n");
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].key, "grid.dt");
        assert_eq!(e[0].line, 5);
    }

    #[test]
    fn horizon_must_be_a_multiple_of_dt() {
        let e = errors("[model]\nkind = \"linear_meanfield\"\n[grid]\nm = 4\ndt = 0.3\nT = 1.0\n");
        assert_eq!(e.len(), 1);
        assert!(e[0].message.contains("T not multiple of dt"), "{}", e[0]);
    }

    #[test]
    fn all_errors_are_collected() {
        let text = "[model]\nkind = \"linear_meanfield\"\na_self = \"x\"\nbogus = 1\n[grid]\nm = 0\ndt = 0.1\n[extra]\nk = 1\n";
        let e = errors(text);
        let keys: Vec<&str> = e.iter().map(|e| e.key.as_str()).collect();
        for k in ["model.a_self", "model.bogus", "grid.m", "grid.T", "[extra]"] {
            assert!(keys.contains(&k), "{keys:?} missing {k}");
        }
        let a = e.iter().find(|e| e.key == "model.a_self").unwrap();
        assert_eq!(a.line, 3);
        assert!(e.iter().find(|e| e.key == "model.bogus").unwrap().message.contains("unknown"));
    }

    #[test]
    fn missing_sections_and_kinds() {
        let e = errors("");
        assert!(e.iter().any(|e| e.key == "[model]") && e.iter().any(|e| e.key == "[grid]"));
        let e = errors("[model]\nkind = \"heat\"\n[grid]\nm = 1\ndt = 1.0\nT = 1.0\n");
        assert_eq!(e[0].key, "model.kind");
        let e = errors("[model]\n[grid]\nm = 1\ndt = 1.0\nT = 1.0\n");
        assert_eq!(e[0].key, "model.kind");
    }

    #[test]
    fn syntax_errors_have_lines() {
        let e = errors("[model]\nkind = \n");
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].line, 2);
    }

    #[test]
    fn porous_section_round_trip() {
        let text = "[model]\nkind = \"porous_medium\"\np = 3.0\n[grid]\nm = 8\ndt = 0.125\nT = 1\n[galerkin]\nn_modes = 4\nmodes_sweep = [2, 4]\n";
        let c = parse_config(text).unwrap();
        assert_eq!(c.model, ModelConfig::PorousMedium { p: 3.0, domain_length: PI });
        assert_eq!(c.galerkin.modes_sweep, vec![2, 4]);
        assert_eq!(parse_config(&c.serialize()).unwrap(), c);
    }

    proptest! {
        #[test]
        fn serialize_round_trip(
            a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0, s in 0.0f64..3.0,
            dim in 1usize..=6, m in 1usize..100, k in 0u32..10, steps in 1usize..200,
            seed in any::<u32>(), snaps in any::<bool>(), dir in "[a-z/]{1,12}",
        ) {
            let dt = 2f64.powi(-(k as i32));
            let cfg = RunConfig {
                model: ModelConfig::LinearMeanField { a_self: a, b_delay: b, c_mean: c, e_mean_delay: -c, sigma: s, dim },
                grid: GridConfig { m, dt, horizon: steps as f64 * dt },
                solver: SolverConfig { seed: seed as u64, ..SolverConfig::default() },
                initial: InitialConfig { value: a, slope: b, shift: c },
                galerkin: GalerkinConfig { modes_sweep: vec![8, 32], ..GalerkinConfig::default() },
                output: OutputConfig { directory: dir, snapshots: snaps },
            };
            prop_assert_eq!(parse_config(&cfg.serialize()).unwrap(), cfg);
        }
    }
}
