//! Run configuration in TOML.
//!
//! Every problem in a file is reported at once, each with its line. Unknown
//! keys are rejected with the closest known key as a suggestion.
//!
//! | key | default |
//! |---|---|
//! | `kind` | `"simulate"` (`simulate`, `ensemble`, `analyze`, `theory`, `reference`) |
//! | `seed` | `0` |
//! | `output` | `"out"` |
//! | `snapshot_every` | `0` (steps between snapshots; `0` keeps initial and final only) |
//! | `members` | `1` |
//! | `workers` | unset (the CLI then uses every core) |
//! | `grid.lx`, `grid.ly` | `1.0` |
//! | `grid.nx`, `grid.ny` | `64` |
//! | `solver.epsilon` | `0.04` |
//! | `solver.sigma` | `2.0` |
//! | `solver.dt` | `0.5 * epsilon^2` |
//! | `solver.final_time` | `0.01` |
//! | `solver.stabilization` | `2.0` |
//! | `solver.nonlinearity` | `"double_well"` (or `"linear"`) |
//! | `solver.track_noise_path` | `false` |
//! | `noise.enabled` | `false` |
//! | `noise.amplitude`, `noise.decay` | `1.0`, `1.0` |
//! | `noise.truncation` | unset |
//! | `noise.modes` | unset; `[[kx, ky, alpha], ...]` replaces the power law |
//! | `initial.kind` | `"profile"` with a geometry, else `"constant"` |
//! | `initial.value` | `0.0` |
//! | `initial.mean`, `initial.amplitude`, `initial.seed` | `0.0`, `0.05`, `seed` |
//! | `geometry.kind` | required in a `[geometry]` section |
//! | `geometry.center`, `geometry.radius` | domain centre, `0.25` |
//! | `geometry.position` | `lx / 2` |
//! | `geometry.first_center`, `geometry.first_radius`, `geometry.second_center`, `geometry.second_radius` | required for `two_circles` |
//! | `geometry.modes` | `[]`; `[[k, amplitude], ...]` |
//! | `analysis.p` | `3.0` |
//! | `analysis.gamma` | `gamma_min(p, 2)` |
//! | `analysis.kappa` | `1e-3` |
//! | `analysis.cadence` | `10` |
//! | `analysis.mean_correction` | `false` |
//! | `analysis.epsilons`, `analysis.sigmas` | `[solver.epsilon]`, `[solver.sigma]` |
//! | `analysis.input` | `output/snapshots` |
//! | `analysis.k_max` | `8` |
//! | `theory.p`, `theory.d` | `3.0`, `2` |
//! | `reference.radius` | geometry radius, else `0.25` |
//! | `reference.k_max` | `8` |
//! | `reference.projection` | `1.0` |
//! | `reference.ou_steps` | `100000` |
//! | `reference.ou_dt` | `0.02 / |s_2|` |
//! | `reference.monopole_dt` | `1e-5` |
//! | `reference.monopole_final_time` | `0.01` |
//! | `reference.collapse_radius` | grid spacing |

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::de::{DeTable, DeValue};
use toml::Spanned;

use crate::dynamics::{InitialCondition, Nonlinearity, SolverParams, DEFAULT_STABILIZATION, STABLE_DT_FACTOR};
use crate::geometry::{Disk, Geometry};
use crate::noise::{ModeCoefficient, NoiseSpec};
use crate::spectral::DomainGrid;
use crate::theory::{admissible_exponents, DEFAULT_KAPPA, DEFAULT_P};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Simulate,
    Ensemble,
    Analyze,
    Theory,
    Reference,
}

impl ExperimentKind {
    pub const ALL: [(&'static str, ExperimentKind); 5] = [
        ("simulate", ExperimentKind::Simulate),
        ("ensemble", ExperimentKind::Ensemble),
        ("analyze", ExperimentKind::Analyze),
        ("theory", ExperimentKind::Theory),
        ("reference", ExperimentKind::Reference),
    ];

    pub fn name(self) -> &'static str {
        Self::ALL.iter().find(|(_, k)| *k == self).expect("listed").0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub p: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub cadence: u64,
    pub mean_correction: bool,
    pub epsilons: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub input: Option<PathBuf>,
    pub k_max: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryConfig {
    pub p: f64,
    pub d: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceConfig {
    pub radius: f64,
    pub k_max: usize,
    pub projection: f64,
    pub ou_steps: usize,
    pub ou_dt: Option<f64>,
    pub monopole_dt: f64,
    pub monopole_final_time: f64,
    pub collapse_radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub output: PathBuf,
    pub snapshot_every: u64,
    pub members: usize,
    pub workers: Option<usize>,
    pub grid: GridConfig,
    pub solver: SolverParams,
    pub geometry: Option<Geometry>,
    pub analysis: AnalysisConfig,
    pub theory: TheoryConfig,
    pub reference: ReferenceConfig,
}

impl RunConfig {
    pub fn domain(&self) -> std::sync::Arc<DomainGrid> {
        DomainGrid::new(self.grid.lx, self.grid.ly, self.grid.nx, self.grid.ny).expect("validated grid")
    }

    /// Replace the master seed, which also seeds the noise and a random
    /// initial condition that did not set its own seed.
    pub fn reseed(&mut self, seed: u64) {
        if let InitialCondition::Random { seed: s, .. } = &mut self.solver.initial {
            if *s == self.seed {
                *s = seed;
            }
        }
        self.seed = seed;
        self.solver.noise.seed = seed;
    }
}

/// One problem in a configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub struct ConfigError {
    pub issues: Vec<ConfigIssue>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lines: Vec<String> = self.issues.iter().map(ToString::to_string).collect();
        write!(f, "{}", lines.join("\n"))
    }
}

const TOP_KEYS: &[&str] = &["kind", "seed", "output", "snapshot_every", "members", "workers"];
const SECTIONS: &[(&str, &[&str])] = &[
    ("grid", &["lx", "ly", "nx", "ny"]),
    (
        "solver",
        &["epsilon", "sigma", "dt", "final_time", "stabilization", "nonlinearity", "track_noise_path"],
    ),
    ("noise", &["enabled", "amplitude", "decay", "truncation", "modes"]),
    ("initial", &["kind", "value", "mean", "amplitude", "seed"]),
    (
        "geometry",
        &[
            "kind",
            "center",
            "radius",
            "position",
            "first_center",
            "first_radius",
            "second_center",
            "second_radius",
            "modes",
        ],
    ),
    (
        "analysis",
        &["p", "gamma", "kappa", "cadence", "mean_correction", "epsilons", "sigmas", "input", "k_max"],
    ),
    ("theory", &["p", "d"]),
    (
        "reference",
        &[
            "radius",
            "k_max",
            "projection",
            "ou_steps",
            "ou_dt",
            "monopole_dt",
            "monopole_final_time",
            "collapse_radius",
        ],
    ),
];

type Value<'i> = Spanned<DeValue<'i>>;

struct Ctx<'t> {
    text: &'t str,
    issues: Vec<ConfigIssue>,
}

impl Ctx<'_> {
    fn line(&self, offset: usize) -> usize {
        self.text[..offset.min(self.text.len())].matches('\n').count() + 1
    }

    fn issue(&mut self, offset: usize, message: String) {
        let line = self.line(offset);
        self.issues.push(ConfigIssue { line, message });
    }
}

/// Keys of one table, looked up by name.
struct Scope<'a, 'i> {
    path: &'static str,
    table: Option<&'a DeTable<'i>>,
    offset: usize,
}

impl<'a, 'i> Scope<'a, 'i> {
    fn get(&self, key: &str) -> Option<&'a Value<'i>> {
        self.table?.iter().find(|(k, _)| k.get_ref().as_ref() == key).map(|(_, v)| v)
    }

    fn name(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.path)
        }
    }

    /// Offset of the key's value, or of the section when absent.
    fn at(&self, key: &str) -> usize {
        self.get(key).map_or(self.offset, |v| v.span().start)
    }
}

fn number(v: &DeValue) -> Option<f64> {
    match v {
        DeValue::Float(f) => f.as_str().replace('_', "").parse().ok(),
        DeValue::Integer(i) => i64::from_str_radix(&i.as_str().replace('_', ""), i.radix()).ok().map(|i| i as f64),
        _ => None,
    }
}

fn integer(v: &DeValue) -> Option<i64> {
    match v {
        DeValue::Integer(i) => i64::from_str_radix(&i.as_str().replace('_', ""), i.radix()).ok(),
        _ => None,
    }
}

impl Ctx<'_> {
    fn mismatch(&mut self, scope: &Scope, key: &str, v: &Value, expected: &str) {
        self.issue(
            v.span().start,
            format!("{}: expected {expected}, found {}", scope.name(key), v.get_ref().type_str()),
        );
    }

    fn opt_f64(&mut self, s: &Scope, key: &str) -> Option<f64> {
        let v = s.get(key)?;
        let n = number(v.get_ref());
        if n.is_none() {
            self.mismatch(s, key, v, "a number");
        }
        n
    }

    fn f64(&mut self, s: &Scope, key: &str, default: f64) -> f64 {
        self.opt_f64(s, key).unwrap_or(default)
    }

    fn opt_u64(&mut self, s: &Scope, key: &str) -> Option<u64> {
        let v = s.get(key)?;
        match integer(v.get_ref()) {
            Some(i) if i >= 0 => Some(i as u64),
            Some(i) => {
                self.issue(v.span().start, format!("{}: must be non-negative, got {i}", s.name(key)));
                None
            }
            None => {
                self.mismatch(s, key, v, "an integer");
                None
            }
        }
    }

    fn u64(&mut self, s: &Scope, key: &str, default: u64) -> u64 {
        self.opt_u64(s, key).unwrap_or(default)
    }

    fn bool(&mut self, s: &Scope, key: &str, default: bool) -> bool {
        let Some(v) = s.get(key) else { return default };
        v.get_ref().as_bool().unwrap_or_else(|| {
            self.mismatch(s, key, v, "a boolean");
            default
        })
    }

    fn opt_str(&mut self, s: &Scope, key: &str) -> Option<String> {
        let v = s.get(key)?;
        let r = v.get_ref().as_str().map(str::to_string);
        if r.is_none() {
            self.mismatch(s, key, v, "a string");
        }
        r
    }

    /// A string from a fixed set of choices.
    fn choice<T: Copy>(&mut self, s: &Scope, key: &str, choices: &[(&str, T)], default: T) -> T {
        let Some(name) = self.opt_str(s, key) else { return default };
        if let Some((_, t)) = choices.iter().find(|(n, _)| *n == name) {
            return *t;
        }
        let names: Vec<&str> = choices.iter().map(|c| c.0).collect();
        self.issue(
            s.at(key),
            format!("{}: unknown value \"{name}\", expected one of {}", s.name(key), names.join(", ")),
        );
        default
    }

    fn numbers(&mut self, s: &Scope, key: &str) -> Option<Vec<f64>> {
        let v = s.get(key)?;
        let Some(items) = v.get_ref().as_array() else {
            self.mismatch(s, key, v, "an array of numbers");
            return None;
        };
        let mut out = Vec::new();
        for item in items {
            match number(item.get_ref()) {
                Some(x) => out.push(x),
                None => {
                    self.mismatch(s, key, item, "a number");
                    return None;
                }
            }
        }
        Some(out)
    }

    fn point(&mut self, s: &Scope, key: &str, default: [f64; 2]) -> [f64; 2] {
        match self.numbers(s, key) {
            None => default,
            Some(v) if v.len() == 2 => [v[0], v[1]],
            Some(v) => {
                self.issue(s.at(key), format!("{}: expected two coordinates, got {}", s.name(key), v.len()));
                default
            }
        }
    }

    /// Rows of numbers, each of length `width`.
    fn rows(&mut self, s: &Scope, key: &str, width: usize) -> Option<Vec<Vec<f64>>> {
        let v = s.get(key)?;
        let Some(items) = v.get_ref().as_array() else {
            self.mismatch(s, key, v, "an array of arrays");
            return None;
        };
        let mut out = Vec::new();
        for item in items {
            let row: Option<Vec<f64>> = item
                .get_ref()
                .as_array()
                .and_then(|a| a.iter().map(|x| number(x.get_ref())).collect());
            match row {
                Some(r) if r.len() == width => out.push(r),
                _ => {
                    self.issue(
                        item.span().start,
                        format!("{}: each entry must be an array of {width} numbers", s.name(key)),
                    );
                    return None;
                }
            }
        }
        Some(out)
    }

    fn require(&mut self, s: &Scope, key: &str, ok: bool, what: &str) {
        if !ok {
            self.issue(s.at(key), format!("{}: {what}", s.name(key)));
        }
    }

    fn unknown_keys(&mut self, s: &Scope, known: &[&str]) {
        let Some(table) = s.table else { return };
        for (k, _) in table.iter() {
            let key = k.get_ref().as_ref();
            if !known.contains(&key) {
                let message = match suggestion(s.path, key) {
                    Some(best) => format!("unknown key \"{}\"; did you mean \"{best}\"?", s.name(key)),
                    None => format!("unknown key \"{}\"", s.name(key)),
                };
                self.issue(k.span().start, message);
            }
        }
    }
}

/// Closest known key, preferring the same section.
fn suggestion(section: &str, key: &str) -> Option<String> {
    let local: Vec<String> = if section.is_empty() {
        TOP_KEYS
            .iter()
            .map(|k| k.to_string())
            .chain(SECTIONS.iter().map(|(n, _)| n.to_string()))
            .collect()
    } else {
        SECTIONS
            .iter()
            .find(|(n, _)| *n == section)
            .map(|(_, keys)| keys.iter().map(|k| k.to_string()).collect())
            .unwrap_or_default()
    };
    let all = SECTIONS
        .iter()
        .flat_map(|(n, keys)| keys.iter().map(move |k| (k.to_string(), format!("{n}.{k}"))));
    let best = |cands: &mut dyn Iterator<Item = (String, String)>| {
        cands
            .map(|(bare, full)| (strsim::levenshtein(key, &bare), full))
            .filter(|(d, _)| *d <= 2.max(key.len() / 3))
            .min_by_key(|(d, _)| *d)
            .map(|(_, full)| full)
    };
    let qualify = |k: &String| if section.is_empty() { k.clone() } else { format!("{section}.{k}") };
    best(&mut local.iter().map(|k| (k.clone(), qualify(k)))).or_else(|| best(&mut all.into_iter()))
}

/// Parse and validate a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let root = DeTable::parse(text).map_err(|e| {
        let line = e.span().map_or(1, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        ConfigError {
            issues: vec![ConfigIssue {
                line,
                message: e.message().to_string(),
            }],
        }
    })?;
    let mut ctx = Ctx {
        text,
        issues: Vec::new(),
    };
    let top = Scope {
        path: "",
        table: Some(root.get_ref()),
        offset: 0,
    };
    let mut known_top: Vec<&str> = TOP_KEYS.to_vec();
    known_top.extend(SECTIONS.iter().map(|(n, _)| *n));
    ctx.unknown_keys(&top, &known_top);

    let section = |ctx: &mut Ctx, name: &'static str| -> Scope<'_, '_> {
        match top.get(name) {
            None => Scope {
                path: name,
                table: None,
                offset: 0,
            },
            Some(v) => match v.get_ref().as_table() {
                Some(t) => Scope {
                    path: name,
                    table: Some(t),
                    offset: v.span().start,
                },
                None => {
                    ctx.issue(v.span().start, format!("{name}: expected a table"));
                    Scope {
                        path: name,
                        table: None,
                        offset: v.span().start,
                    }
                }
            },
        }
    };
    let scopes: Vec<Scope> = SECTIONS.iter().map(|(n, _)| section(&mut ctx, n)).collect();
    for (s, (_, keys)) in scopes.iter().zip(SECTIONS) {
        ctx.unknown_keys(s, keys);
    }
    let [grid_s, solver_s, noise_s, initial_s, geometry_s, analysis_s, theory_s, reference_s] = &scopes[..] else {
        unreachable!("one scope per section")
    };

    // top level
    let kind = ctx.choice(&top, "kind", &ExperimentKind::ALL, ExperimentKind::Simulate);
    let seed = ctx.u64(&top, "seed", 0);
    let output = PathBuf::from(ctx.opt_str(&top, "output").unwrap_or_else(|| "out".into()));
    let snapshot_every = ctx.u64(&top, "snapshot_every", 0);
    let members = ctx.u64(&top, "members", 1) as usize;
    ctx.require(&top, "members", members >= 1, "must be at least 1");
    let workers = ctx.opt_u64(&top, "workers").map(|w| w as usize);
    if let Some(w) = workers {
        ctx.require(&top, "workers", w >= 1, "must be at least 1");
    }

    // grid
    let grid = GridConfig {
        lx: ctx.f64(grid_s, "lx", 1.0),
        ly: ctx.f64(grid_s, "ly", 1.0),
        nx: ctx.u64(grid_s, "nx", 64) as usize,
        ny: ctx.u64(grid_s, "ny", 64) as usize,
    };
    for (key, v) in [("lx", grid.lx), ("ly", grid.ly)] {
        ctx.require(grid_s, key, v.is_finite() && v > 0.0, "must be positive");
    }
    if let Err(e) = DomainGrid::new(grid.lx, grid.ly, grid.nx, grid.ny) {
        ctx.issue(grid_s.offset, format!("grid: {e}"));
    }
    let spacing = (grid.lx / grid.nx.max(1) as f64).max(grid.ly / grid.ny.max(1) as f64);

    // solver
    let epsilon = ctx.f64(solver_s, "epsilon", 0.04);
    ctx.require(solver_s, "epsilon", epsilon.is_finite() && epsilon > 0.0, "must be positive");
    let sigma = ctx.f64(solver_s, "sigma", 2.0);
    ctx.require(solver_s, "sigma", sigma.is_finite(), "must be finite");
    let dt = ctx.f64(solver_s, "dt", STABLE_DT_FACTOR * epsilon * epsilon);
    ctx.require(solver_s, "dt", dt.is_finite() && dt > 0.0, "must be positive");
    let final_time = ctx.f64(solver_s, "final_time", 0.01);
    ctx.require(solver_s, "final_time", final_time.is_finite() && final_time > 0.0, "must be positive");
    let stabilization = ctx.f64(solver_s, "stabilization", DEFAULT_STABILIZATION);
    ctx.require(solver_s, "stabilization", stabilization.is_finite() && stabilization >= 0.0, "must be non-negative");
    let nonlinearity = ctx.choice(
        solver_s,
        "nonlinearity",
        &[("double_well", Nonlinearity::DoubleWell), ("linear", Nonlinearity::Linear)],
        Nonlinearity::DoubleWell,
    );
    let track_noise_path = ctx.bool(solver_s, "track_noise_path", false);

    // noise
    let noise_enabled = ctx.bool(noise_s, "enabled", false);
    let mut noise = NoiseSpec {
        amplitude: ctx.f64(noise_s, "amplitude", 1.0),
        decay: ctx.f64(noise_s, "decay", 1.0),
        modes: None,
        seed,
        truncation: ctx.opt_f64(noise_s, "truncation"),
    };
    if let Some(rows) = ctx.rows(noise_s, "modes", 3) {
        let mut modes = Vec::new();
        for r in rows {
            let ok = r[0] >= 0.0 && r[1] >= 0.0 && r[0].fract() == 0.0 && r[1].fract() == 0.0;
            ctx.require(noise_s, "modes", ok, "mode indices must be non-negative integers");
            modes.push(ModeCoefficient {
                kx: r[0] as usize,
                ky: r[1] as usize,
                alpha: r[2],
            });
        }
        noise.modes = Some(modes);
    }
    if let Err(e) = noise.validate() {
        ctx.issue(noise_s.offset, format!("noise: {e}"));
    }

    // geometry
    let centre = [grid.lx / 2.0, grid.ly / 2.0];
    let geometry = geometry_s.table.map(|_| {
        let kind = ctx.opt_str(geometry_s, "kind");
        let disk = |ctx: &mut Ctx, c: &str, r: &str| -> Disk {
            ctx.require(geometry_s, c, geometry_s.get(c).is_some(), "required for two circles");
            ctx.require(geometry_s, r, geometry_s.get(r).is_some(), "required for two circles");
            Disk::new(ctx.point(geometry_s, c, centre), ctx.f64(geometry_s, r, 0.1))
        };
        match kind.as_deref() {
            Some("circle") => Some(Geometry::Circle(Disk::new(
                ctx.point(geometry_s, "center", centre),
                ctx.f64(geometry_s, "radius", 0.25),
            ))),
            Some("flat") => Some(Geometry::Flat {
                position: ctx.f64(geometry_s, "position", grid.lx / 2.0),
            }),
            Some("two_circles") => Some(Geometry::TwoCircles {
                first: disk(&mut ctx, "first_center", "first_radius"),
                second: disk(&mut ctx, "second_center", "second_radius"),
            }),
            Some("perturbed_circle") => {
                let modes = ctx.rows(geometry_s, "modes", 2).unwrap_or_default();
                Some(Geometry::PerturbedCircle {
                    center: ctx.point(geometry_s, "center", centre),
                    radius: ctx.f64(geometry_s, "radius", 0.25),
                    modes: modes.iter().map(|r| (r[0].max(0.0) as usize, r[1])).collect(),
                })
            }
            Some(other) => {
                ctx.issue(
                    geometry_s.at("kind"),
                    format!(
                        "geometry.kind: unknown value \"{other}\", expected one of circle, flat, two_circles, perturbed_circle"
                    ),
                );
                None
            }
            None => {
                ctx.issue(geometry_s.offset, "geometry.kind: required".into());
                None
            }
        }
    });
    let geometry = geometry.flatten();
    if let Some(g) = &geometry {
        if let Err(e) = g.validate() {
            ctx.issue(geometry_s.offset, format!("geometry: {e}"));
        }
    }

    // initial condition
    let default_initial = if geometry.is_some() { "profile" } else { "constant" };
    let initial_kind = ctx.opt_str(initial_s, "kind").unwrap_or_else(|| default_initial.into());
    let initial = match initial_kind.as_str() {
        "constant" => InitialCondition::Constant {
            value: ctx.f64(initial_s, "value", 0.0),
        },
        "random" => InitialCondition::Random {
            mean: ctx.f64(initial_s, "mean", 0.0),
            amplitude: ctx.f64(initial_s, "amplitude", 0.05),
            seed: ctx.u64(initial_s, "seed", seed),
        },
        "profile" => match &geometry {
            Some(g) => InitialCondition::Profile { geometry: g.clone() },
            None => {
                ctx.issue(initial_s.at("kind"), "initial.kind: \"profile\" needs a [geometry] section".into());
                InitialCondition::Constant { value: 0.0 }
            }
        },
        other => {
            ctx.issue(
                initial_s.at("kind"),
                format!("initial.kind: unknown value \"{other}\", expected one of constant, random, profile"),
            );
            InitialCondition::Constant { value: 0.0 }
        }
    };

    // analysis
    let p = ctx.f64(analysis_s, "p", DEFAULT_P);
    let gamma_default = admissible_exponents(p, 2).map(|e| e.gamma_min);
    if let Err(e) = &gamma_default {
        ctx.issue(analysis_s.at("p"), format!("analysis.p: {e}"));
    }
    let analysis = AnalysisConfig {
        p,
        gamma: ctx.f64(analysis_s, "gamma", gamma_default.unwrap_or(f64::NAN)),
        kappa: ctx.f64(analysis_s, "kappa", DEFAULT_KAPPA),
        cadence: ctx.u64(analysis_s, "cadence", 10),
        mean_correction: ctx.bool(analysis_s, "mean_correction", false),
        epsilons: ctx.numbers(analysis_s, "epsilons").unwrap_or_else(|| vec![epsilon]),
        sigmas: ctx.numbers(analysis_s, "sigmas").unwrap_or_else(|| vec![sigma]),
        input: ctx.opt_str(analysis_s, "input").map(PathBuf::from),
        k_max: ctx.u64(analysis_s, "k_max", 8) as usize,
    };
    ctx.require(analysis_s, "cadence", analysis.cadence >= 1, "must be at least 1");
    // Defaults copy the solver values, which are checked above.
    ctx.require(
        analysis_s,
        "epsilons",
        analysis_s.get("epsilons").is_none()
            || (!analysis.epsilons.is_empty() && analysis.epsilons.iter().all(|e| e.is_finite() && *e > 0.0)),
        "must be a non-empty list of positive numbers",
    );
    ctx.require(
        analysis_s,
        "sigmas",
        analysis_s.get("sigmas").is_none()
            || (!analysis.sigmas.is_empty() && analysis.sigmas.iter().all(|s| s.is_finite())),
        "must be a non-empty list of finite numbers",
    );

    // theory
    let theory = TheoryConfig {
        p: ctx.f64(theory_s, "p", DEFAULT_P),
        d: ctx.u64(theory_s, "d", 2) as u32,
    };
    if let Err(e) = admissible_exponents(theory.p, theory.d) {
        ctx.issue(theory_s.offset, format!("theory: {e}"));
    }

    // reference
    let geometry_radius = match &geometry {
        Some(Geometry::Circle(d)) => Some(d.radius),
        Some(Geometry::PerturbedCircle { radius, .. }) => Some(*radius),
        _ => None,
    };
    let reference = ReferenceConfig {
        radius: ctx.f64(reference_s, "radius", geometry_radius.unwrap_or(0.25)),
        k_max: ctx.u64(reference_s, "k_max", 8) as usize,
        projection: ctx.f64(reference_s, "projection", 1.0),
        ou_steps: ctx.u64(reference_s, "ou_steps", 100_000) as usize,
        ou_dt: ctx.opt_f64(reference_s, "ou_dt"),
        monopole_dt: ctx.f64(reference_s, "monopole_dt", 1e-5),
        monopole_final_time: ctx.f64(reference_s, "monopole_final_time", 0.01),
        collapse_radius: ctx.f64(reference_s, "collapse_radius", spacing),
    };
    ctx.require(reference_s, "radius", reference.radius > 0.0, "must be positive");
    ctx.require(reference_s, "k_max", reference.k_max >= 2, "must be at least 2");
    ctx.require(reference_s, "monopole_dt", reference.monopole_dt > 0.0, "must be positive");

    let solver = SolverParams {
        epsilon,
        sigma,
        dt,
        final_time,
        stabilization,
        noise_enabled,
        noise,
        initial,
        nonlinearity,
        track_noise_path,
    };
    if ctx.issues.is_empty() {
        if let Ok(g) = DomainGrid::new(grid.lx, grid.ly, grid.nx, grid.ny) {
            if let Err(e) = solver.validate(&g) {
                ctx.issue(solver_s.offset, format!("solver: {e}"));
            }
        }
    }
    if !ctx.issues.is_empty() {
        ctx.issues.sort_by_key(|i| i.line);
        return Err(ConfigError { issues: ctx.issues });
    }
    Ok(RunConfig {
        kind,
        seed,
        output,
        snapshot_every,
        members,
        workers,
        grid,
        solver,
        geometry,
        analysis,
        theory,
        reference,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c.kind, ExperimentKind::Simulate);
        assert_eq!((c.grid.nx, c.grid.ny), (64, 64));
        assert_eq!(c.solver.epsilon, 0.04);
        assert!((c.solver.dt - 0.5 * 0.04 * 0.04).abs() < 1e-18);
        assert_eq!(c.solver.initial, InitialCondition::Constant { value: 0.0 });
        assert!((c.analysis.gamma - 13.0 / 3.0).abs() < 1e-12);
        assert_eq!(c.analysis.epsilons, vec![0.04]);
        assert_eq!(c.output, PathBuf::from("out"));
    }

    #[test]
    fn full_config() {
        let text = r#"
kind = "ensemble"
seed = 42
members = 8

[grid]
nx = 128
ny = 96
ly = 0.75

[solver]
epsilon = 0.02
dt = 1e-5
nonlinearity = "linear"

[noise]
enabled = true
modes = [[2, 0, 1.5], [0, 2, 1.5]]

[geometry]
kind = "circle"
radius = 0.2

[analysis]
sigmas = [2, 3, 4]
"#;
        let c = parse_config(text).unwrap();
        assert_eq!(c.kind, ExperimentKind::Ensemble);
        assert_eq!(c.solver.noise.seed, 42);
        assert_eq!(c.solver.noise.modes.as_ref().unwrap()[1].ky, 2);
        assert_eq!(c.solver.nonlinearity, Nonlinearity::Linear);
        assert_eq!(c.analysis.sigmas, vec![2.0, 3.0, 4.0]);
        assert_eq!(c.geometry, Some(Geometry::Circle(Disk::new([0.5, 0.375], 0.2))));
        assert!(matches!(c.solver.initial, InitialCondition::Profile { .. }));
        assert_eq!(c.reference.radius, 0.2);
    }

    #[test]
    fn negative_epsilon_names_the_field() {
        let e = parse_config("[solver]\nepsilon = -1\n").unwrap_err();
        assert_eq!(e.issues.len(), 1, "{e}");
        assert_eq!(e.issues[0].line, 2);
        assert!(e.issues[0].message.contains("solver.epsilon"), "{}", e.issues[0].message);
    }

    #[test]
    fn unknown_keys_get_suggestions() {
        let e = parse_config("[solver]\nepsilonn = 0.1\n").unwrap_err();
        assert!(e.issues[0].message.contains("did you mean \"solver.epsilon\""), "{e}");
        let e = parse_config("epsilonn = 0.1\n").unwrap_err();
        assert!(e.issues[0].message.contains("solver.epsilon"), "{e}");
        assert_eq!(e.issues[0].line, 1);
    }

    #[test]
    fn all_errors_are_reported() {
        let text = "kind = \"simulat\"\n[grid]\nnx = \"big\"\n[solver]\ndt = -1\nsigmaa = 2\n";
        let e = parse_config(text).unwrap_err();
        let lines: Vec<usize> = e.issues.iter().map(|i| i.line).collect();
        assert_eq!(lines, vec![1, 3, 5, 6], "{e}");
        assert!(e.issues[1].message.contains("expected an integer"));
    }

    #[test]
    fn syntax_errors_carry_a_line() {
        let e = parse_config("[grid]\nnx = = 3\n").unwrap_err();
        assert_eq!(e.issues[0].line, 2);
    }

    #[test]
    fn reseeding_moves_noise_and_random_start() {
        let mut c = parse_config("seed = 3\n[initial]\nkind = \"random\"\n").unwrap();
        c.reseed(9);
        assert_eq!(c.solver.noise.seed, 9);
        assert!(matches!(c.solver.initial, InitialCondition::Random { seed: 9, .. }));
    }
}
