//! Experiment drivers. Every artifact is computed first and written by the
//! calling thread, so outputs depend only on the configuration and seed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use super::config::{ExperimentKind, RunConfig};
use super::snapshot::{read_snapshot, write_snapshot, FieldSnapshot, SnapshotError};
use crate::dynamics::{energy, ChState, DynamicsError, Stepper};
use crate::geometry::{extract_zero_set, Geometry, GeometryError};
use crate::hele_shaw::{
    linearized_mode_rates, simulate_mode_variance, stationary_circle_check, stochastic_mode_ou, two_circle_monopole,
    CircleConfig, HeleShawError,
};
use crate::residual::{
    build_approximation, residual_norms, scaling_study, ApproximationSpec, ResidualError, ResidualOptions,
    ResidualReport, ScalingStudy,
};
use crate::spectral::{DomainGrid, SpectralField};
use crate::theory::{admissible_exponents, kink_residual, surface_tension, TheoryError};

/// Process exit codes of the command-line driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(i32)]
pub enum ExitCode {
    Success = 0,
    /// Command-line usage error.
    Usage = 2,
    /// The configuration failed to parse or validate.
    Config = 3,
    Io = 4,
    /// The solver diverged.
    BlowUp = 5,
    /// A snapshot is corrupt or of an unsupported version.
    Snapshot = 6,
    /// Any other numerical failure (no interface, invalid reference, ...).
    Numerical = 7,
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Residual(#[from] ResidualError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    HeleShaw(#[from] HeleShawError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
}

impl ExperimentError {
    pub fn exit_code(&self) -> ExitCode {
        fn blow_up(e: &ResidualError) -> bool {
            match e {
                ResidualError::Dynamics(DynamicsError::BlowUp { .. }) => true,
                ResidualError::Member { source, .. } => blow_up(source),
                _ => false,
            }
        }
        match self {
            ExperimentError::Config(_) => ExitCode::Config,
            ExperimentError::Io { .. } | ExperimentError::Snapshot(SnapshotError::Io(_)) => ExitCode::Io,
            ExperimentError::Snapshot(_) => ExitCode::Snapshot,
            ExperimentError::Dynamics(DynamicsError::BlowUp { .. }) => ExitCode::BlowUp,
            ExperimentError::Residual(e) if blow_up(e) => ExitCode::BlowUp,
            _ => ExitCode::Numerical,
        }
    }
}

/// Text for standard output and the files written.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub summary: String,
    pub artifacts: Vec<PathBuf>,
}

struct Artifacts {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl Artifacts {
    fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        }
    }

    fn path(&self, name: &str) -> Result<PathBuf, ExperimentError> {
        let path = self.root.join(name);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|source| ExperimentError::Io {
                path: dir.to_path_buf(),
                source,
            })?;
        }
        Ok(path)
    }

    fn text(&mut self, name: &str, content: &str) -> Result<(), ExperimentError> {
        let path = self.path(name)?;
        std::fs::write(&path, content).map_err(|source| ExperimentError::Io {
            path: path.clone(),
            source,
        })?;
        self.written.push(path);
        Ok(())
    }

    fn snapshot(&mut self, name: &str, s: &FieldSnapshot) -> Result<(), ExperimentError> {
        let path = self.path(name)?;
        write_snapshot(&path, s)?;
        self.written.push(path);
        Ok(())
    }

    fn finish(self, summary: String) -> Result<Outcome, ExperimentError> {
        let mut me = self;
        me.text("summary.txt", &summary)?;
        Ok(Outcome {
            summary,
            artifacts: me.written,
        })
    }
}

/// Run the experiment selected by `config.kind`, writing under
/// `config.output`. `workers` sizes the ensemble thread pool and does not
/// affect any output.
pub fn run_experiment(config: &RunConfig, workers: usize) -> Result<Outcome, ExperimentError> {
    let mut out = Artifacts::new(&config.output);
    let summary = match config.kind {
        ExperimentKind::Simulate => simulate(config, &mut out)?,
        ExperimentKind::Ensemble => ensemble(config, workers, &mut out)?,
        ExperimentKind::Analyze => analyze(config, &mut out)?,
        ExperimentKind::Theory => theory(config, &mut out)?,
        ExperimentKind::Reference => reference(config, &mut out)?,
    };
    out.finish(summary)
}

fn header(config: &RunConfig) -> String {
    format!(
        "experiment = {}\nseed = {}\ngrid = {}x{} on {}x{}\n",
        config.kind.name(),
        config.seed,
        config.grid.nx,
        config.grid.ny,
        config.grid.lx,
        config.grid.ly
    )
}

/// Interface descriptors of a field: loop count, enclosed area, and for a
/// single loop the mean radius and mode amplitudes.
fn interface_row(u: &SpectralField, k_max: usize) -> String {
    let nan_modes = || vec!["nan"; k_max + 1].join(",");
    match extract_zero_set(u) {
        Ok(curves) => {
            let area: f64 = curves.iter().map(|c| c.signed_area()).sum();
            match (curves.len(), curves.first().map(|c| c.mode_decomposition(k_max))) {
                (1, Some(Ok(m))) => {
                    let amps: Vec<String> = (0..=k_max).map(|k| format!("{:.12e}", m.amplitude(k))).collect();
                    format!("1,{area:.12e},{:.12e},{}", m.mean_radius, amps.join(","))
                }
                (n, _) => format!("{n},{area:.12e},nan,{}", nan_modes()),
            }
        }
        Err(_) => format!("0,nan,nan,{}", nan_modes()),
    }
}

fn interface_header(k_max: usize) -> String {
    let modes: Vec<String> = (0..=k_max).map(|k| format!("delta_{k}")).collect();
    format!("loops,area,mean_radius,{}", modes.join(","))
}

fn simulate(config: &RunConfig, out: &mut Artifacts) -> Result<String, ExperimentError> {
    let grid = config.domain();
    let stepper = Stepper::new(&config.solver, &grid, 0)?;
    let cadence = config.analysis.cadence.max(1);
    let k_max = config.analysis.k_max;
    let spec = match &config.geometry {
        Some(g) => Some(ApproximationSpec::new(g.clone(), config.solver.epsilon)?),
        None => None,
    };
    let static_ua = match &spec {
        Some(s) if matches!(s.geometry, Geometry::Circle(_) | Geometry::Flat { .. }) => {
            Some(build_approximation(s, &grid, 0.0)?.u)
        }
        _ => None,
    };
    let eps = config.solver.epsilon;
    let mut trajectory = String::from("step,t,mean,energy,min,max\n");
    let mut interface = format!("step,t,{}\n", interface_header(k_max));
    let mut report = ResidualReport::new(
        eps,
        config.solver.sigma,
        config.analysis.gamma,
        config.analysis.p,
        config.solver.final_time,
    );
    let mut snapshots: Vec<(String, FieldSnapshot)> = Vec::new();
    let total = config.solver.steps();
    let mut failure: Option<ExperimentError> = None;
    let mut observe = |s: &ChState, sample: bool| {
        if failure.is_some() {
            return;
        }
        let snap_due = s.step == 0
            || s.step == total
            || (config.snapshot_every > 0 && s.step % config.snapshot_every == 0);
        if snap_due {
            snapshots.push((
                format!("snapshots/u_{:08}.shfl", s.step),
                FieldSnapshot {
                    time: s.time,
                    epsilon: eps,
                    sigma: config.solver.sigma,
                    field: s.u.clone(),
                },
            ));
        }
        if !sample {
            return;
        }
        let (lo, hi) = s.u.nodal().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let _ = writeln!(
            trajectory,
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            s.step,
            s.time,
            s.mean(),
            s.energy(eps),
            lo,
            hi
        );
        if let Some(spec) = &spec {
            let _ = writeln!(interface, "{},{:.12e},{}", s.step, s.time, interface_row(&s.u, k_max));
            let ua = match &static_ua {
                Some(u) => Ok(u.clone()),
                None => build_approximation(spec, &grid, s.time).map(|a| a.u),
            };
            match ua.and_then(|ua| residual_norms(&s.u, &ua, config.analysis.p, config.analysis.mean_correction)) {
                Ok(r) => report.push(s.time, &r),
                Err(e) => failure = Some(e.into()),
            }
        }
    };
    let mut state = stepper.initial_state()?;
    observe(&state, true);
    while state.step < total {
        state = stepper.step(&state)?;
        let sample = state.step % cadence == 0 || state.step == total;
        let snap = config.snapshot_every > 0 && state.step % config.snapshot_every == 0;
        if sample || snap || state.step == total {
            observe(&state, sample);
        }
    }
    if let Some(e) = failure {
        return Err(e);
    }
    out.text("trajectory.csv", &trajectory)?;
    for (name, s) in &snapshots {
        out.snapshot(name, s)?;
    }
    let mut summary = header(config);
    let _ = writeln!(summary, "steps = {total}\nfinal_time = {}", state.time);
    let _ = writeln!(summary, "final_mean = {:.12e}\nfinal_energy = {:.12e}", state.mean(), state.energy(eps));
    if spec.is_some() {
        out.text("interface.csv", &interface)?;
        out.text("residual.csv", &report.to_csv())?;
        let _ = writeln!(
            summary,
            "stopping_time = {}\nsup_hminus1_sq = {:.6e}\nlp_accumulated = {:.6e}",
            report.stopping_time(),
            report.sup_hminus1_sq(),
            report.lp_accumulated.last().copied().unwrap_or(0.0)
        );
    }
    Ok(summary)
}

fn ensemble(config: &RunConfig, workers: usize, out: &mut Artifacts) -> Result<String, ExperimentError> {
    let geometry = config
        .geometry
        .clone()
        .ok_or_else(|| ExperimentError::Config("an ensemble study needs a [geometry] section".into()))?;
    let study = ScalingStudy {
        epsilons: config.analysis.epsilons.clone(),
        sigmas: config.analysis.sigmas.clone(),
        members: config.members,
        geometry,
        solver: config.solver.clone(),
        grid: config.domain(),
        options: ResidualOptions {
            p: config.analysis.p,
            gamma: config.analysis.gamma,
            cadence: config.analysis.cadence,
            mean_correction: config.analysis.mean_correction,
        },
        kappa: config.analysis.kappa,
        workers,
    };
    let table = scaling_study(&study)?;
    out.text("scaling.csv", &table.to_csv())?;
    for row in &table.rows {
        for (m, r) in row.reports.iter().enumerate() {
            out.text(
                &format!("residuals/eps{}_sigma{}_member{m:04}.csv", row.epsilon, row.sigma),
                &r.to_csv(),
            )?;
        }
    }
    let mut summary = header(config);
    let _ = writeln!(summary, "members = {}", config.members);
    summary.push_str(&table.summary());
    for r in &table.rows {
        let _ = writeln!(
            summary,
            "eps={} sigma={}: mean sup H^-1^2 = {:.6e}, survival = {:.3}",
            r.epsilon, r.sigma, r.hminus1_sq_mean, r.survival_fraction
        );
    }
    Ok(summary)
}

fn snapshot_files(dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let entries = std::fs::read_dir(dir).map_err(|source| ExperimentError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "shfl"))
        .collect();
    files.sort();
    Ok(files)
}

fn analyze(config: &RunConfig, out: &mut Artifacts) -> Result<String, ExperimentError> {
    let dir = config.analysis.input.clone().unwrap_or_else(|| config.output.join("snapshots"));
    let files = snapshot_files(&dir)?;
    if files.is_empty() {
        return Err(ExperimentError::Config(format!("no .shfl snapshots in {}", dir.display())));
    }
    let k_max = config.analysis.k_max;
    let mut csv = format!("file,t,mean,energy,{},lp,hminus1,grad_l2\n", interface_header(k_max));
    let mut grid: Option<Arc<DomainGrid>> = None;
    for f in &files {
        let s = read_snapshot(f)?;
        let g = grid.get_or_insert_with(|| s.field.grid().clone()).clone();
        let u = SpectralField::from_nodal(&g, s.field.into_nodal()).map_err(ResidualError::from)?;
        let residual = match &config.geometry {
            Some(geom) => {
                let spec = ApproximationSpec::new(geom.clone(), s.epsilon)?;
                let ua = build_approximation(&spec, &g, s.time)?.u;
                let r = residual_norms(&u, &ua, config.analysis.p, config.analysis.mean_correction)?;
                format!("{:.12e},{:.12e},{:.12e}", r.lp, r.hminus1, r.grad_l2)
            }
            None => "nan,nan,nan".into(),
        };
        let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let _ = writeln!(
            csv,
            "{name},{:.12e},{:.12e},{:.12e},{},{residual}",
            s.time,
            u.mean(),
            energy(&u, s.epsilon),
            interface_row(&u, k_max)
        );
    }
    out.text("analysis.csv", &csv)?;
    let mut summary = header(config);
    let _ = writeln!(summary, "snapshots = {}\nsource = {}", files.len(), dir.display());
    Ok(summary)
}

/// `x` as an integer or small fraction when it is one.
fn exact(x: f64) -> String {
    for q in 1..=12u32 {
        let p = x * q as f64;
        if (p - p.round()).abs() < 1e-9 {
            return if q == 1 {
                format!("{}", p.round())
            } else {
                format!("{} ({}/{q})", format_args!("{x:.6}"), p.round())
            };
        }
    }
    format!("{x:.6}")
}

fn theory(config: &RunConfig, out: &mut Artifacts) -> Result<String, ExperimentError> {
    let e = admissible_exponents(config.theory.p, config.theory.d)?;
    let mut text = format!("p = {}\nd = {}\n", e.p, e.d);
    let _ = writeln!(text, "gamma_min = {}", exact(e.gamma_min));
    let _ = writeln!(text, "sigma_min = {}", exact(e.sigma_min));
    let _ = writeln!(text, "sobolev_alpha = {}", exact(e.sobolev_alpha));
    let _ = writeln!(text, "kappa = {}", e.kappa);
    let _ = writeln!(text, "surface_tension = {:.15}", surface_tension());
    let _ = writeln!(text, "kink_residual = {:.3e}", kink_residual());
    for n in e.notes() {
        let _ = writeln!(text, "note: {n}");
    }
    out.text("theory.txt", &text)?;
    Ok(text)
}

fn reference(config: &RunConfig, out: &mut Artifacts) -> Result<String, ExperimentError> {
    let r = &config.reference;
    let lambda = surface_tension();
    let mut summary = header(config);
    let mut rates = String::from("k,rate,noise_loading,stationary_variance\n");
    for m in linearized_mode_rates(r.radius, lambda, r.k_max)? {
        let (b, var) = if m.k >= 2 {
            let ou = stochastic_mode_ou(r.radius, lambda, m.k, r.projection)?;
            (ou.noise_loading, ou.stationary_variance().unwrap_or(f64::NAN))
        } else {
            (0.0, f64::NAN)
        };
        let _ = writeln!(rates, "{},{:.12e},{:.12e},{:.12e}", m.k, m.rate, b, var);
    }
    out.text("mode_rates.csv", &rates)?;

    let ou = stochastic_mode_ou(r.radius, lambda, 2, r.projection)?;
    let dt = r.ou_dt.unwrap_or(0.02 * ou.relaxation_time().expect("k = 2 relaxes"));
    let simulated = simulate_mode_variance(&ou, dt, r.ou_steps, r.ou_steps / 20, config.seed);
    let _ = writeln!(
        summary,
        "ou_k2_variance = {:.6e}\nou_k2_simulated = {:.6e} ({} steps, dt = {:.3e})",
        ou.stationary_variance().unwrap_or(f64::NAN),
        simulated,
        r.ou_steps,
        dt
    );

    match &config.geometry {
        Some(Geometry::TwoCircles { first, second }) => {
            let c = CircleConfig::new(vec![*first, *second])?;
            let t = two_circle_monopole(&c, lambda, r.monopole_dt, r.monopole_final_time, r.collapse_radius)?;
            out.text("monopole.csv", &t.to_csv())?;
            match t.collapse {
                Some(ev) => {
                    let _ = writeln!(summary, "collapse = circle {} at t = {:.6e}", ev.circle, ev.time);
                }
                None => {
                    let _ = writeln!(summary, "collapse = none before t = {}", r.monopole_final_time);
                }
            }
        }
        Some(Geometry::Circle(d)) => {
            let s = stationary_circle_check(&CircleConfig::new(vec![*d])?, lambda)?;
            let _ = writeln!(
                summary,
                "stationary_potential = {:.12e}\nstationary_velocity = {}",
                s.potential, s.velocity
            );
        }
        _ => {}
    }
    let _ = writeln!(summary, "radius = {}\nsurface_tension = {:.15}", r.radius, lambda);
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::parse_config;

    fn config(text: &str, dir: &Path) -> RunConfig {
        let mut c = parse_config(text).unwrap();
        c.output = dir.to_path_buf();
        c
    }

    #[test]
    fn theory_in_three_dimensions() {
        let dir = tempfile::tempdir().unwrap();
        let c = config("kind = \"theory\"\n[theory]\nd = 3\n", dir.path());
        let o = run_experiment(&c, 1).unwrap();
        assert!(o.summary.contains("gamma_min = 6\n"), "{}", o.summary);
        assert!(o.summary.contains("sigma_min = 11\n"), "{}", o.summary);
        let two = config("kind = \"theory\"\n", dir.path());
        let o = run_experiment(&two, 1).unwrap();
        assert!(o.summary.contains("(13/3)") && o.summary.contains("(23/3)"), "{}", o.summary);
        assert!(o.summary.contains("note:"));
    }

    #[test]
    fn constant_state_stays_put() {
        let dir = tempfile::tempdir().unwrap();
        let c = config(
            "[grid]\nnx = 16\nny = 16\n[solver]\nfinal_time = 0.001\ndt = 1e-4\n[initial]\nvalue = 1.0\n",
            dir.path(),
        );
        let o = run_experiment(&c, 1).unwrap();
        let last = o.artifacts.iter().filter(|p| p.extension().is_some_and(|e| e == "shfl")).last().unwrap();
        let s = read_snapshot(last).unwrap();
        assert!(s.field.nodal().iter().all(|&v| v == 1.0));
        assert!((s.time - 0.001).abs() < 1e-15);
    }

    #[test]
    fn reruns_are_byte_identical() {
        let text = "seed = 5\nsnapshot_every = 5\n[grid]\nnx = 32\nny = 32\n[solver]\nfinal_time = 0.002\ndt = 1e-4\n\
                    [noise]\nenabled = true\namplitude = 5.0\n[geometry]\nkind = \"circle\"\nradius = 0.25\n\
                    [analysis]\ncadence = 4\n";
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let oa = run_experiment(&config(text, a.path()), 1).unwrap();
        let ob = run_experiment(&config(text, b.path()), 1).unwrap();
        assert_eq!(oa.artifacts.len(), ob.artifacts.len());
        for (x, y) in oa.artifacts.iter().zip(&ob.artifacts) {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{}", x.display());
        }
        let analyze = format!("kind = \"analyze\"\n{}", text.replacen("seed = 5\n", "", 1));
        let mut c = config(&analyze, a.path());
        c.analysis.input = Some(a.path().join("snapshots"));
        let o = run_experiment(&c, 1).unwrap();
        assert!(o.summary.contains("snapshots = 5"), "{}", o.summary);
    }

    #[test]
    fn error_categories() {
        let dir = tempfile::tempdir().unwrap();
        let c = config("kind = \"ensemble\"\n", dir.path());
        assert_eq!(run_experiment(&c, 1).unwrap_err().exit_code(), ExitCode::Config);
        let mut c = config("kind = \"analyze\"\n", dir.path());
        c.analysis.input = Some(dir.path().join("missing"));
        assert_eq!(run_experiment(&c, 1).unwrap_err().exit_code(), ExitCode::Io);
        std::fs::write(dir.path().join("bad.shfl"), b"SHFLjunk").unwrap();
        c.analysis.input = Some(dir.path().to_path_buf());
        assert_eq!(run_experiment(&c, 1).unwrap_err().exit_code(), ExitCode::Snapshot);
        let blow = config(
            "[grid]\nnx = 16\nny = 16\n[solver]\ndt = 10.0\nfinal_time = 1000.0\nstabilization = 0.0\n\
             [initial]\nkind = \"random\"\namplitude = 5.0\n",
            dir.path(),
        );
        assert_eq!(run_experiment(&blow, 1).unwrap_err().exit_code(), ExitCode::BlowUp);
    }

    #[test]
    fn reference_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let c = config(
            "kind = \"reference\"\n[geometry]\nkind = \"two_circles\"\nfirst_center = [0.25, 0.5]\nfirst_radius = 0.1\n\
             second_center = [0.75, 0.5]\nsecond_radius = 0.07\n[reference]\nou_steps = 20000\n",
            dir.path(),
        );
        let o = run_experiment(&c, 1).unwrap();
        assert!(o.summary.contains("collapse = circle 1"), "{}", o.summary);
        let rates = std::fs::read_to_string(dir.path().join("mode_rates.csv")).unwrap();
        assert_eq!(rates.lines().count(), 10);
    }
}
