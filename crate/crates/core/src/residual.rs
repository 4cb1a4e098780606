//! Residual of a phase-field run against the leading-order approximation
//! `uA = q(d / eps)` built from a reference interface, its norms, the
//! stopping time, and ensemble scaling studies.
//!
//! The approximation is only leading order, so deterministic residuals level
//! off at the approximation error; scaling studies report trends and
//! orderings, not asymptotic exponents.

use std::sync::Arc;

use log::warn;
use rayon::prelude::*;
use thiserror::Error;

use crate::dynamics::{DynamicsError, InitialCondition, SolverParams, Stepper};
use crate::geometry::{signed_distance, Disk, Geometry, GeometryError};
use crate::hele_shaw::{mode_rate, two_circle_monopole, CircleConfig, HeleShawError};
use crate::spectral::{DomainGrid, SpectralError, SpectralField};
use crate::theory::{kink, surface_tension};

/// Header line carried by every residual report.
pub const LEADING_ORDER_CAVEAT: &str =
    "leading-order approximation uA = q(d/eps): deterministic residuals level off at the approximation error";

/// Largest `|mean(u - uA)|` accepted without mean correction.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Frozen constant of the chain `||R||_p^p <= C ||grad psi||^a ||grad R||^b`
/// for `p = 3`, `d = 2` (`a = 1`, `b = 2`): the largest ratio seen on
/// random fields of every spectral slope, single spikes and single modes on
/// grids from `16^2` to `128^2` was 0.47, doubled and rounded.
pub const INTERPOLATION_CHAIN_CONSTANT: f64 = 1.0;

#[derive(Debug, Error)]
pub enum ResidualError {
    #[error("interface lies {clearance} from the boundary, closer than 4 eps = {required}")]
    BoundaryProximity { clearance: f64, required: f64 },
    #[error("invalid residual setup: {0}")]
    Invalid(String),
    #[error("mean of the residual is {mean}, above {tolerance}; mean correction is disabled")]
    MeanNotZero { mean: f64, tolerance: f64 },
    #[error("member {member} at eps = {epsilon}, sigma = {sigma}: {source}")]
    Member {
        epsilon: f64,
        sigma: f64,
        member: u64,
        #[source]
        source: Box<ResidualError>,
    },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    HeleShaw(#[from] HeleShawError),
}

pub type Result<T, E = ResidualError> = std::result::Result<T, E>;

/// Reference interface for the approximation. Circles and flat interfaces
/// are stationary, perturbation modes of a circle relax at the linearized
/// rates, two circles follow the monopole model.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproximationSpec {
    pub geometry: Geometry,
    pub epsilon: f64,
    pub lambda: f64,
}

impl ApproximationSpec {
    pub fn new(geometry: Geometry, epsilon: f64) -> Result<Self> {
        geometry.validate()?;
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(ResidualError::Invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(Self {
            geometry,
            epsilon,
            lambda: surface_tension(),
        })
    }

    /// The interface at time `t`.
    pub fn geometry_at(&self, t: f64) -> Result<Geometry> {
        Ok(match &self.geometry {
            g @ (Geometry::Circle(_) | Geometry::Flat { .. }) => g.clone(),
            Geometry::PerturbedCircle { center, radius, modes } => Geometry::PerturbedCircle {
                center: *center,
                radius: *radius,
                modes: modes
                    .iter()
                    .map(|&(k, a)| (k, a * (mode_rate(*radius, self.lambda, k) * t).exp()))
                    .collect(),
            },
            Geometry::TwoCircles { first, second } => {
                if t <= 0.0 {
                    return Ok(self.geometry.clone());
                }
                let config = CircleConfig::new(vec![*first, *second])?;
                let steps = (t / 1e-6).ceil().max(100.0);
                let traj = two_circle_monopole(&config, self.lambda, t / steps, t, 0.0)?;
                if let Some(ev) = traj.collapse {
                    return Err(ResidualError::Invalid(format!(
                        "circle {} of the reference collapses at t = {}",
                        ev.circle, ev.time
                    )));
                }
                let r = traj.radii.last().expect("trajectory has the initial state");
                Geometry::TwoCircles {
                    first: Disk::new(first.center, r[0]),
                    second: Disk::new(second.center, r[1]),
                }
            }
        })
    }
}

/// `uA` and `vA` at one time.
#[derive(Debug, Clone)]
pub struct Approximation {
    pub u: SpectralField,
    pub v: SpectralField,
}

/// Curvature `kappa` (positive for convex loops around `+`) of the interface
/// point associated with `(x, y)`: the nearest point for circles, the point at
/// the same polar angle for perturbed circles.
fn interface_curvature(geometry: &Geometry, x: f64, y: f64) -> f64 {
    match geometry {
        Geometry::Circle(d) => 1.0 / d.radius,
        Geometry::Flat { .. } => 0.0,
        Geometry::TwoCircles { first, second } => {
            if first.signed_distance(x, y) >= second.signed_distance(x, y) {
                1.0 / first.radius
            } else {
                1.0 / second.radius
            }
        }
        Geometry::PerturbedCircle { center, radius, modes } => {
            let th = (y - center[1]).atan2(x - center[0]);
            let (mut r, mut dr, mut ddr) = (*radius, 0.0, 0.0);
            for &(k, a) in modes {
                let k = k as f64;
                r += a * (k * th).cos();
                dr -= a * k * (k * th).sin();
                ddr -= a * k * k * (k * th).cos();
            }
            (r * r + 2.0 * dr * dr - r * ddr) / (r * r + dr * dr).powf(1.5)
        }
    }
}

/// `uA = q(d/eps)` and `vA = lambda H` extended off the interface as the
/// value at the associated interface point (`H = -kappa`).
pub fn build_approximation(spec: &ApproximationSpec, grid: &Arc<DomainGrid>, t: f64) -> Result<Approximation> {
    let geometry = spec.geometry_at(t)?;
    let required = 4.0 * spec.epsilon;
    let clearance = match geometry {
        // A flat interface meets the walls at a right angle, as the Neumann
        // condition demands; only its distance to the parallel walls matters.
        Geometry::Flat { position } => position.min(grid.lx() - position),
        _ => geometry.boundary_clearance(grid.lx(), grid.ly()),
    };
    if clearance < required {
        return Err(ResidualError::BoundaryProximity { clearance, required });
    }
    let d = signed_distance(&geometry, grid)?;
    let u = d.map_nodal(|v| kink(v / spec.epsilon))?;
    let v = SpectralField::from_fn(grid, |x, y| -spec.lambda * interface_curvature(&geometry, x, y))?;
    Ok(Approximation { u, v })
}

/// Instantaneous norms of `R = u - uA`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualSample {
    pub lp: f64,
    pub hminus1: f64,
    pub grad_l2: f64,
    /// Mean removed before the `H^-1` norm (zero when none was needed).
    pub mean_removed: f64,
}

/// Norms of `u - uA`. A residual mean above [`MASS_TOLERANCE`] is an error
/// unless `mean_correction` is set, in which case it is removed (with a
/// warning) before the `H^-1` norm.
pub fn residual_norms(u: &SpectralField, ua: &SpectralField, p: f64, mean_correction: bool) -> Result<ResidualSample> {
    let r = u.sub(ua)?;
    let mean = r.mean();
    let mean_removed = if mean.abs() > MASS_TOLERANCE {
        if !mean_correction {
            return Err(ResidualError::MeanNotZero {
                mean,
                tolerance: MASS_TOLERANCE,
            });
        }
        warn!("residual mean {mean:.3e} removed before the H^-1 norm");
        mean
    } else {
        0.0
    };
    Ok(ResidualSample {
        lp: r.lp_norm(p)?,
        hminus1: r.hminus1_norm_unchecked(),
        grad_l2: r.h1_seminorm(),
        mean_removed,
    })
}

/// Residual norms along one trajectory with their running time integrals.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub epsilon: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub p: f64,
    pub final_time: f64,
    pub times: Vec<f64>,
    /// `||R(t)||_{L^p}`.
    pub lp: Vec<f64>,
    /// `(int_0^t ||R||_p^p ds)^(1/p)`.
    pub lp_accumulated: Vec<f64>,
    /// `||R(t)||_{H^-1}`.
    pub hminus1: Vec<f64>,
    /// `sup_{s <= t} ||R(s)||_{H^-1}^2`.
    pub hminus1_sq_sup: Vec<f64>,
    /// `||grad R(t)||_{L^2}`.
    pub grad_l2: Vec<f64>,
    /// `int_0^t ||grad R||^2 ds`.
    pub grad_l2_sq_accumulated: Vec<f64>,
}

impl ResidualReport {
    pub fn new(epsilon: f64, sigma: f64, gamma: f64, p: f64, final_time: f64) -> Self {
        Self {
            epsilon,
            sigma,
            gamma,
            p,
            final_time,
            times: Vec::new(),
            lp: Vec::new(),
            lp_accumulated: Vec::new(),
            hminus1: Vec::new(),
            hminus1_sq_sup: Vec::new(),
            grad_l2: Vec::new(),
            grad_l2_sq_accumulated: Vec::new(),
        }
    }

    /// Append a sample; integrals advance by the trapezoidal rule.
    pub fn push(&mut self, time: f64, s: &ResidualSample) {
        let (lp_int, grad_int, sup) = match self.times.last() {
            None => (0.0, 0.0, 0.0),
            Some(&t0) => {
                let n = self.times.len() - 1;
                let h = time - t0;
                let lp_prev = self.lp_accumulated[n].powf(self.p);
                (
                    lp_prev + 0.5 * h * (self.lp[n].powf(self.p) + s.lp.powf(self.p)),
                    self.grad_l2_sq_accumulated[n] + 0.5 * h * (self.grad_l2[n].powi(2) + s.grad_l2.powi(2)),
                    self.hminus1_sq_sup[n],
                )
            }
        };
        self.times.push(time);
        self.lp.push(s.lp);
        self.lp_accumulated.push(lp_int.powf(1.0 / self.p));
        self.hminus1.push(s.hminus1);
        self.hminus1_sq_sup.push(sup.max(s.hminus1 * s.hminus1));
        self.grad_l2.push(s.grad_l2);
        self.grad_l2_sq_accumulated.push(grad_int);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn sup_hminus1_sq(&self) -> f64 {
        self.hminus1_sq_sup.last().copied().unwrap_or(0.0)
    }

    pub fn stopping_time(&self) -> f64 {
        stopping_time(self, self.gamma, self.epsilon)
    }

    /// Columns `t,lp,lp_accumulated,hminus1,hminus1_sq_sup,grad_l2,grad_l2_sq_accumulated`
    /// after one `#` line with the run parameters.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# eps={} sigma={} gamma={} p={} T={} stopping_time={}; {}\n",
            self.epsilon,
            self.sigma,
            self.gamma,
            self.p,
            self.final_time,
            self.stopping_time(),
            LEADING_ORDER_CAVEAT
        );
        out.push_str("t,lp,lp_accumulated,hminus1,hminus1_sq_sup,grad_l2,grad_l2_sq_accumulated\n");
        for i in 0..self.len() {
            out.push_str(&format!(
                "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                self.times[i],
                self.lp[i],
                self.lp_accumulated[i],
                self.hminus1[i],
                self.hminus1_sq_sup[i],
                self.grad_l2[i],
                self.grad_l2_sq_accumulated[i]
            ));
        }
        out
    }
}

/// First recorded time at which the accumulated `L^p` norm exceeds
/// `eps^gamma`; the final time if it never does.
pub fn stopping_time(report: &ResidualReport, gamma: f64, epsilon: f64) -> f64 {
    let threshold = epsilon.powf(gamma);
    report
        .times
        .iter()
        .zip(&report.lp_accumulated)
        .find(|(_, &a)| a > threshold)
        .map_or(report.final_time, |(&t, _)| t.min(report.final_time))
}

/// Both sides of `||R||_p^p <= C ||grad psi||^a ||grad R||^b` with
/// `-Delta psi = R`, `a = (2p - d(p-2))/4`, `b = (d(p-2) + 2p)/4`; `rhs`
/// excludes `C`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpolationChain {
    pub lhs: f64,
    pub rhs: f64,
}

impl InterpolationChain {
    pub fn holds(&self, constant: f64) -> bool {
        self.lhs <= constant * self.rhs
    }
}

pub fn interpolation_chain(r: &SpectralField, p: f64, d: f64) -> Result<InterpolationChain> {
    let a = (2.0 * p - d * (p - 2.0)) / 4.0;
    let b = (d * (p - 2.0) + 2.0 * p) / 4.0;
    Ok(InterpolationChain {
        lhs: r.lp_norm(p)?.powf(p),
        rhs: r.hminus1_norm()?.powf(a) * r.h1_seminorm().powf(b),
    })
}

/// How residuals are sampled along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualOptions {
    pub p: f64,
    pub gamma: f64,
    /// Steps between samples.
    pub cadence: u64,
    pub mean_correction: bool,
}

/// Residual report of one trajectory started from `uA(0)`.
pub fn residual_trajectory(
    params: &SolverParams,
    spec: &ApproximationSpec,
    grid: &Arc<DomainGrid>,
    member: u64,
    options: &ResidualOptions,
) -> Result<ResidualReport> {
    let ResidualOptions {
        p,
        gamma,
        cadence,
        mean_correction,
    } = *options;
    let stepper = Stepper::new(params, grid, member)?;
    let ua0 = build_approximation(spec, grid, 0.0)?;
    let mut report = ResidualReport::new(params.epsilon, params.sigma, gamma, p, params.final_time);
    let mut failure = None;
    let static_geometry = matches!(spec.geometry, Geometry::Circle(_) | Geometry::Flat { .. });
    let mut state = stepper.state_from(ua0.u.clone());
    let total = params.steps();
    let mut observe = |state: &crate::dynamics::ChState| -> Result<()> {
        let ua = if static_geometry {
            ua0.u.clone()
        } else {
            build_approximation(spec, grid, state.time)?.u
        };
        let s = residual_norms(&state.u, &ua, p, mean_correction)?;
        report.push(state.time, &s);
        Ok(())
    };
    observe(&state)?;
    while state.step < total {
        state = stepper.step(&state)?;
        if state.step % cadence.max(1) == 0 || state.step == total {
            if let Err(e) = observe(&state) {
                failure = Some(e);
                break;
            }
        }
    }
    match failure {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

/// An `eps x sigma` ensemble study.
#[derive(Debug, Clone)]
pub struct ScalingStudy {
    pub epsilons: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub members: usize,
    pub geometry: Geometry,
    /// Template for every run; `epsilon`, `sigma` and the initial condition
    /// are overwritten.
    pub solver: SolverParams,
    pub grid: Arc<DomainGrid>,
    pub options: ResidualOptions,
    pub kappa: f64,
    pub workers: usize,
}

/// Ensemble statistics at one `(eps, sigma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub epsilon: f64,
    pub sigma: f64,
    /// Fraction of members whose stopping time equals the final time.
    pub survival_fraction: f64,
    /// Ensemble mean and 10/50/90 % quantiles of `sup_t ||R||_{H^-1}^2`.
    pub hminus1_sq_mean: f64,
    pub hminus1_sq_quantiles: [f64; 3],
    /// `eps^(p gamma - 1) + eps^(sigma + gamma - kappa)`.
    pub bound: f64,
    pub lp_accumulated_mean: f64,
    pub grad_l2_sq_accumulated_mean: f64,
    pub reports: Vec<ResidualReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingTable {
    pub rows: Vec<ScalingRow>,
    /// Smallest `C` with `mean <= C * bound` on every row.
    pub fitted_constant: f64,
    /// `(sigma, slope of log mean vs log eps)` for each sigma with two or more eps.
    pub slope_vs_epsilon: Vec<(f64, f64)>,
    /// `(eps, slope of log mean vs sigma)` for each eps with two or more sigma.
    pub slope_vs_sigma: Vec<(f64, f64)>,
}

impl ScalingTable {
    pub fn row(&self, epsilon: f64, sigma: f64) -> Option<&ScalingRow> {
        self.rows.iter().find(|r| r.epsilon == epsilon && r.sigma == sigma)
    }

    /// Columns `eps,sigma,survival_fraction,hminus1_sq_mean,q10,q50,q90,bound,bound_ratio,lp_accumulated_mean,grad_l2_sq_accumulated_mean`.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# {LEADING_ORDER_CAVEAT}\n");
        out.push_str(
            "eps,sigma,survival_fraction,hminus1_sq_mean,q10,q50,q90,bound,bound_ratio,lp_accumulated_mean,grad_l2_sq_accumulated_mean\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.6},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                r.epsilon,
                r.sigma,
                r.survival_fraction,
                r.hminus1_sq_mean,
                r.hminus1_sq_quantiles[0],
                r.hminus1_sq_quantiles[1],
                r.hminus1_sq_quantiles[2],
                r.bound,
                r.hminus1_sq_mean / r.bound,
                r.lp_accumulated_mean,
                r.grad_l2_sq_accumulated_mean
            ));
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = format!("note = {LEADING_ORDER_CAVEAT}\nfitted_constant = {:.6e}\n", self.fitted_constant);
        for (s, k) in &self.slope_vs_epsilon {
            out.push_str(&format!("slope_vs_epsilon[sigma={s}] = {k:.6}\n"));
        }
        for (e, k) in &self.slope_vs_sigma {
            out.push_str(&format!("slope_vs_sigma[eps={e}] = {k:.6}\n"));
        }
        out
    }
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Run every member at every `(eps, sigma)`. Members fan out over `workers`
/// threads and are collected in index order, so the table does not depend on
/// the worker count.
pub fn scaling_study(study: &ScalingStudy) -> Result<ScalingTable> {
    if study.members == 0 || study.epsilons.is_empty() || study.sigmas.is_empty() {
        return Err(ResidualError::Invalid("scaling study needs members, eps and sigma values".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(study.workers.max(1))
        .build()
        .map_err(|e| ResidualError::Invalid(format!("worker pool: {e}")))?;
    let mut rows = Vec::new();
    for &epsilon in &study.epsilons {
        for &sigma in &study.sigmas {
            let mut params = study.solver.clone();
            params.epsilon = epsilon;
            params.sigma = sigma;
            params.initial = InitialCondition::Profile {
                geometry: study.geometry.clone(),
            };
            let spec = ApproximationSpec::new(study.geometry.clone(), epsilon)?;
            let reports: Vec<Result<ResidualReport>> = pool.install(|| {
                (0..study.members as u64)
                    .into_par_iter()
                    .map(|member| {
                        residual_trajectory(&params, &spec, &study.grid, member, &study.options).map_err(|e| ResidualError::Member {
                            epsilon,
                            sigma,
                            member,
                            source: Box::new(e),
                        })
                    })
                    .collect()
            });
            let reports = reports.into_iter().collect::<Result<Vec<_>>>()?;
            rows.push(aggregate(epsilon, sigma, study, reports));
        }
    }
    let fitted_constant = rows.iter().map(|r| r.hminus1_sq_mean / r.bound).fold(0.0, f64::max);
    let slope_vs_epsilon = study
        .sigmas
        .iter()
        .filter(|_| study.epsilons.len() > 1)
        .map(|&s| {
            let pts: Vec<_> = rows.iter().filter(|r| r.sigma == s).collect();
            let x: Vec<f64> = pts.iter().map(|r| r.epsilon.ln()).collect();
            let y: Vec<f64> = pts.iter().map(|r| r.hminus1_sq_mean.ln()).collect();
            (s, fit_slope(&x, &y))
        })
        .collect();
    let slope_vs_sigma = study
        .epsilons
        .iter()
        .filter(|_| study.sigmas.len() > 1)
        .map(|&e| {
            let pts: Vec<_> = rows.iter().filter(|r| r.epsilon == e).collect();
            let x: Vec<f64> = pts.iter().map(|r| r.sigma).collect();
            let y: Vec<f64> = pts.iter().map(|r| r.hminus1_sq_mean.ln()).collect();
            (e, fit_slope(&x, &y))
        })
        .collect();
    Ok(ScalingTable {
        rows,
        fitted_constant,
        slope_vs_epsilon,
        slope_vs_sigma,
    })
}

fn aggregate(epsilon: f64, sigma: f64, study: &ScalingStudy, reports: Vec<ResidualReport>) -> ScalingRow {
    let o = &study.options;
    let n = reports.len() as f64;
    let mut sups: Vec<f64> = reports.iter().map(ResidualReport::sup_hminus1_sq).collect();
    let mean = sups.iter().sum::<f64>() / n;
    sups.sort_by(f64::total_cmp);
    let survivors = reports.iter().filter(|r| r.stopping_time() >= r.final_time).count();
    let last = |v: &Vec<f64>| v.last().copied().unwrap_or(0.0);
    ScalingRow {
        epsilon,
        sigma,
        survival_fraction: survivors as f64 / n,
        hminus1_sq_mean: mean,
        hminus1_sq_quantiles: [quantile(&sups, 0.1), quantile(&sups, 0.5), quantile(&sups, 0.9)],
        bound: epsilon.powf(o.p * o.gamma - 1.0) + epsilon.powf(sigma + o.gamma - study.kappa),
        lp_accumulated_mean: reports.iter().map(|r| last(&r.lp_accumulated)).sum::<f64>() / n,
        grad_l2_sq_accumulated_mean: reports.iter().map(|r| last(&r.grad_l2_sq_accumulated)).sum::<f64>() / n,
        reports,
    }
}
