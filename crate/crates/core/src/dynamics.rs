//! Stochastic Cahn–Hilliard dynamics
//!
//! ```text
//! du = -Delta v dt + eps^sigma dW,   v = -f'(u)/eps + eps Delta u
//! ```
//!
//! with homogeneous Neumann data, advanced by a stabilized linearly implicit
//! Euler–Maruyama scheme in the cosine basis. Per mode `k`,
//!
//! ```text
//! (1 + dt eps mu^2 + dt (c/eps) mu) u_k^{n+1}
//!     = u_k^n - dt mu (f'(u^n) - c u^n)_k / eps + eps^sigma dW_k
//! ```
//!
//! The biharmonic term and the stabilizing `c Delta / eps` term are implicit,
//! the nonconvex part explicit. The `k = 0` coefficient never changes, so the
//! mean is conserved to round-off.

use std::sync::Arc;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{signed_distance, Geometry, GeometryError};
use crate::noise::{NoiseError, NoiseSpec, QWienerSampler};
use crate::spectral::{transform, DomainGrid, SpectralError, SpectralField};
use crate::theory::{double_well, double_well_derivative, kink};

/// Default stabilization constant, `max |f''|` on `[-1, 1]`.
pub const DEFAULT_STABILIZATION: f64 = 2.0;

/// Documented step limit as a multiple of `eps^2`; see
/// [`SolverParams::stable_dt`].
pub const STABLE_DT_FACTOR: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("non-finite values after step {step} (t = {time})")]
    BlowUp { step: u64, time: f64 },
    #[error("invalid solver parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// What the explicit part of the scheme evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    /// `f'(u) = u^3 - u`.
    #[default]
    DoubleWell,
    /// `f' = 0`: the equation becomes linear and every mode is an
    /// Ornstein–Uhlenbeck process with a closed-form law.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    Constant { value: f64 },
    /// `q(d(x) / eps)` for the signed distance `d` to the interface.
    Profile { geometry: Geometry },
    /// Independent uniform values in `[mean - amplitude, mean + amplitude]`.
    Random { mean: f64, amplitude: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub epsilon: f64,
    /// Noise strength exponent: the forcing is `eps^sigma dW`.
    pub sigma: f64,
    pub dt: f64,
    pub final_time: f64,
    pub stabilization: f64,
    pub noise_enabled: bool,
    pub noise: NoiseSpec,
    pub initial: InitialCondition,
    pub nonlinearity: Nonlinearity,
    /// Keep the cumulative Wiener path `W(t)` in every state.
    pub track_noise_path: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            epsilon: 0.04,
            sigma: 2.0,
            dt: 1e-4,
            final_time: 0.01,
            stabilization: DEFAULT_STABILIZATION,
            noise_enabled: false,
            noise: NoiseSpec::default(),
            initial: InitialCondition::Constant { value: 0.0 },
            nonlinearity: Nonlinearity::DoubleWell,
            track_noise_path: false,
        }
    }
}

impl SolverParams {
    /// Hard checks, plus a warning when the layer is under-resolved
    /// (`eps < 2 h`).
    pub fn validate(&self, grid: &DomainGrid) -> Result<Vec<String>, DynamicsError> {
        let mut problems = Vec::new();
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.epsilon) {
            problems.push(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !self.sigma.is_finite() {
            problems.push(format!("sigma must be finite, got {}", self.sigma));
        }
        if !positive(self.dt) {
            problems.push(format!("dt must be positive, got {}", self.dt));
        }
        if !positive(self.final_time) {
            problems.push(format!("final_time must be positive, got {}", self.final_time));
        }
        if !(self.stabilization.is_finite() && self.stabilization >= 0.0) {
            problems.push(format!("stabilization must be non-negative, got {}", self.stabilization));
        }
        if !problems.is_empty() {
            return Err(DynamicsError::InvalidParams(problems.join("; ")));
        }
        if self.noise_enabled {
            self.noise.validate()?;
        }
        let mut warnings = Vec::new();
        if self.epsilon < 2.0 * grid.spacing() {
            warnings.push(format!(
                "epsilon = {} is below twice the grid spacing {}; the transition layer is under-resolved",
                self.epsilon,
                grid.spacing()
            ));
        }
        if self.dt > self.stable_dt() {
            warnings.push(format!(
                "dt = {} exceeds the documented energy-stable step {}",
                self.dt,
                self.stable_dt()
            ));
        }
        Ok(warnings)
    }

    /// Step size up to which deterministic runs are documented to dissipate
    /// energy with `stabilization >= 2`: `0.5 eps^2`.
    ///
    /// The stabilized scheme is unconditionally energy stable for a potential
    /// whose second derivative is bounded by `2 c`; the quartic well is only
    /// bounded on bounded sets, and the threshold keeps overshoots of `|u|`
    /// past one small.
    pub fn stable_dt(&self) -> f64 {
        STABLE_DT_FACTOR * self.epsilon * self.epsilon
    }

    pub fn steps(&self) -> u64 {
        (self.final_time / self.dt).round().max(1.0) as u64
    }

    pub fn noise_strength(&self) -> f64 {
        self.epsilon.powf(self.sigma)
    }
}

/// The solution at one time level.
#[derive(Debug, Clone)]
pub struct ChState {
    pub time: f64,
    pub step: u64,
    pub u: SpectralField,
    /// Cosine coefficients of the cumulative path `W(t)`, without the
    /// `eps^sigma` factor, when tracked.
    pub noise_path: Option<Vec<f64>>,
}

impl ChState {
    pub fn chemical_potential(&self, epsilon: f64) -> SpectralField {
        chemical_potential(&self.u, epsilon)
    }

    pub fn energy(&self, epsilon: f64) -> f64 {
        energy(&self.u, epsilon)
    }

    pub fn mean(&self) -> f64 {
        self.u.mean()
    }
}

fn nonlinear_coefficients(u: &SpectralField) -> Vec<f64> {
    let f: Vec<f64> = u.nodal().iter().map(|&v| double_well_derivative(v)).collect();
    transform::forward(u.grid(), &f)
}

/// `v = -f'(u)/eps + eps Delta u`.
pub fn chemical_potential(u: &SpectralField, epsilon: f64) -> SpectralField {
    let grid = u.grid();
    let f = nonlinear_coefficients(u);
    let c: Vec<f64> = u
        .to_spectral()
        .iter()
        .zip(&f)
        .zip(grid.eigenvalues())
        .map(|((&uk, &fk), &mu)| -fk / epsilon - epsilon * mu * uk)
        .collect();
    SpectralField::from_spectral(grid, c).expect("finite chemical potential")
}

/// `E(u) = int eps/2 |grad u|^2 + f(u)/eps dx`; the gradient part is exact
/// in the cosine basis, the potential part uses the nodal quadrature.
pub fn energy(u: &SpectralField, epsilon: f64) -> f64 {
    let grid = u.grid();
    let gradient: f64 = u
        .to_spectral()
        .iter()
        .zip(grid.eigenvalues())
        .map(|(c, mu)| mu * c * c)
        .sum();
    let potential: f64 = u.nodal().iter().map(|&v| double_well(v)).sum::<f64>() * grid.cell_area();
    0.5 * epsilon * gradient + potential / epsilon
}

/// The initial field described by `params`.
pub fn initial_field(params: &SolverParams, grid: &Arc<DomainGrid>) -> Result<SpectralField, DynamicsError> {
    let u = match &params.initial {
        InitialCondition::Constant { value } => SpectralField::constant(grid, *value)?,
        InitialCondition::Profile { geometry } => {
            let d = signed_distance(geometry, grid)?;
            d.map_nodal(|v| kink(v / params.epsilon))?
        }
        InitialCondition::Random { mean, amplitude, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let v = (0..grid.len()).map(|_| mean + amplitude * rng.random_range(-1.0..=1.0)).collect();
            SpectralField::from_nodal(grid, v)?
        }
    };
    Ok(u)
}

/// One trajectory of the scheme on a fixed grid, for one ensemble member.
#[derive(Debug, Clone)]
pub struct Stepper {
    grid: Arc<DomainGrid>,
    params: SolverParams,
    sampler: Option<QWienerSampler>,
    member: u64,
    /// `1 + dt eps mu^2 + dt (c/eps) mu` per mode.
    denominator: Vec<f64>,
}

impl Stepper {
    pub fn new(params: &SolverParams, grid: &Arc<DomainGrid>, member: u64) -> Result<Self, DynamicsError> {
        for w in params.validate(grid)? {
            warn!("{w}");
        }
        let sampler = if params.noise_enabled {
            Some(QWienerSampler::new(&params.noise, grid)?)
        } else {
            None
        };
        let (dt, eps, c) = (params.dt, params.epsilon, params.stabilization);
        let denominator = grid
            .eigenvalues()
            .iter()
            .map(|&mu| 1.0 + dt * eps * mu * mu + dt * c / eps * mu)
            .collect();
        Ok(Self {
            grid: Arc::clone(grid),
            params: params.clone(),
            sampler,
            member,
            denominator,
        })
    }

    pub fn params(&self) -> &SolverParams {
        &self.params
    }

    pub fn grid(&self) -> &Arc<DomainGrid> {
        &self.grid
    }

    pub fn member(&self) -> u64 {
        self.member
    }

    pub fn initial_state(&self) -> Result<ChState, DynamicsError> {
        Ok(self.state_from(initial_field(&self.params, &self.grid)?))
    }

    /// A state at `t = 0` holding `u`.
    pub fn state_from(&self, u: SpectralField) -> ChState {
        ChState {
            time: 0.0,
            step: 0,
            u,
            noise_path: self.params.track_noise_path.then(|| vec![0.0; self.grid.len()]),
        }
    }

    pub fn step(&self, state: &ChState) -> Result<ChState, DynamicsError> {
        let p = &self.params;
        let (dt, eps, c) = (p.dt, p.epsilon, p.stabilization);
        let mu = self.grid.eigenvalues();
        let current = state.u.to_spectral();
        let mut next = current.to_vec();

        match p.nonlinearity {
            Nonlinearity::DoubleWell => {
                let f = nonlinear_coefficients(&state.u);
                for k in 1..next.len() {
                    next[k] -= dt * mu[k] * (f[k] - c * current[k]) / eps;
                }
            }
            Nonlinearity::Linear => {
                for k in 1..next.len() {
                    next[k] += dt * mu[k] * c * current[k] / eps;
                }
            }
        }

        let mut path = state.noise_path.clone();
        if let Some(sampler) = &self.sampler {
            let mut dw = vec![0.0; next.len()];
            sampler.fill_increment(self.member, state.step, dt, &mut dw);
            let strength = p.noise_strength();
            for k in 1..next.len() {
                next[k] += strength * dw[k];
            }
            if let Some(w) = path.as_mut() {
                for (acc, d) in w.iter_mut().zip(&dw) {
                    *acc += d;
                }
            }
        }

        for k in 1..next.len() {
            next[k] /= self.denominator[k];
        }
        let step = state.step + 1;
        let time = step as f64 * dt;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::BlowUp { step, time });
        }
        let u = SpectralField::from_spectral(&self.grid, next)?;
        Ok(ChState {
            time,
            step,
            u,
            noise_path: path,
        })
    }

    /// Advance `state` by `n` steps.
    pub fn advance(&self, mut state: ChState, n: u64) -> Result<ChState, DynamicsError> {
        for _ in 0..n {
            state = self.step(&state)?;
        }
        Ok(state)
    }

    /// Run from the configured initial condition to the final time, calling
    /// `observe` on the initial state, every `cadence`-th state and the final
    /// one.
    pub fn run_with<F>(&self, cadence: u64, mut observe: F) -> Result<ChState, DynamicsError>
    where
        F: FnMut(&ChState),
    {
        let cadence = cadence.max(1);
        let total = self.params.steps();
        let mut state = self.initial_state()?;
        observe(&state);
        while state.step < total {
            state = self.step(&state)?;
            if state.step % cadence == 0 || state.step == total {
                observe(&state);
            }
        }
        Ok(state)
    }
}

/// States at the requested cadence, initial and final ones included.
pub fn run(params: &SolverParams, grid: &Arc<DomainGrid>, member: u64, cadence: u64) -> Result<Vec<ChState>, DynamicsError> {
    let stepper = Stepper::new(params, grid, member)?;
    let mut out = Vec::new();
    stepper.run_with(cadence, |s| out.push(s.clone()))?;
    Ok(out)
}

/// Consistency of one step with the random PDE `d/dt (u - eps^sigma W) = -Delta v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathConsistency {
    /// H^-1 norm of `(w^{n+1} - w^n) + dt Delta v(u^n)` with `w = u - eps^sigma W`.
    pub defect: f64,
    /// H^-1 norm of `dt Delta v(u^n)`.
    pub reference: f64,
}

impl PathConsistency {
    pub fn relative(&self) -> f64 {
        if self.reference == 0.0 {
            self.defect
        } else {
            self.defect / self.reference
        }
    }
}

/// Compare consecutive states, both carrying the noise path, against the
/// explicit evaluation of `-Delta v` at the earlier one. The defect is
/// first order in `dt`.
pub fn path_consistency(before: &ChState, after: &ChState, params: &SolverParams) -> Result<PathConsistency, DynamicsError> {
    let (Some(w0), Some(w1)) = (&before.noise_path, &after.noise_path) else {
        return Err(DynamicsError::InvalidParams("noise path tracking is off".into()));
    };
    let grid = before.u.grid();
    let dt = after.time - before.time;
    let strength = params.noise_strength();
    let v = chemical_potential(&before.u, params.epsilon);
    let mu = grid.eigenvalues();
    let (a, b) = (before.u.to_spectral(), after.u.to_spectral());
    let (mut defect, mut reference) = (0.0, 0.0);
    for k in 1..grid.len() {
        // -Delta v has coefficient mu v_k
        let drift = dt * mu[k] * v.to_spectral()[k];
        let change = (b[k] - strength * w1[k]) - (a[k] - strength * w0[k]);
        defect += (change - drift).powi(2) / mu[k];
        reference += drift * drift / mu[k];
    }
    Ok(PathConsistency {
        defect: defect.sqrt(),
        reference: reference.sqrt(),
    })
}
