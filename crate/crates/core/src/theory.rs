//! Objects from the formal matched asymptotics of the sharp-interface limit:
//! the kink profile, the surface-tension constant, the solvability condition
//! fixing the interface potential, the admissible exponent region and the
//! remainder inequality for the quartic nonlinearity.

use thiserror::Error;

use crate::spectral::{SpectralError, SpectralField};

/// Double-well potential `f(u) = (u^2 - 1)^2 / 4`.
pub fn double_well(u: f64) -> f64 {
    let s = u * u - 1.0;
    0.25 * s * s
}

/// `f'(u) = u^3 - u`.
pub fn double_well_derivative(u: f64) -> f64 {
    u * u * u - u
}

/// `f''(u) = 3u^2 - 1`.
pub fn double_well_second(u: f64) -> f64 {
    3.0 * u * u - 1.0
}

/// The heteroclinic profile `q(z) = tanh(z / sqrt 2)`.
pub fn kink(z: f64) -> f64 {
    (z * std::f64::consts::FRAC_1_SQRT_2).tanh()
}

/// Bound on `1 - |q(z)|` for `|z| >= z0`: `2 exp(-sqrt 2 z0)`.
pub fn kink_tail_bound(z0: f64) -> f64 {
    2.0 * (-std::f64::consts::SQRT_2 * z0.abs()).exp()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// The kink sampled on `[-half_width, half_width]`.
///
/// Truncating the line at `|z| = Z` neglects tails of size
/// [`kink_tail_bound`]`(Z)`; the default `Z = 20` puts that below `1e-12`.
#[derive(Debug, Clone, PartialEq)]
pub struct KinkProfile {
    half_width: f64,
    spacing: f64,
}

impl Default for KinkProfile {
    fn default() -> Self {
        Self {
            half_width: 20.0,
            spacing: 1e-3,
        }
    }
}

impl KinkProfile {
    pub fn new(half_width: f64, spacing: f64) -> Result<Self, TheoryError> {
        if !(half_width.is_finite() && half_width > 0.0 && spacing > 0.0 && spacing < half_width) {
            return Err(TheoryError::InvalidParams(format!(
                "kink grid needs 0 < spacing < half_width, got spacing={spacing}, half_width={half_width}"
            )));
        }
        Ok(Self { half_width, spacing })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn value(&self, z: f64) -> f64 {
        kink(z)
    }

    /// `q'(z) = (1 - q^2) / sqrt 2`.
    pub fn derivative(&self, z: f64) -> f64 {
        let q = kink(z);
        (1.0 - q * q) * std::f64::consts::FRAC_1_SQRT_2
    }

    /// `q''(z) = -q (1 - q^2)`.
    pub fn second_derivative(&self, z: f64) -> f64 {
        let q = kink(z);
        -q * (1.0 - q * q)
    }

    /// Even number of Simpson panels covering the truncated line.
    fn panels(&self) -> usize {
        let n = (2.0 * self.half_width / self.spacing).round() as usize;
        n + n % 2
    }

    /// Sample points of the truncated line, including both ends.
    pub fn nodes(&self) -> Vec<f64> {
        let n = self.panels();
        let h = 2.0 * self.half_width / n as f64;
        (0..=n).map(|i| -self.half_width + i as f64 * h).collect()
    }

    /// Composite Simpson rule for `g` over the truncated line.
    pub fn integrate<G: Fn(f64) -> f64>(&self, g: G) -> f64 {
        let n = self.panels();
        let h = 2.0 * self.half_width / n as f64;
        let mut acc = g(-self.half_width) + g(self.half_width);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * g(-self.half_width + i as f64 * h);
        }
        acc * h / 3.0
    }

    /// `max |q'' - f'(q)|` over the sample points.
    pub fn residual(&self) -> f64 {
        self.nodes()
            .into_iter()
            .map(|z| (self.second_derivative(z) - double_well_derivative(self.value(z))).abs())
            .fold(0.0, f64::max)
    }

    /// `lambda = 1/2 int q'(z)^2 dz`.
    pub fn surface_tension(&self) -> f64 {
        0.5 * self.integrate(|z| self.derivative(z).powi(2))
    }

    /// `int f''(q) q' dz`, which telescopes to `f'(1) - f'(-1) = 0`.
    pub fn forcing_moment(&self) -> f64 {
        self.integrate(|z| double_well_second(self.value(z)) * self.derivative(z))
    }

    /// `I(c) = int q' (c - q' H + f''(q) W) dz` for a constant correction `c`.
    pub fn solvability_residual(&self, correction: f64, curvature: f64, forcing: f64) -> f64 {
        self.integrate(|z| {
            let dq = self.derivative(z);
            dq * (correction - dq * curvature + double_well_second(self.value(z)) * forcing)
        })
    }

    /// Root of the solvability condition together with the pointwise
    /// prescription that keeps the forcing through `f''(q(0)) = -1`.
    pub fn solvability(&self, forcing: f64, curvature: f64) -> Solvability {
        // I is affine in the correction, so two evaluations locate the root.
        let i0 = self.solvability_residual(0.0, curvature, forcing);
        let i1 = self.solvability_residual(1.0, curvature, forcing);
        let root = -i0 / (i1 - i0);
        Solvability {
            root,
            pointwise: self.surface_tension() * curvature + forcing,
            forcing_contribution: forcing * self.forcing_moment(),
        }
    }
}

/// Quadrature value of the surface tension on the default grid.
pub fn surface_tension() -> f64 {
    KinkProfile::default().surface_tension()
}

/// `max |q'' - f'(q)|` on the default grid.
pub fn kink_residual() -> f64 {
    KinkProfile::default().residual()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Solvability {
    /// Constant correction annihilating the integrated condition, `lambda H`.
    pub root: f64,
    /// `lambda H + W`: the forcing survives pointwise at the interface centre.
    pub pointwise: f64,
    /// Contribution of the forcing to the integrated condition (zero up to
    /// quadrature error).
    pub forcing_contribution: f64,
}

/// Interface potential from the solvability condition for constant
/// curvature `curvature` and noise value `forcing`.
pub fn solvability_integral(forcing: f64, curvature: f64) -> Solvability {
    KinkProfile::default().solvability(forcing, curvature)
}

/// Threshold exponents for the residual estimates in dimension `d` with
/// integrability exponent `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryExponents {
    pub p: f64,
    pub d: u32,
    /// Residual exponent threshold: the estimates need `gamma > gamma_min`.
    pub gamma_min: f64,
    /// Noise exponent threshold: the estimates need `sigma > sigma_min`.
    pub sigma_min: f64,
    /// Interpolation exponent `d (1/2 - 1/p)`.
    pub sobolev_alpha: f64,
    /// Slack subtracted from the noise term of the bound.
    pub kappa: f64,
}

/// Default slack in the noise term of the residual bound.
pub const DEFAULT_KAPPA: f64 = 1e-3;

/// Default integrability exponent; `p = 3` minimizes `gamma_min` in two and
/// three dimensions.
pub const DEFAULT_P: f64 = 3.0;

impl TheoryExponents {
    /// Shared term `(2p + d(p-2)) / (2p - d(p-2)) * (p+2)/p`.
    pub fn coupling(&self) -> f64 {
        exponent_coupling(self.p, self.d as f64)
    }

    /// Comments on published values that disagree with the formulas.
    pub fn notes(&self) -> Vec<String> {
        let mut notes = Vec::new();
        if self.d == 2 && (self.p - 3.0).abs() < 1e-12 {
            notes.push(format!(
                "the threshold gamma > 6 quoted in the literature for d = 2, p = 3 does not follow from \
                 the formula, which gives gamma_min = {:.6}; sigma_min = {:.6} agrees with the quoted 23/3",
                self.gamma_min, self.sigma_min
            ));
        }
        notes
    }
}

fn exponent_coupling(p: f64, d: f64) -> f64 {
    let s = d * (p - 2.0);
    (2.0 * p + s) / (2.0 * p - s) * (p + 2.0) / p
}

/// Thresholds `gamma_min`, `sigma_min` for `p in (2, 3]`, `d in {2, 3}`.
pub fn admissible_exponents(p: f64, d: u32) -> Result<TheoryExponents, TheoryError> {
    if !(p > 2.0 && p <= 3.0) {
        return Err(TheoryError::InvalidParams(format!("p must lie in (2, 3], got {p}")));
    }
    if d != 2 && d != 3 {
        return Err(TheoryError::InvalidParams(format!("d must be 2 or 3, got {d}")));
    }
    let df = d as f64;
    if 2.0 * p - df * (p - 2.0) <= 0.0 {
        return Err(TheoryError::InvalidParams(format!(
            "2p - d(p-2) must be positive, got p={p}, d={d}"
        )));
    }
    let coupling = exponent_coupling(p, df);
    let gamma_min = (1.0 + coupling) / (p - 2.0);
    let sobolev_alpha = df * (p - 2.0) / (2.0 * p);
    if !(0.0..=1.0).contains(&sobolev_alpha) {
        return Err(TheoryError::InvalidParams(format!(
            "interpolation exponent {sobolev_alpha} outside [0, 1]"
        )));
    }
    Ok(TheoryExponents {
        p,
        d,
        gamma_min,
        sigma_min: gamma_min + coupling,
        sobolev_alpha,
        kappa: DEFAULT_KAPPA,
    })
}

/// Outcome of the remainder inequality `-eps^-1 int N R <= 3 ||uA||_inf eps^-1 ||R||_3^3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemainderCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Check the cubic Taylor remainder bound for `f'(u) = u^3 - u` at `u = uA + R`,
/// where `N(uA, R) = 3 uA R^2 + R^3`.
pub fn taylor_remainder_check(
    approximation: &SpectralField,
    residual: &SpectralField,
    epsilon: f64,
) -> Result<RemainderCheck, TheoryError> {
    if !(epsilon > 0.0) {
        return Err(TheoryError::InvalidParams(format!("epsilon must be positive, got {epsilon}")));
    }
    if !approximation.grid().same_as(residual.grid()) {
        return Err(SpectralError::GridMismatch.into());
    }
    let w = approximation.grid().cell_area();
    let mut nr = 0.0;
    let mut cube = 0.0;
    for (&a, &r) in approximation.nodal().iter().zip(residual.nodal()) {
        nr += (3.0 * a * r * r + r * r * r) * r;
        cube += r.abs().powi(3);
    }
    let lhs = -nr * w / epsilon;
    let rhs = 3.0 * approximation.max_abs() * cube * w / epsilon;
    Ok(RemainderCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-12 * rhs.abs(),
    })
}
