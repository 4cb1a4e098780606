//! Reduced reference solutions of the limiting free-boundary problem
//!
//! ```text
//! Delta v = 0 off Gamma,   v = lambda H (+ W) on Gamma,   V = (d_n v+ - d_n v-) / 2
//! ```
//!
//! in the unbounded plane: the stationary circle, the linearized dynamics of
//! angular perturbation modes of a circle, their Ornstein–Uhlenbeck reduction
//! under noise, and a quasi-static monopole model of two circles.
//!
//! Signs follow the phase-field conventions of this crate: the `+` phase is
//! inside, the mean curvature is `H = Delta d`, so a circle of radius `R` has
//! `H = -1/R` and interface potential `-lambda / R`. The far-field Neumann
//! condition of the bounded problem is not represented.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::geometry::Disk;
use crate::spectral::DomainGrid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeleShawError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("mode {0} has no stationary law; only k >= 2 relax")]
    NeutralMode(usize),
}

/// Circles of the `+` phase in the plane.
#[derive(Debug, Clone, PartialEq)]
pub struct CircleConfig {
    pub circles: Vec<Disk>,
}

impl CircleConfig {
    pub fn new(circles: Vec<Disk>) -> Result<Self, HeleShawError> {
        for (i, c) in circles.iter().enumerate() {
            if !(c.radius.is_finite() && c.radius > 0.0) {
                return Err(HeleShawError::InvalidConfig(format!("circle {i} has radius {}", c.radius)));
            }
            for (j, d) in circles.iter().enumerate().skip(i + 1) {
                let gap = (c.center[0] - d.center[0]).hypot(c.center[1] - d.center[1]);
                if gap <= c.radius + d.radius {
                    return Err(HeleShawError::InvalidConfig(format!("circles {i} and {j} intersect")));
                }
            }
        }
        Ok(Self { circles })
    }

    pub fn total_area(&self) -> f64 {
        self.circles.iter().map(Disk::area).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryCircle {
    /// Potential on (and, being harmonic and constant, on both sides of) the circle.
    pub potential: f64,
    pub velocity: f64,
}

/// A single circle is an equilibrium: `v = -lambda / R` everywhere, no flux.
pub fn stationary_circle_check(config: &CircleConfig, lambda: f64) -> Result<StationaryCircle, HeleShawError> {
    if config.circles.len() != 1 {
        return Err(HeleShawError::InvalidConfig(format!(
            "a stationary check needs exactly one circle, got {}",
            config.circles.len()
        )));
    }
    Ok(StationaryCircle {
        potential: -lambda / config.circles[0].radius,
        velocity: 0.0,
    })
}

/// Linearized evolution of the angular mode `k` of a circle of radius `R`:
/// `d delta = rate delta dt + noise_loading d beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeDynamics {
    pub radius: f64,
    pub k: usize,
    /// Growth rate `s_k` (negative for relaxing modes).
    pub rate: f64,
    pub noise_loading: f64,
}

impl ModeDynamics {
    /// `b_k^2 / (2 |s_k|)`.
    pub fn stationary_variance(&self) -> Option<f64> {
        (self.rate < 0.0).then(|| self.noise_loading.powi(2) / (2.0 * self.rate.abs()))
    }

    /// Relaxation time `1 / |s_k|`.
    pub fn relaxation_time(&self) -> Option<f64> {
        (self.rate < 0.0).then(|| 1.0 / self.rate.abs())
    }
}

/// `s_k = -lambda k (k^2 - 1) / R^3` for `k >= 1`, `s_0 = 0`.
pub fn mode_rate(radius: f64, lambda: f64, k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let k = k as f64;
    -lambda * k * (k * k - 1.0) / radius.powi(3)
}

/// Mode rates for `k = 0..=k_max`.
pub fn linearized_mode_rates(radius: f64, lambda: f64, k_max: usize) -> Result<Vec<ModeDynamics>, HeleShawError> {
    if !(radius > 0.0 && lambda > 0.0) {
        return Err(HeleShawError::InvalidConfig(format!(
            "radius and surface tension must be positive, got R={radius}, lambda={lambda}"
        )));
    }
    Ok((0..=k_max)
        .map(|k| ModeDynamics {
            radius,
            k,
            rate: mode_rate(radius, lambda, k),
            noise_loading: 0.0,
        })
        .collect())
}

/// Rate of mode `k` from the perturbed boundary itself, independent of the
/// closed form: the exact curvature of `r = R + delta cos k theta` is
/// projected on `cos k theta`, the resulting boundary potential is extended
/// harmonically inside (`(r/R)^k`) and outside (`(R/r)^k`), and the normal
/// velocity from the flux jump is divided by `delta`. The quotient is even
/// in `delta`; three amplitudes are combined by Richardson extrapolation to
/// remove the `delta^2` and `delta^4` terms.
pub fn boundary_mode_rate(radius: f64, lambda: f64, k: usize) -> f64 {
    let rate_at = |delta: f64| {
        let n = 4096;
        let kf = k as f64;
        let mut proj = 0.0;
        for i in 0..n {
            let th = 2.0 * PI * i as f64 / n as f64;
            let r = radius + delta * (kf * th).cos();
            let dr = -delta * kf * (kf * th).sin();
            let ddr = -delta * kf * kf * (kf * th).cos();
            let kappa = (r * r + 2.0 * dr * dr - r * ddr) / (r * r + dr * dr).powf(1.5);
            // v = lambda H = -lambda kappa
            proj += -lambda * kappa * (kf * th).cos();
        }
        let coefficient = 2.0 * proj / n as f64;
        // Inside: c (r/R)^k, radial derivative c k / R; outside c (R/r)^k,
        // derivative -c k / R. V = (d_r v_in - d_r v_out) / 2.
        let inner = coefficient * kf / radius;
        let outer = -coefficient * kf / radius;
        0.5 * (inner - outer) / delta
    };
    let h = 1e-2 * radius / (k * k).max(1) as f64;
    let (a, b, c) = (rate_at(h), rate_at(h / 2.0), rate_at(h / 4.0));
    let (ab, bc) = ((4.0 * b - a) / 3.0, (4.0 * c - b) / 3.0);
    (16.0 * bc - ab) / 15.0
}

/// Ornstein–Uhlenbeck reduction of mode `k` forced through the interface
/// potential: `b_k = (k / R) q_k`, where `q_k` is the diffusion coefficient
/// of the `k`-th angular Fourier component of the noise on the circle.
pub fn stochastic_mode_ou(radius: f64, lambda: f64, k: usize, projection: f64) -> Result<ModeDynamics, HeleShawError> {
    if k < 2 {
        return Err(HeleShawError::NeutralMode(k));
    }
    let mut m = linearized_mode_rates(radius, lambda, k)?[k];
    m.noise_loading = k as f64 / radius * projection;
    Ok(m)
}

/// Euler–Maruyama path of a mode SDE started at zero; returns the sample
/// variance of the path after discarding `burn_in` steps.
pub fn simulate_mode_variance(mode: &ModeDynamics, dt: f64, steps: usize, burn_in: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sdt = dt.sqrt();
    let mut x = 0.0;
    let (mut sum, mut sum2, mut n) = (0.0, 0.0, 0usize);
    for i in 0..steps {
        let xi: f64 = StandardNormal.sample(&mut rng);
        x += mode.rate * x * dt + mode.noise_loading * sdt * xi;
        if i >= burn_in {
            sum += x;
            sum2 += x * x;
            n += 1;
        }
    }
    let mean = sum / n as f64;
    sum2 / n as f64 - mean * mean
}

/// Diffusion coefficients `(cos, sin)` of the `k`-th angular Fourier
/// component of `W` restricted to the circle `center + radius e_theta`, for
/// noise coefficients `alpha` on `grid`.
///
/// Each eigenfunction is projected by quadrature in `theta`; independent
/// modes add in quadrature.
pub fn angular_noise_loading(alpha: &[f64], grid: &DomainGrid, center: [f64; 2], radius: f64, k: usize) -> (f64, f64) {
    let n = 512;
    let kf = k as f64;
    let mut var = (0.0, 0.0);
    for ky in 0..grid.ny() {
        for kx in 0..grid.nx() {
            let a = alpha[grid.index(kx, ky)];
            if a == 0.0 {
                continue;
            }
            let (mut pc, mut ps) = (0.0, 0.0);
            for i in 0..n {
                let th = 2.0 * PI * i as f64 / n as f64;
                let e = grid.eigenfunction(kx, ky, center[0] + radius * th.cos(), center[1] + radius * th.sin());
                pc += e * (kf * th).cos();
                ps += e * (kf * th).sin();
            }
            let norm = if k == 0 { 1.0 } else { 2.0 } / n as f64;
            var.0 += (a * pc * norm).powi(2);
            var.1 += (a * ps * norm).powi(2);
        }
    }
    (var.0.sqrt(), var.1.sqrt())
}

/// A circle shrank below the collapse radius. The trajectory stops at the
/// last step before the event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollapseEvent {
    pub time: f64,
    pub circle: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonopoleTrajectory {
    pub times: Vec<f64>,
    pub radii: Vec<[f64; 2]>,
    pub collapse: Option<CollapseEvent>,
}

impl MonopoleTrajectory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,r1,r2\n");
        for (t, r) in self.times.iter().zip(&self.radii) {
            out.push_str(&format!("{t:.12e},{:.12e},{:.12e}\n", r[0], r[1]));
        }
        out
    }
}

/// Monopole strengths `m_i` with `v(x) ~ sum_j m_j log|x - c_j| + C`
/// matching the interface potential `-lambda / R_i` on each circle and
/// `m_1 + m_2 = 0`.
pub fn monopole_strengths(radii: [f64; 2], separation: f64, lambda: f64) -> [f64; 2] {
    // m (log R1 - log d) - m (log R2 - log d) ... with m2 = -m1 = -m:
    // v1 - v2 = m log(R1 R2 / d^2) = -lambda/R1 + lambda/R2.
    let m = (lambda / radii[1] - lambda / radii[0]) / (radii[0] * radii[1] / (separation * separation)).ln();
    [m, -m]
}

/// Quasi-static two-circle coarsening. Areas are integrated with RK4 under
/// `dA_i/dt = -pi m_i`, i.e. `dR_i/dt = -m_i / (2 R_i)`; since the strengths
/// sum to zero the total area is conserved by every stage.
pub fn two_circle_monopole(
    config: &CircleConfig,
    lambda: f64,
    dt: f64,
    final_time: f64,
    collapse_radius: f64,
) -> Result<MonopoleTrajectory, HeleShawError> {
    let [a, b] = match config.circles.as_slice() {
        [a, b] => [*a, *b],
        other => {
            return Err(HeleShawError::InvalidConfig(format!("two circles expected, got {}", other.len())));
        }
    };
    let d = (a.center[0] - b.center[0]).hypot(a.center[1] - b.center[1]);
    if d < 4.0 * a.radius.max(b.radius) {
        return Err(HeleShawError::InvalidConfig(format!(
            "separation {d} is below four times the larger radius"
        )));
    }
    if !(dt > 0.0 && final_time > 0.0) {
        return Err(HeleShawError::InvalidConfig("dt and final time must be positive".into()));
    }
    let radius = |area: f64| (area.max(0.0) / PI).sqrt();
    let rhs = |areas: [f64; 2]| -> [f64; 2] {
        let m = monopole_strengths([radius(areas[0]), radius(areas[1])], d, lambda);
        [-PI * m[0], -PI * m[1]]
    };
    let mut areas = [a.area(), b.area()];
    let mut out = MonopoleTrajectory {
        times: vec![0.0],
        radii: vec![[a.radius, b.radius]],
        collapse: None,
    };
    let steps = (final_time / dt).round() as usize;
    for step in 1..=steps {
        let k1 = rhs(areas);
        let k2 = rhs([areas[0] + 0.5 * dt * k1[0], areas[1] + 0.5 * dt * k1[1]]);
        let k3 = rhs([areas[0] + 0.5 * dt * k2[0], areas[1] + 0.5 * dt * k2[1]]);
        let k4 = rhs([areas[0] + dt * k3[0], areas[1] + dt * k3[1]]);
        for i in 0..2 {
            areas[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let t = step as f64 * dt;
        let r = [radius(areas[0]), radius(areas[1])];
        if r.iter().any(|&r| r <= collapse_radius || !r.is_finite()) {
            // The vanishing circle drives the strengths to infinity, which
            // can spoil the other radius within the same step.
            let prev = out.radii.last().expect("initial radii");
            let circle = usize::from(prev[1] < prev[0]);
            out.collapse = Some(CollapseEvent { time: t, circle });
            break;
        }
        out.times.push(t);
        out.radii.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::surface_tension;

    #[test]
    fn single_circle_is_stationary() {
        let lambda = surface_tension();
        let c = CircleConfig::new(vec![Disk::new([0.5, 0.5], 0.25)]).unwrap();
        let s = stationary_circle_check(&c, lambda).unwrap();
        assert!((s.potential.abs() - 4.0 * std::f64::consts::SQRT_2 / 3.0).abs() < 1e-10);
        assert!(s.potential < 0.0);
        assert_eq!(s.velocity, 0.0);
        let two = CircleConfig::new(vec![Disk::new([0.2, 0.5], 0.1), Disk::new([0.7, 0.5], 0.1)]).unwrap();
        assert!(stationary_circle_check(&two, lambda).is_err());
        // Concentric radii do not form a valid configuration at all.
        assert!(CircleConfig::new(vec![Disk::new([0.5, 0.5], 0.1), Disk::new([0.5, 0.5], 0.2)]).is_err());
    }

    #[test]
    fn mode_rates() {
        let lambda = surface_tension();
        let m = linearized_mode_rates(0.25, lambda, 8).unwrap();
        assert_eq!(m[0].rate, 0.0);
        assert_eq!(m[1].rate, 0.0);
        assert!((m[2].rate - -181.0193359837562).abs() < 1e-9, "{}", m[2].rate);
        assert!(m[2..].iter().all(|d| d.rate < 0.0));
    }

    #[test]
    fn rates_match_boundary_computation() {
        let lambda = surface_tension();
        for r in [0.1, 0.25, 0.4] {
            for k in 1..=8 {
                let a = mode_rate(r, lambda, k);
                let b = boundary_mode_rate(r, lambda, k);
                assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "R={r} k={k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn ou_reference_values() {
        let lambda = surface_tension();
        assert_eq!(stochastic_mode_ou(0.25, lambda, 2, 0.0).unwrap().stationary_variance(), Some(0.0));
        let one = stochastic_mode_ou(0.25, lambda, 2, 1.0).unwrap();
        assert!((one.stationary_variance().unwrap() - 0.17677669529663687).abs() < 1e-9);
        let two = stochastic_mode_ou(0.25, lambda, 2, 2.0).unwrap();
        assert!((two.stationary_variance().unwrap() / one.stationary_variance().unwrap() - 4.0).abs() < 1e-12);
        assert!(matches!(stochastic_mode_ou(0.25, lambda, 1, 1.0), Err(HeleShawError::NeutralMode(1))));
    }

    #[test]
    fn euler_maruyama_matches_stationary_variance() {
        let m = stochastic_mode_ou(0.25, surface_tension(), 2, 1.0).unwrap();
        let tau = m.relaxation_time().unwrap();
        let dt = 0.02 * tau;
        let v = simulate_mode_variance(&m, dt, 2_000_000, 5000, 4);
        let exact = m.stationary_variance().unwrap();
        assert!((v / exact - 1.0).abs() < 0.05, "{v} vs {exact}");
        // Short run: 1e5 steps spanning 5000 relaxation times.
        let short = simulate_mode_variance(&m, 0.05 * tau, 100_000, 1000, 11);
        assert!((short / exact - 1.0).abs() < 0.05, "{short} vs {exact}");
    }

    #[test]
    fn equal_circles_do_not_ripen() {
        let c = CircleConfig::new(vec![Disk::new([0.25, 0.5], 0.1), Disk::new([0.75, 0.5], 0.1)]).unwrap();
        let t = two_circle_monopole(&c, surface_tension(), 1e-4, 0.05, 1e-3).unwrap();
        for r in &t.radii {
            assert_eq!(*r, [0.1, 0.1]);
        }
    }

    #[test]
    fn larger_circle_grows_until_collapse() {
        let c = CircleConfig::new(vec![Disk::new([0.2, 0.5], 0.1), Disk::new([0.8, 0.5], 0.07)]).unwrap();
        let t = two_circle_monopole(&c, surface_tension(), 1e-5, 1.0, 5e-3).unwrap();
        for w in t.radii.windows(2) {
            assert!(w[1][0] > w[0][0]);
            assert!(w[1][1] < w[0][1]);
        }
        let ev = t.collapse.expect("the small circle vanishes");
        assert_eq!(ev.circle, 1);
        let a0 = c.total_area();
        for r in &t.radii {
            let a = PI * (r[0] * r[0] + r[1] * r[1]);
            assert!((a - a0).abs() <= 1e-10 * a0);
        }
        // fine-dt self-convergence of the collapse time
        let fine = two_circle_monopole(&c, surface_tension(), 5e-6, 1.0, 5e-3).unwrap();
        assert!((fine.collapse.unwrap().time - ev.time).abs() < 2e-5);
    }

    #[test]
    fn monopole_model_is_translation_invariant() {
        let a = CircleConfig::new(vec![Disk::new([0.2, 0.5], 0.1), Disk::new([0.8, 0.5], 0.07)]).unwrap();
        let b = CircleConfig::new(vec![Disk::new([1.2, -0.3], 0.1), Disk::new([1.8, -0.3], 0.07)]).unwrap();
        let lambda = surface_tension();
        let ta = two_circle_monopole(&a, lambda, 1e-4, 0.02, 1e-3).unwrap();
        let tb = two_circle_monopole(&b, lambda, 1e-4, 0.02, 1e-3).unwrap();
        assert_eq!(ta.radii, tb.radii);
        let close = CircleConfig::new(vec![Disk::new([0.3, 0.5], 0.1), Disk::new([0.6, 0.5], 0.07)]).unwrap();
        assert!(two_circle_monopole(&close, lambda, 1e-4, 0.02, 1e-3).is_err());
    }

    #[test]
    fn noise_loading_of_a_single_mode() {
        let g = DomainGrid::unit_square(16).unwrap();
        let mut alpha = vec![0.0; g.len()];
        alpha[g.index(2, 0)] = 1.0;
        let (c, s) = angular_noise_loading(&alpha, &g, [0.5, 0.5], 0.25, 2);
        // e_(2,0) = sqrt 2 cos(2 pi x); at x = 1/2 + R cos(theta) this is
        // -sqrt 2 cos(2 pi R cos theta), whose cos 2 theta coefficient is 2 sqrt 2 J_2(2 pi R).
        let z = 2.0 * PI * 0.25;
        let j2 = bessel_j2(z);
        assert!((c - 2.0 * 2f64.sqrt() * j2.abs()).abs() < 1e-10, "{c}");
        assert!(s < 1e-12);
    }

    /// Power series oracle for `J_2`.
    fn bessel_j2(z: f64) -> f64 {
        let mut term = (z / 2.0).powi(2) / 2.0;
        let mut sum = term;
        for m in 1..40 {
            term *= -(z / 2.0).powi(2) / (m as f64 * (m + 2) as f64);
            sum += term;
        }
        sum
    }
}
