//! Mass-free Q-Wiener noise in the Neumann cosine basis.
//!
//! The process is `W(t) = sum_k alpha_k beta_k(t) e_k` with independent
//! Brownian motions `beta_k` and `alpha_(0,0) = 0`, so every increment has
//! zero spatial mean. The canonical spectrum is the power law
//! `alpha_k = a (1 + |k|^2)^(-r/2)` in the integer mode index `k = (kx, ky)`;
//! an explicit table of `(kx, ky, alpha)` entries may replace it.
//!
//! Increments are drawn from a ChaCha stream keyed by
//! `(seed, ensemble member, step)`; within one increment the standard normals
//! are consumed in spectral-layout order, one per mode `k != 0`. The same key
//! therefore always reproduces the same increment, whatever thread asks.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::{DomainGrid, SpectralField};

/// Shell-ratio threshold above which a trace sum is reported as divergent.
///
/// For a spectrum whose terms decay like `|k|^(-2 - 2 beta)` in two
/// dimensions the dyadic shell sums shrink by `2^(-2 beta)`; a logarithmically
/// divergent sum keeps a ratio near one. `0.75` separates the two regimes for
/// `beta` above roughly `0.2`.
pub const DIVERGENCE_RATIO: f64 = 0.75;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("noise amplitude must be positive and finite, got {0}")]
    InvalidAmplitude(f64),
    #[error("noise decay exponent must be non-negative and finite, got {0}")]
    InvalidDecay(f64),
    #[error("coefficient for mode ({kx}, {ky}) must be finite and non-negative, got {alpha}")]
    InvalidCoefficient { kx: usize, ky: usize, alpha: f64 },
    #[error("the (0, 0) mode carries mass and must have zero amplitude")]
    MassMode,
    #[error("mode ({kx}, {ky}) is not resolved by a {nx}x{ny} grid")]
    UnresolvedMode { kx: usize, ky: usize, nx: usize, ny: usize },
    #[error("truncation radius must be positive, got {0}")]
    InvalidTruncation(f64),
}

/// One entry of an explicit coefficient table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeCoefficient {
    pub kx: usize,
    pub ky: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// `a` in `alpha_k = a (1 + |k|^2)^(-r/2)`.
    pub amplitude: f64,
    /// `r` in `alpha_k = a (1 + |k|^2)^(-r/2)`.
    pub decay: f64,
    /// Explicit table replacing the power law; unlisted modes get zero.
    pub modes: Option<Vec<ModeCoefficient>>,
    pub seed: u64,
    /// Radius `K_max` in index space; modes with `|k| > K_max` are dropped.
    /// `None` keeps every mode the grid resolves.
    pub truncation: Option<f64>,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            decay: 1.0,
            modes: None,
            seed: 0,
            truncation: None,
        }
    }
}

impl NoiseSpec {
    pub fn power_law(amplitude: f64, decay: f64, seed: u64) -> Self {
        Self {
            amplitude,
            decay,
            modes: None,
            seed,
            truncation: None,
        }
    }

    pub fn table(modes: Vec<ModeCoefficient>, seed: u64) -> Self {
        Self {
            modes: Some(modes),
            seed,
            ..Self::default()
        }
    }

    /// No noise at all.
    pub fn zero() -> Self {
        Self::table(Vec::new(), 0)
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        if !(self.amplitude.is_finite() && self.amplitude > 0.0) {
            return Err(NoiseError::InvalidAmplitude(self.amplitude));
        }
        if !(self.decay.is_finite() && self.decay >= 0.0) {
            return Err(NoiseError::InvalidDecay(self.decay));
        }
        if let Some(k) = self.truncation {
            if !(k.is_finite() && k > 0.0) {
                return Err(NoiseError::InvalidTruncation(k));
            }
        }
        for m in self.modes.iter().flatten() {
            if !(m.alpha.is_finite() && m.alpha >= 0.0) {
                return Err(NoiseError::InvalidCoefficient {
                    kx: m.kx,
                    ky: m.ky,
                    alpha: m.alpha,
                });
            }
            if m.kx == 0 && m.ky == 0 && m.alpha != 0.0 {
                return Err(NoiseError::MassMode);
            }
        }
        Ok(())
    }

    /// `alpha_k` for every mode of `grid`, in spectral layout.
    pub fn coefficients(&self, grid: &DomainGrid) -> Result<Vec<f64>, NoiseError> {
        self.validate()?;
        let (nx, ny) = (grid.nx(), grid.ny());
        let mut alpha = vec![0.0; nx * ny];
        match &self.modes {
            Some(table) => {
                for m in table {
                    if m.kx >= nx || m.ky >= ny {
                        return Err(NoiseError::UnresolvedMode {
                            kx: m.kx,
                            ky: m.ky,
                            nx,
                            ny,
                        });
                    }
                    alpha[grid.index(m.kx, m.ky)] = m.alpha;
                }
            }
            None => {
                for ky in 0..ny {
                    for kx in 0..nx {
                        let k2 = (kx * kx + ky * ky) as f64;
                        alpha[grid.index(kx, ky)] =
                            self.amplitude * (1.0 + k2).powf(-0.5 * self.decay);
                    }
                }
            }
        }
        if let Some(kmax) = self.truncation {
            for ky in 0..ny {
                for kx in 0..nx {
                    if ((kx * kx + ky * ky) as f64).sqrt() > kmax {
                        alpha[grid.index(kx, ky)] = 0.0;
                    }
                }
            }
        }
        alpha[0] = 0.0;
        Ok(alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convergence {
    Finite,
    Divergent,
}

/// Truncated trace with the dyadic-shell convergence verdict.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEstimate {
    /// Partial sum over `|k| <= K_max`.
    pub value: f64,
    /// Partial sums at `K_max / 2` and `K_max / 4`.
    pub half: f64,
    pub quarter: f64,
    /// `(S(K) - S(K/2)) / (S(K/2) - S(K/4))`, zero when both shells vanish.
    pub shell_ratio: f64,
    pub verdict: Convergence,
}

impl TraceEstimate {
    fn from_partial_sums(value: f64, half: f64, quarter: f64) -> Self {
        let outer = value - half;
        let inner = half - quarter;
        let shell_ratio = if outer == 0.0 {
            0.0
        } else if inner == 0.0 {
            f64::INFINITY
        } else {
            outer / inner
        };
        let verdict = if shell_ratio > DIVERGENCE_RATIO {
            Convergence::Divergent
        } else {
            Convergence::Finite
        };
        Self {
            value,
            half,
            quarter,
            shell_ratio,
            verdict,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceDiagnostics {
    /// `trace(Q) = sum alpha_k^2`.
    pub trace_q: TraceEstimate,
    /// `trace((-Delta)^-1 Q) = sum alpha_k^2 / mu_k`.
    pub trace_invlap_q: TraceEstimate,
    pub k_max: f64,
}

/// Truncated traces of `Q` and `(-Delta)^-1 Q` with a convergence verdict.
///
/// `K_max` is [`NoiseSpec::truncation`], or `min(nx, ny) - 1` so that the
/// full disk of radius `K_max` is resolved.
pub fn trace_diagnostics(spec: &NoiseSpec, grid: &DomainGrid) -> Result<TraceDiagnostics, NoiseError> {
    let alpha = spec.coefficients(grid)?;
    let k_max = spec
        .truncation
        .unwrap_or((grid.nx().min(grid.ny()) - 1) as f64)
        .min((grid.nx().min(grid.ny()) - 1) as f64);
    let mu = grid.eigenvalues();
    let mut q = [0.0; 3];
    let mut inv = [0.0; 3];
    let radii = [k_max, k_max / 2.0, k_max / 4.0];
    for ky in 0..grid.ny() {
        for kx in 0..grid.nx() {
            if kx == 0 && ky == 0 {
                continue;
            }
            let n = grid.index(kx, ky);
            let r = ((kx * kx + ky * ky) as f64).sqrt();
            let a2 = alpha[n] * alpha[n];
            for (s, &radius) in radii.iter().enumerate() {
                if r <= radius {
                    q[s] += a2;
                    inv[s] += a2 / mu[n];
                }
            }
        }
    }
    Ok(TraceDiagnostics {
        trace_q: TraceEstimate::from_partial_sums(q[0], q[1], q[2]),
        trace_invlap_q: TraceEstimate::from_partial_sums(inv[0], inv[1], inv[2]),
        k_max,
    })
}

/// Counter-keyed generator of Q-Wiener increments on a fixed grid.
#[derive(Debug, Clone)]
pub struct QWienerSampler {
    grid: Arc<DomainGrid>,
    alpha: Vec<f64>,
    seed: u64,
}

impl QWienerSampler {
    pub fn new(spec: &NoiseSpec, grid: &Arc<DomainGrid>) -> Result<Self, NoiseError> {
        Ok(Self {
            alpha: spec.coefficients(grid)?,
            grid: Arc::clone(grid),
            seed: spec.seed,
        })
    }

    pub fn grid(&self) -> &Arc<DomainGrid> {
        &self.grid
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_silent(&self) -> bool {
        self.alpha.iter().all(|&a| a == 0.0)
    }

    fn stream(&self, member: u64, step: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&member.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(step);
        rng
    }

    /// Write the coefficients `alpha_k sqrt(dt) xi_k` of the increment for
    /// `(member, step)` into `out`.
    pub fn fill_increment(&self, member: u64, step: u64, dt: f64, out: &mut [f64]) {
        assert!(dt > 0.0, "time step must be positive");
        assert_eq!(out.len(), self.alpha.len());
        let sdt = dt.sqrt();
        let mut rng = self.stream(member, step);
        out[0] = 0.0;
        for (o, a) in out.iter_mut().zip(&self.alpha).skip(1) {
            let xi: f64 = StandardNormal.sample(&mut rng);
            *o = a * sdt * xi;
        }
    }

    /// The increment `W(t + dt) - W(t)` for `(member, step)`. The `eps^sigma`
    /// strength is applied by the caller.
    pub fn sample_increment(&self, member: u64, step: u64, dt: f64) -> SpectralField {
        let mut c = vec![0.0; self.alpha.len()];
        self.fill_increment(member, step, dt, &mut c);
        SpectralField::from_spectral(&self.grid, c).expect("finite noise increment")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Arc<DomainGrid> {
        DomainGrid::unit_square(n).unwrap()
    }

    /// Independent partial sums over the square k in {0..K}^2 \ {0}.
    fn brute_force_invlap(decay: f64, k: usize) -> f64 {
        let pi2 = std::f64::consts::PI.powi(2);
        let mut s = 0.0;
        for kx in 0..=k {
            for ky in 0..=k {
                if kx + ky == 0 {
                    continue;
                }
                let k2 = (kx * kx + ky * ky) as f64;
                s += (1.0 + k2).powf(-decay) / (pi2 * k2);
            }
        }
        s
    }

    #[test]
    fn white_noise_trace_diverges_in_two_dimensions() {
        // The oracle sums grow like log K: equal increments per doubling.
        let s: Vec<f64> = [8, 16, 32, 64].iter().map(|&k| brute_force_invlap(0.0, k)).collect();
        let d1 = s[2] - s[1];
        let d2 = s[3] - s[2];
        assert!(d2 > 0.9 * d1, "{d1} {d2}");

        let diag = trace_diagnostics(&NoiseSpec::power_law(1.0, 0.0, 0), &grid(128)).unwrap();
        assert_eq!(diag.trace_invlap_q.verdict, Convergence::Divergent);
        assert!(diag.trace_invlap_q.value > diag.trace_invlap_q.half);
        assert_eq!(diag.trace_q.verdict, Convergence::Divergent);
    }

    #[test]
    fn decay_one_makes_invlap_trace_finite() {
        let s: Vec<f64> = [8, 16, 32, 64].iter().map(|&k| brute_force_invlap(1.0, k)).collect();
        assert!((s[3] - s[2]) < 0.3 * (s[2] - s[1]));

        let diag = trace_diagnostics(&NoiseSpec::power_law(1.0, 1.0, 0), &grid(128)).unwrap();
        assert_eq!(diag.trace_invlap_q.verdict, Convergence::Finite);
        // trace(Q) itself is borderline (log-divergent) at r = 1.
        assert_eq!(diag.trace_q.verdict, Convergence::Divergent);
        assert!((diag.trace_invlap_q.value - diag.trace_invlap_q.half) / diag.trace_invlap_q.value < 1e-3);
    }

    #[test]
    fn zero_noise_has_zero_traces() {
        let diag = trace_diagnostics(&NoiseSpec::zero(), &grid(32)).unwrap();
        assert_eq!(diag.trace_q.value, 0.0);
        assert_eq!(diag.trace_invlap_q.value, 0.0);
        assert_eq!(diag.trace_q.verdict, Convergence::Finite);
    }

    #[test]
    fn mass_mode_is_never_forced() {
        let g = grid(16);
        let alpha = NoiseSpec::power_law(2.0, 0.5, 1).coefficients(&g).unwrap();
        assert_eq!(alpha[0], 0.0);
        assert!((alpha[g.index(1, 0)] - 2.0 * 2f64.powf(-0.25)).abs() < 1e-15);
        let bad = NoiseSpec::table(vec![ModeCoefficient { kx: 0, ky: 0, alpha: 1.0 }], 0);
        assert_eq!(bad.validate(), Err(NoiseError::MassMode));
        let unresolved = NoiseSpec::table(vec![ModeCoefficient { kx: 16, ky: 0, alpha: 1.0 }], 0);
        assert!(matches!(unresolved.coefficients(&g), Err(NoiseError::UnresolvedMode { .. })));
    }

    #[test]
    fn truncation_drops_high_modes() {
        let g = grid(16);
        let spec = NoiseSpec {
            truncation: Some(3.0),
            ..NoiseSpec::power_law(1.0, 0.0, 0)
        };
        let alpha = spec.coefficients(&g).unwrap();
        assert!(alpha[g.index(3, 0)] > 0.0);
        assert_eq!(alpha[g.index(3, 1)], 0.0);
    }

    #[test]
    fn silent_spec_gives_zero_increments() {
        let g = grid(16);
        let s = QWienerSampler::new(&NoiseSpec::zero(), &g).unwrap();
        let dw = s.sample_increment(0, 5, 0.1);
        assert!(dw.nodal().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn increments_are_reproducible_and_mean_free() {
        let g = grid(16);
        let spec = NoiseSpec::power_law(1.0, 1.0, 99);
        let a = QWienerSampler::new(&spec, &g).unwrap();
        let b = QWienerSampler::new(&spec, &g).unwrap();
        let x = a.sample_increment(3, 17, 1e-3);
        let y = b.sample_increment(3, 17, 1e-3);
        assert_eq!(x.to_spectral(), y.to_spectral());
        assert_eq!(x.to_spectral()[0], 0.0);
        assert!(x.mean().abs() < 1e-18);
        let z = a.sample_increment(4, 17, 1e-3);
        assert_ne!(x.to_spectral(), z.to_spectral());
        let w = a.sample_increment(3, 18, 1e-3);
        assert_ne!(x.to_spectral(), w.to_spectral());
    }

    #[test]
    fn per_mode_variance_matches_alpha_squared_dt() {
        let g = grid(8);
        let spec = NoiseSpec::power_law(1.5, 1.0, 7);
        let s = QWienerSampler::new(&spec, &g).unwrap();
        let dt = 0.01;
        let n = 100_000;
        let mut sum2 = vec![0.0; g.len()];
        let mut buf = vec![0.0; g.len()];
        for step in 0..n {
            s.fill_increment(0, step, dt, &mut buf);
            for (acc, v) in sum2.iter_mut().zip(&buf) {
                *acc += v * v;
            }
        }
        for (k, (&acc, &a)) in sum2.iter().zip(s.alpha()).enumerate().skip(1) {
            let expected = a * a * dt;
            let var = acc / n as f64;
            // standard error of a sample second moment of a Gaussian
            let se = expected * (2.0 / n as f64).sqrt();
            assert!((var - expected).abs() < 5.0 * se, "mode {k}: {var} vs {expected}");
        }
    }

    #[test]
    fn modes_are_uncorrelated() {
        let g = grid(8);
        let s = QWienerSampler::new(&NoiseSpec::power_law(1.0, 0.0, 3), &g).unwrap();
        let n = 10_000;
        let pairs = [(1, 2), (1, 9), (5, 40), (63, 8)];
        let mut cross = [0.0; 4];
        let mut buf = vec![0.0; g.len()];
        for step in 0..n {
            s.fill_increment(1, step, 1.0, &mut buf);
            for (c, &(a, b)) in cross.iter_mut().zip(&pairs) {
                *c += buf[a] * buf[b] / (s.alpha()[a] * s.alpha()[b]);
            }
        }
        for c in cross {
            // correlation of independent unit normals has standard error 1/sqrt(n)
            assert!((c / n as f64).abs() < 5.0 / (n as f64).sqrt());
        }
    }

    #[test]
    fn quadrupled_step_doubles_standard_deviation() {
        let g = grid(8);
        let s = QWienerSampler::new(&NoiseSpec::power_law(1.0, 0.5, 5), &g).unwrap();
        let n = 20_000;
        let k = g.index(2, 1);
        let mut buf = vec![0.0; g.len()];
        let mut moments = [0.0; 2];
        for (m, dt) in [0.01, 0.04].iter().enumerate() {
            for step in 0..n {
                s.fill_increment(m as u64, step, *dt, &mut buf);
                moments[m] += buf[k] * buf[k];
            }
        }
        let ratio = (moments[1] / moments[0]).sqrt();
        // each variance carries ~1% relative standard error
        assert!((ratio - 2.0).abs() < 2.0 * 5.0 * (2.0 / n as f64).sqrt(), "{ratio}");
    }
}
