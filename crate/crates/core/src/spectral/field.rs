use std::sync::{Arc, OnceLock};

use super::{transform, DomainGrid, SpectralError};

/// Tolerance on `|mean(u)|` below which `u` counts as mean-zero:
/// `1e-12 * (1 + ||u||_{L2})`.
pub fn mean_zero_tolerance(l2_norm: f64) -> f64 {
    1e-12 * (1.0 + l2_norm)
}

/// A scalar field held in nodal and cosine-spectral form.
///
/// At least one representation is always present; the other is computed on
/// first access and cached. The cache is a [`OnceLock`], so a field can be
/// shared between threads and read concurrently.
#[derive(Clone)]
pub struct SpectralField {
    grid: Arc<DomainGrid>,
    nodal: OnceLock<Vec<f64>>,
    spectral: OnceLock<Vec<f64>>,
}

impl std::fmt::Debug for SpectralField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralField")
            .field("grid", &self.grid)
            .field("nodal_synced", &self.nodal.get().is_some())
            .field("spectral_synced", &self.spectral.get().is_some())
            .finish()
    }
}

fn check_finite(values: &[f64]) -> Result<(), SpectralError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(SpectralError::NonFinite {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

fn check_len(grid: &DomainGrid, values: &[f64]) -> Result<(), SpectralError> {
    if values.len() != grid.len() {
        return Err(SpectralError::LengthMismatch {
            expected: grid.len(),
            actual: values.len(),
        });
    }
    Ok(())
}

impl SpectralField {
    pub fn from_nodal(grid: &Arc<DomainGrid>, values: Vec<f64>) -> Result<Self, SpectralError> {
        check_len(grid, &values)?;
        check_finite(&values)?;
        Ok(Self {
            grid: Arc::clone(grid),
            nodal: OnceLock::from(values),
            spectral: OnceLock::new(),
        })
    }

    /// Build a field from cosine coefficients (`from_spectral`).
    pub fn from_spectral(grid: &Arc<DomainGrid>, coefficients: Vec<f64>) -> Result<Self, SpectralError> {
        check_len(grid, &coefficients)?;
        check_finite(&coefficients)?;
        Ok(Self {
            grid: Arc::clone(grid),
            nodal: OnceLock::new(),
            spectral: OnceLock::from(coefficients),
        })
    }

    /// Sample `f(x, y)` at the nodes.
    pub fn from_fn<F>(grid: &Arc<DomainGrid>, f: F) -> Result<Self, SpectralError>
    where
        F: Fn(f64, f64) -> f64,
    {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny() {
            let y = grid.y(j);
            for i in 0..grid.nx() {
                values.push(f(grid.x(i), y));
            }
        }
        Self::from_nodal(grid, values)
    }

    pub fn constant(grid: &Arc<DomainGrid>, value: f64) -> Result<Self, SpectralError> {
        Self::from_nodal(grid, vec![value; grid.len()])
    }

    pub fn zeros(grid: &Arc<DomainGrid>) -> Self {
        Self {
            grid: Arc::clone(grid),
            nodal: OnceLock::from(vec![0.0; grid.len()]),
            spectral: OnceLock::from(vec![0.0; grid.len()]),
        }
    }

    /// The normalized eigenfunction `e_(kx, ky)` (unit L2 norm).
    pub fn eigenfunction(grid: &Arc<DomainGrid>, kx: usize, ky: usize) -> Self {
        let mut c = vec![0.0; grid.len()];
        c[grid.index(kx, ky)] = 1.0;
        Self {
            grid: Arc::clone(grid),
            nodal: OnceLock::new(),
            spectral: OnceLock::from(c),
        }
    }

    pub fn grid(&self) -> &Arc<DomainGrid> {
        &self.grid
    }

    /// Nodal values, row-major with `x` fastest.
    pub fn nodal(&self) -> &[f64] {
        self.nodal.get_or_init(|| {
            let c = self.spectral.get().expect("field holds no representation");
            transform::inverse(&self.grid, c)
        })
    }

    /// Cosine coefficients `<u, e_k>` in spectral layout (`to_spectral`).
    pub fn to_spectral(&self) -> &[f64] {
        self.spectral.get_or_init(|| {
            let v = self.nodal.get().expect("field holds no representation");
            transform::forward(&self.grid, v)
        })
    }

    /// Force both representations to be present.
    pub fn synchronize(&self) {
        self.nodal();
        self.to_spectral();
    }

    pub fn into_nodal(self) -> Vec<f64> {
        self.nodal();
        self.nodal.into_inner().unwrap()
    }

    pub fn into_spectral(self) -> Vec<f64> {
        self.to_spectral();
        self.spectral.into_inner().unwrap()
    }

    pub fn mean(&self) -> f64 {
        self.to_spectral()[0] / self.grid.area().sqrt()
    }

    /// Nodal quadrature `int u dx`.
    pub fn integral(&self) -> f64 {
        self.nodal().iter().sum::<f64>() * self.grid.cell_area()
    }

    pub fn l2_norm(&self) -> f64 {
        (self.nodal().iter().map(|v| v * v).sum::<f64>() * self.grid.cell_area()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.nodal().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `(int |u|^p dx)^(1/p)` by nodal quadrature; `p = inf` gives the max norm.
    pub fn lp_norm(&self, p: f64) -> Result<f64, SpectralError> {
        if p.is_nan() || p < 1.0 {
            return Err(SpectralError::InvalidExponent(p));
        }
        if p.is_infinite() {
            return Ok(self.max_abs());
        }
        let sum: f64 = if p == 2.0 {
            self.nodal().iter().map(|v| v * v).sum()
        } else {
            self.nodal().iter().map(|v| v.abs().powf(p)).sum()
        };
        Ok((sum * self.grid.cell_area()).powf(1.0 / p))
    }

    pub fn is_mean_zero(&self) -> bool {
        self.mean().abs() <= mean_zero_tolerance(self.l2_norm())
    }

    fn require_mean_zero(&self) -> Result<(), SpectralError> {
        let mean = self.mean();
        let tolerance = mean_zero_tolerance(self.l2_norm());
        if mean.abs() > tolerance {
            return Err(SpectralError::MeanNotZero { mean, tolerance });
        }
        Ok(())
    }

    /// `(-Delta)^s u`.
    ///
    /// Coefficients are multiplied by `mu_k^s`. The `k = 0` coefficient is kept
    /// for `s = 0`, and zeroed otherwise (`mu_0 = 0` for `s > 0`, projection
    /// onto mean-zero functions for `s < 0`). Negative powers require a
    /// mean-zero field.
    pub fn laplacian_power(&self, s: f64) -> Result<Self, SpectralError> {
        if s < 0.0 {
            self.require_mean_zero()?;
        }
        if s == 0.0 {
            return Ok(self.clone());
        }
        let mu = self.grid.eigenvalues();
        let mut c = self.to_spectral().to_vec();
        c[0] = 0.0;
        if s == 1.0 {
            c.iter_mut().zip(mu).skip(1).for_each(|(c, m)| *c *= m);
        } else if s == -1.0 {
            c.iter_mut().zip(mu).skip(1).for_each(|(c, m)| *c /= m);
        } else {
            c.iter_mut().zip(mu).skip(1).for_each(|(c, m)| *c *= m.powf(s));
        }
        Self::from_spectral(&self.grid, c)
    }

    /// `Delta u` (note the sign: this is `-(-Delta)^1 u`).
    pub fn laplacian(&self) -> Self {
        let mu = self.grid.eigenvalues();
        let c = self.to_spectral().iter().zip(mu).map(|(c, m)| -c * m).collect();
        Self::from_spectral(&self.grid, c).expect("laplacian of a finite field")
    }

    /// `||u||_{H^-1} = ||(-Delta)^(-1/2) u||_{L2}`; requires mean zero.
    pub fn hminus1_norm(&self) -> Result<f64, SpectralError> {
        self.require_mean_zero()?;
        Ok(self.hminus1_norm_unchecked())
    }

    /// Same sum as [`Self::hminus1_norm`] with the mean mode simply skipped.
    pub fn hminus1_norm_unchecked(&self) -> f64 {
        let mu = self.grid.eigenvalues();
        self.to_spectral()
            .iter()
            .zip(mu)
            .skip(1)
            .map(|(c, m)| c * c / m)
            .sum::<f64>()
            .sqrt()
    }

    /// `||grad u||_{L2}`.
    pub fn h1_seminorm(&self) -> f64 {
        let mu = self.grid.eigenvalues();
        self.to_spectral()
            .iter()
            .zip(mu)
            .map(|(c, m)| c * c * m)
            .sum::<f64>()
            .sqrt()
    }

    /// Subtract the spatial mean.
    pub fn remove_mean(&self) -> Self {
        let mut c = self.to_spectral().to_vec();
        c[0] = 0.0;
        Self::from_spectral(&self.grid, c).unwrap()
    }

    /// Pointwise map of the nodal values.
    pub fn map_nodal<F>(&self, f: F) -> Result<Self, SpectralError>
    where
        F: Fn(f64) -> f64,
    {
        Self::from_nodal(&self.grid, self.nodal().iter().map(|&v| f(v)).collect())
    }

    fn check_grid(&self, other: &Self) -> Result<(), SpectralError> {
        if Arc::ptr_eq(&self.grid, &other.grid) || self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(SpectralError::GridMismatch)
        }
    }

    /// `a * self + b * other`, computed in whichever representation both have.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self, SpectralError> {
        self.check_grid(other)?;
        if let (Some(x), Some(y)) = (self.spectral.get(), other.spectral.get()) {
            let c = x.iter().zip(y).map(|(x, y)| a * x + b * y).collect();
            return Self::from_spectral(&self.grid, c);
        }
        let v = self
            .nodal()
            .iter()
            .zip(other.nodal())
            .map(|(x, y)| a * x + b * y)
            .collect();
        Self::from_nodal(&self.grid, v)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, SpectralError> {
        self.combine(1.0, other, -1.0)
    }

    pub fn add(&self, other: &Self) -> Result<Self, SpectralError> {
        self.combine(1.0, other, 1.0)
    }

    pub fn scale(&self, a: f64) -> Self {
        if let Some(c) = self.spectral.get() {
            return Self::from_spectral(&self.grid, c.iter().map(|v| a * v).collect()).unwrap();
        }
        Self::from_nodal(&self.grid, self.nodal().iter().map(|v| a * v).collect()).unwrap()
    }

    /// `int u v dx` by nodal quadrature.
    pub fn inner(&self, other: &Self) -> Result<f64, SpectralError> {
        self.check_grid(other)?;
        Ok(self
            .nodal()
            .iter()
            .zip(other.nodal())
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * self.grid.cell_area())
    }

    /// Bilinear interpolation of the nodal values at an arbitrary point.
    /// Points outside the node hull are clamped to it.
    pub fn interpolate(&self, x: f64, y: f64) -> f64 {
        let g = &self.grid;
        let fx = (x / g.hx() - 0.5).clamp(0.0, (g.nx() - 1) as f64);
        let fy = (y / g.hy() - 0.5).clamp(0.0, (g.ny() - 1) as f64);
        let i0 = (fx.floor() as usize).min(g.nx() - 2);
        let j0 = (fy.floor() as usize).min(g.ny() - 2);
        let (tx, ty) = (fx - i0 as f64, fy - j0 as f64);
        let v = self.nodal();
        let at = |i: usize, j: usize| v[g.index(i, j)];
        (1.0 - ty) * ((1.0 - tx) * at(i0, j0) + tx * at(i0 + 1, j0))
            + ty * ((1.0 - tx) * at(i0, j0 + 1) + tx * at(i0 + 1, j0 + 1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(grid: &Arc<DomainGrid>, rng: &mut ChaCha8Rng) -> SpectralField {
        let v = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        SpectralField::from_nodal(grid, v).unwrap()
    }

    #[test]
    fn constant_field_is_the_zero_mode() {
        let grid = DomainGrid::new(2.0, 0.5, 16, 8).unwrap();
        let u = SpectralField::constant(&grid, 3.0).unwrap();
        let c = u.to_spectral();
        assert!((c[0] - 3.0 * grid.area().sqrt()).abs() < 1e-13);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-13));
        assert!((u.mean() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn single_cosine_is_a_single_coefficient() {
        let grid = DomainGrid::new(1.5, 1.0, 16, 16).unwrap();
        let u = SpectralField::from_fn(&grid, |x, _| (PI * x / 1.5).cos()).unwrap();
        let c = u.to_spectral();
        let k = grid.index(1, 0);
        for (n, v) in c.iter().enumerate() {
            if n == k {
                // ||cos(pi x / lx)||_{L2} = sqrt(|D| / 2)
                assert!((v - (grid.area() / 2.0).sqrt()).abs() < 1e-13);
            } else {
                assert!(v.abs() < 1e-13, "mode {n} = {v}");
            }
        }
    }

    #[test]
    fn rejects_non_finite_values() {
        let grid = DomainGrid::unit_square(8).unwrap();
        let mut v = vec![0.0; 64];
        v[9] = f64::NAN;
        assert!(matches!(
            SpectralField::from_nodal(&grid, v),
            Err(SpectralError::NonFinite { index: 9, .. })
        ));
        assert!(SpectralField::from_nodal(&grid, vec![0.0; 10]).is_err());
    }

    #[test]
    fn laplacian_of_eigenfunction() {
        let grid = DomainGrid::new(2.0, 1.0, 32, 16).unwrap();
        let u = SpectralField::from_fn(&grid, |x, _| (PI * x / 2.0).cos()).unwrap();
        let lap = u.laplacian_power(1.0).unwrap();
        let scale = (PI / 2.0).powi(2);
        for (a, b) in lap.nodal().iter().zip(u.nodal()) {
            assert!((a - scale * b).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_laplacian_rejects_mean() {
        let grid = DomainGrid::unit_square(16).unwrap();
        let u = SpectralField::constant(&grid, 0.5).unwrap();
        assert!(matches!(
            u.laplacian_power(-1.0),
            Err(SpectralError::MeanNotZero { .. })
        ));
        assert!(matches!(u.hminus1_norm(), Err(SpectralError::MeanNotZero { .. })));
    }

    #[test]
    fn lp_norm_of_constant() {
        let grid = DomainGrid::unit_square(16).unwrap();
        let u = SpectralField::constant(&grid, 2.0).unwrap();
        assert!((u.lp_norm(2.0).unwrap() - 2.0).abs() < 1e-14);
        assert!((u.lp_norm(3.0).unwrap() - 2.0).abs() < 1e-14);
        assert!(matches!(u.lp_norm(0.5), Err(SpectralError::InvalidExponent(_))));
    }

    #[test]
    fn hminus1_of_normalized_eigenfunction() {
        let grid = DomainGrid::new(1.0, 2.0, 16, 32).unwrap();
        for &(kx, ky) in &[(1, 0), (0, 1), (3, 5), (7, 2)] {
            let e = SpectralField::eigenfunction(&grid, kx, ky);
            let mu = grid.eigenvalue(kx, ky);
            assert!((e.l2_norm() - 1.0).abs() < 1e-12);
            assert!((e.hminus1_norm().unwrap() - mu.powf(-0.5)).abs() < 1e-12);
            assert!((e.h1_seminorm() - mu.sqrt()).abs() < 1e-10);
        }
    }

    #[test]
    fn parseval_and_round_trip_on_random_fields() {
        let grid = DomainGrid::new(1.0, 0.75, 32, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let u = random_field(&grid, &mut rng);
            let energy: f64 = u.to_spectral().iter().map(|c| c * c).sum();
            let l2 = u.l2_norm();
            assert!((energy - l2 * l2).abs() <= 1e-10 * l2 * l2);

            let back = SpectralField::from_spectral(&grid, u.to_spectral().to_vec()).unwrap();
            let scale = u.max_abs();
            let err = back
                .nodal()
                .iter()
                .zip(u.nodal())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err <= 1e-12 * scale);
        }
    }

    #[test]
    fn interpolation_is_exact_for_bilinear_functions() {
        let grid = DomainGrid::unit_square(16).unwrap();
        let u = SpectralField::from_fn(&grid, |x, y| 1.0 + 2.0 * x - y + 0.5 * x * y).unwrap();
        let v = u.interpolate(0.37, 0.61);
        assert!((v - (1.0 + 0.74 - 0.61 + 0.5 * 0.37 * 0.61)).abs() < 1e-12);
    }

    #[test]
    fn fields_are_send_and_sync() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<SpectralField>();
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn inverse_laplacian_round_trip(seed in any::<u64>()) {
            let grid = DomainGrid::new(1.0, 1.5, 16, 24).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_field(&grid, &mut rng).remove_mean();
            let psi = u.laplacian_power(-1.0).unwrap();
            let back = psi.laplacian_power(1.0).unwrap();
            let err = back.nodal().iter().zip(u.nodal()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            prop_assert!(err <= 1e-12 * (1.0 + u.max_abs()));
        }

        #[test]
        fn interpolation_inequality(seed in any::<u64>()) {
            // ||u||^2 <= ||grad u|| ||u||_{H^-1} for mean-zero u
            let grid = DomainGrid::unit_square(16).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_field(&grid, &mut rng).remove_mean();
            let l2 = u.l2_norm();
            prop_assert!(l2 * l2 <= u.h1_seminorm() * u.hminus1_norm().unwrap() * (1.0 + 1e-12));
        }
    }
}
