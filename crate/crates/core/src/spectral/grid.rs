use std::fmt;
use std::sync::Arc;

use rustdct::{DctPlanner, TransformType2And3};

use super::SpectralError;

/// Smallest admissible number of nodes along an axis.
pub const MIN_NODES: usize = 8;

/// A uniform cell-centered discretization of the rectangle `[0, lx] x [0, ly]`.
///
/// Node `(i, j)` sits at `((i + 1/2) hx, (j + 1/2) hy)` and nodal arrays are
/// stored row-major with `x` varying fastest: `index = j * nx + i`. Spectral
/// arrays use the same layout with `(kx, ky)` in place of `(i, j)`.
///
/// With this collocation the cosine functions
/// `cos(kx pi x / lx) cos(ky pi y / ly)` are discretely orthogonal and satisfy
/// homogeneous Neumann conditions, so the Laplacian is diagonal with
/// eigenvalues `-mu_k`, `mu_k = (kx pi / lx)^2 + (ky pi / ly)^2`.
pub struct DomainGrid {
    lx: f64,
    ly: f64,
    nx: usize,
    ny: usize,
    eigenvalues: Vec<f64>,
    pub(crate) plan_x: Arc<dyn TransformType2And3<f64>>,
    pub(crate) plan_y: Arc<dyn TransformType2And3<f64>>,
}

impl DomainGrid {
    pub fn new(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Arc<Self>, SpectralError> {
        if !(lx.is_finite() && lx > 0.0 && ly.is_finite() && ly > 0.0) {
            return Err(SpectralError::InvalidGrid(format!(
                "side lengths must be positive and finite, got lx={lx}, ly={ly}"
            )));
        }
        if nx < MIN_NODES || ny < MIN_NODES {
            return Err(SpectralError::InvalidGrid(format!(
                "at least {MIN_NODES} nodes per axis are required, got {nx}x{ny}"
            )));
        }
        let mut planner = DctPlanner::new();
        let plan_x = planner.plan_dct2(nx);
        let plan_y = planner.plan_dct2(ny);
        let mut eigenvalues = Vec::with_capacity(nx * ny);
        for ky in 0..ny {
            let wy = ky as f64 * std::f64::consts::PI / ly;
            for kx in 0..nx {
                let wx = kx as f64 * std::f64::consts::PI / lx;
                eigenvalues.push(wx * wx + wy * wy);
            }
        }
        Ok(Arc::new(Self {
            lx,
            ly,
            nx,
            ny,
            eigenvalues,
            plan_x,
            plan_y,
        }))
    }

    /// Unit square with `n x n` nodes.
    pub fn unit_square(n: usize) -> Result<Arc<Self>, SpectralError> {
        Self::new(1.0, 1.0, n, n)
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    /// Largest grid spacing.
    pub fn spacing(&self) -> f64 {
        self.hx().max(self.hy())
    }

    /// Quadrature weight of a single node.
    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn x(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.hx()
    }

    pub fn y(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.hy()
    }

    pub fn node(&self, i: usize, j: usize) -> [f64; 2] {
        [self.x(i), self.y(j)]
    }

    /// `mu_k` for every mode, in spectral layout. `mu_(0,0) = 0`.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvalue(&self, kx: usize, ky: usize) -> f64 {
        self.eigenvalues[self.index(kx, ky)]
    }

    /// Value of the L2-orthonormal eigenfunction `e_(kx,ky)` at `(x, y)`.
    pub fn eigenfunction(&self, kx: usize, ky: usize, x: f64, y: f64) -> f64 {
        use std::f64::consts::PI;
        axis_norm(kx, self.lx)
            * axis_norm(ky, self.ly)
            * (kx as f64 * PI * x / self.lx).cos()
            * (ky as f64 * PI * y / self.ly).cos()
    }

    pub(crate) fn same_as(&self, other: &DomainGrid) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.lx == other.lx && self.ly == other.ly
    }
}

/// Normalization of the one-dimensional cosine `cos(k pi x / l)` in `L2(0, l)`.
pub(crate) fn axis_norm(k: usize, l: f64) -> f64 {
    if k == 0 {
        (1.0 / l).sqrt()
    } else {
        (2.0 / l).sqrt()
    }
}

impl fmt::Debug for DomainGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DomainGrid")
            .field("lx", &self.lx)
            .field("ly", &self.ly)
            .field("nx", &self.nx)
            .field("ny", &self.ny)
            .finish()
    }
}

impl PartialEq for DomainGrid {
    fn eq(&self, other: &Self) -> bool {
        self.same_as(other)
    }
}
