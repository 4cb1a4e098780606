use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::curve::nearest_on_segment;
use super::{GeometryError, InterfaceCurve};
use crate::spectral::{DomainGrid, SpectralField};

/// A disk of the `+` phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Disk {
    pub fn new(center: [f64; 2], radius: f64) -> Self {
        Self { center, radius }
    }

    /// `R - |x - c|`.
    pub fn signed_distance(&self, x: f64, y: f64) -> f64 {
        self.radius - (x - self.center[0]).hypot(y - self.center[1])
    }

    pub fn area(&self) -> f64 {
        PI * self.radius * self.radius
    }
}

/// Interface shapes with the `+` phase inside (or, for a flat interface, on
/// the side `x < position`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    Circle(Disk),
    Flat { position: f64 },
    TwoCircles { first: Disk, second: Disk },
    /// `r(theta) = radius + sum_k amplitude_k cos(k theta)` about `center`.
    PerturbedCircle {
        center: [f64; 2],
        radius: f64,
        modes: Vec<(usize, f64)>,
    },
}

/// Vertices used to represent a perturbed circle when measuring distances.
const PERTURBED_VERTICES: usize = 4096;

impl Geometry {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |m: String| Err(GeometryError::InvalidGeometry(m));
        let disk_ok = |d: &Disk| d.radius.is_finite() && d.radius > 0.0 && d.center.iter().all(|c| c.is_finite());
        match self {
            Geometry::Circle(d) if !disk_ok(d) => bad(format!("circle radius must be positive, got {}", d.radius)),
            Geometry::Flat { position } if !position.is_finite() => bad("flat interface position must be finite".into()),
            Geometry::TwoCircles { first, second } => {
                if !disk_ok(first) || !disk_ok(second) {
                    return bad("circle radii must be positive".into());
                }
                let gap = (first.center[0] - second.center[0]).hypot(first.center[1] - second.center[1]);
                if gap <= first.radius + second.radius {
                    return bad("the two circles overlap".into());
                }
                Ok(())
            }
            Geometry::PerturbedCircle { radius, modes, .. } => {
                let total: f64 = modes.iter().map(|m| m.1.abs()).sum();
                if !(radius.is_finite() && *radius > total) {
                    return bad("perturbation amplitudes must stay below the base radius".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Closed outline of a bounded geometry.
    pub fn outline(&self, vertices: usize) -> Option<Vec<InterfaceCurve>> {
        match self {
            Geometry::Circle(d) => Some(vec![InterfaceCurve::polar(d.center, d.radius, &[], vertices).ok()?]),
            Geometry::Flat { .. } => None,
            Geometry::TwoCircles { first, second } => Some(vec![
                InterfaceCurve::polar(first.center, first.radius, &[], vertices).ok()?,
                InterfaceCurve::polar(second.center, second.radius, &[], vertices).ok()?,
            ]),
            Geometry::PerturbedCircle { center, radius, modes } => {
                let m: Vec<_> = modes.iter().map(|&(k, a)| (k, a, 0.0)).collect();
                Some(vec![InterfaceCurve::polar(*center, *radius, &m, vertices).ok()?])
            }
        }
    }

    /// Smallest distance from the interface to the rectangle boundary.
    pub fn boundary_clearance(&self, lx: f64, ly: f64) -> f64 {
        let disk = |d: &Disk, extra: f64| {
            let r = d.radius + extra;
            (d.center[0] - r).min(lx - d.center[0] - r).min(d.center[1] - r).min(ly - d.center[1] - r)
        };
        match self {
            Geometry::Circle(d) => disk(d, 0.0),
            // A flat interface meets the top and bottom walls.
            Geometry::Flat { position } => position.min(lx - position).min(0.0),
            Geometry::TwoCircles { first, second } => disk(first, 0.0).min(disk(second, 0.0)),
            Geometry::PerturbedCircle { center, radius, modes } => {
                let extra: f64 = modes.iter().map(|m| m.1.abs()).sum();
                disk(&Disk::new(*center, *radius), extra)
            }
        }
    }

    /// Signed distance at a point for the analytic shapes. Perturbed circles
    /// are handled through their outline in [`signed_distance`].
    pub fn analytic_distance(&self, x: f64, y: f64) -> Option<f64> {
        match self {
            Geometry::Circle(d) => Some(d.signed_distance(x, y)),
            Geometry::Flat { position } => Some(position - x),
            Geometry::TwoCircles { first, second } => Some(first.signed_distance(x, y).max(second.signed_distance(x, y))),
            Geometry::PerturbedCircle { .. } => None,
        }
    }
}

/// Signed distance to the interface on the grid nodes, positive in the `+`
/// phase.
pub fn signed_distance(geometry: &Geometry, grid: &Arc<DomainGrid>) -> Result<SpectralField, GeometryError> {
    geometry.validate()?;
    match geometry {
        Geometry::PerturbedCircle { .. } => {
            let outline = geometry.outline(PERTURBED_VERTICES).expect("bounded geometry");
            Ok(polyline_signed_distance(&outline, grid))
        }
        g => Ok(SpectralField::from_fn(grid, |x, y| g.analytic_distance(x, y).expect("analytic geometry"))
            .expect("finite distances")),
    }
}

fn winding_number(curve: &InterfaceCurve, p: [f64; 2]) -> i32 {
    let mut w = 0;
    for (a, b) in curve.edges() {
        let side = (b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1]);
        if a[1] <= p[1] {
            if b[1] > p[1] && side > 0.0 {
                w += 1;
            }
        } else if b[1] <= p[1] && side < 0.0 {
            w -= 1;
        }
    }
    w
}

/// Brute-force signed distance to a set of closed loops.
///
/// A point is in the `+` phase when the total winding number of the loops
/// around it, plus one if the largest loop runs clockwise (so that the far
/// field is `+`), is positive.
pub fn polyline_signed_distance(curves: &[InterfaceCurve], grid: &Arc<DomainGrid>) -> SpectralField {
    let far_field = curves
        .iter()
        .max_by(|a, b| a.area().partial_cmp(&b.area()).unwrap())
        .map_or(0, |c| i32::from(!c.is_counterclockwise()));
    SpectralField::from_fn(grid, |x, y| {
        let p = [x, y];
        let mut dist = f64::INFINITY;
        let mut winding = far_field;
        for c in curves {
            for (a, b) in c.edges() {
                dist = dist.min(nearest_on_segment(p, a, b).1);
            }
            winding += winding_number(c, p);
        }
        if winding > 0 {
            dist
        } else {
            -dist
        }
    })
    .expect("finite distances")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Arc<DomainGrid> {
        DomainGrid::unit_square(32).unwrap()
    }

    #[test]
    fn circle_distance_is_positive_inside() {
        let g = grid();
        let d = signed_distance(&Geometry::Circle(Disk::new([0.5, 0.5], 0.25)), &g).unwrap();
        for j in 0..32 {
            for i in 0..32 {
                let [x, y] = g.node(i, j);
                let expected = 0.25 - (x - 0.5).hypot(y - 0.5);
                assert!((d.nodal()[g.index(i, j)] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn flat_distance() {
        let g = grid();
        let d = signed_distance(&Geometry::Flat { position: 0.3 }, &g).unwrap();
        assert!((d.nodal()[g.index(4, 7)] - (0.3 - g.x(4))).abs() < 1e-15);
    }

    #[test]
    fn two_circles_match_nearest_boundary_oracle() {
        let g = grid();
        let (a, b) = (Disk::new([0.3, 0.3], 0.12), Disk::new([0.7, 0.65], 0.18));
        let geom = Geometry::TwoCircles { first: a, second: b };
        let d = signed_distance(&geom, &g).unwrap();
        // Oracle: distance to densely sampled boundary points, sign from membership.
        let boundary: Vec<[f64; 2]> = [a, b]
            .iter()
            .flat_map(|c| {
                (0..20000).map(move |i| {
                    let t = 2.0 * PI * i as f64 / 20000.0;
                    [c.center[0] + c.radius * t.cos(), c.center[1] + c.radius * t.sin()]
                })
            })
            .collect();
        for (i, j) in [(3, 3), (9, 9), (22, 21), (31, 0), (16, 16), (0, 31)] {
            let [x, y] = g.node(i, j);
            let near = boundary.iter().map(|p| (p[0] - x).hypot(p[1] - y)).fold(f64::INFINITY, f64::min);
            let inside = a.signed_distance(x, y) > 0.0 || b.signed_distance(x, y) > 0.0;
            let oracle = if inside { near } else { -near };
            assert!((d.nodal()[g.index(i, j)] - oracle).abs() < 1e-6, "({i},{j})");
        }
    }

    #[test]
    fn polyline_distance_matches_analytic_circle() {
        let g = grid();
        let circle = Disk::new([0.5, 0.45], 0.3);
        let outline = Geometry::Circle(circle).outline(4096).unwrap();
        let d = polyline_signed_distance(&outline, &g);
        // Chords sag by at most r (1 - cos(pi / n)).
        let sag = 0.3 * (1.0 - (PI / 4096.0).cos());
        for (n, v) in d.nodal().iter().enumerate() {
            let [x, y] = g.node(n % 32, n / 32);
            assert!((v - circle.signed_distance(x, y)).abs() <= sag + 1e-12);
        }
        let mut reversed = outline[0].vertices().to_vec();
        reversed.reverse();
        let hole = polyline_signed_distance(&[InterfaceCurve::from_vertices(reversed).unwrap()], &g);
        for (a, b) in d.nodal().iter().zip(hole.nodal()) {
            assert!((a + b).abs() < 1e-15);
        }
    }

    #[test]
    fn perturbed_circle_is_positive_inside() {
        let g = grid();
        let geom = Geometry::PerturbedCircle {
            center: [0.5, 0.5],
            radius: 0.25,
            modes: vec![(2, 0.02)],
        };
        let d = signed_distance(&geom, &g).unwrap();
        assert!(d.nodal()[g.index(16, 16)] > 0.2);
        assert!(d.nodal()[g.index(0, 0)] < 0.0);
    }

    #[test]
    fn overlapping_circles_rejected() {
        let geom = Geometry::TwoCircles {
            first: Disk::new([0.4, 0.5], 0.2),
            second: Disk::new([0.6, 0.5], 0.2),
        };
        assert!(geom.validate().is_err());
    }
}
