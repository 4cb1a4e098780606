use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};

use super::GeometryError;

/// Highest angular mode reported by default.
pub const DEFAULT_MODE_CUTOFF: usize = 8;

/// Rays cast from the centroid when resampling `r(theta)`.
const ANGULAR_SAMPLES: usize = 512;

/// Fewest vertices accepted by curvature and mode estimates.
const MIN_MEASURED_VERTICES: usize = 16;

/// A closed polygonal loop. The closing edge from the last vertex back to the
/// first is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceCurve {
    vertices: Vec<[f64; 2]>,
    /// Arclength step of the curvature stencil; `None` uses the vertices
    /// themselves.
    stencil_spacing: Option<f64>,
}

/// Curvature stencil step for contours, in grid cells.
pub(crate) const CONTOUR_STENCIL_CELLS: f64 = 3.0;

/// Near-circular shape description `r(theta) = R + sum_k (a_k cos k theta + b_k sin k theta)`
/// around the area centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeDecomposition {
    pub center: [f64; 2],
    pub mean_radius: f64,
    /// `a_k` for `k = 0..=k_max` (`a_0 = 0`).
    pub cosine: Vec<f64>,
    /// `b_k` for `k = 0..=k_max` (`b_0 = 0`).
    pub sine: Vec<f64>,
}

impl ModeDecomposition {
    /// `delta_k = sqrt(a_k^2 + b_k^2)`.
    pub fn amplitude(&self, k: usize) -> f64 {
        self.cosine[k].hypot(self.sine[k])
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        (0..self.cosine.len()).map(|k| self.amplitude(k)).collect()
    }

    pub fn k_max(&self) -> usize {
        self.cosine.len() - 1
    }
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn norm(a: [f64; 2]) -> f64 {
    a[0].hypot(a[1])
}

/// Closest point to `p` on the segment `a b` and its distance.
pub(crate) fn nearest_on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> ([f64; 2], f64) {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    let t = if len2 > 0.0 { (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
    (q, norm(sub(p, q)))
}

fn segments_intersect(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let d1 = cross(sub(p2, p1), sub(q1, p1));
    let d2 = cross(sub(p2, p1), sub(q2, p1));
    let d3 = cross(sub(q2, q1), sub(p1, q1));
    let d4 = cross(sub(q2, q1), sub(p2, q1));
    (d1 > 0.0) != (d2 > 0.0) && (d3 > 0.0) != (d4 > 0.0) && d1 != 0.0 && d2 != 0.0 && d3 != 0.0 && d4 != 0.0
}

/// Curvature of the least-squares circle through five points, measured at
/// the middle one. Positive when the points turn left.
fn stencil_curvature(points: [[f64; 2]; 5]) -> f64 {
    let c = points[2];
    let mut t = sub(points[3], points[1]);
    if norm(t) == 0.0 {
        t = sub(points[4], points[0]);
    }
    let scale = norm(sub(points[4], points[0])).max(norm(t));
    if scale == 0.0 {
        return 0.0;
    }
    let tl = norm(t);
    let t = [t[0] / tl, t[1] / tl];
    let n = [-t[1], t[0]];
    // w = a + b s + K (s^2 + w^2) / 2 in the frame scaled by `scale`.
    let mut ata = Matrix3::<f64>::zeros();
    let mut atw = Vector3::<f64>::zeros();
    for p in points {
        let d = sub(p, c);
        let s = dot(d, t) / scale;
        let w = dot(d, n) / scale;
        let row = Vector3::new(1.0, s, 0.5 * (s * s + w * w));
        ata += row * row.transpose();
        atw += row * w;
    }
    let Some(sol) = ata.try_inverse().map(|m| m * atw) else {
        return 0.0;
    };
    let (a, b, k) = (sol[0], sol[1], sol[2]);
    k / (1.0 + b * b - 2.0 * a * k).max(f64::MIN_POSITIVE).sqrt() / scale
}

impl InterfaceCurve {
    pub fn from_vertices(vertices: Vec<[f64; 2]>) -> Result<Self, GeometryError> {
        if vertices.len() < 3 {
            return Err(GeometryError::TooFewVertices {
                context: "a closed curve",
                required: 3,
                actual: vertices.len(),
            });
        }
        if vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidGeometry("non-finite vertex".into()));
        }
        Ok(Self {
            vertices,
            stencil_spacing: None,
        })
    }

    pub(crate) fn from_vertices_unchecked(vertices: Vec<[f64; 2]>, stencil_spacing: Option<f64>) -> Self {
        Self {
            vertices,
            stencil_spacing,
        }
    }

    /// Use a stencil at fixed arclength steps in [`curvature`](Self::curvature).
    pub fn with_stencil_spacing(mut self, spacing: Option<f64>) -> Self {
        self.stencil_spacing = spacing;
        self
    }

    pub fn stencil_spacing(&self) -> Option<f64> {
        self.stencil_spacing
    }

    /// `n` vertices on `r(theta) = radius + sum (a_k cos k theta + b_k sin k theta)`,
    /// counterclockwise, starting at `theta = 0`.
    pub fn polar(center: [f64; 2], radius: f64, modes: &[(usize, f64, f64)], n: usize) -> Result<Self, GeometryError> {
        let vertices = (0..n)
            .map(|i| {
                let th = 2.0 * PI * i as f64 / n as f64;
                let r = radius
                    + modes
                        .iter()
                        .map(|&(k, a, b)| a * (k as f64 * th).cos() + b * (k as f64 * th).sin())
                        .sum::<f64>();
                [center[0] + r * th.cos(), center[1] + r * th.sin()]
            })
            .collect();
        Self::from_vertices(vertices)
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    fn vertex(&self, i: isize) -> [f64; 2] {
        let n = self.len() as isize;
        self.vertices[i.rem_euclid(n) as usize]
    }

    /// Edges `(v_i, v_{i+1})` including the closing one.
    pub fn edges(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        (0..self.len()).map(move |i| (self.vertices[i], self.vertices[(i + 1) % self.len()]))
    }

    /// Shoelace area, positive for counterclockwise loops.
    pub fn signed_area(&self) -> f64 {
        0.5 * self.edges().map(|(a, b)| cross(a, b)).sum::<f64>()
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn is_counterclockwise(&self) -> bool {
        self.signed_area() > 0.0
    }

    /// Cumulative arclength at each vertex; the last entry is the perimeter
    /// (arclength back at the first vertex).
    pub fn arclength(&self) -> Vec<f64> {
        let mut s = Vec::with_capacity(self.len() + 1);
        let mut acc = 0.0;
        s.push(0.0);
        for (a, b) in self.edges() {
            acc += norm(sub(b, a));
            s.push(acc);
        }
        s
    }

    pub fn perimeter(&self) -> f64 {
        self.edges().map(|(a, b)| norm(sub(b, a))).sum()
    }

    /// Area centroid of the enclosed polygon.
    pub fn centroid(&self) -> [f64; 2] {
        let (mut cx, mut cy, mut a2) = (0.0, 0.0, 0.0);
        for (p, q) in self.edges() {
            let c = cross(p, q);
            a2 += c;
            cx += (p[0] + q[0]) * c;
            cy += (p[1] + q[1]) * c;
        }
        [cx / (3.0 * a2), cy / (3.0 * a2)]
    }

    pub fn is_self_intersecting(&self) -> bool {
        let n = self.len();
        let edges: Vec<_> = self.edges().collect();
        for i in 0..n {
            let (p1, p2) = edges[i];
            let (lo_x, hi_x) = (p1[0].min(p2[0]), p1[0].max(p2[0]));
            let (lo_y, hi_y) = (p1[1].min(p2[1]), p1[1].max(p2[1]));
            for (j, &(q1, q2)) in edges.iter().enumerate().skip(i + 2) {
                if i == 0 && j == n - 1 {
                    continue;
                }
                if q1[0].max(q2[0]) < lo_x || q1[0].min(q2[0]) > hi_x || q1[1].max(q2[1]) < lo_y || q1[1].min(q2[1]) > hi_y {
                    continue;
                }
                if segments_intersect(p1, p2, q1, q2) {
                    return true;
                }
            }
        }
        false
    }

    fn check_measurable(&self, context: &'static str) -> Result<(), GeometryError> {
        if self.len() < MIN_MEASURED_VERTICES {
            return Err(GeometryError::TooFewVertices {
                context,
                required: MIN_MEASURED_VERTICES,
                actual: self.len(),
            });
        }
        if self.is_self_intersecting() {
            return Err(GeometryError::Degenerate("self-intersecting polyline".into()));
        }
        Ok(())
    }

    /// Curvature at each vertex from a least-squares circle fitted to a
    /// five-point stencil.
    ///
    /// Curves built from vertex lists use the vertex and its two neighbours on
    /// either side. Contours extracted from a grid carry a stencil spacing of
    /// three grid cells and use [`curvature_with_spacing`](Self::curvature_with_spacing).
    pub fn curvature(&self) -> Result<Vec<f64>, GeometryError> {
        match self.stencil_spacing {
            Some(s) => self.curvature_with_spacing(s),
            None => self.vertex_curvature(),
        }
    }

    /// Curvature from the vertex and its two neighbours on either side.
    pub fn vertex_curvature(&self) -> Result<Vec<f64>, GeometryError> {
        self.check_measurable("curvature")?;
        Ok((0..self.len() as isize)
            .map(|i| {
                stencil_curvature([
                    self.vertex(i - 2),
                    self.vertex(i - 1),
                    self.vertex(i),
                    self.vertex(i + 1),
                    self.vertex(i + 2),
                ])
            })
            .collect())
    }

    /// Curvature at each vertex using a five-point stencil whose points sit
    /// at arclength offsets `0, +-spacing, +-2 spacing` along the polyline.
    ///
    /// Contour vertices from marching squares are unevenly spaced and carry
    /// interpolation errors of order `h^2`. Over a stencil of width `L` such an
    /// error shifts the fitted curvature by about `8 h^2 / L^2` times the
    /// local curvature scale, so a stencil a few cells wide is needed.
    pub fn curvature_with_spacing(&self, spacing: f64) -> Result<Vec<f64>, GeometryError> {
        self.check_measurable("curvature")?;
        let s = self.arclength();
        let total = s[self.len()];
        Ok((0..self.len())
            .map(|i| {
                let pts = [-2.0, -1.0, 0.0, 1.0, 2.0].map(|o| self.point_at(&s, (s[i] + o * spacing).rem_euclid(total)));
                stencil_curvature(pts)
            })
            .collect())
    }

    /// Point at arclength `target` (in `[0, perimeter)`) given the table `s`.
    fn point_at(&self, s: &[f64], target: f64) -> [f64; 2] {
        let e = match s.binary_search_by(|v| v.partial_cmp(&target).unwrap()) {
            Ok(i) => return self.vertices[i % self.len()],
            Err(i) => i - 1,
        };
        let (a, b) = (self.vertices[e], self.vertices[(e + 1) % self.len()]);
        let len = s[e + 1] - s[e];
        let t = if len > 0.0 { (target - s[e]) / len } else { 0.0 };
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    }

    /// Uniform-in-arclength resampling with `n` vertices.
    pub fn resample(&self, n: usize) -> Result<Self, GeometryError> {
        let s = self.arclength();
        let total = s[self.len()];
        Self::from_vertices((0..n).map(|i| self.point_at(&s, total * i as f64 / n as f64)).collect())
    }

    /// Distance from the centroid along the ray at angle `theta`; the farthest
    /// crossing is used if the ray meets the loop more than once.
    fn radius_along(&self, center: [f64; 2], theta: f64) -> Option<f64> {
        let d = [theta.cos(), theta.sin()];
        let mut best: Option<f64> = None;
        for (a, b) in self.edges() {
            let e = sub(b, a);
            let denom = cross(d, e);
            if denom == 0.0 {
                continue;
            }
            let ac = sub(a, center);
            let r = cross(ac, e) / denom;
            let t = cross(ac, d) / denom;
            if (0.0..=1.0).contains(&t) && r > 0.0 {
                best = Some(best.map_or(r, |b: f64| b.max(r)));
            }
        }
        best
    }

    /// Fourier modes of `r(theta) - R` about the area centroid, from a
    /// uniform resampling in `theta`.
    pub fn mode_decomposition(&self, k_max: usize) -> Result<ModeDecomposition, GeometryError> {
        self.check_measurable("mode decomposition")?;
        let center = self.centroid();
        let m = ANGULAR_SAMPLES.max(4 * (k_max + 1));
        let mut radii = Vec::with_capacity(m);
        for i in 0..m {
            let th = 2.0 * PI * i as f64 / m as f64;
            let r = self
                .radius_along(center, th)
                .ok_or_else(|| GeometryError::Degenerate("centroid lies outside the loop".into()))?;
            radii.push(r);
        }
        let mean_radius = radii.iter().sum::<f64>() / m as f64;
        let mut cosine = vec![0.0; k_max + 1];
        let mut sine = vec![0.0; k_max + 1];
        for k in 1..=k_max {
            let (mut a, mut b) = (0.0, 0.0);
            for (i, r) in radii.iter().enumerate() {
                let th = 2.0 * PI * (k * i) as f64 / m as f64;
                a += (r - mean_radius) * th.cos();
                b += (r - mean_radius) * th.sin();
            }
            cosine[k] = 2.0 * a / m as f64;
            sine[k] = 2.0 * b / m as f64;
        }
        Ok(ModeDecomposition {
            center,
            mean_radius,
            cosine,
            sine,
        })
    }

    /// `x,y,curvature` rows with a header; curvature is left empty when it
    /// cannot be estimated.
    pub fn to_csv(&self, curvature: Option<&[f64]>) -> String {
        let mut out = String::from("x,y,curvature\n");
        for (i, p) in self.vertices.iter().enumerate() {
            match curvature.and_then(|c| c.get(i)) {
                Some(k) => writeln!(out, "{:.12e},{:.12e},{:.12e}", p[0], p[1], k),
                None => writeln!(out, "{:.12e},{:.12e},", p[0], p[1]),
            }
            .expect("writing to a string");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shoelace_area_of_unit_square() {
        let c = InterfaceCurve::from_vertices(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap();
        assert_eq!(c.signed_area(), 1.0);
        assert_eq!(c.centroid(), [0.5, 0.5]);
        assert_eq!(c.perimeter(), 4.0);
        assert_eq!(c.arclength(), vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn exact_circle_vertices_give_exact_curvature() {
        let r = 0.25;
        let h = 1.0 / 256.0;
        let n = (2.0 * PI * r / h).round() as usize;
        let c = InterfaceCurve::polar([0.5, 0.5], r, &[], n).unwrap();
        let bound = 2.0 * (h / r).powi(2);
        for k in c.curvature().unwrap() {
            assert!((k * r - 1.0).abs() <= bound, "{k}");
            assert!((k * r - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn clockwise_loop_has_negative_curvature() {
        let mut v = InterfaceCurve::polar([0.0, 0.0], 2.0, &[], 64).unwrap().vertices().to_vec();
        v.reverse();
        let c = InterfaceCurve::from_vertices(v).unwrap();
        assert!(c.curvature().unwrap().iter().all(|&k| (k + 0.5).abs() < 1e-9));
    }

    #[test]
    fn straight_stencil_has_zero_curvature() {
        let pts = [[0.0, 0.0], [0.3, 0.1], [0.61, 0.203333333333333333], [0.9, 0.3], [1.2, 0.4]];
        let line = pts.map(|p| [p[0], p[0] / 3.0]);
        assert!(stencil_curvature(line).abs() < 1e-10);
        // Uneven spacing along the line
        let uneven = [0.0, 0.01, 0.5, 0.51, 2.0].map(|t| [1.0 + 2.0 * t, -3.0 + t]);
        assert!(stencil_curvature(uneven).abs() < 1e-10);
        let _ = pts;
    }

    #[test]
    fn recovers_a_single_mode() {
        let delta = 0.005;
        let c = InterfaceCurve::polar([0.4, 0.6], 0.25, &[(3, delta, 0.0)], 800).unwrap();
        let m = c.mode_decomposition(DEFAULT_MODE_CUTOFF).unwrap();
        assert!((m.amplitude(3) - delta).abs() < 0.01 * delta, "{}", m.amplitude(3));
        for k in (1..=8).filter(|&k| k != 3) {
            assert!(m.amplitude(k) < 0.01 * delta, "mode {k}: {}", m.amplitude(k));
        }
        assert!((m.mean_radius - 0.25).abs() < 1e-4);
    }

    #[test]
    fn decomposition_inverts_synthesis() {
        let modes = [(2, 0.004, -0.002), (4, 0.0, 0.003), (5, 0.001, 0.001)];
        let c = InterfaceCurve::polar([0.5, 0.5], 0.3, &modes, 1000).unwrap();
        let m = c.mode_decomposition(8).unwrap();
        for (k, a, b) in modes {
            let amp = f64::hypot(a, b);
            assert!((m.cosine[k] - a).abs() < 0.01 * amp);
            assert!((m.sine[k] - b).abs() < 0.01 * amp);
        }
    }

    #[test]
    fn self_intersection_is_rejected() {
        let bow = InterfaceCurve::from_vertices(
            (0..32)
                .map(|i| {
                    let t = 2.0 * PI * i as f64 / 32.0;
                    [t.sin(), (2.0 * t).sin()]
                })
                .collect(),
        )
        .unwrap();
        assert!(bow.is_self_intersecting());
        assert!(matches!(bow.curvature(), Err(GeometryError::Degenerate(_))));
        let circle = InterfaceCurve::polar([0.0, 0.0], 1.0, &[], 32).unwrap();
        assert!(!circle.is_self_intersecting());
    }

    #[test]
    fn too_few_vertices() {
        let c = InterfaceCurve::polar([0.0, 0.0], 1.0, &[], 10).unwrap();
        assert!(matches!(c.curvature(), Err(GeometryError::TooFewVertices { .. })));
    }

    #[test]
    fn csv_has_one_row_per_vertex() {
        let c = InterfaceCurve::polar([0.0, 0.0], 1.0, &[], 20).unwrap();
        let k = c.curvature().unwrap();
        let csv = c.to_csv(Some(&k));
        assert_eq!(csv.lines().count(), 21);
        assert!(csv.starts_with("x,y,curvature\n"));
    }
}
