use super::curve::nearest_on_segment;
use super::InterfaceCurve;

/// Normal velocity of an interface between two observations.
#[derive(Debug, Clone, PartialEq)]
pub enum VelocityEstimate {
    /// Per loop of the earlier curve set, the normal velocity at each vertex,
    /// positive where the `+` phase advances.
    Normal(Vec<Vec<f64>>),
    /// The number of loops changed; no velocity is defined.
    TopologyChange { before: usize, after: usize },
}

/// Normal velocity by nearest-point projection: each vertex of `before` is
/// matched to its closest point on `after`, and the displacement is
/// projected on the outward normal of the `+` phase.
pub fn interface_velocity(before: &[InterfaceCurve], after: &[InterfaceCurve], dt: f64) -> VelocityEstimate {
    assert!(dt > 0.0, "time step must be positive");
    if before.len() != after.len() {
        return VelocityEstimate::TopologyChange {
            before: before.len(),
            after: after.len(),
        };
    }
    let normal_speed = |curve: &InterfaceCurve| -> Vec<f64> {
        let v = curve.vertices();
        let n = v.len();
        (0..n)
            .map(|i| {
                let p = v[i];
                let (a, b) = (v[(i + n - 1) % n], v[(i + 1) % n]);
                let t = [b[0] - a[0], b[1] - a[1]];
                let tl = t[0].hypot(t[1]);
                // `+` lies to the left, so the outward normal is the right one.
                let normal = [t[1] / tl, -t[0] / tl];
                let mut best = ([0.0; 2], f64::INFINITY);
                for c in after {
                    for (a, b) in c.edges() {
                        let cand = nearest_on_segment(p, a, b);
                        if cand.1 < best.1 {
                            best = cand;
                        }
                    }
                }
                let d = [best.0[0] - p[0], best.0[1] - p[1]];
                (d[0] * normal[0] + d[1] * normal[1]) / dt
            })
            .collect()
    };
    VelocityEstimate::Normal(before.iter().map(normal_speed).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle(c: [f64; 2], r: f64) -> InterfaceCurve {
        InterfaceCurve::polar(c, r, &[], 400).unwrap()
    }

    fn speeds(e: VelocityEstimate) -> Vec<f64> {
        match e {
            VelocityEstimate::Normal(v) => v.into_iter().flatten().collect(),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn identical_curves_do_not_move() {
        let c = circle([0.5, 0.5], 0.25);
        assert!(speeds(interface_velocity(&[c.clone()], &[c], 0.1)).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn growing_circle() {
        let h = 2.0 / 256.0;
        let dt = 1e-3;
        let v = speeds(interface_velocity(&[circle([0.5, 0.5], 0.25)], &[circle([0.5, 0.5], 0.25 + h)], dt));
        for s in v {
            assert!((s - h / dt).abs() < 0.01 * h / dt, "{s}");
        }
    }

    #[test]
    fn translation_projects_on_normal() {
        let shift: [f64; 2] = [0.003, -0.002];
        let c = circle([0.5, 0.5], 0.25);
        let moved = circle([0.503, 0.498], 0.25);
        let v = speeds(interface_velocity(&[c.clone()], &[moved], 1.0));
        let scale = shift[0].hypot(shift[1]);
        for (s, p) in v.iter().zip(c.vertices()) {
            let n = [(p[0] - 0.5) / 0.25, (p[1] - 0.5) / 0.25];
            let expected = shift[0] * n[0] + shift[1] * n[1];
            assert!((s - expected).abs() < 0.02 * scale, "{s} vs {expected}");
        }
    }

    #[test]
    fn loop_count_change_is_reported() {
        let c = circle([0.5, 0.5], 0.25);
        let e = interface_velocity(&[c.clone()], &[c.clone(), circle([0.1, 0.1], 0.05)], 1.0);
        assert_eq!(e, VelocityEstimate::TopologyChange { before: 1, after: 2 });
    }
}
