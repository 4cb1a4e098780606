use std::f64::consts::{PI, SQRT_2};

use sharpch::geometry::{extract_zero_set, signed_distance, Disk, Geometry, InterfaceCurve};
use sharpch::spectral::{DomainGrid, SpectralField};

fn kink_circle(n: usize, r0: f64, eps: f64) -> SpectralField {
    let g = DomainGrid::unit_square(n).unwrap();
    SpectralField::from_fn(&g, |x, y| ((r0 - (x - 0.5).hypot(y - 0.5)) / (SQRT_2 * eps)).tanh()).unwrap()
}

#[test]
fn contour_curvature_of_circle_at_256() {
    let u = kink_circle(256, 0.25, 0.01);
    let curves = extract_zero_set(&u).unwrap();
    assert_eq!(curves.len(), 1);
    let k = curves[0].curvature().unwrap();
    for v in k {
        assert!((v - 4.0).abs() < 0.02 * 4.0, "{v}");
    }
}

#[test]
fn circle_area_converges_at_second_order() {
    let errors: Vec<f64> = [128, 256, 512]
        .iter()
        .map(|&n| {
            let g = DomainGrid::unit_square(n).unwrap();
            let d = signed_distance(&Geometry::Circle(Disk::new([0.503, 0.4911], 0.25)), &g).unwrap();
            let c = &extract_zero_set(&d).unwrap()[0];
            (c.area() - PI * 0.0625).abs()
        })
        .collect();
    let order = (errors[0] / errors[2]).log2() / 2.0;
    assert!(order >= 1.8, "{errors:?} order {order}");
}

#[test]
fn shoelace_is_self_consistent() {
    let u = kink_circle(128, 0.3, 0.02);
    let c = &extract_zero_set(&u).unwrap()[0];
    // Area of the reversed loop, summed in the opposite order.
    let mut v = c.vertices().to_vec();
    v.reverse();
    let back = InterfaceCurve::from_vertices(v).unwrap();
    assert!((c.signed_area() + back.signed_area()).abs() <= 1e-12 * c.area());
}

#[test]
fn extracted_perturbation_mode() {
    let g = DomainGrid::unit_square(256).unwrap();
    let delta = 0.01;
    let geom = Geometry::PerturbedCircle {
        center: [0.5, 0.5],
        radius: 0.25,
        modes: vec![(3, delta)],
    };
    let d = signed_distance(&geom, &g).unwrap();
    let c = &extract_zero_set(&d).unwrap()[0];
    let m = c.mode_decomposition(8).unwrap();
    assert!((m.amplitude(3) - delta).abs() < 0.02 * delta, "{}", m.amplitude(3));
    assert!((m.mean_radius - 0.25).abs() < 0.1 * g.spacing());
}
