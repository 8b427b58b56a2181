use std::sync::Arc;

use relaxopt::problem::{parabola_field, FieldFn};
use relaxopt::sampling::convex_hull_2d;
use relaxopt::{hull_points, sample_grid, AtomSet, ControlBox, Problem};

fn contains(points: &[Vec<f64>], hull: &[usize], q: &[f64]) -> bool {
    (0..hull.len()).all(|j| {
        let (a, b) = (&points[hull[j]], &points[hull[(j + 1) % hull.len()]]);
        (b[0] - a[0]) * (q[1] - a[1]) - (b[1] - a[1]) * (q[0] - a[0]) >= -1e-9
    })
}

#[test]
fn parabola_hull_has_the_extreme_points() {
    let p = parabola_field().unwrap();
    let atoms = sample_grid(p.control_box(), &[101]).unwrap();
    let data = hull_points(&p, 0.0, &[0.0, 0.0], &atoms).unwrap();
    assert_eq!(data.points.len(), 101);
    for (u, f) in atoms.iter().zip(&data.points) {
        assert!((f[0] - (u[0] * u[0] + 1.0)).abs() < 1e-15);
        assert_eq!(f[1], u[0]);
    }
    let hull = data.hull_indices.unwrap();
    let vertices: Vec<&Vec<f64>> = hull.iter().map(|&i| &data.points[i]).collect();
    for corner in [[2.0, -1.0], [2.0, 1.0], [1.0, 0.0]] {
        assert!(vertices.iter().any(|v| (v[0] - corner[0]).abs() < 1e-12 && (v[1] - corner[1]).abs() < 1e-12));
    }
    assert!(data.points.iter().all(|q| contains(&data.points, &hull, q)));
}

#[test]
fn shifted_state_translates_the_set() {
    let p = parabola_field().unwrap();
    let atoms = sample_grid(p.control_box(), &[11]).unwrap();
    let base = hull_points(&p, 0.0, &[0.0, 0.0], &atoms).unwrap();
    let moved = hull_points(&p, 0.0, &[0.5, -2.0], &atoms).unwrap();
    for (a, b) in base.points.iter().zip(&moved.points) {
        assert!((b[0] - a[0] - 0.5).abs() < 1e-15 && (b[1] - a[1] + 2.0).abs() < 1e-15);
    }
    assert_eq!(base.hull_indices, moved.hull_indices);
}

#[test]
fn single_atom_is_its_own_hull() {
    let p = parabola_field().unwrap();
    let atoms = AtomSet::from_atoms(&[vec![0.3]]).unwrap();
    let data = hull_points(&p, 0.0, &[0.0, 0.0], &atoms).unwrap();
    assert_eq!(data.points.len(), 1);
    assert_eq!(data.hull_indices, Some(vec![0]));
}

#[test]
fn affine_field_hull_is_the_image_of_the_box_corners() {
    // f = B u with an invertible B maps the box corners to the hull vertices.
    let b = [[1.0, 0.5], [-0.3, 2.0]];
    let field: FieldFn = Arc::new(move |_t, _x, u, out| {
        out[0] = b[0][0] * u[0] + b[0][1] * u[1];
        out[1] = b[1][0] * u[0] + b[1][1] * u[1];
    });
    let bx = ControlBox::new(vec![-1.0, 0.0], vec![2.0, 1.0]).unwrap();
    let p = Problem::new("affine", 1.0, vec![0.0, 0.0], bx.clone(), field, Arc::new(|_x| 0.0)).unwrap();
    let atoms = sample_grid(&bx, &[7, 5]).unwrap();
    let data = hull_points(&p, 0.0, &[0.0, 0.0], &atoms).unwrap();
    let mut got: Vec<Vec<f64>> = data.hull_indices.unwrap().iter().map(|&i| data.points[i].clone()).collect();
    let mut corners: Vec<Vec<f64>> = [[-1.0, 0.0], [2.0, 0.0], [-1.0, 1.0], [2.0, 1.0]]
        .iter()
        .map(|u| vec![b[0][0] * u[0] + b[0][1] * u[1], b[1][0] * u[0] + b[1][1] * u[1]])
        .collect();
    let key = |v: &Vec<f64>| ((v[0] * 1e9).round() as i64, (v[1] * 1e9).round() as i64);
    got.sort_by_key(key);
    corners.sort_by_key(key);
    assert_eq!(got.len(), 4);
    for (g, c) in got.iter().zip(&corners) {
        assert!((g[0] - c[0]).abs() < 1e-12 && (g[1] - c[1]).abs() < 1e-12);
    }
}

#[test]
fn higher_dimensional_states_skip_the_hull() {
    let field: FieldFn = Arc::new(|_t, x, u, out| {
        out[0] = u[0];
        out[1] = x[0];
        out[2] = 1.0;
    });
    let p = Problem::new("three", 1.0, vec![0.0; 3], ControlBox::cube(1, 0.0, 1.0).unwrap(), field, Arc::new(|x| x[0]))
        .unwrap();
    let atoms = sample_grid(p.control_box(), &[4]).unwrap();
    let data = hull_points(&p, 0.0, &[1.0, 2.0, 3.0], &atoms).unwrap();
    assert_eq!(data.points.len(), 4);
    assert!(data.hull_indices.is_none());
}

#[test]
fn hull_drops_collinear_and_duplicate_points() {
    let pts: Vec<Vec<f64>> = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0], [1.0, 1.0], [2.0, 2.0]]
        .iter()
        .map(|p| p.to_vec())
        .collect();
    let hull = convex_hull_2d(&pts);
    assert_eq!(hull.len(), 4);
    assert!(!hull.contains(&1) && !hull.contains(&5));
    assert!(pts.iter().all(|q| contains(&pts, &hull, q)));
}
