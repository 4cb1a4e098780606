//! Marching squares on the node lattice.
//!
//! Cells join four neighbouring nodes. A node counts as positive when
//! `u > 0`. Crossing points are placed by linear interpolation along cell
//! edges. In the two ambiguous (saddle) cases the sign of the average of the
//! four corner values decides: a positive average joins the positive corners
//! through the cell, otherwise the negative corners are joined.

use std::collections::HashMap;

use super::curve::CONTOUR_STENCIL_CELLS;
use super::{GeometryError, InterfaceCurve};
use crate::spectral::SpectralField;

/// A traced component of the zero level set.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub vertices: Vec<[f64; 2]>,
    /// Closed loops do not repeat their first vertex.
    pub closed: bool,
}

/// Every component of the zero level set, open ones included.
///
/// Open polylines end on the outermost ring of cells, i.e. where the level
/// set leaves the region covered by nodes.
pub fn trace_zero_level(u: &SpectralField) -> Vec<Polyline> {
    let grid = u.grid();
    let (nx, ny) = (grid.nx(), grid.ny());
    let values = u.nodal();
    let at = |i: usize, j: usize| values[j * nx + i];
    let positive = |v: f64| v > 0.0;

    // Edge ids: 2 * node for the edge to the right neighbour, 2 * node + 1
    // for the edge to the upper neighbour.
    let horizontal = |i: usize, j: usize| 2 * (j * nx + i);
    let vertical = |i: usize, j: usize| 2 * (j * nx + i) + 1;

    let crossing = |edge: usize| -> [f64; 2] {
        let node = edge / 2;
        let (i, j) = (node % nx, node / nx);
        let (i2, j2) = if edge % 2 == 0 { (i + 1, j) } else { (i, j + 1) };
        let (a, b) = (at(i, j), at(i2, j2));
        let t = a / (a - b);
        let [xa, ya] = grid.node(i, j);
        let [xb, yb] = grid.node(i2, j2);
        [xa + t * (xb - xa), ya + t * (yb - ya)]
    };

    let mut next: HashMap<usize, usize> = HashMap::new();
    let mut has_incoming: HashMap<usize, ()> = HashMap::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let corners = [at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)];
            let signs = corners.map(positive);
            // Cell boundary traversed counterclockwise: bottom, right, top, left.
            let edges = [horizontal(i, j), vertical(i + 1, j), horizontal(i, j + 1), vertical(i, j)];
            let mut cuts: Vec<(usize, bool)> = Vec::with_capacity(4);
            for s in 0..4 {
                let (from, to) = (signs[s], signs[(s + 1) % 4]);
                if from != to {
                    // true when walking from the positive to the negative side
                    cuts.push((edges[s], from));
                }
            }
            let mut link = |a: usize, b: usize| {
                next.insert(a, b);
                has_incoming.insert(b, ());
            };
            match cuts.len() {
                0 => {}
                2 => {
                    let (start, end) = if cuts[0].1 { (cuts[0].0, cuts[1].0) } else { (cuts[1].0, cuts[0].0) };
                    link(start, end);
                }
                4 => {
                    let centre_positive = corners.iter().sum::<f64>() > 0.0;
                    for k in 0..4 {
                        if cuts[k].1 {
                            let partner = if centre_positive { (k + 1) % 4 } else { (k + 3) % 4 };
                            link(cuts[k].0, cuts[partner].0);
                        }
                    }
                }
                _ => unreachable!("a square has an even number of sign changes"),
            }
        }
    }

    let mut out = Vec::new();
    let mut visited: HashMap<usize, ()> = HashMap::new();
    let walk = |start: usize, visited: &mut HashMap<usize, ()>| -> Polyline {
        let mut edges = vec![start];
        visited.insert(start, ());
        let mut cur = start;
        let mut closed = false;
        while let Some(&n) = next.get(&cur) {
            if n == start {
                closed = true;
                break;
            }
            edges.push(n);
            visited.insert(n, ());
            cur = n;
        }
        let mut vertices: Vec<[f64; 2]> = Vec::with_capacity(edges.len());
        for e in edges {
            let p = crossing(e);
            // A node value of exactly zero puts two crossings on the node.
            if vertices.last() != Some(&p) {
                vertices.push(p);
            }
        }
        if closed && vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        Polyline { vertices, closed }
    };

    // Open chains first: they start at edges nobody links into.
    let mut starts: Vec<usize> = next.keys().copied().filter(|e| !has_incoming.contains_key(e)).collect();
    starts.sort_unstable();
    for s in starts {
        out.push(walk(s, &mut visited));
    }
    let mut rest: Vec<usize> = next.keys().copied().collect();
    rest.sort_unstable();
    for s in rest {
        if !visited.contains_key(&s) {
            out.push(walk(s, &mut visited));
        }
    }
    out
}

/// Closed loops of the zero level set, counterclockwise around `u > 0`.
pub fn extract_zero_set(u: &SpectralField) -> Result<Vec<InterfaceCurve>, GeometryError> {
    let lines = trace_zero_level(u);
    if lines.is_empty() {
        return Err(GeometryError::EmptyInterface);
    }
    if lines.iter().any(|l| !l.closed) {
        return Err(GeometryError::BoundaryContact);
    }
    let spacing = CONTOUR_STENCIL_CELLS * u.grid().spacing();
    Ok(lines
        .into_iter()
        .map(|l| InterfaceCurve::from_vertices_unchecked(l.vertices, Some(spacing)))
        .collect())
}
