//! Orthonormal cosine transform pair on a [`DomainGrid`].
//!
//! Coefficients are L2 inner products with the orthonormal Neumann
//! eigenfunctions, `u_hat_k = <u, e_k>`, evaluated with the midpoint rule.
//! Consequently
//!
//! * `||u||_{L2}^2 = sum_k u_hat_k^2` exactly (discrete Parseval), and
//! * `mean(u) = u_hat_(0,0) / sqrt(|D|)`.

use super::grid::{axis_norm, DomainGrid};

/// Nodal values to cosine coefficients (DCT-II along both axes).
pub fn forward(grid: &DomainGrid, nodal: &[f64]) -> Vec<f64> {
    let (nx, ny) = (grid.nx(), grid.ny());
    debug_assert_eq!(nodal.len(), nx * ny);
    let mut data = nodal.to_vec();
    transform_rows(&mut data, nx, grid.plan_x.get_scratch_len(), |row, scratch| {
        grid.plan_x.process_dct2_with_scratch(row, scratch)
    });
    let mut cols = transpose(&data, nx, ny);
    transform_rows(&mut cols, ny, grid.plan_y.get_scratch_len(), |col, scratch| {
        grid.plan_y.process_dct2_with_scratch(col, scratch)
    });
    let mut out = transpose(&cols, ny, nx);

    let w = grid.cell_area();
    let cx: Vec<f64> = (0..nx).map(|k| axis_norm(k, grid.lx())).collect();
    let cy: Vec<f64> = (0..ny).map(|k| axis_norm(k, grid.ly())).collect();
    for (ky, row) in out.chunks_exact_mut(nx).enumerate() {
        for (kx, c) in row.iter_mut().enumerate() {
            *c *= w * cx[kx] * cy[ky];
        }
    }
    out
}

/// Cosine coefficients to nodal values (DCT-III along both axes).
pub fn inverse(grid: &DomainGrid, coefficients: &[f64]) -> Vec<f64> {
    let (nx, ny) = (grid.nx(), grid.ny());
    debug_assert_eq!(coefficients.len(), nx * ny);
    // DCT-III evaluates X_0 / 2 + sum_{k>0} X_k cos(..), hence the doubled k = 0 weight.
    let cx: Vec<f64> = (0..nx)
        .map(|k| axis_norm(k, grid.lx()) * if k == 0 { 2.0 } else { 1.0 })
        .collect();
    let cy: Vec<f64> = (0..ny)
        .map(|k| axis_norm(k, grid.ly()) * if k == 0 { 2.0 } else { 1.0 })
        .collect();
    let mut data = coefficients.to_vec();
    for (ky, row) in data.chunks_exact_mut(nx).enumerate() {
        for (kx, c) in row.iter_mut().enumerate() {
            *c *= cx[kx] * cy[ky];
        }
    }
    transform_rows(&mut data, nx, grid.plan_x.get_scratch_len(), |row, scratch| {
        grid.plan_x.process_dct3_with_scratch(row, scratch)
    });
    let mut cols = transpose(&data, nx, ny);
    transform_rows(&mut cols, ny, grid.plan_y.get_scratch_len(), |col, scratch| {
        grid.plan_y.process_dct3_with_scratch(col, scratch)
    });
    transpose(&cols, ny, nx)
}

fn transform_rows<F>(data: &mut [f64], len: usize, scratch_len: usize, mut op: F)
where
    F: FnMut(&mut [f64], &mut [f64]),
{
    let mut scratch = vec![0.0; scratch_len];
    for row in data.chunks_exact_mut(len) {
        op(row, &mut scratch);
    }
}

/// Transpose a row-major `rows x cols` array (row length `cols`).
fn transpose(data: &[f64], cols: usize, rows: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    const BLOCK: usize = 32;
    for jb in (0..rows).step_by(BLOCK) {
        for ib in (0..cols).step_by(BLOCK) {
            for j in jb..(jb + BLOCK).min(rows) {
                for i in ib..(ib + BLOCK).min(cols) {
                    out[i * rows + j] = data[j * cols + i];
                }
            }
        }
    }
    out
}
