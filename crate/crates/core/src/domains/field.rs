//! Finite-difference gradients and the flux-form p-Laplace operator on grids.

use rayon::prelude::*;

use super::grid::Grid;

/// Coordinate partial derivatives of a nodal field, stored as `out[node * dim + axis]`.
///
/// Central differences where both neighbors exist, second-order one-sided
/// differences at boundary nodes.
pub fn coordinate_gradient(grid: &Grid, u: &[f64]) -> Vec<f64> {
    let dim = grid.dim();
    let mut out = vec![0.0; grid.len() * dim];
    out.par_chunks_mut(dim).enumerate().for_each(|(node, d)| {
        for (a, slot) in d.iter_mut().enumerate() {
            *slot = partial(grid, u, node, a);
        }
    });
    out
}

fn partial(grid: &Grid, u: &[f64], node: usize, a: usize) -> f64 {
    let h = grid.axes[a].step;
    match (grid.neighbor(node, a, 0), grid.neighbor(node, a, 1)) {
        (Some(m), Some(p)) => (u[p] - u[m]) / (2.0 * h),
        (None, Some(p)) => match grid.neighbor(p, a, 1) {
            Some(pp) if pp != node => (-3.0 * u[node] + 4.0 * u[p] - u[pp]) / (2.0 * h),
            _ => (u[p] - u[node]) / h,
        },
        (Some(m), None) => match grid.neighbor(m, a, 0) {
            Some(mm) if mm != node => (3.0 * u[node] - 4.0 * u[m] + u[mm]) / (2.0 * h),
            _ => (u[node] - u[m]) / h,
        },
        (None, None) => 0.0,
    }
}

/// Squared Riemannian norm `sum_i g^{ii} d_i^2` of coordinate partials `d` at `x`.
pub fn metric_norm_sq(grid: &Grid, x: &[f64], d: &[f64]) -> f64 {
    let mut g = [0.0; 4];
    let g = &mut g[..grid.dim()];
    grid.chart.inv_metric(x, g);
    g.iter().zip(d).map(|(gi, di)| gi * di * di).sum()
}

/// Pointwise `|grad u|` from coordinate partials.
pub fn gradient_magnitude(grid: &Grid, partials: &[f64]) -> Vec<f64> {
    let dim = grid.dim();
    (0..grid.len())
        .into_par_iter()
        .map(|n| metric_norm_sq(grid, grid.coords(n), &partials[n * dim..(n + 1) * dim]).sqrt())
        .collect()
}

/// True when `(node, m)` is an edge through a coordinate pole, whose face carries no flux.
pub(crate) fn is_pole_edge(grid: &Grid, node: usize, m: usize, axis: usize) -> bool {
    !grid.axes[axis].periodic && grid.index(node, axis) == grid.index(m, axis)
}

/// Flux-form discretization of `div(|grad u|_a^(p-2) diag(a) grad u)` with
/// `|xi|_a^2 = sum a_i g^{ii} xi_i^2` regularized by `delta`.
///
/// Returns `Some(value)` at nodes with a full stencil and `None` elsewhere.
pub fn p_laplace_flux_form(grid: &Grid, u: &[f64], p: f64, delta: f64, aniso: &[f64]) -> Vec<Option<f64>> {
    let dim = grid.dim();
    let partials = coordinate_gradient(grid, u);
    (0..grid.len())
        .into_par_iter()
        .map(|n| {
            if !grid.has_full_stencil(n) {
                return None;
            }
            let mut x = [0.0; 4];
            let mut g = [0.0; 4];
            let mut d = [0.0; 4];
            let mut acc = 0.0;
            for a in 0..dim {
                let h = grid.axes[a].step;
                for side in 0..2 {
                    let m = grid.neighbor(n, a, side).expect("full stencil");
                    if is_pole_edge(grid, n, m, a) {
                        continue;
                    }
                    grid.edge_point(n, m, 0.5, &mut x[..dim]);
                    grid.chart.inv_metric(&x[..dim], &mut g[..dim]);
                    let w = grid.chart.volume_density(&x[..dim]);
                    for j in 0..dim {
                        d[j] = 0.5 * (partials[n * dim + j] + partials[m * dim + j]);
                    }
                    let sign = if side == 1 { 1.0 } else { -1.0 };
                    d[a] = sign * (u[m] - u[n]) / h;
                    let s2: f64 = (0..dim).map(|j| aniso[j] * g[j] * d[j] * d[j]).sum();
                    let phi = (s2 + delta * delta).powf(0.5 * (p - 2.0));
                    acc += sign * w * g[a] * aniso[a] * phi * d[a] / h;
                }
            }
            Some(acc / grid.density(n))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::grid::{build_grid, compact_box, GridSpec};
    use crate::domains::model::ModelDomain;

    #[test]
    fn gradient_exact_for_quadratics() {
        let g = compact_box(&[[0.0, 1.0], [0.0, 2.0]], &[11, 21]).unwrap();
        let u = g.sample(|x| x[0] * x[0] + 3.0 * x[1]);
        let d = coordinate_gradient(&g, &u);
        for n in 0..g.len() {
            let x = g.coords(n);
            assert!((d[2 * n] - 2.0 * x[0]).abs() < 1e-12);
            assert!((d[2 * n + 1] - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn log_r_is_harmonic_in_polar_chart() {
        let grid = build_grid(&ModelDomain::plane_annulus(1.0), &GridSpec::new(vec![33, 32], 3.0)).unwrap();
        let u = grid.sample(|x| x[0].ln());
        let r = p_laplace_flux_form(&grid, &u, 2.0, 0.0, &[1.0, 1.0]);
        let max = r.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max < 5e-3, "{max}");
    }
}
