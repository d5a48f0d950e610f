//! Convex p-Dirichlet energies on cell grids and their minimization.
//!
//! Each cell contributes one term per corner, with the gradient taken from the cell edges
//! meeting at that corner and the metric evaluated at the corner node:
//! `E(u) = sum_cells sum_corners w (sum_a c_a g^aa (du_a)^2 + delta^2)^(p/2)`.

use rayon::prelude::*;

use crate::domains::Grid;
use crate::error::{Error, Result};

const CELL_CHUNK: usize = 1024;

/// Discrete energy `int (|grad u|_c^2 + delta^2)^(p/2) dV` on a grid.
#[derive(Debug, Clone)]
pub struct EnergyForm {
    p: f64,
    delta: f64,
    dim: usize,
    nodes: usize,
    cells: Vec<u32>,
    /// Per cell corner: volume weight.
    weight: Vec<f64>,
    /// Per cell corner and axis: `c_a g^aa / step_a^2`.
    coef: Vec<f64>,
    incidence_start: Vec<usize>,
    incidence: Vec<u32>,
}

impl EnergyForm {
    /// Isotropic form `|grad u|^p`.
    pub fn new(grid: &Grid, p: f64, delta: f64) -> Self {
        Self::anisotropic(grid, p, delta, &vec![1.0; grid.dim()])
    }

    /// Form with `|xi|_c^2 = sum_a c_a g^aa xi_a^2` for positive per-axis weights `c`.
    pub fn anisotropic(grid: &Grid, p: f64, delta: f64, c: &[f64]) -> Self {
        Self::on_cells(grid, p, delta, c, |_| true)
    }

    /// Form restricted to the cells whose corners all satisfy `inside`.
    pub fn on_cells(grid: &Grid, p: f64, delta: f64, c: &[f64], inside: impl Fn(usize) -> bool) -> Self {
        let dim = grid.dim();
        let corners = 1usize << dim;
        let ncell = grid.cell_count();
        let cell_volume: f64 = grid.axes.iter().map(|a| a.step).product::<f64>() / corners as f64;
        let mut cells = Vec::with_capacity(ncell * corners);
        let mut weight = Vec::with_capacity(ncell * corners);
        let mut coef = Vec::with_capacity(ncell * corners * dim);
        let mut g = vec![0.0; dim];
        let mut count = vec![0usize; grid.len() + 1];
        for cell in 0..ncell {
            if !grid.cell(cell).iter().all(|&n| inside(n as usize)) {
                continue;
            }
            for &n in grid.cell(cell) {
                let n = n as usize;
                cells.push(n as u32);
                weight.push(cell_volume * grid.density(n));
                grid.inv_metric(n, &mut g);
                for a in 0..dim {
                    let s = grid.axes[a].step;
                    coef.push(c[a] * g[a] / (s * s));
                }
                count[n + 1] += 1;
            }
        }
        for i in 0..grid.len() {
            count[i + 1] += count[i];
        }
        let mut fill = count.clone();
        let mut incidence = vec![0u32; cells.len()];
        for (slot, &n) in cells.iter().enumerate() {
            incidence[fill[n as usize]] = slot as u32;
            fill[n as usize] += 1;
        }
        EnergyForm {
            p,
            delta,
            dim,
            nodes: grid.len(),
            cells,
            weight,
            coef,
            incidence_start: count,
            incidence,
        }
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Same form with a different regularization.
    pub fn with_delta(&self, delta: f64) -> Self {
        EnergyForm { delta, ..self.clone() }
    }

    /// Number of cell corners at node `n`; zero for nodes outside every cell.
    pub fn incidence(&self, n: usize) -> usize {
        self.incidence_start[n + 1] - self.incidence_start[n]
    }

    fn corners(&self) -> usize {
        1 << self.dim
    }

    /// Energy of one cell; accumulates gradient and curvature per corner slot when asked.
    fn cell_terms(&self, u: &[f64], c: usize, mut out: Option<(&mut [f64], &mut [f64])>) -> f64 {
        let k = self.corners();
        let dim = self.dim;
        let p = self.p;
        let base = c * k;
        let mut vals = [0.0; 8];
        for b in 0..k {
            vals[b] = u[self.cells[base + b] as usize];
        }
        let mut e = 0.0;
        for b in 0..k {
            let coef = &self.coef[(base + b) * dim..(base + b + 1) * dim];
            let mut du = [0.0; 3];
            let mut s = self.delta * self.delta;
            for a in 0..dim {
                let bit = 1 << a;
                du[a] = vals[b | bit] - vals[b & !bit];
                s += coef[a] * du[a] * du[a];
            }
            let w = self.weight[base + b];
            let sp = if p == 2.0 { 1.0 } else { s.powf(0.5 * p - 1.0) };
            e += w * s * sp;
            if let Some((sg, sd)) = out.as_mut() {
                let f = w * p * sp;
                let curv = (p - 1.0).max(1.0) * f;
                for a in 0..dim {
                    let bit = 1 << a;
                    let (hi, lo) = (b | bit, b & !bit);
                    let g = f * coef[a] * du[a];
                    sg[hi] += g;
                    sg[lo] -= g;
                    sd[hi] += curv * coef[a];
                    sd[lo] += curv * coef[a];
                }
            }
        }
        e
    }

    pub fn energy(&self, u: &[f64]) -> f64 {
        let ncell = self.cells.len() / self.corners();
        let starts: Vec<usize> = (0..ncell).step_by(CELL_CHUNK).collect();
        let parts: Vec<f64> = starts
            .par_iter()
            .map(|&c0| (c0..(c0 + CELL_CHUNK).min(ncell)).map(|c| self.cell_terms(u, c, None)).sum())
            .collect();
        parts.iter().sum()
    }

    /// Energy, gradient and a positive Jacobi estimate of the Hessian diagonal.
    pub fn gradient(&self, u: &[f64], grad: &mut [f64], diag: &mut [f64]) -> f64 {
        let k = self.corners();
        let mut slot_grad = vec![0.0; self.cells.len()];
        let mut slot_diag = vec![0.0; self.cells.len()];
        let parts: Vec<f64> = slot_grad
            .par_chunks_mut(k * CELL_CHUNK)
            .zip(slot_diag.par_chunks_mut(k * CELL_CHUNK))
            .enumerate()
            .map(|(j, (sg, sd))| {
                let mut e = 0.0;
                for (i, (g, d)) in sg.chunks_mut(k).zip(sd.chunks_mut(k)).enumerate() {
                    e += self.cell_terms(u, j * CELL_CHUNK + i, Some((g, d)));
                }
                e
            })
            .collect();
        grad.par_iter_mut()
            .zip(diag.par_iter_mut())
            .enumerate()
            .with_min_len(1024)
            .for_each(|(n, (g, d))| {
                let range = self.incidence_start[n]..self.incidence_start[n + 1];
                *g = self.incidence[range.clone()].iter().map(|&s| slot_grad[s as usize]).sum();
                *d = self.incidence[range].iter().map(|&s| slot_diag[s as usize]).sum();
            });
        parts.iter().sum()
    }

    /// Directional derivative `<grad E(u + alpha d), d>`.
    fn slope(&self, u: &[f64], d: &[f64], alpha: f64, scratch: &mut [f64], grad: &mut [f64], diag: &mut [f64]) -> (f64, f64) {
        scratch.par_iter_mut().enumerate().for_each(|(i, x)| *x = u[i] + alpha * d[i]);
        let e = self.gradient(scratch, grad, diag);
        (e, dot(grad, d))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let parts: Vec<f64> = a
        .par_chunks(4096)
        .zip(b.par_chunks(4096))
        .map(|(x, y)| x.iter().zip(y).map(|(x, y)| x * y).sum::<f64>())
        .collect();
    parts.iter().sum()
}

/// Stopping rule and budget for [`minimize`].
#[derive(Debug, Clone, Copy)]
pub struct MinimizeOptions {
    /// Stop once every free node's Jacobi step `|g_i| / D_i` is below `tolerance * scale`.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            tolerance: 1e-8,
            max_iterations: 100_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimized {
    pub field: Vec<f64>,
    /// Regularized energy at `field`.
    pub energy: f64,
    pub iterations: usize,
    pub energy_history: Vec<f64>,
    pub converged: bool,
    /// Final largest Jacobi step relative to `scale`.
    pub step_ratio: f64,
}

/// Minimize the energy over fields equal to `fixed[i]` wherever it is `Some`, starting from `init`.
///
/// `scale` sets the units of the stopping rule (typically the range of the boundary data).
/// Jacobi-preconditioned Polak-Ribiere+ conjugate gradients with a secant line search on the
/// directional derivative.
pub fn minimize(form: &EnergyForm, fixed: &[Option<f64>], init: Vec<f64>, scale: f64, opts: &MinimizeOptions) -> Minimized {
    let n = form.nodes;
    assert_eq!(init.len(), n);
    assert_eq!(fixed.len(), n);
    let mut u = init;
    for (x, f) in u.iter_mut().zip(fixed) {
        if let Some(v) = f {
            *x = *v;
        }
    }
    let free: Vec<bool> = fixed.iter().map(|f| f.is_none()).collect();
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let mut grad = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut g2 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    let mut energy = form.gradient(&u, &mut grad, &mut diag);
    let mut history = vec![energy];
    let mut z = vec![0.0; n];
    let mut dir = vec![0.0; n];
    let mut rz_old = 0.0;
    let mut step_ratio = f64::INFINITY;
    let mut alpha = 1.0;
    let mut iterations = 0;
    let mut converged = false;
    let mut g_old = vec![0.0; n];
    while iterations < opts.max_iterations {
        let diag_floor = 1e-300;
        let mut worst = 0.0f64;
        for i in 0..n {
            z[i] = if free[i] { grad[i] / diag[i].max(diag_floor) } else { 0.0 };
            worst = worst.max(z[i].abs());
        }
        step_ratio = worst / scale;
        if step_ratio < opts.tolerance {
            converged = true;
            break;
        }
        let rz = dot(&grad, &z);
        let beta = if iterations == 0 {
            0.0
        } else {
            let num = rz - dot(&g_old, &z);
            (num / rz_old).max(0.0)
        };
        for i in 0..n {
            dir[i] = -z[i] + beta * dir[i];
        }
        let mut s0 = dot(&grad, &dir);
        if s0 >= 0.0 {
            for i in 0..n {
                dir[i] = -z[i];
            }
            s0 = -rz;
        }
        g_old.copy_from_slice(&grad);
        rz_old = rz;
        let guess = alpha;
        let Some((a, e_new, fresh)) = line_search(form, &u, &dir, energy, s0, guess, &mut scratch, &mut g2, &mut d2)
        else {
            break;
        };
        alpha = a;
        if fresh {
            std::mem::swap(&mut u, &mut scratch);
            std::mem::swap(&mut grad, &mut g2);
            std::mem::swap(&mut diag, &mut d2);
            energy = e_new;
        } else {
            for i in 0..n {
                u[i] += a * dir[i];
            }
            energy = form.gradient(&u, &mut grad, &mut diag);
        }
        history.push(energy);
        iterations += 1;
    }
    Minimized {
        field: u,
        energy,
        iterations,
        energy_history: history,
        converged,
        step_ratio,
    }
}

/// Step along `dir` that roughly zeroes the directional derivative without raising the energy.
///
/// Returns `(alpha, energy, fresh)`; `fresh` means the buffers hold the state at `alpha`.
#[allow(clippy::too_many_arguments)]
fn line_search(
    form: &EnergyForm,
    u: &[f64],
    dir: &[f64],
    e0: f64,
    s0: f64,
    guess: f64,
    scratch: &mut [f64],
    grad: &mut [f64],
    diag: &mut [f64],
) -> Option<(f64, f64, bool)> {
    let (mut a_lo, mut s_lo) = (0.0, s0);
    let mut hi: Option<(f64, f64)> = None;
    let mut best: Option<(f64, f64)> = None;
    let mut a = guess;
    let mut last = f64::NAN;
    for _ in 0..60 {
        let (e, s) = form.slope(u, dir, a, scratch, grad, diag);
        last = a;
        let descent = e <= e0;
        if descent && best.is_none_or(|b| e <= b.1) {
            best = Some((a, e));
        }
        if descent && s.abs() <= 1e-2 * s0.abs() {
            return Some((a, e, true));
        }
        let (prev_a, prev_s) = (a_lo, s_lo);
        if descent && s < 0.0 {
            a_lo = a;
            s_lo = s;
        } else {
            hi = Some((a, s));
        }
        a = match hi {
            None => {
                let secant = a - s * (a - prev_a) / (s - prev_s);
                if s > prev_s && secant.is_finite() {
                    secant.clamp(1.5 * a, 10.0 * a)
                } else {
                    4.0 * a
                }
            }
            Some((a_hi, s_hi)) => {
                let w = a_hi - a_lo;
                let secant = a_lo - s_lo * w / (s_hi - s_lo);
                if s_hi.is_finite() && secant.is_finite() {
                    secant.clamp(a_lo + 0.05 * w, a_hi - 0.05 * w)
                } else {
                    a_lo + 0.5 * w
                }
            }
        };
        if hi.is_some_and(|(a_hi, _)| a_hi - a_lo <= 1e-14 * a_hi) {
            break;
        }
    }
    best.map(|(a, e)| (a, e, a == last))
}

/// Error for a run that exhausted its budget.
pub fn non_convergence(m: &Minimized) -> Error {
    Error::NonConvergence {
        iterations: m.iterations,
        gradient_ratio: m.step_ratio,
    }
}

/// `Ok` when converged, `NonConvergence` otherwise.
pub fn require_converged(m: Minimized) -> Result<Minimized> {
    if m.converged {
        Ok(m)
    } else {
        Err(non_convergence(&m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::compact_box;

    fn square(m: usize) -> Grid {
        compact_box(&[[0.0, 1.0], [0.0, 1.0]], &[m, m]).unwrap()
    }

    #[test]
    fn linear_field_energy_is_exact() {
        let g = square(9);
        let u = g.sample(|x| 2.0 * x[0] - x[1]);
        let e = EnergyForm::new(&g, 2.0, 0.0).energy(&u);
        assert!((e - 5.0).abs() < 1e-12);
        let e3 = EnergyForm::new(&g, 3.0, 0.0).energy(&u);
        assert!((e3 - 5f64.powf(1.5)).abs() < 1e-11);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let g = square(8);
        let form = EnergyForm::anisotropic(&g, 3.0, 1e-3, &[1.0, 2.0]);
        let u = g.sample(|x| (3.0 * x[0]).sin() * x[1] + x[1] * x[1]);
        let mut grad = vec![0.0; g.len()];
        let mut diag = vec![0.0; g.len()];
        form.gradient(&u, &mut grad, &mut diag);
        let mut v = u.clone();
        for i in [0, 7, 20, 35, 63] {
            let h = 1e-6;
            v[i] = u[i] + h;
            let ep = form.energy(&v);
            v[i] = u[i] - h;
            let em = form.energy(&v);
            v[i] = u[i];
            let fd = (ep - em) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-6 * (1.0 + fd.abs()), "node {i}: {fd} vs {}", grad[i]);
            assert!(diag[i] > 0.0);
        }
    }

    #[test]
    fn recovers_linear_solution_from_boundary_data() {
        let g = square(16);
        let exact = g.sample(|x| x[0]);
        let fixed: Vec<Option<f64>> = (0..g.len())
            .map(|n| (g.tag(n) != crate::domains::Tag::Interior).then_some(exact[n]))
            .collect();
        for p in [1.5, 2.0, 3.0] {
            let form = EnergyForm::new(&g, p, 1e-6);
            let m = minimize(&form, &fixed, vec![0.5; g.len()], 1.0, &MinimizeOptions::default());
            assert!(m.converged, "p = {p}");
            let err = m.field.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-6, "p = {p}: {err}");
            assert!(m.energy_history.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let g = square(16);
        let fixed: Vec<Option<f64>> = (0..g.len())
            .map(|n| (g.tag(n) != crate::domains::Tag::Interior).then(|| g.coords(n)[0]))
            .collect();
        let form = EnergyForm::new(&g, 2.0, 0.0);
        let opts = MinimizeOptions { tolerance: 1e-12, max_iterations: 2 };
        let m = minimize(&form, &fixed, vec![0.0; g.len()], 1.0, &opts);
        assert!(!m.converged);
        assert_eq!(m.iterations, 2);
        assert!(matches!(require_converged(m), Err(Error::NonConvergence { iterations: 2, .. })));
    }
}
