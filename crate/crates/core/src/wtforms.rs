//! Structure conditions for scalar quasilinear equations `div A(x, grad f) = 0`.
//!
//! In the scalar case the form is `w = df` and its complementary form is the flux
//! `theta = A(x, grad f)`. Vectors are stored in the orthonormal frame of the chart's
//! coordinate directions, so pairings and norms are Euclidean.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domains::{coordinate_gradient, Grid, Tag};
use crate::error::{Error, Result};
use crate::minimize::{minimize, EnergyForm, MinimizeOptions};

/// Relative slack granted to every inequality check for rounding.
pub const MARGIN_TOL: f64 = 1e-10;

/// `A(x, xi, out)` writes the flux for the gradient `xi` at the point `x`.
pub type FluxRule = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;

#[derive(Clone)]
pub enum Preset {
    /// `A(xi) = |xi|^(p-2) xi`.
    PLaplace,
    /// `A_i(xi) = c_i |xi|_c^(p-2) xi_i` with `|xi|_c^2 = sum c_i xi_i^2`.
    AnisotropicDiagonal { weights: Vec<f64> },
    Custom { name: String, rule: FluxRule },
}

impl fmt::Debug for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preset::PLaplace => write!(f, "PLaplace"),
            Preset::AnisotropicDiagonal { weights } => write!(f, "AnisotropicDiagonal({weights:?})"),
            Preset::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

/// A flux rule with its claimed structure constants.
#[derive(Debug, Clone)]
pub struct StructureField {
    pub p: f64,
    pub nu0: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub preset: Preset,
}

impl StructureField {
    pub fn p_laplace(p: f64) -> Self {
        StructureField {
            p,
            nu0: 1.0,
            nu1: 1.0,
            nu2: 1.0,
            preset: Preset::PLaplace,
        }
    }

    /// Diagonal weights `c_i > 0`; constants `nu1 = min(c)^(p/2)`, `nu2 = max(c)^(p/2)`.
    pub fn anisotropic(p: f64, weights: Vec<f64>) -> Self {
        let lo = weights.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = weights.iter().cloned().fold(0.0, f64::max);
        let (nu1, nu2) = (lo.powf(0.5 * p), hi.powf(0.5 * p));
        StructureField {
            p,
            nu0: wt2_implies_wt1_constant(nu1, nu2, p),
            nu1,
            nu2,
            preset: Preset::AnisotropicDiagonal { weights },
        }
    }

    pub fn custom(p: f64, nu1: f64, nu2: f64, name: impl Into<String>, rule: FluxRule) -> Self {
        StructureField {
            p,
            nu0: wt2_implies_wt1_constant(nu1, nu2, p),
            nu1,
            nu2,
            preset: Preset::Custom { name: name.into(), rule },
        }
    }

    pub fn flux(&self, x: &[f64], xi: &[f64], out: &mut [f64]) {
        let p = self.p;
        match &self.preset {
            Preset::PLaplace => {
                let n2: f64 = xi.iter().map(|v| v * v).sum();
                let s = if n2 > 0.0 { n2.powf(0.5 * p - 1.0) } else { 0.0 };
                for (o, v) in out.iter_mut().zip(xi) {
                    *o = s * v;
                }
            }
            Preset::AnisotropicDiagonal { weights } => {
                let n2: f64 = xi.iter().zip(weights).map(|(v, c)| c * v * v).sum();
                let s = if n2 > 0.0 { n2.powf(0.5 * p - 1.0) } else { 0.0 };
                for ((o, v), c) in out.iter_mut().zip(xi).zip(weights) {
                    *o = s * c * v;
                }
            }
            Preset::Custom { rule, .. } => rule(x, xi, out),
        }
    }

    /// Per-axis weights of the energy `|xi|_c^p` whose gradient is `p A`, if there is one.
    pub fn potential_weights(&self, dim: usize) -> Result<Vec<f64>> {
        match &self.preset {
            Preset::PLaplace => Ok(vec![1.0; dim]),
            Preset::AnisotropicDiagonal { weights } if weights.len() == dim => Ok(weights.clone()),
            Preset::AnisotropicDiagonal { weights } => Err(Error::InvalidDomain(format!(
                "{} anisotropy weights for a {dim}-dimensional grid",
                weights.len()
            ))),
            Preset::Custom { .. } => Err(Error::NoPotential),
        }
    }
}

/// Where the worst margin of an inequality check was found.
#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    pub inequality: &'static str,
    /// Node index for grid checks.
    pub node: Option<usize>,
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    pub relative_margin: f64,
}

/// Worst relative margins of the two structure inequalities.
#[derive(Debug, Clone, Serialize)]
pub struct StructureReport {
    pub samples: usize,
    /// `min (<xi, A> - nu1 |xi|^p) / |xi|^p`.
    pub coercivity_margin: f64,
    /// `min (nu2 |xi|^(p-1) - |A|) / |xi|^(p-1)`.
    pub growth_margin: f64,
    pub constants_ordered: bool,
    pub passed: bool,
    pub witness: Option<Witness>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unit vector uniformly distributed on the sphere, by rejection from the cube.
fn random_direction(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = norm(&v);
        if n > 1e-3 && n <= 1.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Sample `(x, xi)` with `x` in the unit cube and `|xi|` log-uniform in `[1e-3, 1e3]`.
pub fn check_structure(sf: &StructureField, dim: usize, samples: usize, rng: &mut impl Rng) -> StructureReport {
    let p = sf.p;
    let mut coercivity = f64::INFINITY;
    let mut growth = f64::INFINITY;
    let mut witness: Option<Witness> = None;
    let mut a = vec![0.0; dim];
    for _ in 0..samples.max(1) {
        let x: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
        let r = 10f64.powf(rng.gen_range(-3.0..3.0));
        let xi: Vec<f64> = random_direction(rng, dim).into_iter().map(|v| v * r).collect();
        sf.flux(&x, &xi, &mut a);
        let n = norm(&xi);
        let c = (dot(&xi, &a) - sf.nu1 * n.powf(p)) / n.powf(p);
        let g = (sf.nu2 * n.powf(p - 1.0) - norm(&a)) / n.powf(p - 1.0);
        for (m, slot, name) in [(c, &mut coercivity, "coercivity"), (g, &mut growth, "growth")] {
            if m < *slot {
                *slot = m;
                if witness.as_ref().is_none_or(|w| m < w.relative_margin) {
                    witness = Some(Witness {
                        inequality: name,
                        node: None,
                        x: x.clone(),
                        xi: xi.clone(),
                        relative_margin: m,
                    });
                }
            }
        }
    }
    let constants_ordered = sf.nu1 <= sf.nu2;
    let passed = coercivity >= -MARGIN_TOL && growth >= -MARGIN_TOL && constants_ordered;
    StructureReport {
        samples: samples.max(1),
        coercivity_margin: coercivity,
        growth_margin: growth,
        constants_ordered,
        passed,
        witness: (!passed).then_some(witness).flatten(),
    }
}

/// `f`, its gradient `w = df` and a complementary flux `theta`, one vector per node.
#[derive(Debug, Clone)]
pub struct ScalarFormPair {
    pub dim: usize,
    pub f: Vec<f64>,
    pub w: Vec<f64>,
    pub theta: Vec<f64>,
}

/// Orthonormal-frame components `sqrt(g^aa) d_a f` of the discrete gradient.
pub fn frame_gradient(grid: &Grid, f: &[f64]) -> Vec<f64> {
    let dim = grid.dim();
    let mut w = coordinate_gradient(grid, f);
    let mut g = vec![0.0; dim];
    for n in 0..grid.len() {
        grid.inv_metric(n, &mut g);
        for a in 0..dim {
            w[n * dim + a] *= g[a].sqrt();
        }
    }
    w
}

impl ScalarFormPair {
    /// The pair of `f` under the flux rule of `sf`.
    pub fn new(grid: &Grid, f: Vec<f64>, sf: &StructureField) -> Self {
        let dim = grid.dim();
        let w = frame_gradient(grid, &f);
        let mut theta = vec![0.0; w.len()];
        for n in 0..grid.len() {
            sf.flux(grid.coords(n), &w[n * dim..(n + 1) * dim], &mut theta[n * dim..(n + 1) * dim]);
        }
        ScalarFormPair { dim, f, w, theta }
    }

    /// A pair with an arbitrary flux field; `w` is still the gradient of `f`.
    pub fn with_theta(grid: &Grid, f: Vec<f64>, theta: Vec<f64>) -> Self {
        let w = frame_gradient(grid, &f);
        assert_eq!(theta.len(), w.len());
        ScalarFormPair {
            dim: grid.dim(),
            f,
            w,
            theta,
        }
    }

    fn at(&self, n: usize) -> (&[f64], &[f64]) {
        let r = n * self.dim..(n + 1) * self.dim;
        (&self.w[r.clone()], &self.theta[r])
    }

    fn nodes(&self) -> usize {
        self.f.len()
    }
}

/// Worst relative margin of a per-node check.
#[derive(Debug, Clone, Serialize)]
pub struct WtReport {
    pub min_margin: f64,
    pub node: Option<usize>,
    pub inequality: &'static str,
    pub passed: bool,
}

impl WtReport {
    fn new() -> Self {
        WtReport {
            min_margin: f64::INFINITY,
            node: None,
            inequality: "",
            passed: true,
        }
    }

    /// Record `lhs <= rhs` at node `n`, relative to the larger side.
    fn record(&mut self, n: usize, name: &'static str, lhs: f64, rhs: f64) {
        let scale = lhs.abs().max(rhs.abs());
        let m = if scale > 0.0 { (rhs - lhs) / scale } else { 0.0 };
        if m < self.min_margin {
            self.min_margin = m;
            self.node = Some(n);
            self.inequality = name;
        }
        self.passed &= m >= -MARGIN_TOL;
    }
}

/// `nu0 |theta|^q <= <w, theta>` at every node, `q = p / (p - 1)`.
pub fn check_wt1(pair: &ScalarFormPair, nu0: f64, p: f64) -> WtReport {
    let q = p / (p - 1.0);
    let mut r = WtReport::new();
    for n in 0..pair.nodes() {
        let (w, t) = pair.at(n);
        r.record(n, "nu0 |theta|^q <= <w, theta>", nu0 * norm(t).powf(q), dot(w, t));
    }
    r
}

/// `nu1 |w|^p <= <w, theta>` and `|theta| <= nu2 |w|^(p-1)` at every node.
pub fn check_wt2(pair: &ScalarFormPair, nu1: f64, nu2: f64, p: f64) -> WtReport {
    let mut r = WtReport::new();
    for n in 0..pair.nodes() {
        let (w, t) = pair.at(n);
        let nw = norm(w);
        r.record(n, "nu1 |w|^p <= <w, theta>", nu1 * nw.powf(p), dot(w, t));
        r.record(n, "|theta| <= nu2 |w|^(p-1)", norm(t), nu2 * nw.powf(p - 1.0));
    }
    r
}

/// `nu0 = nu1 nu2^(-q)`: from `|theta|^q <= nu2^q |w|^p <= nu2^q nu1^(-1) <w, theta>`.
pub fn wt2_implies_wt1_constant(nu1: f64, nu2: f64, p: f64) -> f64 {
    let q = p / (p - 1.0);
    nu1 * nu2.powf(-q)
}

/// Smooth random field: a quadratic plus three random plane waves in the embedded coordinates.
pub fn random_scalar_field(grid: &Grid, rng: &mut impl Rng) -> Vec<f64> {
    let dim = grid.chart.embed(grid.coords(0)).len();
    let lin: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let quad: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let waves: Vec<(Vec<f64>, f64, f64)> = (0..3)
        .map(|_| {
            let k = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
            (k, rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(-1.0..1.0))
        })
        .collect();
    grid.sample(|x| {
        let y = grid.chart.embed(x);
        let mut v = dot(&lin, &y) + y.iter().zip(&quad).map(|(a, c)| c * a * a).sum::<f64>();
        for (k, phase, amp) in &waves {
            v += amp * (dot(k, &y) + phase).sin();
        }
        v
    })
}

/// `|int <grad alpha, beta> dV + int alpha div beta dV|` for a vector field `beta` (coordinate
/// components, node-major) supported away from `Cut` and `ManifoldBoundary` nodes.
///
/// The gradient term uses the midpoint rule on cells, the divergence term central differences
/// of `density * beta` with nodal weights. Both are second order and they do not sum by parts
/// exactly, so the defect measures their disagreement.
pub fn discrete_stokes_check(grid: &Grid, alpha: &[f64], beta: &[f64]) -> Result<f64> {
    let dim = grid.dim();
    for n in 0..grid.len() {
        let b = &beta[n * dim..(n + 1) * dim];
        if b.iter().any(|v| *v != 0.0) && (grid.tag(n) != Tag::Interior || !grid.has_full_stencil(n)) {
            return Err(Error::SupportTouchesBoundary { node: n });
        }
    }
    let k = 1usize << dim;
    let cell_volume: f64 = grid.axes.iter().map(|a| a.step).product();
    let mut grad_term = 0.0;
    for c in 0..grid.cell_count() {
        let cell = grid.cell(c);
        for a in 0..dim {
            let bit = 1 << a;
            let mut d = 0.0;
            let mut rb = 0.0;
            for b in 0..k {
                let n = cell[b] as usize;
                rb += grid.density(n) * beta[n * dim + a];
                if b & bit == 0 {
                    d += alpha[cell[b | bit] as usize] - alpha[n];
                }
            }
            let d = d / ((k / 2) as f64 * grid.axes[a].step);
            grad_term += d * rb / k as f64 * cell_volume;
        }
    }
    let mut div_term = 0.0;
    for n in 0..grid.len() {
        let mut div = 0.0;
        for a in 0..dim {
            let (Some(m), Some(p)) = (grid.neighbor(n, a, 0), grid.neighbor(n, a, 1)) else {
                continue;
            };
            let h = grid.axes[a].step;
            div += (grid.density(p) * beta[p * dim + a] - grid.density(m) * beta[m * dim + a]) / (2.0 * h);
        }
        div_term += alpha[n] * div * grid.dual_volume(n) / grid.density(n).max(f64::MIN_POSITIVE);
    }
    Ok((grad_term + div_term).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BoundaryCondition {
    Dirichlet(f64),
    /// Zero conormal flux; also the condition of every interior node.
    NeumannZero,
}

/// How the additive constant of the solution was fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Gauge {
    Dirichlet,
    ZeroMean,
}

#[derive(Debug, Clone, Default)]
pub struct SolveOptions {
    pub solver: MinimizeOptions,
    /// Regularization; defaults to `1e-6` over the grid's coordinate diameter.
    pub delta: Option<f64>,
    pub init: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AHarmonicSolution {
    pub field: Vec<f64>,
    pub gauge: Gauge,
    pub iterations: usize,
    pub converged: bool,
    /// Largest `|dE/du_i| / dual volume` over free nodes.
    pub residual: f64,
}

/// Discrete weak solution of `div A(x, grad f) = 0` as the minimizer of the preset's energy.
pub fn solve_a_harmonic(grid: &Grid, sf: &StructureField, bc: &[BoundaryCondition], opts: &SolveOptions) -> Result<AHarmonicSolution> {
    let dim = grid.dim();
    let weights = sf.potential_weights(dim)?;
    assert_eq!(bc.len(), grid.len());
    let diameter = grid
        .axes
        .iter()
        .map(|a| (a.step * a.count as f64).powi(2))
        .sum::<f64>()
        .sqrt();
    let delta = opts.delta.unwrap_or(1e-6 / diameter);
    let form = EnergyForm::anisotropic(grid, sf.p, delta, &weights);
    let fixed: Vec<Option<f64>> = bc
        .iter()
        .map(|c| match c {
            BoundaryCondition::Dirichlet(v) => Some(*v),
            BoundaryCondition::NeumannZero => None,
        })
        .collect();
    let gauge = if fixed.iter().any(Option::is_some) { Gauge::Dirichlet } else { Gauge::ZeroMean };
    let values: Vec<f64> = fixed.iter().flatten().cloned().collect();
    let init = opts.init.clone().unwrap_or_else(|| {
        let mean = if values.is_empty() { 0.0 } else { values.iter().sum::<f64>() / values.len() as f64 };
        vec![mean; grid.len()]
    });
    let (lo, hi) = init
        .iter()
        .chain(&values)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let scale = if hi > lo { hi - lo } else { 1.0 };
    assert_eq!(init.len(), grid.len(), "initial field length");
    let m = minimize(&form, &fixed, init, scale, &opts.solver);
    let mut field = m.field;
    fill_isolated(grid, &form, &fixed, &mut field);
    if gauge == Gauge::ZeroMean {
        let mean = grid.volume_sum(&field) / grid.volume_sum(&vec![1.0; grid.len()]);
        field.iter_mut().for_each(|v| *v -= mean);
    }
    let mut grad = vec![0.0; grid.len()];
    let mut diag = vec![0.0; grid.len()];
    form.gradient(&field, &mut grad, &mut diag);
    let residual = (0..grid.len())
        .filter(|&n| fixed[n].is_none())
        .map(|n| grad[n].abs() / grid.dual_volume(n).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    Ok(AHarmonicSolution {
        field,
        gauge,
        iterations: m.iterations,
        converged: m.converged,
        residual,
    })
}

/// Free nodes outside every full cell carry no energy; give them the mean of their neighbors.
fn fill_isolated(grid: &Grid, form: &EnergyForm, fixed: &[Option<f64>], field: &mut [f64]) {
    let mut pending: Vec<usize> = (0..grid.len())
        .filter(|&n| fixed[n].is_none() && form.incidence(n) == 0)
        .collect();
    let mut known: Vec<bool> = (0..grid.len()).map(|n| !pending.contains(&n)).collect();
    while !pending.is_empty() {
        let before = pending.len();
        pending.retain(|&n| {
            let mut sum = 0.0;
            let mut count = 0;
            for a in 0..grid.dim() {
                for side in 0..2 {
                    if let Some(m) = grid.neighbor(n, a, side) {
                        if known[m] {
                            sum += field[m];
                            count += 1;
                        }
                    }
                }
            }
            if count == 0 {
                return true;
            }
            field[n] = sum / count as f64;
            known[n] = true;
            false
        });
        if pending.len() == before {
            break;
        }
    }
}

/// Flux magnitudes `|A(x, grad f)|` at every node.
pub fn flux_magnitudes(grid: &Grid, sf: &StructureField, f: &[f64]) -> Vec<f64> {
    let pair = ScalarFormPair::new(grid, f.to_vec(), sf);
    (0..grid.len()).map(|n| norm(pair.at(n).1)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaxPrincipleKind {
    /// `f = 0` on the boundary.
    Dirichlet,
    /// Zero conormal flux on the boundary.
    Neumann,
}

#[derive(Debug, Clone, Serialize)]
pub struct MaxPrincipleVerdict {
    pub kind: MaxPrincipleKind,
    pub max_theta: f64,
    pub oscillation: f64,
    pub iterations: usize,
    pub passed: bool,
    pub tolerance: f64,
}

/// Solve the homogeneous problem from a nonconstant start and confirm that the flux vanishes.
pub fn maximum_principle_check(
    grid: &Grid,
    sf: &StructureField,
    kind: MaxPrincipleKind,
    tolerance: f64,
    opts: &SolveOptions,
) -> Result<MaxPrincipleVerdict> {
    if grid.tags().contains(&Tag::Cut) {
        return Err(Error::InvalidDomain("the maximum principle check needs a compact grid without cut nodes".into()));
    }
    let bc: Vec<BoundaryCondition> = (0..grid.len())
        .map(|n| match (kind, grid.tag(n)) {
            (MaxPrincipleKind::Dirichlet, Tag::ManifoldBoundary) => BoundaryCondition::Dirichlet(0.0),
            _ => BoundaryCondition::NeumannZero,
        })
        .collect();
    let mut opts = opts.clone();
    if opts.init.is_none() {
        opts.init = Some(grid.sample(|x| {
            let y = grid.chart.embed(x);
            y[0] + 0.5 * (3.0 * y[y.len() - 1]).sin()
        }));
    }
    let sol = solve_a_harmonic(grid, sf, &bc, &opts)?;
    if !sol.converged {
        return Err(Error::NonConvergence {
            iterations: sol.iterations,
            gradient_ratio: sol.residual,
        });
    }
    let theta = flux_magnitudes(grid, sf, &sol.field);
    let max_theta = theta.iter().cloned().fold(0.0, f64::max);
    let (lo, hi) = sol
        .field
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    Ok(MaxPrincipleVerdict {
        kind,
        max_theta,
        oscillation: hi - lo,
        iterations: sol.iterations,
        passed: max_theta < tolerance,
        tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::compact_box;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn p_laplace_margins_vanish() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for p in [1.5, 2.0, 3.0] {
            let r = check_structure(&StructureField::p_laplace(p), 3, 500, &mut rng);
            assert!(r.passed);
            assert!(r.coercivity_margin.abs() < 1e-12 && r.growth_margin.abs() < 1e-12);
        }
    }

    #[test]
    fn anisotropic_eigenvalue_constants() {
        let sf = StructureField::anisotropic(2.0, vec![1.0, 2.0]);
        assert_eq!((sf.nu1, sf.nu2), (1.0, 2.0));
        let r = check_structure(&sf, 2, 2000, &mut ChaCha8Rng::seed_from_u64(2));
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn custom_violation_is_located() {
        let rule: FluxRule = Arc::new(|x: &[f64], xi: &[f64], out: &mut [f64]| {
            let s = if x[0] > 0.9 { 5.0 } else { 1.0 };
            for (o, v) in out.iter_mut().zip(xi) {
                *o = s * v;
            }
        });
        let sf = StructureField::custom(2.0, 1.0, 2.0, "spike", rule);
        let r = check_structure(&sf, 2, 400, &mut ChaCha8Rng::seed_from_u64(3));
        assert!(!r.passed);
        let w = r.witness.unwrap();
        assert_eq!(w.inequality, "growth");
        assert!(w.x[0] > 0.9);
    }

    #[test]
    fn wt_checks_on_unit_gradient() {
        let g = compact_box(&[[0.0, 1.0], [0.0, 1.0]], &[9, 9]).unwrap();
        let sf = StructureField::p_laplace(2.0);
        let pair = ScalarFormPair::new(&g, g.sample(|x| x[0]), &sf);
        let r1 = check_wt1(&pair, 1.0, 2.0);
        assert!(r1.passed && r1.min_margin.abs() < 1e-12);
        assert!(check_wt2(&pair, 1.0, 1.0, 2.0).passed);
        let big = ScalarFormPair::with_theta(&g, pair.f.clone(), pair.theta.iter().map(|t| 10.0 * t).collect());
        assert!(!check_wt1(&big, 1.0, 2.0).passed);
        let crossed = ScalarFormPair::with_theta(&g, pair.f.clone(), (0..g.len()).flat_map(|_| [0.0, 1.0]).collect());
        let r = check_wt2(&crossed, 1.0, 1.0, 2.0);
        assert!(!r.passed && r.inequality.starts_with("nu1"));
    }

    #[test]
    fn chain_constant() {
        assert_eq!(wt2_implies_wt1_constant(1.0, 1.0, 3.7), 1.0);
        assert!((wt2_implies_wt1_constant(1.0, 2.0, 2.0) - 0.25).abs() < 1e-15);
        assert!((wt2_implies_wt1_constant(2.0, 2.0, 3.0) - 2.0 * 2f64.powf(-1.5)).abs() < 1e-15);
    }

    #[test]
    fn stokes_defect_vanishes_without_flux() {
        let g = compact_box(&[[0.0, 1.0], [0.0, 1.0]], &[12, 12]).unwrap();
        let alpha = g.sample(|x| x[0] * x[1]);
        assert_eq!(discrete_stokes_check(&g, &alpha, &vec![0.0; 2 * g.len()]).unwrap(), 0.0);
        let mut beta = vec![0.0; 2 * g.len()];
        beta[0] = 1.0;
        assert!(matches!(
            discrete_stokes_check(&g, &alpha, &beta),
            Err(Error::SupportTouchesBoundary { node: 0 })
        ));
    }

    #[test]
    fn dirichlet_linear_solution() {
        let g = compact_box(&[[0.0, 1.0], [0.0, 1.0]], &[12, 12]).unwrap();
        let bc: Vec<BoundaryCondition> = (0..g.len())
            .map(|n| match g.tag(n) {
                Tag::Interior => BoundaryCondition::NeumannZero,
                _ => BoundaryCondition::Dirichlet(g.coords(n)[0]),
            })
            .collect();
        let sol = solve_a_harmonic(&g, &StructureField::p_laplace(2.0), &bc, &SolveOptions::default()).unwrap();
        assert_eq!(sol.gauge, Gauge::Dirichlet);
        for n in 0..g.len() {
            assert!((sol.field[n] - g.coords(n)[0]).abs() < 1e-6);
        }
    }

    #[test]
    fn annulus_dirichlet_gives_log() {
        use crate::domains::{build_grid, GridSpec, ModelDomain};
        let g = build_grid(&ModelDomain::plane_annulus(1.0), &GridSpec::new(vec![24, 48], 3.0)).unwrap();
        let last = g.axes[0].count - 1;
        let bc: Vec<BoundaryCondition> = (0..g.len())
            .map(|n| match g.index(n, 0) {
                0 => BoundaryCondition::Dirichlet(0.0),
                i if i == last => BoundaryCondition::Dirichlet(1.0),
                _ => BoundaryCondition::NeumannZero,
            })
            .collect();
        let sol = solve_a_harmonic(&g, &StructureField::p_laplace(2.0), &bc, &SolveOptions::default()).unwrap();
        assert!(sol.converged);
        for n in 0..g.len() {
            let exact = g.coords(n)[0].ln() / 3f64.ln();
            assert!((sol.field[n] - exact).abs() < 1e-2, "{} vs {exact}", sol.field[n]);
        }
    }

    #[test]
    fn custom_rule_cannot_be_solved() {
        let g = compact_box(&[[0.0, 1.0], [0.0, 1.0]], &[8, 8]).unwrap();
        let rule: FluxRule = Arc::new(|_: &[f64], xi: &[f64], out: &mut [f64]| out.copy_from_slice(xi));
        let sf = StructureField::custom(2.0, 1.0, 1.0, "identity", rule);
        let bc = vec![BoundaryCondition::NeumannZero; g.len()];
        assert!(matches!(solve_a_harmonic(&g, &sf, &bc, &SolveOptions::default()), Err(Error::NoPotential)));
    }
}
