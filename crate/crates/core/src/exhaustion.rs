//! Catalog of special exhaustion functions and their numerical verification.
//!
//! Every catalog entry is a function of a single distance `d`: the chart radius
//! for Euclidean space, cones and warped products, or the distance `d_k` in the
//! `R^k` factor of a k-cylinder. Product manifolds lift the entry of their base.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domains::field::p_laplace_flux_form;
use crate::domains::grid::{Chart, Grid, Tag};
use crate::domains::model::{ModelDomain, Profile};
use crate::domains::shell::level_shell;
use crate::error::{Error, Result};
use crate::quad::gauss_legendre;

/// Regularization of `|grad h|` inside the discrete divergence.
pub const RESIDUAL_DELTA: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    LogDk,
    PowerDk,
    CylinderPower,
    ConeLog,
    WarpedIntegral,
    ProductLift,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DomainType {
    Parabolic,
    Hyperbolic,
}

/// How the distance `d` is read off chart coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Distance {
    /// First chart coordinate (radial charts).
    ChartRadius,
    /// Euclidean norm of the first `k` Cartesian coordinates.
    Cylinder { k: usize },
}

#[derive(Debug, Clone, Serialize)]
pub struct ExhaustionParams {
    pub n: usize,
    pub k: usize,
    pub p: f64,
    pub r1: f64,
    pub exponent: Option<f64>,
    /// Family of the base entry for product lifts.
    pub base_family: Option<Family>,
}

#[derive(Debug, Clone)]
enum Radial {
    Log { r1: f64 },
    /// `scale * d^e + shift`
    Power { e: f64, scale: f64, shift: f64 },
    Table(Arc<WarpedTable>),
}

/// A closed-form exhaustion function `h = H(d)`.
#[derive(Debug, Clone)]
pub struct ExhaustionFunction {
    pub family: Family,
    pub params: ExhaustionParams,
    /// Supremum of `h`; infinite for the parabolic formulas.
    pub h0: f64,
    /// Value of `h` on the boundary of the exceptional compact set `K = {d <= r1}`.
    pub h_k: f64,
    pub distance: Distance,
    radial: Radial,
}

impl ExhaustionFunction {
    /// `h = d^e` or, for `e < 0`, the positive normalization `(d^e - r1^e) / e`.
    pub fn power_dk(n: usize, k: usize, p: f64, r1: f64, e: f64, distance: Distance) -> Self {
        let (radial, h0, h_k) = if e > 0.0 {
            (Radial::Power { e, scale: 1.0, shift: 0.0 }, f64::INFINITY, r1.powf(e))
        } else {
            let shift = -r1.powf(e) / e;
            (Radial::Power { e, scale: 1.0 / e, shift }, shift, 0.0)
        };
        ExhaustionFunction {
            family: Family::PowerDk,
            params: ExhaustionParams {
                n,
                k,
                p,
                r1,
                exponent: Some(e),
                base_family: None,
            },
            h0,
            h_k,
            distance,
            radial,
        }
    }

    fn log(family: Family, n: usize, k: usize, p: f64, r1: f64, distance: Distance) -> Self {
        ExhaustionFunction {
            family,
            params: ExhaustionParams {
                n,
                k,
                p,
                r1,
                exponent: None,
                base_family: None,
            },
            h0: f64::INFINITY,
            h_k: 0.0,
            distance,
            radial: Radial::Log { r1 },
        }
    }

    /// `(h(d), h'(d))`.
    pub fn profile(&self, d: f64) -> (f64, f64) {
        match &self.radial {
            Radial::Log { r1 } => ((d / r1).ln(), 1.0 / d),
            Radial::Power { e, scale, shift } => (scale * d.powf(*e) + shift, scale * e * d.powf(e - 1.0)),
            Radial::Table(t) => (t.value(d), t.integrand(d)),
        }
    }

    pub fn distance_of(&self, x: &[f64]) -> f64 {
        match self.distance {
            Distance::ChartRadius => x[0],
            Distance::Cylinder { k } => x[..k].iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.profile(self.distance_of(x)).0
    }

    /// Coordinate partials of `h` at chart coordinates `x`.
    pub fn coordinate_gradient(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let d = self.distance_of(x);
        let dh = self.profile(d).1;
        match self.distance {
            Distance::ChartRadius => out[0] = dh,
            Distance::Cylinder { k } => {
                if d > 0.0 {
                    for i in 0..k {
                        out[i] = dh * x[i] / d;
                    }
                }
            }
        }
    }

    /// `|grad h|` at `x` in the metric of `chart`.
    pub fn grad_norm(&self, chart: &Chart, x: &[f64]) -> f64 {
        let mut d = [0.0; 4];
        let mut g = [0.0; 4];
        let dim = x.len();
        self.coordinate_gradient(x, &mut d[..dim]);
        chart.inv_metric(x, &mut g[..dim]);
        (0..dim).map(|i| g[i] * d[i] * d[i]).sum::<f64>().sqrt()
    }

    pub fn values(&self, grid: &Grid) -> Vec<f64> {
        grid.sample(|x| self.eval(x))
    }

    pub fn domain_type(&self) -> DomainType {
        if self.h0.is_infinite() {
            DomainType::Parabolic
        } else {
            DomainType::Hyperbolic
        }
    }

    /// Serializable summary.
    pub fn descriptor(&self) -> ExhaustionDescriptor {
        ExhaustionDescriptor {
            family: self.family,
            params: self.params.clone(),
            h0: finite_or_none(self.h0),
            h_k: self.h_k,
        }
    }
}

fn finite_or_none(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

#[derive(Debug, Clone, Serialize)]
pub struct ExhaustionDescriptor {
    pub family: Family,
    pub params: ExhaustionParams,
    /// `None` when `h0` is infinite.
    pub h0: Option<f64>,
    pub h_k: f64,
}

/// Tabulated `h(r) = int_{r1}^r alpha / beta^((n-1)/(p-1)) dt` with exact Gauss–Legendre
/// integration from the nearest knot.
#[derive(Debug)]
struct WarpedTable {
    alpha: Profile,
    beta: Profile,
    power: f64,
    knots: Vec<f64>,
    cumulative: Vec<f64>,
}

const KNOTS_PER_DOUBLING: usize = 64;
const DOUBLINGS: usize = 40;

impl WarpedTable {
    fn new(alpha: Profile, beta: Profile, n: usize, p: f64, r1: f64, r2: f64) -> Self {
        let power = (n as f64 - 1.0) / (p - 1.0);
        let knots = doubling_points(r1, r2, KNOTS_PER_DOUBLING * DOUBLINGS, KNOTS_PER_DOUBLING);
        let mut table = WarpedTable {
            alpha,
            beta,
            power,
            knots,
            cumulative: Vec::new(),
        };
        let mut acc = 0.0;
        table.cumulative.push(0.0);
        for w in table.knots.windows(2) {
            acc += gauss_legendre(|t| table.integrand(t), w[0], w[1], 1);
            table.cumulative.push(acc);
        }
        table
    }

    fn integrand(&self, t: f64) -> f64 {
        self.alpha.eval(t) / self.beta.eval(t).powf(self.power)
    }

    fn value(&self, r: f64) -> f64 {
        let i = self.knots.partition_point(|&k| k <= r).saturating_sub(1);
        let base = self.knots[i];
        self.cumulative[i] + gauss_legendre(|t| self.integrand(t), base, r, 1)
    }
}

/// Points approaching the end of `[r1, r2)`: geometric doubling towards infinity,
/// or halving of the remaining gap for finite `r2`; `per` points per doubling.
fn doubling_points(r1: f64, r2: f64, count: usize, per: usize) -> Vec<f64> {
    (0..=count)
        .map(|i| {
            let s = 2f64.powf(i as f64 / per as f64);
            if r2.is_finite() {
                r2 - (r2 - r1) / s
            } else {
                r1 + r1.max(1.0) * (s - 1.0)
            }
        })
        .collect()
}

/// Result of the divergence test for the warped integral.
#[derive(Debug, Clone)]
pub struct WarpedType {
    pub verdict: DomainType,
    pub h: ExhaustionFunction,
    pub h0: f64,
    pub doublings: usize,
}

/// Relative growth per doubling above which the integral is declared divergent.
pub const DIVERGENCE_GROWTH: f64 = 0.01;
/// Tail increment below which the integral is declared convergent.
pub const CONVERGENCE_TAIL: f64 = 1e-10;

/// Decide whether `int^{r2} alpha / beta^((n-1)/(p-1)) dt` diverges (parabolic) or
/// converges (hyperbolic) by doubling the upper limit up to `2^40 r1`.
pub fn warped_parabolicity(alpha: &Profile, beta: &Profile, n: usize, p: f64, r1: f64, r2: Option<f64>) -> Result<WarpedType> {
    let domain = ModelDomain::WarpedProduct {
        n,
        angular: Default::default(),
        r1,
        r2,
        alpha: alpha.clone(),
        beta: beta.clone(),
    };
    domain.validate()?;
    if !(p > 1.0) {
        return Err(Error::NoCatalogEntry(format!("p = {p} must exceed 1")));
    }
    let top = r2.unwrap_or(f64::INFINITY);
    let power = (n as f64 - 1.0) / (p - 1.0);
    let f = |t: f64| alpha.eval(t) / beta.eval(t).powf(power);
    let ends = doubling_points(r1, top, DOUBLINGS, 1);
    let mut total = 0.0;
    let mut growth = f64::INFINITY;
    let mut verdict = None;
    let mut doublings = 0;
    for (j, w) in ends.windows(2).enumerate() {
        let inc = gauss_legendre(f, w[0], w[1], 16);
        total += inc;
        doublings = j + 1;
        growth = inc / total.max(f64::MIN_POSITIVE);
        if j >= 4 && inc < CONVERGENCE_TAIL * total.max(1.0) {
            verdict = Some(DomainType::Hyperbolic);
            break;
        }
    }
    let verdict = match verdict {
        Some(v) => v,
        None if growth > DIVERGENCE_GROWTH => DomainType::Parabolic,
        None => {
            return Err(Error::IndeterminateTail {
                doublings,
                value: total,
                growth,
            })
        }
    };
    let h0 = match verdict {
        DomainType::Parabolic => f64::INFINITY,
        DomainType::Hyperbolic => total,
    };
    let table = WarpedTable::new(alpha.clone(), beta.clone(), n, p, r1, top);
    let h = ExhaustionFunction {
        family: Family::WarpedIntegral,
        params: ExhaustionParams {
            n,
            k: n,
            p,
            r1,
            exponent: None,
            base_family: None,
        },
        h0,
        h_k: 0.0,
        distance: Distance::ChartRadius,
        radial: Radial::Table(Arc::new(table)),
    };
    Ok(WarpedType {
        verdict,
        h,
        h0,
        doublings,
    })
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-12
}

/// Closed-form special exhaustion function of the catalog entry matching `(domain, p)`.
///
/// Log families and negative-exponent power families need a positive core radius; a zero
/// `r1` is replaced by 1 there.
pub fn make_special_exhaustion(domain: &ModelDomain, p: f64) -> Result<ExhaustionFunction> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::NoCatalogEntry(format!("p = {p} must be a finite exponent above 1")));
    }
    domain.validate()?;
    match domain {
        ModelDomain::EuclideanSpace { n, r1 } | ModelDomain::Cone { n, r1, .. } => {
            let r1 = if *r1 > 0.0 { *r1 } else { 1.0 };
            if same(p, *n as f64) {
                return Ok(ExhaustionFunction::log(Family::ConeLog, *n, *n, p, r1, Distance::ChartRadius));
            }
            // closed form of int_{r1}^r t^{(1-n)/(p-1)} dt
            let e = (p - *n as f64) / (p - 1.0);
            let mut h = ExhaustionFunction::power_dk(*n, *n, p, r1, e, Distance::ChartRadius);
            if let Radial::Power { scale, shift, .. } = &mut h.radial {
                *scale = 1.0 / e;
                *shift = -r1.powf(e) / e;
            }
            h.h_k = 0.0;
            h.h0 = if e > 0.0 { f64::INFINITY } else { -r1.powf(e) / e };
            Ok(h)
        }
        ModelDomain::KCylinder { n, k, r1, .. } => {
            let distance = Distance::Cylinder { k: *k };
            if same(p, *k as f64) {
                let r1 = if *r1 > 0.0 { *r1 } else { 1.0 };
                return Ok(ExhaustionFunction::log(Family::LogDk, *n, *k, p, r1, distance));
            }
            let e = (p - *k as f64) / (p - 1.0);
            let r1 = if e < 0.0 && !(*r1 > 0.0) { 1.0 } else { *r1 };
            let mut h = ExhaustionFunction::power_dk(*n, *k, p, r1, e, distance);
            if same(p, *n as f64) {
                h.family = Family::CylinderPower;
            }
            Ok(h)
        }
        ModelDomain::WarpedProduct {
            n, r1, r2, alpha, beta, ..
        } => Ok(warped_parabolicity(alpha, beta, *n, p, *r1, *r2)?.h),
        ModelDomain::ProductManifold { base, .. } => {
            if matches!(**base, ModelDomain::ProductManifold { .. }) {
                return Err(Error::NoCatalogEntry("iterated products are not in the catalog".into()));
            }
            let mut h = make_special_exhaustion(base, p)?;
            h.params.base_family = Some(h.family);
            h.family = Family::ProductLift;
            Ok(h)
        }
    }
}

/// Discrete p-Laplacian of `h` with the excluded nodes marked `None`.
#[derive(Debug, Clone)]
pub struct ResidualField {
    pub values: Vec<Option<f64>>,
    pub max_abs: f64,
    /// `max |R| / (|grad h|^(p-1) / d)` over the included nodes.
    pub max_relative: f64,
    /// Nodes skipped because `|grad h| < delta`.
    pub degenerate: usize,
}

fn cell_variation(grid: &Grid, h: &[f64], n: usize) -> f64 {
    let mut v = 0.0f64;
    for a in 0..grid.dim() {
        for side in 0..2 {
            if let Some(m) = grid.neighbor(n, a, side) {
                v = v.max((h[m] - h[n]).abs());
            }
        }
    }
    v
}

fn neighbor_max(grid: &Grid, h: &[f64], n: usize) -> f64 {
    let mut v = h[n];
    for a in 0..grid.dim() {
        for side in 0..2 {
            if let Some(m) = grid.neighbor(n, a, side) {
                v = v.max(h[m]);
            }
        }
    }
    v
}

/// Flux-form `div(|grad h|^(p-2) grad h)` at nodes with a full stencil that lie more than one
/// cell outside the exceptional set.
pub fn p_laplace_residual(h: &ExhaustionFunction, grid: &Grid, p: f64) -> ResidualField {
    residual_impl(h, grid, p, None)
}

/// As [`p_laplace_residual`], additionally excluding nodes with `d <= r1 + margin`. A fixed
/// margin keeps the compared region identical across refinements.
pub fn p_laplace_residual_outside(h: &ExhaustionFunction, grid: &Grid, p: f64, margin: f64) -> ResidualField {
    residual_impl(h, grid, p, Some(margin))
}

fn residual_impl(h: &ExhaustionFunction, grid: &Grid, p: f64, margin: Option<f64>) -> ResidualField {
    let hv = h.values(grid);
    let ones = vec![1.0; grid.dim()];
    let raw = p_laplace_flux_form(grid, &hv, p, RESIDUAL_DELTA, &ones);
    let mut degenerate = 0;
    let mut max_abs = 0.0f64;
    let mut max_relative = 0.0f64;
    let min_step = grid.axes.iter().map(|a| a.step).fold(f64::INFINITY, f64::min);
    let values = raw
        .into_iter()
        .enumerate()
        .map(|(n, r)| {
            let r = r?;
            if grid.tag(n) != Tag::Interior || hv[n] - cell_variation(grid, &hv, n) <= h.h_k {
                return None;
            }
            let x = grid.coords(n);
            let d = h.distance_of(x);
            if margin.is_some_and(|m| d <= h.params.r1 + m) {
                return None;
            }
            let g = h.grad_norm(&grid.chart, x);
            if g < RESIDUAL_DELTA {
                degenerate += 1;
                return None;
            }
            max_abs = max_abs.max(r.abs());
            max_relative = max_relative.max(r.abs() * d.max(min_step) / g.powf(p - 1.0));
            Some(r)
        })
        .collect();
    ResidualField {
        values,
        max_abs,
        max_relative,
        degenerate,
    }
}

/// Admissible levels: closed h-spheres at least one cell away from `K` and from the outer cut.
pub fn level_window(h: &ExhaustionFunction, grid: &Grid) -> (f64, f64) {
    window_of(h, grid, &h.values(grid))
}

fn window_of(h: &ExhaustionFunction, grid: &Grid, hv: &[f64]) -> (f64, f64) {
    let mut lo = h.h_k.max(hv.iter().cloned().fold(f64::INFINITY, f64::min));
    let mut hi = f64::INFINITY;
    for n in 0..grid.len() {
        let var = cell_variation(grid, hv, n);
        if hv[n] <= h.h_k {
            lo = lo.max(neighbor_max(grid, hv, n));
        }
        if grid.tag(n) == Tag::Cut && hv[n] > h.h_k + var {
            hi = hi.min(hv[n] - var);
        }
    }
    if hi.is_infinite() {
        hi = hv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    }
    (lo, hi)
}

/// `J(t) = int_{Sigma_h(t)} |grad h|^(p-1) dH^{n-1}`, with the exact gradient at the facet points.
pub fn flux_through_sphere(h: &ExhaustionFunction, grid: &Grid, p: f64, t: f64) -> Result<f64> {
    let hv = h.values(grid);
    let window = window_of(h, grid, &hv);
    flux_impl(h, grid, &hv, window, p, t)
}

fn flux_impl(h: &ExhaustionFunction, grid: &Grid, hv: &[f64], (lo, hi): (f64, f64), p: f64, t: f64) -> Result<f64> {
    if !(t > lo && t < hi) {
        return Err(Error::LevelOutOfRange { t, lo, hi });
    }
    let shell = level_shell(grid, hv, t)?;
    let floor = 1e-12;
    let min_grad = shell
        .facets
        .iter()
        .map(|f| h.grad_norm(&grid.chart, &f.centroid))
        .fold(f64::INFINITY, f64::min);
    if min_grad < floor {
        return Err(Error::DegenerateGradient {
            threshold: floor,
            detail: format!("on the h-sphere at t = {t}"),
        });
    }
    Ok(shell.integrate(grid, |_, x| h.grad_norm(&grid.chart, x).powf(p - 1.0)))
}

/// Flux at `count` evenly spaced admissible levels.
pub fn flux_table(h: &ExhaustionFunction, grid: &Grid, p: f64, count: usize) -> Result<Vec<FluxSample>> {
    let hv = h.values(grid);
    let window = window_of(h, grid, &hv);
    levels_in(window, count)
        .into_iter()
        .map(|t| Ok(FluxSample { t, value: flux_impl(h, grid, &hv, window, p, t)? }))
        .collect()
}

fn levels_in((lo, hi): (f64, f64), count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| lo + (hi - lo) * (i as f64 + 0.5) / count as f64)
        .collect()
}

/// Evenly spaced levels strictly inside the admissible window.
pub fn sample_levels(h: &ExhaustionFunction, grid: &Grid, count: usize) -> Vec<f64> {
    levels_in(level_window(h, grid), count)
}

/// Max over `ManifoldBoundary` nodes of `|<A(grad h), nu>|`, `nu` the inner unit normal.
pub fn boundary_normal_pairing(h: &ExhaustionFunction, grid: &Grid, p: f64) -> f64 {
    let dim = grid.dim();
    let mut worst = 0.0f64;
    let mut d = [0.0; 4];
    let mut g = [0.0; 4];
    for n in grid.nodes_with(Tag::ManifoldBoundary) {
        let x = grid.coords(n);
        let dist = h.distance_of(x);
        if dist <= h.params.r1 || dist == 0.0 {
            continue;
        }
        let mut nu = [0.0; 4];
        for (a, slot) in nu.iter_mut().enumerate().take(dim) {
            *slot = match (grid.faces_boundary(n, a, 0), grid.faces_boundary(n, a, 1)) {
                (true, false) => 1.0,
                (false, true) => -1.0,
                _ => 0.0,
            };
        }
        h.coordinate_gradient(x, &mut d[..dim]);
        grid.chart.inv_metric(x, &mut g[..dim]);
        let norm_nu: f64 = (0..dim).map(|a| g[a] * nu[a] * nu[a]).sum::<f64>().sqrt();
        if norm_nu == 0.0 {
            continue;
        }
        let grad: f64 = (0..dim).map(|a| g[a] * d[a] * d[a]).sum::<f64>().sqrt();
        let pair: f64 = (0..dim).map(|a| g[a] * d[a] * nu[a]).sum::<f64>() / norm_nu;
        worst = worst.max((grad.powf(p - 2.0) * pair).abs());
    }
    worst
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConditionChecks {
    pub a1: bool,
    pub a2: bool,
    pub b2: bool,
}

/// Tolerances used by [`verify_exhaustion`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub levels: usize,
    pub residual_tol: f64,
    pub flux_spread_tol: f64,
    pub pairing_tol: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            levels: 10,
            residual_tol: 1e-2,
            flux_spread_tol: 1e-2,
            pairing_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FluxSample {
    pub t: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExhaustionVerdict {
    pub exhaustion: ExhaustionDescriptor,
    pub pde_residual_max: f64,
    pub pde_residual_relative: f64,
    pub flux: Vec<FluxSample>,
    pub flux_mean: f64,
    pub flux_relative_spread: f64,
    pub boundary_pairing_max: f64,
    pub passed: ConditionChecks,
    pub options: VerifyOptions,
}

/// Check a1 (p-Laplace equation off K), a2 (constant flux) and b2 (zero normal flux on the boundary).
pub fn verify_exhaustion(h: &ExhaustionFunction, grid: &Grid, p: f64, opts: &VerifyOptions) -> Result<ExhaustionVerdict> {
    let residual = p_laplace_residual(h, grid, p);
    let flux = flux_table(h, grid, p, opts.levels)?;
    let (mn, mx, sum) = flux.iter().fold((f64::INFINITY, f64::NEG_INFINITY, 0.0), |(a, b, s), f| {
        (a.min(f.value), b.max(f.value), s + f.value)
    });
    let mean = sum / flux.len().max(1) as f64;
    let spread = if mean != 0.0 { (mx - mn) / mean.abs() } else { 0.0 };
    let pairing = boundary_normal_pairing(h, grid, p);
    let scale = mean.abs().max(1.0);
    Ok(ExhaustionVerdict {
        exhaustion: h.descriptor(),
        pde_residual_max: residual.max_abs,
        pde_residual_relative: residual.max_relative,
        flux_mean: mean,
        flux_relative_spread: spread,
        flux,
        boundary_pairing_max: pairing,
        passed: ConditionChecks {
            a1: residual.max_relative <= opts.residual_tol,
            a2: spread <= opts.flux_spread_tol,
            b2: pairing <= opts.pairing_tol * scale,
        },
        options: *opts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::grid::{build_grid, GridSpec};
    use crate::domains::model::{AngularDomain, CrossSection};
    use std::f64::consts::{E, PI};

    #[test]
    fn cone_log_entry() {
        let h = make_special_exhaustion(&ModelDomain::plane_annulus(1.0), 2.0).unwrap();
        assert_eq!(h.family, Family::ConeLog);
        assert!(h.h0.is_infinite());
        assert!((h.eval(&[E, 0.3]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cylinder_entry_for_p_equal_n() {
        let d = ModelDomain::KCylinder {
            n: 3,
            k: 2,
            base: CrossSection::interval(0.0, 1.0),
            r1: 0.0,
        };
        let h = make_special_exhaustion(&d, 3.0).unwrap();
        assert_eq!(h.family, Family::CylinderPower);
        assert_eq!(h.params.exponent, Some(0.5));
        assert!((h.eval(&[3.0, 4.0, 0.5]) - 5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn warped_flat_space_integral() {
        let d = ModelDomain::WarpedProduct {
            n: 3,
            angular: AngularDomain::Full,
            r1: 1.0,
            r2: None,
            alpha: Profile::constant(1.0),
            beta: Profile::identity(),
        };
        let h = make_special_exhaustion(&d, 2.0).unwrap();
        for r in [1.0, 1.5, 2.0, 7.0, 100.0] {
            assert!((h.eval(&[r, 0.1, 0.2]) - (1.0 - 1.0 / r)).abs() < 1e-12);
        }
        assert!((h.h0 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn parabolicity_of_slowly_convergent_tail_is_indeterminate() {
        let beta = Profile::function(|t: f64| t * t.ln().powi(2));
        let r = warped_parabolicity(&Profile::constant(1.0), &beta, 2, 2.0, E, None);
        assert!(matches!(r, Err(Error::IndeterminateTail { .. })), "{r:?}");
    }

    #[test]
    fn strip_flux_and_pairing() {
        let grid = build_grid(&ModelDomain::strip(PI), &GridSpec::new(vec![64, 64], 3.0)).unwrap();
        let h = make_special_exhaustion(&ModelDomain::strip(PI), 2.0).unwrap();
        let j = flux_through_sphere(&h, &grid, 2.0, 1.0).unwrap();
        assert!((j - 2.0 * PI).abs() / (2.0 * PI) < 0.01, "{j}");
        assert_eq!(boundary_normal_pairing(&h, &grid, 2.0), 0.0);
        let r = p_laplace_residual(&h, &grid, 2.0);
        assert!(r.max_abs < 1e-10, "{}", r.max_abs);
    }
}
