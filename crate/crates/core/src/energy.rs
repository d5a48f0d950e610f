//! Energy integrals `I(tau)`, the epsilon characteristic of level shells, and the growth
//! theorems built on them: per-form growth, band bounds, the Phragmen-Lindelof alternative,
//! N-means over partition families and the tract-counting bound.

use serde::{Deserialize, Serialize};

use crate::domains::{level_shell, sublevel_integral, Grid, Tag};
use crate::error::{Error, Result};
use crate::exhaustion::{level_window, ExhaustionFunction};
use crate::quad::{gauss_legendre, golden_min};
use crate::wtforms::{ScalarFormPair, StructureField};

/// Relative tolerance for numerical growth comparisons.
pub const GROWTH_TOL: f64 = 0.03;

/// Default relative tolerance of boundary trace and flux checks.
pub const BOUNDARY_TOL: f64 = 1e-6;

/// How an epsilon value was obtained. Both are upper bounds for the true infimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EpsTag {
    /// The ratio of one given form.
    PerForm,
    /// The minimum of per-form ratios over a finite test family.
    FamilyUpperBound,
}

impl EpsTag {
    pub fn as_str(self) -> &'static str {
        match self {
            EpsTag::PerForm => "PerForm",
            EpsTag::FamilyUpperBound => "FamilyUpperBound",
        }
    }
}

/// Boundary condition imposed on a form along the manifold boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryTag {
    /// `f = 0` on the boundary.
    Dirichlet,
    /// Zero normal flux `<A(grad f), n> = 0`.
    Neumann,
    /// `f <A(grad f), n> = 0`.
    Mixed,
}

fn vec_at(v: &[f64], dim: usize, n: usize) -> &[f64] {
    &v[n * dim..(n + 1) * dim]
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Largest relative violation of `bc` over boundary nodes. With a `domain` mask, nodes
/// outside the mask count as boundary for the trace conditions.
pub fn boundary_defect(grid: &Grid, pair: &ScalarFormPair, bc: BoundaryTag, domain: Option<&[bool]>) -> f64 {
    let dim = grid.dim();
    let f_scale = max_abs(&pair.f);
    let t_scale = (0..grid.len()).map(|n| norm(vec_at(&pair.theta, dim, n))).fold(0.0, f64::max);
    let on_boundary = |n: usize| grid.tag(n) == Tag::ManifoldBoundary;
    let outside = |n: usize| domain.is_some_and(|m| !m[n]);
    let mut worst = 0.0f64;
    for n in 0..grid.len() {
        match bc {
            BoundaryTag::Dirichlet => {
                if (on_boundary(n) || outside(n)) && f_scale > 0.0 {
                    worst = worst.max(pair.f[n].abs() / f_scale);
                }
            }
            BoundaryTag::Neumann | BoundaryTag::Mixed => {
                if outside(n) && f_scale > 0.0 {
                    worst = worst.max(pair.f[n].abs() / f_scale);
                }
                if !on_boundary(n) || t_scale == 0.0 {
                    continue;
                }
                let th = vec_at(&pair.theta, dim, n);
                for a in 0..dim {
                    for side in 0..2 {
                        if grid.faces_boundary(n, a, side) {
                            let v = if bc == BoundaryTag::Neumann {
                                th[a].abs() / t_scale
                            } else {
                                (pair.f[n] * th[a]).abs() / (t_scale * f_scale.max(f64::MIN_POSITIVE))
                            };
                            worst = worst.max(v);
                        }
                    }
                }
            }
        }
    }
    worst
}

/// Error unless `pair` satisfies `bc` within `tol`.
pub fn require_boundary_condition(
    grid: &Grid,
    pair: &ScalarFormPair,
    bc: BoundaryTag,
    domain: Option<&[bool]>,
    tol: f64,
) -> Result<()> {
    let d = boundary_defect(grid, pair, bc, domain);
    if d > tol {
        return Err(Error::BoundaryConditionViolated(format!(
            "{bc:?} defect {d:.3e} exceeds {tol:.1e}"
        )));
    }
    Ok(())
}

/// Nodal quantities of one pair, shared by the shell and volume quadratures.
struct Prepared<'a> {
    grid: &'a Grid,
    pair: &'a ScalarFormPair,
    h: &'a ExhaustionFunction,
    hv: Vec<f64>,
    /// `|w|^p` per node.
    wp: Vec<f64>,
    lo: f64,
    hi: f64,
}

impl<'a> Prepared<'a> {
    fn new(grid: &'a Grid, pair: &'a ScalarFormPair, h: &'a ExhaustionFunction, p: f64) -> Self {
        let dim = grid.dim();
        let hv = h.values(grid);
        let wp = (0..grid.len()).map(|n| norm(vec_at(&pair.w, dim, n)).powf(p)).collect();
        let lo = hv.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = level_window(h, grid).1.min(h.h0);
        Prepared {
            grid,
            pair,
            h,
            hv,
            wp,
            lo,
            hi,
        }
    }

    fn check(&self, tau: f64) -> Result<()> {
        if tau > self.lo && tau <= self.hi {
            Ok(())
        } else {
            Err(Error::LevelOutOfRange {
                t: tau,
                lo: self.lo,
                hi: self.hi,
            })
        }
    }

    fn volume(&self, g: &[f64], tau: f64) -> Result<f64> {
        self.check(tau)?;
        sublevel_integral(self.grid, &self.hv, g, tau)
    }

    fn band(&self, g: &[f64], t1: f64, t2: f64) -> Result<f64> {
        Ok(self.volume(g, t2)? - self.volume(g, t1)?)
    }

    fn energy(&self, tau: f64) -> Result<f64> {
        self.volume(&self.wp, tau)
    }

    /// Orthonormal-frame unit normal `grad h / |grad h|` at `x`, or `None` where the gradient vanishes.
    fn normal(&self, x: &[f64], out: &mut [f64]) -> Option<()> {
        let dim = x.len();
        let mut g = [0.0; 4];
        self.h.coordinate_gradient(x, out);
        self.grid.chart.inv_metric(x, &mut g[..dim]);
        for a in 0..dim {
            out[a] *= g[a].sqrt();
        }
        let len = norm(out);
        if len > 0.0 {
            out.iter_mut().for_each(|v| *v /= len);
            Some(())
        } else {
            None
        }
    }

    /// `(int_Sigma |w|^p / |grad h|, int_Sigma f <theta, nu>, int_Sigma |f||theta|)` at level `tau`.
    fn shell_terms(&self, tau: f64) -> Result<(f64, f64, f64)> {
        self.check(tau)?;
        let grid = self.grid;
        let dim = grid.dim();
        let shell = level_shell(grid, &self.hv, tau)?;
        let num = shell.integrate(grid, |ep, x| {
            let gn = self.h.grad_norm(&grid.chart, x);
            if gn > 0.0 {
                ep.interp(&self.wp) / gn
            } else {
                0.0
            }
        });
        let pairing = |ep: &crate::domains::EdgePoint, x: &[f64], signed: bool| {
            let mut nu = [0.0; 4];
            let f = ep.interp(&self.pair.f);
            let (ta, tb) = (vec_at(&self.pair.theta, dim, ep.a), vec_at(&self.pair.theta, dim, ep.b));
            let mut th = [0.0; 4];
            for a in 0..dim {
                th[a] = (1.0 - ep.s) * ta[a] + ep.s * tb[a];
            }
            if signed {
                if self.normal(x, &mut nu[..dim]).is_none() {
                    return 0.0;
                }
                f * (0..dim).map(|a| th[a] * nu[a]).sum::<f64>()
            } else {
                f.abs() * norm(&th[..dim])
            }
        };
        let den = shell.integrate(grid, |ep, x| pairing(ep, x, true));
        let scale = shell.integrate(grid, |ep, x| pairing(ep, x, false));
        Ok((num, den, scale))
    }

    fn epsilon(&self, tau: f64) -> Result<f64> {
        let (num, den, scale) = self.shell_terms(tau)?;
        if den == 0.0 || den.abs() <= 1e-12 * scale || !den.is_finite() {
            return Err(Error::ZeroDenominator { tau });
        }
        Ok(num / den.abs())
    }
}

/// `I(tau)` with its coarea cross-check.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnergyIntegral {
    pub tau: f64,
    /// Volume quadrature of `|w|^p` over `{h < tau}`.
    pub value: f64,
    /// Volume below the window start plus Gauss-Legendre integration of shell integrals of
    /// `|w|^p / |grad h|` up to `tau`.
    pub coarea: f64,
    pub relative_gap: f64,
}

/// `I(tau) = int_{h < tau} |w|^p dV`.
pub fn energy_integral(grid: &Grid, pair: &ScalarFormPair, h: &ExhaustionFunction, p: f64, tau: f64) -> Result<f64> {
    Prepared::new(grid, pair, h, p).energy(tau)
}

/// [`energy_integral`] together with the coarea assembly of the same quantity.
pub fn energy_integral_checked(
    grid: &Grid,
    pair: &ScalarFormPair,
    h: &ExhaustionFunction,
    p: f64,
    tau: f64,
) -> Result<EnergyIntegral> {
    let prep = Prepared::new(grid, pair, h, p);
    let value = prep.energy(tau)?;
    let start = level_window(h, grid).0.max(prep.lo);
    let coarea = if tau > start {
        let base = prep.energy(start)?;
        let cell = grid.axes.iter().map(|a| a.step).fold(0.0, f64::max);
        let pieces = (((tau - start) / cell).ceil() as usize).clamp(1, 16);
        let failed = std::cell::Cell::new(None);
        let shells = gauss_legendre(
            |t| match prep.shell_terms(t) {
                Ok((num, _, _)) => num,
                Err(e) => {
                    failed.set(Some(e.to_string()));
                    0.0
                }
            },
            start,
            tau,
            pieces,
        );
        if let Some(msg) = failed.into_inner() {
            return Err(Error::InvalidDomain(format!("coarea cross-check failed: {msg}")));
        }
        base + shells
    } else {
        value
    };
    let relative_gap = if value > 0.0 { (coarea - value).abs() / value } else { coarea.abs() };
    Ok(EnergyIntegral {
        tau,
        value,
        coarea,
        relative_gap,
    })
}

/// A tagged epsilon value.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Epsilon {
    pub value: f64,
    pub tag: EpsTag,
    /// Index of the family member attaining the value.
    pub member: usize,
}

/// Ratio `int_Sigma |w|^p / |grad h| / |int_Sigma f <A(grad f), nu>|` on `{h = tau}`: an upper
/// bound for the epsilon characteristic.
pub fn epsilon_for_form(grid: &Grid, pair: &ScalarFormPair, h: &ExhaustionFunction, p: f64, tau: f64) -> Result<Epsilon> {
    Ok(Epsilon {
        value: Prepared::new(grid, pair, h, p).epsilon(tau)?,
        tag: EpsTag::PerForm,
        member: 0,
    })
}

/// Members of `family` satisfying `bc` (restricted to `domain`) within `tol`.
pub fn admissible_members(
    grid: &Grid,
    family: &[ScalarFormPair],
    bc: BoundaryTag,
    domain: Option<&[bool]>,
    tol: f64,
) -> Vec<usize> {
    (0..family.len())
        .filter(|&i| boundary_defect(grid, &family[i], bc, domain) <= tol)
        .collect()
}

/// Minimum of the per-form ratios over a test family admissible for `bc` on `domain`.
#[allow(clippy::too_many_arguments)]
pub fn epsilon_estimate(
    grid: &Grid,
    h: &ExhaustionFunction,
    tau: f64,
    p: f64,
    bc: BoundaryTag,
    family: &[ScalarFormPair],
    domain: Option<&[bool]>,
) -> Result<Epsilon> {
    if family.is_empty() {
        return Err(Error::EmptyFamily);
    }
    for (i, pair) in family.iter().enumerate() {
        let d = boundary_defect(grid, pair, bc, domain);
        if d > BOUNDARY_TOL {
            return Err(Error::BoundaryConditionViolated(format!(
                "family member {i}: {bc:?} defect {d:.3e}"
            )));
        }
    }
    let mut best: Option<Epsilon> = None;
    for (i, pair) in family.iter().enumerate() {
        match Prepared::new(grid, pair, h, p).epsilon(tau) {
            Ok(v) => {
                if best.is_none_or(|b| v < b.value) {
                    best = Some(Epsilon {
                        value: v,
                        tag: EpsTag::FamilyUpperBound,
                        member: i,
                    });
                }
            }
            Err(Error::ZeroDenominator { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    best.ok_or(Error::AllDenominatorsZero)
}

/// First-derivative weights at `x0` for the nodes `xs` (Fornberg's recursion).
fn derivative_weights(x0: f64, xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut c = vec![[0.0f64; 2]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    for i in 1..n {
        let mn = i.min(1);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|w| w[1]).collect()
}

/// Derivative of samples `y(x)` from 5-point stencils, centred where possible and one-sided
/// at the ends.
pub fn sample_derivative(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let width = n.min(5);
    (0..n)
        .map(|i| {
            let start = i.saturating_sub(width / 2).min(n - width);
            let w = derivative_weights(x[i], &x[start..start + width]);
            w.iter().zip(&y[start..start + width]).map(|(a, b)| a * b).sum()
        })
        .collect()
}

fn lagrange(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    (0..xs.len())
        .map(|i| {
            let basis: f64 = (0..xs.len())
                .filter(|&j| j != i)
                .map(|j| (x - xs[j]) / (xs[i] - xs[j]))
                .product();
            basis * ys[i]
        })
        .sum()
}

/// Cumulative integral of samples `y(x)` from `x[0]`, integrating on each interval the cubic
/// through the four nearest samples (the chord when fewer than four exist).
pub fn cumulative_integral(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let width = n.min(4);
    let g = 0.5 / 3f64.sqrt();
    let mut out = Vec::with_capacity(n);
    let mut acc = 0.0;
    for i in 0..n {
        if i > 0 {
            let start = (i - 1).saturating_sub(1).min(n - width);
            let (xs, ys) = (&x[start..start + width], &y[start..start + width]);
            let (a, b) = (x[i - 1], x[i]);
            let mid = 0.5 * (a + b);
            let h = b - a;
            acc += 0.5 * h * (lagrange(xs, ys, mid - g * h) + lagrange(xs, ys, mid + g * h));
        }
        out.push(acc);
    }
    out
}

/// Sampled energy growth of one pair.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EnergyCurve {
    pub tau_samples: Vec<f64>,
    #[serde(rename = "I")]
    pub i: Vec<f64>,
    #[serde(rename = "dI")]
    pub di: Vec<f64>,
    pub eps: Vec<f64>,
    pub eps_tag: EpsTag,
    /// `I(tau) exp(-nu1 int_{tau_0}^tau eps)`.
    pub monotone_quantity: Vec<f64>,
}

impl EnergyCurve {
    pub fn len(&self) -> usize {
        self.tau_samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau_samples.is_empty()
    }
}

fn check_window(taus: &[f64]) -> Result<()> {
    if taus.len() < 3 {
        return Err(Error::WindowTooShort {
            samples: taus.len(),
            required: 3,
        });
    }
    if let Some(w) = taus.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(Error::LevelOutOfRange {
            t: w[1],
            lo: w[0],
            hi: f64::INFINITY,
        });
    }
    Ok(())
}

fn is_trivial(pair: &ScalarFormPair) -> bool {
    max_abs(&pair.w) <= 1e-12 * max_abs(&pair.f).max(1.0)
}

fn build_curve(prep: &Prepared, nu1: f64, taus: &[f64], trivial: bool) -> Result<EnergyCurve> {
    let i = taus.iter().map(|&t| prep.energy(t)).collect::<Result<Vec<_>>>()?;
    let eps = if trivial {
        vec![0.0; taus.len()]
    } else {
        taus.iter().map(|&t| prep.epsilon(t)).collect::<Result<Vec<_>>>()?
    };
    let di = sample_derivative(taus, &i);
    let integral = cumulative_integral(taus, &eps);
    let monotone_quantity = i.iter().zip(&integral).map(|(v, s)| v * (-nu1 * s).exp()).collect();
    Ok(EnergyCurve {
        tau_samples: taus.to_vec(),
        i,
        di,
        eps,
        eps_tag: EpsTag::PerForm,
        monotone_quantity,
    })
}

/// Outcome of one sampled inequality.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CheckOutcome {
    pub passed: bool,
    /// Smallest relative margin; negative values are violations.
    pub worst_margin: f64,
    /// Sample (or first sample of the pair) attaining the worst margin.
    pub at: usize,
}

impl CheckOutcome {
    fn new() -> Self {
        CheckOutcome {
            passed: true,
            worst_margin: f64::INFINITY,
            at: 0,
        }
    }

    fn record(&mut self, margin: f64, at: usize, tol: f64) {
        if margin < self.worst_margin {
            self.worst_margin = margin;
            self.at = at;
        }
        if margin < -tol {
            self.passed = false;
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GrowthOptions {
    pub bc: BoundaryTag,
    pub boundary_tolerance: f64,
    /// Relative tolerance of every growth comparison.
    pub tolerance: f64,
}

impl Default for GrowthOptions {
    fn default() -> Self {
        GrowthOptions {
            bc: BoundaryTag::Dirichlet,
            boundary_tolerance: BOUNDARY_TOL,
            tolerance: GROWTH_TOL,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthReport {
    pub curve: EnergyCurve,
    /// `dw = 0`: the energy vanishes identically and no growth is asserted.
    pub trivial: bool,
    /// `dI >= nu1 eps I` at every sample.
    pub differential: CheckOutcome,
    /// The monotone quantity never dips below its running maximum by more than the tolerance.
    pub monotone: CheckOutcome,
    /// `I(tau_1) exp(nu1 int eps) <= I(tau_2)` for all sampled `tau_1 < tau_2`.
    pub integrated: CheckOutcome,
    /// Largest `|dI - nu1 eps I| / (nu1 eps I)`; zero when equality holds exactly.
    pub identity_gap: f64,
    pub tolerance: f64,
    pub boundary_defect: f64,
    pub truncation: Option<f64>,
}

impl GrowthReport {
    pub fn passed(&self) -> bool {
        self.differential.passed && self.monotone.passed && self.integrated.passed
    }
}

/// Sample `I`, `dI/dtau` and the per-form epsilon on `taus` and check the growth inequalities.
pub fn growth_verifier(
    grid: &Grid,
    pair: &ScalarFormPair,
    h: &ExhaustionFunction,
    p: f64,
    nu1: f64,
    taus: &[f64],
    opts: &GrowthOptions,
) -> Result<GrowthReport> {
    let defect = boundary_defect(grid, pair, opts.bc, None);
    if defect > opts.boundary_tolerance {
        return Err(Error::BoundaryConditionViolated(format!(
            "{:?} defect {defect:.3e} exceeds {:.1e}",
            opts.bc, opts.boundary_tolerance
        )));
    }
    check_window(taus)?;
    let prep = Prepared::new(grid, pair, h, p);
    let trivial = is_trivial(pair);
    let curve = build_curve(&prep, nu1, taus, trivial)?;
    let tol = opts.tolerance;
    let mut differential = CheckOutcome::new();
    let mut monotone = CheckOutcome::new();
    let mut integrated = CheckOutcome::new();
    let mut identity_gap = 0.0f64;
    if !trivial {
        let integral = cumulative_integral(taus, &curve.eps);
        let mut running = f64::NEG_INFINITY;
        for k in 0..taus.len() {
            let rate = nu1 * curve.eps[k] * curve.i[k];
            differential.record((curve.di[k] - rate) / rate, k, tol);
            identity_gap = identity_gap.max(((curve.di[k] - rate) / rate).abs());
            let q = curve.monotone_quantity[k];
            running = running.max(q);
            monotone.record(q / running - 1.0, k, tol);
            for j in k + 1..taus.len() {
                let grown = curve.i[k] * (nu1 * (integral[j] - integral[k])).exp();
                integrated.record(curve.i[j] / grown - 1.0, k, tol);
            }
        }
    }
    Ok(GrowthReport {
        curve,
        trivial,
        differential,
        monotone,
        integrated,
        identity_gap,
        tolerance: tol,
        boundary_defect: defect,
        truncation: grid.truncation,
    })
}

/// Relative defect above which constants are not treated as admissible complementary data.
pub const COMPATIBILITY_TOL: f64 = 1e-2;

impl Prepared<'_> {
    /// Frame components of the exact `grad h` at node `n`.
    fn grad_h(&self, n: usize, out: &mut [f64]) {
        let x = self.grid.coords(n);
        if self.normal(x, out).is_some() {
            let g = self.h.grad_norm(&self.grid.chart, x);
            out.iter_mut().for_each(|v| *v *= g);
        }
    }

    /// Relative defect of the Stokes identity `int_Sigma phi <theta, nu> = int_B <grad phi, theta>`
    /// for `phi = 1` and `phi = h` on `B = {h < tau}`. Constants are admissible only when it is small.
    fn compatibility_defect(&self, tau: f64) -> Result<f64> {
        self.check(tau)?;
        let grid = self.grid;
        let dim = grid.dim();
        let shell = level_shell(grid, &self.hv, tau)?;
        let theta_at = |ep: &crate::domains::EdgePoint, out: &mut [f64]| {
            let (ta, tb) = (vec_at(&self.pair.theta, dim, ep.a), vec_at(&self.pair.theta, dim, ep.b));
            for a in 0..dim {
                out[a] = (1.0 - ep.s) * ta[a] + ep.s * tb[a];
            }
        };
        let flux = shell.integrate(grid, |ep, x| {
            let (mut th, mut nu) = ([0.0; 4], [0.0; 4]);
            theta_at(ep, &mut th[..dim]);
            if self.normal(x, &mut nu[..dim]).is_none() {
                return 0.0;
            }
            (0..dim).map(|a| th[a] * nu[a]).sum()
        });
        let size = shell.integrate(grid, |ep, _| {
            let mut th = [0.0; 4];
            theta_at(ep, &mut th[..dim]);
            norm(&th[..dim])
        });
        let mut paired = vec![0.0; grid.len()];
        let mut scale = vec![0.0; grid.len()];
        let mut gh = [0.0; 4];
        for n in 0..grid.len() {
            self.grad_h(n, &mut gh[..dim]);
            let th = vec_at(&self.pair.theta, dim, n);
            paired[n] = (0..dim).map(|a| gh[a] * th[a]).sum();
            scale[n] = norm(&gh[..dim]) * norm(th);
        }
        let inner = self.volume(&paired, tau)?;
        let inner_scale = self.volume(&scale, tau)?;
        let d1 = if size > 0.0 { flux.abs() / size } else { 0.0 };
        let denom = tau.abs() * size + inner_scale;
        let dh = if denom > 0.0 { (tau * flux - inner).abs() / denom } else { 0.0 };
        Ok(d1.max(dh))
    }

    /// Range of `f` over nodes with `t1 <= h <= t2`, or over all nodes if none.
    fn band_range(&self, t1: f64, t2: f64) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (n, &v) in self.hv.iter().enumerate() {
            if v >= t1 && v <= t2 {
                lo = lo.min(self.pair.f[n]);
                hi = hi.max(self.pair.f[n]);
            }
        }
        if lo > hi {
            lo = self.pair.f.iter().cloned().fold(f64::INFINITY, f64::min);
            hi = self.pair.f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        }
        (lo, hi)
    }

    /// `|grad h|^a |theta|^e` per node.
    fn band_base(&self, a: f64, e: f64) -> Vec<f64> {
        let dim = self.grid.dim();
        (0..self.grid.len())
            .map(|n| {
                let gh = self.h.grad_norm(&self.grid.chart, self.grid.coords(n));
                let th = if e == 0.0 { 1.0 } else { norm(vec_at(&self.pair.theta, dim, n)).powf(e) };
                gh.powf(a) * th
            })
            .collect()
    }

    /// `int_band base |f - c|^b`.
    fn band_moment(&self, base: &[f64], t1: f64, t2: f64, b: f64, c: f64) -> Result<f64> {
        let g: Vec<f64> = base
            .iter()
            .zip(&self.pair.f)
            .map(|(w, f)| w * (f - c).abs().powf(b))
            .collect();
        self.band(&g, t1, t2)
    }

    /// `int_band |grad h|^a |f - c|^b |theta|^e` at `c = 0`, and its minimum over admissible
    /// constants with the minimizing constant.
    fn best_constant(&self, t1: f64, t2: f64, a: f64, b: f64, e: f64, constants: bool) -> Result<(f64, f64, f64)> {
        let base = self.band_base(a, e);
        let at_zero = self.band_moment(&base, t1, t2, b, 0.0)?;
        if !constants {
            return Ok((at_zero, 0.0, at_zero));
        }
        let (lo, hi) = self.band_range(t1, t2);
        let (c, v) = if hi > lo {
            golden_min(
                |c| self.band_moment(&base, t1, t2, b, c).unwrap_or(f64::INFINITY),
                lo,
                hi,
                GOLDEN_STEPS,
            )
        } else {
            (lo, self.band_moment(&base, t1, t2, b, lo)?)
        };
        Ok(if v < at_zero { (at_zero, c, v) } else { (at_zero, 0.0, at_zero) })
    }
}

const GOLDEN_STEPS: usize = 40;

/// One side-by-side comparison of a band bound.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BandBound {
    pub lhs: f64,
    /// Right side with `c = 0`.
    pub rhs_zero: f64,
    /// Right side at the best admissible constant.
    pub rhs: f64,
    pub constant: f64,
    pub slack: f64,
    pub holds: bool,
}

impl BandBound {
    fn new(lhs: f64, rhs_zero: f64, rhs: f64, constant: f64) -> Self {
        let slack = rhs - lhs;
        BandBound {
            lhs,
            rhs_zero,
            rhs,
            constant,
            slack,
            holds: slack >= 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BandReport {
    pub tau1: f64,
    pub tau2: f64,
    pub p: f64,
    pub nu1: f64,
    pub nu2: f64,
    /// Whether nonzero constants passed the Stokes compatibility check.
    pub constants_admissible: bool,
    pub compatibility_defect: f64,
    /// `nu1 I(tau1) <= p / (tau2 - tau1) int_band |grad h| |f - c| |theta|`.
    pub flux_bound: BandBound,
    /// `I(tau1) <= (p nu2 / ((tau2 - tau1) nu1))^p int_band |grad h|^p |f - c|^p`.
    pub power_bound: BandBound,
    pub truncation: Option<f64>,
}

/// Check both band bounds for the energy of a pair inside `{h < tau1}`.
#[allow(clippy::too_many_arguments)]
pub fn annulus_bound_check(
    grid: &Grid,
    pair: &ScalarFormPair,
    h: &ExhaustionFunction,
    p: f64,
    nu1: f64,
    nu2: f64,
    tau1: f64,
    tau2: f64,
) -> Result<BandReport> {
    if !(tau1 < tau2) {
        return Err(Error::LevelOutOfRange {
            t: tau1,
            lo: f64::NEG_INFINITY,
            hi: tau2,
        });
    }
    let prep = Prepared::new(grid, pair, h, p);
    prep.check(tau1)?;
    prep.check(tau2)?;
    let defect = prep.compatibility_defect(tau1)?.max(prep.compatibility_defect(tau2)?);
    let constants = defect <= COMPATIBILITY_TOL;
    let energy = prep.energy(tau1)?;
    let width = tau2 - tau1;
    let c1 = p / width;
    let c2 = (p * nu2 / (width * nu1)).powf(p);
    let (zero1, k1, m1) = prep.best_constant(tau1, tau2, 1.0, 1.0, 1.0, constants)?;
    let (zero2, k2, m2) = prep.best_constant(tau1, tau2, p, p, 0.0, constants)?;
    Ok(BandReport {
        tau1,
        tau2,
        p,
        nu1,
        nu2,
        constants_admissible: constants,
        compatibility_defect: defect,
        flux_bound: BandBound::new(nu1 * energy, c1 * zero1, c1 * m1, k1),
        power_bound: BandBound::new(energy, c2 * zero2, c2 * m2, k2),
        truncation: grid.truncation,
    })
}

/// Outcome of the Phragmen-Lindelof alternative on a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Alternative {
    /// `dw = 0`.
    TrivialForm,
    /// `I(tau) exp(-nu1 int eps)` stays away from zero.
    GrowthA,
    /// The flux band moment `mu(tau)` times the same factor stays away from zero.
    GrowthB,
    /// The power band moment `m(tau)` times the same factor stays away from zero.
    GrowthC,
    /// No proxy stayed away from zero on the window.
    Undetermined,
}

/// One liminf proxy sampled on the window.
#[derive(Debug, Clone, Serialize)]
pub struct ProxySeries {
    pub values: Vec<f64>,
    /// Minimum over the last third of the window.
    pub liminf_proxy: f64,
    pub bounded_away: bool,
}

impl ProxySeries {
    fn new(values: Vec<f64>, ratio: f64) -> Self {
        let liminf_proxy = tail_min(&values);
        let peak = values.iter().cloned().fold(0.0, f64::max);
        ProxySeries {
            bounded_away: peak > 0.0 && liminf_proxy > ratio * peak,
            values,
            liminf_proxy,
        }
    }
}

/// Minimum over the last third of the samples.
pub fn tail_min(values: &[f64]) -> f64 {
    let k = values.len().div_ceil(3).max(1).min(values.len());
    values[values.len() - k..].iter().cloned().fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Serialize)]
pub struct PlReport {
    pub alternative: Alternative,
    pub tau_samples: Vec<f64>,
    /// `I exp(-nu1 int eps)`, `mu exp(-nu1 int eps)` and `m exp(-nu1 int eps)`.
    pub proxies: Option<[ProxySeries; 3]>,
    /// The liminf is read off the window, not computed at the end of the manifold.
    pub extrapolated: bool,
    pub eps_tag: EpsTag,
    pub vanish_ratio: f64,
    pub truncation: Option<f64>,
}

/// Relative size below which a window proxy counts as vanishing.
pub const VANISH_RATIO: f64 = 1e-2;

/// Evaluate the three growth alternatives on the samples `taus` whose unit band fits the window.
pub fn pl_alternative_check(
    grid: &Grid,
    pair: &ScalarFormPair,
    h: &ExhaustionFunction,
    p: f64,
    nu1: f64,
    taus: &[f64],
    opts: &GrowthOptions,
) -> Result<PlReport> {
    require_boundary_condition(grid, pair, opts.bc, None, opts.boundary_tolerance)?;
    let prep = Prepared::new(grid, pair, h, p);
    let report = |alternative, samples: Vec<f64>, proxies| PlReport {
        alternative,
        tau_samples: samples,
        proxies,
        extrapolated: true,
        eps_tag: EpsTag::PerForm,
        vanish_ratio: VANISH_RATIO,
        truncation: grid.truncation,
    };
    if is_trivial(pair) {
        return Ok(report(Alternative::TrivialForm, Vec::new(), None));
    }
    let samples: Vec<f64> = taus.iter().cloned().filter(|&t| t + 1.0 <= prep.hi).collect();
    check_window(&samples)?;
    let curve = build_curve(&prep, nu1, &samples, false)?;
    let integral = cumulative_integral(&samples, &curve.eps);
    let mut mu = Vec::with_capacity(samples.len());
    let mut m = Vec::with_capacity(samples.len());
    for (k, &t) in samples.iter().enumerate() {
        let constants = prep.compatibility_defect(t)? <= COMPATIBILITY_TOL;
        let damp = (-nu1 * integral[k]).exp();
        mu.push(prep.best_constant(t, t + 1.0, 1.0, 1.0, 1.0, constants)?.2 * damp);
        m.push(prep.best_constant(t, t + 1.0, p, p, 0.0, constants)?.2 * damp);
    }
    let proxies = [
        ProxySeries::new(curve.monotone_quantity.clone(), VANISH_RATIO),
        ProxySeries::new(mu, VANISH_RATIO),
        ProxySeries::new(m, VANISH_RATIO),
    ];
    let alternative = match proxies.iter().position(|s| s.bounded_away) {
        Some(0) => Alternative::GrowthA,
        Some(1) => Alternative::GrowthB,
        Some(_) => Alternative::GrowthC,
        None => Alternative::Undetermined,
    };
    Ok(report(alternative, samples, Some(proxies)))
}

/// One open set of a partition with the test family used to bound its epsilon.
#[derive(Debug, Clone)]
pub struct PartitionMember {
    pub mask: Vec<bool>,
    pub family: Vec<ScalarFormPair>,
}

/// `N` disjoint open sets, each reaching the truncation.
#[derive(Debug, Clone)]
pub struct Partition {
    pub label: String,
    pub members: Vec<PartitionMember>,
}

fn first_shared(a: &[bool], b: &[bool]) -> Option<usize> {
    a.iter().zip(b).position(|(x, y)| *x && *y)
}

impl Partition {
    fn validate(&self, grid: &Grid, n: usize) -> Result<()> {
        if self.members.len() != n {
            return Err(Error::InvalidDomain(format!(
                "partition `{}` has {} members, expected {n}",
                self.label,
                self.members.len()
            )));
        }
        for (i, m) in self.members.iter().enumerate() {
            if m.mask.len() != grid.len() {
                return Err(Error::InvalidDomain(format!("partition `{}`: mask {i} has the wrong length", self.label)));
            }
            if !(0..grid.len()).any(|v| m.mask[v] && grid.tag(v) == Tag::Cut) {
                return Err(Error::InvalidDomain(format!(
                    "partition `{}`: member {i} does not reach the truncation",
                    self.label
                )));
            }
            for (j, other) in self.members.iter().enumerate().skip(i + 1) {
                if let Some(node) = first_shared(&m.mask, &other.mask) {
                    return Err(Error::DisjointnessViolated {
                        first: i,
                        second: j,
                        node,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Family epsilon of one member at every level of `taus`; levels where every denominator
/// vanishes are an error.
fn member_epsilons(
    grid: &Grid,
    h: &ExhaustionFunction,
    p: f64,
    family: &[ScalarFormPair],
    mask: Option<&[bool]>,
    taus: &[f64],
) -> Result<Vec<f64>> {
    if family.is_empty() {
        return Err(Error::EmptyFamily);
    }
    for (i, pair) in family.iter().enumerate() {
        let d = boundary_defect(grid, pair, BoundaryTag::Dirichlet, mask);
        if d > BOUNDARY_TOL {
            return Err(Error::BoundaryConditionViolated(format!(
                "family member {i}: Dirichlet defect {d:.3e}"
            )));
        }
    }
    let mut best = vec![f64::INFINITY; taus.len()];
    for pair in family {
        let prep = Prepared::new(grid, pair, h, p);
        for (slot, &t) in best.iter_mut().zip(taus) {
            match prep.epsilon(t) {
                Ok(v) => *slot = slot.min(v),
                Err(Error::ZeroDenominator { .. }) => {}
                Err(e) => return Err(e),
            }
        }
    }
    if best.iter().any(|v| v.is_infinite()) {
        return Err(Error::AllDenominatorsZero);
    }
    Ok(best)
}

/// `E(t; N)` restricted to a partition family.
#[derive(Debug, Clone, Serialize)]
pub struct NMean {
    pub t: f64,
    pub n: usize,
    pub value: f64,
    pub tag: EpsTag,
    /// Index of the partition attaining the minimum.
    pub partition: usize,
    /// Epsilon estimate of every member of every partition.
    pub member_eps: Vec<Vec<f64>>,
}

fn n_mean_curve(
    grid: &Grid,
    h: &ExhaustionFunction,
    p: f64,
    n: usize,
    partitions: &[Partition],
    taus: &[f64],
) -> Result<Vec<Vec<Vec<f64>>>> {
    if n == 0 {
        return Err(Error::InvalidDomain("N must be at least 1".into()));
    }
    if partitions.is_empty() {
        return Err(Error::EmptyFamily);
    }
    partitions
        .iter()
        .map(|part| {
            part.validate(grid, n)?;
            part.members
                .iter()
                .map(|m| member_epsilons(grid, h, p, &m.family, Some(&m.mask), taus))
                .collect()
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Minimum over `partitions` of the mean member epsilon at level `t`: an upper bound for `E(t; N)`.
pub fn n_mean(grid: &Grid, h: &ExhaustionFunction, p: f64, t: f64, n: usize, partitions: &[Partition]) -> Result<NMean> {
    let curves = n_mean_curve(grid, h, p, n, partitions, &[t])?;
    let member_eps: Vec<Vec<f64>> = curves.iter().map(|part| part.iter().map(|m| m[0]).collect()).collect();
    let (partition, value) = member_eps
        .iter()
        .map(|e| mean(e))
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, v)| if v < best.1 { (i, v) } else { best });
    Ok(NMean {
        t,
        n,
        value,
        tag: EpsTag::FamilyUpperBound,
        partition,
        member_eps,
    })
}

/// The averaging step behind `E(t; N+1) >= E(t; N)`.
#[derive(Debug, Clone, Serialize)]
pub struct LeaveOneOut {
    /// Mean over all `N + 1` members, formed as the mean of the leave-one-out means.
    pub full_mean: f64,
    pub sub_means: Vec<f64>,
    pub best_sub: f64,
    pub holds: bool,
}

/// Compare the mean of `eps` with its `N`-member sub-means.
pub fn leave_one_out(eps: &[f64]) -> LeaveOneOut {
    let k = eps.len();
    let total: f64 = eps.iter().sum();
    let sub_means: Vec<f64> = if k > 1 {
        eps.iter().map(|e| (total - e) / (k - 1) as f64).collect()
    } else {
        vec![total]
    };
    let full_mean = mean(&sub_means);
    let best_sub = sub_means.iter().cloned().fold(f64::INFINITY, f64::min);
    LeaveOneOut {
        full_mean,
        best_sub,
        holds: full_mean >= best_sub * (1.0 - 1e-12),
        sub_means,
    }
}

/// `E(t; N+1)` over a family of `(N+1)`-partitions against `E(t; N)` over their leave-one-out subfamilies.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NMonotonicity {
    pub e_next: f64,
    pub e_prev: f64,
    pub holds: bool,
}

/// Check N-monotonicity given the member epsilons of each `(N+1)`-partition.
pub fn n_monotonicity(member_eps: &[Vec<f64>]) -> Result<NMonotonicity> {
    if member_eps.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let mut e_next = f64::INFINITY;
    let mut e_prev = f64::INFINITY;
    for eps in member_eps {
        let l = leave_one_out(eps);
        e_next = e_next.min(l.full_mean);
        e_prev = e_prev.min(l.best_sub);
    }
    Ok(NMonotonicity {
        e_next,
        e_prev,
        holds: e_next >= e_prev * (1.0 - 1e-12),
    })
}

/// Family estimates on nested open sets over one shared family.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DomainMonotonicity {
    pub inner: f64,
    pub outer: f64,
    pub inner_members: usize,
    pub outer_members: usize,
    pub holds: bool,
}

/// Estimate epsilon on `inner` and `outer` from the members of `family` admissible for each.
pub fn domain_monotonicity(
    grid: &Grid,
    h: &ExhaustionFunction,
    p: f64,
    t: f64,
    family: &[ScalarFormPair],
    inner: &[bool],
    outer: &[bool],
) -> Result<DomainMonotonicity> {
    if let Some(node) = inner.iter().zip(outer).position(|(i, o)| *i && !*o) {
        return Err(Error::InvalidDomain(format!("inner set leaves the outer set at node {node}")));
    }
    let pick = |mask: &[bool]| -> Result<(f64, usize)> {
        let idx = admissible_members(grid, family, BoundaryTag::Dirichlet, Some(mask), BOUNDARY_TOL);
        let members: Vec<ScalarFormPair> = idx.iter().map(|&i| family[i].clone()).collect();
        Ok((member_epsilons(grid, h, p, &members, Some(mask), &[t])?[0], idx.len()))
    };
    let (inner_eps, inner_members) = pick(inner)?;
    let (outer_eps, outer_members) = pick(outer)?;
    Ok(DomainMonotonicity {
        inner: inner_eps,
        outer: outer_eps,
        inner_members,
        outer_members,
        holds: outer_eps <= inner_eps,
    })
}

fn require_plane(grid: &Grid) -> Result<()> {
    if grid.dim() != 2 {
        return Err(Error::UnsupportedDimension(grid.dim()));
    }
    Ok(())
}

fn masked_family(
    grid: &Grid,
    sf: &StructureField,
    mask: Vec<bool>,
    modes: &[f64],
    f: impl Fn(f64, &[f64]) -> f64,
) -> PartitionMember {
    let family = modes
        .iter()
        .map(|&l| {
            let values = (0..grid.len())
                .map(|n| if mask[n] { f(l, grid.coords(n)) } else { 0.0 })
                .collect();
            ScalarFormPair::new(grid, values, sf)
        })
        .collect();
    PartitionMember { mask, family }
}

/// The slab `a < x_1 < b` of a two-dimensional strip-like grid carrying
/// `sinh(l K x_0) sin(l K (x_1 - a))`, `K = pi / (b - a)`, for each mode `l`.
pub fn slab_member(grid: &Grid, sf: &StructureField, a: f64, b: f64, modes: &[f64]) -> Result<PartitionMember> {
    require_plane(grid)?;
    if !(b > a) {
        return Err(Error::InvalidDomain(format!("empty slab ({a}, {b})")));
    }
    let eps = 1e-9 * grid.axes[1].step;
    let mask = (0..grid.len())
        .map(|n| {
            let y = grid.coords(n)[1];
            y > a + eps && y < b - eps
        })
        .collect();
    let k = std::f64::consts::PI / (b - a);
    Ok(masked_family(grid, sf, mask, modes, |l, x| {
        (l * k * x[0]).sinh() * (l * k * (x[1] - a)).sin()
    }))
}

/// The sector `start < phi < start + width` (angles mod 2 pi) of a polar grid carrying
/// `r^(l K) sin(l K (phi - start))`, `K = pi / width`, for each mode `l`.
pub fn sector_member(grid: &Grid, sf: &StructureField, start: f64, width: f64, modes: &[f64]) -> Result<PartitionMember> {
    require_plane(grid)?;
    let tau = std::f64::consts::TAU;
    if !(width > 0.0 && width <= tau) {
        return Err(Error::InvalidDomain(format!("sector width {width} outside (0, 2 pi]")));
    }
    let eps = 1e-9 * grid.axes[1].step;
    let offset = move |phi: f64| (phi - start).rem_euclid(tau);
    let mask = (0..grid.len())
        .map(|n| {
            let o = offset(grid.coords(n)[1]);
            o > eps && o < width - eps
        })
        .collect();
    let k = std::f64::consts::PI / width;
    Ok(masked_family(grid, sf, mask, modes, |l, x| {
        x[0].powf(l * k) * (l * k * offset(x[1])).sin()
    }))
}

/// Slabs of a two-dimensional strip-like grid between consecutive `cuts` of the cross-section
/// (axis 1); see [`slab_member`].
pub fn slab_partition(grid: &Grid, sf: &StructureField, cuts: &[f64], modes: &[f64]) -> Result<Partition> {
    require_plane(grid)?;
    let axis = &grid.axes[1];
    let (lo, hi) = (axis.coord(0), axis.coord(axis.count - 1));
    let mut edges = vec![lo];
    edges.extend_from_slice(cuts);
    edges.push(hi);
    if edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidDomain(format!("slab cuts {cuts:?} are not increasing inside ({lo}, {hi})")));
    }
    let members = edges
        .windows(2)
        .map(|w| slab_member(grid, sf, w[0], w[1], modes))
        .collect::<Result<_>>()?;
    Ok(Partition {
        label: format!("slabs at {cuts:?}"),
        members,
    })
}

/// Angular sectors of a polar grid between consecutive `cuts`, taken cyclically; see
/// [`sector_member`].
pub fn sector_partition(grid: &Grid, sf: &StructureField, cuts: &[f64], modes: &[f64]) -> Result<Partition> {
    let tau = std::f64::consts::TAU;
    if cuts.is_empty() || cuts.windows(2).any(|w| !(w[1] > w[0])) || cuts[0] < 0.0 || *cuts.last().unwrap() >= tau {
        return Err(Error::InvalidDomain(format!("sector cuts {cuts:?} must increase inside [0, 2 pi)")));
    }
    let members = (0..cuts.len())
        .map(|i| {
            let width = if i + 1 < cuts.len() { cuts[i + 1] - cuts[i] } else { cuts[0] + tau - cuts[i] };
            sector_member(grid, sf, cuts[i], width, modes)
        })
        .collect::<Result<_>>()?;
    Ok(Partition {
        label: format!("sectors at {cuts:?}"),
        members,
    })
}

/// An open set carrying a nontrivial form that vanishes off the set.
#[derive(Debug, Clone)]
pub struct Tract {
    pub mask: Vec<bool>,
    pub pair: ScalarFormPair,
}

/// Pairwise node-disjoint tracts avoiding the manifold boundary.
#[derive(Debug, Clone)]
pub struct TractFamily {
    members: Vec<Tract>,
}

impl TractFamily {
    /// Validate disjointness, boundary avoidance, vanishing off each tract within `tol`, and
    /// nontriviality.
    pub fn new(grid: &Grid, members: Vec<Tract>, tol: f64) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::EmptyFamily);
        }
        for (i, t) in members.iter().enumerate() {
            if t.mask.len() != grid.len() || t.pair.f.len() != grid.len() {
                return Err(Error::InvalidDomain(format!("tract {i} does not match the grid")));
            }
            if let Some(node) = (0..grid.len()).find(|&n| t.mask[n] && grid.tag(n) == Tag::ManifoldBoundary) {
                return Err(Error::InvalidDomain(format!("tract {i} contains boundary node {node}")));
            }
            for (j, other) in members.iter().enumerate().skip(i + 1) {
                if let Some(node) = first_shared(&t.mask, &other.mask) {
                    return Err(Error::DisjointnessViolated {
                        first: i,
                        second: j,
                        node,
                    });
                }
            }
            if is_trivial(&t.pair) {
                return Err(Error::InvalidDomain(format!("tract {i} carries a trivial form")));
            }
            require_boundary_condition(grid, &t.pair, BoundaryTag::Dirichlet, Some(&t.mask), tol)?;
        }
        Ok(TractFamily { members })
    }

    pub fn members(&self) -> &[Tract] {
        &self.members
    }

    pub fn count(&self) -> usize {
        self.members.len()
    }

    /// The form on the union: sum of the member forms.
    pub fn total(&self) -> ScalarFormPair {
        let first = &self.members[0].pair;
        let mut total = ScalarFormPair {
            dim: first.dim,
            f: vec![0.0; first.f.len()],
            w: vec![0.0; first.w.len()],
            theta: vec![0.0; first.theta.len()],
        };
        for t in &self.members {
            for (a, b) in total.f.iter_mut().zip(&t.pair.f) {
                *a += b;
            }
            for (a, b) in total.w.iter_mut().zip(&t.pair.w) {
                *a += b;
            }
            for (a, b) in total.theta.iter_mut().zip(&t.pair.theta) {
                *a += b;
            }
        }
        total
    }
}

/// One sample of the counting argument at `tau'`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ChainStep {
    pub tau: f64,
    /// `I(tau')` of the summed form.
    pub energy: f64,
    /// `min_k I_k(tau_0) sum_k exp(a_k)`, `a_k = nu1 int eps_k`.
    pub summed: f64,
    /// `(1/L) sum_k exp(a_k)`.
    pub am: f64,
    /// `exp((1/L) sum_k a_k)`.
    pub gm: f64,
    pub am_gm_holds: bool,
    /// `min_k I_k(tau_0) L exp(nu1 int (1/L) sum_k eps_k)`.
    pub averaged: f64,
    /// `min_k I_k(tau_0) L exp(nu1 int E)`.
    pub n_mean_bound: f64,
    /// `(1/L) sum_k eps_k(tau') >= E(tau'; N)`.
    pub mean_dominates: bool,
}

/// Sampled chain of the counting argument.
#[derive(Debug, Clone, Serialize)]
pub struct ChainWitness {
    pub steps: Vec<ChainStep>,
    pub am_gm_holds: bool,
    /// The summed and averaged bounds stay below `I(tau')` within the tolerance.
    pub growth_holds: bool,
    pub mean_dominates: bool,
    pub tolerance: f64,
}

/// Window evidence for one vanishing hypothesis.
#[derive(Debug, Clone, Serialize)]
pub struct VanishingProxy {
    pub values: Vec<f64>,
    pub liminf_proxy: f64,
    pub vanishes: bool,
}

impl VanishingProxy {
    fn new(values: Vec<f64>) -> Option<Self> {
        let first = *values.first()?;
        let liminf_proxy = tail_min(&values);
        Some(VanishingProxy {
            vanishes: liminf_proxy <= VANISH_RATIO * first,
            values,
            liminf_proxy,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CountVerdict {
    /// The window supports the hypotheses, so `L < N`.
    BoundAsserted,
    /// The hypotheses cannot be confirmed on the window.
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct AhlforsReport {
    pub verdict: CountVerdict,
    pub tracts: usize,
    pub n: usize,
    /// `L < N`; a false value next to `BoundAsserted` flags a numerical inconsistency.
    pub consistent: bool,
    pub tau_samples: Vec<f64>,
    /// `E(t; N)` per sample, tagged as a family upper bound.
    pub n_mean: Vec<f64>,
    pub n_mean_tag: EpsTag,
    /// Per tract epsilon per sample.
    pub tract_eps: Vec<Vec<f64>>,
    /// `int_{tau_0}^{tau} E` at the last sample.
    pub n_mean_integral: f64,
    /// `E` stays away from zero on the last third of the window.
    pub divergence_trend: bool,
    /// `I exp(-nu1 int E)`.
    pub energy_proxy: VanishingProxy,
    /// Unit-band flux moment of the summed form times the same factor.
    pub flux_proxy: Option<VanishingProxy>,
    /// Unit-band power moment of the summed form times the same factor.
    pub power_proxy: Option<VanishingProxy>,
    pub chain: ChainWitness,
    pub truncation: Option<f64>,
}

/// Window evaluation of the tract-counting theorem for `tracts` against `N`-partitions.
#[allow(clippy::too_many_arguments)]
pub fn ahlfors_count_bound(
    grid: &Grid,
    tracts: &TractFamily,
    h: &ExhaustionFunction,
    p: f64,
    nu1: f64,
    n: usize,
    partitions: &[Partition],
    taus: &[f64],
) -> Result<AhlforsReport> {
    check_window(taus)?;
    let l = tracts.count();
    let curves = n_mean_curve(grid, h, p, n, partitions, taus)?;
    let n_mean: Vec<f64> = (0..taus.len())
        .map(|s| {
            curves
                .iter()
                .map(|part| part.iter().map(|m| m[s]).sum::<f64>() / n as f64)
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut tract_eps = Vec::with_capacity(l);
    let mut tract_energy = Vec::with_capacity(l);
    for t in tracts.members() {
        let prep = Prepared::new(grid, &t.pair, h, p);
        tract_eps.push(taus.iter().map(|&s| prep.epsilon(s)).collect::<Result<Vec<_>>>()?);
        tract_energy.push(prep.energy(taus[0])?);
    }
    let total = tracts.total();
    let prep = Prepared::new(grid, &total, h, p);
    let energy = taus.iter().map(|&s| prep.energy(s)).collect::<Result<Vec<_>>>()?;

    let e_int = cumulative_integral(taus, &n_mean);
    let damp: Vec<f64> = e_int.iter().map(|v| (-nu1 * v).exp()).collect();
    let energy_proxy = VanishingProxy::new(energy.iter().zip(&damp).map(|(a, b)| a * b).collect())
        .ok_or(Error::WindowTooShort { samples: 0, required: 3 })?;
    let banded: Vec<usize> = (0..taus.len()).filter(|&s| taus[s] + 1.0 <= prep.hi).collect();
    let flux_base = prep.band_base(1.0, 1.0);
    let power_base = prep.band_base(p, 0.0);
    let mut flux = Vec::new();
    let mut power = Vec::new();
    for &s in &banded {
        let t = taus[s];
        flux.push(prep.band_moment(&flux_base, t, t + 1.0, 1.0, 0.0)? * damp[s]);
        power.push(prep.band_moment(&power_base, t, t + 1.0, p, 0.0)? * damp[s]);
    }
    let peak = n_mean.iter().cloned().fold(0.0, f64::max);
    let divergence_trend = peak > 0.0 && tail_min(&n_mean) > VANISH_RATIO * peak;

    let i0 = tract_energy.iter().cloned().fold(f64::INFINITY, f64::min);
    let eps_int: Vec<Vec<f64>> = tract_eps.iter().map(|e| cumulative_integral(taus, e)).collect();
    let mean_eps: Vec<f64> = (0..taus.len()).map(|s| tract_eps.iter().map(|e| e[s]).sum::<f64>() / l as f64).collect();
    let mean_int = cumulative_integral(taus, &mean_eps);
    let tol = GROWTH_TOL;
    let mut steps = Vec::with_capacity(taus.len());
    for s in 0..taus.len() {
        let a: Vec<f64> = eps_int.iter().map(|e| nu1 * e[s]).collect();
        let am = a.iter().map(|v| v.exp()).sum::<f64>() / l as f64;
        let gm = (a.iter().sum::<f64>() / l as f64).exp();
        steps.push(ChainStep {
            tau: taus[s],
            energy: energy[s],
            summed: i0 * am * l as f64,
            am,
            gm,
            am_gm_holds: am >= gm * (1.0 - 1e-12),
            averaged: i0 * l as f64 * (nu1 * mean_int[s]).exp(),
            n_mean_bound: i0 * l as f64 * (nu1 * e_int[s]).exp(),
            mean_dominates: mean_eps[s] >= n_mean[s] * (1.0 - tol),
        });
    }
    let chain = ChainWitness {
        am_gm_holds: steps.iter().all(|c| c.am_gm_holds),
        growth_holds: steps
            .iter()
            .all(|c| c.summed <= c.energy * (1.0 + tol) && c.averaged <= c.energy * (1.0 + tol)),
        mean_dominates: steps.iter().all(|c| c.mean_dominates),
        steps,
        tolerance: tol,
    };
    let flux_proxy = VanishingProxy::new(flux);
    let power_proxy = VanishingProxy::new(power);
    let vanishing = energy_proxy.vanishes
        || flux_proxy.as_ref().is_some_and(|v| v.vanishes)
        || power_proxy.as_ref().is_some_and(|v| v.vanishes);
    let verdict = if divergence_trend && vanishing {
        CountVerdict::BoundAsserted
    } else {
        CountVerdict::Inconclusive
    };
    Ok(AhlforsReport {
        verdict,
        tracts: l,
        n,
        consistent: verdict == CountVerdict::Inconclusive || l < n,
        tau_samples: taus.to_vec(),
        n_mean_integral: *e_int.last().unwrap_or(&0.0),
        n_mean,
        n_mean_tag: EpsTag::FamilyUpperBound,
        tract_eps,
        divergence_trend,
        energy_proxy,
        flux_proxy,
        power_proxy,
        chain,
        truncation: grid.truncation,
    })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;
    use std::sync::OnceLock;

    use super::*;
    use crate::domains::{build_grid, GridSpec, ModelDomain};
    use crate::exhaustion::make_special_exhaustion;

    struct Strip {
        grid: Grid,
        h: ExhaustionFunction,
        pair: ScalarFormPair,
        sf: StructureField,
    }

    fn strip() -> &'static Strip {
        static S: OnceLock<Strip> = OnceLock::new();
        S.get_or_init(|| {
            let dom = ModelDomain::strip(PI);
            let grid = build_grid(&dom, &GridSpec::new(vec![181, 41], 4.5)).unwrap();
            let h = make_special_exhaustion(&dom, 2.0).unwrap();
            let sf = StructureField::p_laplace(2.0);
            let pair = ScalarFormPair::new(&grid, grid.sample(|x| x[0].sinh() * x[1].sin()), &sf);
            Strip { grid, h, pair, sf }
        })
    }

    fn pair_of(f: impl Fn(&[f64]) -> f64 + Sync) -> ScalarFormPair {
        let s = strip();
        ScalarFormPair::new(&s.grid, s.grid.sample(f), &s.sf)
    }

    fn strip_energy(t: f64) -> f64 {
        0.5 * PI * (2.0 * t).sinh()
    }

    fn strip_eps(t: f64) -> f64 {
        2.0 / (2.0 * t).tanh()
    }

    fn window(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn strip_energy_matches_separated_integral() {
        let s = strip();
        let c = energy_integral_checked(&s.grid, &s.pair, &s.h, 2.0, 1.0).unwrap();
        assert!((c.value / strip_energy(1.0) - 1.0).abs() < 0.02, "{c:?}");
        assert!(c.relative_gap < 1e-3, "{c:?}");
    }

    #[test]
    fn constant_form_has_zero_energy() {
        let s = strip();
        let pair = pair_of(|_| 2.5);
        assert_eq!(energy_integral(&s.grid, &pair, &s.h, 2.0, 1.5).unwrap(), 0.0);
    }

    #[test]
    fn energy_grows_with_level() {
        let s = strip();
        let mut prev = 0.0;
        for t in window(0.2, 3.0, 8) {
            let v = energy_integral(&s.grid, &s.pair, &s.h, 2.0, t).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn energy_rejects_levels_past_the_truncation() {
        let s = strip();
        assert!(matches!(
            energy_integral(&s.grid, &s.pair, &s.h, 2.0, 10.0),
            Err(Error::LevelOutOfRange { .. })
        ));
    }

    #[test]
    fn strip_ratio_matches_hyperbolic_cotangent() {
        let s = strip();
        for t in [0.5, 1.0, 2.0, 3.5] {
            let e = epsilon_for_form(&s.grid, &s.pair, &s.h, 2.0, t).unwrap();
            assert_eq!(e.tag, EpsTag::PerForm);
            assert!((e.value / strip_eps(t) - 1.0).abs() < 0.02, "t = {t}: {}", e.value);
        }
        let far = epsilon_for_form(&s.grid, &s.pair, &s.h, 2.0, 4.0).unwrap().value;
        assert!((far - 2.0).abs() < 0.02);
    }

    #[test]
    fn form_vanishing_on_the_shell_has_no_ratio() {
        let s = strip();
        let pair = pair_of(|x| x[1].sin() * (0.5 - x[0].abs()).max(0.0));
        assert!(matches!(
            epsilon_for_form(&s.grid, &pair, &s.h, 2.0, 1.0),
            Err(Error::ZeroDenominator { .. })
        ));
    }

    fn modes(ls: &[f64]) -> Vec<ScalarFormPair> {
        ls.iter().map(|&l| pair_of(move |x| (l * x[0]).sinh() * (l * x[1]).sin())).collect()
    }

    #[test]
    fn family_estimate_picks_the_first_mode() {
        let s = strip();
        let fam = modes(&[3.0, 1.0, 2.0]);
        let e = epsilon_estimate(&s.grid, &s.h, 1.0, 2.0, BoundaryTag::Dirichlet, &fam, None).unwrap();
        assert_eq!(e.member, 1);
        assert_eq!(e.tag, EpsTag::FamilyUpperBound);
        assert!((e.value / strip_eps(1.0) - 1.0).abs() < 0.02);
        let single = epsilon_estimate(&s.grid, &s.h, 1.0, 2.0, BoundaryTag::Dirichlet, &fam[..1], None).unwrap();
        let direct = epsilon_for_form(&s.grid, &fam[0], &s.h, 2.0, 1.0).unwrap();
        assert_eq!(single.value, direct.value);
    }

    #[test]
    fn family_estimate_guards() {
        let s = strip();
        assert!(matches!(
            epsilon_estimate(&s.grid, &s.h, 1.0, 2.0, BoundaryTag::Dirichlet, &[], None),
            Err(Error::EmptyFamily)
        ));
        let bad = vec![pair_of(|x| x[0].cosh() * x[1].cos())];
        assert!(matches!(
            epsilon_estimate(&s.grid, &s.h, 1.0, 2.0, BoundaryTag::Dirichlet, &bad, None),
            Err(Error::BoundaryConditionViolated(_))
        ));
        let zero = vec![pair_of(|x| x[1].sin() * (0.5 - x[0].abs()).max(0.0))];
        assert!(matches!(
            epsilon_estimate(&s.grid, &s.h, 1.0, 2.0, BoundaryTag::Dirichlet, &zero, None),
            Err(Error::AllDenominatorsZero)
        ));
    }

    #[test]
    fn strip_growth_holds_with_equality() {
        let s = strip();
        let taus = window(0.5, 3.0, 20);
        let r = growth_verifier(&s.grid, &s.pair, &s.h, 2.0, 1.0, &taus, &GrowthOptions::default()).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.identity_gap < 0.03);
        let q0 = r.curve.monotone_quantity[0];
        assert!(r.curve.monotone_quantity.iter().all(|q| (q / q0 - 1.0).abs() < 0.03));
        for (k, &t) in taus.iter().enumerate() {
            assert!((r.curve.i[k] / strip_energy(t) - 1.0).abs() < 0.02);
        }
    }

    #[test]
    fn constant_form_is_the_trivial_branch() {
        let s = strip();
        let pair = pair_of(|_| 0.0);
        let r = growth_verifier(&s.grid, &pair, &s.h, 2.0, 1.0, &window(0.5, 2.0, 5), &GrowthOptions::default()).unwrap();
        assert!(r.trivial);
        assert!(r.curve.i.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dirichlet_violation_is_reported() {
        let s = strip();
        let pair = pair_of(|x| x[0].sinh() * x[1].cos());
        assert!(matches!(
            growth_verifier(&s.grid, &pair, &s.h, 2.0, 1.0, &window(0.5, 2.0, 5), &GrowthOptions::default()),
            Err(Error::BoundaryConditionViolated(_))
        ));
        let opts = GrowthOptions {
            bc: BoundaryTag::Neumann,
            boundary_tolerance: 0.05,
            ..Default::default()
        };
        let neumann = pair_of(|x| x[0].sinh() * x[1].cos());
        assert!(growth_verifier(&s.grid, &neumann, &s.h, 2.0, 1.0, &window(0.5, 2.0, 5), &opts).is_ok());
    }

    #[test]
    fn band_bounds_hold_on_the_strip() {
        let s = strip();
        for (a, b) in [(1.0, 2.0), (0.5, 3.0)] {
            let r = annulus_bound_check(&s.grid, &s.pair, &s.h, 2.0, 1.0, 1.0, a, b).unwrap();
            assert!(r.constants_admissible);
            assert!(r.flux_bound.holds && r.flux_bound.slack >= 0.0, "{r:?}");
            assert!(r.power_bound.holds && r.power_bound.slack >= 0.0, "{r:?}");
        }
    }

    #[test]
    fn band_bounds_vanish_for_constants() {
        let s = strip();
        let r = annulus_bound_check(&s.grid, &pair_of(|_| 1.0), &s.h, 2.0, 1.0, 1.0, 1.0, 2.0).unwrap();
        assert_eq!(r.flux_bound.lhs, 0.0);
        assert!(r.flux_bound.rhs.abs() < 1e-12 && r.power_bound.rhs.abs() < 1e-12);
    }

    #[test]
    fn best_constant_beats_zero_and_a_scan() {
        let s = strip();
        let pair = pair_of(|x| x[0].sinh() * x[1].sin() + 3.0);
        let r = annulus_bound_check(&s.grid, &pair, &s.h, 2.0, 1.0, 1.0, 1.0, 2.0).unwrap();
        assert!(r.power_bound.rhs < r.power_bound.rhs_zero);
        assert!(r.power_bound.holds);
        let prep = Prepared::new(&s.grid, &pair, &s.h, 2.0);
        let base = prep.band_base(2.0, 0.0);
        let c2 = (2.0f64 / 1.0).powi(2);
        let scan = (0..=200)
            .map(|i| prep.band_moment(&base, 1.0, 2.0, 2.0, -5.0 + 0.08 * i as f64).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!(r.power_bound.rhs <= c2 * scan * (1.0 + 1e-9));
        assert!((r.power_bound.constant - 3.0).abs() < 0.1);
    }

    #[test]
    fn strip_alternative_is_energy_growth() {
        let s = strip();
        let r = pl_alternative_check(&s.grid, &s.pair, &s.h, 2.0, 1.0, &window(0.5, 3.0, 8), &GrowthOptions::default())
            .unwrap();
        assert_eq!(r.alternative, Alternative::GrowthA);
        let a = &r.proxies.as_ref().unwrap()[0];
        assert!(a.values.iter().all(|v| (v / a.values[0] - 1.0).abs() < 0.03));
        assert!(r.extrapolated);
    }

    #[test]
    fn alternative_guards() {
        let s = strip();
        let zero = pair_of(|_| 0.0);
        let r = pl_alternative_check(&s.grid, &zero, &s.h, 2.0, 1.0, &window(0.5, 3.0, 8), &GrowthOptions::default())
            .unwrap();
        assert_eq!(r.alternative, Alternative::TrivialForm);
        assert!(matches!(
            pl_alternative_check(&s.grid, &s.pair, &s.h, 2.0, 1.0, &[0.5, 1.0], &GrowthOptions::default()),
            Err(Error::WindowTooShort { .. })
        ));
    }

    #[test]
    fn single_slab_mean_is_the_family_estimate() {
        let s = strip();
        let whole = slab_partition(&s.grid, &s.sf, &[], &[1.0, 2.0]).unwrap();
        let e = n_mean(&s.grid, &s.h, 2.0, 1.0, 1, std::slice::from_ref(&whole)).unwrap();
        let m = &whole.members[0];
        let direct = epsilon_estimate(&s.grid, &s.h, 1.0, 2.0, BoundaryTag::Dirichlet, &m.family, Some(&m.mask)).unwrap();
        assert_eq!(e.value, direct.value);
        assert!(matches!(n_mean(&s.grid, &s.h, 2.0, 1.0, 1, &[]), Err(Error::EmptyFamily)));
    }

    #[test]
    fn two_slabs_are_costlier_than_one() {
        let s = strip();
        let whole = slab_partition(&s.grid, &s.sf, &[], &[1.0]).unwrap();
        let e1 = n_mean(&s.grid, &s.h, 2.0, 1.0, 1, &[whole]).unwrap().value;
        let scan: Vec<Partition> =
            (1..8).map(|i| slab_partition(&s.grid, &s.sf, &[PI * i as f64 / 8.0], &[1.0]).unwrap()).collect();
        let e2 = n_mean(&s.grid, &s.h, 2.0, 1.0, 2, &scan).unwrap();
        assert!(e2.value >= e1);
        assert_eq!(e2.partition, 3);
        assert!((e2.value / (4.0 / 4f64.tanh()) - 1.0).abs() < 0.03);
    }

    #[test]
    fn averaging_steps() {
        let l = leave_one_out(&[1.0, 2.0, 6.0]);
        assert_eq!(l.sub_means, vec![4.0, 3.5, 1.5]);
        assert!(l.holds && l.best_sub == 1.5);
        assert!((l.full_mean - 3.0).abs() < 1e-15);
        let m = n_monotonicity(&[vec![1.0, 2.0, 6.0], vec![2.0, 2.0, 2.0]]).unwrap();
        assert!(m.holds && m.e_prev == 1.5 && m.e_next == 2.0);
    }

    #[test]
    fn nested_slabs_share_a_family() {
        let s = strip();
        let inner = slab_partition(&s.grid, &s.sf, &[PI / 2.0], &[1.0, 2.0]).unwrap();
        let outer = slab_partition(&s.grid, &s.sf, &[3.0 * PI / 4.0], &[1.0, 2.0]).unwrap();
        let mut family = inner.members[0].family.clone();
        family.extend(outer.members[0].family.iter().cloned());
        let d = domain_monotonicity(&s.grid, &s.h, 2.0, 1.0, &family, &inner.members[0].mask, &outer.members[0].mask)
            .unwrap();
        assert!(d.holds, "{d:?}");
        assert_eq!((d.inner_members, d.outer_members), (2, 4));
    }

    fn strip_tract() -> Tract {
        let s = strip();
        let mask = (0..s.grid.len()).map(|n| s.grid.tag(n) != Tag::ManifoldBoundary).collect();
        Tract {
            mask,
            pair: s.pair.clone(),
        }
    }

    #[test]
    fn overlapping_tracts_are_rejected() {
        let s = strip();
        assert!(matches!(
            TractFamily::new(&s.grid, vec![strip_tract(), strip_tract()], 1e-6),
            Err(Error::DisjointnessViolated { first: 0, second: 1, .. })
        ));
    }

    #[test]
    fn one_tract_against_one_set_is_inconclusive() {
        let s = strip();
        let fam = TractFamily::new(&s.grid, vec![strip_tract()], 1e-6).unwrap();
        let whole = slab_partition(&s.grid, &s.sf, &[], &[1.0]).unwrap();
        let r = ahlfors_count_bound(&s.grid, &fam, &s.h, 2.0, 1.0, 1, &[whole], &window(0.5, 3.0, 8)).unwrap();
        assert_eq!(r.verdict, CountVerdict::Inconclusive);
        assert!(r.divergence_trend);
        assert!(r.chain.am_gm_holds && r.chain.growth_holds && r.chain.mean_dominates);
    }

    #[test]
    fn one_tract_against_two_sets_is_bounded() {
        let s = strip();
        let fam = TractFamily::new(&s.grid, vec![strip_tract()], 1e-6).unwrap();
        let halves = slab_partition(&s.grid, &s.sf, &[PI / 2.0], &[1.0]).unwrap();
        let r = ahlfors_count_bound(&s.grid, &fam, &s.h, 2.0, 1.0, 2, &[halves], &window(0.5, 3.0, 8)).unwrap();
        assert_eq!(r.verdict, CountVerdict::BoundAsserted);
        assert!(r.consistent && r.chain.am_gm_holds);
    }

    #[test]
    fn half_strip_tracts_satisfy_the_chain() {
        let s = strip();
        let halves = slab_partition(&s.grid, &s.sf, &[PI / 2.0], &[1.0]).unwrap();
        let tracts = halves
            .members
            .iter()
            .map(|m| Tract {
                mask: m.mask.clone(),
                pair: m.family[0].clone(),
            })
            .collect();
        let fam = TractFamily::new(&s.grid, tracts, 1e-6).unwrap();
        let r = ahlfors_count_bound(&s.grid, &fam, &s.h, 2.0, 1.0, 2, &[halves], &window(0.5, 3.0, 8)).unwrap();
        assert!(r.chain.am_gm_holds && r.chain.growth_holds && r.chain.mean_dominates, "{:?}", r.chain);
        for k in 0..2 {
            assert!(r.tract_eps[k].iter().zip(&r.tau_samples).all(|(e, &t)| *e > strip_eps(t)));
        }
    }

    #[test]
    fn derivative_stencils_are_exact_on_quartics() {
        let x = [0.0, 0.3, 0.5, 0.9, 1.4, 2.0, 2.1];
        let y: Vec<f64> = x.iter().map(|v| v * v * v * v - 2.0 * v).collect();
        for (d, v) in sample_derivative(&x, &y).iter().zip(x) {
            assert!((d - (4.0 * v * v * v - 2.0)).abs() < 1e-9);
        }
        let c = cumulative_integral(&x, &x.iter().map(|v| v * v * v - v).collect::<Vec<_>>());
        for (c, v) in c.iter().zip(x) {
            assert!((c - (v * v * v * v / 4.0 - v * v / 2.0)).abs() < 1e-12);
        }
    }
}
