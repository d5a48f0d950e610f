//! p-capacities of condensers and the parabolic/hyperbolic dichotomy.

use serde::Serialize;

use crate::domains::{ModelDomain, Grid};
use crate::error::{Error, Result};
use crate::exhaustion::{
    make_special_exhaustion, verify_exhaustion, DomainType, ExhaustionDescriptor, ExhaustionFunction, VerifyOptions,
};
use crate::minimize::{minimize, EnergyForm, MinimizeOptions};

/// Two disjoint plates `A`, `B` inside an open set `D` of a grid.
#[derive(Debug, Clone)]
pub struct Condenser {
    pub grid: Grid,
    pub plate_a: Vec<usize>,
    pub plate_b: Vec<usize>,
    /// Nodes of `D`; `None` means the whole grid.
    pub domain: Option<Vec<bool>>,
}

impl Condenser {
    /// Validates that both plates are nonempty and that no node or grid edge joins them.
    pub fn new(grid: Grid, plate_a: Vec<usize>, plate_b: Vec<usize>) -> Result<Self> {
        let c = Condenser {
            grid,
            plate_a,
            plate_b,
            domain: None,
        };
        c.validate()?;
        Ok(c)
    }

    /// Restrict the open set `D` to the nodes marked `true`; plates must lie inside it.
    pub fn within(mut self, domain: Vec<bool>) -> Result<Self> {
        if domain.len() != self.grid.len() {
            return Err(Error::InvalidCondenser(format!(
                "domain mask has {} entries for {} nodes",
                domain.len(),
                self.grid.len()
            )));
        }
        self.domain = Some(domain);
        self.validate()?;
        Ok(self)
    }

    /// The condenser `(B, A; D)`.
    pub fn swapped(&self) -> Condenser {
        Condenser {
            plate_a: self.plate_b.clone(),
            plate_b: self.plate_a.clone(),
            ..self.clone()
        }
    }

    fn in_domain(&self, n: usize) -> bool {
        self.domain.as_ref().is_none_or(|d| d[n])
    }

    fn validate(&self) -> Result<()> {
        if self.plate_a.is_empty() || self.plate_b.is_empty() {
            return Err(Error::InvalidCondenser("both plates must be nonempty".into()));
        }
        let len = self.grid.len();
        let mut mark = vec![0u8; len];
        for (plate, bit) in [(&self.plate_a, 1u8), (&self.plate_b, 2u8)] {
            for &n in plate {
                if n >= len {
                    return Err(Error::InvalidCondenser(format!("node {n} is not on the grid")));
                }
                if !self.in_domain(n) {
                    return Err(Error::InvalidCondenser(format!("plate node {n} lies outside D")));
                }
                mark[n] |= bit;
            }
        }
        for n in 0..len {
            if mark[n] == 3 {
                return Err(Error::InvalidCondenser(format!("node {n} lies on both plates")));
            }
            if mark[n] == 1 {
                for a in 0..self.grid.dim() {
                    for side in 0..2 {
                        if let Some(m) = self.grid.neighbor(n, a, side) {
                            if mark[m] == 2 {
                                return Err(Error::InvalidCondenser(format!(
                                    "plate closures touch along the edge {n}-{m}"
                                )));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn boundary_data(&self) -> Vec<Option<f64>> {
        let mut fixed: Vec<Option<f64>> = (0..self.grid.len())
            .map(|n| (!self.in_domain(n)).then_some(0.0))
            .collect();
        for &n in &self.plate_a {
            fixed[n] = Some(0.0);
        }
        for &n in &self.plate_b {
            fixed[n] = Some(1.0);
        }
        fixed
    }
}

#[derive(Debug, Clone)]
#[derive(Default)]
pub struct CapacityOptions {
    /// Regularization of `|grad phi|`; defaults to `1e-6 / diameter`.
    pub delta: Option<f64>,
    pub solver: MinimizeOptions,
    /// Starting field; otherwise the p = 2 minimizer (or 1/2 on free nodes when p = 2).
    pub init: Option<Vec<f64>>,
}


#[derive(Debug, Clone, Serialize)]
pub struct CapacityResult {
    /// Unregularized energy of the clamped minimizer.
    pub value: f64,
    pub minimizer: Vec<f64>,
    pub iterations: usize,
    pub energy_history: Vec<f64>,
    pub converged: bool,
    /// Largest remaining Jacobi step at exit.
    pub residual: f64,
}

impl CapacityResult {
    /// The result if the solver converged, `NonConvergence` otherwise.
    pub fn into_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NonConvergence {
                iterations: self.iterations,
                gradient_ratio: self.residual,
            })
        }
    }
}

/// Diameter of the grid's Cartesian embedding, measured along coordinate extents.
fn embedded_diameter(grid: &Grid) -> f64 {
    let mut lo: Vec<f64> = Vec::new();
    let mut hi: Vec<f64> = Vec::new();
    for n in 0..grid.len() {
        let y = grid.chart.embed(grid.coords(n));
        if lo.is_empty() {
            lo = y.clone();
            hi = y;
            continue;
        }
        for (k, v) in y.into_iter().enumerate() {
            lo[k] = lo[k].min(v);
            hi[k] = hi[k].max(v);
        }
    }
    lo.iter().zip(&hi).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt()
}

/// Minimal p-Dirichlet energy over fields equal to 0 on `A` and 1 on `B`.
///
/// A result that exhausted the iteration budget is returned with `converged = false`.
pub fn p_capacity(cond: &Condenser, p: f64, opts: &CapacityOptions) -> Result<CapacityResult> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::InvalidCondenser(format!("p = {p} must exceed 1")));
    }
    cond.validate()?;
    let grid = &cond.grid;
    let delta = opts.delta.unwrap_or_else(|| 1e-6 / embedded_diameter(grid).max(f64::MIN_POSITIVE));
    let ones = vec![1.0; grid.dim()];
    let inside = |n: usize| cond.in_domain(n);
    let form = EnergyForm::on_cells(grid, p, delta, &ones, inside);
    let fixed = cond.boundary_data();
    let init = match &opts.init {
        Some(v) => v.clone(),
        None if p == 2.0 => vec![0.5; grid.len()],
        None => {
            let warm = EnergyForm::on_cells(grid, 2.0, 0.0, &ones, inside);
            let loose = MinimizeOptions {
                tolerance: opts.solver.tolerance.max(1e-6),
                ..opts.solver
            };
            minimize(&warm, &fixed, vec![0.5; grid.len()], 1.0, &loose).field
        }
    };
    let m = minimize(&form, &fixed, init, 1.0, &opts.solver);
    let minimizer: Vec<f64> = m.field.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let value = form.with_delta(0.0).energy(&minimizer);
    Ok(CapacityResult {
        value,
        minimizer,
        iterations: m.iterations,
        energy_history: m.energy_history,
        converged: m.converged,
        residual: m.step_ratio,
    })
}

/// `J / (t2 - t1)^(p-1)` with `J` the mean flux of `h` over the verification levels.
///
/// Fails with `UnverifiedExhaustion` unless `h` passes the a1 and a2 checks on `grid`.
pub fn capacity_via_exhaustion(h: &ExhaustionFunction, grid: &Grid, p: f64, t1: f64, t2: f64) -> Result<f64> {
    if !(t1 >= h.h_k && t1 < t2 && t2 < h.h0) {
        return Err(Error::LevelOutOfRange {
            t: if t1 < h.h_k { t1 } else { t2 },
            lo: h.h_k,
            hi: h.h0,
        });
    }
    let verdict = verify_exhaustion(h, grid, p, &VerifyOptions::default())?;
    if !(verdict.passed.a1 && verdict.passed.a2) {
        return Err(Error::UnverifiedExhaustion(format!(
            "relative residual {:.3e}, flux spread {:.3e}",
            verdict.pde_residual_relative, verdict.flux_relative_spread
        )));
    }
    Ok(capacity_from_flux(verdict.flux_mean, p, t1, t2))
}

/// The closed form `J / (t2 - t1)^(p-1)`.
pub fn capacity_from_flux(flux: f64, p: f64, t1: f64, t2: f64) -> f64 {
    flux / (t2 - t1).powf(p - 1.0)
}

/// The extremal `(h - t1) / (t2 - t1)` clamped to `[0, 1]`.
pub fn exhaustion_extremal(h: &ExhaustionFunction, grid: &Grid, t1: f64, t2: f64) -> Vec<f64> {
    grid.sample(|x| ((h.eval(x) - t1) / (t2 - t1)).clamp(0.0, 1.0))
}

/// `cap(t1, t_k) / J = (t_k - t1)^(1-p)` along increasing levels.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CapacitySample {
    /// Distance at which the outer plate sits.
    pub distance: f64,
    pub t: f64,
    pub capacity_per_flux: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Classification {
    pub verdict: DomainType,
    pub exhaustion: ExhaustionDescriptor,
    /// Nonincreasing; tends to 0 exactly in the parabolic case.
    pub evidence: Vec<CapacitySample>,
    /// `(h0 - h_K)^(1-p)`, the limit of the evidence sequence.
    pub limit: f64,
}

const EVIDENCE_STEPS: usize = 16;

/// Parabolic iff the special exhaustion function of `(domain, p)` is unbounded.
pub fn classify_type(domain: &ModelDomain, p: f64) -> Result<Classification> {
    let h = make_special_exhaustion(domain, p)?;
    let r1 = h.params.r1;
    let r2 = domain.radial_bounds().map(|b| b.1).unwrap_or(f64::INFINITY);
    let t1 = h.h_k;
    let evidence = (1..=EVIDENCE_STEPS)
        .map(|j| {
            let s = 2f64.powi(j as i32);
            let d = if r2.is_finite() {
                r2 - (r2 - r1) / s
            } else {
                r1 + r1.max(1.0) * (s - 1.0)
            };
            let t = h.profile(d).0;
            CapacitySample {
                distance: d,
                t,
                capacity_per_flux: (t - t1).powf(1.0 - p),
            }
        })
        .collect();
    let limit = if h.h0.is_finite() { (h.h0 - t1).powf(1.0 - p) } else { 0.0 };
    Ok(Classification {
        verdict: h.domain_type(),
        exhaustion: h.descriptor(),
        evidence,
        limit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::{build_grid, compact_box, GridSpec};
    use std::f64::consts::{E, PI};

    fn annulus(m: usize) -> Grid {
        build_grid(&ModelDomain::plane_annulus(1.0), &GridSpec::new(vec![m, 2 * m], E)).unwrap()
    }

    fn rings(g: &Grid) -> (Vec<usize>, Vec<usize>) {
        let last = g.axes[0].count - 1;
        let a = (0..g.len()).filter(|&n| g.index(n, 0) == 0).collect();
        let b = (0..g.len()).filter(|&n| g.index(n, 0) == last).collect();
        (a, b)
    }

    #[test]
    fn annulus_capacity_is_two_pi() {
        let g = annulus(32);
        let (a, b) = rings(&g);
        let c = Condenser::new(g, a, b).unwrap();
        let r = p_capacity(&c, 2.0, &CapacityOptions::default()).unwrap();
        assert!(r.converged);
        assert!((r.value - 2.0 * PI).abs() < 0.03 * 2.0 * PI, "{}", r.value);
        assert!(r.energy_history.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.minimizer.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn swapping_plates_keeps_the_value() {
        let g = annulus(16);
        let (a, b) = rings(&g);
        let c = Condenser::new(g, a, b).unwrap();
        let opts = CapacityOptions::default();
        let v1 = p_capacity(&c, 3.0, &opts).unwrap().value;
        let v2 = p_capacity(&c.swapped(), 3.0, &opts).unwrap().value;
        assert!((v1 - v2).abs() < 1e-6 * v1);
    }

    #[test]
    fn rejects_touching_plates() {
        let g = compact_box(&[[0.0, 1.0], [0.0, 1.0]], &[8, 8]).unwrap();
        let a = vec![g.node_at(&[3, 3]).unwrap()];
        let b = vec![g.node_at(&[4, 3]).unwrap()];
        assert!(matches!(Condenser::new(g.clone(), a.clone(), b), Err(Error::InvalidCondenser(_))));
        assert!(matches!(Condenser::new(g.clone(), a.clone(), a.clone()), Err(Error::InvalidCondenser(_))));
        assert!(matches!(Condenser::new(g, vec![], a), Err(Error::InvalidCondenser(_))));
    }

    #[test]
    fn exhaustion_closed_form_on_annulus() {
        let g = annulus(64);
        let h = make_special_exhaustion(&ModelDomain::plane_annulus(1.0), 2.0).unwrap();
        let v = capacity_via_exhaustion(&h, &g, 2.0, 0.0, 1.0).unwrap();
        assert!((v - 2.0 * PI).abs() < 1e-2 * 2.0 * PI);
        let shifted = capacity_via_exhaustion(&h, &g, 2.0, 3.0, 4.0).unwrap();
        assert!((shifted - v).abs() < 1e-12 * v);
        assert!(capacity_via_exhaustion(&h, &g, 2.0, 0.0, 1e9).unwrap() < 1e-8);
    }

    #[test]
    fn euclidean_classification() {
        let d3 = ModelDomain::EuclideanSpace { n: 3, r1: 1.0 };
        assert_eq!(classify_type(&d3, 3.0).unwrap().verdict, DomainType::Parabolic);
        let hyp = classify_type(&d3, 2.0).unwrap();
        assert_eq!(hyp.verdict, DomainType::Hyperbolic);
        assert!((hyp.limit - 1.0).abs() < 1e-12);
        assert!(hyp.evidence.windows(2).all(|w| w[1].capacity_per_flux <= w[0].capacity_per_flux));
        assert!(hyp.evidence.last().unwrap().capacity_per_flux > hyp.limit);
    }
}
