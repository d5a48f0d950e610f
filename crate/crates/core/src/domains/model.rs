//! Symbolic model domains: Euclidean space, k-cylinders, cones, warped
//! products and products with a compact fiber.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A positive coefficient function of the radial variable.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Constant { value: f64 },
    /// `coef * r^exponent`
    Power { coef: f64, exponent: f64 },
    /// `coef * exp(rate * r)`
    Exponential { coef: f64, rate: f64 },
    /// Piecewise-linear through `(r[i], values[i])`, constant beyond the ends.
    Tabulated { r: Vec<f64>, values: Vec<f64> },
    #[serde(skip)]
    Function(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Constant { value } => write!(f, "Constant({value})"),
            Profile::Power { coef, exponent } => write!(f, "Power({coef} r^{exponent})"),
            Profile::Exponential { coef, rate } => write!(f, "Exponential({coef} e^({rate} r))"),
            Profile::Tabulated { r, .. } => write!(f, "Tabulated({} samples)", r.len()),
            Profile::Function(_) => write!(f, "Function(..)"),
        }
    }
}

impl Profile {
    pub fn constant(value: f64) -> Self {
        Profile::Constant { value }
    }

    /// The identity profile `r`.
    pub fn identity() -> Self {
        Profile::Power {
            coef: 1.0,
            exponent: 1.0,
        }
    }

    pub fn function(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Profile::Function(Arc::new(f))
    }

    pub fn eval(&self, r: f64) -> f64 {
        match self {
            Profile::Constant { value } => *value,
            Profile::Power { coef, exponent } => coef * r.powf(*exponent),
            Profile::Exponential { coef, rate } => coef * (rate * r).exp(),
            Profile::Tabulated { r: rs, values } => interpolate(rs, values, r),
            Profile::Function(f) => f(r),
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if let Profile::Tabulated { r, values } = self {
            if r.len() < 2 || r.len() != values.len() {
                return Err(Error::InvalidDomain(format!(
                    "{name}: tabulated profile needs at least two (r, value) pairs of equal length"
                )));
            }
            if r.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidDomain(format!(
                    "{name}: tabulated radii must be strictly increasing"
                )));
            }
        }
        Ok(())
    }
}

fn interpolate(rs: &[f64], values: &[f64], r: f64) -> f64 {
    if r <= rs[0] {
        return values[0];
    }
    let last = rs.len() - 1;
    if r >= rs[last] {
        return values[last];
    }
    let i = rs.partition_point(|&x| x <= r) - 1;
    let s = (r - rs[i]) / (rs[i + 1] - rs[i]);
    values[i] * (1.0 - s) + values[i + 1] * s
}

/// Bounded cross-section of a cylinder.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum CrossSection {
    Box { bounds: Vec<[f64; 2]> },
    Disk { center: Vec<f64>, radius: f64 },
}

impl CrossSection {
    pub fn interval(lo: f64, hi: f64) -> Self {
        CrossSection::Box {
            bounds: vec![[lo, hi]],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            CrossSection::Box { bounds } => bounds.len(),
            CrossSection::Disk { center, .. } => center.len(),
        }
    }

    /// Axis-aligned bounding box.
    pub fn bounding_box(&self) -> Vec<[f64; 2]> {
        match self {
            CrossSection::Box { bounds } => bounds.clone(),
            CrossSection::Disk { center, radius } => {
                center.iter().map(|c| [c - radius, c + radius]).collect()
            }
        }
    }

    pub fn measure(&self) -> f64 {
        match self {
            CrossSection::Box { bounds } => bounds.iter().map(|b| b[1] - b[0]).product(),
            CrossSection::Disk { radius, .. } => std::f64::consts::PI * radius * radius,
        }
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        match self {
            CrossSection::Box { bounds } => bounds
                .iter()
                .zip(y)
                .all(|(b, v)| *v >= b[0] - 1e-12 && *v <= b[1] + 1e-12),
            CrossSection::Disk { center, radius } => {
                let d2: f64 = center.iter().zip(y).map(|(c, v)| (v - c) * (v - c)).sum();
                d2 <= radius * radius * (1.0 + 1e-12)
            }
        }
    }
}

/// Subset of the unit sphere.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum AngularDomain {
    #[default]
    Full,
    /// Planar sector `start < theta < end` (n = 2).
    Sector { start: f64, end: f64 },
    /// Polar cap `0 <= polar < max_polar` (n = 3).
    Cap { max_polar: f64 },
}

impl AngularDomain {
    /// (n-1)-dimensional measure of the subset of the unit sphere.
    pub fn measure(&self, n: usize) -> f64 {
        use std::f64::consts::PI;
        match self {
            AngularDomain::Full => unit_sphere_area(n),
            AngularDomain::Sector { start, end } => end - start,
            AngularDomain::Cap { max_polar } => 2.0 * PI * (1.0 - max_polar.cos()),
        }
    }
}

/// Area of the unit sphere S^{n-1} in R^n.
pub fn unit_sphere_area(n: usize) -> f64 {
    use std::f64::consts::PI;
    // |S^{n-1}| = 2 pi^{n/2} / Gamma(n/2), via the recursion |S^{n+1}| = 2 pi |S^{n-1}| / n
    match n {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 2.0 * PI * unit_sphere_area(n - 2) / (n as f64 - 2.0),
    }
}

fn one() -> f64 {
    1.0
}

/// A model domain from the catalog of examples.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelDomain {
    /// R^n; `r1` is the radius of the compact core removed by the exhaustion.
    EuclideanSpace {
        n: usize,
        #[serde(default = "one")]
        r1: f64,
    },
    /// `R^k x base`, with `base` a bounded domain of dimension `n - k`.
    KCylinder {
        n: usize,
        k: usize,
        base: CrossSection,
        /// Radius (in the first k coordinates) of the exceptional compact set.
        #[serde(default)]
        r1: f64,
    },
    /// `{ r1 < r < inf, theta in U }` with the flat metric.
    Cone {
        n: usize,
        #[serde(default)]
        angular: AngularDomain,
        r1: f64,
    },
    /// `{ r1 < r < r2, theta in U }` with `ds^2 = alpha^2 dr^2 + beta^2 dtheta^2`.
    WarpedProduct {
        n: usize,
        #[serde(default)]
        angular: AngularDomain,
        r1: f64,
        /// `None` means `r2 = inf`.
        #[serde(default)]
        r2: Option<f64>,
        alpha: Profile,
        beta: Profile,
    },
    /// `base x fiber`, with a compact box fiber.
    ProductManifold {
        base: Box<ModelDomain>,
        fiber: Vec<[f64; 2]>,
    },
}

impl ModelDomain {
    pub fn strip(width: f64) -> Self {
        ModelDomain::KCylinder {
            n: 2,
            k: 1,
            base: CrossSection::interval(0.0, width),
            r1: 0.0,
        }
    }

    pub fn plane_annulus(r1: f64) -> Self {
        ModelDomain::Cone {
            n: 2,
            angular: AngularDomain::Full,
            r1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ModelDomain::EuclideanSpace { .. } => "euclidean_space",
            ModelDomain::KCylinder { .. } => "k_cylinder",
            ModelDomain::Cone { .. } => "cone",
            ModelDomain::WarpedProduct { .. } => "warped_product",
            ModelDomain::ProductManifold { .. } => "product_manifold",
        }
    }

    /// Total dimension of the manifold.
    pub fn dim(&self) -> usize {
        match self {
            ModelDomain::EuclideanSpace { n, .. }
            | ModelDomain::KCylinder { n, .. }
            | ModelDomain::Cone { n, .. }
            | ModelDomain::WarpedProduct { n, .. } => *n,
            ModelDomain::ProductManifold { base, fiber } => base.dim() + fiber.len(),
        }
    }

    /// Radial bounds `(r1, r2)` for the radial families.
    pub fn radial_bounds(&self) -> Option<(f64, f64)> {
        match self {
            ModelDomain::EuclideanSpace { r1, .. } | ModelDomain::Cone { r1, .. } => {
                Some((*r1, f64::INFINITY))
            }
            ModelDomain::WarpedProduct { r1, r2, .. } => Some((*r1, r2.unwrap_or(f64::INFINITY))),
            _ => None,
        }
    }

    /// `(alpha, beta)` of the warped metric; Euclidean space and cones use `alpha = 1, beta = r`.
    pub fn warping(&self) -> Option<(Profile, Profile)> {
        match self {
            ModelDomain::EuclideanSpace { .. } | ModelDomain::Cone { .. } => {
                Some((Profile::constant(1.0), Profile::identity()))
            }
            ModelDomain::WarpedProduct { alpha, beta, .. } => Some((alpha.clone(), beta.clone())),
            _ => None,
        }
    }

    pub fn angular(&self) -> Option<&AngularDomain> {
        match self {
            ModelDomain::Cone { angular, .. } | ModelDomain::WarpedProduct { angular, .. } => {
                Some(angular)
            }
            ModelDomain::EuclideanSpace { .. } => Some(&AngularDomain::Full),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidDomain(msg));
        match self {
            ModelDomain::EuclideanSpace { n, r1 } => {
                if *n < 2 {
                    return bad(format!("Euclidean space needs n >= 2, got {n}"));
                }
                if !(*r1 > 0.0) {
                    return bad(format!("Euclidean core radius must be positive, got {r1}"));
                }
            }
            ModelDomain::KCylinder { n, k, base, r1 } => {
                if *k < 1 || k >= n {
                    return bad(format!("k-cylinder needs 1 <= k < n, got k={k}, n={n}"));
                }
                if base.dim() != n - k {
                    return bad(format!(
                        "cross-section has dimension {}, expected n - k = {}",
                        base.dim(),
                        n - k
                    ));
                }
                match base {
                    CrossSection::Box { bounds } => {
                        if bounds.iter().any(|b| !(b[0] < b[1]) || !b[0].is_finite() || !b[1].is_finite()) {
                            return bad("cross-section box must be bounded with lo < hi".into());
                        }
                    }
                    CrossSection::Disk { radius, .. } => {
                        if !(*radius > 0.0) || !radius.is_finite() {
                            return bad("cross-section disk needs a finite positive radius".into());
                        }
                    }
                }
                if !(*r1 >= 0.0) {
                    return bad(format!("exceptional radius must be >= 0, got {r1}"));
                }
            }
            ModelDomain::Cone { n, angular, r1 } => {
                if *n < 2 {
                    return bad(format!("cone needs n >= 2, got {n}"));
                }
                if !(*r1 >= 0.0) {
                    return bad(format!("cone needs r1 >= 0, got {r1}"));
                }
                validate_angular(*n, angular)?;
            }
            ModelDomain::WarpedProduct {
                n,
                angular,
                r1,
                r2,
                alpha,
                beta,
            } => {
                if *n < 2 {
                    return bad(format!("warped product needs n >= 2, got {n}"));
                }
                let top = r2.unwrap_or(f64::INFINITY);
                if !(*r1 >= 0.0) || !(*r1 < top) {
                    return bad(format!("warped product needs 0 <= r1 < r2, got r1={r1}, r2={top}"));
                }
                validate_angular(*n, angular)?;
                alpha.validate("alpha")?;
                beta.validate("beta")?;
                let span = if top.is_finite() { top - r1 } else { 1.0 + r1 };
                for i in 0..=64 {
                    let r = r1 + span * (i as f64) / 64.0 * if top.is_finite() { 0.999 } else { 16.0 };
                    let (a, b) = (alpha.eval(r), beta.eval(r));
                    if !(a > 0.0) || !(b > 0.0) || !a.is_finite() || !b.is_finite() {
                        return bad(format!("alpha, beta must be positive on [r1, r2): alpha({r})={a}, beta({r})={b}"));
                    }
                }
            }
            ModelDomain::ProductManifold { base, fiber } => {
                base.validate()?;
                if fiber.is_empty() {
                    return bad("product fiber must have at least one axis".into());
                }
                if fiber.iter().any(|b| !(b[0] < b[1]) || !b[1].is_finite() || !b[0].is_finite()) {
                    return bad("product fiber must be a bounded box with lo < hi".into());
                }
            }
        }
        Ok(())
    }
}

fn validate_angular(n: usize, angular: &AngularDomain) -> Result<()> {
    use std::f64::consts::PI;
    match angular {
        AngularDomain::Full => Ok(()),
        AngularDomain::Sector { start, end } => {
            if n != 2 {
                Err(Error::InvalidDomain("sector angular domains need n = 2".into()))
            } else if !(start < end) || end - start > 2.0 * PI + 1e-12 {
                Err(Error::InvalidDomain(format!("sector ({start}, {end}) is empty or wraps")))
            } else {
                Ok(())
            }
        }
        AngularDomain::Cap { max_polar } => {
            if n != 3 {
                Err(Error::InvalidDomain("polar caps need n = 3".into()))
            } else if !(*max_polar > 0.0 && *max_polar < PI) {
                Err(Error::InvalidDomain(format!("cap angle {max_polar} outside (0, pi)")))
            } else {
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn sphere_areas() {
        assert!((unit_sphere_area(2) - 2.0 * PI).abs() < 1e-14);
        assert!((unit_sphere_area(3) - 4.0 * PI).abs() < 1e-14);
        assert!((unit_sphere_area(4) - 2.0 * PI * PI).abs() < 1e-13);
    }

    #[test]
    fn tabulated_profile_interpolates_and_clamps() {
        let p = Profile::Tabulated {
            r: vec![1.0, 2.0, 4.0],
            values: vec![1.0, 3.0, 7.0],
        };
        assert_eq!(p.eval(0.5), 1.0);
        assert_eq!(p.eval(1.5), 2.0);
        assert_eq!(p.eval(3.0), 5.0);
        assert_eq!(p.eval(9.0), 7.0);
    }

    #[test]
    fn k_cylinder_invariants() {
        let ok = ModelDomain::strip(PI);
        ok.validate().unwrap();
        let bad_k = ModelDomain::KCylinder {
            n: 2,
            k: 2,
            base: CrossSection::interval(0.0, 1.0),
            r1: 0.0,
        };
        assert!(matches!(bad_k.validate(), Err(Error::InvalidDomain(_))));
        let bad_base = ModelDomain::KCylinder {
            n: 3,
            k: 1,
            base: CrossSection::interval(0.0, 1.0),
            r1: 0.0,
        };
        assert!(bad_base.validate().is_err());
    }

    #[test]
    fn warped_rejects_nonpositive_coefficients() {
        let d = ModelDomain::WarpedProduct {
            n: 2,
            angular: AngularDomain::Full,
            r1: 1.0,
            r2: None,
            alpha: Profile::constant(1.0),
            beta: Profile::Power {
                coef: -1.0,
                exponent: 1.0,
            },
        };
        assert!(d.validate().is_err());
    }

    #[test]
    fn domain_config_round_trip() {
        let d = ModelDomain::WarpedProduct {
            n: 3,
            angular: AngularDomain::Full,
            r1: 1.0,
            r2: Some(4.0),
            alpha: Profile::constant(1.0),
            beta: Profile::identity(),
        };
        let text = toml::to_string(&d).unwrap();
        let back: ModelDomain = toml::from_str(&text).unwrap();
        assert_eq!(back.kind(), "warped_product");
        assert_eq!(back.radial_bounds(), Some((1.0, 4.0)));
    }
}
