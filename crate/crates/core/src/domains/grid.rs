//! Structured tensor grids over model domains in adapted coordinates.

use serde::{Deserialize, Serialize};

use super::model::{AngularDomain, CrossSection, ModelDomain, Profile};
use crate::error::{Error, Result};

pub const MIN_RESOLUTION: usize = 8;
const NONE: u32 = u32::MAX;

/// Node classification; every node carries exactly one tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tag {
    Interior,
    ManifoldBoundary,
    PlateA,
    PlateB,
    Cut,
}

impl Tag {
    pub fn as_str(self) -> &'static str {
        match self {
            Tag::Interior => "interior",
            Tag::ManifoldBoundary => "boundary",
            Tag::PlateA => "plate_a",
            Tag::PlateB => "plate_b",
            Tag::Cut => "cut",
        }
    }

    pub fn parse(s: &str) -> Option<Tag> {
        Some(match s {
            "interior" => Tag::Interior,
            "boundary" => Tag::ManifoldBoundary,
            "plate_a" => Tag::PlateA,
            "plate_b" => Tag::PlateB,
            "cut" => Tag::Cut,
            _ => return None,
        })
    }

    fn rank(self) -> u8 {
        match self {
            Tag::Interior => 0,
            Tag::Cut => 1,
            Tag::ManifoldBoundary => 2,
            Tag::PlateA | Tag::PlateB => 3,
        }
    }
}

/// Coordinate chart of the leading grid axes. Axes beyond the chart's own
/// (product fibers, cylinder axes) are flat.
#[derive(Debug, Clone)]
pub enum Chart {
    Cartesian,
    /// `(r, theta)` with `ds^2 = alpha^2 dr^2 + beta^2 dtheta^2`.
    Polar { alpha: Profile, beta: Profile },
    /// `(r, polar, azimuth)` with `ds^2 = alpha^2 dr^2 + beta^2 (dpolar^2 + sin^2 polar dazimuth^2)`.
    Spherical { alpha: Profile, beta: Profile },
}

impl Chart {
    /// Riemannian volume density `sqrt(det g)` in chart coordinates.
    pub fn volume_density(&self, x: &[f64]) -> f64 {
        match self {
            Chart::Cartesian => 1.0,
            Chart::Polar { alpha, beta } => alpha.eval(x[0]) * beta.eval(x[0]),
            Chart::Spherical { alpha, beta } => {
                let b = beta.eval(x[0]);
                alpha.eval(x[0]) * b * b * x[1].sin().abs()
            }
        }
    }

    /// The radial factor `alpha * beta^(n-1)` of the volume element (1 for flat charts).
    pub fn metric_weight(&self, x: &[f64]) -> f64 {
        match self {
            Chart::Cartesian => 1.0,
            Chart::Polar { alpha, beta } => alpha.eval(x[0]) * beta.eval(x[0]),
            Chart::Spherical { alpha, beta } => alpha.eval(x[0]) * beta.eval(x[0]).powi(2),
        }
    }

    /// Diagonal of the inverse metric `g^{ii}` at `x`.
    pub fn inv_metric(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 1.0);
        match self {
            Chart::Cartesian => {}
            Chart::Polar { alpha, beta } => {
                let (a, b) = (alpha.eval(x[0]), beta.eval(x[0]));
                out[0] = 1.0 / (a * a);
                out[1] = 1.0 / (b * b);
            }
            Chart::Spherical { alpha, beta } => {
                let (a, b) = (alpha.eval(x[0]), beta.eval(x[0]));
                let s = x[1].sin().max(1e-300);
                out[0] = 1.0 / (a * a);
                out[1] = 1.0 / (b * b);
                out[2] = 1.0 / (b * b * s * s);
            }
        }
    }

    pub fn is_radial(&self) -> bool {
        !matches!(self, Chart::Cartesian)
    }

    /// Cartesian embedding of the chart's leading axes (used for export and
    /// for evaluating Cartesian test fields on radial grids).
    pub fn embed(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Chart::Cartesian => x.to_vec(),
            Chart::Polar { .. } => {
                let mut y = vec![x[0] * x[1].cos(), x[0] * x[1].sin()];
                y.extend_from_slice(&x[2..]);
                y
            }
            Chart::Spherical { .. } => {
                let (r, t, f) = (x[0], x[1], x[2]);
                let mut y = vec![r * t.sin() * f.cos(), r * t.sin() * f.sin(), r * t.cos()];
                y.extend_from_slice(&x[3..]);
                y
            }
        }
    }
}

/// One tensor axis: node `i` sits at `lo + (i + offset) * step`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub step: f64,
    pub count: usize,
    pub offset: f64,
    pub periodic: bool,
}

impl Axis {
    fn inclusive(lo: f64, hi: f64, count: usize) -> Self {
        Axis {
            lo,
            step: (hi - lo) / (count - 1) as f64,
            count,
            offset: 0.0,
            periodic: false,
        }
    }

    fn periodic(lo: f64, hi: f64, count: usize) -> Self {
        Axis {
            lo,
            step: (hi - lo) / count as f64,
            count,
            offset: 0.0,
            periodic: true,
        }
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.lo + (i as f64 + self.offset) * self.step
    }
}

/// Resolution and truncation for [`build_grid`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    /// Node count per grid axis.
    pub resolution: Vec<usize>,
    /// Outer radius for radial families, half-width of the `R^k` factor for cylinders.
    pub cut: f64,
}

impl GridSpec {
    pub fn new(resolution: Vec<usize>, cut: f64) -> Self {
        GridSpec { resolution, cut }
    }
}

/// Structured grid with node coordinates, metric data, tags and adjacency.
#[derive(Debug, Clone)]
pub struct Grid {
    pub chart: Chart,
    pub axes: Vec<Axis>,
    dim: usize,
    coords: Vec<f64>,
    tensor: Vec<u32>,
    lookup: Vec<u32>,
    tags: Vec<Tag>,
    metric_weight: Vec<f64>,
    density: Vec<f64>,
    dual_volume: Vec<f64>,
    neighbors: Vec<[u32; 2]>,
    cells: Vec<u32>,
    end_tags: Vec<[Option<Tag>; 2]>,
    /// Radial or cylinder truncation recorded for reports.
    pub truncation: Option<f64>,
}

struct Layout {
    chart: Chart,
    axes: Vec<Axis>,
    /// Tag assigned to the first / last index on each non-periodic axis.
    end_tags: Vec<[Option<Tag>; 2]>,
    /// Axes whose mask edge counts as manifold boundary.
    mask: Option<Box<dyn Fn(&[f64]) -> bool>>,
    /// `(polar axis, azimuth axis, wraps at lo, wraps at hi)`.
    pole: Option<(usize, usize, bool, bool)>,
    truncation: Option<f64>,
}

fn check_resolution(resolution: &[usize], expected: usize) -> Result<()> {
    if resolution.len() != expected {
        return Err(Error::InvalidDomain(format!(
            "resolution has {} axes, the grid needs {expected}",
            resolution.len()
        )));
    }
    for (axis, &count) in resolution.iter().enumerate() {
        if count < MIN_RESOLUTION {
            return Err(Error::ResolutionTooCoarse {
                axis,
                count,
                minimum: MIN_RESOLUTION,
            });
        }
    }
    Ok(())
}

/// Discretize `domain`, truncated according to `spec`.
pub fn build_grid(domain: &ModelDomain, spec: &GridSpec) -> Result<Grid> {
    domain.validate()?;
    let layout = layout_for(domain, spec)?;
    Ok(assemble(layout))
}

fn layout_for(domain: &ModelDomain, spec: &GridSpec) -> Result<Layout> {
    use std::f64::consts::PI;
    let res = &spec.resolution;
    match domain {
        ModelDomain::EuclideanSpace { .. } | ModelDomain::Cone { .. } | ModelDomain::WarpedProduct { .. } => {
            let n = domain.dim();
            if n != 2 && n != 3 {
                return Err(Error::UnsupportedDimension(n));
            }
            check_resolution(res, n)?;
            let (r1, r2) = domain.radial_bounds().expect("radial family");
            if !(r1 > 0.0) {
                return Err(Error::InvalidDomain(
                    "radial grids need r1 > 0 (the inner ring is the excluded compact set)".into(),
                ));
            }
            let outer = spec.cut.min(r2);
            if !(outer > r1) || !outer.is_finite() {
                return Err(Error::InvalidDomain(format!(
                    "radial cut {} must be finite and exceed r1 = {r1}",
                    spec.cut
                )));
            }
            let (alpha, beta) = domain.warping().expect("radial family");
            let angular = domain.angular().cloned().unwrap_or_default();
            let mut axes = vec![Axis::inclusive(r1, outer, res[0])];
            let mut end_tags = vec![[Some(Tag::Cut), Some(Tag::Cut)]];
            let mut pole = None;
            let chart = if n == 2 {
                match angular {
                    AngularDomain::Full => {
                        axes.push(Axis::periodic(0.0, 2.0 * PI, res[1]));
                        end_tags.push([None, None]);
                    }
                    AngularDomain::Sector { start, end } => {
                        axes.push(Axis::inclusive(start, end, res[1]));
                        end_tags.push([Some(Tag::ManifoldBoundary), Some(Tag::ManifoldBoundary)]);
                    }
                    AngularDomain::Cap { .. } => unreachable!("validated"),
                }
                Chart::Polar { alpha, beta }
            } else {
                let naz = res[2] + res[2] % 2;
                match angular {
                    AngularDomain::Full => {
                        axes.push(Axis {
                            lo: 0.0,
                            step: PI / res[1] as f64,
                            count: res[1],
                            offset: 0.5,
                            periodic: false,
                        });
                        end_tags.push([None, None]);
                        pole = Some((1, 2, true, true));
                    }
                    AngularDomain::Cap { max_polar } => {
                        axes.push(Axis {
                            lo: 0.0,
                            step: max_polar / (res[1] as f64 - 0.5),
                            count: res[1],
                            offset: 0.5,
                            periodic: false,
                        });
                        end_tags.push([None, Some(Tag::ManifoldBoundary)]);
                        pole = Some((1, 2, true, false));
                    }
                    AngularDomain::Sector { .. } => unreachable!("validated"),
                }
                axes.push(Axis::periodic(0.0, 2.0 * PI, naz));
                end_tags.push([None, None]);
                Chart::Spherical { alpha, beta }
            };
            Ok(Layout {
                chart,
                axes,
                end_tags,
                mask: None,
                pole,
                truncation: Some(outer),
            })
        }
        ModelDomain::KCylinder { n, k, base, .. } => {
            if *n > 3 {
                return Err(Error::UnsupportedDimension(*n));
            }
            check_resolution(res, *n)?;
            if !(spec.cut > 0.0) || !spec.cut.is_finite() {
                return Err(Error::InvalidDomain(format!("cylinder cut {} must be positive", spec.cut)));
            }
            let mut axes = Vec::new();
            let mut end_tags = Vec::new();
            for a in 0..*k {
                axes.push(Axis::inclusive(-spec.cut, spec.cut, res[a]));
                end_tags.push([Some(Tag::Cut), Some(Tag::Cut)]);
            }
            for (j, b) in base.bounding_box().iter().enumerate() {
                axes.push(Axis::inclusive(b[0], b[1], res[k + j]));
                end_tags.push([Some(Tag::ManifoldBoundary), Some(Tag::ManifoldBoundary)]);
            }
            let mask: Option<Box<dyn Fn(&[f64]) -> bool>> = match base {
                CrossSection::Box { .. } => None,
                disk @ CrossSection::Disk { .. } => {
                    let disk = disk.clone();
                    let k = *k;
                    Some(Box::new(move |x: &[f64]| disk.contains(&x[k..])))
                }
            };
            Ok(Layout {
                chart: Chart::Cartesian,
                axes,
                end_tags,
                mask,
                pole: None,
                truncation: Some(spec.cut),
            })
        }
        ModelDomain::ProductManifold { base, fiber } => {
            let bdim = base.dim();
            if bdim + fiber.len() > 3 {
                return Err(Error::UnsupportedDimension(bdim + fiber.len()));
            }
            if res.len() != bdim + fiber.len() {
                return Err(Error::InvalidDomain(format!(
                    "resolution has {} axes, the product grid needs {}",
                    res.len(),
                    bdim + fiber.len()
                )));
            }
            let base_spec = GridSpec::new(res[..bdim].to_vec(), spec.cut);
            let mut layout = layout_for(base, &base_spec)?;
            check_resolution(res, bdim + fiber.len())?;
            for (j, b) in fiber.iter().enumerate() {
                layout.axes.push(Axis::inclusive(b[0], b[1], res[bdim + j]));
                layout
                    .end_tags
                    .push([Some(Tag::ManifoldBoundary), Some(Tag::ManifoldBoundary)]);
            }
            Ok(layout)
        }
    }
}

/// Compact Cartesian box; every face node is tagged `ManifoldBoundary`.
pub fn compact_box(bounds: &[[f64; 2]], resolution: &[usize]) -> Result<Grid> {
    if bounds.is_empty() || bounds.len() > 3 {
        return Err(Error::UnsupportedDimension(bounds.len()));
    }
    if bounds.iter().any(|b| !(b[0] < b[1])) {
        return Err(Error::InvalidDomain("box bounds need lo < hi".into()));
    }
    check_resolution(resolution, bounds.len())?;
    let axes = bounds
        .iter()
        .zip(resolution)
        .map(|(b, &c)| Axis::inclusive(b[0], b[1], c))
        .collect::<Vec<_>>();
    let end_tags = vec![[Some(Tag::ManifoldBoundary), Some(Tag::ManifoldBoundary)]; axes.len()];
    Ok(assemble(Layout {
        chart: Chart::Cartesian,
        axes,
        end_tags,
        mask: None,
        pole: None,
        truncation: None,
    }))
}

/// Compact planar disk on a masked Cartesian grid.
pub fn compact_disk(center: [f64; 2], radius: f64, resolution: usize) -> Result<Grid> {
    if !(radius > 0.0) {
        return Err(Error::InvalidDomain("disk radius must be positive".into()));
    }
    check_resolution(&[resolution, resolution], 2)?;
    let axes = (0..2)
        .map(|a| Axis::inclusive(center[a] - radius, center[a] + radius, resolution))
        .collect::<Vec<_>>();
    let disk = CrossSection::Disk {
        center: center.to_vec(),
        radius,
    };
    Ok(assemble(Layout {
        chart: Chart::Cartesian,
        axes,
        end_tags: vec![[Some(Tag::ManifoldBoundary), Some(Tag::ManifoldBoundary)]; 2],
        mask: Some(Box::new(move |x: &[f64]| disk.contains(x))),
        pole: None,
        truncation: None,
    }))
}

/// Fraction of the box `x - extent[a][0] .. x + extent[a][1]` lying inside the mask.
fn mask_fraction(mask: &dyn Fn(&[f64]) -> bool, x: &[f64], extent: &[[f64; 2]]) -> f64 {
    const K: usize = 8;
    let dim = x.len();
    let total = K.pow(dim as u32);
    let mut y = vec![0.0; dim];
    let mut inside = 0;
    for s in 0..total {
        let mut rem = s;
        for a in 0..dim {
            let k = rem % K;
            rem /= K;
            let u = (k as f64 + 0.5) / K as f64;
            y[a] = x[a] - extent[a][0] + u * (extent[a][0] + extent[a][1]);
        }
        if mask(&y) {
            inside += 1;
        }
    }
    inside as f64 / total as f64
}

fn assemble(layout: Layout) -> Grid {
    let Layout {
        chart,
        axes,
        end_tags,
        mask,
        pole,
        truncation,
    } = layout;
    let dim = axes.len();
    let counts: Vec<usize> = axes.iter().map(|a| a.count).collect();
    let total: usize = counts.iter().product();
    let strides: Vec<usize> = (0..dim)
        .map(|a| counts[a + 1..].iter().product::<usize>())
        .collect();

    let mut lookup = vec![NONE; total];
    let mut coords = Vec::new();
    let mut tensor = Vec::new();
    let mut idx = vec![0usize; dim];
    let mut x = vec![0.0; dim];
    for flat in 0..total {
        let mut rem = flat;
        for a in 0..dim {
            idx[a] = rem / strides[a];
            rem %= strides[a];
            x[a] = axes[a].coord(idx[a]);
        }
        if mask.as_ref().is_none_or(|m| m(&x)) {
            lookup[flat] = (coords.len() / dim) as u32;
            coords.extend_from_slice(&x);
            tensor.extend(idx.iter().map(|&i| i as u32));
        }
    }
    let n_nodes = coords.len() / dim;

    let flat_of = |idx: &[usize]| -> usize { idx.iter().zip(&strides).map(|(i, s)| i * s).sum() };
    let mut neighbors = vec![[NONE; 2]; n_nodes * dim];
    let mut tags = vec![Tag::Interior; n_nodes];
    let mut j = vec![0usize; dim];
    for node in 0..n_nodes {
        for a in 0..dim {
            j[a] = tensor[node * dim + a] as usize;
        }
        for a in 0..dim {
            let ax = &axes[a];
            for (side, slot) in [(0usize, -1i64), (1, 1)] {
                let i = j[a] as i64 + slot;
                let mut k = j.clone();
                let target = if i >= 0 && (i as usize) < ax.count {
                    k[a] = i as usize;
                    Some(k)
                } else if ax.periodic {
                    k[a] = i.rem_euclid(ax.count as i64) as usize;
                    Some(k)
                } else {
                    match pole {
                        Some((pa, az, lo, hi)) if pa == a && ((side == 0 && lo) || (side == 1 && hi)) => {
                            let half = axes[az].count / 2;
                            k[az] = (k[az] + half) % axes[az].count;
                            Some(k)
                        }
                        _ => None,
                    }
                };
                if let Some(k) = target {
                    neighbors[node * dim + a][side] = lookup[flat_of(&k)];
                }
                if neighbors[node * dim + a][side] == NONE {
                    let t = if i < 0 || i as usize >= ax.count {
                        end_tags[a][side].unwrap_or(Tag::ManifoldBoundary)
                    } else {
                        Tag::ManifoldBoundary
                    };
                    if t.rank() > tags[node].rank() {
                        tags[node] = t;
                    }
                }
            }
        }
    }

    let mut metric_weight = Vec::with_capacity(n_nodes);
    let mut density = Vec::with_capacity(n_nodes);
    let mut dual_volume = Vec::with_capacity(n_nodes);
    for node in 0..n_nodes {
        let xn = &coords[node * dim..(node + 1) * dim];
        let w = chart.volume_density(xn);
        metric_weight.push(chart.metric_weight(xn));
        density.push(w);
        let mut cell = 1.0;
        let mut extent = [[0.0; 2]; 4];
        let mut clipped = false;
        for a in 0..dim {
            let nb = neighbors[node * dim + a];
            let i = tensor[node * dim + a] as usize;
            for side in 0..2 {
                let interior_edge = if side == 0 { i > 0 } else { i + 1 < axes[a].count };
                if nb[side] != NONE {
                    extent[a][side] = 0.5 * axes[a].step;
                } else if mask.is_some() && interior_edge {
                    // edge of the mask: keep the half cell and clip it against the mask below
                    extent[a][side] = 0.5 * axes[a].step;
                    clipped = true;
                }
            }
            cell *= extent[a][0] + extent[a][1];
        }
        if clipped {
            cell *= mask_fraction(mask.as_deref().expect("mask"), xn, &extent[..dim]);
        }
        dual_volume.push(w * cell);
    }

    // Cells: a node is a lower corner if all 2^dim corners exist, wrapping only periodic axes.
    let mut cells = Vec::new();
    let corners = 1usize << dim;
    let mut corner_nodes = vec![0u32; corners];
    'outer: for node in 0..n_nodes {
        for a in 0..dim {
            j[a] = tensor[node * dim + a] as usize;
        }
        for (c, slot) in corner_nodes.iter_mut().enumerate() {
            let mut k = j.clone();
            for a in 0..dim {
                if c >> a & 1 == 1 {
                    k[a] += 1;
                    if k[a] == axes[a].count {
                        if axes[a].periodic {
                            k[a] = 0;
                        } else {
                            continue 'outer;
                        }
                    }
                }
            }
            let v = lookup[flat_of(&k)];
            if v == NONE {
                continue 'outer;
            }
            *slot = v;
        }
        cells.extend_from_slice(&corner_nodes);
    }

    Grid {
        chart,
        axes,
        dim,
        coords,
        tensor,
        lookup,
        tags,
        metric_weight,
        density,
        dual_volume,
        neighbors,
        cells,
        end_tags,
        truncation,
    }
}

impl Grid {
    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coords(&self, node: usize) -> &[f64] {
        &self.coords[node * self.dim..(node + 1) * self.dim]
    }

    /// Tensor index of `node` along `axis`.
    pub fn index(&self, node: usize, axis: usize) -> usize {
        self.tensor[node * self.dim + axis] as usize
    }

    /// Node at a tensor index, if it lies inside the mask.
    pub fn node_at(&self, idx: &[usize]) -> Option<usize> {
        let mut flat = 0;
        for (a, &i) in idx.iter().enumerate() {
            if i >= self.axes[a].count {
                return None;
            }
            flat = flat * self.axes[a].count + i;
        }
        let v = self.lookup[flat];
        (v != NONE).then_some(v as usize)
    }

    pub fn tag(&self, node: usize) -> Tag {
        self.tags[node]
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    pub fn spacing(&self) -> Vec<f64> {
        self.axes.iter().map(|a| a.step).collect()
    }

    /// `alpha * beta^(n-1)` at the node (1 on flat grids).
    pub fn metric_weight(&self, node: usize) -> f64 {
        self.metric_weight[node]
    }

    /// Full volume density including the angular factor.
    pub fn density(&self, node: usize) -> f64 {
        self.density[node]
    }

    /// Physical volume of the node's dual cell.
    pub fn dual_volume(&self, node: usize) -> f64 {
        self.dual_volume[node]
    }

    pub fn neighbor(&self, node: usize, axis: usize, side: usize) -> Option<usize> {
        let v = self.neighbors[node * self.dim + axis][side];
        (v != NONE).then_some(v as usize)
    }

    /// Whether the missing neighbor on `side` of `axis` lies across the manifold boundary
    /// (as opposed to a truncation face).
    pub fn faces_boundary(&self, node: usize, axis: usize, side: usize) -> bool {
        if self.neighbor(node, axis, side).is_some() {
            return false;
        }
        let i = self.index(node, axis);
        let at_end = if side == 0 { i == 0 } else { i + 1 == self.axes[axis].count };
        if at_end {
            self.end_tags[axis][side] == Some(Tag::ManifoldBoundary)
        } else {
            true
        }
    }

    pub fn has_full_stencil(&self, node: usize) -> bool {
        self.neighbors[node * self.dim..(node + 1) * self.dim]
            .iter()
            .all(|nb| nb[0] != NONE && nb[1] != NONE)
    }

    pub fn inv_metric(&self, node: usize, out: &mut [f64]) {
        self.chart.inv_metric(self.coords(node), out)
    }

    /// Number of full cells; each has `2^dim` corners in binary order (bit `a` = plus along axis `a`).
    pub fn cell_count(&self) -> usize {
        self.cells.len() >> self.dim
    }

    pub fn cell(&self, c: usize) -> &[u32] {
        let k = 1 << self.dim;
        &self.cells[c * k..(c + 1) * k]
    }

    pub fn nodes_with(&self, tag: Tag) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.tags[i] == tag).collect()
    }

    /// Copy of the grid with the given nodes retagged.
    pub fn with_tags(&self, nodes: &[usize], tag: Tag) -> Grid {
        let mut g = self.clone();
        for &n in nodes {
            g.tags[n] = tag;
        }
        g
    }

    /// Evaluate a function of the node coordinates on every node.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64 + Sync) -> Vec<f64> {
        use rayon::prelude::*;
        (0..self.len()).into_par_iter().map(|i| f(self.coords(i))).collect()
    }

    /// Sum of `g * dual volume` over all nodes.
    pub fn volume_sum(&self, g: &[f64]) -> f64 {
        g.iter().zip(&self.dual_volume).map(|(a, b)| a * b).sum()
    }

    /// Coordinates of the point `(1 - s) x_a + s x_b` on a grid edge, unwrapping periodic axes
    /// so the point lies between the two nodes.
    pub fn edge_point(&self, a: usize, b: usize, s: f64, out: &mut [f64]) {
        let (xa, xb) = (self.coords(a), self.coords(b));
        for k in 0..self.dim {
            let mut d = xb[k] - xa[k];
            let ax = &self.axes[k];
            if ax.periodic {
                let period = ax.step * ax.count as f64;
                if d > 0.5 * period {
                    d -= period;
                } else if d < -0.5 * period {
                    d += period;
                }
            }
            out[k] = xa[k] + s * d;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn strip_grid_tags() {
        let g = build_grid(&ModelDomain::strip(PI), &GridSpec::new(vec![64, 64], 3.0)).unwrap();
        assert_eq!(g.len(), 4096);
        for i in 0..64 {
            assert_eq!(g.tag(g.node_at(&[i, 0]).unwrap()), Tag::ManifoldBoundary);
            assert_eq!(g.tag(g.node_at(&[i, 63]).unwrap()), Tag::ManifoldBoundary);
        }
        assert_eq!(g.tag(g.node_at(&[0, 10]).unwrap()), Tag::Cut);
        assert_eq!(g.tag(g.node_at(&[5, 10]).unwrap()), Tag::Interior);
        assert_eq!(g.cell_count(), 63 * 63);
    }

    #[test]
    fn annulus_rings_are_cut_and_interior_has_full_stencil() {
        let g = build_grid(&ModelDomain::plane_annulus(1.0), &GridSpec::new(vec![16, 32], 2.0)).unwrap();
        for node in 0..g.len() {
            let i = g.index(node, 0);
            let expected = if i == 0 || i == 15 { Tag::Cut } else { Tag::Interior };
            assert_eq!(g.tag(node), expected);
            if expected == Tag::Interior {
                assert!(g.has_full_stencil(node));
            }
        }
        assert_eq!(g.cell_count(), 15 * 32);
    }

    #[test]
    fn sphere_poles_connect_across() {
        let d = ModelDomain::EuclideanSpace { n: 3, r1: 1.0 };
        let g = build_grid(&d, &GridSpec::new(vec![8, 8, 16], 2.0)).unwrap();
        let n = g.node_at(&[3, 0, 2]).unwrap();
        let across = g.neighbor(n, 1, 0).unwrap();
        assert_eq!(g.index(across, 1), 0);
        assert_eq!(g.index(across, 2), 10);
        assert_eq!(g.tag(n), Tag::Interior);
    }

    #[test]
    fn rejects_coarse_resolution() {
        let r = build_grid(&ModelDomain::strip(PI), &GridSpec::new(vec![64, 4], 3.0));
        assert!(matches!(r, Err(Error::ResolutionTooCoarse { axis: 1, count: 4, .. })));
    }

    #[test]
    fn disk_mask_boundary() {
        let g = compact_disk([0.0, 0.0], 1.0, 33).unwrap();
        for node in 0..g.len() {
            let full = g.has_full_stencil(node);
            assert_eq!(g.tag(node) == Tag::Interior, full);
        }
        let total: f64 = g.volume_sum(&vec![1.0; g.len()]);
        assert!((total - PI).abs() / PI < 0.03, "{total}");
    }
}
