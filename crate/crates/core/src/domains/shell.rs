//! Level shells `{h = t}` and sublevel quadrature on the Kuhn triangulation
//! of the grid cells (2 triangles per square, 6 tetrahedra per cube).
//!
//! Inside each simplex `h` is the linear interpolant of its nodal values, so
//! level sets are planar facets and sublevel sets are clipped simplices.

use rayon::prelude::*;

use super::grid::{Grid, Tag};
use crate::error::{Error, Result};

const KUHN2: [[usize; 3]; 2] = [[0, 1, 3], [0, 2, 3]];
const KUHN3: [[usize; 4]; 6] = [
    [0, 1, 3, 7],
    [0, 1, 5, 7],
    [0, 2, 3, 7],
    [0, 2, 6, 7],
    [0, 4, 5, 7],
    [0, 4, 6, 7],
];

const CHUNK: usize = 1024;

type P3 = [f64; 3];

/// Point `(1 - s) x_a + s x_b` on a grid edge; `h(a) < t <= h(b)`.
#[derive(Debug, Clone, Copy)]
pub struct EdgePoint {
    pub a: usize,
    pub b: usize,
    pub s: f64,
}

impl EdgePoint {
    pub fn interp(&self, v: &[f64]) -> f64 {
        (1.0 - self.s) * v[self.a] + self.s * v[self.b]
    }
}

/// One planar piece of a level set: a segment (2D) or triangle (3D).
#[derive(Debug, Clone)]
pub struct Facet {
    pub points: Vec<EdgePoint>,
    /// Riemannian (n-1)-measure.
    pub area: f64,
    /// Chart coordinates of the facet centroid.
    pub centroid: Vec<f64>,
}

/// Discrete h-sphere at level `t`.
#[derive(Debug, Clone)]
pub struct LevelShell {
    pub t: f64,
    /// Nodes on edges crossing the level.
    pub nodes: Vec<usize>,
    /// Surface quadrature weight per entry of `nodes`.
    pub surface_weight: Vec<f64>,
    pub facets: Vec<Facet>,
}

impl LevelShell {
    pub fn total_weight(&self) -> f64 {
        self.facets.iter().map(|f| f.area).sum()
    }

    /// `int_Sigma F dH^{n-1}`, with `F` evaluated at the facet vertices and averaged per facet.
    /// The closure receives the edge point and its chart coordinates.
    pub fn integrate(&self, grid: &Grid, f: impl Fn(&EdgePoint, &[f64]) -> f64 + Sync) -> f64 {
        let dim = grid.dim();
        let parts: Vec<f64> = self
            .facets
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut x = [0.0; 4];
                let mut sum = 0.0;
                for facet in chunk {
                    let mut acc = 0.0;
                    for e in &facet.points {
                        grid.edge_point(e.a, e.b, e.s, &mut x[..dim]);
                        acc += f(e, &x[..dim]);
                    }
                    sum += facet.area * acc / facet.points.len() as f64;
                }
                sum
            })
            .collect();
        parts.iter().sum()
    }

    /// `int_Sigma F dH^{n-1}` with `F` evaluated once at each facet centroid.
    pub fn integrate_centroid(&self, f: impl Fn(&[f64]) -> f64 + Sync) -> f64 {
        let parts: Vec<f64> = self
            .facets
            .par_chunks(CHUNK)
            .map(|chunk| chunk.iter().map(|fc| fc.area * f(&fc.centroid)).sum::<f64>())
            .collect();
        parts.iter().sum()
    }

    /// Whether any crossing edge has an endpoint carrying `tag`.
    pub fn touches(&self, grid: &Grid, tag: Tag) -> bool {
        self.nodes.iter().any(|&n| grid.tag(n) == tag)
    }
}

fn simplices(dim: usize) -> Result<&'static [&'static [usize]]> {
    static S2: [&[usize]; 2] = [&KUHN2[0], &KUHN2[1]];
    static S3: [&[usize]; 6] = [&KUHN3[0], &KUHN3[1], &KUHN3[2], &KUHN3[3], &KUHN3[4], &KUHN3[5]];
    match dim {
        2 => Ok(&S2),
        3 => Ok(&S3),
        d => Err(Error::UnsupportedDimension(d)),
    }
}

fn local(grid: &Grid, corner: usize) -> P3 {
    let mut p = [0.0; 3];
    for (a, slot) in p.iter_mut().enumerate().take(grid.dim()) {
        if corner >> a & 1 == 1 {
            *slot = grid.axes[a].step;
        }
    }
    p
}

fn sub(a: &P3, b: &P3) -> P3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn lerp(a: &P3, b: &P3, s: f64) -> P3 {
    [
        a[0] + s * (b[0] - a[0]),
        a[1] + s * (b[1] - a[1]),
        a[2] + s * (b[2] - a[2]),
    ]
}

fn cross(a: &P3, b: &P3) -> P3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn simplex_volume(dim: usize, p: &[P3]) -> f64 {
    if dim == 2 {
        let (u, v) = (sub(&p[1], &p[0]), sub(&p[2], &p[0]));
        0.5 * (u[0] * v[1] - u[1] * v[0]).abs()
    } else {
        let (u, v, w) = (sub(&p[1], &p[0]), sub(&p[2], &p[0]), sub(&p[3], &p[0]));
        let c = cross(&v, &w);
        (u[0] * c[0] + u[1] * c[1] + u[2] * c[2]).abs() / 6.0
    }
}

/// Extract the level shell `{h = t}`.
pub fn level_shell(grid: &Grid, h: &[f64], t: f64) -> Result<LevelShell> {
    let dim = grid.dim();
    let simp = simplices(dim)?;
    let (lo, hi) = h
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(t > lo && t < hi) {
        return Err(Error::LevelOutOfRange { t, lo, hi });
    }
    let facets: Vec<Facet> = (0..grid.cell_count())
        .into_par_iter()
        .flat_map_iter(|c| {
            let cell = grid.cell(c);
            let mut out = Vec::new();
            let (cmin, cmax) = cell
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &n| {
                    (a.min(h[n as usize]), b.max(h[n as usize]))
                });
            if !(cmin < t && cmax >= t) {
                return out.into_iter();
            }
            let base = grid.coords(cell[0] as usize).to_vec();
            for s in simp {
                simplex_facets(grid, cell, s, h, t, &base, &mut out);
            }
            out.into_iter()
        })
        .collect();

    let mut weight = vec![0.0; grid.len()];
    for f in &facets {
        let share = f.area / f.points.len() as f64;
        for e in &f.points {
            weight[e.a] += share * (1.0 - e.s);
            weight[e.b] += share * e.s;
        }
    }
    let mut nodes = Vec::new();
    let mut surface_weight = Vec::new();
    let mut touched = vec![false; grid.len()];
    for f in &facets {
        for e in &f.points {
            touched[e.a] = true;
            touched[e.b] = true;
        }
    }
    for (n, &on) in touched.iter().enumerate() {
        if on {
            nodes.push(n);
            surface_weight.push(weight[n]);
        }
    }
    Ok(LevelShell {
        t,
        nodes,
        surface_weight,
        facets,
    })
}

fn simplex_facets(grid: &Grid, cell: &[u32], s: &[usize], h: &[f64], t: f64, base: &[f64], out: &mut Vec<Facet>) {
    let dim = grid.dim();
    let node = |k: usize| cell[s[k]] as usize;
    let (mut below, mut above) = (Vec::with_capacity(4), Vec::with_capacity(4));
    for k in 0..s.len() {
        if h[node(k)] < t {
            below.push(k);
        } else {
            above.push(k);
        }
    }
    if below.is_empty() || above.is_empty() {
        return;
    }
    let crossing = |b: usize, a: usize| -> (EdgePoint, P3) {
        let (nb, na) = (node(b), node(a));
        let sv = (t - h[nb]) / (h[na] - h[nb]);
        let p = lerp(&local(grid, s[b]), &local(grid, s[a]), sv);
        (EdgePoint { a: nb, b: na, s: sv }, p)
    };
    let mut polys: Vec<Vec<(EdgePoint, P3)>> = Vec::new();
    if dim == 2 || below.len() != 2 || above.len() != 2 {
        let mut pts = Vec::new();
        for &b in &below {
            for &a in &above {
                pts.push(crossing(b, a));
            }
        }
        polys.push(pts);
    } else {
        let x11 = crossing(below[0], above[0]);
        let x12 = crossing(below[0], above[1]);
        let x21 = crossing(below[1], above[0]);
        let x22 = crossing(below[1], above[1]);
        polys.push(vec![x11, x12, x22]);
        polys.push(vec![x11, x22, x21]);
    }
    let mut g = [0.0; 4];
    for poly in polys {
        let (normal, comp_area) = if dim == 2 {
            let d = sub(&poly[1].1, &poly[0].1);
            let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
            ([-d[1], d[0], 0.0], len)
        } else {
            let c = cross(&sub(&poly[1].1, &poly[0].1), &sub(&poly[2].1, &poly[0].1));
            let a = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
            (c, 0.5 * a)
        };
        if comp_area <= 0.0 {
            continue;
        }
        let k = poly.len() as f64;
        let mut centroid = base.to_vec();
        for (a, c) in centroid.iter_mut().enumerate() {
            *c += poly.iter().map(|p| p.1[a]).sum::<f64>() / k;
        }
        grid.chart.inv_metric(&centroid, &mut g[..dim]);
        let nn: f64 = (0..dim).map(|a| normal[a] * normal[a]).sum::<f64>();
        let proj: f64 = (0..dim).map(|a| g[a] * normal[a] * normal[a]).sum::<f64>() / nn;
        let area = grid.chart.volume_density(&centroid) * proj.sqrt() * comp_area;
        out.push(Facet {
            points: poly.into_iter().map(|p| p.0).collect(),
            area,
            centroid,
        });
    }
}

/// Per-simplex result of the sublevel pass.
#[derive(Default, Clone, Copy)]
struct Pass {
    integral: f64,
    volume: f64,
    degenerate: f64,
}

fn sublevel_pass(grid: &Grid, h: &[f64], q: &[f64], t: f64, grad_floor: f64) -> Result<Pass> {
    let dim = grid.dim();
    let simp = simplices(dim)?;
    let parts: Vec<Pass> = (0..grid.cell_count())
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = Pass::default();
            let mut g = [0.0; 4];
            for &c in chunk {
                let cell = grid.cell(c);
                for s in simp {
                    let k = s.len();
                    let mut p = [[0.0; 3]; 4];
                    let mut hv = [0.0; 4];
                    let mut qv = [0.0; 4];
                    for j in 0..k {
                        p[j] = local(grid, s[j]);
                        hv[j] = h[cell[s[j]] as usize];
                        qv[j] = q[cell[s[j]] as usize];
                    }
                    let (int, vol) = clip_below(dim, &p[..k], &hv[..k], &qv[..k], t);
                    if vol == 0.0 {
                        continue;
                    }
                    acc.integral += int;
                    acc.volume += vol;
                    if grad_floor > 0.0 {
                        let x = grid.coords(cell[0] as usize);
                        grid.chart.inv_metric(x, &mut g[..dim]);
                        // Kuhn simplices walk one axis per step, so the PL gradient is a chain of differences.
                        let mut n2 = 0.0;
                        for j in 1..k {
                            let axis = (s[j] ^ s[j - 1]).trailing_zeros() as usize;
                            let d = (hv[j] - hv[j - 1]) / grid.axes[axis].step;
                            n2 += g[axis] * d * d;
                        }
                        if n2.sqrt() < grad_floor {
                            acc.degenerate += vol;
                        }
                    }
                }
            }
            acc
        })
        .collect();
    Ok(parts.iter().fold(Pass::default(), |a, b| Pass {
        integral: a.integral + b.integral,
        volume: a.volume + b.volume,
        degenerate: a.degenerate + b.degenerate,
    }))
}

/// Returns `(int_{S, h<t} q, |S cap {h<t}|)` in computational measure, `q` linear on `S`.
fn clip_below(dim: usize, p: &[P3], hv: &[f64], qv: &[f64], t: f64) -> (f64, f64) {
    let k = dim + 1;
    let mut below = [0usize; 4];
    let mut above = [0usize; 4];
    let (mut nb, mut na) = (0, 0);
    for j in 0..k {
        if hv[j] < t {
            below[nb] = j;
            nb += 1;
        } else {
            above[na] = j;
            na += 1;
        }
    }
    let piece = |pts: &[(P3, f64)]| -> (f64, f64) {
        let mut ps = [[0.0; 3]; 4];
        for (slot, x) in ps.iter_mut().zip(pts) {
            *slot = x.0;
        }
        let v = simplex_volume(dim, &ps[..pts.len()]);
        (v * pts.iter().map(|x| x.1).sum::<f64>() / pts.len() as f64, v)
    };
    let whole = || {
        let mut pts = [([0.0; 3], 0.0); 4];
        for j in 0..k {
            pts[j] = (p[j], qv[j]);
        }
        piece(&pts[..k])
    };
    let cross = |from: usize, to: usize| -> (P3, f64) {
        let s = (t - hv[from]) / (hv[to] - hv[from]);
        (lerp(&p[from], &p[to], s), qv[from] + s * (qv[to] - qv[from]))
    };
    if na == 0 {
        return whole();
    }
    if nb == 0 {
        return (0.0, 0.0);
    }
    // corner piece around a single vertex separated from the rest
    let corner = |v: usize, others: &[usize]| {
        let mut pts = [(p[v], qv[v]); 4];
        for (slot, &o) in pts[1..].iter_mut().zip(others) {
            *slot = cross(v, o);
        }
        piece(&pts[..1 + others.len()])
    };
    if nb == 1 {
        return corner(below[0], &above[..na]);
    }
    if na == 1 {
        let (wi, wv) = whole();
        let (ci, cv) = corner(above[0], &below[..nb]);
        return (wi - ci, wv - cv);
    }
    // tetrahedron with two vertices on each side: triangular prism
    let (b1, b2, a1, a2) = (below[0], below[1], above[0], above[1]);
    let (x11, x12, x21, x22) = (cross(b1, a1), cross(b1, a2), cross(b2, a1), cross(b2, a2));
    let (pb1, pb2) = ((p[b1], qv[b1]), (p[b2], qv[b2]));
    let mut int = 0.0;
    let mut vol = 0.0;
    for tet in [[pb1, x11, x12, x22], [pb1, x11, x21, x22], [pb1, pb2, x21, x22]] {
        let (i, v) = piece(&tet);
        int += i;
        vol += v;
    }
    (int, vol)
}

fn weighted(grid: &Grid, g: &[f64]) -> Vec<f64> {
    (0..grid.len()).map(|n| g[n] * grid.density(n)).collect()
}

/// `int_{h < t} g dV` over the triangulated grid with `g` and the volume density interpolated linearly.
pub fn sublevel_integral(grid: &Grid, h: &[f64], g: &[f64], t: f64) -> Result<f64> {
    Ok(sublevel_pass(grid, h, &weighted(grid, g), t, 0.0)?.integral)
}

/// Coarea assembly `int_{t_lo}^{t_hi} dt int_{Sigma_h(t)} g / |grad h| dH^{n-1}`, equal to the
/// volume integral of `g` over the band `{t_lo < h < t_hi}`.
///
/// Computed as the difference of two sublevel integrals, so adjacent bands add up exactly.
pub fn coarea_integral(grid: &Grid, h: &[f64], g: &[f64], t_lo: f64, t_hi: f64) -> Result<f64> {
    if !(t_lo <= t_hi) {
        return Err(Error::LevelOutOfRange {
            t: t_lo,
            lo: f64::NEG_INFINITY,
            hi: t_hi,
        });
    }
    let q = weighted(grid, g);
    let scale = h.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let diam: f64 = grid.axes.iter().map(|a| a.step * a.count as f64).fold(0.0, f64::max);
    let floor = 1e-10 * scale / diam;
    let lo = sublevel_pass(grid, h, &q, t_lo, floor)?;
    let hi = sublevel_pass(grid, h, &q, t_hi, floor)?;
    let band = hi.volume - lo.volume;
    let degenerate = hi.degenerate - lo.degenerate;
    if band > 0.0 && degenerate > 0.01 * band {
        return Err(Error::DegenerateGradient {
            threshold: floor,
            detail: format!(
                "{:.1}% of the band ({t_lo}, {t_hi}) has a vanishing gradient",
                100.0 * degenerate / band
            ),
        });
    }
    Ok(hi.integral - lo.integral)
}

/// Nodal quadrature of `int_{h < t} g dV`: dual volumes weighted by the fraction of each dual cell
/// below the level, estimated from the local variation of `h` across the cell.
pub fn sublevel_nodal(grid: &Grid, h: &[f64], partials: &[f64], g: &[f64], t: f64) -> f64 {
    let dim = grid.dim();
    (0..grid.len())
        .map(|n| {
            let width: f64 = (0..dim)
                .map(|a| partials[n * dim + a].abs() * grid.axes[a].step)
                .sum();
            let frac = if width > 0.0 {
                (0.5 + (t - h[n]) / width).clamp(0.0, 1.0)
            } else if h[n] < t {
                1.0
            } else {
                0.0
            };
            g[n] * grid.dual_volume(n) * frac
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::grid::{build_grid, compact_box, GridSpec};
    use crate::domains::model::ModelDomain;
    use std::f64::consts::{E, PI};

    #[test]
    fn clip_matches_whole_simplex() {
        let p = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [1.0, 1.0, 1.0]];
        let hv = [0.0, 1.0, 2.0, 3.0];
        let qv = [1.0; 4];
        let (i, v) = clip_below(3, &p, &hv, &qv, 10.0);
        assert!((v - 1.0 / 6.0).abs() < 1e-15 && (i - v).abs() < 1e-15);
        // corner tetrahedron at p0 scales each edge by (t - 0) / h(vertex)
        let (_, v) = clip_below(3, &p, &hv, &qv, 0.5);
        let exact = (1.0 / 6.0) * 0.5 * 0.25 * (0.5 / 3.0);
        assert!((v - exact).abs() < 1e-15, "{v} {exact}");
        // (x, y, z) -> (1 - z, 1 - y, 1 - x) maps the simplex to itself and h to 3 - h
        let (_, mid) = clip_below(3, &p, &hv, &qv, 1.5);
        assert!((mid - 1.0 / 12.0).abs() < 1e-15, "{mid}");
    }

    #[test]
    fn unit_square_sublevel_area_is_exact_for_linear_h() {
        let g = compact_box(&[[0.0, 1.0], [0.0, 1.0]], &[9, 9]).unwrap();
        let h = g.sample(|x| x[0] + x[1]);
        let one = vec![1.0; g.len()];
        let a = sublevel_integral(&g, &h, &one, 0.7).unwrap();
        assert!((a - 0.245).abs() < 1e-12, "{a}");
        let s = level_shell(&g, &h, 0.7).unwrap();
        assert!((s.total_weight() - 0.7 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn annulus_ring_length() {
        let grid = build_grid(&ModelDomain::plane_annulus(1.0), &GridSpec::new(vec![64, 128], E * E)).unwrap();
        let h = grid.sample(|x| x[0].ln());
        let s = level_shell(&grid, &h, 1.0).unwrap();
        let exact = 2.0 * PI * E;
        assert!((s.total_weight() - exact).abs() / exact < 0.03);
    }
}
