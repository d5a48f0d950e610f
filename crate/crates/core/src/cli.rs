//! Batch front end: TOML run configurations, task dispatch, JSON reports and CSV curves.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::capacity::{capacity_via_exhaustion, classify_type, p_capacity, CapacityOptions, Condenser};
use crate::domains::{build_grid, compact_box, compact_disk, export_grid, parse_grid, Grid, GridSpec, ModelDomain};
use crate::energy::{
    ahlfors_count_bound, annulus_bound_check, growth_verifier, pl_alternative_check, sector_member, sector_partition,
    slab_member, slab_partition, BoundaryTag, EnergyCurve, EpsTag, GrowthOptions, Partition, Tract, TractFamily,
    BOUNDARY_TOL, GROWTH_TOL,
};
use crate::error::{Error, Result};
use crate::exhaustion::{level_window, make_special_exhaustion, verify_exhaustion, ExhaustionFunction, VerifyOptions};
use crate::minimize::MinimizeOptions;
use crate::wtforms::{
    check_structure, check_wt1, check_wt2, maximum_principle_check, random_scalar_field, wt2_implies_wt1_constant,
    MaxPrincipleKind, ScalarFormPair, SolveOptions, StructureField,
};

pub const DEFAULT_SEED: u64 = 20_240_917;

/// Smallest accepted node count per axis.
pub const MIN_CONFIG_RESOLUTION: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TaskTag {
    Classify,
    Capacity,
    VerifyExhaustion,
    Growth,
    Wtcheck,
    Ahlfors,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default = "one")]
    pub nu1: f64,
    #[serde(default = "one")]
    pub nu2: f64,
    /// Nodes per grid axis.
    pub resolution: Option<Vec<usize>>,
    /// Truncation: outer radius or cylinder half-width.
    pub cut: Option<f64>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_iterations")]
    pub max_iterations: usize,
    /// `start:end:step`, both ends included.
    pub tau: Option<String>,
    #[serde(default = "default_levels")]
    pub levels: usize,
}

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

fn default_tolerance() -> f64 {
    1e-8
}

fn default_iterations() -> usize {
    100_000
}

fn default_levels() -> usize {
    10
}

fn default_modes() -> Vec<f64> {
    vec![1.0]
}

fn default_pairs() -> usize {
    100
}

fn full_turn() -> f64 {
    std::f64::consts::TAU
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            p: 2.0,
            nu1: 1.0,
            nu2: 1.0,
            resolution: None,
            cut: None,
            tolerance: default_tolerance(),
            max_iterations: default_iterations(),
            tau: None,
            levels: default_levels(),
        }
    }
}

/// Scalar field for the growth task.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    /// `sinh(l x_0) sin(l (x_1 - lo))` on a strip-like grid, `lo` the cross-section start.
    Separated {
        #[serde(default = "one")]
        mode: f64,
    },
    /// `r^(l K) sin(l K (phi - start))`, `K = pi / width`, on a polar grid.
    Sector {
        #[serde(default = "one")]
        mode: f64,
        #[serde(default)]
        start: f64,
        #[serde(default = "full_turn")]
        width: f64,
    },
    /// A column of a node table file.
    Table { path: PathBuf, column: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthConfig {
    pub field: FieldSpec,
    #[serde(default = "dirichlet")]
    pub bc: BoundaryTag,
    /// `(tau1, tau2)` pairs for the band bounds.
    #[serde(default)]
    pub bands: Vec<[f64; 2]>,
    /// Also evaluate the growth alternative.
    #[serde(default)]
    pub alternative: bool,
}

fn dirichlet() -> BoundaryTag {
    BoundaryTag::Dirichlet
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityConfig {
    /// Plate `A` is `{h <= t1}`; defaults to the level of the exceptional set.
    pub t1: Option<f64>,
    /// Plate `B` is `{h >= t2}`; defaults to the top of the grid window.
    pub t2: Option<f64>,
    /// Write the minimizer as a node table here.
    pub field_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetTag {
    PLaplace,
    Anisotropic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WtConfig {
    pub preset: PresetTag,
    /// Diagonal weights for the anisotropic preset.
    #[serde(default)]
    pub weights: Vec<f64>,
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    #[serde(default = "default_samples")]
    pub structure_samples: usize,
    /// Also run the zero-Neumann maximum principle check on the unit square and disk.
    #[serde(default)]
    pub maximum_principle: bool,
}

fn default_samples() -> usize {
    1000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TractSpec {
    Slab {
        lo: f64,
        hi: f64,
        #[serde(default = "one")]
        mode: f64,
    },
    Sector {
        start: f64,
        width: f64,
        #[serde(default = "one")]
        mode: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionKind {
    Slabs,
    Sectors,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    pub kind: PartitionKind,
    /// One list of cut positions per candidate partition.
    pub cuts: Vec<Vec<f64>>,
    #[serde(default = "default_modes")]
    pub modes: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TractsConfig {
    pub tract: Vec<TractSpec>,
    pub partitions: PartitionSpec,
    #[serde(rename = "N")]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

/// A complete run description.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Option<TaskTag>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub domain: Option<ModelDomain>,
    #[serde(default)]
    pub solver: SolverConfig,
    pub growth: Option<GrowthConfig>,
    pub capacity: Option<CapacityConfig>,
    pub wtcheck: Option<WtConfig>,
    pub ahlfors: Option<TractsConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("config", e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    fn task(&self) -> Result<TaskTag> {
        self.task.ok_or_else(|| Error::config("task", "no task given"))
    }

    fn domain(&self) -> Result<&ModelDomain> {
        self.domain.as_ref().ok_or_else(|| Error::config("domain", "this task needs a domain section"))
    }

    /// Range and consistency checks; file references must exist.
    pub fn validate(&self) -> Result<()> {
        let task = self.task()?;
        let s = &self.solver;
        if !(s.p > 1.0) || !s.p.is_finite() {
            return Err(Error::config("solver.p", format!("{} must be a finite exponent above 1", s.p)));
        }
        if !(s.nu1 > 0.0) {
            return Err(Error::config("solver.nu1", "must be positive"));
        }
        if !(s.nu2 >= s.nu1) {
            return Err(Error::config("solver.nu2", "must be at least nu1"));
        }
        if let Some(res) = &s.resolution {
            if let Some(&r) = res.iter().find(|&&r| r < MIN_CONFIG_RESOLUTION) {
                return Err(Error::config(
                    "solver.resolution",
                    format!("{r} nodes on an axis; at least {MIN_CONFIG_RESOLUTION} required"),
                ));
            }
        }
        if let Some(cut) = s.cut {
            if !(cut > 0.0) || !cut.is_finite() {
                return Err(Error::config("solver.cut", "must be positive and finite"));
            }
        }
        if !(s.tolerance > 0.0) {
            return Err(Error::config("solver.tolerance", "must be positive"));
        }
        if s.levels < 2 {
            return Err(Error::config("solver.levels", "at least 2 levels are needed"));
        }
        if let Some(t) = &s.tau {
            parse_window(t)?;
        }
        if self.threads == Some(0) {
            return Err(Error::config("threads", "must be at least 1"));
        }
        if let Some(d) = &self.domain {
            d.validate().map_err(|e| Error::config("domain", e.to_string()))?;
        }
        match task {
            TaskTag::Classify | TaskTag::Capacity | TaskTag::VerifyExhaustion => {
                self.domain()?;
            }
            TaskTag::Growth => {
                self.domain()?;
                let g = self.growth.as_ref().ok_or_else(|| Error::config("growth", "missing section"))?;
                if let FieldSpec::Table { path, .. } = &g.field {
                    if !path.exists() {
                        return Err(Error::config("growth.field.path", format!("{} does not exist", path.display())));
                    }
                }
            }
            TaskTag::Wtcheck => {
                let w = self.wtcheck.as_ref().ok_or_else(|| Error::config("wtcheck", "missing section"))?;
                if w.preset == PresetTag::Anisotropic
                    && (w.weights.is_empty() || w.weights.iter().any(|c| !(*c > 0.0)))
                {
                    return Err(Error::config("wtcheck.weights", "positive weights are required"));
                }
            }
            TaskTag::Ahlfors => {
                self.domain()?;
                let a = self.ahlfors.as_ref().ok_or_else(|| Error::config("ahlfors", "missing section"))?;
                if a.tract.is_empty() {
                    return Err(Error::config("ahlfors.tract", "at least one tract is required"));
                }
                if a.n == Some(0) {
                    return Err(Error::config("ahlfors.N", "must be at least 1"));
                }
            }
        }
        Ok(())
    }
}

/// `start:end:step` with both ends included.
pub fn parse_window(text: &str) -> Result<Vec<f64>> {
    let err = |reason: &str| Error::config("tau", format!("`{text}`: {reason}"));
    let parts: Vec<f64> = text
        .split(':')
        .map(|s| s.trim().parse::<f64>().map_err(|_| err("expected numbers start:end:step")))
        .collect::<Result<_>>()?;
    let [a, b, step] = parts[..] else {
        return Err(err("expected start:end:step"));
    };
    if !(step > 0.0) || !(b >= a) || !a.is_finite() || !b.is_finite() {
        return Err(err("needs start <= end and a positive step"));
    }
    let count = ((b - a) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| a + step * i as f64).collect())
}

/// Run metadata attached to every report.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub resolution: Option<Vec<usize>>,
    pub truncation: Option<f64>,
    pub tolerances: BTreeMap<&'static str, f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub task: TaskTag,
    pub config: RunConfig,
    pub provenance: Provenance,
    pub results: serde_json::Value,
    #[serde(skip)]
    pub curve: Option<EnergyCurve>,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Curve rows as CSV: `tau,I,dI,eps,eps_tag,monotone_q`.
pub fn emit_curve(report: &Report) -> Result<String> {
    let curve = report.curve.as_ref().filter(|c| !c.is_empty()).ok_or(Error::NoCurvePayload)?;
    let mut out = String::from("tau,I,dI,eps,eps_tag,monotone_q\n");
    for k in 0..curve.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            curve.tau_samples[k],
            curve.i[k],
            curve.di[k],
            curve.eps[k],
            curve.eps_tag.as_str(),
            curve.monotone_quantity[k]
        );
    }
    Ok(out)
}

/// Parse the output of [`emit_curve`].
pub fn parse_curve(text: &str) -> Result<EnergyCurve> {
    let mut lines = text.lines();
    if lines.next() != Some("tau,I,dI,eps,eps_tag,monotone_q") {
        return Err(Error::config("csv", "unexpected header"));
    }
    let mut curve = EnergyCurve {
        tau_samples: Vec::new(),
        i: Vec::new(),
        di: Vec::new(),
        eps: Vec::new(),
        eps_tag: EpsTag::PerForm,
        monotone_quantity: Vec::new(),
    };
    for (row, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        let bad = || Error::config(format!("csv row {}", row + 1), "malformed");
        if cells.len() != 6 {
            return Err(bad());
        }
        let num = |i: usize| cells[i].parse::<f64>().map_err(|_| bad());
        curve.tau_samples.push(num(0)?);
        curve.i.push(num(1)?);
        curve.di.push(num(2)?);
        curve.eps.push(num(3)?);
        curve.eps_tag = match cells[4] {
            "PerForm" => EpsTag::PerForm,
            "FamilyUpperBound" => EpsTag::FamilyUpperBound,
            _ => return Err(bad()),
        };
        curve.monotone_quantity.push(num(5)?);
    }
    Ok(curve)
}

struct Context<'a> {
    config: &'a RunConfig,
    tolerances: BTreeMap<&'static str, f64>,
    resolution: Option<Vec<usize>>,
    truncation: Option<f64>,
}

impl<'a> Context<'a> {
    fn new(config: &'a RunConfig) -> Self {
        Context {
            config,
            tolerances: BTreeMap::new(),
            resolution: None,
            truncation: None,
        }
    }

    fn grid(&mut self) -> Result<Grid> {
        let domain = self.config.domain()?;
        let cut = self
            .config
            .solver
            .cut
            .ok_or_else(|| Error::config("solver.cut", "this task needs a truncation"))?;
        let res = self
            .config
            .solver
            .resolution
            .clone()
            .ok_or_else(|| Error::config("solver.resolution", "this task needs a grid resolution"))?;
        let grid = build_grid(domain, &GridSpec::new(res.clone(), cut))?;
        self.resolution = Some(res);
        self.truncation = grid.truncation;
        Ok(grid)
    }

    fn window(&self) -> Result<Vec<f64>> {
        let text = self
            .config
            .solver
            .tau
            .as_ref()
            .ok_or_else(|| Error::config("solver.tau", "this task needs a tau window"))?;
        parse_window(text)
    }

    fn solver_options(&mut self) -> MinimizeOptions {
        self.tolerances.insert("solver", self.config.solver.tolerance);
        MinimizeOptions {
            tolerance: self.config.solver.tolerance,
            max_iterations: self.config.solver.max_iterations,
        }
    }

    fn finish(self, task: TaskTag, results: serde_json::Value, curve: Option<EnergyCurve>) -> Report {
        Report {
            task,
            config: self.config.clone(),
            provenance: Provenance {
                tool: env!("CARGO_PKG_NAME"),
                version: env!("CARGO_PKG_VERSION"),
                resolution: self.resolution,
                truncation: self.truncation,
                tolerances: self.tolerances,
                seed: self.config.seed(),
            },
            results,
            curve,
        }
    }
}

/// Validate `config` and dispatch its task.
pub fn run(config: &RunConfig) -> Result<Report> {
    config.validate()?;
    let task = config.task()?;
    let mut ctx = Context::new(config);
    let p = config.solver.p;
    let (results, curve) = match task {
        TaskTag::Classify => (serde_json::to_value(classify_type(config.domain()?, p)?)?, None),
        TaskTag::Capacity => (run_capacity(&mut ctx)?, None),
        TaskTag::VerifyExhaustion => {
            let grid = ctx.grid()?;
            let h = make_special_exhaustion(config.domain()?, p)?;
            let opts = VerifyOptions {
                levels: config.solver.levels,
                ..VerifyOptions::default()
            };
            ctx.tolerances.insert("residual", opts.residual_tol);
            ctx.tolerances.insert("flux_spread", opts.flux_spread_tol);
            ctx.tolerances.insert("boundary_pairing", opts.pairing_tol);
            (serde_json::to_value(verify_exhaustion(&h, &grid, p, &opts)?)?, None)
        }
        TaskTag::Growth => run_growth(&mut ctx)?,
        TaskTag::Wtcheck => (run_wtcheck(&mut ctx)?, None),
        TaskTag::Ahlfors => (run_ahlfors(&mut ctx)?, None),
    };
    Ok(ctx.finish(task, results, curve))
}

#[derive(Serialize)]
struct CapacityPayload {
    value: f64,
    iterations: usize,
    converged: bool,
    residual: f64,
    t1: f64,
    t2: f64,
    /// Closed form through the special exhaustion function.
    exhaustion_value: Option<f64>,
    /// `|value - exhaustion_value| / exhaustion_value`.
    relative_gap: Option<f64>,
    exhaustion_error: Option<String>,
}

fn run_capacity(ctx: &mut Context) -> Result<serde_json::Value> {
    let config = ctx.config;
    let p = config.solver.p;
    let grid = ctx.grid()?;
    let h = make_special_exhaustion(config.domain()?, p)?;
    let section = config.capacity.clone().unwrap_or_default();
    let hv = h.values(&grid);
    let t1 = section.t1.unwrap_or(h.h_k);
    let t2 = section.t2.unwrap_or_else(|| level_window(&h, &grid).1);
    let plate_a: Vec<usize> = (0..grid.len()).filter(|&n| hv[n] <= t1 + 1e-12).collect();
    let plate_b: Vec<usize> = (0..grid.len()).filter(|&n| hv[n] >= t2 - 1e-12).collect();
    let solver = ctx.solver_options();
    let cond = Condenser::new(grid, plate_a, plate_b)?;
    let result = p_capacity(
        &cond,
        p,
        &CapacityOptions {
            solver,
            ..CapacityOptions::default()
        },
    )?;
    if let Some(path) = &section.field_out {
        std::fs::write(path, export_grid(&cond.grid, &[("phi", &result.minimizer)]))?;
    }
    let (exhaustion_value, exhaustion_error) = match capacity_via_exhaustion(&h, &cond.grid, p, t1, t2) {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let payload = CapacityPayload {
        value: result.value,
        iterations: result.iterations,
        converged: result.converged,
        residual: result.residual,
        t1,
        t2,
        relative_gap: exhaustion_value.map(|v| (result.value - v).abs() / v),
        exhaustion_value,
        exhaustion_error,
    };
    Ok(serde_json::to_value(payload)?)
}

fn field_values(grid: &Grid, spec: &FieldSpec) -> Result<Vec<f64>> {
    match spec {
        FieldSpec::Separated { mode } => {
            let lo = grid.axes.get(1).map(|a| a.coord(0)).unwrap_or(0.0);
            Ok(grid.sample(|x| (mode * x[0]).sinh() * (mode * (x[1] - lo)).sin()))
        }
        FieldSpec::Sector { mode, start, width } => {
            let sf = StructureField::p_laplace(2.0);
            Ok(sector_member(grid, &sf, *start, *width, &[*mode])?.family.remove(0).f)
        }
        FieldSpec::Table { path, column } => {
            let text = std::fs::read_to_string(path)?;
            let table = parse_grid(&text)?;
            let k = table
                .field_names
                .iter()
                .position(|c| c == column)
                .ok_or_else(|| Error::config("growth.field.column", format!("no column `{column}`")))?;
            if table.fields[k].len() != grid.len() {
                return Err(Error::config(
                    "growth.field.path",
                    format!("{} nodes, the grid has {}", table.fields[k].len(), grid.len()),
                ));
            }
            Ok(table.fields[k].clone())
        }
    }
}

fn structure_field(p: f64, section: Option<&WtConfig>) -> StructureField {
    match section {
        Some(w) if w.preset == PresetTag::Anisotropic => StructureField::anisotropic(p, w.weights.clone()),
        _ => StructureField::p_laplace(p),
    }
}

fn run_growth(ctx: &mut Context) -> Result<(serde_json::Value, Option<EnergyCurve>)> {
    let config = ctx.config;
    let s = &config.solver;
    let section = config.growth.as_ref().ok_or_else(|| Error::config("growth", "missing section"))?;
    let grid = ctx.grid()?;
    let h = make_special_exhaustion(config.domain()?, s.p)?;
    let sf = structure_field(s.p, config.wtcheck.as_ref());
    let pair = ScalarFormPair::new(&grid, field_values(&grid, &section.field)?, &sf);
    let taus = ctx.window()?;
    let opts = GrowthOptions {
        bc: section.bc,
        ..GrowthOptions::default()
    };
    ctx.tolerances.insert("growth", opts.tolerance);
    ctx.tolerances.insert("boundary", opts.boundary_tolerance);
    let growth = growth_verifier(&grid, &pair, &h, s.p, s.nu1, &taus, &opts)?;
    let bands = section
        .bands
        .iter()
        .map(|b| annulus_bound_check(&grid, &pair, &h, s.p, s.nu1, s.nu2, b[0], b[1]))
        .collect::<Result<Vec<_>>>()?;
    let alternative = if section.alternative {
        Some(pl_alternative_check(&grid, &pair, &h, s.p, s.nu1, &taus, &opts)?)
    } else {
        None
    };
    let curve = growth.curve.clone();
    let value = serde_json::json!({
        "growth": growth,
        "bands": bands,
        "alternative": alternative,
    });
    Ok((value, Some(curve)))
}

#[derive(Serialize)]
struct WtPayload {
    preset: PresetTag,
    nu0: f64,
    nu1: f64,
    nu2: f64,
    structure: crate::wtforms::StructureReport,
    pairs: usize,
    wt2_passed: usize,
    wt1_passed_given_wt2: usize,
    /// Pairs that pass the second class check but fail the first.
    failures: Vec<usize>,
    maximum_principle: Vec<crate::wtforms::MaxPrincipleVerdict>,
}

fn run_wtcheck(ctx: &mut Context) -> Result<serde_json::Value> {
    let config = ctx.config;
    let section = config.wtcheck.as_ref().ok_or_else(|| Error::config("wtcheck", "missing section"))?;
    let p = config.solver.p;
    let sf = structure_field(p, Some(section));
    let (nu1, nu2) = (sf.nu1, sf.nu2);
    let nu0 = wt2_implies_wt1_constant(nu1, nu2, p);
    let res = config.solver.resolution.clone().unwrap_or_else(|| vec![33, 33]);
    let dims = if section.preset == PresetTag::Anisotropic { section.weights.len() } else { res.len() };
    if dims != res.len() || !(2..=3).contains(&dims) {
        return Err(Error::config("solver.resolution", "needs one entry per weight, 2 or 3 axes"));
    }
    let grid = compact_box(&vec![[0.0, 1.0]; dims], &res)?;
    ctx.resolution = Some(res);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed());
    let structure = check_structure(&sf, dims, section.structure_samples, &mut rng);
    let (mut wt2_passed, mut wt1_passed) = (0, 0);
    let mut failures = Vec::new();
    for i in 0..section.pairs {
        let pair = ScalarFormPair::new(&grid, random_scalar_field(&grid, &mut rng), &sf);
        if check_wt2(&pair, nu1, nu2, p).passed {
            wt2_passed += 1;
            if check_wt1(&pair, nu0, p).passed {
                wt1_passed += 1;
            } else {
                failures.push(i);
            }
        }
    }
    let mut maximum_principle = Vec::new();
    if section.maximum_principle {
        let opts = SolveOptions {
            solver: ctx.solver_options(),
            ..SolveOptions::default()
        };
        ctx.tolerances.insert("max_theta", 1e-5);
        for g in [compact_box(&[[0.0, 1.0], [0.0, 1.0]], &[33, 33])?, compact_disk([0.0, 0.0], 1.0, 33)?] {
            maximum_principle.push(maximum_principle_check(&g, &sf, MaxPrincipleKind::Neumann, 1e-5, &opts)?);
        }
    }
    ctx.tolerances.insert("margin", crate::wtforms::MARGIN_TOL);
    Ok(serde_json::to_value(WtPayload {
        preset: section.preset,
        nu0,
        nu1,
        nu2,
        structure,
        pairs: section.pairs,
        wt2_passed,
        wt1_passed_given_wt2: wt1_passed,
        failures,
        maximum_principle,
    })?)
}

/// Tracts and partitions described by an `[ahlfors]` section.
pub fn build_tracts(
    grid: &Grid,
    sf: &StructureField,
    section: &TractsConfig,
) -> Result<(TractFamily, Vec<Partition>)> {
    let tracts = section
        .tract
        .iter()
        .map(|t| {
            let m = match *t {
                TractSpec::Slab { lo, hi, mode } => slab_member(grid, sf, lo, hi, &[mode])?,
                TractSpec::Sector { start, width, mode } => sector_member(grid, sf, start, width, &[mode])?,
            };
            let mut family = m.family;
            Ok(Tract {
                mask: m.mask,
                pair: family.remove(0),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let family = TractFamily::new(grid, tracts, BOUNDARY_TOL)?;
    let spec = &section.partitions;
    let partitions = spec
        .cuts
        .iter()
        .map(|cuts| match spec.kind {
            PartitionKind::Slabs => slab_partition(grid, sf, cuts, &spec.modes),
            PartitionKind::Sectors => sector_partition(grid, sf, cuts, &spec.modes),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((family, partitions))
}

fn run_ahlfors(ctx: &mut Context) -> Result<serde_json::Value> {
    let config = ctx.config;
    let s = &config.solver;
    let section = config.ahlfors.as_ref().ok_or_else(|| Error::config("ahlfors", "missing section"))?;
    let grid = ctx.grid()?;
    let h: ExhaustionFunction = make_special_exhaustion(config.domain()?, s.p)?;
    let sf = structure_field(s.p, config.wtcheck.as_ref());
    let (tracts, partitions) = build_tracts(&grid, &sf, section)?;
    let n = section.n.unwrap_or(tracts.count());
    let taus = ctx.window()?;
    ctx.tolerances.insert("growth", GROWTH_TOL);
    ctx.tolerances.insert("boundary", BOUNDARY_TOL);
    Ok(serde_json::to_value(ahlfors_count_bound(&grid, &tracts, &h, s.p, s.nu1, n, &partitions, &taus)?)?)
}

#[derive(Debug, Parser)]
#[command(name = "nlpt", version, about = "Capacities, exhaustion functions and energy growth on model domains")]
pub struct Cli {
    #[command(subcommand)]
    pub task: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for the parallel kernels.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parabolic or hyperbolic type of the configured domain.
    Classify {
        #[arg(long)]
        p: Option<f64>,
    },
    /// Variational p-capacity between two h-levels, compared with the exhaustion closed form.
    Capacity {
        #[arg(long)]
        p: Option<f64>,
    },
    /// Residual, flux and boundary checks of the special exhaustion function.
    VerifyExhaustion {
        #[arg(long)]
        p: Option<f64>,
    },
    /// Energy growth curve of a scalar field.
    Growth {
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        nu1: Option<f64>,
        /// `start:end:step`
        #[arg(long)]
        tau: Option<String>,
    },
    /// Structure and class checks on random scalar fields.
    Wtcheck {
        #[arg(long)]
        p: Option<f64>,
    },
    /// Tract counting against N-part partitions.
    Ahlfors {
        /// TOML file with the tract and partition description.
        #[arg(long)]
        tracts: Option<PathBuf>,
        #[arg(long = "N")]
        n: Option<usize>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        tau: Option<String>,
    },
}

/// Merge command-line arguments into the configuration they name.
pub fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let (task, p) = match &cli.task {
        Command::Classify { p } => (TaskTag::Classify, p),
        Command::Capacity { p } => (TaskTag::Capacity, p),
        Command::VerifyExhaustion { p } => (TaskTag::VerifyExhaustion, p),
        Command::Growth { p, nu1, tau } => {
            if let Some(v) = nu1 {
                config.solver.nu1 = *v;
            }
            if let Some(t) = tau {
                config.solver.tau = Some(t.clone());
            }
            (TaskTag::Growth, p)
        }
        Command::Wtcheck { p } => (TaskTag::Wtcheck, p),
        Command::Ahlfors { tracts, n, p, tau } => {
            if let Some(path) = tracts {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::config("--tracts", format!("{}: {e}", path.display())))?;
                config.ahlfors =
                    Some(toml::from_str(&text).map_err(|e| Error::config("--tracts", e.message().to_string()))?);
            }
            if let (Some(n), Some(section)) = (n, config.ahlfors.as_mut()) {
                section.n = Some(*n);
            }
            if let Some(t) = tau {
                config.solver.tau = Some(t.clone());
            }
            (TaskTag::Ahlfors, p)
        }
    };
    if let Some(v) = p {
        config.solver.p = *v;
    }
    config.task = Some(task);
    if let Some(seed) = cli.seed {
        config.seed = Some(seed);
    }
    if let Some(t) = cli.threads {
        config.threads = Some(t);
    }
    if let Some(out) = &cli.out {
        config.output.path = Some(out.clone());
    }
    if let Some(f) = cli.format {
        config.output.format = f;
    }
    Ok(config)
}

/// Render the report in the configured format.
pub fn render(report: &Report) -> Result<String> {
    match report.config.output.format {
        Format::Json => report.to_json(),
        Format::Csv => emit_curve(report),
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let config = resolve(cli)?;
    config.validate()?;
    if let Some(t) = config.threads {
        // a pool that already exists keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let report = run(&config)?;
    let text = render(&report)?;
    match &config.output.path {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
