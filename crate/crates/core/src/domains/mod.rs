//! Model domains, their grids, and level-set quadrature.

pub mod field;
pub mod grid;
pub mod model;
pub mod shell;
pub mod text;

pub use field::{coordinate_gradient, gradient_magnitude, p_laplace_flux_form};
pub use grid::{build_grid, compact_box, compact_disk, Chart, Grid, GridSpec, Tag};
pub use model::{unit_sphere_area, AngularDomain, CrossSection, ModelDomain, Profile};
pub use shell::{coarea_integral, level_shell, sublevel_integral, EdgePoint, LevelShell};
pub use text::{export_grid, parse_grid, NodeTable};

/// Alternative name for [`Grid`].
pub type DiscretizedDomain = Grid;
