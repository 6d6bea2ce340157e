//! Forward dispersion model: closures, wind handling, site description and solver.

pub mod closures;
pub mod site;
pub mod solver;
pub mod wind;

pub use closures::{eddy_diffusivities, phi, wind_profile, Diffusivities, ModelParams};
pub use site::{Grid, SiteConfig, SolverSettings};
pub use solver::{
    deposition_measurements, solve_concentration, source_receptor_matrix, ConcentrationField,
    ConcentrationSeries, Snapshots, Solver, SourceReceptorMatrix,
};
pub use wind::{WindRecord, WindSample, WindSegment};
