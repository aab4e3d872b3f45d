use std::io::Write;

use serde::Serialize;

use super::eigen::{EigenDiagnostics, EigenTriple};
use super::grid::Grid;
use crate::fmt::g12;
use crate::model::{ModelParams, Status};

/// Writes `x,status,h,gamma`, one row per node and status.
pub fn write_eigen_csv<W: Write>(mut w: W, triple: &EigenTriple) -> std::io::Result<()> {
    writeln!(w, "x,status,h,gamma")?;
    for p in Status::ALL {
        let h = triple.h_status(p);
        let g = triple.gamma_status(p);
        for (i, &x) in triple.grid.nodes().iter().enumerate() {
            writeln!(w, "{},{},{},{}", g12(x), p.index(), g12(h[i]), g12(g[i]))?;
        }
    }
    Ok(())
}

/// Grid description for metadata files.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridSummary {
    pub n: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub log_step: f64,
}

impl From<&Grid> for GridSummary {
    fn from(g: &Grid) -> Self {
        GridSummary { n: g.len(), x_min: g.x_min(), x_max: g.x_max(), log_step: g.log_step() }
    }
}

/// Serializable summary of an eigen-solve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EigenMetadata {
    pub params: ModelParams,
    pub grid: GridSummary,
    pub lambda: f64,
    pub interpolation_order: u32,
    pub diagnostics: EigenDiagnostics,
}

impl EigenMetadata {
    pub fn new(params: &ModelParams, triple: &EigenTriple, interpolation_order: u32) -> Self {
        EigenMetadata {
            params: *params,
            grid: GridSummary::from(&triple.grid),
            lambda: triple.lambda,
            interpolation_order,
            diagnostics: triple.diagnostics.clone(),
        }
    }
}
