//! Monte Carlo campaigns at desk scale: scaling in time, upper-tail fits,
//! LIL traces and the intersection-local-time identity for `p = 2`.
//!
//! Every campaign draws replica `i` from stream `(seed, first_stream + i)`
//! and reduces in replica order, so results do not depend on the number of
//! worker threads.

pub mod identity;
pub mod lil;
pub mod scaling;
pub mod tails;

pub use identity::{intersection_identity_check, IdentityConfig, IdentityReport};
pub use lil::{lil_tracker, LilConfig, LilTrace};
pub use scaling::{scaling_check, ScalingConfig, ScalingReport};
pub use tails::{fit_tail, tail_ldp_fit, tail_self_test, TailConfig, TailFit, TailReport};

use crate::error::Result;
use crate::localtime::{occupation_histogram, origin_occupation, sup_local_time, SpatialGrid};
use crate::model::ModelParams;
use crate::stablesim::{simulate_sheet, SheetSample, TimeGrid};

/// Local time at the origin and (optionally) its supremum over space, both
/// from the histogram estimator on `[0, t]^p` with `steps_per_unit` steps per
/// unit time and the natural cell width.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldDraw {
    pub origin: f64,
    pub sup: Option<f64>,
}

pub fn draw_field(
    params: &ModelParams,
    t: f64,
    steps_per_unit: usize,
    with_sup: bool,
    seed: u64,
    stream: u64,
) -> Result<FieldDraw> {
    let sheet = sheet_on(params, t, steps_per_unit, seed, stream)?;
    field_of(&sheet, t, with_sup)
}

pub(crate) fn sheet_on(
    params: &ModelParams,
    t: f64,
    steps_per_unit: usize,
    seed: u64,
    stream: u64,
) -> Result<SheetSample> {
    let dt = 1.0 / steps_per_unit as f64;
    let grid = TimeGrid::with_step(t, dt)?;
    Ok(simulate_sheet(params, &grid, seed, stream))
}

pub(crate) fn field_of(sheet: &SheetSample, t: f64, with_sup: bool) -> Result<FieldDraw> {
    let p = sheet.p();
    let time_box = vec![t; p];
    let w = SpatialGrid::natural_bin_width(&sheet.params, sheet.grid.dt());
    let origin = origin_occupation(sheet, w, &time_box)?;
    let sup = if with_sup {
        let sgrid = SpatialGrid::auto(sheet, &time_box, w, w)?;
        let field = occupation_histogram(sheet, &sgrid, &time_box)?;
        Some(sup_local_time(&field).1)
    } else {
        None
    };
    Ok(FieldDraw { origin, sup })
}
