//! Program execution: primitive rasterization, boolean operations on
//! occupancy grids, and the shift-reduce stack machine.

pub mod io;
mod machine;
mod raster;
mod render;

pub use machine::{apply_op, execute, render_program, stack_observation, ExecError, ExecStack, ExecTrace, TraceStep};
pub use raster::Raster;
pub use render::{contains_offset, draw_into, half_extents, render_primitive};
