//! Shape similarity: edge maps, distance transforms, Chamfer distance, IOU
//! and the shaped reward used for policy-gradient training.

mod distance;

pub use distance::{distance_transform, DistanceField};

use thiserror::Error;

use crate::exec::{render_program, Raster};
use crate::lang::{Dim, GrammarConfig, Program};

/// Default reward-shaping exponent.
pub const DEFAULT_GAMMA: f64 = 20.0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricError {
    #[error("raster dimensions differ: {0:?} vs {1:?}")]
    DimMismatch([usize; 3], [usize; 3]),
}

fn check_shapes(a: &Raster, b: &Raster) -> Result<(), MetricError> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(MetricError::DimMismatch(a.shape(), b.shape()))
    }
}

/// Boundary cells of a shape. Always a subset of the source raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeMap(Raster);

impl EdgeMap {
    pub fn as_raster(&self) -> &Raster {
        &self.0
    }

    pub fn count(&self) -> usize {
        self.0.count()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Wraps an arbitrary cell set as edges, e.g. a hand-placed point set.
    pub fn from_raster_unchecked(r: Raster) -> Self {
        EdgeMap(r)
    }
}

/// Occupied cells with at least one unoccupied face neighbor (4-neighborhood
/// in 2D, 6 in 3D). Cells beyond the canvas count as unoccupied.
pub fn edge_map(r: &Raster) -> EdgeMap {
    let [depth, rows, cols] = r.shape();
    let three = r.dim() == Dim::Three;
    let mut out = Raster::empty(r.dim(), r.shape());
    for i in r.ones() {
        let [z, y, x] = r.coords(i);
        let boundary = x == 0
            || x + 1 == cols
            || y == 0
            || y + 1 == rows
            || !r.get_index(i - 1)
            || !r.get_index(i + 1)
            || !r.get_index(i - cols)
            || !r.get_index(i + cols)
            || three && (z == 0 || z + 1 == depth || !r.get_index(i - rows * cols) || !r.get_index(i + rows * cols));
        if boundary {
            out.set_index(i, true);
        }
    }
    EdgeMap(out)
}

/// Chamfer distance in cell units and as a fraction of the canvas diagonal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChamferDistance {
    pub normalized: f64,
    pub pixels: f64,
}

impl ChamferDistance {
    fn maximal(diagonal: f64) -> Self {
        ChamferDistance { normalized: 1.0, pixels: diagonal }
    }
}

fn mean_over(edges: &EdgeMap, field: &DistanceField) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in edges.0.ones() {
        sum += field.at_index(i);
        n += 1;
    }
    sum / n as f64
}

fn chamfer_from_parts(x: &EdgeMap, fx: &DistanceField, y: &EdgeMap, fy: &DistanceField) -> ChamferDistance {
    let diagonal = x.0.diagonal();
    if x.is_empty() || y.is_empty() {
        return ChamferDistance::maximal(diagonal);
    }
    let pixels = 0.5 * mean_over(x, fy) + 0.5 * mean_over(y, fx);
    ChamferDistance { normalized: (pixels / diagonal).min(1.0), pixels }
}

/// Symmetric Chamfer distance between two edge sets. Maximal (normalized 1)
/// when either set is empty.
pub fn chamfer(x: &EdgeMap, y: &EdgeMap) -> Result<ChamferDistance, MetricError> {
    check_shapes(&x.0, &y.0)?;
    Ok(chamfer_from_parts(x, &distance_transform(x), y, &distance_transform(y)))
}

/// Chamfer distance between the outlines of two shapes.
pub fn shape_chamfer(a: &Raster, b: &Raster) -> Result<ChamferDistance, MetricError> {
    chamfer(&edge_map(a), &edge_map(b))
}

/// A fixed comparison shape with its outline and distance field cached, for
/// scoring many candidates against one target.
#[derive(Clone, Debug)]
pub struct ChamferTarget {
    raster: Raster,
    edges: EdgeMap,
    field: DistanceField,
}

impl ChamferTarget {
    pub fn new(target: &Raster) -> Self {
        let edges = edge_map(target);
        let field = distance_transform(&edges);
        ChamferTarget { raster: target.clone(), edges, field }
    }

    pub fn raster(&self) -> &Raster {
        &self.raster
    }

    /// Chamfer distance between two cached shapes, with no transform recomputed.
    pub fn distance_to(&self, other: &ChamferTarget) -> Result<ChamferDistance, MetricError> {
        check_shapes(&self.raster, &other.raster)?;
        Ok(chamfer_from_parts(&self.edges, &self.field, &other.edges, &other.field))
    }

    pub fn distance(&self, candidate: &Raster) -> Result<ChamferDistance, MetricError> {
        check_shapes(&self.raster, candidate)?;
        let ce = edge_map(candidate);
        if ce.is_empty() || self.edges.is_empty() {
            return Ok(ChamferDistance::maximal(candidate.diagonal()));
        }
        let cf = distance_transform(&ce);
        Ok(chamfer_from_parts(&self.edges, &self.field, &ce, &cf))
    }
}

/// Intersection over union; 1 when both rasters are empty.
pub fn iou(a: &Raster, b: &Raster) -> Result<f64, MetricError> {
    check_shapes(a, b)?;
    let union = a.union_count(b);
    if union == 0 {
        return Ok(1.0);
    }
    Ok(a.intersection_count(b) as f64 / union as f64)
}

/// `(1 - cd)^gamma` with `cd` clamped to `[0, 1]`.
pub fn shape_reward(cd_normalized: f64, gamma: f64) -> f64 {
    (1.0 - cd_normalized.clamp(0.0, 1.0)).powf(gamma)
}

/// Reward of a program against a target: zero for invalid programs and
/// empty renders, otherwise the shaped normalized Chamfer distance.
pub fn shaped_reward(p: &Program, target: &Raster, gamma: f64, config: &GrammarConfig) -> f64 {
    match render_program(p, config) {
        Ok(out) => reward_for_render(&out, &ChamferTarget::new(target), gamma),
        Err(_) => 0.0,
    }
}

/// Reward of an already executed program against a cached target.
pub fn reward_for_render(out: &Raster, target: &ChamferTarget, gamma: f64) -> f64 {
    if out.is_empty() {
        return 0.0;
    }
    match target.distance(out) {
        Ok(cd) => shape_reward(cd.normalized, gamma),
        Err(_) => 0.0,
    }
}
