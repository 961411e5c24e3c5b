//! Nearest-neighbor baseline: answer a query with the stored program whose
//! rendering is closest in Chamfer distance.

use crate::exec::Raster;
use crate::lang::Program;
use crate::metrics::{iou, ChamferTarget};

use super::PolicyError;

/// Stored rasters with cached outlines and distance fields.
#[derive(Clone, Debug, Default)]
pub struct RetrievalIndex {
    shapes: Vec<ChamferTarget>,
    programs: Vec<Program>,
}

impl RetrievalIndex {
    pub fn len(&self) -> usize {
        self.programs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.programs.is_empty()
    }

    pub fn program(&self, id: usize) -> &Program {
        &self.programs[id]
    }

    pub fn raster(&self, id: usize) -> &Raster {
        self.shapes[id].raster()
    }
}

/// Best match for a query.
#[derive(Clone, Debug, PartialEq)]
pub struct Retrieval<'a> {
    pub id: usize,
    pub program: &'a Program,
    pub cd_pixels: f64,
    pub iou: f64,
}

pub fn nn_build_index<I>(records: I) -> RetrievalIndex
where
    I: IntoIterator<Item = (Raster, Program)>,
{
    let mut index = RetrievalIndex::default();
    for (raster, program) in records {
        index.shapes.push(ChamferTarget::new(&raster));
        index.programs.push(program);
    }
    index
}

/// Minimizes Chamfer distance; ties go to higher IOU, then the lower id.
pub fn nn_retrieve<'a>(index: &'a RetrievalIndex, target: &Raster) -> Result<Retrieval<'a>, PolicyError> {
    if index.is_empty() {
        return Err(PolicyError::EmptyIndex);
    }
    let query = ChamferTarget::new(target);
    let mut best: Option<Retrieval> = None;
    for (id, shape) in index.shapes.iter().enumerate() {
        let Ok(cd) = query.distance_to(shape) else { continue };
        let better = match &best {
            None => true,
            Some(b) if cd.pixels < b.cd_pixels => true,
            Some(b) if cd.pixels == b.cd_pixels => iou(shape.raster(), target).unwrap_or(0.0) > b.iou,
            _ => false,
        };
        if better {
            let overlap = iou(shape.raster(), target).unwrap_or(0.0);
            best = Some(Retrieval { id, program: &index.programs[id], cd_pixels: cd.pixels, iou: overlap });
        }
    }
    best.ok_or(PolicyError::EmptyIndex)
}
