use crate::lang::{Dim, GrammarConfig, Primitive, PrimitiveKind};

use super::Raster;

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Membership test for a point given as offsets from the primitive center
/// (`dx` along columns, `dy` along rows, `dz` along depth).
#[inline]
pub fn contains_offset(p: &Primitive, dx: f64, dy: f64, dz: f64) -> bool {
    let r = p.r;
    match p.kind {
        PrimitiveKind::Circle => dx * dx + dy * dy <= r * r,
        // half side r/sqrt(2): the square is inscribed in the radius-r circle
        PrimitiveKind::Square => 2.0 * dx * dx <= r * r && 2.0 * dy * dy <= r * r,
        // apex at dy = -r, base at dy = r/2, vertices on the radius-r circle
        PrimitiveKind::Triangle => dy <= r / 2.0 && SQRT3 * dx.abs() <= dy + r,
        PrimitiveKind::Sphere => dx * dx + dy * dy + dz * dz <= r * r,
        PrimitiveKind::Cube => {
            let half = r / 2.0;
            dx.abs() <= half && dy.abs() <= half && dz.abs() <= half
        }
        PrimitiveKind::Cylinder => dx * dx + dy * dy <= r * r && dz.abs() <= p.h / 2.0,
    }
}

/// Half extents (cols, rows, depth) of the primitive's bounding box.
pub fn half_extents(p: &Primitive) -> [f64; 3] {
    let r = p.r.abs();
    match p.kind {
        PrimitiveKind::Cube => [r / 2.0; 3],
        PrimitiveKind::Cylinder => [r, r, p.h.abs() / 2.0],
        PrimitiveKind::Square => [r / 2f64.sqrt(), r / 2f64.sqrt(), 0.0],
        _ => [r; 3],
    }
}

/// Range of cell indices whose centers can fall within `[c - half, c + half]`.
fn cell_span(c: f64, half: f64, n: usize) -> std::ops::Range<usize> {
    let lo = (c - half - 0.5).floor().max(0.0);
    let hi = (c + half - 0.5).ceil() + 1.0;
    let hi = hi.min(n as f64);
    if !(lo < hi) {
        return 0..0;
    }
    lo as usize..hi as usize
}

/// Rasterizes a primitive by sampling cell centers at `+0.5` offsets with
/// inclusive boundaries. Geometry outside the canvas is clipped.
pub fn render_primitive(p: &Primitive, config: &GrammarConfig) -> Raster {
    let shape = config.raster_shape();
    let mut out = Raster::empty(config.dim, shape);
    draw_into(&mut out, p);
    out
}

/// Sets every cell covered by `p` in `out`.
pub fn draw_into(out: &mut Raster, p: &Primitive) {
    let params = [p.x, p.y, p.z, p.r, p.h];
    if params.iter().any(|v| !v.is_finite()) {
        return;
    }
    let [depth, rows, cols] = out.shape();
    let ext = half_extents(p);
    let zs = match out.dim() {
        Dim::Two => 0..1,
        Dim::Three => cell_span(p.z, ext[2], depth),
    };
    let ys = cell_span(p.y, ext[1], rows);
    let xs = cell_span(p.x, ext[0], cols);
    for z in zs {
        let dz = match out.dim() {
            Dim::Two => 0.0,
            Dim::Three => z as f64 + 0.5 - p.z,
        };
        for y in ys.clone() {
            let dy = y as f64 + 0.5 - p.y;
            for x in xs.clone() {
                let dx = x as f64 + 0.5 - p.x;
                if contains_offset(p, dx, dy, dz) {
                    out.set(z, y, x, true);
                }
            }
        }
    }
}
