//! Primitive detection from beam programs: each distinct primitive is scored
//! by the fraction of beam programs that use it, then scored against
//! ground-truth boxes with per-class average precision.

use csgkit::eval::{detections_from_programs, map_evaluation, GroundTruth};
use csgkit::lang::{parse_program, GrammarConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grammar = GrammarConfig::default_2d();
    let truth_program = parse_program("circle(24,24,12) square(40,40,12) union triangle(24,48,8) union", &grammar)?;
    // stand-in for the k programs a beam search returns
    let beams: Vec<_> = [
        "circle(24,24,12) square(40,40,12) union triangle(24,48,8) union",
        "circle(24,24,12) square(40,40,12) union",
        "circle(24,24,12) square(40,40,16) union triangle(24,48,8) union",
        "circle(24,24,8) square(40,40,12) union",
        "circle(24,24,12) triangle(24,48,8) union",
    ]
    .iter()
    .map(|t| parse_program(t, &grammar))
    .collect::<Result<_, _>>()?;

    let detections = detections_from_programs(&beams);
    println!("{:<22} {:>6}  box", "primitive", "score");
    for d in &detections {
        println!("{:<22} {:>6.2}  ({:.1},{:.1})-({:.1},{:.1})", d.primitive.to_string(), d.score, d.bbox.x0, d.bbox.y0, d.bbox.x1, d.bbox.y1);
    }

    let truth: Vec<GroundTruth> = truth_program.primitives().map(GroundTruth::of).collect();
    let report = map_evaluation(&[detections], &[truth], 0.5);
    for (kind, ap) in &report.per_class {
        println!("AP {:<9} {ap:.3}", kind.name());
    }
    println!("MAP {:.3}", report.map);
    Ok(())
}
