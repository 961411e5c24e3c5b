//! Reconstruction quality across beam widths and refinement budgets, and
//! primitive detection scored by beam agreement with average precision.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, Write};

use crate::exec::{render_program, Raster};
use crate::lang::{format_program, GrammarConfig, Primitive, PrimitiveKind, Program};
use crate::metrics::{iou, ChamferTarget};
use crate::policy::Policy;
use crate::search::{beam_search, refine};

/// Maps `f` over `items` on up to `jobs` scoped threads, preserving order.
pub fn par_map<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let jobs = jobs.max(1).min(items.len().max(1));
    if jobs == 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .enumerate()
            .map(|(c, part)| s.spawn(move || part.iter().enumerate().map(|(i, t)| f(c * chunk + i, t)).collect::<Vec<R>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

/// Number of worker threads to use by default.
pub fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Metrics of one reconstructed target.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalItem {
    pub id: usize,
    pub program: Option<Program>,
    /// Best-of-beam CD before refinement.
    pub cd_unrefined: f64,
    pub cd_pixels: f64,
    pub cd_normalized: f64,
    pub iou: f64,
    pub program_length: usize,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub k: usize,
    pub refine_iters: usize,
    pub items: Vec<EvalItem>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalOptions {
    pub k: usize,
    pub refine_iters: usize,
    pub grammar_mask: bool,
    pub jobs: usize,
}

impl EvalOptions {
    pub fn new(k: usize, refine_iters: usize) -> Self {
        EvalOptions { k, refine_iters, grammar_mask: true, jobs: 1 }
    }
}

fn mean(items: &[EvalItem], f: impl Fn(&EvalItem) -> f64) -> f64 {
    if items.is_empty() {
        return 0.0;
    }
    items.iter().map(f).sum::<f64>() / items.len() as f64
}

impl EvalReport {
    pub fn mean_cd_pixels(&self) -> f64 {
        mean(&self.items, |i| i.cd_pixels)
    }

    pub fn mean_cd_normalized(&self) -> f64 {
        mean(&self.items, |i| i.cd_normalized)
    }

    pub fn mean_cd_unrefined(&self) -> f64 {
        mean(&self.items, |i| i.cd_unrefined)
    }

    pub fn mean_iou(&self) -> f64 {
        mean(&self.items, |i| i.iou)
    }

    pub fn mean_program_length(&self) -> f64 {
        mean(&self.items, |i| i.program_length as f64)
    }

    pub fn num_errors(&self) -> usize {
        self.items.iter().filter(|i| i.error.is_some()).count()
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "id,k,refine_iters,cd_unrefined,cd_pixels,cd_normalized,iou,program_length,program,error")?;
        for it in &self.items {
            let prog = it.program.as_ref().map(format_program).unwrap_or_default();
            let err = it.error.as_deref().unwrap_or("").replace(',', ";");
            writeln!(
                w,
                "{},{},{},{:.6},{:.6},{:.6},{:.6},{},{},{}",
                it.id,
                self.k,
                self.refine_iters,
                it.cd_unrefined,
                it.cd_pixels,
                it.cd_normalized,
                it.iou,
                it.program_length,
                prog,
                err
            )?;
        }
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "items            {}", self.items.len());
        let _ = writeln!(s, "beam width       {}", self.k);
        let _ = writeln!(s, "refine iters     {}", self.refine_iters);
        let _ = writeln!(s, "mean CD (px)     {:.4}", self.mean_cd_pixels());
        let _ = writeln!(s, "mean CD (norm)   {:.6}", self.mean_cd_normalized());
        let _ = writeln!(s, "mean CD unrefined {:.4}", self.mean_cd_unrefined());
        let _ = writeln!(s, "mean IOU         {:.4}", self.mean_iou());
        let _ = writeln!(s, "mean length      {:.3}", self.mean_program_length());
        let _ = writeln!(s, "errors           {}", self.num_errors());
        s
    }
}

/// Beam program with the smallest Chamfer distance to the target; ties keep
/// the more likely beam.
pub fn best_of_beam(programs: &[Program], target: &ChamferTarget, config: &GrammarConfig) -> Option<(Program, f64)> {
    let mut best: Option<(Program, f64)> = None;
    for p in programs {
        let Ok(r) = render_program(p, config) else { continue };
        let Ok(cd) = target.distance(&r) else { continue };
        if best.as_ref().is_none_or(|b| cd.pixels < b.1) {
            best = Some((p.clone(), cd.pixels));
        }
    }
    best
}

/// Reconstructs one target: beam search, best-of-beam by CD, then refinement.
pub fn reconstruct<P: Policy>(policy: &P, id: usize, target: &Raster, opts: &EvalOptions, config: &GrammarConfig) -> EvalItem {
    let ct = ChamferTarget::new(target);
    let diagonal = target.diagonal();
    let failed = |error: String| EvalItem {
        id,
        program: None,
        cd_unrefined: diagonal,
        cd_pixels: diagonal,
        cd_normalized: 1.0,
        iou: 0.0,
        program_length: 0,
        error: Some(error),
    };
    let beams: Vec<Program> = beam_search(policy, target, opts.k, config, opts.grammar_mask)
        .into_iter()
        .map(|d| d.program.without_stop())
        .collect();
    let Some((best, cd0)) = best_of_beam(&beams, &ct, config) else {
        return failed("no executable program in beam".into());
    };
    let program = if opts.refine_iters > 0 { refine(&best, target, opts.refine_iters, config) } else { best };
    let out = match render_program(&program, config) {
        Ok(r) => r,
        Err(e) => return failed(e.to_string()),
    };
    let cd = match ct.distance(&out) {
        Ok(c) => c,
        Err(e) => return failed(e.to_string()),
    };
    EvalItem {
        id,
        program_length: program.len(),
        program: Some(program),
        cd_unrefined: cd0,
        cd_pixels: cd.pixels,
        cd_normalized: cd.normalized,
        iou: iou(&out, target).unwrap_or(0.0),
        error: None,
    }
}

/// Masked beam search of width `k` with best-of-beam selection and `refine_iters`
/// refinement sweeps per target.
pub fn eval_reconstruction<P: Policy + Sync>(
    policy: &P,
    targets: &[Raster],
    k: usize,
    refine_iters: usize,
    config: &GrammarConfig,
) -> EvalReport {
    eval_reconstruction_with(policy, targets, &EvalOptions::new(k, refine_iters), config)
}

pub fn eval_reconstruction_with<P: Policy + Sync>(
    policy: &P,
    targets: &[Raster],
    opts: &EvalOptions,
    config: &GrammarConfig,
) -> EvalReport {
    let items = par_map(targets, opts.jobs, |i, t| reconstruct(policy, i, t, opts, config));
    EvalReport { k: opts.k, refine_iters: opts.refine_iters, items }
}

/// Axis-aligned box in canvas coordinates (x along columns, y along rows).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub fn area(&self) -> f64 {
        (self.x1 - self.x0).max(0.0) * (self.y1 - self.y0).max(0.0)
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let w = (self.x1.min(other.x1) - self.x0.max(other.x0)).max(0.0);
        let h = (self.y1.min(other.y1) - self.y0.max(other.y0)).max(0.0);
        let inter = w * h;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

/// Tight planar box of a primitive's membership region.
pub fn primitive_bbox(p: &Primitive) -> BBox {
    let r = p.r.abs();
    let (left, right, top, bottom) = match p.kind {
        PrimitiveKind::Square => {
            let h = r / 2f64.sqrt();
            (h, h, h, h)
        }
        PrimitiveKind::Triangle => {
            let h = r * 3f64.sqrt() / 2.0;
            (h, h, r, r / 2.0)
        }
        PrimitiveKind::Cube => (r / 2.0, r / 2.0, r / 2.0, r / 2.0),
        _ => (r, r, r, r),
    };
    BBox { x0: p.x - left, y0: p.y - top, x1: p.x + right, y1: p.y + bottom }
}

/// A scored primitive hypothesis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub primitive: Primitive,
    pub kind: PrimitiveKind,
    pub bbox: BBox,
    pub score: f64,
}

/// A labeled ground-truth primitive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundTruth {
    pub kind: PrimitiveKind,
    pub bbox: BBox,
}

impl GroundTruth {
    pub fn of(p: &Primitive) -> Self {
        GroundTruth { kind: p.kind, bbox: primitive_bbox(p) }
    }
}

/// Scores every distinct primitive by the fraction of `programs` it occurs
/// in. Sorted by descending score, then first appearance.
pub fn detections_from_programs(programs: &[Program]) -> Vec<Detection> {
    let k = programs.len();
    let mut order: Vec<(String, Primitive)> = Vec::new();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for p in programs {
        let mut seen = std::collections::HashSet::new();
        for prim in p.primitives() {
            let key = prim.to_string();
            if !seen.insert(key.clone()) {
                continue;
            }
            let c = counts.entry(key.clone()).or_insert(0);
            if *c == 0 {
                order.push((key, *prim));
            }
            *c += 1;
        }
    }
    let mut out: Vec<Detection> = order
        .into_iter()
        .map(|(key, prim)| Detection {
            primitive: prim,
            kind: prim.kind,
            bbox: primitive_bbox(&prim),
            score: counts[&key] as f64 / k.max(1) as f64,
        })
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score));
    out
}

/// Detections from a masked beam search of width `k`. Scores divide by the
/// number of programs the search returned, which is `k` unless fewer
/// sequences have finite likelihood.
pub fn detection_scores<P: Policy>(policy: &P, target: &Raster, k: usize, config: &GrammarConfig) -> Vec<Detection> {
    let programs: Vec<Program> = beam_search(policy, target, k, config, true).into_iter().map(|d| d.program).collect();
    detections_from_programs(&programs)
}

/// Per-class average precision and their mean.
#[derive(Clone, Debug, PartialEq)]
pub struct MapReport {
    /// Classes with at least one ground-truth instance, in kind order.
    pub per_class: Vec<(PrimitiveKind, f64)>,
    pub map: f64,
}

/// Area under the precision envelope over recall (all-point interpolation).
pub fn average_precision(hits: &[bool], num_gt: usize) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    let mut tp = 0usize;
    let mut recall = vec![0.0];
    let mut precision = vec![1.0];
    for (i, &h) in hits.iter().enumerate() {
        tp += h as usize;
        recall.push(tp as f64 / num_gt as f64);
        precision.push(tp as f64 / (i + 1) as f64);
    }
    for i in (0..precision.len() - 1).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    (1..recall.len()).map(|i| (recall[i] - recall[i - 1]) * precision[i]).sum()
}

/// Ranks each class's detections by score (ties by image, then list order)
/// and greedily matches each to the highest-IoU ground truth of its image; a
/// match needs IoU at least `iou_threshold` and an unclaimed ground truth.
pub fn map_evaluation(detections: &[Vec<Detection>], truth: &[Vec<GroundTruth>], iou_threshold: f64) -> MapReport {
    assert_eq!(detections.len(), truth.len(), "one detection list per image");
    let mut kinds: Vec<PrimitiveKind> = truth.iter().flatten().map(|g| g.kind).collect();
    kinds.sort();
    kinds.dedup();
    let mut per_class = Vec::new();
    for kind in kinds {
        let num_gt = truth.iter().flatten().filter(|g| g.kind == kind).count();
        let mut ranked: Vec<(usize, usize, &Detection)> = detections
            .iter()
            .enumerate()
            .flat_map(|(img, ds)| ds.iter().enumerate().filter(|(_, d)| d.kind == kind).map(move |(j, d)| (img, j, d)))
            .collect();
        ranked.sort_by(|a, b| b.2.score.total_cmp(&a.2.score).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
        let mut claimed: Vec<Vec<bool>> = truth.iter().map(|g| vec![false; g.len()]).collect();
        let hits: Vec<bool> = ranked
            .iter()
            .map(|&(img, _, d)| {
                let mut best: Option<(usize, f64)> = None;
                for (gi, g) in truth[img].iter().enumerate() {
                    if g.kind != kind {
                        continue;
                    }
                    let o = d.bbox.iou(&g.bbox);
                    if best.is_none_or(|b| o > b.1) {
                        best = Some((gi, o));
                    }
                }
                match best {
                    Some((gi, o)) if o >= iou_threshold && !claimed[img][gi] => {
                        claimed[img][gi] = true;
                        true
                    }
                    _ => false,
                }
            })
            .collect();
        per_class.push((kind, average_precision(&hits, num_gt)));
    }
    let map = if per_class.is_empty() { 0.0 } else { per_class.iter().map(|c| c.1).sum::<f64>() / per_class.len() as f64 };
    MapReport { per_class, map }
}

/// Writes `image_id,class,score,x0,y0,x1,y1` rows.
pub fn write_detections<W: Write>(w: &mut W, detections: &[Vec<Detection>]) -> io::Result<()> {
    writeln!(w, "image_id,class,score,x0,y0,x1,y1")?;
    for (img, ds) in detections.iter().enumerate() {
        for d in ds {
            let b = d.bbox;
            writeln!(w, "{img},{},{:.6},{:.4},{:.4},{:.4},{:.4}", d.kind.name(), d.score, b.x0, b.y0, b.x1, b.y1)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{build_vocabulary, parse_program};
    use crate::policy::TokenDistribution;
    use crate::search::toy::TablePolicy;

    fn gt(kind: PrimitiveKind, x0: f64, y0: f64, x1: f64, y1: f64) -> GroundTruth {
        GroundTruth { kind, bbox: BBox { x0, y0, x1, y1 } }
    }

    fn det(g: GroundTruth, score: f64) -> Detection {
        Detection { primitive: Primitive::new_2d(g.kind, 0.0, 0.0, 1.0), kind: g.kind, bbox: g.bbox, score }
    }

    #[test]
    fn boxes_match_rendered_extent() {
        let cfg = GrammarConfig::default_2d();
        for text in ["circle(32,32,16)", "square(32,24,20)", "triangle(24,32,12)"] {
            let p = parse_program(text, &cfg).unwrap();
            let prim = *p.primitives().next().unwrap();
            let r = render_program(&p, &cfg).unwrap();
            let b = primitive_bbox(&prim);
            for i in r.ones() {
                let [_, y, x] = r.coords(i);
                let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
                assert!(cx >= b.x0 && cx <= b.x1 && cy >= b.y0 && cy <= b.y1, "{text} cell ({x},{y})");
            }
        }
        let tri = primitive_bbox(&Primitive::new_2d(PrimitiveKind::Triangle, 20.0, 20.0, 8.0));
        assert_eq!((tri.y0, tri.y1), (12.0, 24.0));
        assert!((tri.x1 - tri.x0 - 8.0 * 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn perfect_detections_give_map_one() {
        let g = vec![
            vec![gt(PrimitiveKind::Circle, 0.0, 0.0, 10.0, 10.0), gt(PrimitiveKind::Square, 20.0, 20.0, 30.0, 30.0)],
            vec![gt(PrimitiveKind::Circle, 5.0, 5.0, 9.0, 9.0)],
        ];
        let d: Vec<Vec<Detection>> = g.iter().map(|im| im.iter().map(|x| det(*x, 0.7)).collect()).collect();
        let rep = map_evaluation(&d, &g, 0.5);
        assert_eq!(rep.map, 1.0);
        assert_eq!(rep.per_class.len(), 2);
    }

    #[test]
    fn low_overlap_is_a_miss() {
        let g = gt(PrimitiveKind::Circle, 0.0, 0.0, 10.0, 10.0);
        // IoU 40/100
        let d = det(gt(PrimitiveKind::Circle, 0.0, 0.0, 10.0, 4.0), 1.0);
        assert!((d.bbox.iou(&g.bbox) - 0.4).abs() < 1e-12);
        assert_eq!(map_evaluation(&[vec![d]], &[vec![g]], 0.5).map, 0.0);
    }

    #[test]
    fn tp_then_fp_gives_half() {
        let a = gt(PrimitiveKind::Circle, 0.0, 0.0, 10.0, 10.0);
        let b = gt(PrimitiveKind::Circle, 30.0, 30.0, 40.0, 40.0);
        let d = vec![det(a, 0.9), det(gt(PrimitiveKind::Circle, 50.0, 50.0, 60.0, 60.0), 0.5)];
        assert_eq!(map_evaluation(&[d], &[vec![a, b]], 0.5).map, 0.5);
    }

    #[test]
    fn duplicates_count_as_false_positives_and_scale_is_irrelevant() {
        let a = gt(PrimitiveKind::Square, 0.0, 0.0, 10.0, 10.0);
        let d = vec![det(a, 0.9), det(a, 0.8)];
        // TP, FP: envelope precision 1 at recall 1
        assert_eq!(map_evaluation(&[d.clone()], &[vec![a]], 0.5).map, 1.0);
        let d2 = vec![det(a, 0.2), det(gt(PrimitiveKind::Square, 40.0, 40.0, 50.0, 50.0), 0.6)];
        let m1 = map_evaluation(&[d2.clone()], &[vec![a]], 0.5).map;
        let scaled: Vec<Detection> = d2.iter().map(|x| Detection { score: x.score * 0.5, ..*x }).collect();
        assert_eq!(m1, 0.5);
        assert_eq!(map_evaluation(&[scaled], &[vec![a]], 0.5).map, m1);
    }

    #[test]
    fn occurrence_scores() {
        let cfg = GrammarConfig::default_2d();
        let prog = |t: &str| parse_program(t, &cfg).unwrap();
        let mut beams = vec![prog("circle(32,32,16) circle(32,32,16) union"); 4];
        beams.extend(vec![prog("square(16,16,8) circle(40,40,8) union"); 6]);
        let d = detections_from_programs(&beams);
        let score = |s: &str| d.iter().find(|x| x.primitive.to_string() == s).unwrap().score;
        assert_eq!(score("square(16,16,8)"), 0.6);
        assert_eq!(score("circle(32,32,16)"), 0.4);
        assert_eq!(score("circle(40,40,8)"), 0.6);
        assert_eq!(d.len(), 3);
    }

    #[test]
    fn deterministic_policy_scores_one() {
        let cfg = crate::search::toy::three_token_grammar();
        let vocab = build_vocabulary(&cfg);
        let n = vocab.len();
        let (c, u, s) = (0, n - 2, n - 1);
        let pol = TablePolicy::new(&cfg, move |step, _| TokenDistribution::one_hot(n, [c, c, u, s][step.min(3)]));
        let target = Raster::empty_2d(cfg.canvas as usize);
        let d = detection_scores(&pol, &target, 3, &cfg);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].score, 1.0);
        let d1 = detection_scores(&pol, &target, 1, &cfg);
        assert_eq!(d1.len(), 1);
        assert_eq!(d1[0].score, 1.0);
    }

    #[test]
    fn par_map_preserves_order() {
        let v: Vec<usize> = (0..37).collect();
        assert_eq!(par_map(&v, 4, |i, x| i * 100 + x * 2), par_map(&v, 1, |i, x| i * 100 + x * 2));
    }
}
