//! Derivative-free refinement of primitive parameters with the program
//! structure frozen. Conjugate-direction (Powell) sweeps with a bracketing
//! scan plus golden-section line search.

use crate::exec::{render_program, Raster};
use crate::lang::{Dim, GrammarConfig, Instruction, Primitive, Program};
use crate::metrics::ChamferTarget;

/// Outcome of a refinement run.
#[derive(Clone, Debug, PartialEq)]
pub struct RefineReport {
    pub program: Program,
    pub initial_cd: f64,
    pub final_cd: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

struct Problem<'a> {
    template: &'a Program,
    arities: Vec<usize>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    target: ChamferTarget,
    config: &'a GrammarConfig,
    evaluations: usize,
}

impl Problem<'_> {
    fn build(&self, x: &[f64]) -> Program {
        let mut it = x.iter().copied();
        let instructions = self
            .template
            .instructions
            .iter()
            .map(|ins| match ins {
                Instruction::Prim(p) => {
                    let vals: Vec<f64> = (&mut it).take(p.kind.arity()).collect();
                    Instruction::Prim(Primitive::from_params(p.kind, &vals, true))
                }
                other => *other,
            })
            .collect();
        Program::new(instructions)
    }

    fn clamp(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }

    /// Pixel Chamfer distance of the program built from `x`.
    fn objective(&mut self, x: &[f64]) -> f64 {
        self.evaluations += 1;
        match render_program(&self.build(x), self.config) {
            Ok(r) => self.target.distance(&r).map(|c| c.pixels).unwrap_or(f64::INFINITY),
            Err(_) => f64::INFINITY,
        }
    }

    fn point(&self, x: &[f64], d: &[f64], t: f64) -> Vec<f64> {
        let mut y: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + t * b).collect();
        self.clamp(&mut y);
        y
    }

    /// Minimizes along `d` from `x`, accepting only strict improvements.
    fn line_min(&mut self, x: &[f64], fx: f64, d: &[f64]) -> (Vec<f64>, f64) {
        let (mut best_t, mut best_f) = (0.0, fx);
        for s in [0.5, 1.0, 2.0, 4.0, 8.0, 16.0] {
            for t in [s, -s] {
                let f = self.objective(&self.point(x, d, t));
                if f < best_f {
                    best_t = t;
                    best_f = f;
                }
            }
        }
        if best_t == 0.0 {
            return (x.to_vec(), fx);
        }
        let half = 0.5 * f64::abs(best_t);
        let (mut a, mut b) = (best_t - half, best_t + half);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - g * (b - a);
        let mut e = a + g * (b - a);
        let mut fc = self.objective(&self.point(x, d, c));
        let mut fe = self.objective(&self.point(x, d, e));
        for _ in 0..10 {
            if fc < best_f {
                best_t = c;
                best_f = fc;
            }
            if fe < best_f {
                best_t = e;
                best_f = fe;
            }
            if fc <= fe {
                b = e;
                e = c;
                fe = fc;
                c = b - g * (b - a);
                fc = self.objective(&self.point(x, d, c));
            } else {
                a = c;
                c = e;
                fc = fe;
                e = a + g * (b - a);
                fe = self.objective(&self.point(x, d, e));
            }
        }
        for (t, f) in [(c, fc), (e, fe)] {
            if f < best_f {
                best_t = t;
                best_f = f;
            }
        }
        (self.point(x, d, best_t), best_f)
    }
}

/// Refines `p` toward `target` for at most `max_iters` full sweeps and
/// returns the best program found. The result never scores worse than `p`;
/// when nothing improves, `p` is returned unchanged.
pub fn refine(p: &Program, target: &Raster, max_iters: usize, config: &GrammarConfig) -> Program {
    refine_with_report(p, target, max_iters, config).program
}

pub fn refine_with_report(p: &Program, target: &Raster, max_iters: usize, config: &GrammarConfig) -> RefineReport {
    let canvas = config.canvas as f64;
    let axes = match config.dim {
        Dim::Two => 2,
        Dim::Three => 3,
    };
    let mut x = Vec::new();
    let (mut lower, mut upper, mut arities) = (Vec::new(), Vec::new(), Vec::new());
    for prim in p.primitives() {
        let params = prim.params();
        arities.push(params.len());
        for (i, v) in params.into_iter().enumerate() {
            x.push(v);
            if i < axes {
                lower.push(0.0);
                upper.push(canvas);
            } else {
                lower.push(1.0);
                upper.push(canvas / 2.0);
            }
        }
    }
    let mut prob = Problem { template: p, arities, lower, upper, target: ChamferTarget::new(target), config, evaluations: 0 };
    let initial = prob.objective(&x);
    let n = x.len();
    let mut fx = initial;
    let mut iterations = 0;
    let mut dirs: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let mut x_best = x.clone();
    while iterations < max_iters && n > 0 && fx > 0.0 {
        iterations += 1;
        let (x0, f0) = (x_best.clone(), fx);
        let (mut big_i, mut big_drop) = (0, 0.0);
        for (i, d) in dirs.iter().enumerate() {
            let (xn, fnew) = prob.line_min(&x_best, fx, d);
            if fx - fnew > big_drop {
                big_drop = fx - fnew;
                big_i = i;
            }
            x_best = xn;
            fx = fnew;
        }
        let shift: Vec<f64> = x_best.iter().zip(&x0).map(|(a, b)| a - b).collect();
        let scale = shift.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale > 0.0 {
            let d: Vec<f64> = shift.iter().map(|v| v / scale).collect();
            let (xn, fnew) = prob.line_min(&x_best, fx, &d);
            x_best = xn;
            fx = fnew;
            dirs[big_i] = d;
        }
        if f0 - fx <= 1e-9 {
            break;
        }
    }
    debug_assert!(prob.arities.iter().sum::<usize>() == n);
    let program = if fx < initial { prob.build(&x_best) } else { p.clone() };
    RefineReport {
        program,
        initial_cd: initial,
        final_cd: fx.min(initial),
        iterations,
        evaluations: prob.evaluations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_program;
    use crate::metrics::shape_chamfer;

    fn cfg() -> GrammarConfig {
        GrammarConfig::default_2d()
    }

    #[test]
    fn zero_iterations_is_identity() {
        let p = parse_program("circle(32,32,24)", &cfg()).unwrap();
        let t = render_program(&parse_program("circle(32,32,28)", &cfg()).unwrap(), &cfg()).unwrap();
        assert_eq!(refine(&p, &t, 0, &cfg()), p);
    }

    #[test]
    fn exact_target_stays_put() {
        let p = parse_program("circle(32,32,16) square(40,32,12) union", &cfg()).unwrap();
        let t = render_program(&p, &cfg()).unwrap();
        let r = refine_with_report(&p, &t, 10, &cfg());
        assert_eq!(r.final_cd, 0.0);
        assert_eq!(r.program, p);
    }

    #[test]
    fn recovers_radius() {
        let p = parse_program("circle(32,32,24)", &cfg()).unwrap();
        let t = render_program(&parse_program("circle(32,32,28)", &cfg()).unwrap(), &cfg()).unwrap();
        // independent sweep over radius on a 0.25 grid
        let best = (0..=64)
            .map(|i| 20.0 + i as f64 * 0.25)
            .min_by(|a, b| {
                let cd = |r: f64| {
                    let q = Program::new(vec![Instruction::Prim(Primitive::from_params(
                        crate::lang::PrimitiveKind::Circle,
                        &[32.0, 32.0, r],
                        true,
                    ))]);
                    shape_chamfer(&render_program(&q, &cfg()).unwrap(), &t).unwrap().pixels
                };
                cd(*a).total_cmp(&cd(*b))
            })
            .unwrap();
        assert!((best - 28.0).abs() <= 0.5);
        let r = refine_with_report(&p, &t, 10, &cfg());
        let prim = r.program.primitives().next().unwrap();
        assert!((prim.r - 28.0).abs() <= 0.5, "radius {}", prim.r);
        assert!(r.final_cd <= 0.5);
        assert!(prim.continuous);
    }

    #[test]
    fn never_worse() {
        let c = cfg();
        let p = parse_program("triangle(24,32,16) circle(40,40,8) subtract", &c).unwrap();
        let t = render_program(&parse_program("square(32,32,20) circle(32,32,8) union", &c).unwrap(), &c).unwrap();
        let r = refine_with_report(&p, &t, 3, &c);
        assert!(r.final_cd <= r.initial_cd);
        let got = shape_chamfer(&render_program(&r.program, &c).unwrap(), &t).unwrap().pixels;
        assert_eq!(got, r.final_cd);
    }
}
