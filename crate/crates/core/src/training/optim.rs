/// First-order optimizers over a flat parameter vector. `step` takes the
/// gradient of the loss to minimize.
#[derive(Clone, Debug, PartialEq)]
pub enum Optimizer {
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64, t: u64, m: Vec<f64>, v: Vec<f64> },
    Sgd { lr: f64, momentum: f64, velocity: Vec<f64> },
}

impl Optimizer {
    pub fn adam(lr: f64, n: usize) -> Self {
        Optimizer::Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    pub fn sgd(lr: f64, momentum: f64, n: usize) -> Self {
        Optimizer::Sgd { lr, momentum, velocity: vec![0.0; n] }
    }

    pub fn lr(&self) -> f64 {
        match self {
            Optimizer::Adam { lr, .. } | Optimizer::Sgd { lr, .. } => *lr,
        }
    }

    pub fn set_lr(&mut self, new: f64) {
        match self {
            Optimizer::Adam { lr, .. } | Optimizer::Sgd { lr, .. } => *lr = new,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        match self {
            Optimizer::Adam { lr, beta1, beta2, eps, t, m, v } => {
                *t += 1;
                let c1 = 1.0 - beta1.powi(*t as i32);
                let c2 = 1.0 - beta2.powi(*t as i32);
                for i in 0..params.len() {
                    m[i] = *beta1 * m[i] + (1.0 - *beta1) * grad[i];
                    v[i] = *beta2 * v[i] + (1.0 - *beta2) * grad[i] * grad[i];
                    params[i] -= *lr * (m[i] / c1) / ((v[i] / c2).sqrt() + *eps);
                }
            }
            Optimizer::Sgd { lr, momentum, velocity } => {
                for i in 0..params.len() {
                    velocity[i] = *momentum * velocity[i] + grad[i];
                    params[i] -= *lr * velocity[i];
                }
            }
        }
    }
}

/// Rescales `grad` in place so its L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_global_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_momentum_arithmetic() {
        let mut o = Optimizer::sgd(0.1, 0.9, 1);
        let mut p = [1.0];
        o.step(&mut p, &[1.0]);
        assert!((p[0] - 0.9).abs() < 1e-15);
        o.step(&mut p, &[1.0]);
        // velocity 1.9
        assert!((p[0] - 0.71).abs() < 1e-12);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        let mut o = Optimizer::adam(0.001, 2);
        let mut p = [0.0, 0.0];
        o.step(&mut p, &[3.0, -0.5]);
        assert!((p[0] + 0.001).abs() < 1e-9);
        assert!((p[1] - 0.001).abs() < 1e-9);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut o = Optimizer::adam(0.05, 1);
        let mut p = [5.0];
        for _ in 0..2000 {
            let g = [2.0 * (p[0] - 1.5)];
            o.step(&mut p, &g);
        }
        assert!((p[0] - 1.5).abs() < 1e-3);
    }

    #[test]
    fn clipping() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_global_norm(&mut g, 5.0), 5.0);
        assert_eq!(g, vec![3.0, 4.0]);
        assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
    }
}
