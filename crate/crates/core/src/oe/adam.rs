use alloc::vec;
use alloc::vec::Vec;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adaptive-moment optimizer with bias correction and a constant step size.
#[derive(Debug, Clone)]
pub struct Adam {
    learning_rate: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(learning_rate: f64, num_params: usize) -> Self {
        Self { learning_rate, m: vec![0.0; num_params], v: vec![0.0; num_params], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - libm::pow(BETA1, f64::from(self.t));
        let c2 = 1.0 - libm::pow(BETA2, f64::from(self.t));
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.learning_rate * m_hat / (libm::sqrt(v_hat) + EPSILON);
        }
    }
}
