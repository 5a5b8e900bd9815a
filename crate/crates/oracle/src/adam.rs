//! Reference Adam optimizer, entirely in f64.

/// State for one parameter vector.
#[derive(Clone, Debug)]
pub struct AdamRef {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamRef {
    pub fn new(len: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        AdamRef { m: vec![0.0; len], v: vec![0.0; len], step: 0, beta1, beta2, eps }
    }

    /// One bias-corrected update of `weights` in place.
    pub fn step(&mut self, weights: &mut [f64], grads: &[f64], lr: f64) {
        assert_eq!(weights.len(), grads.len());
        assert_eq!(weights.len(), self.m.len());
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..weights.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            weights[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}
