/// Adam with per-parameter first/second moments, applied lazily: only voxels that
/// received gradient in the current step are updated. Bias correction uses the global
/// step count.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f32>,
    v: Vec<f32>,
    step: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(len: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam { m: vec![0.0; len], v: vec![0.0; len], step: 0, lr, beta1, beta2, eps }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Update the blocks of `voxels` (each `stride` parameters wide) and zero their
    /// gradient entries.
    pub fn step_sparse(&mut self, params: &mut [f32], grad: &mut [f32], voxels: &[u32], stride: usize) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let step_size = (self.lr / bc1) as f32;
        let inv_bc2 = (1.0 / bc2) as f32;
        let (b1, b2, eps) = (self.beta1 as f32, self.beta2 as f32, self.eps as f32);
        for &vox in voxels {
            let r = vox as usize * stride..(vox as usize + 1) * stride;
            let (p, g, m, v) = (&mut params[r.clone()], &mut grad[r.clone()], &mut self.m[r.clone()], &mut self.v[r]);
            for i in 0..stride {
                let gi = g[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                p[i] -= step_size * m[i] / ((v[i] * inv_bc2).sqrt() + eps);
                g[i] = 0.0;
            }
        }
    }

    /// Dense update over every parameter.
    pub fn step_dense(&mut self, params: &mut [f32], grad: &mut [f32]) {
        let all: Vec<u32> = (0..params.len() as u32).collect();
        self.step_sparse(params, grad, &all, 1);
    }
}
