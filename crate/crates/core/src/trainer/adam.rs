//! Sparse Adam over the embedding table: moments and bias-correction step
//! counters advance per row, only when the row is touched.

use crate::linalg::{Mat, Scalar};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct AdamState<R> {
    m: Mat<R>,
    v: Mat<R>,
    steps: Vec<u64>,
}

impl<R: Scalar> AdamState<R> {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            m: Mat::zeros(rows, cols),
            v: Mat::zeros(rows, cols),
            steps: vec![0; rows],
        }
    }

    pub fn step_count(&self, row: usize) -> u64 {
        self.steps[row]
    }

    /// Advance one row: update both moments, bias-correct with the row's
    /// own step counter, and apply the update to `params`.
    pub fn update_row(&mut self, row: usize, grad: &[R], params: &mut [R], lr: f64) {
        let t = self.steps[row] + 1;
        self.steps[row] = t;
        let bias1 = 1.0 - ADAM_BETA1.powi(t as i32);
        let bias2 = 1.0 - ADAM_BETA2.powi(t as i32);
        let b1 = R::from_f64(ADAM_BETA1);
        let b2 = R::from_f64(ADAM_BETA2);
        let one_minus_b1 = R::from_f64(1.0 - ADAM_BETA1);
        let one_minus_b2 = R::from_f64(1.0 - ADAM_BETA2);
        let inv_bias1 = R::from_f64(1.0 / bias1);
        let inv_bias2 = R::from_f64(1.0 / bias2);
        let eps = R::from_f64(ADAM_EPS);
        let step = R::from_f64(lr);

        let m_row = self.m.row_mut(row);
        let v_row = self.v.row_mut(row);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grad.iter())
            .zip(m_row.iter_mut().zip(v_row.iter_mut()))
        {
            *m = b1 * *m + one_minus_b1 * g;
            *v = b2 * *v + one_minus_b2 * g * g;
            let m_hat = *m * inv_bias1;
            let v_hat = *v * inv_bias2;
            *p -= step * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_untouched_row_as_is() {
        let mut adam = AdamState::<f64>::new(2, 3);
        let mut params = [1.0, 2.0, 3.0];
        adam.update_row(0, &[0.0, 0.0, 0.0], &mut params, 0.1);
        // Zero moments stay zero; update is 0 / (0 + eps).
        assert_eq!(params, [1.0, 2.0, 3.0]);
        assert_eq!(adam.step_count(0), 1);
        assert_eq!(adam.step_count(1), 0);
    }

    #[test]
    fn first_step_moves_by_roughly_lr() {
        // With bias correction, the first Adam step is ~lr * sign(grad).
        let mut adam = AdamState::<f64>::new(1, 1);
        let mut params = [0.0];
        adam.update_row(0, &[0.5], &mut params, 0.01);
        assert!((params[0] + 0.01).abs() < 1e-6, "got {}", params[0]);
    }

    #[test]
    fn per_row_counters_are_independent() {
        let mut adam = AdamState::<f64>::new(2, 1);
        let mut a = [0.0];
        let mut b = [0.0];
        for _ in 0..3 {
            adam.update_row(0, &[1.0], &mut a, 0.01);
        }
        adam.update_row(1, &[1.0], &mut b, 0.01);
        assert_eq!(adam.step_count(0), 3);
        assert_eq!(adam.step_count(1), 1);
        // Row 1's single update matches row 0's first update exactly.
        assert!((b[0] + 0.01).abs() < 1e-6);
    }
}
