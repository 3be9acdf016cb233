use alloc::vec::Vec;

use crate::numerics::{dot, sample_gaussian, Matrix, RngStream};

/// `f(θ) = ‖Wθ − y‖²`
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticInstance {
    w: Matrix,
    y: Vec<f64>,
}

impl QuadraticInstance {
    /// Panics unless `w` is square and matches `y`.
    pub fn new(w: Matrix, y: Vec<f64>) -> Self {
        assert_eq!(w.rows(), w.cols(), "quadratic needs a square W");
        assert_eq!(w.rows(), y.len(), "W and y disagree on dimension");
        Self { w, y }
    }

    /// `W` and `y` with IID standard normal entries, `W` drawn first.
    pub fn sample(dim: usize, rng: &mut RngStream) -> Self {
        assert!(dim >= 1);
        let w = sample_gaussian(rng, dim, dim);
        let y = rng.normal_vec(dim, 1.0);
        Self { w, y }
    }

    /// `W = I` with Gaussian `y`; every coordinate contracts independently under SGD.
    pub fn sample_identity(dim: usize, rng: &mut RngStream) -> Self {
        assert!(dim >= 1);
        let y = rng.normal_vec(dim, 1.0);
        Self { w: Matrix::identity(dim), y }
    }

    pub fn dim(&self) -> usize {
        self.y.len()
    }

    pub fn w(&self) -> &Matrix {
        &self.w
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    fn residual(&self, theta: &[f64]) -> Vec<f64> {
        assert_eq!(theta.len(), self.dim(), "θ has the wrong dimension");
        let mut r = self.w.matvec(theta);
        for (ri, yi) in r.iter_mut().zip(&self.y) {
            *ri -= yi;
        }
        r
    }

    pub fn eval(&self, theta: &[f64]) -> f64 {
        let r = self.residual(theta);
        dot(&r, &r)
    }

    /// `2 Wᵀ (Wθ − y)`
    pub fn grad(&self, theta: &[f64]) -> Vec<f64> {
        self.loss_and_grad(theta).1
    }

    pub fn loss_and_grad(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let r = self.residual(theta);
        let mut g = self.w.matvec_transpose(&r);
        for v in &mut g {
            *v *= 2.0;
        }
        (dot(&r, &r), g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn shapes_and_determinism() {
        let a = QuadraticInstance::sample(10, &mut RngStream::new(1));
        assert_eq!((a.w().rows(), a.w().cols(), a.y().len()), (10, 10, 10));
        assert_eq!(a, QuadraticInstance::sample(10, &mut RngStream::new(1)));

        let s = QuadraticInstance::sample(1, &mut RngStream::new(2));
        let theta = [0.3];
        let r = s.w().get(0, 0) * 0.3 - s.y()[0];
        assert_eq!(s.eval(&theta), r * r);
    }

    #[test]
    fn identity_values() {
        let q = QuadraticInstance::new(Matrix::identity(10), vec![0.0; 10]);
        assert_eq!(q.eval(&[1.0; 10]), 10.0);
        let theta: Vec<f64> = (0..10).map(|i| i as f64 - 4.5).collect();
        let expected: Vec<f64> = theta.iter().map(|t| 2.0 * t).collect();
        assert_eq!(q.grad(&theta), expected);
    }

    #[test]
    fn minimizer_has_zero_loss_and_gradient() {
        let w = Matrix::from_vec(2, 2, vec![2.0, 1.0, 0.0, 4.0]);
        let theta = [1.0, -0.5];
        let y = w.matvec(&theta);
        let q = QuadraticInstance::new(w, y);
        assert_eq!(q.eval(&theta), 0.0);
        assert_eq!(q.grad(&theta), vec![0.0, 0.0]);
    }

    #[test]
    #[should_panic(expected = "wrong dimension")]
    fn dimension_mismatch_panics() {
        QuadraticInstance::sample(3, &mut RngStream::new(0)).eval(&[1.0, 2.0]);
    }
}
