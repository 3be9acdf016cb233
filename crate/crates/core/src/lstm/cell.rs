use alloc::vec;
use alloc::vec::Vec;

use crate::numerics::{axpy, dot, sigmoid, RngStream};

/// One forget-gate LSTM layer without peepholes.
///
/// Gate rows are stacked in the order input, forget, output, candidate; each
/// block has `n_hidden` rows. `w_x` is `4H × in_dim` and `w_h` is `4H × H`,
/// both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    pub in_dim: usize,
    pub n_hidden: usize,
    pub w_x: Vec<f64>,
    pub w_h: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LstmLayerParams {
    pub fn zeros(in_dim: usize, n_hidden: usize) -> Self {
        Self {
            in_dim,
            n_hidden,
            w_x: vec![0.0; 4 * n_hidden * in_dim],
            w_h: vec![0.0; 4 * n_hidden * n_hidden],
            bias: vec![0.0; 4 * n_hidden],
        }
    }

    /// Gaussian weights with standard deviation `std`, zero biases except the
    /// forget gate, which starts at `forget_bias`.
    pub fn random(in_dim: usize, n_hidden: usize, std: f64, forget_bias: f64, rng: &mut RngStream) -> Self {
        let mut layer = Self::zeros(in_dim, n_hidden);
        layer.w_x.iter_mut().for_each(|w| *w = std * rng.normal());
        layer.w_h.iter_mut().for_each(|w| *w = std * rng.normal());
        layer.bias[n_hidden..2 * n_hidden].iter_mut().for_each(|b| *b = forget_bias);
        layer
    }

    pub fn len(&self) -> usize {
        self.w_x.len() + self.w_h.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn extend_flat(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.w_x);
        out.extend_from_slice(&self.w_h);
        out.extend_from_slice(&self.bias);
    }

    /// Overwrites the weights from the front of `flat`; returns the rest.
    pub(crate) fn assign_flat<'a>(&mut self, flat: &'a [f64]) -> &'a [f64] {
        let (wx, rest) = flat.split_at(self.w_x.len());
        let (wh, rest) = rest.split_at(self.w_h.len());
        let (b, rest) = rest.split_at(self.bias.len());
        self.w_x.copy_from_slice(wx);
        self.w_h.copy_from_slice(wh);
        self.bias.copy_from_slice(b);
        rest
    }

    pub fn is_finite(&self) -> bool {
        self.w_x.iter().chain(&self.w_h).chain(&self.bias).all(|v| v.is_finite())
    }

    /// Forward pass into caller-provided buffers. `gates` receives the
    /// activated gate values (length `4H`).
    #[inline]
    pub(crate) fn forward_into(
        &self,
        x: &[f64],
        h: &[f64],
        c: &[f64],
        gates: &mut [f64],
        c_out: &mut [f64],
        h_out: &mut [f64],
    ) {
        let hd = self.n_hidden;
        let nx = self.in_dim;
        debug_assert_eq!(x.len(), nx);
        debug_assert_eq!(h.len(), hd);
        for r in 0..4 * hd {
            let z = self.bias[r] + dot(&self.w_x[r * nx..(r + 1) * nx], x) + dot(&self.w_h[r * hd..(r + 1) * hd], h);
            gates[r] = if r < 3 * hd { sigmoid(z) } else { libm::tanh(z) };
        }
        for j in 0..hd {
            let (i, f, o, g) = (gates[j], gates[hd + j], gates[2 * hd + j], gates[3 * hd + j]);
            c_out[j] = f * c[j] + i * g;
            h_out[j] = o * libm::tanh(c_out[j]);
        }
    }

    /// Reverse pass of [`forward_into`](Self::forward_into).
    ///
    /// `dh` and `dc` are the adjoints of the produced `h'` and `c'`. Weight
    /// gradients are accumulated into `grads`; `dx`, `dh_prev` and `dc_prev`
    /// are overwritten. `dz` is scratch of length `4H`.
    #[inline]
    pub(crate) fn backward(
        &self,
        rec: CellRecord<'_>,
        dh: &[f64],
        dc: &[f64],
        grads: &mut LstmLayerParams,
        dz: &mut [f64],
        dx: &mut [f64],
        dh_prev: &mut [f64],
        dc_prev: &mut [f64],
    ) {
        let hd = self.n_hidden;
        let nx = self.in_dim;
        let gates = rec.gates;
        for j in 0..hd {
            let (i, f, o, g) = (gates[j], gates[hd + j], gates[2 * hd + j], gates[3 * hd + j]);
            let tc = libm::tanh(rec.c_new[j]);
            let dc_total = dc[j] + dh[j] * o * (1.0 - tc * tc);
            dz[j] = dc_total * g * i * (1.0 - i);
            dz[hd + j] = dc_total * rec.c_prev[j] * f * (1.0 - f);
            dz[2 * hd + j] = dh[j] * tc * o * (1.0 - o);
            dz[3 * hd + j] = dc_total * i * (1.0 - g * g);
            dc_prev[j] = dc_total * f;
        }
        dx.iter_mut().for_each(|v| *v = 0.0);
        dh_prev.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..4 * hd {
            let d = dz[r];
            if d == 0.0 {
                continue;
            }
            axpy(d, rec.x, &mut grads.w_x[r * nx..(r + 1) * nx]);
            axpy(d, rec.h_prev, &mut grads.w_h[r * hd..(r + 1) * hd]);
            grads.bias[r] += d;
            axpy(d, &self.w_x[r * nx..(r + 1) * nx], dx);
            axpy(d, &self.w_h[r * hd..(r + 1) * hd], dh_prev);
        }
    }
}

/// Values saved by one forward call, needed by the reverse pass.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CellRecord<'a> {
    pub x: &'a [f64],
    pub h_prev: &'a [f64],
    pub c_prev: &'a [f64],
    pub gates: &'a [f64],
    pub c_new: &'a [f64],
}

/// `(h', c')` for one cell step.
pub fn lstm_cell_forward(layer: &LstmLayerParams, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(x.len(), layer.in_dim, "input width mismatch");
    assert_eq!(h.len(), layer.n_hidden, "hidden width mismatch");
    assert_eq!(c.len(), layer.n_hidden, "cell width mismatch");
    let hd = layer.n_hidden;
    let mut gates = vec![0.0; 4 * hd];
    let mut c_out = vec![0.0; hd];
    let mut h_out = vec![0.0; hd];
    layer.forward_into(x, h, c, &mut gates, &mut c_out, &mut h_out);
    (h_out, c_out)
}

/// Gradients of `uᵀh' + vᵀc'` for one cell step, in the same shapes as the inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGradients {
    pub params: LstmLayerParams,
    pub x: Vec<f64>,
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

/// Reverse-mode derivatives of one cell step against output adjoints `dh`, `dc`.
pub fn lstm_cell_backward(
    layer: &LstmLayerParams,
    x: &[f64],
    h: &[f64],
    c: &[f64],
    dh: &[f64],
    dc: &[f64],
) -> CellGradients {
    let hd = layer.n_hidden;
    let mut gates = vec![0.0; 4 * hd];
    let mut c_new = vec![0.0; hd];
    let mut h_new = vec![0.0; hd];
    layer.forward_into(x, h, c, &mut gates, &mut c_new, &mut h_new);
    let mut out = CellGradients {
        params: LstmLayerParams::zeros(layer.in_dim, hd),
        x: vec![0.0; layer.in_dim],
        h: vec![0.0; hd],
        c: vec![0.0; hd],
    };
    let mut dz = vec![0.0; 4 * hd];
    let rec = CellRecord { x, h_prev: h, c_prev: c, gates: &gates, c_new: &c_new };
    layer.backward(rec, dh, dc, &mut out.params, &mut dz, &mut out.x, &mut out.h, &mut out.c);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_params_zero_state() {
        let layer = LstmLayerParams::zeros(2, 3);
        let (h, c) = lstm_cell_forward(&layer, &[0.7, -4.0], &[0.0; 3], &[0.0; 3]);
        assert_eq!(h, vec![0.0; 3]);
        assert_eq!(c, vec![0.0; 3]);
    }

    #[test]
    fn zero_params_halve_the_cell() {
        let layer = LstmLayerParams::zeros(1, 1);
        let (h, c) = lstm_cell_forward(&layer, &[3.0], &[0.0], &[2.0]);
        assert_eq!(c, vec![1.0]);
        assert!((h[0] - 0.5 * libm::tanh(1.0)).abs() < 1e-15);
        assert!((h[0] - 0.380797).abs() < 1e-6);
    }

    #[test]
    fn forget_bias_initialization() {
        let layer = LstmLayerParams::random(2, 4, 0.1, 1.0, &mut RngStream::new(3));
        assert_eq!(&layer.bias[4..8], &[1.0; 4]);
        assert!(layer.bias[..4].iter().chain(&layer.bias[8..]).all(|&b| b == 0.0));
        assert_eq!(layer.w_x.len(), 4 * 4 * 2);
    }

    #[test]
    fn flat_round_trip() {
        let layer = LstmLayerParams::random(2, 3, 0.5, 1.0, &mut RngStream::new(1));
        let mut flat = Vec::new();
        layer.extend_flat(&mut flat);
        assert_eq!(flat.len(), layer.len());
        let mut other = LstmLayerParams::zeros(2, 3);
        assert!(other.assign_flat(&flat).is_empty());
        assert_eq!(other, layer);
    }
}
