use alloc::vec;
use alloc::vec::Vec;

use super::cell::{CellRecord, LstmLayerParams};
use crate::numerics::{dot, RngStream};
use crate::preprocess::InputEncoding;
use crate::{Error, Result};

/// The trainable part of the update rule: two stacked LSTM layers and a
/// linear read-out from the second layer's hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmWeights {
    pub layer1: LstmLayerParams,
    pub layer2: LstmLayerParams,
    pub w_out: Vec<f64>,
    pub b_out: f64,
}

impl LstmWeights {
    pub fn zeros(in_dim: usize, n_hidden: usize) -> Self {
        Self {
            layer1: LstmLayerParams::zeros(in_dim, n_hidden),
            layer2: LstmLayerParams::zeros(n_hidden, n_hidden),
            w_out: vec![0.0; n_hidden],
            b_out: 0.0,
        }
    }

    /// Zeroed weights of the same shape.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.layer1.in_dim, self.n_hidden())
    }

    pub fn n_hidden(&self) -> usize {
        self.layer1.n_hidden
    }

    pub fn len(&self) -> usize {
        self.layer1.len() + self.layer2.len() + self.w_out.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Layer 1 (`w_x`, `w_h`, bias), layer 2, `w_out`, `b_out`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        self.layer1.extend_flat(&mut out);
        self.layer2.extend_flat(&mut out);
        out.extend_from_slice(&self.w_out);
        out.push(self.b_out);
        out
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.len() {
            return Err(Error::PayloadLength { expected: self.len(), found: flat.len() });
        }
        let rest = self.layer1.assign_flat(flat);
        let rest = self.layer2.assign_flat(rest);
        let (w_out, rest) = rest.split_at(self.w_out.len());
        self.w_out.copy_from_slice(w_out);
        self.b_out = rest[0];
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layer1.is_finite()
            && self.layer2.is_finite()
            && self.w_out.iter().all(|v| v.is_finite())
            && self.b_out.is_finite()
    }
}

/// A complete learned update rule `m(∇, state; φ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmOptimizerParams {
    pub weights: LstmWeights,
    /// Fixed multiplier on the read-out; not trained.
    pub output_scale: f64,
    pub encoding: InputEncoding,
}

impl LstmOptimizerParams {
    pub fn n_hidden(&self) -> usize {
        self.weights.n_hidden()
    }

    /// Panics if the first layer's width disagrees with the encoding.
    pub fn check(&self) {
        assert_eq!(
            self.weights.layer1.in_dim,
            self.encoding.channels(),
            "first layer width must match the input encoding"
        );
        assert_eq!(self.weights.layer2.in_dim, self.n_hidden());
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitConfig {
    pub n_hidden: usize,
    pub encoding: InputEncoding,
    pub init_std: f64,
    pub forget_bias: f64,
    pub output_scale: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self { n_hidden: 20, encoding: InputEncoding::raw(), init_std: 0.1, forget_bias: 1.0, output_scale: 1.0 }
    }
}

/// Gaussian LSTM weights with a zero read-out, so the initial rule emits no update.
pub fn init_optimizer_params(rng: &mut RngStream, cfg: InitConfig) -> LstmOptimizerParams {
    assert!(cfg.n_hidden >= 1);
    let channels = cfg.encoding.channels();
    let layer1 = LstmLayerParams::random(channels, cfg.n_hidden, cfg.init_std, cfg.forget_bias, rng);
    let layer2 = LstmLayerParams::random(cfg.n_hidden, cfg.n_hidden, cfg.init_std, cfg.forget_bias, rng);
    LstmOptimizerParams {
        weights: LstmWeights { layer1, layer2, w_out: vec![0.0; cfg.n_hidden], b_out: 0.0 },
        output_scale: cfg.output_scale,
        encoding: cfg.encoding,
    }
}

/// Hidden and cell state of both layers for every optimizee coordinate.
/// Each array holds `n_coords` blocks of `n_hidden` values.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateStateBank {
    n_hidden: usize,
    pub h1: Vec<f64>,
    pub c1: Vec<f64>,
    pub h2: Vec<f64>,
    pub c2: Vec<f64>,
}

impl CoordinateStateBank {
    pub fn zeros(n_coords: usize, n_hidden: usize) -> Self {
        let z = vec![0.0; n_coords * n_hidden];
        Self { n_hidden, h1: z.clone(), c1: z.clone(), h2: z.clone(), c2: z }
    }

    pub fn len(&self) -> usize {
        self.h1.len() / self.n_hidden
    }

    pub fn is_empty(&self) -> bool {
        self.h1.is_empty()
    }

    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }

    /// Bank whose coordinate `i` is this bank's coordinate `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        self.gather(perm)
    }

    /// Bank of the listed coordinates, in order.
    pub fn gather(&self, indices: &[usize]) -> Self {
        let hd = self.n_hidden;
        let pick = |src: &[f64]| -> Vec<f64> {
            indices.iter().flat_map(|&k| src[k * hd..(k + 1) * hd].iter().copied()).collect()
        };
        Self { n_hidden: hd, h1: pick(&self.h1), c1: pick(&self.c1), h2: pick(&self.h2), c2: pick(&self.c2) }
    }

    pub fn is_finite(&self) -> bool {
        self.h1.iter().chain(&self.c1).chain(&self.h2).chain(&self.c2).all(|v| v.is_finite())
    }
}

/// Per-coordinate forward records of one layer over one optimizer step.
#[derive(Debug, Clone)]
pub(crate) struct LayerTape {
    in_dim: usize,
    n_hidden: usize,
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub gates: Vec<f64>,
    pub c_new: Vec<f64>,
    pub h_new: Vec<f64>,
}

impl LayerTape {
    pub fn new(n_coords: usize, in_dim: usize, n_hidden: usize) -> Self {
        let hidden = vec![0.0; n_coords * n_hidden];
        Self {
            in_dim,
            n_hidden,
            x: vec![0.0; n_coords * in_dim],
            h_prev: hidden.clone(),
            c_prev: hidden.clone(),
            gates: vec![0.0; 4 * n_coords * n_hidden],
            c_new: hidden.clone(),
            h_new: hidden,
        }
    }

    pub fn record(&self, k: usize) -> CellRecord<'_> {
        let (nx, hd) = (self.in_dim, self.n_hidden);
        CellRecord {
            x: &self.x[k * nx..(k + 1) * nx],
            h_prev: &self.h_prev[k * hd..(k + 1) * hd],
            c_prev: &self.c_prev[k * hd..(k + 1) * hd],
            gates: &self.gates[4 * k * hd..4 * (k + 1) * hd],
            c_new: &self.c_new[k * hd..(k + 1) * hd],
        }
    }

    pub fn x_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.x[k * self.in_dim..(k + 1) * self.in_dim]
    }

    /// Runs `layer` for slot `k` of the tape, reading the previous state from
    /// `h`/`c` and writing the new state back into them.
    pub fn run(&mut self, layer: &LstmLayerParams, k: usize, h: &mut [f64], c: &mut [f64]) {
        let (nx, hd) = (self.in_dim, self.n_hidden);
        let hs = k * hd..(k + 1) * hd;
        self.h_prev[hs.clone()].copy_from_slice(h);
        self.c_prev[hs.clone()].copy_from_slice(c);
        layer.forward_into(
            &self.x[k * nx..(k + 1) * nx],
            &self.h_prev[hs.clone()],
            &self.c_prev[hs.clone()],
            &mut self.gates[4 * k * hd..4 * (k + 1) * hd],
            &mut self.c_new[hs.clone()],
            &mut self.h_new[hs.clone()],
        );
        h.copy_from_slice(&self.h_new[hs.clone()]);
        c.copy_from_slice(&self.c_new[hs]);
    }
}

/// Forward records of both layers for one optimizer step.
#[derive(Debug, Clone)]
pub(crate) struct StepTape {
    pub layer1: LayerTape,
    pub layer2: LayerTape,
}

impl StepTape {
    pub fn new(n_coords: usize, params: &LstmOptimizerParams) -> Self {
        let hd = params.n_hidden();
        Self {
            layer1: LayerTape::new(n_coords, params.weights.layer1.in_dim, hd),
            layer2: LayerTape::new(n_coords, hd, hd),
        }
    }
}

/// Hook run on a whole layer's fresh hidden states (`n × H`) before they are
/// consumed; used for cross-coordinate averaging.
pub(crate) type LayerHook<'a> = &'a mut dyn FnMut(usize, &mut [f64]);

/// Shared implementation of the coordinatewise step: layer 1 for every
/// coordinate, then layer 2, then the read-out.
///
/// `extra_inputs` supplies the first-layer channels beyond the encoded
/// gradient, `in_dim - channels` values per coordinate.
pub(crate) fn step_layers(
    params: &LstmOptimizerParams,
    grad: &[f64],
    bank: &mut CoordinateStateBank,
    tape: &mut StepTape,
    hook: Option<LayerHook<'_>>,
    extra_inputs: Option<&[f64]>,
) -> Vec<f64> {
    let n = grad.len();
    assert_eq!(bank.len(), n, "state bank does not match gradient dimension");
    let hd = params.n_hidden();
    let w = &params.weights;
    let channels = params.encoding.channels();
    let full = tape.layer1.x.len() / w.layer1.in_dim == n;
    let slot = |k: usize| if full { k } else { 0 };

    let mut hook = hook;
    for k in 0..n {
        let x = tape.layer1.x_mut(slot(k));
        params.encoding.encode_into(grad[k], &mut x[..channels]);
        if let Some(extra) = extra_inputs {
            let e = x.len() - channels;
            x[channels..].copy_from_slice(&extra[k * e..(k + 1) * e]);
        }
        tape.layer1.run(&w.layer1, slot(k), &mut bank.h1[k * hd..(k + 1) * hd], &mut bank.c1[k * hd..(k + 1) * hd]);
    }
    if let Some(h) = hook.as_mut() {
        h(0, &mut bank.h1);
    }
    for k in 0..n {
        tape.layer2.x_mut(slot(k)).copy_from_slice(&bank.h1[k * hd..(k + 1) * hd]);
        tape.layer2.run(&w.layer2, slot(k), &mut bank.h2[k * hd..(k + 1) * hd], &mut bank.c2[k * hd..(k + 1) * hd]);
    }
    if let Some(h) = hook.as_mut() {
        h(1, &mut bank.h2);
    }
    (0..n).map(|k| params.output_scale * (dot(&w.w_out, &bank.h2[k * hd..(k + 1) * hd]) + w.b_out)).collect()
}

/// One coordinatewise step: returns the update `g_t` and advances `bank`.
pub fn optimizer_step(params: &LstmOptimizerParams, grad: &[f64], bank: &mut CoordinateStateBank) -> Vec<f64> {
    params.check();
    let mut scratch = StepTape::new(1, params);
    step_layers(params, grad, bank, &mut scratch, None, None)
}
