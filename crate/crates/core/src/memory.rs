//! Cross-coordinate communication: global averaging cells and an external
//! matrix memory with matrix-vector reads and low-rank writes.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::lstm::{step_layers, CoordinateStateBank, LstmLayerParams, LstmOptimizerParams, LstmWeights, StepTape};
use crate::numerics::{dot, sigmoid, Matrix, RngStream};
use crate::preprocess::InputEncoding;

/// Hidden-cell indices whose outgoing activation is averaged across coordinates.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GacSpec {
    pub layer1: Vec<usize>,
    pub layer2: Vec<usize>,
}

impl GacSpec {
    pub fn none() -> Self {
        Self::default()
    }

    /// The first `count` cells of both layers.
    pub fn leading(count: usize) -> Self {
        Self { layer1: (0..count).collect(), layer2: (0..count).collect() }
    }

    pub fn cells(&self, layer: usize) -> &[usize] {
        if layer == 0 {
            &self.layer1
        } else {
            &self.layer2
        }
    }

    pub fn validate(&self, n_hidden: usize) -> bool {
        self.layer1.iter().chain(&self.layer2).all(|&j| j < n_hidden)
    }
}

/// Replaces each designated cell of every coordinate by its mean over
/// coordinates. `activations` holds one `n_hidden` block per coordinate.
///
/// The mean is accumulated in coordinate order as an offset from the first
/// coordinate, so cells that already agree are left bit-for-bit unchanged.
pub fn gac_average(activations: &mut [f64], n_hidden: usize, cells: &[usize]) {
    let n = activations.len() / n_hidden;
    assert!(n >= 1, "averaging needs at least one coordinate");
    for &j in cells {
        let anchor = activations[j];
        let offset: f64 = (0..n).map(|k| activations[k * n_hidden + j] - anchor).sum();
        let mean = anchor + offset / n as f64;
        for k in 0..n {
            activations[k * n_hidden + j] = mean;
        }
    }
}

/// LSTM+GAC: the plain coordinatewise rule with averaging after each layer.
#[derive(Debug, Clone, PartialEq)]
pub struct GacOptimizer {
    pub params: LstmOptimizerParams,
    pub gac: GacSpec,
}

impl GacOptimizer {
    pub fn step(&self, grad: &[f64], bank: &mut CoordinateStateBank) -> Vec<f64> {
        self.params.check();
        assert!(self.gac.validate(self.params.n_hidden()), "GAC cell index out of range");
        let hd = self.params.n_hidden();
        let mut hook = |layer: usize, h: &mut [f64]| gac_average(h, hd, self.gac.cells(layer));
        let mut scratch = StepTape::new(1, &self.params);
        step_layers(&self.params, grad, bank, &mut scratch, Some(&mut hook), None)
    }
}

/// Shared memory over the optimizee coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum ExternalMemory {
    Dense(Matrix),
    /// `M = γI + Σ a bᵀ` over at most `capacity` most recent write pairs.
    History {
        dim: usize,
        base_scale: f64,
        capacity: usize,
        pairs: VecDeque<(Vec<f64>, Vec<f64>)>,
    },
}

impl ExternalMemory {
    pub fn dense(dim: usize, base_scale: f64) -> Self {
        Self::Dense(Matrix::scaled_identity(dim, base_scale))
    }

    pub fn history(dim: usize, base_scale: f64, capacity: usize) -> Self {
        Self::History { dim, base_scale, capacity, pairs: VecDeque::with_capacity(capacity) }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Dense(m) => m.rows(),
            Self::History { dim, .. } => *dim,
        }
    }

    /// Materializes `M`.
    pub fn to_dense(&self) -> Matrix {
        match self {
            Self::Dense(m) => m.clone(),
            Self::History { dim, base_scale, pairs, .. } => {
                let mut m = Matrix::scaled_identity(*dim, *base_scale);
                for (a, b) in pairs {
                    m.add_outer(1.0, a, b);
                }
                m
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Self::Dense(m) => m.is_finite(),
            Self::History { pairs, .. } => pairs.iter().all(|(a, b)| a.iter().chain(b).all(|v| v.is_finite())),
        }
    }
}

/// `M r`
pub fn ntm_read(memory: &ExternalMemory, r: &[f64]) -> Vec<f64> {
    assert_eq!(r.len(), memory.dim(), "read vector does not match memory");
    match memory {
        ExternalMemory::Dense(m) => m.matvec(r),
        ExternalMemory::History { base_scale, pairs, .. } => {
            let mut out: Vec<f64> = r.iter().map(|v| base_scale * v).collect();
            for (a, b) in pairs {
                let weight = dot(b, r);
                for (o, ai) in out.iter_mut().zip(a) {
                    *o += ai * weight;
                }
            }
            out
        }
    }
}

/// One write head's left and right vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct WriteHead {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

/// Per-coordinate head components assembled into full vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutputs {
    pub reads: Vec<Vec<f64>>,
    pub writes: Vec<WriteHead>,
}

/// `M += Σ a bᵀ`; history memories append and evict the oldest pairs.
pub fn ntm_write(memory: &mut ExternalMemory, writes: &[WriteHead]) {
    let n = memory.dim();
    for head in writes {
        assert!(head.a.len() == n && head.b.len() == n, "write vectors do not match memory");
    }
    match memory {
        ExternalMemory::Dense(m) => {
            for head in writes {
                m.add_outer(1.0, &head.a, &head.b);
            }
        }
        ExternalMemory::History { capacity, pairs, .. } => {
            for head in writes {
                if *capacity == 0 {
                    break;
                }
                if pairs.len() == *capacity {
                    pairs.pop_front();
                }
                pairs.push_back((head.a.clone(), head.b.clone()));
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MemoryMode {
    Dense { base_scale: f64 },
    History { base_scale: f64, history_len: usize },
}

impl MemoryMode {
    pub fn allocate(&self, dim: usize) -> ExternalMemory {
        match *self {
            Self::Dense { base_scale } => ExternalMemory::dense(dim, base_scale),
            Self::History { base_scale, history_len } => ExternalMemory::history(dim, base_scale, history_len),
        }
    }
}

/// NTM-BFGS: a coordinatewise LSTM+GAC controller whose read-out is split
/// into an update, a read gate, read-head and write-head components.
///
/// Read-out rows are ordered `[update, gate, r_1..r_R, a_1, b_1, .., a_W, b_W]`.
/// The first controller layer consumes the encoded gradient followed by the
/// previous step's `R` read results for that coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct NtmOptimizer {
    pub controller: LstmOptimizerParams,
    pub gac: GacSpec,
    pub read_heads: usize,
    pub write_heads: usize,
    /// `(2 + R + 2W) × H`, row-major.
    pub head_weights: Vec<f64>,
    pub head_bias: Vec<f64>,
    pub memory: MemoryMode,
}

impl NtmOptimizer {
    pub const DEFAULT_READ_HEADS: usize = 1;
    pub const DEFAULT_WRITE_HEADS: usize = 3;

    pub fn head_rows(read_heads: usize, write_heads: usize) -> usize {
        2 + read_heads + 2 * write_heads
    }

    /// Random controller weights and zero head projections.
    pub fn init(
        rng: &mut RngStream,
        n_hidden: usize,
        encoding: InputEncoding,
        init_std: f64,
        gac: GacSpec,
        memory: MemoryMode,
    ) -> Self {
        let (reads, writes) = (Self::DEFAULT_READ_HEADS, Self::DEFAULT_WRITE_HEADS);
        let in_dim = encoding.channels() + reads;
        let layer1 = LstmLayerParams::random(in_dim, n_hidden, init_std, 1.0, rng);
        let layer2 = LstmLayerParams::random(n_hidden, n_hidden, init_std, 1.0, rng);
        let rows = Self::head_rows(reads, writes);
        Self {
            controller: LstmOptimizerParams {
                weights: LstmWeights { layer1, layer2, w_out: vec![0.0; n_hidden], b_out: 0.0 },
                output_scale: 1.0,
                encoding,
            },
            gac,
            read_heads: reads,
            write_heads: writes,
            head_weights: vec![0.0; rows * n_hidden],
            head_bias: vec![0.0; rows],
            memory,
        }
    }

    pub fn n_hidden(&self) -> usize {
        self.controller.n_hidden()
    }

    pub fn start(&self, dim: usize) -> NtmRun {
        NtmRun {
            bank: CoordinateStateBank::zeros(dim, self.n_hidden()),
            memory: self.memory.allocate(dim),
            read_feedback: vec![0.0; dim * self.read_heads],
        }
    }

    /// Trainable values in a fixed order: controller weights, head weights, head bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.controller.weights.flatten();
        out.extend_from_slice(&self.head_weights);
        out.extend_from_slice(&self.head_bias);
        out
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> crate::Result<()> {
        let lw = self.controller.weights.len();
        let expected = lw + self.head_weights.len() + self.head_bias.len();
        if flat.len() != expected {
            return Err(crate::Error::PayloadLength { expected, found: flat.len() });
        }
        self.controller.weights.assign_flat(&flat[..lw])?;
        let (hw, hb) = flat[lw..].split_at(self.head_weights.len());
        self.head_weights.copy_from_slice(hw);
        self.head_bias.copy_from_slice(hb);
        Ok(())
    }
}

/// Per-episode state of an [`NtmOptimizer`].
#[derive(Debug, Clone, PartialEq)]
pub struct NtmRun {
    pub bank: CoordinateStateBank,
    pub memory: ExternalMemory,
    /// Previous read results, `R` per coordinate.
    pub read_feedback: Vec<f64>,
}

/// One NTM-BFGS step: controller, read, update, write. Returns `g_t`.
pub fn ntm_bfgs_step(opt: &NtmOptimizer, grad: &[f64], run: &mut NtmRun) -> Vec<f64> {
    let n = grad.len();
    let hd = opt.n_hidden();
    let (reads, writes) = (opt.read_heads, opt.write_heads);
    let rows = NtmOptimizer::head_rows(reads, writes);
    assert_eq!(run.memory.dim(), n, "memory does not match the optimizee");
    assert_eq!(opt.controller.weights.layer1.in_dim, opt.controller.encoding.channels() + reads);
    assert!(opt.gac.validate(hd), "GAC cell index out of range");

    let mut hook = |layer: usize, h: &mut [f64]| gac_average(h, hd, opt.gac.cells(layer));
    let mut scratch = StepTape::new(1, &opt.controller);
    let feedback = core::mem::take(&mut run.read_feedback);
    step_layers(&opt.controller, grad, &mut run.bank, &mut scratch, Some(&mut hook), Some(&feedback));

    // per-coordinate head components, `rows` per coordinate
    let mut heads = vec![0.0; n * rows];
    for k in 0..n {
        let h = &run.bank.h2[k * hd..(k + 1) * hd];
        for r in 0..rows {
            heads[k * rows + r] = dot(&opt.head_weights[r * hd..(r + 1) * hd], h) + opt.head_bias[r];
        }
    }
    let column = |r: usize| -> Vec<f64> { (0..n).map(|k| heads[k * rows + r]).collect() };

    let mut read_total = vec![0.0; n];
    let mut feedback = vec![0.0; n * reads];
    for head in 0..reads {
        let result = ntm_read(&run.memory, &column(2 + head));
        for k in 0..n {
            read_total[k] += result[k];
            feedback[k * reads + head] = result[k];
        }
    }
    run.read_feedback = feedback;

    let update: Vec<f64> = (0..n)
        .map(|k| {
            let own = heads[k * rows];
            let gate = sigmoid(heads[k * rows + 1]);
            opt.controller.output_scale * (own + gate * read_total[k])
        })
        .collect();

    let write_heads: Vec<WriteHead> =
        (0..writes).map(|w| WriteHead { a: column(2 + reads + 2 * w), b: column(3 + reads + 2 * w) }).collect();
    ntm_write(&mut run.memory, &write_heads);
    update
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn averaging_examples() {
        let mut same = vec![0.3, 1.0, 0.3, 1.0, 0.3, 1.0];
        let before = same.clone();
        gac_average(&mut same, 2, &[0, 1]);
        assert_eq!(same, before);

        let mut pair = vec![0.0, 5.0, 2.0, 7.0];
        gac_average(&mut pair, 2, &[0]);
        assert_eq!(pair, vec![1.0, 5.0, 1.0, 7.0]);

        let mut untouched = vec![1.0, 2.0, 3.0, 4.0];
        gac_average(&mut untouched, 2, &[]);
        assert_eq!(untouched, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn read_examples() {
        let r = [1.0, -2.0, 0.5];
        assert_eq!(ntm_read(&ExternalMemory::dense(3, 1.0), &r), r.to_vec());
        assert_eq!(ntm_read(&ExternalMemory::dense(3, 0.0), &r), vec![0.0; 3]);
    }

    #[test]
    fn zero_left_vectors_leave_memory() {
        let mut m = ExternalMemory::dense(2, 0.5);
        let before = m.clone();
        ntm_write(&mut m, &[WriteHead { a: vec![0.0; 2], b: vec![3.0, 1.0] }]);
        assert_eq!(m, before);
    }

    #[test]
    fn history_evicts_oldest() {
        let mut m = ExternalMemory::history(2, 0.0, 2);
        for i in 0..3 {
            ntm_write(&mut m, &[WriteHead { a: vec![i as f64, 0.0], b: vec![1.0, 0.0] }]);
        }
        match &m {
            ExternalMemory::History { pairs, .. } => {
                assert_eq!(pairs.len(), 2);
                assert_eq!(pairs[0].0[0], 1.0);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn zero_heads_emit_nothing_and_keep_memory() {
        let opt = NtmOptimizer::init(
            &mut RngStream::new(1),
            6,
            InputEncoding::log_sign(),
            0.3,
            GacSpec::leading(2),
            MemoryMode::Dense { base_scale: 0.0 },
        );
        let mut run = opt.start(4);
        for t in 0..3 {
            let g = ntm_bfgs_step(&opt, &[1.0, -0.5, t as f64, 0.01], &mut run);
            assert_eq!(g, vec![0.0; 4]);
            assert_eq!(run.memory, ExternalMemory::dense(4, 0.0));
        }
    }
}
