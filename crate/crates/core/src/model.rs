//! Selector / encoder / decoder network.
//!
//! A bidirectional LSTM selector scores every frame, the fused selection
//! scores scale the frame features, a bidirectional LSTM encoder compresses
//! the weighted sequence into a fixed `1 x 2H` code, and a bidirectional LSTM
//! decoder fed the replicated code reconstructs the `N x D` features.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numgrad::{Graph, Matrix, NodeId};
use crate::selection::{FusionConfig, ScoreKind, ScoreVector};

pub const DEFAULT_HIDDEN: usize = 128;
pub const FORGET_BIAS: f64 = 1.0;

/// Per-frame deep features, one row per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    features: Matrix,
    fps: f64,
    source_id: String,
}

impl FeatureSequence {
    pub fn new(features: Matrix, fps: f64, source_id: impl Into<String>) -> Result<Self> {
        if features.rows() == 0 || features.cols() == 0 {
            return Err(Error::input(format!(
                "feature sequence must be at least 1x1, got {:?}",
                features.shape()
            )));
        }
        if !features.is_finite() {
            return Err(Error::input("feature sequence contains non-finite values"));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::input(format!("fps must be positive, got {fps}")));
        }
        Ok(FeatureSequence {
            features,
            fps,
            source_id: source_id.into(),
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn frames(&self) -> usize {
        self.features.rows()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn duration_seconds(&self) -> f64 {
        self.frames() as f64 / self.fps
    }
}

/// One LSTM direction. Gate columns are ordered input, forget, candidate, output.
#[derive(Clone, Debug, PartialEq)]
pub struct Lstm<T> {
    /// `In x 4H`
    pub w_input: T,
    /// `H x 4H`
    pub w_hidden: T,
    /// `1 x 4H`
    pub bias: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiLstm<T> {
    pub forward: Lstm<T>,
    pub backward: Lstm<T>,
}

/// Affine projection applied row-wise.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub weight: T,
    pub bias: T,
}

/// Names of the tensors returned by [`Network::tensors`], in order.
pub const TENSOR_NAMES: [&str; 22] = [
    "selector.forward.w_input",
    "selector.forward.w_hidden",
    "selector.forward.bias",
    "selector.backward.w_input",
    "selector.backward.w_hidden",
    "selector.backward.bias",
    "importance_head.weight",
    "importance_head.bias",
    "encoder.forward.w_input",
    "encoder.forward.w_hidden",
    "encoder.forward.bias",
    "encoder.backward.w_input",
    "encoder.backward.w_hidden",
    "encoder.backward.bias",
    "decoder.forward.w_input",
    "decoder.forward.w_hidden",
    "decoder.forward.bias",
    "decoder.backward.w_input",
    "decoder.backward.w_hidden",
    "decoder.backward.bias",
    "output_head.weight",
    "output_head.bias",
];

/// The full network, generic over the tensor handle so the same layout
/// serves stored weights (`Matrix`) and graph-bound weights (`NodeId`).
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    pub selector: BiLstm<T>,
    pub importance_head: Dense<T>,
    pub encoder: BiLstm<T>,
    pub decoder: BiLstm<T>,
    pub output_head: Dense<T>,
}

impl<T> Lstm<T> {
    fn tensors(&self) -> [&T; 3] {
        [&self.w_input, &self.w_hidden, &self.bias]
    }

    fn tensors_mut(&mut self) -> [&mut T; 3] {
        [&mut self.w_input, &mut self.w_hidden, &mut self.bias]
    }

    fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> Lstm<U> {
        Lstm {
            w_input: f(&self.w_input),
            w_hidden: f(&self.w_hidden),
            bias: f(&self.bias),
        }
    }
}

impl<T> BiLstm<T> {
    fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> BiLstm<U> {
        BiLstm {
            forward: self.forward.map(f),
            backward: self.backward.map(f),
        }
    }
}

impl<T> Dense<T> {
    fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> Dense<U> {
        Dense {
            weight: f(&self.weight),
            bias: f(&self.bias),
        }
    }
}

impl<T> Network<T> {
    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> Network<U> {
        Network {
            selector: self.selector.map(&mut f),
            importance_head: self.importance_head.map(&mut f),
            encoder: self.encoder.map(&mut f),
            decoder: self.decoder.map(&mut f),
            output_head: self.output_head.map(&mut f),
        }
    }

    /// Every tensor in a fixed canonical order (used by the optimizer and
    /// the checkpoint format).
    pub fn tensors(&self) -> Vec<&T> {
        let mut out = Vec::with_capacity(22);
        out.extend(self.selector.forward.tensors());
        out.extend(self.selector.backward.tensors());
        out.extend([&self.importance_head.weight, &self.importance_head.bias]);
        out.extend(self.encoder.forward.tensors());
        out.extend(self.encoder.backward.tensors());
        out.extend(self.decoder.forward.tensors());
        out.extend(self.decoder.backward.tensors());
        out.extend([&self.output_head.weight, &self.output_head.bias]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut T> {
        let mut out = Vec::with_capacity(22);
        out.extend(self.selector.forward.tensors_mut());
        out.extend(self.selector.backward.tensors_mut());
        out.extend([&mut self.importance_head.weight, &mut self.importance_head.bias]);
        out.extend(self.encoder.forward.tensors_mut());
        out.extend(self.encoder.backward.tensors_mut());
        out.extend(self.decoder.forward.tensors_mut());
        out.extend(self.decoder.backward.tensors_mut());
        out.extend([&mut self.output_head.weight, &mut self.output_head.bias]);
        out
    }
}

/// All trainable weights for feature width `d` and hidden size `h`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    d: usize,
    h: usize,
    net: Network<Matrix>,
}

impl ModelParams {
    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` weights, zero biases
    /// except the forget gates, which start at [`FORGET_BIAS`].
    pub fn init(d: usize, h: usize, seed: u64) -> Result<Self> {
        if d == 0 || h == 0 {
            return Err(Error::contract(format!("need D >= 1 and H >= 1, got D={d}, H={h}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Network {
            selector: init_bilstm(&mut rng, d, h),
            importance_head: init_dense(&mut rng, 2 * h, 1),
            encoder: init_bilstm(&mut rng, d, h),
            decoder: init_bilstm(&mut rng, 2 * h, h),
            output_head: init_dense(&mut rng, 2 * h, d),
        };
        Ok(ModelParams { d, h, net })
    }

    /// Assembles parameters from tensors in canonical order, checking shapes.
    pub fn from_tensors(d: usize, h: usize, tensors: Vec<Matrix>) -> Result<Self> {
        let mut p = Self::init(d, h, 0)?;
        let slots = p.net.tensors_mut();
        if slots.len() != tensors.len() {
            return Err(Error::input(format!(
                "expected {} weight matrices, got {}",
                slots.len(),
                tensors.len()
            )));
        }
        for (k, (slot, t)) in slots.into_iter().zip(tensors).enumerate() {
            if slot.shape() != t.shape() {
                return Err(Error::input(format!(
                    "weight matrix {k}: expected shape {:?}, got {:?}",
                    slot.shape(),
                    t.shape()
                )));
            }
            if !t.is_finite() {
                return Err(Error::input(format!("weight matrix {k} is not finite")));
            }
            *slot = t;
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn hidden(&self) -> usize {
        self.h
    }

    pub fn network(&self) -> &Network<Matrix> {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network<Matrix> {
        &mut self.net
    }

    pub fn num_parameters(&self) -> usize {
        self.net.tensors().iter().map(|m| m.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.net.tensors().iter().all(|m| m.is_finite())
    }

    /// Inserts every weight into `g` as a leaf.
    pub fn bind(&self, g: &mut Graph) -> Network<NodeId> {
        self.net.map(|m| g.leaf(m.clone()))
    }
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize) -> Matrix {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
    Matrix::from_vec(rows, cols, data).expect("finite by construction")
}

fn init_lstm(rng: &mut ChaCha8Rng, input: usize, h: usize) -> Lstm<Matrix> {
    let mut bias = Matrix::zeros(1, 4 * h);
    for c in h..2 * h {
        bias.set(0, c, FORGET_BIAS);
    }
    Lstm {
        w_input: uniform(rng, input, 4 * h, input),
        w_hidden: uniform(rng, h, 4 * h, h),
        bias,
    }
}

fn init_bilstm(rng: &mut ChaCha8Rng, input: usize, h: usize) -> BiLstm<Matrix> {
    BiLstm {
        forward: init_lstm(rng, input, h),
        backward: init_lstm(rng, input, h),
    }
}

fn init_dense(rng: &mut ChaCha8Rng, input: usize, output: usize) -> Dense<Matrix> {
    Dense {
        weight: uniform(rng, input, output, input),
        bias: Matrix::zeros(1, output),
    }
}

fn hidden_size(g: &Graph, w: &Lstm<NodeId>) -> usize {
    g.shape(w.w_hidden).0
}

/// Gated update given the already-projected input row (`1 x 4H`, bias included).
fn lstm_cell(
    g: &mut Graph,
    w: &Lstm<NodeId>,
    projected: NodeId,
    prev_hidden: NodeId,
    prev_cell: NodeId,
) -> Result<(NodeId, NodeId)> {
    let h = hidden_size(g, w);
    let recur = g.matmul(prev_hidden, w.w_hidden)?;
    let gates = g.add(projected, recur)?;
    let i_pre = g.col_slice(gates, 0, h)?;
    let f_pre = g.col_slice(gates, h, h)?;
    let c_pre = g.col_slice(gates, 2 * h, h)?;
    let o_pre = g.col_slice(gates, 3 * h, h)?;
    let input_gate = g.logistic(i_pre);
    let forget_gate = g.logistic(f_pre);
    let candidate = g.tanh(c_pre);
    let output_gate = g.logistic(o_pre);
    let kept = g.mul(forget_gate, prev_cell)?;
    let written = g.mul(input_gate, candidate)?;
    let cell = g.add(kept, written)?;
    let squashed = g.tanh(cell);
    let hidden = g.mul(output_gate, squashed)?;
    Ok((hidden, cell))
}

/// One LSTM step on a `1 x In` input row.
pub fn lstm_step(
    g: &mut Graph,
    w: &Lstm<NodeId>,
    input: NodeId,
    prev_hidden: NodeId,
    prev_cell: NodeId,
) -> Result<(NodeId, NodeId)> {
    let h = hidden_size(g, w);
    for (name, id) in [("hidden", prev_hidden), ("cell", prev_cell)] {
        if g.shape(id) != (1, h) {
            return Err(Error::dim(
                "lstm_step",
                format!("{name} state {:?}, expected (1, {h})", g.shape(id)),
            ));
        }
    }
    let xw = g.matmul(input, w.w_input)?;
    let projected = g.add(xw, w.bias)?;
    lstm_cell(g, w, projected, prev_hidden, prev_cell)
}

/// Runs one direction over pre-projected rows; returns hidden nodes in
/// processing order.
fn run_direction(
    g: &mut Graph,
    w: &Lstm<NodeId>,
    projected: NodeId,
    order: impl Iterator<Item = usize>,
) -> Result<Vec<NodeId>> {
    let h = hidden_size(g, w);
    let mut hidden = g.leaf(Matrix::zeros(1, h));
    let mut cell = g.leaf(Matrix::zeros(1, h));
    let mut out = Vec::new();
    for t in order {
        let row = g.row(projected, t)?;
        (hidden, cell) = lstm_cell(g, w, row, hidden, cell)?;
        out.push(hidden);
    }
    Ok(out)
}

/// Graph outputs of a bidirectional pass.
pub struct BiLstmOutput {
    /// `N x 2H`: row t is `[forward_t, backward_t]`.
    pub output: NodeId,
    /// Forward state after the last frame.
    pub forward_last: NodeId,
    /// Backward state after reaching the first frame.
    pub backward_first: NodeId,
}

fn bilstm_projected(
    g: &mut Graph,
    w: &BiLstm<NodeId>,
    fwd_proj: NodeId,
    bwd_proj: NodeId,
) -> Result<BiLstmOutput> {
    let n = g.shape(fwd_proj).0;
    if n == 0 {
        return Err(Error::contract("bidirectional LSTM needs at least one frame"));
    }
    let fwd = run_direction(g, &w.forward, fwd_proj, 0..n)?;
    let mut bwd = run_direction(g, &w.backward, bwd_proj, (0..n).rev())?;
    bwd.reverse();
    let fwd_stack = g.vstack(&fwd)?;
    let bwd_stack = g.vstack(&bwd)?;
    let output = g.hconcat(&[fwd_stack, bwd_stack])?;
    Ok(BiLstmOutput {
        output,
        forward_last: fwd[n - 1],
        backward_first: bwd[0],
    })
}

fn project(g: &mut Graph, seq: NodeId, w: &Lstm<NodeId>) -> Result<NodeId> {
    let xw = g.matmul(seq, w.w_input)?;
    g.add(xw, w.bias)
}

/// Bidirectional LSTM over an `N x In` sequence with zero initial states.
pub fn bilstm(g: &mut Graph, w: &BiLstm<NodeId>, seq: NodeId) -> Result<BiLstmOutput> {
    let fwd_proj = project(g, seq, &w.forward)?;
    let bwd_proj = project(g, seq, &w.backward)?;
    bilstm_projected(g, w, fwd_proj, bwd_proj)
}

fn dense(g: &mut Graph, w: &Dense<NodeId>, x: NodeId) -> Result<NodeId> {
    let xw = g.matmul(x, w.weight)?;
    g.add(xw, w.bias)
}

/// Importance scores as an `N x 1` column in (0, 1).
pub fn selector_graph(g: &mut Graph, net: &Network<NodeId>, x: NodeId) -> Result<NodeId> {
    let ctx = bilstm(g, &net.selector, x)?;
    let logits = dense(g, &net.importance_head, ctx.output)?;
    Ok(g.logistic(logits))
}

/// Row t of `x` scaled by `s_t`.
pub fn merge_graph(g: &mut Graph, x: NodeId, s: NodeId) -> Result<NodeId> {
    let (n, _) = g.shape(x);
    if g.shape(s) != (n, 1) {
        return Err(Error::contract(format!(
            "{} frames but score column of shape {:?}",
            n,
            g.shape(s)
        )));
    }
    g.mul(x, s)
}

pub struct EncodedNodes {
    pub hidden: NodeId,
    pub code: NodeId,
}

pub fn encode_graph(g: &mut Graph, net: &Network<NodeId>, weighted: NodeId) -> Result<EncodedNodes> {
    let out = bilstm(g, &net.encoder, weighted)?;
    let code = g.hconcat(&[out.forward_last, out.backward_first])?;
    Ok(EncodedNodes {
        hidden: out.output,
        code,
    })
}

/// Decodes `n` frames from a `1 x 2H` code fed at every timestep.
pub fn decode_graph(g: &mut Graph, net: &Network<NodeId>, code: NodeId, n: usize) -> Result<NodeId> {
    if n == 0 {
        return Err(Error::contract("cannot decode zero frames"));
    }
    // Every input row is the same code, so project once and replicate.
    let ones = g.leaf(Matrix::filled(n, 1, 1.0));
    let fwd_row = project(g, code, &net.decoder.forward)?;
    let bwd_row = project(g, code, &net.decoder.backward)?;
    let fwd_proj = g.matmul(ones, fwd_row)?;
    let bwd_proj = g.matmul(ones, bwd_row)?;
    let out = bilstm_projected(g, &net.decoder, fwd_proj, bwd_proj)?;
    dense(g, &net.output_head, out.output)
}

/// Graph handles for every intermediate of a forward pass.
pub struct TraceNodes {
    pub importance: NodeId,
    pub selection: NodeId,
    pub weighted: NodeId,
    pub enc_hidden: NodeId,
    pub code: NodeId,
    pub reconstruction: NodeId,
}

/// Selector, fusion with constant aesthetic scores, merge, encode, decode.
pub fn forward_graph(
    g: &mut Graph,
    net: &Network<NodeId>,
    x: NodeId,
    aesthetic: &ScoreVector,
    fusion: &FusionConfig,
) -> Result<TraceNodes> {
    fusion.validate()?;
    let n = g.shape(x).0;
    if aesthetic.len() != n {
        return Err(Error::contract(format!(
            "{} aesthetic scores for {} frames",
            aesthetic.len(),
            n
        )));
    }
    let importance = selector_graph(g, net, x)?;
    let q = fusion.effective_aesthetic(aesthetic);
    let fixed = g.leaf(Matrix::column(q.values()).map(|v| fusion.beta * v));
    let scaled = g.scale(importance, fusion.alpha);
    let selection = g.add(scaled, fixed)?;
    let weighted = merge_graph(g, x, selection)?;
    let enc = encode_graph(g, net, weighted)?;
    let reconstruction = decode_graph(g, net, enc.code, n)?;
    Ok(TraceNodes {
        importance,
        selection,
        weighted,
        enc_hidden: enc.hidden,
        code: enc.code,
        reconstruction,
    })
}

/// Values of a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub importance: ScoreVector,
    pub selection: ScoreVector,
    pub enc_hidden: Matrix,
    pub code: Matrix,
    pub reconstruction: Matrix,
}

fn check_dim(params: &ModelParams, d: usize) -> Result<()> {
    if params.dim() != d {
        return Err(Error::dim(
            "model",
            format!("model expects D={}, features have D={}", params.dim(), d),
        ));
    }
    Ok(())
}

fn column_scores(m: &Matrix, kind: ScoreKind) -> ScoreVector {
    let values = m.as_slice().iter().map(|v| v.clamp(0.0, 1.0)).collect();
    ScoreVector::new(values, kind).expect("clamped to [0,1]")
}

pub fn selector_scores(params: &ModelParams, x: &FeatureSequence) -> Result<ScoreVector> {
    check_dim(params, x.dim())?;
    let mut g = Graph::new();
    let net = params.bind(&mut g);
    let xn = g.leaf(x.features().clone());
    let i = selector_graph(&mut g, &net, xn)?;
    Ok(column_scores(g.value(i), ScoreKind::Importance))
}

pub fn merge_weighted(x: &FeatureSequence, s: &ScoreVector) -> Result<Matrix> {
    if s.len() != x.frames() {
        return Err(Error::contract(format!(
            "{} scores for {} frames",
            s.len(),
            x.frames()
        )));
    }
    let mut g = Graph::new();
    let xn = g.leaf(x.features().clone());
    let sn = g.leaf(Matrix::column(s.values()));
    let out = merge_graph(&mut g, xn, sn)?;
    Ok(g.value(out).clone())
}

/// Returns `(encoder hidden states N x 2H, code 1 x 2H)`.
pub fn encode(params: &ModelParams, weighted: &Matrix) -> Result<(Matrix, Matrix)> {
    check_dim(params, weighted.cols())?;
    let mut g = Graph::new();
    let net = params.bind(&mut g);
    let xn = g.leaf(weighted.clone());
    let enc = encode_graph(&mut g, &net, xn)?;
    Ok((g.value(enc.hidden).clone(), g.value(enc.code).clone()))
}

pub fn decode(params: &ModelParams, code: &Matrix, n: usize) -> Result<Matrix> {
    if code.shape() != (1, 2 * params.hidden()) {
        return Err(Error::dim(
            "decode",
            format!("code {:?}, expected (1, {})", code.shape(), 2 * params.hidden()),
        ));
    }
    let mut g = Graph::new();
    let net = params.bind(&mut g);
    let cn = g.leaf(code.clone());
    let out = decode_graph(&mut g, &net, cn, n)?;
    Ok(g.value(out).clone())
}

pub fn forward_pass(
    params: &ModelParams,
    x: &FeatureSequence,
    aesthetic: &ScoreVector,
    fusion: &FusionConfig,
) -> Result<ForwardTrace> {
    check_dim(params, x.dim())?;
    let mut g = Graph::new();
    let net = params.bind(&mut g);
    let xn = g.leaf(x.features().clone());
    let t = forward_graph(&mut g, &net, xn, aesthetic, fusion)?;
    Ok(ForwardTrace {
        importance: column_scores(g.value(t.importance), ScoreKind::Importance),
        selection: column_scores(g.value(t.selection), ScoreKind::Selection),
        enc_hidden: g.value(t.enc_hidden).clone(),
        code: g.value(t.code).clone(),
        reconstruction: g.value(t.reconstruction).clone(),
    })
}
