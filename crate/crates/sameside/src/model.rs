//! A small BERT-style encoder with a 2-way classification head.
//!
//! Token + segment + position embeddings feed a stack of post-norm
//! transformer blocks (multi-head self-attention, add & layer-norm,
//! GELU feed-forward, add & layer-norm); a tanh pooler over the first
//! token feeds the classifier. The forward pass can record every
//! intermediate needed for exact gradients.
//!
//! Computation runs over the unpadded prefix of each pair, so padding can
//! never leak into real positions.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{gelu, layer_norm_stats, softmax_in_place, Matrix};
use crate::par;
use crate::tokenizer::EncodedPair;

pub const INIT_STD: f64 = 0.02;
pub const ATTENTION_MASK_BIAS: f64 = -1e9;

const CHECKPOINT_MAGIC: &[u8; 4] = b"SSCK";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("pair `{pair_id}`: token id {id} out of range for vocab size {vocab_size}")]
    TokenIdOutOfRange {
        pair_id: String,
        id: u32,
        vocab_size: usize,
    },
    #[error("pair `{pair_id}`: sequence length {len} exceeds max_positions {max_positions}")]
    SequenceTooLong {
        pair_id: String,
        len: usize,
        max_positions: usize,
    },
    #[error("pair `{pair_id}`: attention mask has no unmasked position")]
    EmptySequence { pair_id: String },
    #[error("attention mask has no unmasked position")]
    AllMasked,
    #[error("checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub hidden_size: usize,
    pub num_heads: usize,
    pub ff_size: usize,
    pub max_positions: usize,
    pub vocab_size: usize,
    pub preset_name: String,
}

impl ModelConfig {
    /// The smaller of the two presets (mirrors the base/large contrast).
    pub fn base_mini(vocab_size: usize, max_positions: usize) -> Self {
        ModelConfig {
            num_layers: 4,
            hidden_size: 128,
            num_heads: 4,
            ff_size: 512,
            max_positions,
            vocab_size,
            preset_name: "base-mini".into(),
        }
    }

    /// The larger preset: 2x depth and width of `base_mini`.
    pub fn large_mini(vocab_size: usize, max_positions: usize) -> Self {
        ModelConfig {
            num_layers: 8,
            hidden_size: 256,
            num_heads: 8,
            ff_size: 1024,
            max_positions,
            vocab_size,
            preset_name: "large-mini".into(),
        }
    }

    pub fn by_preset(
        name: &str,
        vocab_size: usize,
        max_positions: usize,
    ) -> Result<Self, ModelError> {
        match name {
            "base-mini" => Ok(Self::base_mini(vocab_size, max_positions)),
            "large-mini" => Ok(Self::large_mini(vocab_size, max_positions)),
            other => Err(ModelError::InvalidConfig(format!("unknown preset `{other}`"))),
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_size / self.num_heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.hidden_size == 0 || self.num_heads == 0 {
            return Err(ModelError::InvalidConfig(
                "hidden_size and num_heads must be positive".into(),
            ));
        }
        if self.hidden_size % self.num_heads != 0 {
            return Err(ModelError::InvalidConfig(format!(
                "hidden_size {} not divisible by num_heads {}",
                self.hidden_size, self.num_heads
            )));
        }
        if self.ff_size == 0 || self.max_positions == 0 || self.vocab_size < 4 {
            return Err(ModelError::InvalidConfig(
                "ff_size/max_positions must be positive and vocab_size >= 4".into(),
            ));
        }
        Ok(())
    }
}

/// A dense layer `y = xW + b` with `W` stored input-major (`in x out`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Linear {
    fn zeros(input: usize, output: usize) -> Self {
        Linear { weight: Matrix::zeros(input, output), bias: vec![0.0; output] }
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        let mut y = x.matmul(&self.weight);
        y.add_bias(&self.bias);
        y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNormParams {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

impl LayerNormParams {
    fn identity(size: usize) -> Self {
        LayerNormParams { scale: vec![1.0; size], shift: vec![0.0; size] }
    }

    fn zeros(size: usize) -> Self {
        LayerNormParams { scale: vec![0.0; size], shift: vec![0.0; size] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub attn_query: Linear,
    pub attn_key: Linear,
    pub attn_value: Linear,
    pub attn_output: Linear,
    pub norm_attn: LayerNormParams,
    pub ff_in: Linear,
    pub ff_out: Linear,
    pub norm_ff: LayerNormParams,
}

/// All learnable weights plus the config that shapes them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub config: ModelConfig,
    pub token_embeddings: Matrix,
    pub segment_embeddings: Matrix,
    pub position_embeddings: Matrix,
    pub layers: Vec<LayerParams>,
    pub pooler: Linear,
    pub classifier: Linear,
}

impl Parameters {
    /// All-zero parameters of the given shape (also the gradient/moment shape).
    pub fn zeros(config: &ModelConfig) -> Self {
        let h = config.hidden_size;
        let f = config.ff_size;
        let layer = || LayerParams {
            attn_query: Linear::zeros(h, h),
            attn_key: Linear::zeros(h, h),
            attn_value: Linear::zeros(h, h),
            attn_output: Linear::zeros(h, h),
            norm_attn: LayerNormParams::zeros(h),
            ff_in: Linear::zeros(h, f),
            ff_out: Linear::zeros(f, h),
            norm_ff: LayerNormParams::zeros(h),
        };
        Parameters {
            config: config.clone(),
            token_embeddings: Matrix::zeros(config.vocab_size, h),
            segment_embeddings: Matrix::zeros(2, h),
            position_embeddings: Matrix::zeros(config.max_positions, h),
            layers: (0..config.num_layers).map(|_| layer()).collect(),
            pooler: Linear::zeros(h, h),
            classifier: Linear::zeros(h, 2),
        }
    }

    /// Visit every tensor as a flat slice, in declared (checkpoint) order.
    pub fn for_each_tensor<'a>(&'a self, mut f: impl FnMut(String, &'a [f64])) {
        f("token_embeddings".into(), self.token_embeddings.as_slice());
        f("segment_embeddings".into(), self.segment_embeddings.as_slice());
        f("position_embeddings".into(), self.position_embeddings.as_slice());
        for (i, layer) in self.layers.iter().enumerate() {
            f(format!("layer{i}.attn_query.weight"), layer.attn_query.weight.as_slice());
            f(format!("layer{i}.attn_query.bias"), &layer.attn_query.bias);
            f(format!("layer{i}.attn_key.weight"), layer.attn_key.weight.as_slice());
            f(format!("layer{i}.attn_key.bias"), &layer.attn_key.bias);
            f(format!("layer{i}.attn_value.weight"), layer.attn_value.weight.as_slice());
            f(format!("layer{i}.attn_value.bias"), &layer.attn_value.bias);
            f(format!("layer{i}.attn_output.weight"), layer.attn_output.weight.as_slice());
            f(format!("layer{i}.attn_output.bias"), &layer.attn_output.bias);
            f(format!("layer{i}.norm_attn.scale"), &layer.norm_attn.scale);
            f(format!("layer{i}.norm_attn.shift"), &layer.norm_attn.shift);
            f(format!("layer{i}.ff_in.weight"), layer.ff_in.weight.as_slice());
            f(format!("layer{i}.ff_in.bias"), &layer.ff_in.bias);
            f(format!("layer{i}.ff_out.weight"), layer.ff_out.weight.as_slice());
            f(format!("layer{i}.ff_out.bias"), &layer.ff_out.bias);
            f(format!("layer{i}.norm_ff.scale"), &layer.norm_ff.scale);
            f(format!("layer{i}.norm_ff.shift"), &layer.norm_ff.shift);
        }
        f("pooler.weight".into(), self.pooler.weight.as_slice());
        f("pooler.bias".into(), &self.pooler.bias);
        f("classifier.weight".into(), self.classifier.weight.as_slice());
        f("classifier.bias".into(), &self.classifier.bias);
    }

    /// Mutable view of every tensor, same order as [`Self::for_each_tensor`].
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = Vec::new();
        out.push(("token_embeddings".into(), self.token_embeddings.as_mut_slice()));
        out.push(("segment_embeddings".into(), self.segment_embeddings.as_mut_slice()));
        out.push(("position_embeddings".into(), self.position_embeddings.as_mut_slice()));
        for (i, layer) in self.layers.iter_mut().enumerate() {
            out.push((format!("layer{i}.attn_query.weight"), layer.attn_query.weight.as_mut_slice()));
            out.push((format!("layer{i}.attn_query.bias"), layer.attn_query.bias.as_mut_slice()));
            out.push((format!("layer{i}.attn_key.weight"), layer.attn_key.weight.as_mut_slice()));
            out.push((format!("layer{i}.attn_key.bias"), layer.attn_key.bias.as_mut_slice()));
            out.push((format!("layer{i}.attn_value.weight"), layer.attn_value.weight.as_mut_slice()));
            out.push((format!("layer{i}.attn_value.bias"), layer.attn_value.bias.as_mut_slice()));
            out.push((format!("layer{i}.attn_output.weight"), layer.attn_output.weight.as_mut_slice()));
            out.push((format!("layer{i}.attn_output.bias"), layer.attn_output.bias.as_mut_slice()));
            out.push((format!("layer{i}.norm_attn.scale"), layer.norm_attn.scale.as_mut_slice()));
            out.push((format!("layer{i}.norm_attn.shift"), layer.norm_attn.shift.as_mut_slice()));
            out.push((format!("layer{i}.ff_in.weight"), layer.ff_in.weight.as_mut_slice()));
            out.push((format!("layer{i}.ff_in.bias"), layer.ff_in.bias.as_mut_slice()));
            out.push((format!("layer{i}.ff_out.weight"), layer.ff_out.weight.as_mut_slice()));
            out.push((format!("layer{i}.ff_out.bias"), layer.ff_out.bias.as_mut_slice()));
            out.push((format!("layer{i}.norm_ff.scale"), layer.norm_ff.scale.as_mut_slice()));
            out.push((format!("layer{i}.norm_ff.shift"), layer.norm_ff.shift.as_mut_slice()));
        }
        out.push(("pooler.weight".into(), self.pooler.weight.as_mut_slice()));
        out.push(("pooler.bias".into(), self.pooler.bias.as_mut_slice()));
        out.push(("classifier.weight".into(), self.classifier.weight.as_mut_slice()));
        out.push(("classifier.bias".into(), self.classifier.bias.as_mut_slice()));
        out
    }

    /// Total number of scalar parameters.
    pub fn num_params(&self) -> usize {
        let mut n = 0;
        self.for_each_tensor(|_, t| n += t.len());
        n
    }
}

/// Deterministic initialization: weights and embeddings from a truncated
/// normal (sigma 0.02, cut at two sigma), biases zero, layer-norm identity.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<Parameters, ModelError> {
    config.validate()?;
    let mut params = Parameters::zeros(config);
    for layer in &mut params.layers {
        layer.norm_attn = LayerNormParams::identity(config.hidden_size);
        layer.norm_ff = LayerNormParams::identity(config.hidden_size);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, INIT_STD).expect("valid normal");
    let mut sample = move || loop {
        let x: f64 = normal.sample(&mut rng);
        if x.abs() <= 2.0 * INIT_STD {
            return x;
        }
    };

    let mut fill = |m: &mut Matrix| {
        for v in m.as_mut_slice() {
            *v = sample();
        }
    };
    fill(&mut params.token_embeddings);
    fill(&mut params.segment_embeddings);
    fill(&mut params.position_embeddings);
    for layer in &mut params.layers {
        fill(&mut layer.attn_query.weight);
        fill(&mut layer.attn_key.weight);
        fill(&mut layer.attn_value.weight);
        fill(&mut layer.attn_output.weight);
        fill(&mut layer.ff_in.weight);
        fill(&mut layer.ff_out.weight);
    }
    fill(&mut params.pooler.weight);
    fill(&mut params.classifier.weight);
    Ok(params)
}

/// Scaled dot-product attention for one head: `softmax(QKt/sqrt(d) + mask)V`.
///
/// `mask` marks keys; masked positions get an additive [`ATTENTION_MASK_BIAS`]
/// before the softmax and end up with exactly zero weight. Errors if no
/// position is unmasked.
pub fn attention(q: &Matrix, k: &Matrix, v: &Matrix, mask: &[u32]) -> Result<Matrix, ModelError> {
    let (out, _) = attention_with_probs(q, k, v, mask)?;
    Ok(out)
}

/// [`attention`] that also returns the probability matrix.
pub fn attention_with_probs(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    mask: &[u32],
) -> Result<(Matrix, Matrix), ModelError> {
    assert_eq!(q.cols(), k.cols(), "query/key width mismatch");
    assert_eq!(k.rows(), v.rows(), "key/value length mismatch");
    assert_eq!(mask.len(), k.rows(), "mask length mismatch");
    if mask.iter().all(|&m| m == 0) {
        return Err(ModelError::AllMasked);
    }
    let scale = 1.0 / (q.cols() as f64).sqrt();
    let mut scores = q.matmul_nt(k);
    for i in 0..scores.rows() {
        let row = scores.row_mut(i);
        for (s, &m) in row.iter_mut().zip(mask) {
            *s *= scale;
            if m == 0 {
                *s += ATTENTION_MASK_BIAS;
            }
        }
        softmax_in_place(row);
    }
    let out = scores.matmul(v);
    Ok((out, scores))
}

/// Per-layer activations cached for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerTrace {
    /// Layer input (embeddings for layer 0).
    pub input: Matrix,
    pub q: Matrix,
    pub k: Matrix,
    pub v: Matrix,
    /// Attention probabilities per head, each `T x T`.
    pub attn_probs: Vec<Matrix>,
    /// Concatenated head outputs before the output projection.
    pub context: Matrix,
    /// Normalized values and `1/std` of the post-attention layer norm.
    pub xhat_attn: Matrix,
    pub inv_std_attn: Vec<f64>,
    /// Output of the post-attention layer norm.
    pub normed_attn: Matrix,
    /// Feed-forward pre-activation and GELU output.
    pub ff_pre: Matrix,
    pub ff_act: Matrix,
    pub xhat_ff: Matrix,
    pub inv_std_ff: Vec<f64>,
    /// Block output (input to the next layer).
    pub output: Matrix,
}

/// Everything the backward pass needs for one example.
#[derive(Debug, Clone)]
pub struct ExampleTrace {
    pub pair_id: String,
    pub token_ids: Vec<u32>,
    pub segment_ids: Vec<u32>,
    pub layers: Vec<LayerTrace>,
    /// Embedding sum (input to layer 0).
    pub embedded: Matrix,
    /// Final hidden states.
    pub hidden: Matrix,
    /// tanh pooler output over the first token.
    pub pooled: Vec<f64>,
    pub logits: [f64; 2],
}

/// Batch forward trace, one entry per example in batch order.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub examples: Vec<ExampleTrace>,
}

fn layer_norm_forward(x: &Matrix, params: &LayerNormParams) -> (Matrix, Vec<f64>, Matrix) {
    let mut xhat = Matrix::zeros(x.rows(), x.cols());
    let mut normed = Matrix::zeros(x.rows(), x.cols());
    let mut inv_std = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let (hat, istd) = layer_norm_stats(x.row(i));
        inv_std.push(istd);
        for j in 0..x.cols() {
            xhat.set(i, j, hat[j]);
            normed.set(i, j, params.scale[j] * hat[j] + params.shift[j]);
        }
    }
    (xhat, inv_std, normed)
}

fn forward_example(
    params: &Parameters,
    pair: &EncodedPair,
    want_trace: bool,
) -> Result<([f64; 2], Option<ExampleTrace>), ModelError> {
    let config = &params.config;
    let real_len = pair.real_len();
    if real_len == 0 {
        return Err(ModelError::EmptySequence { pair_id: pair.pair_id.clone() });
    }
    if real_len > config.max_positions {
        return Err(ModelError::SequenceTooLong {
            pair_id: pair.pair_id.clone(),
            len: real_len,
            max_positions: config.max_positions,
        });
    }
    let ids = &pair.token_ids[..real_len];
    let segs = &pair.segment_ids[..real_len];
    let h = config.hidden_size;
    let heads = config.num_heads;
    let d = config.head_dim();

    let mut x = Matrix::zeros(real_len, h);
    for (t, (&id, &seg)) in ids.iter().zip(segs).enumerate() {
        if id as usize >= config.vocab_size {
            return Err(ModelError::TokenIdOutOfRange {
                pair_id: pair.pair_id.clone(),
                id,
                vocab_size: config.vocab_size,
            });
        }
        let tok = params.token_embeddings.row(id as usize);
        let seg_row = params.segment_embeddings.row(seg.min(1) as usize);
        let pos = params.position_embeddings.row(t);
        let row = x.row_mut(t);
        for j in 0..h {
            row[j] = tok[j] + seg_row[j] + pos[j];
        }
    }
    let embedded = x.clone();

    let ones = vec![1u32; real_len];
    let mut layer_traces = Vec::with_capacity(config.num_layers);
    for layer in &params.layers {
        let input = x.clone();
        let q = layer.attn_query.apply(&x);
        let k = layer.attn_key.apply(&x);
        let v = layer.attn_value.apply(&x);

        let mut context = Matrix::zeros(real_len, h);
        let mut probs = Vec::with_capacity(heads);
        for head in 0..heads {
            let qh = q.col_slice(head * d, d);
            let kh = k.col_slice(head * d, d);
            let vh = v.col_slice(head * d, d);
            let (ctx, p) = attention_with_probs(&qh, &kh, &vh, &ones)?;
            context.add_col_slice(head * d, &ctx);
            probs.push(p);
        }
        let mut attn_out = layer.attn_output.apply(&context);
        attn_out.add_assign(&input);
        let (xhat_attn, inv_std_attn, normed_attn) =
            layer_norm_forward(&attn_out, &layer.norm_attn);

        let ff_pre = layer.ff_in.apply(&normed_attn);
        let mut ff_act = ff_pre.clone();
        for v in ff_act.as_mut_slice() {
            *v = gelu(*v);
        }
        let mut ff_out = layer.ff_out.apply(&ff_act);
        ff_out.add_assign(&normed_attn);
        let (xhat_ff, inv_std_ff, output) = layer_norm_forward(&ff_out, &layer.norm_ff);

        x = output.clone();
        if want_trace {
            layer_traces.push(LayerTrace {
                input,
                q,
                k,
                v,
                attn_probs: probs,
                context,
                xhat_attn,
                inv_std_attn,
                normed_attn,
                ff_pre,
                ff_act,
                xhat_ff,
                inv_std_ff,
                output,
            });
        }
    }

    let cls = x.row(0);
    let mut pooled = params.pooler.bias.clone();
    for (i, &ci) in cls.iter().enumerate() {
        let wrow = params.pooler.weight.row(i);
        for (p, &w) in pooled.iter_mut().zip(wrow) {
            *p += ci * w;
        }
    }
    for p in pooled.iter_mut() {
        *p = p.tanh();
    }

    let mut logits = [params.classifier.bias[0], params.classifier.bias[1]];
    for (i, &pi) in pooled.iter().enumerate() {
        let wrow = params.classifier.weight.row(i);
        logits[0] += pi * wrow[0];
        logits[1] += pi * wrow[1];
    }

    let trace = want_trace.then(|| ExampleTrace {
        pair_id: pair.pair_id.clone(),
        token_ids: ids.to_vec(),
        segment_ids: segs.to_vec(),
        layers: layer_traces,
        embedded,
        hidden: x,
        pooled: pooled.clone(),
        logits,
    });
    Ok((logits, trace))
}

/// Forward pass over a batch. Returns `B x 2` logits and the full trace.
pub fn forward(
    params: &Parameters,
    batch: &[EncodedPair],
) -> Result<(Matrix, ForwardTrace), ModelError> {
    let results = par::map_ordered(batch, |pair| forward_example(params, pair, true));
    let mut logits = Matrix::zeros(batch.len(), 2);
    let mut examples = Vec::with_capacity(batch.len());
    for (i, res) in results.into_iter().enumerate() {
        let (l, trace) = res?;
        logits.set(i, 0, l[0]);
        logits.set(i, 1, l[1]);
        examples.push(trace.expect("trace requested"));
    }
    Ok((logits, ForwardTrace { examples }))
}

/// Logits only, without trace allocation (used for prediction).
pub fn forward_logits(params: &Parameters, batch: &[EncodedPair]) -> Result<Matrix, ModelError> {
    let results = par::map_ordered(batch, |pair| forward_example(params, pair, false));
    let mut logits = Matrix::zeros(batch.len(), 2);
    for (i, res) in results.into_iter().enumerate() {
        let (l, _) = res?;
        logits.set(i, 0, l[0]);
        logits.set(i, 1, l[1]);
    }
    Ok(logits)
}

/// Argmax predictions; index 1 means same-side, ties resolve to `false`.
pub fn predict(params: &Parameters, batch: &[EncodedPair]) -> Result<Vec<bool>, ModelError> {
    let logits = forward_logits(params, batch)?;
    Ok((0..batch.len())
        .map(|i| logits.get(i, 1) > logits.get(i, 0))
        .collect())
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

/// Binary checkpoint: magic, version, config header, then every tensor in
/// declared order as little-endian f64.
pub fn save_checkpoint<W: Write>(params: &Parameters, mut writer: W) -> Result<(), ModelError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut buf, CHECKPOINT_VERSION);
    let c = &params.config;
    for v in [
        c.num_layers,
        c.hidden_size,
        c.num_heads,
        c.ff_size,
        c.max_positions,
        c.vocab_size,
    ] {
        put_u32(&mut buf, v as u32);
    }
    put_u32(&mut buf, c.preset_name.len() as u32);
    buf.extend_from_slice(c.preset_name.as_bytes());
    params.for_each_tensor(|_, tensor| {
        for &v in tensor {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    });
    writer.write_all(&buf)?;
    Ok(())
}

pub fn load_checkpoint<R: Read>(mut reader: R) -> Result<Parameters, ModelError> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() < 36 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(ModelError::BadCheckpoint("bad magic".into()));
    }
    let u32_at = |off: usize| -> Result<u32, ModelError> {
        bytes
            .get(off..off + 4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .ok_or_else(|| ModelError::BadCheckpoint("truncated header".into()))
    };
    let version = u32_at(4)?;
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::BadCheckpoint(format!("unsupported version {version}")));
    }
    let num_layers = u32_at(8)? as usize;
    let hidden_size = u32_at(12)? as usize;
    let num_heads = u32_at(16)? as usize;
    let ff_size = u32_at(20)? as usize;
    let max_positions = u32_at(24)? as usize;
    let vocab_size = u32_at(28)? as usize;
    let name_len = u32_at(32)? as usize;
    let name_end = 36 + name_len;
    if bytes.len() < name_end {
        return Err(ModelError::BadCheckpoint("truncated preset name".into()));
    }
    let preset_name = String::from_utf8(bytes[36..name_end].to_vec())
        .map_err(|_| ModelError::BadCheckpoint("preset name is not utf-8".into()))?;
    let config = ModelConfig {
        num_layers,
        hidden_size,
        num_heads,
        ff_size,
        max_positions,
        vocab_size,
        preset_name,
    };
    config.validate()?;

    let mut params = Parameters::zeros(&config);
    let expected = name_end + 8 * params.num_params();
    if bytes.len() != expected {
        return Err(ModelError::BadCheckpoint(format!(
            "expected {expected} bytes for config {config:?}, found {}",
            bytes.len()
        )));
    }
    let mut off = name_end;
    for (_, tensor) in params.tensors_mut() {
        for v in tensor.iter_mut() {
            *v = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
            off += 8;
        }
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::synthetic_pair;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            num_layers: 1,
            hidden_size: 4,
            num_heads: 1,
            ff_size: 8,
            max_positions: 16,
            vocab_size: 12,
            preset_name: "tiny-test".into(),
        }
    }

    #[test]
    fn presets_have_expected_shapes() {
        let base = ModelConfig::base_mini(100, 64);
        assert_eq!(
            (base.num_layers, base.hidden_size, base.num_heads, base.ff_size),
            (4, 128, 4, 512)
        );
        let large = ModelConfig::large_mini(100, 64);
        assert_eq!(
            (large.num_layers, large.hidden_size, large.num_heads, large.ff_size),
            (8, 256, 8, 1024)
        );
        for config in [&base, &large] {
            config.validate().unwrap();
            assert_eq!(config.hidden_size % config.num_heads, 0);
        }
        assert_eq!(large.num_layers, 2 * base.num_layers);
        assert_eq!(large.hidden_size, 2 * base.hidden_size);
        assert!(ModelConfig::by_preset("no-such", 100, 64).is_err());
    }

    #[test]
    fn init_is_deterministic() {
        let config = tiny_config();
        let a = init_params(&config, 9).unwrap();
        let b = init_params(&config, 9).unwrap();
        assert_eq!(a, b);
        let c = init_params(&config, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_layer_norm_scales_are_exactly_one() {
        let params = init_params(&tiny_config(), 3).unwrap();
        for layer in &params.layers {
            assert!(layer.norm_attn.scale.iter().all(|&v| v == 1.0));
            assert!(layer.norm_attn.shift.iter().all(|&v| v == 0.0));
            assert!(layer.norm_ff.scale.iter().all(|&v| v == 1.0));
        }
        assert!(params.pooler.bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn init_sample_mean_is_near_zero_and_truncated() {
        let config = ModelConfig {
            num_layers: 0,
            hidden_size: 128,
            num_heads: 1,
            ff_size: 1,
            max_positions: 8,
            vocab_size: 1000,
            preset_name: "stat".into(),
        };
        let params = init_params(&config, 1234).unwrap();
        let entries = params.token_embeddings.as_slice();
        assert!(entries.len() >= 100_000);
        let n = 100_000;
        let mean: f64 = entries[..n].iter().sum::<f64>() / n as f64;
        let bound = 3.0 * INIT_STD / (n as f64).sqrt();
        assert!(mean.abs() < bound, "mean {mean} exceeds {bound}");
        assert!(entries.iter().all(|v| v.abs() <= 2.0 * INIT_STD));
    }

    #[test]
    fn attention_single_position_returns_value() {
        let q = Matrix::from_vec(1, 2, vec![0.3, -0.7]);
        let k = Matrix::from_vec(1, 2, vec![1.0, 2.0]);
        let v = Matrix::from_vec(1, 2, vec![5.0, -4.0]);
        let out = attention(&q, &k, &v, &[1]).unwrap();
        assert_eq!(out.as_slice(), &[5.0, -4.0]);
    }

    #[test]
    fn attention_identical_keys_give_uniform_weights() {
        let q = Matrix::from_vec(3, 2, vec![0.1, 0.2, -0.3, 0.4, 0.0, 0.0]);
        let k = Matrix::from_vec(3, 2, vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let v = Matrix::from_vec(3, 2, vec![3.0, 0.0, 0.0, 3.0, 3.0, 3.0]);
        let (_, probs) = attention_with_probs(&q, &k, &v, &[1, 1, 1]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(probs.get(i, j), 1.0 / 3.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn attention_matches_dense_reference() {
        // Independent naive reference: explicit loops and a from-scratch
        // softmax, no shared helpers.
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let t = 5;
        let d = 3;
        let mut rand_mat =
            |r: usize, c: usize| Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
        let q = rand_mat(t, d);
        let k = rand_mat(t, d);
        let v = rand_mat(t, d);
        let out = attention(&q, &k, &v, &[1, 1, 1, 1, 1]).unwrap();

        for i in 0..t {
            let mut weights = vec![0.0; t];
            for j in 0..t {
                let mut dot = 0.0;
                for c in 0..d {
                    dot += q.get(i, c) * k.get(j, c);
                }
                weights[j] = (dot / (d as f64).sqrt()).exp();
            }
            let z: f64 = weights.iter().sum();
            for c in 0..d {
                let mut expect = 0.0;
                for j in 0..t {
                    expect += weights[j] / z * v.get(j, c);
                }
                assert_relative_eq!(out.get(i, c), expect, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn attention_masked_positions_get_exactly_zero_weight() {
        let q = Matrix::from_vec(2, 2, vec![0.5, -0.5, 0.25, 0.75]);
        let k = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let v = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let (out, probs) = attention_with_probs(&q, &k, &v, &[1, 0]).unwrap();
        for i in 0..2 {
            assert_eq!(probs.get(i, 1), 0.0);
            assert_relative_eq!(probs.get(i, 0), 1.0, epsilon = 1e-12);
            assert_relative_eq!(out.get(i, 0), 1.0, epsilon = 1e-12);
            assert_relative_eq!(out.get(i, 1), 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn attention_all_masked_errors() {
        let q = Matrix::from_vec(1, 2, vec![0.0, 0.0]);
        let err = attention(&q, &q, &q, &[0]).unwrap_err();
        assert!(matches!(err, ModelError::AllMasked));
    }

    #[test]
    fn forward_empty_batch_gives_empty_logits() {
        let params = init_params(&tiny_config(), 1).unwrap();
        let (logits, trace) = forward(&params, &[]).unwrap();
        assert_eq!(logits.rows(), 0);
        assert_eq!(logits.cols(), 2);
        assert!(trace.examples.is_empty());
    }

    #[test]
    fn forward_is_padding_invariant() {
        let params = init_params(&tiny_config(), 5).unwrap();
        let short = synthetic_pair(&[4, 5, 6], 8, true);
        let long = synthetic_pair(&[4, 5, 6], 16, true);
        let (a, _) = forward(&params, &[short]).unwrap();
        let (b, _) = forward(&params, &[long]).unwrap();
        assert!((a.get(0, 0) - b.get(0, 0)).abs() <= 1e-6);
        assert!((a.get(0, 1) - b.get(0, 1)).abs() <= 1e-6);
    }

    #[test]
    fn forward_rejects_out_of_range_token() {
        let params = init_params(&tiny_config(), 5).unwrap();
        let pair = synthetic_pair(&[9, 10, 11, 10, 99], 16, true);
        let err = forward(&params, &[pair]).unwrap_err();
        assert!(matches!(err, ModelError::TokenIdOutOfRange { id: 99, .. }));
    }

    #[test]
    fn attention_rows_in_trace_sum_to_one() {
        let config = ModelConfig { num_layers: 2, num_heads: 2, ..tiny_config() };
        let params = init_params(&config, 11).unwrap();
        let pair = synthetic_pair(&[4, 5, 6, 7, 8], 16, false);
        let (_, trace) = forward(&params, &[pair]).unwrap();
        for layer in &trace.examples[0].layers {
            for probs in &layer.attn_probs {
                for i in 0..probs.rows() {
                    let sum: f64 = probs.row(i).iter().sum();
                    assert!((sum - 1.0).abs() < 1e-6, "row sum {sum}");
                }
            }
        }
    }

    #[test]
    fn layer_norm_trace_has_standardized_rows() {
        let params = init_params(&tiny_config(), 13).unwrap();
        let pair = synthetic_pair(&[4, 5, 6, 7], 16, true);
        let (_, trace) = forward(&params, &[pair]).unwrap();
        let layer = &trace.examples[0].layers[0];
        for xhat in [&layer.xhat_attn, &layer.xhat_ff] {
            for i in 0..xhat.rows() {
                let row = xhat.row(i);
                let n = row.len() as f64;
                let mean = row.iter().sum::<f64>() / n;
                let var = row.iter().map(|v| v * v).sum::<f64>() / n;
                assert!(mean.abs() < 1e-6);
                assert!((var - 1.0).abs() < 1e-4);
            }
        }
    }

    /// Straight-line scalar reference for a 1-layer 1-head model, written
    /// independently of the Matrix helpers.
    fn naive_forward(params: &Parameters, pair: &EncodedPair) -> [f64; 2] {
        let cfg = &params.config;
        let t = pair.real_len();
        let h = cfg.hidden_size;
        let f = cfg.ff_size;
        assert_eq!(cfg.num_layers, 1);
        assert_eq!(cfg.num_heads, 1);

        let mut x = vec![vec![0.0f64; h]; t];
        for (i, row) in x.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = params.token_embeddings.get(pair.token_ids[i] as usize, j)
                    + params.segment_embeddings.get(pair.segment_ids[i] as usize, j)
                    + params.position_embeddings.get(i, j);
            }
        }
        let layer = &params.layers[0];
        let lin = |m: &Linear, x: &Vec<Vec<f64>>, outw: usize| -> Vec<Vec<f64>> {
            let inw = x[0].len();
            let mut y = vec![vec![0.0; outw]; x.len()];
            for i in 0..x.len() {
                for o in 0..outw {
                    let mut acc = m.bias[o];
                    for k in 0..inw {
                        acc += x[i][k] * m.weight.get(k, o);
                    }
                    y[i][o] = acc;
                }
            }
            y
        };
        let q = lin(&layer.attn_query, &x, h);
        let k = lin(&layer.attn_key, &x, h);
        let v = lin(&layer.attn_value, &x, h);
        let mut ctx = vec![vec![0.0; h]; t];
        for i in 0..t {
            let mut ws = vec![0.0; t];
            for j in 0..t {
                let mut dot = 0.0;
                for c in 0..h {
                    dot += q[i][c] * k[j][c];
                }
                ws[j] = (dot / (h as f64).sqrt()).exp();
            }
            let z: f64 = ws.iter().sum();
            for c in 0..h {
                for j in 0..t {
                    ctx[i][c] += ws[j] / z * v[j][c];
                }
            }
        }
        let attn = lin(&layer.attn_output, &ctx, h);
        let norm = |x: &Vec<Vec<f64>>, scale: &[f64], shift: &[f64]| -> Vec<Vec<f64>> {
            let mut y = vec![vec![0.0; x[0].len()]; x.len()];
            for i in 0..x.len() {
                let n = x[i].len() as f64;
                let mean = x[i].iter().sum::<f64>() / n;
                let var = x[i].iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                for j in 0..x[i].len() {
                    y[i][j] = scale[j] * (x[i][j] - mean) / (var + 1e-12).sqrt() + shift[j];
                }
            }
            y
        };
        let mut sum1 = attn.clone();
        for i in 0..t {
            for j in 0..h {
                sum1[i][j] += x[i][j];
            }
        }
        let x1 = norm(&sum1, &layer.norm_attn.scale, &layer.norm_attn.shift);
        let u = lin(&layer.ff_in, &x1, f);
        let mut g = u.clone();
        for row in &mut g {
            for v in row.iter_mut() {
                let c = 0.7978845608028654_f64;
                let inner = c * (*v + 0.044715 * *v * *v * *v);
                *v = 0.5 * *v * (1.0 + inner.tanh());
            }
        }
        let f2 = lin(&layer.ff_out, &g, h);
        let mut sum2 = f2.clone();
        for i in 0..t {
            for j in 0..h {
                sum2[i][j] += x1[i][j];
            }
        }
        let x2 = norm(&sum2, &layer.norm_ff.scale, &layer.norm_ff.shift);

        let mut pooled = vec![0.0; h];
        for o in 0..h {
            let mut acc = params.pooler.bias[o];
            for i in 0..h {
                acc += x2[0][i] * params.pooler.weight.get(i, o);
            }
            pooled[o] = acc.tanh();
        }
        let mut logits = [params.classifier.bias[0], params.classifier.bias[1]];
        for i in 0..h {
            logits[0] += pooled[i] * params.classifier.weight.get(i, 0);
            logits[1] += pooled[i] * params.classifier.weight.get(i, 1);
        }
        logits
    }

    #[test]
    fn forward_matches_naive_reference() {
        let params = init_params(&tiny_config(), 21).unwrap();
        let pair = synthetic_pair(&[4, 7, 5, 9], 16, true);
        let (logits, _) = forward(&params, std::slice::from_ref(&pair)).unwrap();
        let expect = naive_forward(&params, &pair);
        assert!((logits.get(0, 0) - expect[0]).abs() < 1e-6);
        assert!((logits.get(0, 1) - expect[1]).abs() < 1e-6);
    }

    #[test]
    fn predict_argmax_and_tie_rule() {
        // Zero classifier weights with a fixed bias pins the logits exactly.
        let config = tiny_config();
        let mut params = init_params(&config, 2).unwrap();
        let pair = synthetic_pair(&[4, 5], 8, true);

        params.classifier.weight = Matrix::zeros(config.hidden_size, 2);
        params.classifier.bias = vec![0.2, 0.9];
        assert_eq!(predict(&params, std::slice::from_ref(&pair)).unwrap(), vec![true]);

        params.classifier.bias = vec![0.9, 0.2];
        assert_eq!(predict(&params, std::slice::from_ref(&pair)).unwrap(), vec![false]);

        params.classifier.bias = vec![0.5, 0.5];
        assert_eq!(predict(&params, &[pair]).unwrap(), vec![false]);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let config = ModelConfig { num_layers: 2, ..tiny_config() };
        let params = init_params(&config, 33).unwrap();
        let mut bytes = Vec::new();
        save_checkpoint(&params, &mut bytes).unwrap();
        let loaded = load_checkpoint(bytes.as_slice()).unwrap();
        assert_eq!(loaded, params);

        let mut again = Vec::new();
        save_checkpoint(&loaded, &mut again).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let params = init_params(&tiny_config(), 1).unwrap();
        let mut bytes = Vec::new();
        save_checkpoint(&params, &mut bytes).unwrap();
        bytes[0] = b'X';
        assert!(matches!(
            load_checkpoint(bytes.as_slice()),
            Err(ModelError::BadCheckpoint(_))
        ));
        let mut truncated = Vec::new();
        save_checkpoint(&params, &mut truncated).unwrap();
        truncated.pop();
        assert!(matches!(
            load_checkpoint(truncated.as_slice()),
            Err(ModelError::BadCheckpoint(_))
        ));
    }
}
