//! Layer wrappers over the tape: recurrent sequence encoders, attention
//! pooling, self-attention, and plain MLPs.

use super::params::{ParamId, ParamSet};
use super::tape::{Act, NodeId, Tape};
use super::tensor::Tensor;
use crate::{Error, Result};
use rand::Rng;

/// Gated recurrent encoder parameters. Gate layout matches
/// [`Tape::gru_step`]: update gate `z`, reset gate `r`, candidate `g`,
/// with `h' = (1-z)⊙h + z⊙g`.
#[derive(Clone)]
pub struct GruParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    ids: [ParamId; 9],
}

impl GruParams {
    pub fn init(
        ps: &mut ParamSet,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut ids = Vec::with_capacity(9);
        for gate in ["z", "r", "h"] {
            ids.push(ps.add_dense_init(format!("{prefix}.w{gate}"), input_dim, hidden_dim, input_dim, rng)?);
            ids.push(ps.add_dense_init(format!("{prefix}.u{gate}"), hidden_dim, hidden_dim, hidden_dim, rng)?);
            ids.push(ps.add(format!("{prefix}.b{gate}"), Tensor::zeros(1, hidden_dim))?);
        }
        // stored in gru_step order [wz,uz,bz,wr,ur,br,wh,uh,bh]
        Ok(GruParams {
            input_dim,
            hidden_dim,
            ids: [ids[0], ids[1], ids[2], ids[3], ids[4], ids[5], ids[6], ids[7], ids[8]],
        })
    }

    /// All-zero weights; handy for fixed-point tests.
    pub fn zeros(ps: &mut ParamSet, prefix: &str, input_dim: usize, hidden_dim: usize) -> Result<Self> {
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let mut g = GruParams::init(ps, prefix, input_dim, hidden_dim, &mut rng)?;
        for id in g.ids {
            ps.value_mut(id).fill(0.0);
        }
        g.input_dim = input_dim;
        Ok(g)
    }

    pub fn param_ids(&self) -> &[ParamId; 9] {
        &self.ids
    }

    fn nodes(&self, tape: &mut Tape, ps: &ParamSet) -> [NodeId; 9] {
        self.ids.map(|id| tape.param(ps, id))
    }

    /// Encodes `seq [T,input] -> [T,hidden]`, returning every hidden state;
    /// the initial state is zero.
    pub fn encode(&self, tape: &mut Tape, ps: &ParamSet, seq: NodeId) -> Result<NodeId> {
        let h0 = tape.constant(Tensor::zeros(1, self.hidden_dim));
        self.encode_from(tape, ps, seq, h0)
    }

    /// Test hook: encode with an explicit initial state.
    pub fn encode_from(&self, tape: &mut Tape, ps: &ParamSet, seq: NodeId, h0: NodeId) -> Result<NodeId> {
        let len = tape.value(seq).rows();
        if len == 0 {
            return Err(Error::EmptySequence("gru_encode"));
        }
        if tape.value(seq).cols() != self.input_dim {
            return Err(Error::shape(
                "gru_encode",
                format!("input dim {} expected {}", tape.value(seq).cols(), self.input_dim),
            ));
        }
        let w = self.nodes(tape, ps);
        let mut h = h0;
        let mut states = Vec::with_capacity(len);
        for t in 0..len {
            let x = tape.slice_rows(seq, t, t + 1)?;
            h = tape.gru_step(x, h, w)?;
            states.push(h);
        }
        tape.stack_rows(&states)
    }
}

/// Projection parameters for multi-head attention. Absent projections mean
/// queries/keys/values are used as-is (the identity-projection mode).
#[derive(Clone)]
pub struct AttentionProj {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
}

impl AttentionProj {
    pub fn init(
        ps: &mut ParamSet,
        prefix: &str,
        key_dim: usize,
        value_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(AttentionProj {
            wq: ps.add_dense_init(format!("{prefix}.wq"), key_dim, key_dim, key_dim, rng)?,
            wk: ps.add_dense_init(format!("{prefix}.wk"), key_dim, key_dim, key_dim, rng)?,
            wv: ps.add_dense_init(format!("{prefix}.wv"), value_dim, value_dim, value_dim, rng)?,
            wo: ps.add_dense_init(format!("{prefix}.wo"), value_dim, value_dim, value_dim, rng)?,
        })
    }
}

#[derive(Clone, Default)]
pub struct AttentionConfig {
    pub heads: usize,
    pub proj: Option<AttentionProj>,
}

impl AttentionConfig {
    /// Single head, identity projections: the literal softmaxed
    /// inner-product matching.
    pub fn single() -> Self {
        AttentionConfig { heads: 1, proj: None }
    }
}

fn split_heads(
    tape: &mut Tape,
    node: NodeId,
    heads: usize,
    what: &'static str,
) -> Result<Vec<NodeId>> {
    let dim = tape.value(node).cols();
    if heads == 0 || dim % heads != 0 {
        return Err(Error::shape(what, format!("dim {dim} not divisible by {heads} heads")));
    }
    let per = dim / heads;
    (0..heads)
        .map(|h| tape.slice_cols(node, h * per, (h + 1) * per))
        .collect()
}

/// Pools `values [L,v]` by attention of `query [1,d]` against `keys [L,d]`.
///
/// With one head and no projections this is exactly
/// `Σ_i softmax_i(⟨query, key_i⟩) · value_i`; with several heads the scores
/// are scaled by `1/sqrt(d/heads)` and the per-head sums are concatenated
/// and merged through the output projection when one is configured.
pub fn attention_pool(
    tape: &mut Tape,
    ps: &ParamSet,
    query: NodeId,
    keys: NodeId,
    values: NodeId,
    cfg: &AttentionConfig,
) -> Result<NodeId> {
    if tape.value(keys).rows() == 0 {
        return Err(Error::EmptySequence("attention_pool"));
    }
    let heads = cfg.heads.max(1);
    let (q, k, v) = match &cfg.proj {
        None => (query, keys, values),
        Some(p) => {
            let wq = tape.param(ps, p.wq);
            let wk = tape.param(ps, p.wk);
            let wv = tape.param(ps, p.wv);
            (tape.matmul(query, wq)?, tape.matmul(keys, wk)?, tape.matmul(values, wv)?)
        }
    };
    let out = if heads == 1 {
        tape.attend(q, k, v, 1.0)?
    } else {
        let d = tape.value(q).cols();
        let scale = 1.0 / ((d / heads) as f64).sqrt();
        let qs = split_heads(tape, q, heads, "attention_pool")?;
        let ks = split_heads(tape, k, heads, "attention_pool")?;
        let vs = split_heads(tape, v, heads, "attention_pool")?;
        let pooled: Vec<NodeId> = qs
            .iter()
            .zip(&ks)
            .zip(&vs)
            .map(|((&qh, &kh), &vh)| tape.attend(qh, kh, vh, scale))
            .collect::<Result<_>>()?;
        tape.concat_cols(&pooled)?
    };
    match &cfg.proj {
        Some(p) => {
            let wo = tape.param(ps, p.wo);
            tape.matmul(out, wo)
        }
        None => Ok(out),
    }
}

/// Self-attention over `seq [L,d]`; every position attends over all
/// positions with scores scaled by `1/sqrt(d/heads)`.
pub fn self_attention(
    tape: &mut Tape,
    ps: &ParamSet,
    seq: NodeId,
    cfg: &AttentionConfig,
) -> Result<NodeId> {
    if tape.value(seq).rows() == 0 {
        return Err(Error::EmptySequence("self_attention"));
    }
    let heads = cfg.heads.max(1);
    let (q, k, v) = match &cfg.proj {
        None => (seq, seq, seq),
        Some(p) => {
            let wq = tape.param(ps, p.wq);
            let wk = tape.param(ps, p.wk);
            let wv = tape.param(ps, p.wv);
            (tape.matmul(seq, wq)?, tape.matmul(seq, wk)?, tape.matmul(seq, wv)?)
        }
    };
    let d = tape.value(q).cols();
    if d % heads != 0 {
        return Err(Error::shape("self_attention", format!("dim {d} vs {heads} heads")));
    }
    let scale = 1.0 / ((d / heads) as f64).sqrt();
    let out = if heads == 1 {
        tape.attend(q, k, v, scale)?
    } else {
        let qs = split_heads(tape, q, heads, "self_attention")?;
        let ks = split_heads(tape, k, heads, "self_attention")?;
        let vs = split_heads(tape, v, heads, "self_attention")?;
        let per: Vec<NodeId> = qs
            .iter()
            .zip(&ks)
            .zip(&vs)
            .map(|((&qh, &kh), &vh)| tape.attend(qh, kh, vh, scale))
            .collect::<Result<_>>()?;
        tape.concat_cols(&per)?
    };
    match &cfg.proj {
        Some(p) => {
            let wo = tape.param(ps, p.wo);
            tape.matmul(out, wo)
        }
        None => Ok(out),
    }
}

/// Mean over positions, `[L,d] -> [1,d]`.
pub fn mean_pool(tape: &mut Tape, seq: NodeId) -> Result<NodeId> {
    tape.mean_rows(seq)
}

/// Plain MLP with tanh hidden layers and a linear output.
#[derive(Clone)]
pub struct Mlp {
    pub dims: Vec<usize>,
    layers: Vec<(ParamId, ParamId)>,
}

impl Mlp {
    pub fn init(
        ps: &mut ParamSet,
        prefix: &str,
        dims: &[usize],
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config(format!("mlp {prefix} needs at least in/out dims")));
        }
        let mut layers = Vec::new();
        for (i, pair) in dims.windows(2).enumerate() {
            let w = ps.add_dense_init(format!("{prefix}.w{i}"), pair[0], pair[1], pair[0], rng)?;
            let b = ps.add(format!("{prefix}.b{i}"), Tensor::zeros(1, pair[1]))?;
            layers.push((w, b));
        }
        Ok(Mlp { dims: dims.to_vec(), layers })
    }

    pub fn forward(&self, tape: &mut Tape, ps: &ParamSet, x: NodeId) -> Result<NodeId> {
        let mut cur = x;
        let last = self.layers.len() - 1;
        for (i, (w, b)) in self.layers.iter().enumerate() {
            let wn = tape.param(ps, *w);
            let bn = tape.param(ps, *b);
            let act = if i == last { Act::Linear } else { Act::Tanh };
            cur = tape.dense(cur, wn, bn, act)?;
        }
        Ok(cur)
    }
}
