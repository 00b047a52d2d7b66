use super::{AttentionLayer, SelectorConfig, SelectorParams};
use crate::error::{Error, Result};
use crate::numerics::{dot, matmul, sigmoid, softmax_rows, topk_indices, Matrix};
use crate::stream::{retained_counts, Chunk, CompressionConfig};
use crate::stvp::VideoSelection;

/// Where keys and values come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Guidance {
    /// Keys/values are the pruned video tokens (projected by `video_in`).
    Vision,
    /// Keys/values are the chunk's own audio tokens (projected by `audio_in`).
    AudioOnly,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AudioSelection {
    pub mask: Vec<bool>,
    pub kept_audio: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectorOutput {
    /// Per-token saliency in `(0, 1)`.
    pub scores: Vec<f64>,
    pub mask: Vec<bool>,
    pub kept_audio: Vec<usize>,
    /// Context-aware audio representations, `n_a × h`.
    pub contextual: Matrix,
}

impl SelectorOutput {
    /// `m_j · z_j`: selected audio rows unchanged, dropped rows zeroed.
    pub fn masked_audio(&self, audio: &Matrix) -> Matrix {
        let mut out = audio.clone();
        for (j, &keep) in self.mask.iter().enumerate() {
            if !keep {
                out.row_mut(j).fill(0.0);
            }
        }
        out
    }
}

fn check_params(params: &SelectorParams, cfg: &SelectorConfig) -> Result<()> {
    cfg.check()?;
    let (d, h, m) = (cfg.dim, cfg.hidden, cfg.mlp_hidden);
    let mut expected = vec![(d, h), (d, h)];
    expected.extend(std::iter::repeat_n((h, h), 4 * cfg.layers));
    expected.push((h, m));
    expected.push((m, 1));
    let named = params.named();
    if named.len() != expected.len() {
        return Err(Error::Shape(format!(
            "parameters have {} layers, config expects {}",
            params.layers.len(),
            cfg.layers
        )));
    }
    for ((name, a), (fi, fo)) in named.iter().zip(expected) {
        if a.weight.shape() != (fi, fo) || a.bias.len() != fo {
            return Err(Error::Shape(format!(
                "{name} is {:?}+{}, config expects {fi}x{fo}",
                a.weight.shape(),
                a.bias.len()
            )));
        }
    }
    Ok(())
}

struct LayerTrace {
    input: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    probs: Vec<Matrix>,
    concat: Matrix,
}

struct Trace {
    guidance: Guidance,
    cfg: SelectorConfig,
    params: SelectorParams,
    audio: Matrix,
    context: Option<Matrix>,
    ctx: Matrix,
    layers: Vec<LayerTrace>,
    contextual: Matrix,
    pre_hidden: Matrix,
    hidden: Matrix,
    scores: Vec<f64>,
}

fn attention_layer(
    x: &Matrix,
    ctx: &Matrix,
    layer: &AttentionLayer,
    heads: usize,
) -> Result<(Matrix, LayerTrace)> {
    let q = layer.query.apply(x)?;
    let k = layer.key.apply(ctx)?;
    let v = layer.value.apply(ctx)?;
    let width = q.cols() / heads;
    let scale = 1.0 / (width as f64).sqrt();
    let mut concat = Matrix::zeros(x.rows(), q.cols());
    let mut probs = Vec::with_capacity(heads);
    for e in 0..heads {
        let qe = q.column_block(e * width, width);
        let ke = k.column_block(e * width, width);
        let ve = v.column_block(e * width, width);
        let logits = matmul(&qe, &ke.transpose())?.scale(scale);
        let pe = softmax_rows(&logits);
        concat.set_column_block(e * width, &matmul(&pe, &ve)?);
        probs.push(pe);
    }
    let out = layer.output.apply(&concat)?;
    Ok((
        out,
        LayerTrace {
            input: x.clone(),
            q,
            k,
            v,
            probs,
            concat,
        },
    ))
}

/// Runs projections and attention; returns the contextual matrix and a
/// partially filled trace (scores are added by the caller).
fn encode(
    audio: &Matrix,
    context: Option<&Matrix>,
    params: &SelectorParams,
    cfg: &SelectorConfig,
) -> Result<(Matrix, Vec<LayerTrace>, Matrix)> {
    check_params(params, cfg)?;
    if audio.cols() != cfg.dim {
        return Err(Error::Shape(format!(
            "audio has {} columns, selector expects D = {}",
            audio.cols(),
            cfg.dim
        )));
    }
    if audio.rows() == 0 {
        return Err(Error::Precondition("no audio tokens to score".into()));
    }
    let x0 = params.audio_in.apply(audio)?;
    let ctx = match context {
        Some(video) => {
            if video.rows() == 0 {
                return Err(Error::Precondition(
                    "cross-attention needs at least one visual anchor token".into(),
                ));
            }
            if video.cols() != cfg.dim {
                return Err(Error::Shape(format!(
                    "video has {} columns, selector expects D = {}",
                    video.cols(),
                    cfg.dim
                )));
            }
            params.video_in.apply(video)?
        }
        None => x0.clone(),
    };
    let mut x = x0;
    let mut traces = Vec::with_capacity(cfg.layers);
    for layer in &params.layers {
        let (next, trace) = attention_layer(&x, &ctx, layer, cfg.heads)?;
        traces.push(trace);
        x = next;
    }
    Ok((x, traces, ctx))
}

/// Audio-queried multi-head attention over `video` (`n̂_v × D`); returns `n_a × h`.
pub fn cross_attend(
    audio: &Matrix,
    video: &Matrix,
    params: &SelectorParams,
    cfg: &SelectorConfig,
) -> Result<Matrix> {
    encode(audio, Some(video), params, cfg).map(|(x, _, _)| x)
}

/// Same block with the audio tokens supplying queries, keys and values.
pub fn self_attend(
    audio: &Matrix,
    params: &SelectorParams,
    cfg: &SelectorConfig,
) -> Result<Matrix> {
    encode(audio, None, params, cfg).map(|(x, _, _)| x)
}

fn score_head(contextual: &Matrix, params: &SelectorParams) -> Result<(Matrix, Matrix, Vec<f64>)> {
    let pre = params.score_hidden.apply(contextual)?;
    let mut hidden = pre.clone();
    for v in hidden.as_mut_slice() {
        *v = v.max(0.0);
    }
    let logits = params.score_out.apply(&hidden)?;
    let scores = logits.as_slice().iter().map(|&z| sigmoid(z)).collect();
    Ok((pre, hidden, scores))
}

/// `σ(W2·relu(W1·h + b1) + b2)` per row.
pub fn score_tokens(contextual: &Matrix, params: &SelectorParams) -> Result<Vec<f64>> {
    score_head(contextual, params).map(|(_, _, s)| s)
}

pub fn select_audio(
    audio: &Matrix,
    scores: &[f64],
    cfg: &CompressionConfig,
) -> Result<AudioSelection> {
    if scores.len() != audio.rows() {
        return Err(Error::Shape(format!(
            "{} scores for {} audio tokens",
            scores.len(),
            audio.rows()
        )));
    }
    let keep = retained_counts(cfg, 1, audio.rows()).audio;
    let kept_audio = topk_indices(scores, keep)?;
    let mut mask = vec![false; scores.len()];
    for &j in &kept_audio {
        mask[j] = true;
    }
    Ok(AudioSelection { mask, kept_audio })
}

fn run(
    guidance: Guidance,
    audio: &Matrix,
    video: Option<&Matrix>,
    params: &SelectorParams,
    scfg: &SelectorConfig,
    ccfg: &CompressionConfig,
) -> Result<(SelectorOutput, Trace)> {
    let (contextual, layers, ctx) = encode(audio, video, params, scfg)?;
    let (pre_hidden, hidden, scores) = score_head(&contextual, params)?;
    let sel = select_audio(audio, &scores, ccfg)?;
    let output = SelectorOutput {
        scores: scores.clone(),
        mask: sel.mask,
        kept_audio: sel.kept_audio,
        contextual: contextual.clone(),
    };
    let trace = Trace {
        guidance,
        cfg: *scfg,
        params: params.clone(),
        audio: audio.clone(),
        context: video.cloned(),
        ctx,
        layers,
        contextual,
        pre_hidden,
        hidden,
        scores,
    };
    Ok((output, trace))
}

/// Cross-attend over the STVP-kept video tokens, score, and keep the top `n̂_a` audio tokens.
pub fn forward(
    chunk: &Chunk,
    video: &VideoSelection,
    params: &SelectorParams,
    scfg: &SelectorConfig,
    ccfg: &CompressionConfig,
) -> Result<SelectorOutput> {
    let pruned = video.pruned_tokens(chunk)?;
    run(
        Guidance::Vision,
        &chunk.audio,
        Some(&pruned),
        params,
        scfg,
        ccfg,
    )
    .map(|(o, _)| o)
}

/// Audio-only ablation: intra-audio self-attention in place of visual guidance.
pub fn forward_audio_only(
    chunk: &Chunk,
    params: &SelectorParams,
    scfg: &SelectorConfig,
    ccfg: &CompressionConfig,
) -> Result<SelectorOutput> {
    run(Guidance::AudioOnly, &chunk.audio, None, params, scfg, ccfg).map(|(o, _)| o)
}

/// Records one forward pass so that gradients can be taken afterwards.
#[derive(Default)]
pub struct Tape {
    trace: Option<Trace>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(
        &mut self,
        chunk: &Chunk,
        video: &VideoSelection,
        params: &SelectorParams,
        scfg: &SelectorConfig,
        ccfg: &CompressionConfig,
    ) -> Result<SelectorOutput> {
        let pruned = video.pruned_tokens(chunk)?;
        self.record(
            Guidance::Vision,
            &chunk.audio,
            Some(&pruned),
            params,
            scfg,
            ccfg,
        )
    }

    pub fn forward_audio_only(
        &mut self,
        chunk: &Chunk,
        params: &SelectorParams,
        scfg: &SelectorConfig,
        ccfg: &CompressionConfig,
    ) -> Result<SelectorOutput> {
        self.record(Guidance::AudioOnly, &chunk.audio, None, params, scfg, ccfg)
    }

    /// Low-level entry: `video` must be `Some` for [`Guidance::Vision`] and is
    /// ignored for [`Guidance::AudioOnly`].
    pub fn record(
        &mut self,
        guidance: Guidance,
        audio: &Matrix,
        video: Option<&Matrix>,
        params: &SelectorParams,
        scfg: &SelectorConfig,
        ccfg: &CompressionConfig,
    ) -> Result<SelectorOutput> {
        let video =
            match guidance {
                Guidance::Vision => Some(video.ok_or_else(|| {
                    Error::Precondition("vision guidance needs video tokens".into())
                })?),
                Guidance::AudioOnly => None,
            };
        self.trace = None;
        let (out, trace) = run(guidance, audio, video, params, scfg, ccfg)?;
        self.trace = Some(trace);
        Ok(out)
    }

    pub fn clear(&mut self) {
        self.trace = None;
    }

    fn trace(&self) -> Result<&Trace> {
        self.trace
            .as_ref()
            .ok_or_else(|| Error::State("backward called before any forward pass".into()))
    }

    /// Straight-through score gradient: `∂L/∂s_j = ⟨∂L/∂ẑ_j, z_j⟩` for every
    /// token, selected or not.
    pub fn score_gradient(&self, upstream: &Matrix) -> Result<Vec<f64>> {
        let t = self.trace()?;
        if upstream.shape() != t.audio.shape() {
            return Err(Error::Shape(format!(
                "upstream gradient is {:?}, audio is {:?}",
                upstream.shape(),
                t.audio.shape()
            )));
        }
        Ok(upstream
            .row_iter()
            .zip(t.audio.row_iter())
            .map(|(g, z)| dot(g, z))
            .collect())
    }

    /// Parameter gradients given `∂L/∂ẑ` for the masked audio output
    /// (`n_a × D`). Token embeddings are treated as constants.
    pub fn backward_ste(&self, upstream: &Matrix) -> Result<SelectorParams> {
        let ds = self.score_gradient(upstream)?;
        self.backward_scores(&ds)
    }

    /// Parameter gradients given `∂L/∂s` directly (exact reverse mode through
    /// the score head and attention).
    pub fn backward_scores(&self, dscores: &[f64]) -> Result<SelectorParams> {
        let t = self.trace()?;
        let n_a = t.audio.rows();
        if dscores.len() != n_a {
            return Err(Error::Shape(format!(
                "{} score gradients for {n_a} tokens",
                dscores.len()
            )));
        }
        let p = &t.params;
        let cfg = &t.cfg;
        let mut g = SelectorParams::zeros(cfg);

        let dlogit: Vec<f64> = dscores
            .iter()
            .zip(&t.scores)
            .map(|(d, s)| d * s * (1.0 - s))
            .collect();
        let dlogit = Matrix::new(n_a, 1, dlogit)?;
        g.score_out.weight = matmul(&t.hidden.transpose(), &dlogit)?;
        g.score_out.bias = dlogit.column_sums();

        let mut dhidden = matmul(&dlogit, &p.score_out.weight.transpose())?;
        for (dv, &pre) in dhidden
            .as_mut_slice()
            .iter_mut()
            .zip(t.pre_hidden.as_slice())
        {
            if pre <= 0.0 {
                *dv = 0.0;
            }
        }
        g.score_hidden.weight = matmul(&t.contextual.transpose(), &dhidden)?;
        g.score_hidden.bias = dhidden.column_sums();

        let mut dx = matmul(&dhidden, &p.score_hidden.weight.transpose())?;
        let mut dctx = Matrix::zeros(t.ctx.rows(), t.ctx.cols());
        let width = cfg.head_dim();
        let scale = 1.0 / (width as f64).sqrt();

        for (l, (lt, lp)) in t.layers.iter().zip(&p.layers).enumerate().rev() {
            let lg = &mut g.layers[l];
            lg.output.weight = matmul(&lt.concat.transpose(), &dx)?;
            lg.output.bias = dx.column_sums();
            let dconcat = matmul(&dx, &lp.output.weight.transpose())?;

            let mut dq = Matrix::zeros(lt.q.rows(), lt.q.cols());
            let mut dk = Matrix::zeros(lt.k.rows(), lt.k.cols());
            let mut dv = Matrix::zeros(lt.v.rows(), lt.v.cols());
            for (e, pe) in lt.probs.iter().enumerate() {
                let off = e * width;
                let qe = lt.q.column_block(off, width);
                let ke = lt.k.column_block(off, width);
                let ve = lt.v.column_block(off, width);
                let dhe = dconcat.column_block(off, width);

                let dpe = matmul(&dhe, &ve.transpose())?;
                dv.set_column_block(off, &matmul(&pe.transpose(), &dhe)?);

                // Softmax Jacobian per row: dS = P ⊙ (dP − Σ_k dP·P).
                let mut dlogits = Matrix::zeros(pe.rows(), pe.cols());
                for r in 0..pe.rows() {
                    let inner = dot(dpe.row(r), pe.row(r));
                    for c in 0..pe.cols() {
                        dlogits[(r, c)] = pe[(r, c)] * (dpe[(r, c)] - inner) * scale;
                    }
                }
                dq.set_column_block(off, &matmul(&dlogits, &ke)?);
                dk.set_column_block(off, &matmul(&dlogits.transpose(), &qe)?);
            }

            lg.query.weight = matmul(&lt.input.transpose(), &dq)?;
            lg.query.bias = dq.column_sums();
            lg.key.weight = matmul(&t.ctx.transpose(), &dk)?;
            lg.key.bias = dk.column_sums();
            lg.value.weight = matmul(&t.ctx.transpose(), &dv)?;
            lg.value.bias = dv.column_sums();

            dctx.add_assign(&matmul(&dk, &lp.key.weight.transpose())?);
            dctx.add_assign(&matmul(&dv, &lp.value.weight.transpose())?);
            dx = matmul(&dq, &lp.query.weight.transpose())?;
        }

        match t.guidance {
            Guidance::Vision => {
                let video = t.context.as_ref().expect("vision trace stores its context");
                g.video_in.weight = matmul(&video.transpose(), &dctx)?;
                g.video_in.bias = dctx.column_sums();
            }
            // Keys and values were the projected audio itself.
            Guidance::AudioOnly => dx.add_assign(&dctx),
        }
        g.audio_in.weight = matmul(&t.audio.transpose(), &dx)?;
        g.audio_in.bias = dx.column_sums();
        Ok(g)
    }
}
