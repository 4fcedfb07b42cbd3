//! Per-modality item encoders.
//!
//! Each modality maps its raw feature vector through an affine layer (with an
//! optional rectified hidden layer in front) and projects the result onto the
//! unit sphere. Fused item embeddings concatenate the unit-norm parts.
//!
//! Arithmetic is 64-bit. Parameters are kept at 32-bit precision between
//! optimizer steps so they serialize without loss.

use rand::Rng;

use crate::error::{Error, Result};

/// Norms below this are treated as a dead encoder or an all-zero input.
pub const DEGENERATE_NORM: f64 = 1e-12;

pub(crate) fn round_f32(v: f64) -> f64 {
    f64::from(v as f32)
}

/// Dense affine layer, `weight` row-major `out_dim × in_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub out_dim: usize,
    pub in_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    /// Uniform in `±1/sqrt(in_dim)`, zero bias.
    pub fn init(out_dim: usize, in_dim: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weight = (0..out_dim * in_dim)
            .map(|_| round_f32(rng.random_range(-bound..=bound)))
            .collect();
        Self {
            out_dim,
            in_dim,
            weight,
            bias: vec![0.0; out_dim],
        }
    }

    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            out_dim,
            in_dim,
            weight: vec![0.0; out_dim * in_dim],
            bias: vec![0.0; out_dim],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.out_dim, self.in_dim)
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.weight
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    /// `grad.weight += g ⊗ x`, `grad.bias += g`.
    fn accumulate(grad: &mut Dense, x: &[f64], g: &[f64]) {
        for ((row, gb), &gi) in grad
            .weight
            .chunks_exact_mut(grad.in_dim)
            .zip(grad.bias.iter_mut())
            .zip(g)
        {
            *gb += gi;
            if gi != 0.0 {
                row.iter_mut().zip(x).for_each(|(w, v)| *w += gi * v);
            }
        }
    }

    /// `Wᵀ g`.
    fn backward_input(&self, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.in_dim];
        for (row, &gi) in self.weight.chunks_exact(self.in_dim).zip(g) {
            if gi != 0.0 {
                out.iter_mut().zip(row).for_each(|(o, w)| *o += gi * w);
            }
        }
        out
    }
}

/// Element-wise input dropout factors: `0` for dropped entries, `1/(1-rate)`
/// for kept ones.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask(pub Vec<f64>);

impl DropoutMask {
    pub fn sample(dim: usize, rate: f64, rng: &mut impl Rng) -> Self {
        let keep = 1.0 / (1.0 - rate);
        Self(
            (0..dim)
                .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
                .collect(),
        )
    }

    pub fn full_keep(dim: usize) -> Self {
        Self(vec![1.0; dim])
    }

    pub fn all_drop(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModalityEncoder {
    pub modality: String,
    pub hidden: Option<Dense>,
    pub output: Dense,
}

/// Forward intermediates needed by the backward pass.
#[derive(Clone, Debug)]
pub struct EncodeTrace {
    input: Vec<f64>,
    hidden_pre: Option<Vec<f64>>,
    hidden_out: Option<Vec<f64>>,
    norm: f64,
    /// Unit-norm output.
    pub output: Vec<f64>,
}

impl ModalityEncoder {
    pub fn new(
        modality: impl Into<String>,
        input_dim: usize,
        embed_dim: usize,
        hidden_dim: Option<usize>,
        rng: &mut impl Rng,
    ) -> Self {
        let (hidden, out_in) = match hidden_dim {
            Some(h) => (Some(Dense::init(h, input_dim, rng)), h),
            None => (None, input_dim),
        };
        Self {
            modality: modality.into(),
            hidden,
            output: Dense::init(embed_dim, out_in, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.as_ref().map_or(self.output.in_dim, |h| h.in_dim)
    }

    pub fn embed_dim(&self) -> usize {
        self.output.out_dim
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            modality: self.modality.clone(),
            hidden: self.hidden.as_ref().map(Dense::zeros_like),
            output: self.output.zeros_like(),
        }
    }

    /// Tensors in a fixed order: hidden weight/bias (if any), output weight/bias.
    pub fn tensors(&self) -> Vec<(&'static str, &Vec<f64>)> {
        let mut v = Vec::with_capacity(4);
        if let Some(h) = &self.hidden {
            v.push(("hidden.weight", &h.weight));
            v.push(("hidden.bias", &h.bias));
        }
        v.push(("output.weight", &self.output.weight));
        v.push(("output.bias", &self.output.bias));
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Vec<f64>)> {
        let mut v = Vec::with_capacity(4);
        if let Some(h) = &mut self.hidden {
            v.push(("hidden.weight", &mut h.weight));
            v.push(("hidden.bias", &mut h.bias));
        }
        v.push(("output.weight", &mut self.output.weight));
        v.push(("output.bias", &mut self.output.bias));
        v
    }

    pub fn forward(&self, raw: &[f32], mask: Option<&DropoutMask>) -> Result<EncodeTrace> {
        let dim = self.input_dim();
        if raw.len() != dim {
            return Err(Error::dims(
                format!("{} encoder input", self.modality),
                dim,
                raw.len(),
            ));
        }
        let input: Vec<f64> = match mask {
            Some(m) => {
                if m.0.len() != dim {
                    return Err(Error::dims("dropout mask", dim, m.0.len()));
                }
                raw.iter().zip(&m.0).map(|(&x, f)| f64::from(x) * f).collect()
            }
            None => raw.iter().map(|&x| f64::from(x)).collect(),
        };
        let (hidden_pre, hidden_out, z) = match &self.hidden {
            Some(h) => {
                let pre = h.forward(&input);
                let out: Vec<f64> = pre.iter().map(|v| v.max(0.0)).collect();
                let z = self.output.forward(&out);
                (Some(pre), Some(out), z)
            }
            None => (None, None, self.output.forward(&input)),
        };
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm.is_nan() || norm < DEGENERATE_NORM {
            return Err(Error::DegenerateEmbedding { norm });
        }
        let output = z.iter().map(|v| v / norm).collect();
        Ok(EncodeTrace {
            input,
            hidden_pre,
            hidden_out,
            norm,
            output,
        })
    }

    /// Back-propagate `upstream` (gradient w.r.t. the unit-norm output) and
    /// accumulate parameter gradients into `grads`.
    pub fn backward(&self, trace: &EncodeTrace, upstream: &[f64], grads: &mut ModalityEncoder) {
        let gz = normalization_backward(&trace.output, trace.norm, upstream);
        match (&self.hidden, &mut grads.hidden) {
            (Some(h), Some(gh)) => {
                let out = trace.hidden_out.as_ref().expect("hidden trace");
                let pre = trace.hidden_pre.as_ref().expect("hidden trace");
                Dense::accumulate(&mut grads.output, out, &gz);
                let mut g_hidden = self.output.backward_input(&gz);
                g_hidden
                    .iter_mut()
                    .zip(pre)
                    .for_each(|(g, &a)| if a <= 0.0 { *g = 0.0 });
                Dense::accumulate(gh, &trace.input, &g_hidden);
                let _ = h;
            }
            _ => Dense::accumulate(&mut grads.output, &trace.input, &gz),
        }
    }
}

/// Jacobian of `z ↦ z/‖z‖` applied to `upstream`: `(I − uuᵀ) g / ‖z‖`.
pub fn normalization_backward(u: &[f64], norm: f64, upstream: &[f64]) -> Vec<f64> {
    let radial: f64 = u.iter().zip(upstream).map(|(a, b)| a * b).sum();
    upstream
        .iter()
        .zip(u)
        .map(|(g, ui)| (g - radial * ui) / norm)
        .collect()
}

/// All modality encoders of a model, in fusion order.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub encoders: Vec<ModalityEncoder>,
    pub dropout_rate: f64,
}

impl EncoderParams {
    pub fn embed_dim(&self) -> usize {
        self.encoders.first().map_or(0, ModalityEncoder::embed_dim)
    }

    pub fn fused_dim(&self) -> usize {
        self.embed_dim() * self.encoders.len()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            encoders: self.encoders.iter().map(ModalityEncoder::zeros_like).collect(),
            dropout_rate: self.dropout_rate,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum EmbeddingKind {
    Single(String),
    Fused(Vec<String>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ItemEmbedding {
    pub values: Vec<f64>,
    pub kind: EmbeddingKind,
}

/// Encode one item for one modality; `mask` is only supplied during training.
pub fn encode(
    encoder: &ModalityEncoder,
    raw: &[f32],
    mask: Option<&DropoutMask>,
) -> Result<ItemEmbedding> {
    let trace = encoder.forward(raw, mask)?;
    Ok(ItemEmbedding {
        values: trace.output,
        kind: EmbeddingKind::Single(encoder.modality.clone()),
    })
}

/// Parameter gradients of `⟨upstream, encode(raw)⟩`, returned in an
/// encoder-shaped buffer.
pub fn encode_backward(
    encoder: &ModalityEncoder,
    raw: &[f32],
    mask: Option<&DropoutMask>,
    upstream: &[f64],
) -> Result<ModalityEncoder> {
    if upstream.len() != encoder.embed_dim() {
        return Err(Error::dims("upstream gradient", encoder.embed_dim(), upstream.len()));
    }
    let trace = encoder.forward(raw, mask)?;
    let mut grads = encoder.zeros_like();
    encoder.backward(&trace, upstream, &mut grads);
    Ok(grads)
}

/// Concatenate unit-norm single-modality embeddings in the given order.
pub fn fuse(parts: &[ItemEmbedding]) -> Result<ItemEmbedding> {
    let mut names = Vec::with_capacity(parts.len());
    let mut dim = None;
    for p in parts {
        let EmbeddingKind::Single(name) = &p.kind else {
            return Err(Error::Invalid("cannot fuse an already fused embedding".into()));
        };
        if names.contains(name) {
            return Err(Error::Invalid(format!("modality {name:?} fused twice")));
        }
        match dim {
            None => dim = Some(p.values.len()),
            Some(d) if d != p.values.len() => {
                return Err(Error::dims("fused modality width", d, p.values.len()))
            }
            _ => {}
        }
        names.push(name.clone());
    }
    match parts {
        [] => Err(Error::Invalid("nothing to fuse".into())),
        [single] => Ok(single.clone()),
        _ => Ok(ItemEmbedding {
            values: parts.iter().flat_map(|p| p.values.iter().copied()).collect(),
            kind: EmbeddingKind::Fused(names),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_encoder(d: usize) -> ModalityEncoder {
        let mut w = vec![0.0; d * d];
        for i in 0..d {
            w[i * d + i] = 1.0;
        }
        ModalityEncoder {
            modality: "visual".into(),
            hidden: None,
            output: Dense {
                out_dim: d,
                in_dim: d,
                weight: w,
                bias: vec![0.0; d],
            },
        }
    }

    fn random_encoder(rng: &mut ChaCha8Rng, d: usize, din: usize, hidden: Option<usize>) -> ModalityEncoder {
        let mut e = ModalityEncoder::new("visual", din, d, hidden, rng);
        for (_, t) in e.tensors_mut() {
            t.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        }
        e
    }

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn pure_normalization() {
        let e = identity_encoder(4);
        let out = encode(&e, &[3.0, 4.0, 0.0, 0.0], None).unwrap();
        assert_eq!(out.values, vec![0.6, 0.8, 0.0, 0.0]);
    }

    #[test]
    fn bias_only() {
        let mut e = identity_encoder(3);
        e.output.weight.iter_mut().for_each(|w| *w = 0.0);
        e.output.bias = vec![1.0, 0.0, 0.0];
        let out = encode(&e, &[5.0, -2.0, 9.0], None).unwrap();
        assert_eq!(out.values, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_input_is_degenerate() {
        let e = identity_encoder(3);
        assert!(matches!(
            encode(&e, &[0.0; 3], None),
            Err(Error::DegenerateEmbedding { .. })
        ));
        assert!(matches!(
            encode_backward(&e, &[1.0; 3], Some(&DropoutMask::all_drop(3)), &[1.0; 3]),
            Err(Error::DegenerateEmbedding { .. })
        ));
    }

    #[test]
    fn radial_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let e = random_encoder(&mut rng, 5, 8, None);
        let raw: Vec<f32> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let u = encode(&e, &raw, None).unwrap().values;
        let g = encode_backward(&e, &raw, None, &u).unwrap();
        for (_, t) in g.tensors() {
            assert!(t.iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn all_drop_input_zeroes_weight_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut e = random_encoder(&mut rng, 5, 8, None);
        e.output.bias = (0..5).map(|i| 0.3 + i as f64 * 0.1).collect();
        let raw: Vec<f32> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let up: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = encode_backward(&e, &raw, Some(&DropoutMask::all_drop(8)), &up).unwrap();
        assert!(g.output.weight.iter().all(|&v| v == 0.0));
        assert!(g.output.bias.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn zero_rate_matches_full_keep_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let e = random_encoder(&mut rng, 6, 8, Some(5));
        let raw: Vec<f32> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sampled = DropoutMask::sample(8, 0.0, &mut rng);
        assert_eq!(sampled, DropoutMask::full_keep(8));
        let a = encode(&e, &raw, None).unwrap();
        let b = encode(&e, &raw, Some(&sampled)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fuse_concatenates_visual_first() {
        let v = ItemEmbedding {
            values: vec![1.0, 0.0],
            kind: EmbeddingKind::Single("visual".into()),
        };
        let t = ItemEmbedding {
            values: vec![0.0, 1.0],
            kind: EmbeddingKind::Single("textual".into()),
        };
        let f = fuse(&[v.clone(), t]).unwrap();
        assert_eq!(f.values, vec![1.0, 0.0, 0.0, 1.0]);
        assert!((norm(&f.values) - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(fuse(std::slice::from_ref(&v)).unwrap(), v);
        assert!(fuse(&[v.clone(), v.clone()]).is_err());
        let short = ItemEmbedding {
            values: vec![1.0],
            kind: EmbeddingKind::Single("textual".into()),
        };
        assert!(fuse(&[v, short]).is_err());
    }

    /// Central differences of `⟨upstream, encode(raw)⟩` w.r.t. every parameter.
    fn finite_difference(
        e: &ModalityEncoder,
        raw: &[f32],
        mask: Option<&DropoutMask>,
        up: &[f64],
    ) -> Vec<Vec<f64>> {
        let h = 1e-5;
        let objective = |enc: &ModalityEncoder| -> f64 {
            let out = encode(enc, raw, mask).unwrap().values;
            out.iter().zip(up).map(|(a, b)| a * b).sum()
        };
        let n = e.tensors().len();
        let mut grads = Vec::with_capacity(n);
        for ti in 0..n {
            let len = e.tensors()[ti].1.len();
            let mut g = vec![0.0; len];
            for (k, gk) in g.iter_mut().enumerate() {
                let mut plus = e.clone();
                plus.tensors_mut()[ti].1[k] += h;
                let mut minus = e.clone();
                minus.tensors_mut()[ti].1[k] -= h;
                *gk = (objective(&plus) - objective(&minus)) / (2.0 * h);
            }
            grads.push(g);
        }
        grads
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        diff / norm(a).max(norm(b)).max(1e-8)
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut checked = 0;
        while checked < 100 {
            let hidden = if checked % 2 == 0 { None } else { Some(6) };
            let e = random_encoder(&mut rng, 5, 8, hidden);
            let raw: Vec<f32> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mask = DropoutMask::sample(8, 0.3, &mut rng);
            let up: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let Ok(trace) = e.forward(&raw, Some(&mask)) else { continue };
            // skip instances within reach of a rectifier kink
            if trace
                .hidden_pre
                .as_ref()
                .is_some_and(|p| p.iter().any(|a| a.abs() < 1e-3))
            {
                continue;
            }
            let analytic = encode_backward(&e, &raw, Some(&mask), &up).unwrap();
            let numeric = finite_difference(&e, &raw, Some(&mask), &up);
            for ((name, a), n) in analytic.tensors().into_iter().zip(&numeric) {
                let err = rel_err(a, n);
                assert!(err <= 1e-4, "{name}: relative error {err}");
            }
            checked += 1;
        }
    }

    proptest! {
        #[test]
        fn output_is_unit_norm(seed in any::<u64>(), hidden in proptest::option::of(2usize..8)) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let e = random_encoder(&mut rng, 6, 9, hidden);
            let raw: Vec<f32> = (0..9).map(|_| rng.random_range(-2.0..2.0)).collect();
            if let Ok(out) = encode(&e, &raw, None) {
                prop_assert!((norm(&out.values) - 1.0).abs() < 1e-6);
            }
        }

        #[test]
        fn backward_is_tangent(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = 7;
            let u: Vec<f64> = {
                let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                let n = norm(&v);
                v.iter().map(|x| x / n).collect()
            };
            let g: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
            let zn = rng.random_range(0.01..10.0);
            let t = normalization_backward(&u, zn, &g);
            let radial: f64 = t.iter().zip(&u).map(|(a, b)| a * b).sum();
            prop_assert!(radial.abs() < 1e-8);
        }
    }
}
