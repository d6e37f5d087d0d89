//! Training objectives of both stages.
//!
//! Discriminator scores are probabilities; every log is taken after clamping
//! into `[ε, 1 − ε]` with `ε = 1e-7`. Expectations are means over the score
//! grid and batch.

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::tensor::{gram_matrix, Tensor};
use crate::Flagged;

pub const SCORE_EPS: f64 = 1e-7;

/// Relative weights of the loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub adv1: f64,
    pub fm: f64,
    pub l1: f64,
    pub adv2: f64,
    pub perceptual: f64,
    pub style: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            adv1: 1.0,
            fm: 10.0,
            l1: 1.0,
            adv2: 0.1,
            perceptual: 0.1,
            style: 250.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.adv1, self.fm, self.l1, self.adv2, self.perceptual, self.style];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Parameter(format!("loss weights must be finite and non-negative: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationEntry {
    pub layer: String,
    pub tensor: Tensor,
}

impl ActivationEntry {
    /// Element count `N_i` used to normalise the layer's ℓ1 term.
    pub fn count(&self) -> usize {
        self.tensor.len()
    }
}

/// Ordered intermediate activations of one forward pass.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ActivationStack {
    entries: Vec<ActivationEntry>,
}

impl ActivationStack {
    pub fn push(&mut self, layer: impl Into<String>, tensor: Tensor) {
        self.entries.push(ActivationEntry {
            layer: layer.into(),
            tensor,
        });
    }

    pub fn from_tensors(items: impl IntoIterator<Item = (String, Tensor)>) -> Self {
        let mut s = ActivationStack::default();
        for (l, t) in items {
            s.push(l, t);
        }
        s
    }

    pub fn entries(&self) -> &[ActivationEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn clamp_score(v: f32) -> f64 {
    f64::from(v).clamp(SCORE_EPS, 1.0 - SCORE_EPS)
}

fn mean_of(t: &Tensor, f: impl Fn(f64) -> f64) -> f64 {
    if t.is_empty() {
        return 0.0;
    }
    t.data().iter().map(|&v| f(clamp_score(v))).sum::<f64>() / t.len() as f64
}

/// Discriminator loss `−(E[log D(real)] + E[log(1 − D(fake))])`.
pub fn adversarial_d(d_real: &Tensor, d_fake: &Tensor) -> f64 {
    -(mean_of(d_real, f64::ln) + mean_of(d_fake, |p| (1.0 - p).ln()))
}

/// Non-saturating generator loss `−E[log D(fake)]`.
pub fn adversarial_g(d_fake: &Tensor) -> f64 {
    -mean_of(d_fake, f64::ln)
}

fn check_aligned(a: &ActivationStack, b: &ActivationStack) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("activation stacks have {} and {} layers", a.len(), b.len())));
    }
    for (x, y) in a.entries.iter().zip(&b.entries) {
        if x.tensor.dims() != y.tensor.dims() {
            return Err(Error::Shape(format!(
                "layer '{}' has shape {:?} vs {:?} in '{}'",
                x.layer,
                x.tensor.dims(),
                y.tensor.dims(),
                y.layer
            )));
        }
    }
    Ok(())
}

fn layerwise_l1(a: &ActivationStack, b: &ActivationStack) -> Result<f64> {
    check_aligned(a, b)?;
    Ok(a
        .entries
        .iter()
        .zip(&b.entries)
        .filter(|(x, _)| x.count() > 0)
        .map(|(x, y)| {
            let l1: f64 = x
                .tensor
                .data()
                .iter()
                .zip(y.tensor.data())
                .map(|(&p, &q)| (f64::from(p) - f64::from(q)).abs())
                .sum();
            l1 / x.count() as f64
        })
        .sum())
}

/// `Σᵢ ‖realᵢ − fakeᵢ‖₁ / Nᵢ` over discriminator activations.
pub fn feature_matching(real: &ActivationStack, fake: &ActivationStack) -> Result<f64> {
    layerwise_l1(real, fake)
}

/// `Σᵢ ‖φᵢ(gt) − φᵢ(pred)‖₁ / Nᵢ` over feature-extractor activations.
pub fn perceptual(gt: &ActivationStack, pred: &ActivationStack) -> Result<f64> {
    layerwise_l1(gt, pred)
}

/// Mean over layers of `‖G(pred) − G(gt)‖₁`, with `G` the normalised Gram matrix.
pub fn style(gt: &ActivationStack, pred: &ActivationStack) -> Result<f64> {
    check_aligned(gt, pred)?;
    if gt.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = gt
        .entries
        .iter()
        .zip(&pred.entries)
        .map(|(g, p)| {
            let gg = gram_matrix(&g.tensor);
            let gp = gram_matrix(&p.tensor);
            gp.data()
                .iter()
                .zip(gg.data())
                .map(|(&a, &b)| (f64::from(a) - f64::from(b)).abs())
                .sum::<f64>()
        })
        .sum();
    Ok(total / gt.len() as f64)
}

/// `‖pred − gt‖₁ / (n · |M| · c)`: the whole-image ℓ1 distance normalised by
/// the number of missing values. An empty mask yields a flagged zero.
pub fn l1_masked(pred: &Tensor, gt: &Tensor, mask: &Mask) -> Result<Flagged<f64>> {
    pred.check_same_dims(gt)?;
    if mask.h() != pred.h() {
        return Err(Error::dim("height", pred.h(), mask.h()));
    }
    if mask.w() != pred.w() {
        return Err(Error::dim("width", pred.w(), mask.w()));
    }
    let denom = mask.count() * pred.c() * pred.n();
    if denom == 0 {
        return Ok(Flagged::degenerate(0.0));
    }
    let l1: f64 = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(&p, &g)| (f64::from(p) - f64::from(g)).abs())
        .sum();
    Ok(Flagged::ok(l1 / denom as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct G1Components {
    pub adversarial: f64,
    pub feature_matching: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct G2Components {
    pub l1: f64,
    pub adversarial: f64,
    pub perceptual: f64,
    pub style: f64,
}

/// `λ_adv1 · L_adv + λ_fm · L_fm`.
pub fn joint_g1(c: &G1Components, w: &LossWeights) -> f64 {
    w.adv1 * c.adversarial + w.fm * c.feature_matching
}

/// `λ_l1 · L_l1 + λ_adv2 · L_adv + λ_p · L_perc + λ_s · L_style`.
pub fn joint_g2(c: &G2Components, w: &LossWeights) -> f64 {
    w.l1 * c.l1 + w.adv2 * c.adversarial + w.perceptual * c.perceptual + w.style * c.style
}
