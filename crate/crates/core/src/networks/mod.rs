//! The four networks of the inpainting pipeline and their forward passes.
//!
//! Generators share one encoder/decoder skeleton:
//!
//! ```text
//! c64 (7×7, reflect 3) → d128 → d256 → R256 ×8 → u128 → u64 → c* (7×7, reflect 3)
//! ```
//!
//! where every block is convolution → spectral norm → instance norm → ReLU,
//! residual blocks use a dilation-2 first convolution, and `c*` ends in a
//! sigmoid (edge generator, 1 channel) or scaled tanh (inpainting generator,
//! 3 channels, no spectral norm anywhere). Discriminators are 70×70 PatchGANs:
//! five 4×4 convolutions with strides `2, 2, 2, 1, 1` and widths
//! `64, 128, 256, 512, 1`.

mod archive;

pub use archive::{inspect_archive, load_entries, load_weights, read_archive, save_weights, write_archive, ArchiveEntry, ARCHIVE_MAGIC, ARCHIVE_VERSION};

use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::losses::ActivationStack;
use crate::tensor::{
    apply_activation, conv2d, conv_transpose2d, frozen_sigma, instance_norm, spectral_normalize, Activation, ConvParams,
    PaddingMode, SpectralState, Tensor,
};

/// Slope of every hidden LeakyReLU in the discriminators.
pub const LEAKY_SLOPE: f32 = 0.2;
/// Standard deviation of the zero-mean normal weight initialisation.
pub const INIT_STD: f32 = 0.02;
/// Instance-norm epsilon.
pub const NORM_EPS: f32 = 1e-5;
/// Power iterations run on freshly initialised weights so the frozen
/// spectral estimates used by inference start close to the true norm.
pub const SPECTRAL_WARMUP_ITERS: usize = 20;

const RESIDUAL_BLOCKS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GeneratorKind {
    /// Edge generator: (masked gray, masked edges, mask) → edge probabilities.
    Edge,
    /// Image completion network: (masked RGB, composite edges) → RGB.
    Inpaint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiscriminatorKind {
    /// Scores (edge map, grayscale) pairs.
    Edge,
    /// Scores (RGB, edge map) pairs.
    Inpaint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NetworkKind {
    G1,
    G2,
    D1,
    D2,
}

impl fmt::Display for NetworkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            NetworkKind::G1 => "G1",
            NetworkKind::G2 => "G2",
            NetworkKind::D1 => "D1",
            NetworkKind::D2 => "D2",
        };
        f.write_str(s)
    }
}

impl NetworkKind {
    pub fn is_generator(self) -> bool {
        matches!(self, NetworkKind::G1 | NetworkKind::G2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    ConvTranspose,
    /// Two 3×3 convolutions with an additive skip.
    Residual,
}

/// Geometry of one convolution inside a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    pub padding: usize,
    pub padding_mode: PaddingMode,
}

impl ConvSpec {
    fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel,
            stride,
            dilation: 1,
            padding,
            padding_mode: PaddingMode::Zero,
        }
    }

    fn reflect(mut self) -> Self {
        self.padding_mode = PaddingMode::Reflect;
        self
    }

    fn dilated(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }

    /// Kernel tensor dims. Transposed convolutions store the adjoint
    /// `(in, out, k, k)` layout.
    fn weight_dims(&self, kind: LayerKind) -> [usize; 4] {
        match kind {
            LayerKind::ConvTranspose => [self.in_channels, self.out_channels, self.kernel, self.kernel],
            _ => [self.out_channels, self.in_channels, self.kernel, self.kernel],
        }
    }
}

/// One block of a network.
///
/// For [`LayerKind::Residual`], `convs` holds both convolutions; each is
/// followed by spectral norm (if enabled) and instance norm, with a ReLU
/// between them and none after the skip addition.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub convs: Vec<ConvSpec>,
    pub spectral_norm: bool,
    pub instance_norm: bool,
    pub activation: Option<Activation>,
}

impl LayerSpec {
    fn conv_prefixes(&self) -> Vec<String> {
        match self.kind {
            LayerKind::Residual => (1..=self.convs.len()).map(|i| format!("{}.conv{i}", self.name)).collect(),
            _ => vec![self.name.clone()],
        }
    }
}

/// A built network: layer list, named parameters and spectral states.
#[derive(Debug, Clone)]
pub struct NetworkInstance {
    kind: NetworkKind,
    layers: Vec<LayerSpec>,
    params: BTreeMap<String, Tensor>,
    spectral: BTreeMap<String, SpectralState>,
}

fn generator_layers(kind: GeneratorKind) -> Vec<LayerSpec> {
    let (in_c, out_c, final_act, sn) = match kind {
        GeneratorKind::Edge => (3, 1, Activation::Sigmoid, true),
        GeneratorKind::Inpaint => (4, 3, Activation::ScaledTanh, false),
    };
    let block = |name: &str, kind: LayerKind, conv: ConvSpec| LayerSpec {
        name: name.to_string(),
        kind,
        convs: vec![conv],
        spectral_norm: sn,
        instance_norm: true,
        activation: Some(Activation::Relu),
    };
    let mut layers = vec![
        block("enc1", LayerKind::Conv, ConvSpec::new(in_c, 64, 7, 1, 3).reflect()),
        block("enc2", LayerKind::Conv, ConvSpec::new(64, 128, 4, 2, 1)),
        block("enc3", LayerKind::Conv, ConvSpec::new(128, 256, 4, 2, 1)),
    ];
    for i in 1..=RESIDUAL_BLOCKS {
        layers.push(LayerSpec {
            name: format!("res{i}"),
            kind: LayerKind::Residual,
            convs: vec![
                ConvSpec::new(256, 256, 3, 1, 2).dilated(2),
                ConvSpec::new(256, 256, 3, 1, 1),
            ],
            spectral_norm: sn,
            instance_norm: true,
            activation: None,
        });
    }
    layers.push(block("dec1", LayerKind::ConvTranspose, ConvSpec::new(256, 128, 4, 2, 1)));
    layers.push(block("dec2", LayerKind::ConvTranspose, ConvSpec::new(128, 64, 4, 2, 1)));
    layers.push(LayerSpec {
        name: "out".into(),
        kind: LayerKind::Conv,
        convs: vec![ConvSpec::new(64, out_c, 7, 1, 3).reflect()],
        spectral_norm: sn,
        instance_norm: false,
        activation: Some(final_act),
    });
    layers
}

fn discriminator_layers(kind: DiscriminatorKind) -> Vec<LayerSpec> {
    let in_c = match kind {
        DiscriminatorKind::Edge => 2,
        DiscriminatorKind::Inpaint => 4,
    };
    let widths = [in_c, 64, 128, 256, 512, 1];
    let strides = [2, 2, 2, 1, 1];
    (0..5)
        .map(|i| LayerSpec {
            name: format!("conv{}", i + 1),
            kind: LayerKind::Conv,
            convs: vec![ConvSpec::new(widths[i], widths[i + 1], 4, strides[i], 1)],
            spectral_norm: true,
            instance_norm: false,
            activation: Some(if i == 4 {
                Activation::Sigmoid
            } else {
                Activation::LeakyRelu(LEAKY_SLOPE)
            }),
        })
        .collect()
}

/// Builds the edge (`G1`) or inpainting (`G2`) generator with weights drawn
/// from `N(0, 0.02²)` and zero biases.
pub fn build_generator(kind: GeneratorKind, seed: u64) -> NetworkInstance {
    let net_kind = match kind {
        GeneratorKind::Edge => NetworkKind::G1,
        GeneratorKind::Inpaint => NetworkKind::G2,
    };
    NetworkInstance::initialise(net_kind, generator_layers(kind), seed)
}

/// Builds the edge (`D1`) or inpainting (`D2`) PatchGAN discriminator.
pub fn build_discriminator(kind: DiscriminatorKind, seed: u64) -> NetworkInstance {
    let net_kind = match kind {
        DiscriminatorKind::Edge => NetworkKind::D1,
        DiscriminatorKind::Inpaint => NetworkKind::D2,
    };
    NetworkInstance::initialise(net_kind, discriminator_layers(kind), seed)
}

/// Builds any of the four networks by name.
pub fn build_network(kind: NetworkKind, seed: u64) -> NetworkInstance {
    match kind {
        NetworkKind::G1 => build_generator(GeneratorKind::Edge, seed),
        NetworkKind::G2 => build_generator(GeneratorKind::Inpaint, seed),
        NetworkKind::D1 => build_discriminator(DiscriminatorKind::Edge, seed),
        NetworkKind::D2 => build_discriminator(DiscriminatorKind::Inpaint, seed),
    }
}

impl NetworkInstance {
    fn initialise(kind: NetworkKind, layers: Vec<LayerSpec>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0f32, INIT_STD).expect("valid std");
        let mut params = BTreeMap::new();
        let mut spectral = BTreeMap::new();
        for layer in &layers {
            for (prefix, conv) in layer.conv_prefixes().into_iter().zip(&layer.convs) {
                let dims = conv.weight_dims(layer.kind);
                let weight = Tensor::from_fn(dims, |_, _, _, _| normal.sample(&mut rng));
                if layer.spectral_norm {
                    let state = SpectralState::random(dims[0], &mut rng).with_iterations(SPECTRAL_WARMUP_ITERS);
                    let warm = spectral_normalize(&weight, &state).expect("state sized from weight");
                    spectral.insert(prefix.clone(), warm.state.with_iterations(1));
                }
                params.insert(format!("{prefix}.weight"), weight);
                params.insert(format!("{prefix}.bias"), Tensor::zeros([conv.out_channels, 1, 1, 1]));
            }
        }
        NetworkInstance {
            kind,
            layers,
            params,
            spectral,
        }
    }

    pub fn kind(&self) -> NetworkKind {
        self.kind
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_channels(&self) -> usize {
        self.layers[0].convs[0].in_channels
    }

    pub fn output_channels(&self) -> usize {
        self.layers.last().and_then(|l| l.convs.last()).map_or(0, |c| c.out_channels)
    }

    /// Number of convolution operations, counting both halves of each residual block.
    pub fn conv_layer_count(&self) -> usize {
        self.layers.iter().map(|l| l.convs.len()).sum()
    }

    /// Number of convolutions whose weights are spectrally normalised.
    pub fn spectral_layer_count(&self) -> usize {
        self.spectral.len()
    }

    /// Trainable weights and biases; spectral state vectors are excluded.
    pub fn parameter_count(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    pub fn parameter_names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn spectral_state(&self, prefix: &str) -> Option<&SpectralState> {
        self.spectral.get(prefix)
    }

    /// One power-iteration refresh of every spectral state. This is the only
    /// entry point that mutates a network after construction.
    pub fn update_spectral_states(&mut self, iterations: usize) -> Result<()> {
        for (prefix, state) in self.spectral.iter_mut() {
            let weight = &self.params[&format!("{prefix}.weight")];
            let stepped = state.clone().with_iterations(iterations.max(1));
            let out = spectral_normalize(weight, &stepped)?;
            if !out.degenerate {
                *state = out.state.with_iterations(state.iterations_per_step);
            }
        }
        Ok(())
    }

    /// The weight actually used by forward: divided by the frozen spectral
    /// estimate when the layer is normalised.
    fn effective_weight(&self, prefix: &str) -> Result<std::borrow::Cow<'_, Tensor>> {
        let weight = &self.params[&format!("{prefix}.weight")];
        match self.spectral.get(prefix) {
            None => Ok(std::borrow::Cow::Borrowed(weight)),
            Some(state) => match frozen_sigma(weight, state)? {
                None => Ok(std::borrow::Cow::Borrowed(weight)),
                Some(sigma) => Ok(std::borrow::Cow::Owned(weight.map(|w| (f64::from(w) / sigma) as f32))),
            },
        }
    }

    fn apply_conv(&self, prefix: &str, kind: LayerKind, spec: &ConvSpec, x: &Tensor) -> Result<Tensor> {
        let weight = self.effective_weight(prefix)?;
        let bias = self.params[&format!("{prefix}.bias")].data();
        let params = ConvParams::new(&weight)
            .bias(bias)
            .stride(spec.stride)
            .dilation(spec.dilation)
            .padding(spec.padding, spec.padding_mode);
        match kind {
            LayerKind::ConvTranspose => conv_transpose2d(x, &params),
            _ => conv2d(x, &params),
        }
    }

    fn normalize(&self, layer: &LayerSpec, x: Tensor) -> Result<Tensor> {
        if !layer.instance_norm {
            return Ok(x);
        }
        let c = x.c();
        instance_norm(&x, &vec![1.0; c], &vec![0.0; c], NORM_EPS)
    }

    fn run_layer(&self, layer: &LayerSpec, x: &Tensor) -> Result<Tensor> {
        let prefixes = layer.conv_prefixes();
        match layer.kind {
            LayerKind::Residual => {
                let h = self.apply_conv(&prefixes[0], layer.kind, &layer.convs[0], x)?;
                let h = apply_activation(&self.normalize(layer, h)?, Activation::Relu);
                let h = self.apply_conv(&prefixes[1], layer.kind, &layer.convs[1], &h)?;
                let h = self.normalize(layer, h)?;
                let out = h.zip_map(x, |a, b| a + b)?;
                Ok(match layer.activation {
                    Some(act) => apply_activation(&out, act),
                    None => out,
                })
            }
            _ => {
                let h = self.apply_conv(&prefixes[0], layer.kind, &layer.convs[0], x)?;
                let h = self.normalize(layer, h)?;
                Ok(match layer.activation {
                    Some(act) => apply_activation(&h, act),
                    None => h,
                })
            }
        }
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.c() != self.input_channels() {
            return Err(Error::dim("channel", self.input_channels(), input.c()));
        }
        if input.n() == 0 {
            return Err(Error::Shape("empty batch".into()));
        }
        if input.h() % 4 != 0 || input.w() % 4 != 0 || input.h() == 0 || input.w() == 0 {
            return Err(Error::Shape(format!(
                "{} needs spatial dims divisible by 4, got {}x{}",
                self.kind,
                input.h(),
                input.w()
            )));
        }
        Ok(())
    }

    /// Runs the network. With `capture`, also returns each layer's
    /// post-activation output in order.
    pub fn forward_with(&self, input: &Tensor, capture: bool) -> Result<(Tensor, Option<ActivationStack>)> {
        self.check_input(input)?;
        let mut stack = capture.then(ActivationStack::default);
        let mut x = input.clone();
        for layer in &self.layers {
            x = self.run_layer(layer, &x)?;
            if let Some(stack) = stack.as_mut() {
                stack.push(layer.name.clone(), x.clone());
            }
        }
        Ok((x, stack))
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.forward_with(input, false)?.0)
    }

    pub fn forward_capture(&self, input: &Tensor) -> Result<(Tensor, ActivationStack)> {
        let (out, stack) = self.forward_with(input, true)?;
        Ok((out, stack.expect("capture requested")))
    }

    pub(crate) fn params(&self) -> &BTreeMap<String, Tensor> {
        &self.params
    }

    pub(crate) fn spectral_states(&self) -> &BTreeMap<String, SpectralState> {
        &self.spectral
    }

    pub(crate) fn replace_state(&mut self, params: BTreeMap<String, Tensor>, spectral: BTreeMap<String, SpectralState>) {
        self.params = params;
        self.spectral = spectral;
    }
}
