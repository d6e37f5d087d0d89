use super::Tensor;

/// Element-wise nonlinearities used by the generators and discriminators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f32),
    Sigmoid,
    /// `(tanh(x) + 1) / 2`, mapping onto `[0, 1]`.
    ScaledTanh,
}

impl Activation {
    #[inline]
    pub fn eval(self, x: f32) -> f32 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu(slope) => {
                if x >= 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Sigmoid => {
                // Split on sign so exp never overflows.
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
            Activation::ScaledTanh => (x.tanh() + 1.0) * 0.5,
        }
    }
}

pub fn apply_activation(input: &Tensor, kind: Activation) -> Tensor {
    input.map(|v| kind.eval(v))
}
