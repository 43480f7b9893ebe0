//! Dense layers and layer stacks.
//!
//! A [`Stack`] is an ordered list of [`DenseLayer`]s. A stack can optionally
//! append a side input (extra columns, e.g. a dosage scalar) to the input of
//! its first layer or of every layer; the side columns never receive
//! gradients.

use rand::{Rng, RngCore};

use super::dropout::{dropout_forward, DropoutMode};
use super::matrix::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

/// `y = activation(x Wᵀ + b)` with `W` of shape `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    weights: Matrix,
    bias: Vec<f64>,
    activation: Activation,
}

/// Gradient of a loss with respect to one layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    /// Uniform fan-in initialisation: `U(-l, l)` with `l = sqrt(6/in)` for
    /// ReLU layers and `sqrt(3/in)` for linear ones. Biases start at zero.
    pub fn new<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::InvalidConfig(format!(
                "layer dims must be positive, got {in_dim}x{out_dim}"
            )));
        }
        let gain = match activation {
            Activation::Relu => 6.0,
            Activation::Linear => 3.0,
        };
        let limit = (gain / in_dim as f64).sqrt();
        let data = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Ok(Self {
            weights: Matrix::from_vec(out_dim, in_dim, data)?,
            bias: vec![0.0; out_dim],
            activation,
        })
    }

    pub fn from_parts(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::DimensionMismatch {
                context: "layer bias length",
                expected: weights.rows(),
                actual: bias.len(),
            });
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        self.weights.data_mut()
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn num_params(&self) -> usize {
        self.weights.data().len() + self.bias.len()
    }

    /// Returns `(pre_activation, activation)`.
    pub fn forward(&self, input: &Matrix) -> Result<(Matrix, Matrix)> {
        if input.cols() != self.in_dim() {
            return Err(Error::DimensionMismatch {
                context: "layer input columns",
                expected: self.in_dim(),
                actual: input.cols(),
            });
        }
        let (n, out) = (input.rows(), self.out_dim());
        let mut pre = Matrix::zeros(n, out);
        for i in 0..n {
            let x = input.row(i);
            let z = pre.row_mut(i);
            for (j, zj) in z.iter_mut().enumerate() {
                *zj = dot(self.weights.row(j), x) + self.bias[j];
            }
        }
        let mut post = pre.clone();
        if self.activation != Activation::Linear {
            for v in post.data_mut() {
                *v = self.activation.apply(*v);
            }
        }
        Ok((pre, post))
    }

    /// Given `dL/d(post)`, returns the parameter gradient and `dL/d(input)`.
    fn backward(&self, input: &Matrix, pre: &Matrix, grad_post: &Matrix) -> (LayerGrad, Matrix) {
        let (n, out, inp) = (input.rows(), self.out_dim(), self.in_dim());
        let mut grad_w = vec![0.0; out * inp];
        let mut grad_b = vec![0.0; out];
        let mut grad_in = Matrix::zeros(n, inp);
        for i in 0..n {
            let x = input.row(i);
            let gp = grad_post.row(i);
            let z = pre.row(i);
            let gi = grad_in.row_mut(i);
            for j in 0..out {
                let g = gp[j] * self.activation.derivative(z[j]);
                if g == 0.0 {
                    continue;
                }
                grad_b[j] += g;
                let w = self.weights.row(j);
                let gw = &mut grad_w[j * inp..(j + 1) * inp];
                for k in 0..inp {
                    gw[k] += g * x[k];
                    gi[k] += g * w[k];
                }
            }
        }
        (
            LayerGrad {
                weights: grad_w,
                bias: grad_b,
            },
            grad_in,
        )
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Where a stack appends its side input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SideInput {
    None,
    /// Appended to the input of the first layer only.
    First(usize),
    /// Appended to the input of every layer.
    Every(usize),
}

impl SideInput {
    fn width(self) -> usize {
        match self {
            SideInput::None => 0,
            SideInput::First(w) | SideInput::Every(w) => w,
        }
    }

    fn applies_to(self, layer: usize) -> bool {
        match self {
            SideInput::None => false,
            SideInput::First(_) => layer == 0,
            SideInput::Every(_) => true,
        }
    }
}

#[derive(Debug, Clone)]
struct LayerTrace {
    input: Matrix,
    pre: Matrix,
    mask: Option<Matrix>,
}

/// Gradients for a whole stack plus the gradient w.r.t. its main input.
#[derive(Debug, Clone)]
pub struct StackGrad {
    pub layers: Vec<LayerGrad>,
    pub input: Matrix,
}

impl StackGrad {
    /// Flattened in the same order as [`Stack::tensors`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|g| [g.weights.as_slice(), g.bias.as_slice()])
            .collect()
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.layers {
            g.weights.iter_mut().for_each(|v| *v *= factor);
            g.bias.iter_mut().for_each(|v| *v *= factor);
        }
        self.input.scale(factor);
    }
}

/// A feed-forward stack of dense layers.
#[derive(Debug, Clone)]
pub struct Stack {
    layers: Vec<DenseLayer>,
    side: SideInput,
    trace: Option<Vec<LayerTrace>>,
}

impl PartialEq for Stack {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.side == other.side
    }
}

impl Stack {
    /// Builds a stack taking `input_dim` main inputs, with one layer per
    /// entry of `layers` (`(width, activation)`).
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        layers: &[(usize, Activation)],
        side: SideInput,
        rng: &mut R,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("stack needs at least one layer".into()));
        }
        let mut built = Vec::with_capacity(layers.len());
        let mut prev = input_dim;
        for (i, &(width, act)) in layers.iter().enumerate() {
            let extra = if side.applies_to(i) { side.width() } else { 0 };
            built.push(DenseLayer::new(prev + extra, width, act, rng)?);
            prev = width;
        }
        Ok(Self {
            layers: built,
            side,
            trace: None,
        })
    }

    pub fn from_layers(layers: Vec<DenseLayer>, side: SideInput) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("stack needs at least one layer".into()));
        }
        for i in 1..layers.len() {
            let extra = if side.applies_to(i) { side.width() } else { 0 };
            if layers[i].in_dim() != layers[i - 1].out_dim() + extra {
                return Err(Error::DimensionMismatch {
                    context: "stacked layer input",
                    expected: layers[i - 1].out_dim() + extra,
                    actual: layers[i].in_dim(),
                });
            }
        }
        Ok(Self {
            layers,
            side,
            trace: None,
        })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn side(&self) -> SideInput {
        self.side
    }

    /// Main input width (excluding side columns).
    pub fn input_dim(&self) -> usize {
        let extra = if self.side.applies_to(0) {
            self.side.width()
        } else {
            0
        };
        self.layers[0].in_dim() - extra
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, DenseLayer::out_dim)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(DenseLayer::num_params).sum()
    }

    /// Parameter tensors, `[w0, b0, w1, b1, ...]`.
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.data(), l.bias.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                let DenseLayer { weights, bias, .. } = l;
                [weights.data_mut(), bias.as_mut_slice()]
            })
            .collect()
    }

    fn check_side<'a>(&self, rows: usize, side: Option<&'a Matrix>) -> Result<Option<&'a Matrix>> {
        match (self.side, side) {
            (SideInput::None, None) => Ok(None),
            (SideInput::None, Some(_)) => Err(Error::Usage(
                "side input supplied to a stack without side columns".into(),
            )),
            (_, None) => Err(Error::Usage("stack requires a side input".into())),
            (s, Some(m)) => {
                if m.cols() != s.width() {
                    return Err(Error::DimensionMismatch {
                        context: "side input columns",
                        expected: s.width(),
                        actual: m.cols(),
                    });
                }
                if m.rows() != rows {
                    return Err(Error::DimensionMismatch {
                        context: "side input rows",
                        expected: rows,
                        actual: m.rows(),
                    });
                }
                Ok(Some(m))
            }
        }
    }

    fn run(
        &self,
        input: &Matrix,
        side: Option<&Matrix>,
        mut dropout: Option<(&[f64], &mut dyn RngCore)>,
        record: bool,
    ) -> Result<(Matrix, Vec<LayerTrace>)> {
        if input.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "stack input columns",
                expected: self.input_dim(),
                actual: input.cols(),
            });
        }
        let side = self.check_side(input.rows(), side)?;
        let mut traces = Vec::new();
        let mut current = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let layer_input = match side {
                Some(s) if self.side.applies_to(i) => current.hconcat(s)?,
                _ => current,
            };
            let (pre, mut post) = layer.forward(&layer_input)?;
            let mut mask = None;
            if let Some((rates, rng)) = dropout.as_mut() {
                let (out, m) = dropout_forward(&post, rates, DropoutMode::Train, &mut **rng)?;
                post = out;
                mask = m;
            }
            if record {
                traces.push(LayerTrace {
                    input: layer_input,
                    pre,
                    mask,
                });
            }
            current = post;
        }
        Ok((current, traces))
    }

    /// Inference pass: no dropout, nothing cached.
    pub fn predict(&self, input: &Matrix, side: Option<&Matrix>) -> Result<Matrix> {
        self.run(input, side, None, false).map(|(out, _)| out)
    }

    /// Inference on one row. `side` holds the side columns (empty when the
    /// stack has none).
    pub fn predict_row(&self, input: &[f64], side: &[f64]) -> Vec<f64> {
        debug_assert_eq!(input.len(), self.input_dim());
        debug_assert_eq!(side.len(), self.side.width());
        let mut current = input.to_vec();
        let mut buf = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            buf.clear();
            buf.extend_from_slice(&current);
            if self.side.applies_to(i) {
                buf.extend_from_slice(side);
            }
            current.clear();
            for j in 0..layer.out_dim() {
                let z = dot(layer.weights.row(j), &buf) + layer.bias[j];
                current.push(layer.activation.apply(z));
            }
        }
        current
    }

    /// Training pass; caches intermediates for [`Stack::backward`].
    pub fn forward(&mut self, input: &Matrix, side: Option<&Matrix>) -> Result<Matrix> {
        let (out, traces) = self.run(input, side, None, true)?;
        self.trace = Some(traces);
        Ok(out)
    }

    /// Training pass with inverted dropout on every layer's output, one drop
    /// rate per input row.
    pub fn forward_with_dropout(
        &mut self,
        input: &Matrix,
        side: Option<&Matrix>,
        rates: &[f64],
        rng: &mut dyn RngCore,
    ) -> Result<Matrix> {
        let (out, traces) = self.run(input, side, Some((rates, rng)), true)?;
        self.trace = Some(traces);
        Ok(out)
    }

    /// Backpropagates `grad_out = dL/d(output)` through the cached forward
    /// pass. The cache is consumed.
    pub fn backward(&mut self, grad_out: &Matrix) -> Result<StackGrad> {
        let traces = self
            .trace
            .take()
            .ok_or_else(|| Error::Usage("backward called before forward".into()))?;
        let last = traces.last().expect("stack has layers");
        if grad_out.rows() != last.pre.rows() || grad_out.cols() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                context: "backward gradient shape",
                expected: last.pre.rows() * self.output_dim(),
                actual: grad_out.rows() * grad_out.cols(),
            });
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut grad = grad_out.clone();
        for (i, (layer, trace)) in self.layers.iter().zip(&traces).enumerate().rev() {
            if let Some(mask) = &trace.mask {
                for (g, m) in grad.data_mut().iter_mut().zip(mask.data()) {
                    *g *= m;
                }
            }
            let (lg, grad_in) = layer.backward(&trace.input, &trace.pre, &grad);
            grads.push(lg);
            let main_cols = if self.side.applies_to(i) {
                grad_in.cols() - self.side.width()
            } else {
                grad_in.cols()
            };
            grad = grad_in.take_cols(main_cols);
        }
        grads.reverse();
        Ok(StackGrad {
            layers: grads,
            input: grad,
        })
    }

    /// Drops any cached forward pass.
    pub fn clear_trace(&mut self) {
        self.trace = None;
    }
}

/// Mean squared error over a single-column prediction and its gradient.
pub fn mse_loss(pred: &Matrix, target: &[f64]) -> Result<(f64, Matrix)> {
    if pred.cols() != 1 || pred.rows() != target.len() {
        return Err(Error::DimensionMismatch {
            context: "mse target length",
            expected: pred.rows(),
            actual: target.len(),
        });
    }
    if target.is_empty() {
        return Err(Error::Empty("mse batch"));
    }
    let n = target.len() as f64;
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(target.len(), 1);
    for (i, (&p, &y)) in pred.data().iter().zip(target).enumerate() {
        let r = p - y;
        loss += r * r;
        grad.data_mut()[i] = 2.0 * r / n;
    }
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_linear_layer() {
        let w = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let layer = DenseLayer::from_parts(w, vec![0.0, 0.0], Activation::Linear).unwrap();
        let stack = Stack::from_layers(vec![layer], SideInput::None).unwrap();
        let out = stack
            .predict(&Matrix::from_rows(&[[1.0, 2.0]]).unwrap(), None)
            .unwrap();
        assert_eq!(out.data(), &[1.0, 2.0]);
    }

    #[test]
    fn relu_sign_split() {
        let w = Matrix::from_rows(&[[1.0], [-1.0]]).unwrap();
        let layer = DenseLayer::from_parts(w, vec![0.0, 0.0], Activation::Relu).unwrap();
        let stack = Stack::from_layers(vec![layer], SideInput::None).unwrap();
        let out = stack.predict(&Matrix::column(&[3.0]), None).unwrap();
        assert_eq!(out.data(), &[3.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch_names_both_sides() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let stack = Stack::new(3, &[(2, Activation::Linear)], SideInput::None, &mut rng).unwrap();
        let err = stack.predict(&Matrix::zeros(1, 4), None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('3') && msg.contains('4'), "{msg}");
    }

    #[test]
    fn backward_before_forward_is_usage_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut stack =
            Stack::new(2, &[(1, Activation::Linear)], SideInput::None, &mut rng).unwrap();
        assert!(matches!(
            stack.backward(&Matrix::zeros(1, 1)),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn linear_fit_at_optimum_has_zero_gradient() {
        // y = 2x + 1 exactly representable.
        let layer = DenseLayer::from_parts(
            Matrix::from_rows(&[[2.0]]).unwrap(),
            vec![1.0],
            Activation::Linear,
        )
        .unwrap();
        let mut stack = Stack::from_layers(vec![layer], SideInput::None).unwrap();
        let x = Matrix::column(&[0.0, 1.0, -2.0]);
        let pred = stack.forward(&x, None).unwrap();
        let (loss, grad) = mse_loss(&pred, &[1.0, 3.0, -3.0]).unwrap();
        assert_eq!(loss, 0.0);
        let g = stack.backward(&grad).unwrap();
        assert!(g.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn side_input_widens_layers() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layers = [(4, Activation::Relu), (4, Activation::Relu), (1, Activation::Linear)];
        let every = Stack::new(3, &layers, SideInput::Every(1), &mut rng).unwrap();
        let first = Stack::new(3, &layers, SideInput::First(1), &mut rng).unwrap();
        let dims: Vec<_> = every.layers().iter().map(DenseLayer::in_dim).collect();
        assert_eq!(dims, vec![4, 5, 5]);
        let dims: Vec<_> = first.layers().iter().map(DenseLayer::in_dim).collect();
        assert_eq!(dims, vec![4, 4, 4]);
        assert_eq!(every.input_dim(), 3);
        assert!(every.predict(&Matrix::zeros(2, 3), None).is_err());
    }
}
