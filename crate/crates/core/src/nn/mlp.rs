use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};
use crate::nn::Rng;

/// Flat parameter storage: for each layer, its `fan_out x fan_in` weights
/// (row-major) followed by its `fan_out` biases.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

impl Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Hidden-layer nonlinearity. The output layer is always the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpLayout {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl MlpLayout {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize) -> Result<Self> {
        let layout = Self {
            input_dim,
            hidden_dims,
            output_dim,
            activation: Activation::Tanh,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::Config(format!(
                "mlp dims must all be >= 1: {} -> {:?} -> {}",
                self.input_dim, self.hidden_dims, self.output_dim
            )));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` per layer, input to output.
    pub fn layer_shapes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let dims = std::iter::once(self.input_dim)
            .chain(self.hidden_dims.iter().copied())
            .chain(std::iter::once(self.output_dim));
        dims.clone().zip(dims.skip(1))
    }

    pub fn num_layers(&self) -> usize {
        self.hidden_dims.len() + 1
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().map(|(i, o)| (i + 1) * o).sum()
    }

    /// Uniform `±sqrt(6 / (fan_in + fan_out))` weights, zero biases.
    pub fn init_params(&self, rng: &mut Rng) -> ParamVector {
        let mut params = Vec::with_capacity(self.param_count());
        for (fan_in, fan_out) in self.layer_shapes() {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.uniform_range(-limit, limit)));
            params.extend(std::iter::repeat(0.0).take(fan_out));
        }
        ParamVector(params)
    }

    fn check(&self, params: &[f64], input: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::dim("mlp params", self.param_count(), params.len()));
        }
        if input.len() != self.input_dim {
            return Err(Error::dim("mlp input", self.input_dim, input.len()));
        }
        Ok(())
    }
}

/// Per-layer activations from a forward pass, kept for the backward pass.
/// `activations[0]` is the input and the last entry is the output.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace always holds the input")
    }

    pub fn into_output(mut self) -> Vec<f64> {
        self.activations.pop().expect("trace always holds the input")
    }
}

/// Dot product with four independent accumulators so the compiler can
/// keep several multiply-adds in flight.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn affine(weights: &[f64], bias: &[f64], input: &[f64], out: &mut Vec<f64>) {
    let fan_in = input.len();
    out.clear();
    out.extend(
        bias.iter()
            .zip(weights.chunks_exact(fan_in))
            .map(|(&b, row)| b + dot(row, input)),
    );
}

fn forward_unchecked(params: &[f64], layout: &MlpLayout, input: &[f64]) -> ForwardTrace {
    let mut activations = Vec::with_capacity(layout.num_layers() + 1);
    activations.push(input.to_vec());
    let last = layout.num_layers() - 1;
    let mut offset = 0;
    for (l, (fan_in, fan_out)) in layout.layer_shapes().enumerate() {
        let w = &params[offset..offset + fan_in * fan_out];
        let b = &params[offset + fan_in * fan_out..offset + (fan_in + 1) * fan_out];
        offset += (fan_in + 1) * fan_out;
        let mut out = Vec::with_capacity(fan_out);
        affine(w, b, &activations[l], &mut out);
        if l != last {
            match layout.activation {
                Activation::Tanh => out.iter_mut().for_each(|x| *x = x.tanh()),
            }
        }
        activations.push(out);
    }
    ForwardTrace { activations }
}

pub fn mlp_forward(params: &[f64], layout: &MlpLayout, input: &[f64]) -> Result<Vec<f64>> {
    Ok(mlp_forward_trace(params, layout, input)?.into_output())
}

pub fn mlp_forward_trace(params: &[f64], layout: &MlpLayout, input: &[f64]) -> Result<ForwardTrace> {
    layout.check(params, input)?;
    Ok(forward_unchecked(params, layout, input))
}

/// Reverse pass over a recorded trace. Accumulates `d(output . output_grad)/d params`
/// into `param_grad` and returns the gradient w.r.t. the input.
///
/// `params` must be the vector that produced `trace`.
pub fn mlp_backward_trace(
    params: &[f64],
    layout: &MlpLayout,
    trace: &ForwardTrace,
    output_grad: &[f64],
    param_grad: &mut [f64],
) -> Result<Vec<f64>> {
    if output_grad.len() != layout.output_dim {
        return Err(Error::dim("mlp output grad", layout.output_dim, output_grad.len()));
    }
    if param_grad.len() != params.len() || params.len() != layout.param_count() {
        return Err(Error::dim("mlp param grad", layout.param_count(), param_grad.len()));
    }

    let shapes: Vec<(usize, usize)> = layout.layer_shapes().collect();
    let mut offset = params.len();
    let mut delta = output_grad.to_vec();
    for l in (0..shapes.len()).rev() {
        let (fan_in, fan_out) = shapes[l];
        offset -= (fan_in + 1) * fan_out;
        let w_range = offset..offset + fan_in * fan_out;
        let b_start = offset + fan_in * fan_out;
        let input = &trace.activations[l];

        let mut prev = vec![0.0; fan_in];
        for (o, &d) in delta.iter().enumerate() {
            param_grad[b_start + o] += d;
            if d == 0.0 {
                continue;
            }
            let row = o * fan_in;
            let w = &params[w_range.start + row..w_range.start + row + fan_in];
            let gw = &mut param_grad[w_range.start + row..w_range.start + row + fan_in];
            for (g, &x) in gw.iter_mut().zip(input) {
                *g += d * x;
            }
            for (p, &wi) in prev.iter_mut().zip(w) {
                *p += d * wi;
            }
        }
        if l > 0 {
            // input is tanh(z); dtanh = 1 - tanh^2
            for (p, a) in prev.iter_mut().zip(input) {
                *p *= 1.0 - a * a;
            }
        }
        delta = prev;
    }
    Ok(delta)
}

/// Exact reverse-mode gradient of `output . output_grad` w.r.t. params and input.
pub fn mlp_backward(
    params: &[f64],
    layout: &MlpLayout,
    input: &[f64],
    output_grad: &[f64],
) -> Result<(ParamVector, Vec<f64>)> {
    let trace = mlp_forward_trace(params, layout, input)?;
    let mut grad = ParamVector::zeros(params.len());
    let input_grad = mlp_backward_trace(params, layout, &trace, output_grad, &mut grad)?;
    Ok((grad, input_grad))
}

/// Central differences with a fixed step. Slow; meant as a test oracle.
pub fn finite_diff_grad<F>(f: F, params: &[f64], eps: f64) -> ParamVector
where
    F: FnMut(&[f64]) -> f64,
{
    finite_diff_grad_scaled(f, params, |_| eps)
}

/// Central differences with a per-coordinate step `eps_of(p_i)`.
pub fn finite_diff_grad_scaled<F, E>(mut f: F, params: &[f64], eps_of: E) -> ParamVector
where
    F: FnMut(&[f64]) -> f64,
    E: Fn(f64) -> f64,
{
    let mut p = params.to_vec();
    let grad = (0..params.len())
        .map(|i| {
            let orig = p[i];
            let eps = eps_of(orig);
            p[i] = orig + eps;
            let hi = f(&p);
            p[i] = orig - eps;
            let lo = f(&p);
            p[i] = orig;
            (hi - lo) / (2.0 * eps)
        })
        .collect();
    ParamVector(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
    }

    #[test]
    fn param_count_formula() {
        let l = MlpLayout::new(4, vec![64, 64], 2).unwrap();
        assert_eq!(l.param_count(), 5 * 64 + 65 * 64 + 65 * 2);
        assert_eq!(MlpLayout::new(1, vec![], 1).unwrap().param_count(), 2);
    }

    #[test]
    fn zero_dims_rejected() {
        assert!(MlpLayout::new(0, vec![2], 1).is_err());
        assert!(MlpLayout::new(2, vec![0], 1).is_err());
        assert!(MlpLayout::new(2, vec![], 0).is_err());
    }

    #[test]
    fn zero_params_give_zero_output() {
        let l = MlpLayout::new(3, vec![5, 4], 2).unwrap();
        let out = mlp_forward(&vec![0.0; l.param_count()], &l, &[0.3, -1.0, 7.0]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn affine_identity_case() {
        let l = MlpLayout::new(1, vec![], 1).unwrap();
        assert_eq!(mlp_forward(&[2.0, 1.0], &l, &[3.0]).unwrap(), vec![7.0]);
    }

    #[test]
    fn hand_evaluated_two_layer() {
        // 2 -> 2 -> 1; W1 = [[0.1, 0.2], [-0.3, 0.4]], b1 = [0.05, -0.05],
        // W2 = [[0.5, -0.6]], b2 = [0.1]
        let l = MlpLayout::new(2, vec![2], 1).unwrap();
        let params = [0.1, 0.2, -0.3, 0.4, 0.05, -0.05, 0.5, -0.6, 0.1];
        let h0 = (0.1f64 * 1.0 + 0.2 * -1.0 + 0.05).tanh();
        let h1 = (-0.3f64 * 1.0 + 0.4 * -1.0 - 0.05).tanh();
        let expected = 0.5 * h0 - 0.6 * h1 + 0.1;
        let out = mlp_forward(&params, &l, &[1.0, -1.0]).unwrap();
        assert!((out[0] - expected).abs() < 1e-15);
        // tanh(-0.05) and tanh(-0.75), written out numerically.
        assert!((out[0] - 0.456110184).abs() < 1e-9, "{}", out[0]);
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let l = MlpLayout::new(2, vec![2], 1).unwrap();
        assert!(matches!(
            mlp_forward(&[0.0; 9], &l, &[1.0]),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(
            mlp_forward(&[0.0; 8], &l, &[1.0, 2.0]),
            Err(Error::Dimension { .. })
        ));
        assert!(mlp_backward(&[0.0; 9], &l, &[1.0, 2.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn zero_output_grad_gives_zero_grads() {
        let l = MlpLayout::new(3, vec![4], 2).unwrap();
        let p = l.init_params(&mut Rng::new(3));
        let (g, gi) = mlp_backward(&p, &l, &[0.1, 0.2, 0.3], &[0.0, 0.0]).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
        assert!(gi.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn affine_derivative() {
        let l = MlpLayout::new(1, vec![], 1).unwrap();
        let (g, gi) = mlp_backward(&[2.0, 1.0], &l, &[3.0], &[1.0]).unwrap();
        assert_eq!(g.0, vec![3.0, 1.0]);
        assert_eq!(gi, vec![2.0]);
    }

    #[test]
    fn finite_diff_basics() {
        let g = finite_diff_grad(|_| 4.2, &[1.0, 2.0, 3.0], 1e-5);
        assert!(g.iter().all(|&x| x == 0.0));
        let g = finite_diff_grad(|p| p.iter().map(|x| x * x).sum(), &[1.0, 2.0], 1e-5);
        assert!((g[0] - 2.0).abs() < 1e-8 && (g[1] - 4.0).abs() < 1e-8);
    }

    #[test]
    fn backward_matches_finite_differences_on_random_nets() {
        let mut rng = Rng::new(0xC0FFEE);
        for _ in 0..20 {
            let input_dim = 1 + rng.below(8);
            let hidden: Vec<usize> = (0..rng.below(3)).map(|_| 1 + rng.below(8)).collect();
            let output_dim = 1 + rng.below(8);
            let l = MlpLayout::new(input_dim, hidden, output_dim).unwrap();
            let p = l.init_params(&mut rng);
            // Perturb biases away from zero too.
            let p: Vec<f64> = p.iter().map(|x| x + 0.1 * rng.normal()).collect();
            let x: Vec<f64> = (0..input_dim).map(|_| rng.normal()).collect();
            let og: Vec<f64> = (0..output_dim).map(|_| rng.normal()).collect();

            let (g, gi) = mlp_backward(&p, &l, &x, &og).unwrap();
            let dot = |params: &[f64], input: &[f64]| -> f64 {
                let out = mlp_forward(params, &l, input).unwrap();
                out.iter().zip(&og).map(|(a, b)| a * b).sum()
            };
            let fd = finite_diff_grad_scaled(|q| dot(q, &x), &p, |pi| 1e-6 * pi.abs().max(1.0));
            for (a, b) in g.iter().zip(fd.iter()) {
                assert!(rel_err(*a, *b) < 1e-5, "param grad {a} vs fd {b}");
            }
            let fdi = finite_diff_grad_scaled(|q| dot(&p, q), &x, |xi| 1e-6 * xi.abs().max(1.0));
            for (a, b) in gi.iter().zip(fdi.iter()) {
                assert!(rel_err(*a, *b) < 1e-5, "input grad {a} vs fd {b}");
            }
        }
    }

    #[test]
    fn forward_is_bit_deterministic() {
        let l = MlpLayout::new(4, vec![16, 16], 3).unwrap();
        let p = l.init_params(&mut Rng::new(1));
        let x = [0.1, -0.2, 0.3, -0.4];
        let a = mlp_forward(&p, &l, &x).unwrap();
        let b = mlp_forward(&p, &l, &x).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn init_respects_bounds() {
        let l = MlpLayout::new(4, vec![8], 2).unwrap();
        let p = l.init_params(&mut Rng::new(11));
        let lim1 = (6.0f64 / 12.0).sqrt();
        assert!(p[..32].iter().all(|w| w.abs() <= lim1));
        assert!(p[32..40].iter().all(|&b| b == 0.0));
        assert!(p[56..58].iter().all(|&b| b == 0.0));
    }
}
