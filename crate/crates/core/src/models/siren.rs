//! Sine-activated coordinate MLP with optional ReLU or softmax tail.

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::rng::{self, SeededRng};

pub const DEFAULT_W0: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FinalActivation {
    None,
    Relu,
    /// `ReLU → Linear(out, tail_width) → ReLU → Linear(tail_width, outputs) → Softmax`
    SoftmaxTail { tail_width: usize, outputs: usize },
}

/// Architecture of a sine network.
///
/// Layout: one `Linear → sin(w0 · ·)` block per entry of `hidden_dims`
/// (the first uses `w0_first`, the rest `w0_hidden`), then a linear output
/// layer of width `output_dim`, then `final_activation`.
#[derive(Debug, Clone, PartialEq)]
pub struct SirenSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub w0_first: f64,
    pub w0_hidden: f64,
    pub final_activation: FinalActivation,
}

impl SirenSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize, final_activation: FinalActivation) -> Self {
        SirenSpec {
            input_dim,
            hidden_dims,
            output_dim,
            w0_first: DEFAULT_W0,
            w0_hidden: DEFAULT_W0,
            final_activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::invalid("siren input_dim must be >= 1"));
        }
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return Err(Error::invalid("siren hidden_dims must be nonempty and positive"));
        }
        if self.output_dim == 0 {
            return Err(Error::invalid("siren output_dim must be >= 1"));
        }
        if !(self.w0_first > 0.0 && self.w0_first.is_finite()) || !(self.w0_hidden > 0.0 && self.w0_hidden.is_finite()) {
            return Err(Error::invalid("siren w0 must be positive and finite"));
        }
        if let FinalActivation::SoftmaxTail { tail_width, outputs } = self.final_activation {
            if tail_width == 0 || outputs == 0 {
                return Err(Error::invalid("softmax tail widths must be positive"));
            }
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every linear layer in evaluation order.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::new();
        let mut fan_in = self.input_dim;
        for &h in &self.hidden_dims {
            shapes.push((fan_in, h));
            fan_in = h;
        }
        shapes.push((fan_in, self.output_dim));
        if let FinalActivation::SoftmaxTail { tail_width, outputs } = self.final_activation {
            shapes.push((self.output_dim, tail_width));
            shapes.push((tail_width, outputs));
        }
        shapes
    }

    /// Width of the network's final output.
    pub fn outputs(&self) -> usize {
        match self.final_activation {
            FinalActivation::SoftmaxTail { outputs, .. } => outputs,
            _ => self.output_dim,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }

    /// Parameter tensors `[w0, b0, w1, b1, ...]` with weights stored `[fan_in, fan_out]`.
    ///
    /// First layer weights ~ U(-1/fan_in, 1/fan_in); later sine-side layers
    /// ~ U(-√(6/fan_in)/w0, √(6/fan_in)/w0); biases and the softmax tail use
    /// U(-1/√fan_in, 1/√fan_in).
    pub fn init(&self, rng: &mut SeededRng) -> Result<Vec<Tensor>> {
        self.validate()?;
        let n_siren = self.hidden_dims.len() + 1;
        let mut params = Vec::new();
        for (layer, (fan_in, fan_out)) in self.layer_shapes().into_iter().enumerate() {
            let fi = fan_in as f64;
            let w_bound = if layer == 0 {
                1.0 / fi
            } else if layer < n_siren {
                (6.0 / fi).sqrt() / self.w0_hidden
            } else {
                1.0 / fi.sqrt()
            };
            let b_bound = 1.0 / fi.sqrt();
            let w = (0..fan_in * fan_out)
                .map(|_| rng::uniform(rng, -w_bound, w_bound))
                .collect();
            let b = (0..fan_out).map(|_| rng::uniform(rng, -b_bound, b_bound)).collect();
            params.push(Tensor::matrix(fan_in, fan_out, w)?);
            params.push(Tensor::vector(b));
        }
        Ok(params)
    }

    pub fn check_params(&self, params: &[Tensor]) -> Result<()> {
        let shapes = self.layer_shapes();
        if params.len() != 2 * shapes.len() {
            return Err(Error::shape(format!(
                "siren expects {} parameter tensors, got {}",
                2 * shapes.len(),
                params.len()
            )));
        }
        for (l, (fan_in, fan_out)) in shapes.into_iter().enumerate() {
            if params[2 * l].shape() != [fan_in, fan_out] || params[2 * l + 1].shape() != [fan_out] {
                return Err(Error::shape(format!(
                    "layer {l}: expected w [{fan_in}, {fan_out}] and b [{fan_out}], got {:?} and {:?}",
                    params[2 * l].shape(),
                    params[2 * l + 1].shape()
                )));
            }
        }
        Ok(())
    }

    /// Record the forward pass; `params` are node ids as returned by
    /// registering the tensors from [`SirenSpec::init`] in order.
    pub fn forward(&self, g: &mut Graph, params: &[NodeId], x: NodeId) -> Result<NodeId> {
        let mut h = x;
        let mut layer = 0;
        for i in 0..self.hidden_dims.len() {
            let z = g.affine(h, params[2 * layer], params[2 * layer + 1])?;
            let w0 = if i == 0 { self.w0_first } else { self.w0_hidden };
            h = g.sine(z, w0)?;
            layer += 1;
        }
        let mut out = g.affine(h, params[2 * layer], params[2 * layer + 1])?;
        layer += 1;
        match self.final_activation {
            FinalActivation::None => {}
            FinalActivation::Relu => out = g.relu(out)?,
            FinalActivation::SoftmaxTail { .. } => {
                out = g.relu(out)?;
                out = g.affine(out, params[2 * layer], params[2 * layer + 1])?;
                out = g.relu(out)?;
                out = g.affine(out, params[2 * layer + 2], params[2 * layer + 3])?;
                out = g.softmax_rows(out)?;
            }
        }
        Ok(out)
    }
}

/// A network spec together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SirenNet {
    pub spec: SirenSpec,
    pub params: Vec<Tensor>,
}

impl SirenNet {
    pub fn new(spec: SirenSpec, rng: &mut SeededRng) -> Result<Self> {
        let params = spec.init(rng)?;
        Ok(SirenNet { spec, params })
    }

    pub fn from_params(spec: SirenSpec, params: Vec<Tensor>) -> Result<Self> {
        spec.validate()?;
        spec.check_params(&params)?;
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite { op: "parameters" });
        }
        Ok(SirenNet { spec, params })
    }

    pub fn register(&self, g: &mut Graph, trainable: bool) -> Vec<NodeId> {
        self.params
            .iter()
            .map(|p| {
                if trainable {
                    g.param(p.clone())
                } else {
                    g.constant(p.clone())
                }
            })
            .collect()
    }

    /// Inference on a `[n, input_dim]` row-major batch.
    pub fn evaluate(&self, coords: &[f64]) -> Result<Tensor> {
        let d = self.spec.input_dim;
        if coords.is_empty() || coords.len() % d != 0 {
            return Err(Error::shape(format!(
                "coordinate batch of {} values is not a multiple of input_dim {d}",
                coords.len()
            )));
        }
        let mut g = Graph::new();
        let ids = self.register(&mut g, false);
        let x = g.constant(Tensor::matrix(coords.len() / d, d, coords.to_vec())?);
        let y = self.spec.forward(&mut g, &ids, x)?;
        Ok(g.value(y).clone())
    }
}

/// Evaluate a sine network on a batch of normalized coordinates.
pub fn siren_forward(spec: &SirenSpec, params: &[Tensor], coords: &[f64]) -> Result<Tensor> {
    spec.check_params(params)?;
    SirenNet {
        spec: spec.clone(),
        params: params.to_vec(),
    }
    .evaluate(coords)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_layer_gradient_matches_central_differences() {
        let spec = SirenSpec::new(2, vec![16], 3, FinalActivation::None);
        let mut params = spec.init(&mut rng::seeded(11)).unwrap();
        let coords = [0.3, -0.7, -0.1, 0.9, 0.5, 0.2];
        let weights = [0.4, -1.0, 0.7, 0.2, 0.9, -0.3, -0.6, 0.1, 0.8];
        let loss = |p: &[Tensor]| -> f64 {
            let y = siren_forward(&spec, p, &coords).unwrap();
            y.data().iter().zip(&weights).map(|(a, b)| a * b).sum()
        };
        let mut g = Graph::new();
        let ids: Vec<_> = params.iter().map(|p| g.param(p.clone())).collect();
        let x = g.constant(Tensor::matrix(3, 2, coords.to_vec()).unwrap());
        let y = spec.forward(&mut g, &ids, x).unwrap();
        let grads = g.backward(y, &Tensor::matrix(3, 3, weights.to_vec()).unwrap()).unwrap();
        let h = 1e-5;
        for (p, id) in ids.iter().enumerate() {
            for k in 0..params[p].len() {
                let orig = params[p].data()[k];
                params[p].data_mut()[k] = orig + h;
                let up = loss(&params);
                params[p].data_mut()[k] = orig - h;
                let down = loss(&params);
                params[p].data_mut()[k] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = grads.get(*id).unwrap()[k];
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
                assert!(rel < 1e-4, "param {p}[{k}]: {analytic} vs {numeric}");
            }
        }
    }

    #[test]
    fn zero_params_with_relu_give_zero() {
        let spec = SirenSpec::new(2, vec![8, 8], 1, FinalActivation::Relu);
        let params: Vec<Tensor> = spec
            .init(&mut rng::seeded(0))
            .unwrap()
            .into_iter()
            .map(|t| Tensor::zeros(t.shape().to_vec()))
            .collect();
        let y = siren_forward(&spec, &params, &[0.3, -0.2, 1.0, 1.0, -1.0, 0.5]).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn single_sine_layer_is_scaled_sine() {
        let spec = SirenSpec::new(1, vec![1], 1, FinalActivation::None);
        let w = 0.37;
        let params = vec![
            Tensor::matrix(1, 1, vec![w]).unwrap(),
            Tensor::vector(vec![0.0]),
            Tensor::matrix(1, 1, vec![1.0]).unwrap(),
            Tensor::vector(vec![0.0]),
        ];
        for x in [-0.9, -0.1, 0.0, 0.25, 0.8] {
            let y = siren_forward(&spec, &params, &[x]).unwrap();
            assert_eq!(y.data()[0], (30.0 * (w * x)).sin());
        }
    }

    #[test]
    fn init_bounds_follow_fan_in() {
        let spec = SirenSpec::new(3, vec![16, 16], 4, FinalActivation::None);
        let p = spec.init(&mut rng::seeded(7)).unwrap();
        assert!(p[0].data().iter().all(|w| w.abs() <= 1.0 / 3.0));
        let hidden = (6.0f64 / 16.0).sqrt() / 30.0;
        assert!(p[2].data().iter().all(|w| w.abs() <= hidden));
        assert_eq!(spec.parameter_count(), p.iter().map(Tensor::len).sum::<usize>());
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(SirenSpec::new(0, vec![4], 1, FinalActivation::None).validate().is_err());
        assert!(SirenSpec::new(2, vec![], 1, FinalActivation::None).validate().is_err());
        let mut s = SirenSpec::new(2, vec![4], 1, FinalActivation::None);
        s.w0_first = 0.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn lipschitz_spot_check_against_dense_sampling() {
        // Estimate L from a dense 1-D sweep, then check random pairs obey it.
        let spec = SirenSpec::new(1, vec![16, 16], 1, FinalActivation::None);
        let net = SirenNet::new(spec, &mut rng::seeded(3)).unwrap();
        let n = 4001;
        let xs: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
        let ys = net.evaluate(&xs).unwrap();
        let h = 2.0 / (n - 1) as f64;
        let lip = ys
            .data()
            .windows(2)
            .map(|w| (w[1] - w[0]).abs() / h)
            .fold(0.0, f64::max);
        let mut r = rng::seeded(11);
        for _ in 0..200 {
            let a = rng::uniform(&mut r, -1.0, 1.0);
            let b = (a + rng::uniform(&mut r, -0.05, 0.05)).clamp(-1.0, 1.0);
            let y = net.evaluate(&[a, b]).unwrap();
            let bound = 1.05 * lip * (a - b).abs() + 1e-12;
            assert!((y.data()[0] - y.data()[1]).abs() <= bound);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn batch_permutation_equivariance(seed in 0u64..1000, n in 2usize..12) {
            let spec = SirenSpec::new(2, vec![8, 8], 3, FinalActivation::None);
            let net = SirenNet::new(spec, &mut rng::seeded(seed)).unwrap();
            let mut r = rng::seeded(seed + 1);
            let coords: Vec<f64> = (0..2 * n).map(|_| rng::uniform(&mut r, -1.0, 1.0)).collect();
            let mut perm: Vec<usize> = (0..n).collect();
            rng::shuffle(&mut r, &mut perm);
            let permuted: Vec<f64> = perm.iter().flat_map(|&i| [coords[2 * i], coords[2 * i + 1]]).collect();
            let y = net.evaluate(&coords).unwrap();
            let yp = net.evaluate(&permuted).unwrap();
            for (row, &src) in perm.iter().enumerate() {
                prop_assert_eq!(&yp.data()[3 * row..3 * row + 3], &y.data()[3 * src..3 * src + 3]);
            }
        }
    }
}
