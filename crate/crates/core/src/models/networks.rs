use super::siren::{FinalActivation, SirenNet, SirenSpec};
use crate::autodiff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub const DEFAULT_WIDTH: usize = 128;
pub const DEFAULT_KERNEL_LAYERS: usize = 3;

/// Number of taps in a window of radius `r` over `d` axes.
pub fn window_len(r: usize, d: usize) -> usize {
    (2 * r + 1).pow(d as u32)
}

/// Maps a center coordinate to a probability vector over the `(2r+1)^d`
/// window taps.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelNet {
    pub r: usize,
    pub net: SirenNet,
}

impl KernelNet {
    pub fn spec(d: usize, r: usize, width: usize, layers: usize) -> SirenSpec {
        SirenSpec::new(
            d,
            vec![width; layers.max(1)],
            width,
            FinalActivation::SoftmaxTail {
                tail_width: width,
                outputs: window_len(r, d),
            },
        )
    }

    pub fn new(d: usize, r: usize, width: usize, layers: usize, rng: &mut SeededRng) -> Result<Self> {
        if r == 0 {
            return Err(Error::invalid("kernel radius r must be >= 1"));
        }
        let net = SirenNet::new(Self::spec(d, r, width, layers), rng)?;
        Ok(KernelNet { r, net })
    }

    pub fn from_net(r: usize, net: SirenNet) -> Result<Self> {
        let expected = window_len(r, net.spec.input_dim);
        match net.spec.final_activation {
            FinalActivation::SoftmaxTail { outputs, .. } if outputs == expected => Ok(KernelNet { r, net }),
            other => Err(Error::Format {
                what: "kernel net",
                detail: format!("expected a softmax tail with {expected} outputs, found {other:?}"),
            }),
        }
    }

    pub fn dim(&self) -> usize {
        self.net.spec.input_dim
    }

    pub fn window_len(&self) -> usize {
        window_len(self.r, self.dim())
    }

    /// `[n, (2r+1)^d]` kernel weights at normalized centers.
    pub fn weights(&self, centers: &[f64]) -> Result<Tensor> {
        self.net.evaluate(centers)
    }

    pub fn forward(&self, g: &mut Graph, params: &[NodeId], centers: NodeId) -> Result<NodeId> {
        self.net.spec.forward(g, params, centers)
    }
}

/// Smooth nonnegative background over normalized coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct BkgdNet {
    pub net: SirenNet,
}

impl BkgdNet {
    pub fn spec(d: usize, width: usize) -> SirenSpec {
        SirenSpec::new(d, vec![width], 1, FinalActivation::Relu)
    }

    pub fn new(d: usize, width: usize, rng: &mut SeededRng) -> Result<Self> {
        Ok(BkgdNet {
            net: SirenNet::new(Self::spec(d, width), rng)?,
        })
    }

    pub fn from_net(net: SirenNet) -> Result<Self> {
        if net.spec.outputs() != 1 || net.spec.final_activation != FinalActivation::Relu {
            return Err(Error::Format {
                what: "background net",
                detail: "expected a single ReLU output".into(),
            });
        }
        Ok(BkgdNet { net })
    }

    pub fn values(&self, coords: &[f64]) -> Result<Vec<f64>> {
        Ok(self.net.evaluate(coords)?.into_data())
    }

    /// `[n, 1]` output node.
    pub fn forward(&self, g: &mut Graph, params: &[NodeId], coords: NodeId) -> Result<NodeId> {
        self.net.spec.forward(g, params, coords)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    #[test]
    fn window_sizes() {
        assert_eq!(window_len(3, 4), 2401);
        assert_eq!(window_len(2, 4), 625);
        assert_eq!(window_len(1, 2), 9);
    }

    #[test]
    fn kernel_weights_have_window_length_and_sum_to_one() {
        let k = KernelNet::new(4, 2, 16, 2, &mut rng::seeded(1)).unwrap();
        let w = k.weights(&[0.1, -0.2, 0.3, 0.9, -1.0, 1.0, 0.0, 0.5]).unwrap();
        assert_eq!(w.shape(), &[2, 625]);
        for row in w.data().chunks(625) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn four_d_radius_three_window_has_2401_taps() {
        let k = KernelNet::new(4, 3, 8, 1, &mut rng::seeded(2)).unwrap();
        let w = k.weights(&[0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(w.shape(), &[1, 2401]);
    }

    #[test]
    fn zero_tail_gives_uniform_kernel() {
        let mut k = KernelNet::new(2, 1, 8, 2, &mut rng::seeded(3)).unwrap();
        let n = k.net.params.len();
        for t in &mut k.net.params[n - 2..] {
            t.data_mut().fill(0.0);
        }
        let w = k.weights(&[0.4, -0.7]).unwrap();
        assert_eq!(w.len(), 9);
        for &v in w.data() {
            assert!((v - 1.0 / 9.0).abs() < 1e-15);
        }
    }

    #[test]
    fn background_zero_params_is_zero() {
        let mut b = BkgdNet::new(2, 16, &mut rng::seeded(4)).unwrap();
        for t in &mut b.net.params {
            t.data_mut().fill(0.0);
        }
        assert_eq!(b.values(&[0.3, 0.3, -1.0, 1.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn kernel_from_net_checks_head() {
        let b = BkgdNet::new(2, 4, &mut rng::seeded(5)).unwrap();
        assert!(KernelNet::from_net(1, b.net.clone()).is_err());
        let k = KernelNet::new(2, 1, 4, 1, &mut rng::seeded(6)).unwrap();
        assert!(KernelNet::from_net(2, k.net.clone()).is_err());
        assert!(BkgdNet::from_net(k.net).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn kernel_weights_are_simplex_points(seed in 0u64..10_000) {
            let k = KernelNet::new(2, 2, 16, 2, &mut rng::seeded(seed)).unwrap();
            let mut r = rng::seeded(seed ^ 0xabcd);
            let centers: Vec<f64> = (0..2 * 1000).map(|_| rng::uniform(&mut r, -1.0, 1.0)).collect();
            let w = k.weights(&centers).unwrap();
            for row in w.data().chunks(25) {
                prop_assert!(row.iter().all(|&v| v >= 0.0));
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
        }

        #[test]
        fn background_is_nonnegative(seed in 0u64..10_000) {
            let b = BkgdNet::new(3, 32, &mut rng::seeded(seed)).unwrap();
            let mut r = rng::seeded(seed + 17);
            let coords: Vec<f64> = (0..3 * 500).map(|_| rng::uniform(&mut r, -1.0, 1.0)).collect();
            prop_assert!(b.values(&coords).unwrap().iter().all(|&v| v >= 0.0));
        }
    }
}
