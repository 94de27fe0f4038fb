//! Dual-network separation: kernel-weighted ideal signal plus a learned background.

mod config;
mod engine;
mod window;

pub use config::{LossKind, TrainConfig, Transform};
pub use engine::{loss, predict, predict_grid, train, Prediction, SeparationResult, Trainer};
pub use window::{convolve_signal, gather_neighbors, Neighbor, Window};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Axis, Grid};
    use crate::models::{AnalyticParams, ModelBundle, SignalModel};

    #[test]
    fn loss_examples() {
        let p = [1.0, 2.0, 3.0];
        for kind in [LossKind::MseMean, LossKind::L2Norm] {
            assert_eq!(loss(&p, &p, &[0.0; 3], 0.7, kind).unwrap(), 0.0);
        }
        let l = loss(&[1.0, -1.0], &[0.0, 0.0], &[2.0, 0.0], 0.5, LossKind::MseMean).unwrap();
        assert_eq!(l, 2.0);
        let l = loss(&[3.0, 0.0], &[0.0, 4.0], &[5.0, 0.0], 0.0, LossKind::L2Norm).unwrap();
        assert_eq!(l, 5.0);
        assert!(loss(&[1.0], &[1.0, 2.0], &[0.0], 0.1, LossKind::MseMean).is_err());
        assert!(loss(&[1.0], &[1.0], &[0.0], -0.1, LossKind::MseMean).is_err());
    }

    fn small_grid() -> Grid {
        let axes = vec![Axis::new("H", 10, -1.0, 1.0), Axis::new("omega", 12, 0.0, 80.0)];
        Grid::from_fn(axes, |i| 1.0 + 0.1 * i[0] as f64 + 0.05 * i[1] as f64).unwrap()
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            r: 1,
            epochs: 3,
            batch_size: 32,
            lr: 1e-3,
            kernel_width: 8,
            kernel_layers: 1,
            bkgd_width: 8,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_background_means_total_is_signal() {
        let g = small_grid();
        let signal = SignalModel::Analytic(AnalyticParams::default());
        let mut bundle = ModelBundle::init(g.axes(), signal, &tiny_config()).unwrap();
        for t in &mut bundle.bkgd_net.net.params {
            t.data_mut().fill(0.0);
        }
        let centers: Vec<usize> = (0..g.len()).collect();
        let p = predict(&bundle, &centers).unwrap();
        assert_eq!(p.total, p.signal);
        assert!(p.background.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn zero_signal_means_total_is_background() {
        let g = small_grid();
        let zero = SignalModel::Gridded(Grid::zeros(g.axes().to_vec()).unwrap());
        let bundle = ModelBundle::init(g.axes(), zero, &tiny_config()).unwrap();
        let (total, signal, background) = predict_grid(&bundle).unwrap();
        assert!(signal.values().iter().all(|&s| s == 0.0));
        assert_eq!(total.values(), background.values());
    }

    #[test]
    fn predict_agrees_with_grid_prediction() {
        let g = small_grid();
        let signal = SignalModel::Analytic(AnalyticParams::default());
        let bundle = ModelBundle::init(g.axes(), signal, &tiny_config()).unwrap();
        let (total, signal, _) = predict_grid(&bundle).unwrap();
        let centers = [0, 7, 33, 119];
        let p = predict(&bundle, &centers).unwrap();
        for (i, &c) in centers.iter().enumerate() {
            assert_eq!(p.total[i], total.values()[c]);
            assert_eq!(p.signal[i], signal.values()[c]);
        }
    }

    #[test]
    fn zero_learning_rate_freezes_everything() {
        let g = small_grid();
        let signal = SignalModel::Analytic(AnalyticParams::default());
        let cfg = TrainConfig { lr: 0.0, ..tiny_config() };
        let res = train(&g, &signal, &cfg).unwrap();
        let init = ModelBundle::init(g.axes(), signal, &cfg).unwrap();
        assert_eq!(res.bundle, init);
        let first = res.loss_trace[0];
        for &l in &res.loss_trace {
            assert!((l - first).abs() <= 1e-12 * first.abs());
        }
    }

    #[test]
    fn identical_seeds_identical_traces() {
        let g = small_grid();
        let signal = SignalModel::Analytic(AnalyticParams::default());
        let a = train(&g, &signal, &tiny_config()).unwrap();
        let b = train(&g, &signal, &tiny_config()).unwrap();
        assert_eq!(a.loss_trace, b.loss_trace);
        assert_eq!(a.total, b.total);
        assert_eq!(a.decomposition_residual(), 0.0);
    }

    #[test]
    fn log1p_and_l2_variants_train() {
        let g = small_grid();
        let signal = SignalModel::Analytic(AnalyticParams::default());
        for (transform, loss_kind) in [
            (Transform::Log1p, LossKind::MseMean),
            (Transform::Identity, LossKind::L2Norm),
        ] {
            let cfg = TrainConfig {
                transform,
                loss_kind,
                ..tiny_config()
            };
            let res = train(&g, &signal, &cfg).unwrap();
            assert_eq!(res.loss_trace.len(), 3);
            assert!(res.signal.values().iter().all(|&v| v >= 0.0));
            assert!(res.background.values().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn training_errors() {
        let signal = SignalModel::Analytic(AnalyticParams::default());
        let g = small_grid();
        let bad = g.map(|_| f64::NAN);
        assert!(train(&bad, &signal, &tiny_config()).is_err());
        let cfg = TrainConfig {
            compute_budget: 10,
            ..tiny_config()
        };
        assert!(matches!(
            train(&g, &signal, &cfg),
            Err(Error::ComputeBudget { .. })
        ));
        let diverge = TrainConfig {
            lr: 1e300,
            ..tiny_config()
        };
        assert!(matches!(
            train(&g, &signal, &diverge),
            Err(Error::Divergence { .. })
        ));
        let cfg = TrainConfig { r: 0, ..tiny_config() };
        assert!(train(&g, &signal, &cfg).is_err());
    }

    use crate::error::Error;
}
