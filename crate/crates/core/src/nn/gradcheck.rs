//! Finite-difference verification of the analytic gradients.

use super::network::{NetError, Network, Target};
use crate::dataset::preprocess::NetInput;

pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter index with the largest error.
    pub worst_param: usize,
    pub params_checked: usize,
}

fn mean_loss(net: &Network, batch: &[(NetInput, Target)]) -> Result<f64, NetError> {
    let mut total = 0.0;
    for (x, t) in batch {
        total += net.loss(x, t)?;
    }
    Ok(total / batch.len() as f64)
}

/// Compares backprop gradients of the mean batch loss with central
/// differences of step `h` over every parameter.
///
/// Relative error is `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn grad_check(net: &Network, batch: &[(NetInput, Target)], h: f64) -> Result<GradCheckReport, NetError> {
    let mut analytic = vec![0.0; net.param_count()];
    let scale = 1.0 / batch.len() as f64;
    for (x, t) in batch {
        net.accumulate_gradient(x, t, scale, &mut analytic)?;
    }
    let mut probe = net.clone();
    let mut worst = (0.0, 0);
    for i in 0..net.param_count() {
        let w = net.params()[i];
        probe.params_mut()[i] = w + h;
        let up = mean_loss(&probe, batch)?;
        probe.params_mut()[i] = w - h;
        let down = mean_loss(&probe, batch)?;
        probe.params_mut()[i] = w;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        if rel > worst.0 {
            worst = (rel, i);
        }
    }
    Ok(GradCheckReport { max_relative_error: worst.0, worst_param: worst.1, params_checked: net.param_count() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color::LabColor;
    use crate::nn::network::{ConvBlock, HeadKind, NetworkConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn check(head: HeadKind, targets: &[Target]) -> GradCheckReport {
        let cfg = NetworkConfig {
            input_size: 6,
            blocks: vec![ConvBlock { channels: 2, kernel: 3, pool: 2 }],
            feature_dim: 3,
            head,
            classes: 4,
            seed: 5,
        };
        let net = Network::new(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let batch: Vec<_> = targets
            .iter()
            .map(|t| {
                let data = (0..3 * 36).map(|_| rng.gen_range(-1.5..1.5)).collect();
                (NetInput::from_chw(6, data).unwrap(), *t)
            })
            .collect();
        grad_check(&net, &batch, DEFAULT_STEP).unwrap()
    }

    #[test]
    fn coral_gradients() {
        let r = check(HeadKind::Ordinal, &[Target::Rank(1), Target::Rank(3), Target::Rank(4)]);
        assert!(r.max_relative_error < 1e-4, "{r:?}");
    }

    #[test]
    fn softmax_gradients() {
        let r = check(HeadKind::Classification, &[Target::Rank(2), Target::Rank(4)]);
        assert!(r.max_relative_error < 1e-4, "{r:?}");
    }

    #[test]
    fn delta_e_gradients() {
        let t = [Target::Lab(LabColor::new(60.0, 8.0, 18.0)), Target::Lab(LabColor::new(35.0, 12.0, 25.0))];
        let r = check(HeadKind::LabRegression, &t);
        assert!(r.max_relative_error < 1e-4, "{r:?}");
    }
}
