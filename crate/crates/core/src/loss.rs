//! Adversarial objectives: NSGAN, LSGAN, WGAN-GP and DRAGAN, with the
//! gradient penalties built on double backprop.

use crate::error::AutodiffError;
use crate::graph::{Graph, NodeId};
use crate::rng::Prng;
use crate::tensor::Tensor;

pub const DEFAULT_PENALTY_WEIGHT: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LossKind {
    NsGan,
    LsGan,
    WganGp {
        lambda: f64,
    },
    Dragan {
        lambda: f64,
        /// Perturbation scale; `None` means 0.5 x per-batch std of the real
        /// data, computed at call time.
        noise_scale: Option<f64>,
    },
}

impl LossKind {
    pub fn parse(s: &str) -> Result<LossKind, String> {
        match s {
            "nsgan" => Ok(LossKind::NsGan),
            "lsgan" => Ok(LossKind::LsGan),
            "wgangp" => Ok(LossKind::WganGp {
                lambda: DEFAULT_PENALTY_WEIGHT,
            }),
            "dragan" => Ok(LossKind::Dragan {
                lambda: DEFAULT_PENALTY_WEIGHT,
                noise_scale: None,
            }),
            _ => Err(format!("unknown loss {s:?}")),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::NsGan => "nsgan",
            LossKind::LsGan => "lsgan",
            LossKind::WganGp { .. } => "wgangp",
            LossKind::Dragan { .. } => "dragan",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PenaltyMode {
    WganGp,
    Dragan,
}

/// Non-saturating GAN losses over pre-sigmoid logits, in softplus form:
/// `d = mean sp(-d_real) + mean sp(d_fake)`, `g = mean sp(-d_fake)`.
/// Finite for |logit| <= 700.
pub fn nsgan_losses(
    g: &mut Graph,
    d_real: NodeId,
    d_fake: NodeId,
) -> Result<(NodeId, NodeId), AutodiffError> {
    let neg_real = g.scale(d_real, -1.0)?;
    let sp_real = g.softplus(neg_real)?;
    let real_term = g.mean_all(sp_real)?;
    let sp_fake = g.softplus(d_fake)?;
    let fake_term = g.mean_all(sp_fake)?;
    let d_loss = g.add(real_term, fake_term)?;

    let neg_fake = g.scale(d_fake, -1.0)?;
    let sp = g.softplus(neg_fake)?;
    let g_loss = g.mean_all(sp)?;
    Ok((d_loss, g_loss))
}

/// Least-squares losses with targets (1, 0, 1).
pub fn lsgan_losses(
    g: &mut Graph,
    d_real: NodeId,
    d_fake: NodeId,
) -> Result<(NodeId, NodeId), AutodiffError> {
    let rm1 = g.add_scalar(d_real, -1.0)?;
    let rsq = g.square(rm1)?;
    let real_term = g.mean_all(rsq)?;
    let fsq = g.square(d_fake)?;
    let fake_term = g.mean_all(fsq)?;
    let sum = g.add(real_term, fake_term)?;
    let d_loss = g.scale(sum, 0.5)?;

    let fm1 = g.add_scalar(d_fake, -1.0)?;
    let gsq = g.square(fm1)?;
    let gmean = g.mean_all(gsq)?;
    let g_loss = g.scale(gmean, 0.5)?;
    Ok((d_loss, g_loss))
}

/// Critic and generator terms of the Wasserstein objective (penalty added
/// separately): `d_base = mean(d_fake) - mean(d_real)`, `g = -mean(d_fake)`.
pub fn wgan_losses(
    g: &mut Graph,
    d_real: NodeId,
    d_fake: NodeId,
) -> Result<(NodeId, NodeId), AutodiffError> {
    let mf = g.mean_all(d_fake)?;
    let mr = g.mean_all(d_real)?;
    let d_loss = g.sub(mf, mr)?;
    let g_loss = g.scale(mf, -1.0)?;
    Ok((d_loss, g_loss))
}

/// `lambda * mean_i (|| dD(x_hat_i)/dx_hat_i ||_2 - 1)^2`.
///
/// `x_hat` is a per-row interpolate (wgangp) or a Gaussian perturbation of
/// the real batch (dragan); it enters the graph as a leaf, and the returned
/// node double-backpropagates into the discriminator parameters.
pub fn gradient_penalty<D>(
    g: &mut Graph,
    discriminator: D,
    x_real: &Tensor,
    x_fake: &Tensor,
    mode: PenaltyMode,
    lambda: f64,
    noise_scale: Option<f64>,
    rng: &mut Prng,
) -> Result<NodeId, AutodiffError>
where
    D: FnOnce(&mut Graph, NodeId) -> Result<NodeId, AutodiffError>,
{
    if lambda < 0.0 {
        return Err(AutodiffError::Domain {
            op: "gradient-penalty(lambda)",
            value: lambda,
        });
    }
    if x_real.shape() != x_fake.shape() {
        return Err(AutodiffError::ShapeMismatch {
            op: "gradient-penalty",
            lhs: x_real.shape(),
            rhs: x_fake.shape(),
        });
    }
    let (rows, cols) = x_real.shape();
    let mut x_hat = Tensor::zeros(rows, cols);
    match mode {
        PenaltyMode::WganGp => {
            for i in 0..rows {
                let u = rng.uniform();
                for j in 0..cols {
                    let v = u * x_real.get(i, j) + (1.0 - u) * x_fake.get(i, j);
                    x_hat.set(i, j, v);
                }
            }
        }
        PenaltyMode::Dragan => {
            let scale = noise_scale.unwrap_or_else(|| 0.5 * batch_std(x_real));
            for i in 0..rows {
                for j in 0..cols {
                    x_hat.set(i, j, x_real.get(i, j) + scale * rng.gaussian());
                }
            }
        }
    }
    let x_hat_id = g.leaf(x_hat);
    let scores = discriminator(g, x_hat_id)?;
    // Rows are independent, so the input gradient of the summed scores
    // stacks the per-row gradients.
    let total = g.sum_all(scores)?;
    let input_grad = g.input_gradient(total, x_hat_id)?;
    let norms = g.l2_norm_rows(input_grad.node)?;
    let shifted = g.add_scalar(norms, -1.0)?;
    let sq = g.square(shifted)?;
    let mean = g.mean_all(sq)?;
    g.scale(mean, lambda)
}

/// Std of all entries of the batch (population form).
pub fn batch_std(x: &Tensor) -> f64 {
    let n = x.len() as f64;
    let mean = x.values().iter().sum::<f64>() / n;
    let var = x.values().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    var.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::grad_check_fd;

    const LN2: f64 = std::f64::consts::LN_2;

    fn scalar_batch(g: &mut Graph, vals: &[f64]) -> NodeId {
        g.leaf(Tensor::column(vals))
    }

    #[test]
    fn nsgan_zero_logits() {
        let mut g = Graph::new();
        let r = scalar_batch(&mut g, &[0.0, 0.0]);
        let f = scalar_batch(&mut g, &[0.0, 0.0]);
        let (d, gl) = nsgan_losses(&mut g, r, f).unwrap();
        assert!((g.value(d).item() - 2.0 * LN2).abs() < 1e-12);
        assert!((g.value(gl).item() - LN2).abs() < 1e-12);
    }

    #[test]
    fn nsgan_perfect_discriminator_limit() {
        let mut g = Graph::new();
        let r = scalar_batch(&mut g, &[700.0]);
        let f = scalar_batch(&mut g, &[-700.0]);
        let (d, gl) = nsgan_losses(&mut g, r, f).unwrap();
        assert!(g.value(d).item().is_finite());
        assert!(g.value(d).item() < 1e-12);
        assert!(g.value(gl).item().is_finite());
        // g_loss = softplus(700) = 700 exactly at this magnitude
        assert!((g.value(gl).item() - 700.0).abs() < 1e-9);
    }

    #[test]
    fn nsgan_matches_direct_formula_oracle() {
        // Direct, unstabilized evaluation of the definition on a range where
        // it is well conditioned.
        let mut rng = Prng::new(2);
        for _ in 0..50 {
            let r: Vec<f64> = (0..8).map(|_| 15.0 * (2.0 * rng.uniform() - 1.0)).collect();
            let f: Vec<f64> = (0..8).map(|_| 15.0 * (2.0 * rng.uniform() - 1.0)).collect();
            let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
            let d_oracle = -r.iter().map(|&x| sig(x).ln()).sum::<f64>() / 8.0
                - f.iter().map(|&x| (1.0 - sig(x)).ln()).sum::<f64>() / 8.0;
            let g_oracle = -f.iter().map(|&x| sig(x).ln()).sum::<f64>() / 8.0;

            let mut g = Graph::new();
            let rl = scalar_batch(&mut g, &r);
            let fl = scalar_batch(&mut g, &f);
            let (d, gl) = nsgan_losses(&mut g, rl, fl).unwrap();
            let rel_d = (g.value(d).item() - d_oracle).abs() / d_oracle.abs().max(1.0);
            let rel_g = (g.value(gl).item() - g_oracle).abs() / g_oracle.abs().max(1.0);
            assert!(rel_d < 1e-10, "d {rel_d}");
            assert!(rel_g < 1e-10, "g {rel_g}");
        }
    }

    #[test]
    fn lsgan_hand_values() {
        let cases = [
            ((1.0, 0.0), (0.0, 0.5)),
            ((0.0, 1.0), (1.0, 0.0)),
        ];
        for ((r, f), (dw, gw)) in cases {
            let mut g = Graph::new();
            let rl = scalar_batch(&mut g, &[r]);
            let fl = scalar_batch(&mut g, &[f]);
            let (d, gl) = lsgan_losses(&mut g, rl, fl).unwrap();
            assert!((g.value(d).item() - dw).abs() < 1e-15);
            assert!((g.value(gl).item() - gw).abs() < 1e-15);
        }
        // d_fake = 0.5 -> g_loss = 0.125
        let mut g = Graph::new();
        let rl = scalar_batch(&mut g, &[1.0]);
        let fl = scalar_batch(&mut g, &[0.5]);
        let (_, gl) = lsgan_losses(&mut g, rl, fl).unwrap();
        assert!((g.value(gl).item() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn wgan_hand_values() {
        let mut g = Graph::new();
        let rl = scalar_batch(&mut g, &[1.0]);
        let fl = scalar_batch(&mut g, &[0.0]);
        let (d, _) = wgan_losses(&mut g, rl, fl).unwrap();
        assert_eq!(g.value(d).item(), -1.0);

        let mut g = Graph::new();
        let rl = scalar_batch(&mut g, &[0.7, -0.2]);
        let fl = scalar_batch(&mut g, &[0.7, -0.2]);
        let (d, _) = wgan_losses(&mut g, rl, fl).unwrap();
        assert_eq!(g.value(d).item(), 0.0);

        let mut g = Graph::new();
        let rl = scalar_batch(&mut g, &[0.0]);
        let fl = scalar_batch(&mut g, &[1.0, 3.0]);
        let (_, gl) = wgan_losses(&mut g, rl, fl).unwrap();
        assert_eq!(g.value(gl).item(), -2.0);
    }

    #[test]
    fn unit_gradient_linear_critic_gives_zero_penalty() {
        // D(x) = <w, x> with ||w|| = 1
        let w = Tensor::from_vec(3, 1, vec![0.6, 0.8, 0.0]).unwrap();
        let mut rng = Prng::new(4);
        let x_real = rng.gaussian_tensor(5, 3);
        let x_fake = rng.gaussian_tensor(5, 3);
        for mode in [PenaltyMode::WganGp, PenaltyMode::Dragan] {
            let mut g = Graph::new();
            let wc = w.clone();
            let penalty = gradient_penalty(
                &mut g,
                move |g, x| {
                    let wl = g.leaf(wc);
                    g.matmul(x, wl)
                },
                &x_real,
                &x_fake,
                mode,
                10.0,
                None,
                &mut rng,
            )
            .unwrap();
            assert!(g.value(penalty).item().abs() < 1e-9, "{mode:?}");
        }
    }

    #[test]
    fn scaling_critic_gives_lambda() {
        // D(x) = 2x on 1-D inputs: gradient norm 2 everywhere, penalty = lambda.
        let mut rng = Prng::new(8);
        let x_real = rng.gaussian_tensor(7, 1);
        let x_fake = rng.gaussian_tensor(7, 1);
        let lambda = 3.5;
        let mut g = Graph::new();
        let penalty = gradient_penalty(
            &mut g,
            |g, x| g.scale(x, 2.0),
            &x_real,
            &x_fake,
            PenaltyMode::WganGp,
            lambda,
            None,
            &mut rng,
        )
        .unwrap();
        assert!((g.value(penalty).item() - lambda).abs() < 1e-9);
    }

    #[test]
    fn negative_lambda_rejected() {
        let mut rng = Prng::new(1);
        let x = Tensor::zeros(2, 2);
        let mut g = Graph::new();
        let err = gradient_penalty(
            &mut g,
            |g, x| g.sum_rows(x),
            &x,
            &x,
            PenaltyMode::WganGp,
            -1.0,
            None,
            &mut rng,
        );
        assert!(err.is_err());
    }

    #[test]
    fn penalty_nonnegative_property() {
        let mut rng = Prng::new(12);
        for trial in 0..20 {
            let mut prng = Prng::new(500 + trial);
            let w1 = prng.gaussian_tensor(4, 3);
            let b1 = prng.gaussian_tensor(1, 4);
            let w2 = prng.gaussian_tensor(1, 4);
            let x_real = prng.gaussian_tensor(6, 3);
            let x_fake = prng.gaussian_tensor(6, 3);
            let mut g = Graph::new();
            let penalty = gradient_penalty(
                &mut g,
                |g, x| {
                    let w1 = g.leaf(w1);
                    let b1 = g.leaf(b1);
                    let w2 = g.leaf(w2);
                    let w1t = g.transpose(w1)?;
                    let h = g.matmul(x, w1t)?;
                    let h = g.add_broadcast_row(h, b1)?;
                    let h = g.tanh(h)?;
                    let w2t = g.transpose(w2)?;
                    g.matmul(h, w2t)
                },
                &x_real,
                &x_fake,
                PenaltyMode::WganGp,
                10.0,
                None,
                &mut rng,
            )
            .unwrap();
            assert!(g.value(penalty).item() >= 0.0);
        }
    }

    #[test]
    fn dragan_depends_only_on_real_batch() {
        // Swapping x_fake for arbitrary data must not change the dragan
        // penalty when the rng stream is replayed.
        let mut base = Prng::new(77);
        let x_real = base.gaussian_tensor(5, 2);
        let fake_a = base.gaussian_tensor(5, 2);
        let fake_b = base.gaussian_tensor(5, 2);
        let critic = |g: &mut Graph, x: NodeId| {
            let w = g.leaf(Tensor::from_vec(2, 1, vec![1.4, -0.3]).unwrap());
            let s = g.matmul(x, w)?;
            g.tanh(s)
        };
        let run = |fake: &Tensor| {
            let mut rng = Prng::new(123);
            let mut g = Graph::new();
            let p = gradient_penalty(
                &mut g,
                critic,
                &x_real,
                fake,
                PenaltyMode::Dragan,
                10.0,
                None,
                &mut rng,
            )
            .unwrap();
            g.value(p).item()
        };
        assert_eq!(run(&fake_a), run(&fake_b));
    }

    #[test]
    fn penalty_double_backprop_matches_fd() {
        // ∂penalty/∂θ for a 1-hidden-layer tanh critic, against central
        // finite differences over the parameters.
        let mut rng = Prng::new(42);
        let x_hat = rng.gaussian_tensor(4, 3);
        let w1_0 = rng.gaussian_tensor(5, 3);
        let b1_0 = rng.gaussian_tensor(1, 5);
        let w2_0 = rng.gaussian_tensor(1, 5);
        let xh = x_hat.clone();
        let build = move |g: &mut Graph, ids: &[NodeId]| {
            let x = g.leaf(xh.clone());
            let w1t = g.transpose(ids[0])?;
            let h = g.matmul(x, w1t)?;
            let h = g.add_broadcast_row(h, ids[1])?;
            let h = g.tanh(h)?;
            let w2t = g.transpose(ids[2])?;
            let scores = g.matmul(h, w2t)?;
            let total = g.sum_all(scores)?;
            let ig = g.input_gradient(total, x)?;
            let norms = g.l2_norm_rows(ig.node)?;
            let shifted = g.add_scalar(norms, -1.0)?;
            let sq = g.square(shifted)?;
            g.mean_all(sq)
        };
        let err = grad_check_fd(build, &[w1_0, b1_0, w2_0], 1e-5).unwrap();
        assert!(err < 1e-4, "penalty double-backprop fd error {err}");
    }
}
