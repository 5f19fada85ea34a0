//! Objective terms: per-domain reconstruction, cross-cycle reconstruction,
//! and the conditional adversarial losses, plus their weighted total.
//!
//! Tensor-valued variants (`*_t`) stay on the autodiff graph and are what
//! the trainer backpropagates; the plain functions reduce to `f64` for
//! reporting and for direct use on single patches.

use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

use crate::discriminator::ScoreMaps;
use crate::model::ImagePatch;
use crate::nn::softplus;
use crate::{Error, Result};

fn default_lambda() -> f64 {
    100.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    #[serde(default = "default_lambda")]
    pub lambda_cc: f64,
    #[serde(default = "default_lambda")]
    pub lambda_rec: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_cc: default_lambda(), lambda_rec: default_lambda() }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_cc < 0.0 || self.lambda_rec < 0.0 {
            return Err(Error::Config("loss weights must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Scalar values of every objective term at one training step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub rec_a: f64,
    pub rec_b: f64,
    pub cc_a: f64,
    pub cc_b: f64,
    pub adv_gen_a: f64,
    pub adv_gen_b: f64,
    pub adv_disc_a: f64,
    pub adv_disc_b: f64,
    pub total_generator: f64,
    pub total_discriminator: f64,
}

impl LossReport {
    /// Name of the first non-finite term, if any.
    pub fn non_finite_term(&self) -> Option<&'static str> {
        [
            ("rec_a", self.rec_a),
            ("rec_b", self.rec_b),
            ("cc_a", self.cc_a),
            ("cc_b", self.cc_b),
            ("adv_gen_a", self.adv_gen_a),
            ("adv_gen_b", self.adv_gen_b),
            ("adv_disc_a", self.adv_disc_a),
            ("adv_disc_b", self.adv_disc_b),
            ("total_generator", self.total_generator),
            ("total_discriminator", self.total_discriminator),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(name, _)| name)
    }
}

fn check_same_shape(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Dimension(format!(
            "loss operands have mismatched shapes {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

/// Mean absolute difference over all elements.
pub fn l1_mean_t(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    check_same_shape(a, b)?;
    Ok((a - b)?.abs()?.mean_all()?)
}

pub fn reconstruction_loss_t(x_rec: &Tensor, x: &Tensor) -> Result<Tensor> {
    l1_mean_t(x_rec, x)
}

pub fn reconstruction_loss(x_rec: &ImagePatch, x: &ImagePatch) -> Result<f64> {
    scalar(&reconstruction_loss_t(x_rec.tensor(), x.tensor())?)
}

/// Same functional form as [`reconstruction_loss`]; the distinction is
/// which forward path produced `x_cc`.
pub fn cross_cycle_loss_t(x_cc: &Tensor, x: &Tensor) -> Result<Tensor> {
    l1_mean_t(x_cc, x)
}

pub fn cross_cycle_loss(x_cc: &ImagePatch, x: &ImagePatch) -> Result<f64> {
    scalar(&cross_cycle_loss_t(x_cc.tensor(), x.tensor())?)
}

fn check_same_scales(real: &ScoreMaps, fake: &ScoreMaps) -> Result<()> {
    if real.num_scales() != fake.num_scales() {
        return Err(Error::Dimension(format!(
            "score maps have {} vs {} scales",
            real.num_scales(),
            fake.num_scales()
        )));
    }
    Ok(())
}

fn mean_over_scales(terms: Vec<Tensor>) -> Result<Tensor> {
    let n = terms.len() as f64;
    let mut acc = terms[0].clone();
    for t in &terms[1..] {
        acc = (acc + t)?;
    }
    Ok((acc / n)?)
}

/// Discriminator side: mean over scales and patches of
/// `-log sigmoid(real) - log(1 - sigmoid(fake))`.
pub fn adversarial_loss_discriminator_t(real: &ScoreMaps, fake: &ScoreMaps) -> Result<Tensor> {
    check_same_scales(real, fake)?;
    if real.maps.is_empty() {
        return Err(Error::Dimension("score maps are empty".into()));
    }
    let mut terms = Vec::with_capacity(real.maps.len());
    for (r, f) in real.maps.iter().zip(fake.maps.iter()) {
        let real_term = softplus(&r.neg()?)?.mean_all()?;
        let fake_term = softplus(f)?.mean_all()?;
        terms.push((real_term + fake_term)?);
    }
    mean_over_scales(terms)
}

pub fn adversarial_loss_discriminator(real: &ScoreMaps, fake: &ScoreMaps) -> Result<f64> {
    scalar(&adversarial_loss_discriminator_t(real, fake)?)
}

/// Generator side, non-saturating form: mean of `-log sigmoid(fake)`.
pub fn adversarial_loss_generator_t(fake: &ScoreMaps) -> Result<Tensor> {
    if fake.maps.is_empty() {
        return Err(Error::Dimension("score maps are empty".into()));
    }
    let mut terms = Vec::with_capacity(fake.maps.len());
    for f in &fake.maps {
        terms.push(softplus(&f.neg()?)?.mean_all()?);
    }
    mean_over_scales(terms)
}

pub fn adversarial_loss_generator(fake: &ScoreMaps) -> Result<f64> {
    scalar(&adversarial_loss_generator_t(fake)?)
}

/// Weighted total the generator minimizes:
/// `adv_gen_a + adv_gen_b + lambda_cc (cc_a + cc_b) + lambda_rec (rec_a + rec_b)`.
pub fn total_generator_objective(report: &LossReport, weights: &LossWeights) -> Result<f64> {
    let components = [
        ("rec_a", report.rec_a),
        ("rec_b", report.rec_b),
        ("cc_a", report.cc_a),
        ("cc_b", report.cc_b),
        ("adv_gen_a", report.adv_gen_a),
        ("adv_gen_b", report.adv_gen_b),
    ];
    if let Some((name, v)) = components.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Numeric(format!("loss component {name} is non-finite: {v}")));
    }
    Ok(report.adv_gen_a
        + report.adv_gen_b
        + weights.lambda_cc * (report.cc_a + report.cc_b)
        + weights.lambda_rec * (report.rec_a + report.rec_b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{Device, Var};
    use proptest::prelude::*;

    fn dev() -> Device {
        Device::Cpu
    }

    fn tensor_from(vals: &[f64], shape: (usize, usize)) -> Tensor {
        Tensor::from_vec(vals.to_vec(), shape, &dev()).unwrap()
    }

    /// Scalar-loop oracle for the mean absolute difference.
    fn l1_oracle(a: &[f64], b: &[f64]) -> f64 {
        let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
        s / a.len() as f64
    }

    /// Scalar-loop oracle for -log sigmoid(x) via the stable softplus.
    fn nls(x: f64) -> f64 {
        (-x).max(0.0) + (1.0 + (-x.abs()).exp()).ln()
    }

    fn disc_oracle(real: &[Vec<f64>], fake: &[Vec<f64>]) -> f64 {
        let per_scale: Vec<f64> = real
            .iter()
            .zip(fake)
            .map(|(r, f)| {
                let rt: f64 = r.iter().map(|&v| nls(v)).sum::<f64>() / r.len() as f64;
                let ft: f64 = f.iter().map(|&v| nls(-v)).sum::<f64>() / f.len() as f64;
                rt + ft
            })
            .collect();
        per_scale.iter().sum::<f64>() / per_scale.len() as f64
    }

    fn gen_oracle(fake: &[Vec<f64>]) -> f64 {
        let per_scale: Vec<f64> =
            fake.iter().map(|f| f.iter().map(|&v| nls(v)).sum::<f64>() / f.len() as f64).collect();
        per_scale.iter().sum::<f64>() / per_scale.len() as f64
    }

    fn rng_vals(seed: u64, n: usize, scale: f64) -> Vec<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (rng.random::<f64>() * 2.0 - 1.0) * scale).collect()
    }

    fn maps_from(scales: &[Vec<f64>], side: usize) -> ScoreMaps {
        ScoreMaps {
            maps: scales
                .iter()
                .map(|v| Tensor::from_vec(v.clone(), (1, 1, side, side), &dev()).unwrap())
                .collect(),
        }
    }

    #[test]
    fn l1_identity_and_constant_cases() {
        let x = tensor_from(&[0.25; 12], (3, 4));
        assert_eq!(super::scalar(&l1_mean_t(&x, &x).unwrap()).unwrap(), 0.0);
        let ones = tensor_from(&[1.0; 12], (3, 4));
        let zeros = tensor_from(&[0.0; 12], (3, 4));
        assert_eq!(super::scalar(&l1_mean_t(&ones, &zeros).unwrap()).unwrap(), 1.0);
    }

    #[test]
    fn l1_matches_scalar_oracle_on_random_tensors() {
        for seed in 0..50 {
            let a = rng_vals(seed, 48, 2.0);
            let b = rng_vals(seed + 1000, 48, 2.0);
            let got = super::scalar(
                &l1_mean_t(&tensor_from(&a, (6, 8)), &tensor_from(&b, (6, 8))).unwrap(),
            )
            .unwrap();
            assert!((got - l1_oracle(&a, &b)).abs() < 1e-6);
        }
    }

    #[test]
    fn l1_rejects_shape_mismatch() {
        let a = tensor_from(&[0.0; 12], (3, 4));
        let b = tensor_from(&[0.0; 12], (4, 3));
        assert!(matches!(l1_mean_t(&a, &b), Err(Error::Dimension(_))));
    }

    #[test]
    fn disc_loss_at_zero_logits_is_2_ln2() {
        let zeros = maps_from(&[vec![0.0; 16], vec![0.0; 16], vec![0.0; 16]], 4);
        let got = adversarial_loss_discriminator(&zeros, &zeros).unwrap();
        assert!((got - 2.0 * std::f64::consts::LN_2).abs() < 1e-9, "got {got}");
    }

    #[test]
    fn disc_loss_vanishes_at_saturation() {
        let real = maps_from(&[vec![40.0; 16]], 4);
        let fake = maps_from(&[vec![-40.0; 16]], 4);
        let got = adversarial_loss_discriminator(&real, &fake).unwrap();
        assert!(got.abs() < 1e-9);
    }

    #[test]
    fn disc_loss_matches_scalar_oracle() {
        for seed in 0..50 {
            let real: Vec<Vec<f64>> =
                (0..3).map(|s| rng_vals(seed * 7 + s, 16, 5.0)).collect();
            let fake: Vec<Vec<f64>> =
                (0..3).map(|s| rng_vals(seed * 7 + s + 100, 16, 5.0)).collect();
            let got =
                adversarial_loss_discriminator(&maps_from(&real, 4), &maps_from(&fake, 4)).unwrap();
            assert!((got - disc_oracle(&real, &fake)).abs() < 1e-6);
        }
    }

    #[test]
    fn disc_loss_rejects_scale_mismatch() {
        let a = maps_from(&[vec![0.0; 16], vec![0.0; 16]], 4);
        let b = maps_from(&[vec![0.0; 16]], 4);
        assert!(matches!(
            adversarial_loss_discriminator_t(&a, &b),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn gen_loss_at_zero_logits_is_ln2() {
        let zeros = maps_from(&[vec![0.0; 16], vec![0.0; 16], vec![0.0; 16]], 4);
        let got = adversarial_loss_generator(&zeros).unwrap();
        assert!((got - std::f64::consts::LN_2).abs() < 1e-9);
    }

    #[test]
    fn gen_loss_vanishes_when_generator_wins() {
        let fake = maps_from(&[vec![40.0; 16]], 4);
        assert!(adversarial_loss_generator(&fake).unwrap().abs() < 1e-9);
    }

    #[test]
    fn gen_loss_matches_scalar_oracle() {
        for seed in 0..50 {
            let fake: Vec<Vec<f64>> = (0..3).map(|s| rng_vals(seed * 3 + s, 16, 5.0)).collect();
            let got = adversarial_loss_generator(&maps_from(&fake, 4)).unwrap();
            assert!((got - gen_oracle(&fake)).abs() < 1e-6);
        }
    }

    #[test]
    fn total_objective_arithmetic() {
        let report = LossReport {
            rec_a: 0.01,
            rec_b: 0.01,
            cc_a: 0.01,
            cc_b: 0.01,
            adv_gen_a: 0.5,
            adv_gen_b: 0.5,
            ..LossReport::default()
        };
        let w = LossWeights::default();
        let got = total_generator_objective(&report, &w).unwrap();
        assert!((got - 5.0).abs() < 1e-12);
        assert_eq!(
            total_generator_objective(&LossReport::default(), &w).unwrap(),
            0.0
        );
        let adv_only = LossWeights { lambda_cc: 0.0, lambda_rec: 0.0 };
        assert!((total_generator_objective(&report, &adv_only).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn total_objective_rejects_non_finite() {
        let report = LossReport { rec_a: f64::NAN, ..LossReport::default() };
        assert!(matches!(
            total_generator_objective(&report, &LossWeights::default()),
            Err(Error::Numeric(_))
        ));
    }

    /// Central finite differences against candle's analytic gradients, in
    /// f64 on 8x8 inputs.
    fn grad_check<F>(build_loss: F, n: usize, seed: u64)
    where
        F: Fn(&Tensor) -> Tensor,
    {
        let vals = rng_vals(seed, n, 1.5);
        let var = Var::from_vec(vals.clone(), n, &dev()).unwrap();
        let loss = build_loss(var.as_tensor());
        let grads = loss.backward().unwrap();
        let analytic = grads.get(var.as_tensor()).unwrap().to_vec1::<f64>().unwrap();
        let h = 1e-6;
        for i in 0..n {
            let mut plus = vals.clone();
            plus[i] += h;
            let mut minus = vals.clone();
            minus[i] -= h;
            let lp = build_loss(&Tensor::from_vec(plus, n, &dev()).unwrap())
                .to_scalar::<f64>()
                .unwrap();
            let lm = build_loss(&Tensor::from_vec(minus, n, &dev()).unwrap())
                .to_scalar::<f64>()
                .unwrap();
            let numeric = (lp - lm) / (2.0 * h);
            let denom = numeric.abs().max(analytic[i].abs()).max(1e-8);
            assert!(
                (numeric - analytic[i]).abs() / denom < 1e-4,
                "grad mismatch at {i}: analytic {} vs numeric {numeric}",
                analytic[i]
            );
        }
    }

    #[test]
    fn l1_gradients_match_finite_differences() {
        let target = Tensor::from_vec(rng_vals(99, 64, 1.0), 64, &dev()).unwrap();
        grad_check(|x| l1_mean_t(x, &target).unwrap(), 64, 5);
    }

    #[test]
    fn adversarial_gradients_match_finite_differences() {
        grad_check(
            |x| {
                let maps = ScoreMaps { maps: vec![x.reshape((1, 1, 8, 8)).unwrap()] };
                adversarial_loss_generator_t(&maps).unwrap()
            },
            64,
            6,
        );
        let real = ScoreMaps {
            maps: vec![Tensor::from_vec(rng_vals(7, 64, 2.0), (1, 1, 8, 8), &dev()).unwrap()],
        };
        grad_check(
            |x| {
                let fake = ScoreMaps { maps: vec![x.reshape((1, 1, 8, 8)).unwrap()] };
                adversarial_loss_discriminator_t(&real, &fake).unwrap()
            },
            64,
            8,
        );
    }

    proptest! {
        #[test]
        fn l1_is_nonnegative_and_symmetric(
            a in proptest::collection::vec(-2.0f64..2.0, 16),
            b in proptest::collection::vec(-2.0f64..2.0, 16),
        ) {
            let ta = tensor_from(&a, (4, 4));
            let tb = tensor_from(&b, (4, 4));
            let ab = super::scalar(&l1_mean_t(&ta, &tb).unwrap()).unwrap();
            let ba = super::scalar(&l1_mean_t(&tb, &ta).unwrap()).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() < 1e-12);
        }

        #[test]
        fn adversarial_losses_are_nonnegative(
            logits in proptest::collection::vec(-20.0f64..20.0, 16),
        ) {
            let maps = maps_from(&[logits], 4);
            prop_assert!(adversarial_loss_generator(&maps).unwrap() >= 0.0);
            prop_assert!(adversarial_loss_discriminator(&maps, &maps).unwrap() >= 0.0);
        }
    }
}
