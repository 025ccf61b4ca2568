//! Binary knowledge-distillation loss and its gradient.
//!
//! The per-pair loss is
//!
//! ```text
//! L = α · CE(softmax(z_s), y) + (1 − α) · τ² · KL(softmax(z_t / τ) ‖ softmax(z_s / τ))
//! ```
//!
//! with the teacher distribution as the KL reference. Teacher logits are
//! constants: no gradient is ever taken with respect to them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of the positive class in a [`Logits`] / [`Distribution`] pair.
pub const POS: usize = 1;

/// Probability floor applied before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// Two-class logits `[z_neg, z_pos]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Logits(pub [f64; 2]);

impl Logits {
    pub fn new(neg: f64, pos: f64) -> Result<Self> {
        let z = Logits([neg, pos]);
        z.check()?;
        Ok(z)
    }

    fn check(&self) -> Result<()> {
        if self.0.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Numeric(format!("non-finite logits {:?}", self.0)))
        }
    }
}

/// Two-class probability distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distribution(pub [f64; 2]);

impl Distribution {
    pub fn new(neg: f64, pos: f64) -> Result<Self> {
        let d = Distribution([neg, pos]);
        d.check()?;
        Ok(d)
    }

    fn check(&self) -> Result<()> {
        let [a, b] = self.0;
        let in_range = |p: f64| (0.0..=1.0).contains(&p);
        if !in_range(a) || !in_range(b) || ((a + b) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("invalid distribution {:?}", self.0)));
        }
        Ok(())
    }

    pub fn pos(&self) -> f64 {
        self.0[POS]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KdConfig {
    pub alpha: f64,
    pub tau: f64,
    #[serde(default)]
    pub reduction: Reduction,
}

impl Default for KdConfig {
    fn default() -> Self {
        KdConfig {
            alpha: 0.0,
            tau: 1.0,
            reduction: Reduction::Mean,
        }
    }
}

impl KdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau {} must be positive", self.tau)));
        }
        Ok(())
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("temperature {tau} must be positive")))
    }
}

// Unchecked kernel shared by the checked entry points and the gradient.
fn softmax2(z: [f64; 2], tau: f64) -> [f64; 2] {
    let a = z[0] / tau;
    let b = z[1] / tau;
    let m = a.max(b);
    let ea = (a - m).exp();
    let eb = (b - m).exp();
    let s = ea + eb;
    [ea / s, eb / s]
}

/// Temperature-scaled softmax, stabilized by subtracting the max logit.
pub fn softmax_temp(z: Logits, tau: f64) -> Result<Distribution> {
    check_tau(tau)?;
    z.check()?;
    Ok(Distribution(softmax2(z.0, tau)))
}

/// Positive-class probability at τ = 1; the ranking score of a pair.
pub fn prob_pos(z: Logits) -> f64 {
    softmax2(z.0, 1.0)[POS]
}

pub fn cross_entropy(dist: Distribution, label: bool) -> Result<f64> {
    dist.check()?;
    Ok(-dist.0[label as usize].max(PROB_FLOOR).ln())
}

/// `KL(p_t ‖ p_s)`, with `0 · ln(0 / ·) = 0`.
pub fn kl_divergence(p_t: Distribution, p_s: Distribution) -> Result<f64> {
    p_t.check()?;
    p_s.check()?;
    Ok(kl_unchecked(p_t.0, p_s.0))
}

fn kl_unchecked(p_t: [f64; 2], p_s: [f64; 2]) -> f64 {
    let mut kl = 0.0;
    for k in 0..2 {
        let t = p_t[k];
        if t > 0.0 {
            kl += t * (t.max(PROB_FLOOR).ln() - p_s[k].max(PROB_FLOOR).ln());
        }
    }
    // rounding can leave a tiny negative residue when p_t == p_s
    kl.max(0.0)
}

fn check_inputs(z_s: Logits, z_t: Option<Logits>, y: Option<bool>, cfg: &KdConfig) -> Result<()> {
    cfg.validate()?;
    z_s.check()?;
    if cfg.alpha > 0.0 && y.is_none() {
        return Err(Error::Config(format!("alpha = {} requires a gold label", cfg.alpha)));
    }
    if cfg.alpha < 1.0 {
        match z_t {
            Some(z) => z.check()?,
            None => return Err(Error::Config(format!("alpha = {} requires teacher logits", cfg.alpha))),
        }
    }
    Ok(())
}

/// Per-pair KD loss.
///
/// A term whose weight is exactly zero is skipped, so the `α = 1` path never
/// reads teacher logits and the `α = 0` path never reads the label.
pub fn kd_loss(z_s: Logits, z_t: Option<Logits>, y: Option<bool>, cfg: &KdConfig) -> Result<f64> {
    check_inputs(z_s, z_t, y, cfg)?;
    let mut loss = 0.0;
    if cfg.alpha > 0.0 {
        let p = softmax2(z_s.0, 1.0);
        loss += cfg.alpha * -p[y.expect("checked") as usize].max(PROB_FLOOR).ln();
    }
    if cfg.alpha < 1.0 {
        let tau = cfg.tau;
        let p_t = softmax2(z_t.expect("checked").0, tau);
        let p_s = softmax2(z_s.0, tau);
        loss += (1.0 - cfg.alpha) * tau * tau * kl_unchecked(p_t, p_s);
    }
    Ok(loss)
}

/// Analytic `∂L/∂z_s`:
/// `α (softmax(z_s) − onehot(y)) + (1 − α) τ (softmax(z_s/τ) − softmax(z_t/τ))`.
pub fn kd_loss_grad(z_s: Logits, z_t: Option<Logits>, y: Option<bool>, cfg: &KdConfig) -> Result<[f64; 2]> {
    check_inputs(z_s, z_t, y, cfg)?;
    let mut grad = [0.0; 2];
    if cfg.alpha > 0.0 {
        let p = softmax2(z_s.0, 1.0);
        let y = y.expect("checked") as usize;
        for k in 0..2 {
            let onehot = if k == y { 1.0 } else { 0.0 };
            grad[k] = cfg.alpha * (p[k] - onehot);
        }
    }
    if cfg.alpha < 1.0 {
        let tau = cfg.tau;
        let p_t = softmax2(z_t.expect("checked").0, tau);
        let p_s = softmax2(z_s.0, tau);
        let w = (1.0 - cfg.alpha) * tau;
        for k in 0..2 {
            grad[k] += w * (p_s[k] - p_t[k]);
        }
    }
    Ok(grad)
}

/// Reduces per-pair losses according to `reduction`.
pub fn reduce(losses: &[f64], reduction: Reduction) -> f64 {
    let sum: f64 = losses.iter().sum();
    match reduction {
        Reduction::Sum => sum,
        Reduction::Mean if losses.is_empty() => 0.0,
        Reduction::Mean => sum / losses.len() as f64,
    }
}

/// Batch KD loss over `(student, teacher, label)` triples. Errors name the
/// offending pair id.
pub fn kd_loss_batch(items: &[(&str, Logits, Option<Logits>, Option<bool>)], cfg: &KdConfig) -> Result<f64> {
    let losses = items
        .iter()
        .map(|(id, z_s, z_t, y)| {
            kd_loss(*z_s, *z_t, *y, cfg).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("pair `{id}`: {m}")),
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(reduce(&losses, cfg.reduction))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn z(a: f64, b: f64) -> Logits {
        Logits::new(a, b).unwrap()
    }

    fn d(a: f64, b: f64) -> Distribution {
        Distribution::new(a, b).unwrap()
    }

    fn cfg(alpha: f64, tau: f64) -> KdConfig {
        KdConfig {
            alpha,
            tau,
            reduction: Reduction::Mean,
        }
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax_temp(z(0.0, 0.0), 1.0).unwrap().0, [0.5, 0.5]);
        let p = softmax_temp(z(1.0, 3.0), 1.0).unwrap().0;
        assert!((p[0] - 0.1192).abs() < 1e-4 && (p[1] - 0.8808).abs() < 1e-4);
        let p = softmax_temp(z(2.0, 4.0), 2.0).unwrap().0;
        assert!((p[0] - 0.2689).abs() < 1e-4 && (p[1] - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn softmax_errors() {
        assert!(softmax_temp(z(0.0, 1.0), 0.0).is_err());
        assert!(softmax_temp(z(0.0, 1.0), -1.0).is_err());
        assert!(softmax_temp(Logits([f64::NAN, 0.0]), 1.0).is_err());
        assert!(Logits::new(f64::INFINITY, 0.0).is_err());
    }

    #[test]
    fn softmax_saturated_logits_stay_finite() {
        let p = softmax_temp(z(-800.0, 800.0), 1.0).unwrap().0;
        assert_eq!(p, [0.0, 1.0]);
        let ce = cross_entropy(Distribution(p), false).unwrap();
        assert!((ce - -(PROB_FLOOR.ln())).abs() < 1e-9);
    }

    #[test]
    fn cross_entropy_examples() {
        assert!(cross_entropy(d(0.0, 1.0), true).unwrap().abs() < 1e-12);
        let ce = cross_entropy(d(0.2689, 0.7311), true).unwrap();
        assert!((ce - 0.3133).abs() < 1e-4);
        let ce = cross_entropy(d(0.5, 0.5), false).unwrap();
        assert!((ce - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(cross_entropy(Distribution([0.7, 0.7]), true).is_err());
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_divergence(d(0.3, 0.7), d(0.3, 0.7)).unwrap(), 0.0);
        let kl = kl_divergence(d(0.5, 0.5), d(0.25, 0.75)).unwrap();
        assert!((kl - 0.1438).abs() < 1e-4);
        let kl = kl_divergence(d(1.0, 0.0), d(0.5, 0.5)).unwrap();
        assert!((kl - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn kd_loss_examples() {
        let ce = cross_entropy(softmax_temp(z(0.3, -1.2), 1.0).unwrap(), true).unwrap();
        let l = kd_loss(z(0.3, -1.2), Some(z(5.0, 9.0)), Some(true), &cfg(1.0, 3.0)).unwrap();
        assert_eq!(l, ce);
        for tau in [1.0, 3.0, 5.0, 7.0] {
            assert_eq!(
                kd_loss(z(0.4, 2.0), Some(z(0.4, 2.0)), None, &cfg(0.0, tau)).unwrap(),
                0.0
            );
        }
        let l = kd_loss(z(2.0, 0.0), Some(z(0.0, 0.0)), None, &cfg(0.0, 2.0)).unwrap();
        assert!((l - 0.4804).abs() < 1e-3);
    }

    #[test]
    fn kd_loss_requires_label_when_alpha_positive() {
        let err = kd_loss(z(0.0, 0.0), Some(z(0.0, 0.0)), None, &cfg(0.5, 1.0)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err = kd_loss_batch(&[("q1::c3", z(0.0, 0.0), Some(z(0.0, 0.0)), None)], &cfg(0.5, 1.0)).unwrap_err();
        assert!(err.to_string().contains("q1::c3"));
        assert!(kd_loss(z(0.0, 0.0), None, None, &cfg(0.0, 1.0)).is_err());
        assert!(kd_loss(z(0.0, 0.0), None, Some(true), &cfg(1.0, 1.0)).is_ok());
    }

    #[test]
    fn grad_examples() {
        assert_eq!(
            kd_loss_grad(z(0.7, -0.1), Some(z(0.7, -0.1)), None, &cfg(0.0, 3.0)).unwrap(),
            [0.0, 0.0]
        );
        assert_eq!(
            kd_loss_grad(z(0.0, 0.0), None, Some(true), &cfg(1.0, 1.0)).unwrap(),
            [0.5, -0.5]
        );
    }

    #[test]
    fn batch_reduction() {
        let items = [
            ("a", z(0.0, 0.0), None, Some(true)),
            ("b", z(0.0, 0.0), None, Some(false)),
        ];
        let mean = kd_loss_batch(&items, &cfg(1.0, 1.0)).unwrap();
        let sum = kd_loss_batch(
            &items,
            &KdConfig {
                reduction: Reduction::Sum,
                ..cfg(1.0, 1.0)
            },
        )
        .unwrap();
        assert!((mean - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((sum - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    fn fd_grad(z_s: [f64; 2], z_t: [f64; 2], y: bool, c: &KdConfig) -> [f64; 2] {
        let h = 1e-5;
        let mut g = [0.0; 2];
        for k in 0..2 {
            let mut up = z_s;
            let mut down = z_s;
            up[k] += h;
            down[k] -= h;
            let lu = kd_loss(Logits(up), Some(Logits(z_t)), Some(y), c).unwrap();
            let ld = kd_loss(Logits(down), Some(Logits(z_t)), Some(y), c).unwrap();
            g[k] = (lu - ld) / (2.0 * h);
        }
        g
    }

    #[test]
    fn grad_matches_finite_differences_at_fixed_point() {
        let c = cfg(0.3, 3.0);
        let a = kd_loss_grad(z(0.4, -1.1), Some(z(2.0, 0.5)), Some(true), &c).unwrap();
        let n = fd_grad([0.4, -1.1], [2.0, 0.5], true, &c);
        for k in 0..2 {
            assert!((a[k] - n[k]).abs() <= 1e-4 * a[k].abs().max(1e-6), "{a:?} vs {n:?}");
        }
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one_and_shift_invariant(
            a in -50.0f64..50.0, b in -50.0f64..50.0, tau in 0.05f64..20.0, c in -100.0f64..100.0,
        ) {
            let p = softmax_temp(z(a, b), tau).unwrap().0;
            prop_assert!((p[0] + p[1] - 1.0).abs() < 1e-9);
            let q = softmax_temp(z(a + c, b + c), tau).unwrap().0;
            prop_assert!((p[0] - q[0]).abs() < 1e-9 && (p[1] - q[1]).abs() < 1e-9);
        }

        #[test]
        fn softmax_strictly_positive_for_moderate_logits(
            a in -20.0f64..20.0, b in -20.0f64..20.0, tau in 0.5f64..20.0,
        ) {
            let p = softmax_temp(z(a, b), tau).unwrap().0;
            prop_assert!(p[0] > 0.0 && p[1] > 0.0);
        }

        #[test]
        fn kl_nonnegative(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let kl = kl_divergence(d(a, 1.0 - a), d(b, 1.0 - b)).unwrap();
            prop_assert!(kl >= 0.0);
            if (a - b).abs() > 1e-3 {
                prop_assert!(kl > 0.0);
            }
        }

        #[test]
        fn alpha_extremes_ignore_other_input(
            s in proptest::array::uniform2(-10.0f64..10.0),
            t1 in proptest::array::uniform2(-10.0f64..10.0),
            t2 in proptest::array::uniform2(-10.0f64..10.0),
            tau in 0.5f64..8.0,
        ) {
            let one = cfg(1.0, tau);
            prop_assert_eq!(
                kd_loss(Logits(s), Some(Logits(t1)), Some(true), &one).unwrap(),
                kd_loss(Logits(s), Some(Logits(t2)), Some(true), &one).unwrap()
            );
            let zero = cfg(0.0, tau);
            prop_assert_eq!(
                kd_loss(Logits(s), Some(Logits(t1)), Some(true), &zero).unwrap(),
                kd_loss(Logits(s), Some(Logits(t1)), Some(false), &zero).unwrap()
            );
        }
    }
}
