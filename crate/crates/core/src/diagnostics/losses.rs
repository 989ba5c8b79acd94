use crate::error::{Error, Result};
use crate::geometry::NormalizedBox;

/// Lower clamp applied to probabilities before taking the logarithm.
pub const PROBABILITY_FLOOR: f64 = 1e-12;
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-9;

/// Mean squared error over `(cx, cy, w, h)`.
pub fn bbox_regression_loss(pred: &NormalizedBox, target: &NormalizedBox) -> f64 {
    pred.as_array()
        .iter()
        .zip(target.as_array())
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / 4.0
}

/// Class probability vector: non-negative, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistribution(Vec<f64>);

impl ClassDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("class distribution is empty"));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::invalid(format!(
                "class probability {p} is not a non-negative number"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE {
            return Err(Error::invalid(format!("class probabilities sum to {sum}, not 1")));
        }
        Ok(Self(probs))
    }

    pub fn uniform(num_classes: usize) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::invalid("class distribution is empty"));
        }
        Ok(Self(vec![1.0 / num_classes as f64; num_classes]))
    }

    pub fn one_hot(num_classes: usize, class: usize) -> Result<Self> {
        if class >= num_classes {
            return Err(Error::invalid(format!(
                "class {class} out of range for {num_classes} classes"
            )));
        }
        let mut v = vec![0.0; num_classes];
        v[class] = 1.0;
        Ok(Self(v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }
}

/// Cross-entropy `-ln p[true_class]`.
pub fn classification_loss(pred: &ClassDistribution, true_class: usize) -> Result<f64> {
    let p = pred
        .0
        .get(true_class)
        .ok_or_else(|| Error::invalid(format!("class {true_class} out of range for {} classes", pred.len())))?;
    Ok(-p.max(PROBABILITY_FLOOR).ln())
}

/// Squared error of the objectness score against a 0/1 target.
pub fn objectness_loss(pred_score: f64, target: bool) -> Result<f64> {
    if !(0.0..=1.0).contains(&pred_score) {
        return Err(Error::invalid(format!("objectness score {pred_score} outside [0, 1]")));
    }
    let t = if target { 1.0 } else { 0.0 };
    Ok((pred_score - t).powi(2))
}

/// Sum of the three component means. An empty component contributes zero.
pub fn total_loss(box_terms: &[f64], cls_terms: &[f64], obj_terms: &[f64]) -> Result<f64> {
    if box_terms.is_empty() && cls_terms.is_empty() && obj_terms.is_empty() {
        return Err(Error::invalid("no loss terms given"));
    }
    let mean = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    Ok(mean(box_terms) + mean(cls_terms) + mean(obj_terms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn nb(cx: f64, cy: f64, w: f64, h: f64) -> NormalizedBox {
        NormalizedBox::new(cx, cy, w, h).unwrap()
    }

    #[test]
    fn bbox_examples() {
        let t = nb(0.5, 0.5, 0.4, 0.2);
        assert_eq!(bbox_regression_loss(&t, &t), 0.0);
        assert!((bbox_regression_loss(&nb(0.5, 0.5, 0.2, 0.2), &t) - 0.01).abs() < 1e-15);
        assert!((bbox_regression_loss(&nb(0.4, 0.5, 0.2, 0.2), &t) - 0.0125).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_examples() {
        assert_eq!(
            classification_loss(&ClassDistribution::one_hot(3, 1).unwrap(), 1).unwrap(),
            0.0
        );
        let p = ClassDistribution::new(vec![0.7, 0.2, 0.1]).unwrap();
        assert!((classification_loss(&p, 0).unwrap() - 0.356675).abs() < 1e-6);
        for c in 1..=12 {
            let u = ClassDistribution::uniform(c).unwrap();
            assert!((classification_loss(&u, 0).unwrap() - (c as f64).ln()).abs() < 1e-12);
        }
        let zero = ClassDistribution::one_hot(2, 0).unwrap();
        assert!((classification_loss(&zero, 1).unwrap() + PROBABILITY_FLOOR.ln()).abs() < 1e-12);
        assert!(classification_loss(&p, 3).is_err());
    }

    #[test]
    fn distribution_validation() {
        assert!(ClassDistribution::new(vec![0.5, 0.4]).is_err());
        assert!(ClassDistribution::new(vec![1.2, -0.2]).is_err());
        assert!(ClassDistribution::new(vec![]).is_err());
        assert!(ClassDistribution::new(vec![0.5, 0.5 + 1e-10]).is_ok());
    }

    #[test]
    fn objectness_examples() {
        assert_eq!(objectness_loss(1.0, true).unwrap(), 0.0);
        assert!((objectness_loss(0.8, true).unwrap() - 0.04).abs() < 1e-15);
        assert_eq!(objectness_loss(0.5, false).unwrap(), 0.25);
        assert!(objectness_loss(1.1, true).is_err());
    }

    #[test]
    fn total_examples() {
        assert_eq!(total_loss(&[0.0], &[0.0], &[0.0]).unwrap(), 0.0);
        let t = total_loss(&[0.01], &[0.356675], &[0.04]).unwrap();
        assert!((t - 0.406675).abs() < 1e-12);
        let doubled = total_loss(&[0.01, 0.01], &[0.356675, 0.356675], &[0.04, 0.04]).unwrap();
        assert!((doubled - t).abs() < 1e-12);
        assert!(total_loss(&[], &[], &[]).is_err());
    }

    fn arb_box() -> impl Strategy<Value = NormalizedBox> {
        (0.01f64..0.5, 0.01f64..0.5, 0.0f64..1.0, 0.0f64..1.0).prop_map(|(w, h, fx, fy)| {
            let cx = w / 2.0 + fx * (1.0 - w);
            let cy = h / 2.0 + fy * (1.0 - h);
            NormalizedBox::new(cx, cy, w, h).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn bbox_loss_symmetric_and_nonnegative(a in arb_box(), b in arb_box()) {
            let ab = bbox_regression_loss(&a, &b);
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, bbox_regression_loss(&b, &a));
            prop_assert_eq!(bbox_regression_loss(&a, &a), 0.0);
        }

        #[test]
        fn bbox_loss_translation_consistent(w1 in 0.05f64..0.2, w2 in 0.05f64..0.2, d in -0.1f64..0.1) {
            let a = nb(0.5, 0.5, w1, 0.1);
            let b = nb(0.45, 0.55, w2, 0.2);
            let a2 = nb(0.5 + d, 0.5 - d, w1, 0.1);
            let b2 = nb(0.45 + d, 0.55 - d, w2, 0.2);
            prop_assert!((bbox_regression_loss(&a, &b) - bbox_regression_loss(&a2, &b2)).abs() < 1e-12);
        }

        #[test]
        fn cross_entropy_ignores_other_classes(p in 0.01f64..0.99, split in 0.0f64..1.0) {
            let rest = 1.0 - p;
            let a = ClassDistribution::new(vec![p, rest * split, rest * (1.0 - split)]).unwrap();
            let b = ClassDistribution::new(vec![p, rest, 0.0]).unwrap();
            let la = classification_loss(&a, 0).unwrap();
            prop_assert!(la >= 0.0);
            prop_assert_eq!(la, classification_loss(&b, 0).unwrap());
        }

        #[test]
        fn objectness_nonnegative(s in 0.0f64..=1.0, t in any::<bool>()) {
            prop_assert!(objectness_loss(s, t).unwrap() >= 0.0);
        }
    }
}
