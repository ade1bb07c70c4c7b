//! Accuracy, IoU and feature-distance evaluation.

use crate::error::{Error, Result};
use crate::nn::{argmax, argmax_pixels, Activation, Mode, Network, Target, Task};
use crate::real::Real;
use crate::tensor::Image;

/// One image with its supervision.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample<T = f64> {
    pub image: Image<T>,
    pub target: Target,
}

/// Per-class IoU `|P∩T| / |P∪T|` (classes absent from both count as 1) and their mean.
pub fn iou(pred: &[u8], truth: &[u8], n_classes: usize) -> Result<(Vec<f64>, f64)> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!("masks differ in size: {} vs {}", pred.len(), truth.len())));
    }
    let mut inter = vec![0usize; n_classes];
    let mut union = vec![0usize; n_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        let (p, t) = (p as usize, t as usize);
        if p >= n_classes || t >= n_classes {
            return Err(Error::Contract(format!("label {} outside {n_classes} classes", p.max(t))));
        }
        union[p] += 1;
        if p == t {
            inter[p] += 1;
        } else {
            union[t] += 1;
        }
    }
    let per: Vec<f64> = inter.iter().zip(&union).map(|(&i, &u)| if u == 0 { 1.0 } else { i as f64 / u as f64 }).collect();
    let mean = per.iter().sum::<f64>() / n_classes as f64;
    Ok((per, mean))
}

/// Eval-mode outputs in batches of `batch`.
pub fn predict<T: Real>(net: &mut Network<T>, images: &[Image<T>], batch: usize) -> Result<Vec<Activation<T>>> {
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(batch.max(1)) {
        out.extend(net.forward(chunk, Mode::Eval)?);
    }
    Ok(out)
}

/// Fraction of correctly classified samples.
pub fn accuracy<T: Real>(net: &mut Network<T>, samples: &[Sample<T>], batch: usize) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("accuracy of an empty set".into()));
    }
    let images: Vec<Image<T>> = samples.iter().map(|s| s.image.clone()).collect();
    let outs = predict(net, &images, batch)?;
    let mut correct = 0usize;
    for (o, s) in outs.iter().zip(samples) {
        let Target::Class(label) = s.target else {
            return Err(Error::Contract("accuracy needs class targets".into()));
        };
        correct += usize::from(argmax(o.vector()?) == label);
    }
    Ok(correct as f64 / samples.len() as f64)
}

/// Accuracy for each `(scale factor, test set)` pair.
pub fn accuracy_by_scale<T: Real>(net: &mut Network<T>, sets: &[(f64, Vec<Sample<T>>)], batch: usize) -> Result<Vec<(f64, f64)>> {
    sets.iter().map(|(f, s)| Ok((*f, accuracy(net, s, batch)?))).collect()
}

/// Per-class IoU summed over all pixels of a set, and its mean.
pub fn segmentation_iou<T: Real>(net: &mut Network<T>, samples: &[Sample<T>], batch: usize) -> Result<(Vec<f64>, f64)> {
    let Task::Segment { classes } = net.task() else {
        return Err(Error::Contract("IoU needs a segmentation network".into()));
    };
    let images: Vec<Image<T>> = samples.iter().map(|s| s.image.clone()).collect();
    let outs = predict(net, &images, batch)?;
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    for (o, s) in outs.iter().zip(samples) {
        let Target::Mask(m) = &s.target else {
            return Err(Error::Contract("IoU needs mask targets".into()));
        };
        pred.extend(argmax_pixels(&o.stack()?.level(0)));
        truth.extend_from_slice(m);
    }
    iou(&pred, &truth, classes)
}

/// Features entering the dense head, concatenated over the set.
pub fn features<T: Real>(net: &mut Network<T>, images: &[Image<T>], batch: usize) -> Result<Vec<f64>> {
    let at = net
        .position(|l| matches!(l, crate::nn::LayerSpec::Dense { .. }))
        .ok_or_else(|| Error::Contract("feature distance needs a dense head".into()))?;
    let mut out = Vec::new();
    for chunk in images.chunks(batch.max(1)) {
        for a in net.activations_before(chunk, at)? {
            out.extend(a.vector()?.iter().map(|v| v.f64()));
        }
    }
    Ok(out)
}

/// `‖F_s − F_ref‖ / ‖F_ref‖` for every set, where `F` concatenates the head features.
///
/// The sets must hold the same images rendered at different scales, in the same order.
pub fn feature_distance<T: Real>(
    net: &mut Network<T>,
    reference: &[Image<T>],
    sets: &[(f64, Vec<Image<T>>)],
    batch: usize,
) -> Result<Vec<(f64, f64)>> {
    let fref = features(net, reference, batch)?;
    let norm = fref.iter().map(|v| v * v).sum::<f64>().sqrt();
    sets.iter()
        .map(|(f, imgs)| {
            if imgs.len() != reference.len() {
                return Err(Error::Shape("feature sets differ in size".into()));
            }
            let fs = features(net, imgs, batch)?;
            let d = fs.iter().zip(&fref).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            Ok((*f, if norm > 0.0 { d / norm } else { d }))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_masks_score_one() {
        let m = [0u8, 1, 2, 2, 1, 0];
        assert_eq!(iou(&m, &m, 3).unwrap().1, 1.0);
    }

    #[test]
    fn disjoint_single_class_masks_score_zero() {
        let (per, _) = iou(&[1, 1, 0, 0], &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(per, vec![0.0, 0.0]);
    }

    #[test]
    fn half_coverage_scores_one_half() {
        let truth = vec![1u8; 100];
        let pred: Vec<u8> = (0..100).map(|i| u8::from(i < 50)).collect();
        let (per, _) = iou(&pred, &truth, 2).unwrap();
        assert_eq!(per[1], 0.5);
    }

    #[test]
    fn absent_classes_count_as_perfect() {
        let (per, mean) = iou(&[0, 0], &[0, 0], 3).unwrap();
        assert_eq!(per, vec![1.0, 1.0, 1.0]);
        assert_eq!(mean, 1.0);
    }

    #[test]
    fn label_overflow_is_a_contract_violation() {
        assert!(matches!(iou(&[3], &[0], 3), Err(Error::Contract(_))));
    }

    #[test]
    fn symmetric_and_permutation_invariant() {
        let a = [0u8, 1, 2, 1, 1, 0, 2, 2];
        let b = [0u8, 1, 1, 1, 2, 0, 2, 0];
        assert_eq!(iou(&a, &b, 3).unwrap(), iou(&b, &a, 3).unwrap());
        let perm = |m: &[u8]| m.iter().map(|&v| [2u8, 0, 1][v as usize]).collect::<Vec<_>>();
        let (p1, m1) = iou(&a, &b, 3).unwrap();
        let (p2, m2) = iou(&perm(&a), &perm(&b), 3).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(p1, vec![p2[2], p2[0], p2[1]]);
    }
}
