//! Losses and batch statistics.

use crate::graph::{Graph, Var};
use crate::{NnError, Result, Tensor};

/// Predictions are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` before the logarithm.
pub const BCE_CLAMP: f64 = 1e-7;

/// Below this standard deviation the skewness is defined as zero.
pub const SKEW_SIGMA_FLOOR: f64 = 1e-12;

/// Mean binary cross-entropy of plain values.
pub fn bce_loss(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    if predictions.len() != targets.len() {
        return Err(NnError::Shape {
            context: "bce_loss".into(),
            expected: vec![predictions.len()],
            actual: vec![targets.len()],
        });
    }
    let total: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(&p, &t)| {
            let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / predictions.len() as f64)
}

/// Scalar graph nodes for the population mean, standard deviation and
/// skewness of every element of a tensor.
#[derive(Clone, Copy, Debug)]
pub struct Moments {
    pub mean: Var,
    pub std: Var,
    pub skew: Var,
}

pub fn batch_moments(graph: &mut Graph, x: Var) -> Result<Moments> {
    let shape = graph.shape(x).to_vec();
    let n: usize = shape.iter().product();
    if n < 2 {
        return Err(NnError::TooFewValues(n));
    }
    let mean = graph.mean(x);
    let mb = graph.broadcast(mean, &shape)?;
    let d = graph.sub(x, mb)?;
    let d2 = graph.square(d);
    let m2 = graph.mean(d2);
    let std = graph.sqrt(m2);
    let skew = if graph.value(std).item() < SKEW_SIGMA_FLOOR {
        graph.constant(Tensor::scalar(0.0))
    } else {
        let d3 = graph.cube(d);
        let m3 = graph.mean(d3);
        let s3 = graph.cube(std);
        graph.div(m3, s3)?
    };
    Ok(Moments { mean, std, skew })
}

/// Plain-value counterpart of [`batch_moments`]: `(mean, std, skewness)`.
pub fn moments(values: &[f64]) -> Result<(f64, f64, f64)> {
    let n = values.len();
    if n < 2 {
        return Err(NnError::TooFewValues(n));
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
    let std = m2.sqrt();
    let skew = if std < SKEW_SIGMA_FLOOR {
        0.0
    } else {
        values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / nf / std.powi(3)
    };
    Ok((mean, std, skew))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn bce_reference_values() {
        assert!((bce_loss(&[0.5, 0.5], &[1.0, 0.0]).unwrap() - LN_2).abs() < 1e-15);
        let expected = (-(0.9f64.ln()) - 0.8f64.ln()) / 2.0;
        let got = bce_loss(&[0.9, 0.2], &[1.0, 0.0]).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.16425).abs() < 1e-5);
        let perfect = bce_loss(&[1.0, 0.0, 1.0], &[1.0, 0.0, 1.0]).unwrap();
        assert!(perfect <= -(1.0 - BCE_CLAMP).ln() + 1e-15);
        assert!(matches!(bce_loss(&[], &[]), Err(NnError::EmptyBatch)));
    }

    #[test]
    fn moments_reference_values() {
        let (m, _, sk) = moments(&[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!((m, sk), (0.0, 0.0));
        let (_, s, sk) = moments(&[2.5; 7]).unwrap();
        assert_eq!((s, sk), (0.0, 0.0));
        let (m, s, sk) = moments(&[0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((m - 0.25).abs() < 1e-15);
        assert!((s - 3f64.sqrt() / 4.0).abs() < 1e-15);
        // (0.75^3 + 3 * (-0.25)^3) / 4 / sigma^3
        let hand = (0.75f64.powi(3) + 3.0 * (-0.25f64).powi(3)) / 4.0 / s.powi(3);
        assert!((sk - hand).abs() < 1e-12);
        assert!((sk - 1.1547).abs() < 1e-4);
        assert!(matches!(moments(&[1.0]), Err(NnError::TooFewValues(1))));
    }

    #[test]
    fn graph_moments_match_plain() {
        let data = vec![0.3, -1.2, 2.2, 0.7, 0.1, -0.4];
        let mut g = Graph::new();
        let x = g.param(Tensor::from_vec(data.clone()));
        let mo = batch_moments(&mut g, x).unwrap();
        let (m, s, sk) = moments(&data).unwrap();
        assert!((g.value(mo.mean).item() - m).abs() < 1e-14);
        assert!((g.value(mo.std).item() - s).abs() < 1e-14);
        assert!((g.value(mo.skew).item() - sk).abs() < 1e-12);
    }

    #[test]
    fn degenerate_batch_has_zero_skew_and_finite_gradient() {
        let mut g = Graph::new();
        let x = g.param(Tensor::full(&[5], 1.5));
        let mo = batch_moments(&mut g, x).unwrap();
        assert_eq!(g.value(mo.skew).item(), 0.0);
        let a = g.add(mo.std, mo.skew).unwrap();
        let total = g.add(a, mo.mean).unwrap();
        let grads = g.backward(total).unwrap();
        assert!(grads.get(x).unwrap().iter().all(|v| v.is_finite()));
    }
}
