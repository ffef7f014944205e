use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::series::MetaWindow;

/// Copy of `support` with zero-mean Gaussian noise of standard deviation
/// `noise_level` added to every label. Inputs are untouched; a zero noise
/// level returns the labels bit for bit.
pub fn meta_augment<R: Rng + ?Sized>(support: &MetaWindow, noise_level: f64, rng: &mut R) -> MetaWindow {
    if noise_level <= 0.0 {
        return support.clone();
    }
    let normal = Normal::new(0.0, noise_level).expect("positive finite std");
    let labels: Vec<f64> = support.labels().map(|y| y + normal.sample(rng)).collect();
    support.with_labels(&labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Tensor;
    use crate::seed;
    use crate::series::LabeledWindow;

    fn support(l: usize) -> MetaWindow {
        let ws = (0..l)
            .map(|i| LabeledWindow {
                inputs: Tensor::from_vec(&[1, 1], vec![i as f64]).unwrap(),
                label: 0.5,
                origin_index: i,
            })
            .collect();
        MetaWindow::new(ws, "s", 0).unwrap()
    }

    #[test]
    fn zero_noise_is_identity() {
        let s = support(4);
        assert_eq!(meta_augment(&s, 0.0, &mut seed::rng(0, "n", 0)), s);
    }

    #[test]
    fn empirical_std_matches_noise_level() {
        let s = support(100_000);
        let noisy = meta_augment(&s, 0.01, &mut seed::rng(0, "n", 1));
        let d: Vec<f64> = noisy.labels().map(|y| y - 0.5).collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64;
        assert!((var.sqrt() / 0.01 - 1.0).abs() < 0.02);
        assert!(noisy
            .windows()
            .iter()
            .zip(s.windows())
            .all(|(a, b)| a.inputs == b.inputs));
    }
}
