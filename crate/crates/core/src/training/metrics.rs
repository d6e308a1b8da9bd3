//! Normalized mean squared error.

use crate::error::{check_dim, Error, Result};

/// `mean((pred − target)²) / var(target)`, with the population variance of
/// the evaluated targets.
pub fn nmse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_dim("nmse prediction", target.len(), pred.len())?;
    if target.is_empty() {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    let n = target.len() as f64;
    let mean = target.iter().sum::<f64>() / n;
    let var = target.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
    if !(var > 1e-300) {
        return Err(Error::ZeroVariance);
    }
    let mse = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / n;
    Ok(mse / var)
}

/// Mean and (population) standard deviation of the finite entries.
pub fn mean_std(values: impl IntoIterator<Item = f64>) -> Option<(f64, f64)> {
    let v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn exact_and_mean_predictions() {
        let t = [1.0, -2.0, 0.5, 3.0];
        assert_eq!(nmse(&t, &t).unwrap(), 0.0);
        let m = t.iter().sum::<f64>() / 4.0;
        assert!((nmse(&[m; 4], &t).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quarter_variance_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let target: Vec<f64> = (0..20000).map(|i| (i as f64 * 0.01).sin() * 2.0).collect();
        let var = target.iter().map(|t| t * t).sum::<f64>() / target.len() as f64;
        let noise = Normal::new(0.0, (0.25 * var).sqrt()).unwrap();
        let pred: Vec<f64> = target.iter().map(|t| t + noise.sample(&mut rng)).collect();
        assert!((nmse(&pred, &target).unwrap() - 0.25).abs() < 0.01);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            nmse(&[1.0, 1.0], &[2.0, 2.0]),
            Err(Error::ZeroVariance)
        ));
        assert!(nmse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(nmse(&[], &[]).is_err());
    }

    #[test]
    fn mean_std_skips_non_finite() {
        assert_eq!(mean_std([1.0, f64::NAN, 3.0]), Some((2.0, 1.0)));
        assert_eq!(mean_std([f64::NAN]), None);
    }

    proptest! {
        #[test]
        fn shift_invariant(
            pairs in prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64), 3..40),
            shift in -100.0..100.0f64,
        ) {
            let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            prop_assume!(nmse(&p, &t).is_ok());
            let ps: Vec<f64> = p.iter().map(|x| x + shift).collect();
            let ts: Vec<f64> = t.iter().map(|x| x + shift).collect();
            let a = nmse(&p, &t).unwrap();
            let b = nmse(&ps, &ts).unwrap();
            prop_assert!((a - b).abs() <= 1e-8 * a.max(1.0));
        }
    }
}
