use crate::error::{contract_err, Result};
use crate::tensor::Scalar;

/// Which online-softmax schedule to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OnlineMode {
    /// Max pass, normalizer pass against the final max, output pass.
    ThreePass,
    /// Max and rescaled normalizer fused in one pass, then the output pass.
    TwoPass,
}

fn non_empty<T>(x: &[T]) -> Result<()> {
    if x.is_empty() {
        return contract_err("softmax of an empty vector");
    }
    Ok(())
}

/// `exp(x_i - max x) / Σ_j exp(x_j - max x)`.
pub fn stable_softmax<T: Scalar>(x: &[T]) -> Result<Vec<T>> {
    non_empty(x)?;
    let m = x.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = x.iter().map(|&v| (v - m).exp()).collect();
    let d: T = e.iter().copied().sum();
    Ok(e.into_iter().map(|v| v / d).collect())
}

pub fn online_softmax<T: Scalar>(x: &[T], mode: OnlineMode) -> Result<Vec<T>> {
    non_empty(x)?;
    let (m, d) = match mode {
        OnlineMode::ThreePass => {
            let mut m = T::neg_infinity();
            for &v in x {
                m = m.max(v);
            }
            let mut d = T::zero();
            for &v in x {
                d += (v - m).exp();
            }
            (m, d)
        }
        OnlineMode::TwoPass => {
            let mut m = T::neg_infinity();
            let mut d = T::zero();
            for &v in x {
                let m_new = m.max(v);
                d = (m - m_new).exp() * d + (v - m_new).exp();
                m = m_new;
            }
            (m, d)
        }
    };
    Ok(x.iter().map(|&v| (v - m).exp() / d).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_fill;

    const MODES: [OnlineMode; 2] = [OnlineMode::ThreePass, OnlineMode::TwoPass];

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn symmetric_pair() {
        assert_eq!(stable_softmax(&[0.0f64, 0.0]).unwrap(), vec![0.5, 0.5]);
        for mode in MODES {
            assert_eq!(online_softmax(&[0.0f64, 0.0], mode).unwrap(), vec![0.5, 0.5]);
        }
    }

    #[test]
    fn large_equal_inputs() {
        let s = stable_softmax(&[1000.0f64; 3]).unwrap();
        for v in s {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_direct_oracle() {
        let x = rng_fill::<f64>(&[16], 21, -5.0, 5.0).unwrap();
        let x = x.data();
        let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = x.iter().map(|v| (v - m).exp()).sum();
        let oracle: Vec<f64> = x.iter().map(|v| (v - m).exp() / z).collect();
        assert!(max_diff(&stable_softmax(x).unwrap(), &oracle) <= 1e-14);
    }

    #[test]
    fn online_matches_stable_on_ascending() {
        let x: Vec<f64> = (1..=8).map(f64::from).collect();
        let s = stable_softmax(&x).unwrap();
        for mode in MODES {
            assert!(max_diff(&online_softmax(&x, mode).unwrap(), &s) <= 1e-14);
        }
    }

    #[test]
    fn extreme_magnitudes() {
        let x = [1e4f64, -1e4, 3.0, 1e4 - 1.0];
        for mode in MODES {
            let y = online_softmax(&x, mode).unwrap();
            assert!(y.iter().all(|v| v.is_finite()));
            assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_is_error() {
        assert!(stable_softmax::<f64>(&[]).is_err());
        assert!(online_softmax::<f64>(&[], OnlineMode::TwoPass).is_err());
    }

    #[test]
    fn shift_invariance() {
        let x = rng_fill::<f64>(&[32], 5, -3.0, 3.0).unwrap();
        let base = stable_softmax(x.data()).unwrap();
        for c in [-1e3, -17.5, 0.25, 999.0] {
            let shifted: Vec<f64> = x.data().iter().map(|v| v + c).collect();
            assert!(max_diff(&stable_softmax(&shifted).unwrap(), &base) <= 1e-12);
        }
    }
}
