//! Fourier-feature lifting of pose coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Per-coordinate sinusoidal encoding with `levels` octaves.
///
/// Each scalar `p` maps to `(p, sin(2^0 pi p), cos(2^0 pi p), ...,
/// sin(2^(L-1) pi p), cos(2^(L-1) pi p))`. `levels == 0` disables the
/// lifting and passes coordinates through unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FourierSpec {
    pub levels: usize,
}

impl FourierSpec {
    pub fn new(levels: usize) -> Self {
        Self { levels }
    }

    /// Encoded length of an `m`-vector: `m * (2L + 1)`.
    pub fn encoded_len(&self, m: usize) -> usize {
        m * (2 * self.levels + 1)
    }

    pub fn encode(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.encoded_len(v.len()));
        self.encode_into(v, &mut out)?;
        Ok(out)
    }

    /// Appends the encoding of `v` to `out`.
    pub fn encode_into(&self, v: &[f64], out: &mut Vec<f64>) -> Result<()> {
        if v.is_empty() {
            return Err(invalid!("fourier encoding of an empty vector"));
        }
        if let Some(bad) = v.iter().find(|p| !p.is_finite()) {
            return Err(invalid!("fourier encoding of non-finite value {bad}"));
        }
        for &p in v {
            out.push(p);
            let mut freq = std::f64::consts::PI;
            for _ in 0..self.levels {
                let (s, c) = (freq * p).sin_cos();
                out.push(s);
                out.push(c);
                freq *= 2.0;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_input_two_levels() {
        let e = FourierSpec::new(2).encode(&[0.0]).unwrap();
        assert_eq!(e, vec![0.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn half_one_level() {
        let e = FourierSpec::new(1).encode(&[0.5]).unwrap();
        assert_eq!(e.len(), 3);
        assert_eq!(e[0], 0.5);
        assert!((e[1] - 1.0).abs() < 1e-12);
        assert!(e[2].abs() < 1e-12);
    }

    #[test]
    fn position_with_six_levels_has_39_components() {
        let spec = FourierSpec::new(6);
        assert_eq!(spec.encode(&[1.0, -2.0, 0.3]).unwrap().len(), 39);
        assert_eq!(spec.encoded_len(3), 39);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(FourierSpec::new(3).encode(&[f64::NAN]).is_err());
        assert!(FourierSpec::new(3).encode(&[]).is_err());
    }

    #[test]
    fn zero_levels_is_identity() {
        assert_eq!(FourierSpec::new(0).encode(&[1.5, -2.0]).unwrap(), vec![1.5, -2.0]);
    }

    proptest! {
        #[test]
        fn length_and_range(levels in 0usize..9, v in prop::collection::vec(-50.0f64..50.0, 1..8)) {
            let spec = FourierSpec::new(levels);
            let e = spec.encode(&v).unwrap();
            prop_assert_eq!(e.len(), v.len() * (2 * levels + 1));
            let stride = 2 * levels + 1;
            for (i, val) in e.iter().enumerate() {
                if i % stride == 0 {
                    prop_assert_eq!(*val, v[i / stride]);
                } else {
                    prop_assert!((-1.0..=1.0).contains(val));
                }
            }
        }
    }
}
