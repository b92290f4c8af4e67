use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Sinusoidal positional encoding: per component `p`, optionally `p` itself,
/// then `sin(2^k π p), cos(2^k π p)` for `k = 0..L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingSpec {
    pub frequencies: usize,
    pub include_raw: bool,
}

impl Default for EncodingSpec {
    fn default() -> Self {
        Self {
            frequencies: 6,
            include_raw: true,
        }
    }
}

impl EncodingSpec {
    pub fn dim(&self, raw: usize) -> usize {
        raw * (usize::from(self.include_raw) + 2 * self.frequencies)
    }

    /// Writes the encoding of `x` into `out[..self.dim(x.len())]`.
    pub fn encode_into(&self, x: &[f64], out: &mut [f64]) {
        let mut k = 0;
        if self.include_raw {
            out[..x.len()].copy_from_slice(x);
            k = x.len();
        }
        for &p in x {
            let mut freq = PI;
            for _ in 0..self.frequencies {
                let (s, c) = (freq * p).sin_cos();
                out[k] = s;
                out[k + 1] = c;
                k += 2;
                freq *= 2.0;
            }
        }
    }
}

pub fn positional_encode(x: &[f64], spec: &EncodingSpec) -> Vec<f64> {
    let mut out = vec![0.0; spec.dim(x.len())];
    spec.encode_into(x, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input() {
        for l in 0..5 {
            let spec = EncodingSpec { frequencies: l, include_raw: false };
            let e = positional_encode(&[0.0], &spec);
            for pair in e.chunks(2) {
                assert_eq!(pair, &[0.0, 1.0]);
            }
        }
    }

    #[test]
    fn one_at_single_frequency() {
        let e = positional_encode(&[1.0], &EncodingSpec { frequencies: 1, include_raw: false });
        assert!(e[0].abs() < 1e-12);
        assert!((e[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_counts() {
        for l in 0..8 {
            let spec = EncodingSpec { frequencies: l, include_raw: true };
            assert_eq!(positional_encode(&[0.1, 0.2, 0.3], &spec).len(), 3 * (1 + 2 * l));
            assert_eq!(spec.dim(3), 3 * (1 + 2 * l));
        }
        let e = positional_encode(&[0.25, -0.5, 2.0], &EncodingSpec::default());
        assert_eq!(&e[..3], &[0.25, -0.5, 2.0]);
    }
}
