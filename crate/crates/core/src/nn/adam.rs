use super::{MlpGrads, MlpParams};
use crate::error::{Error, Result};

/// Adam moments for one network, with elementwise gradient clipping.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip: f64,
    pub step: u64,
    pub m: Vec<f32>,
    pub v: Vec<f32>,
}

impl AdamState {
    pub fn new(param_count: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip: 1.0,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    pub fn for_params(params: &MlpParams, lr: f64) -> Self {
        Self::new(params.param_count(), lr)
    }
}

/// One Adam update. Every gradient entry is first clipped to
/// `[-clip, clip]`; a non-finite entry aborts the step before any parameter
/// is touched.
pub fn adam_step(state: &mut AdamState, params: &mut MlpParams, grads: &MlpGrads) -> Result<()> {
    let blocks = grads.blocks();
    let total: usize = blocks.iter().map(|(_, b)| b.len()).sum();
    if total != params.param_count() || total != state.m.len() {
        return Err(Error::DimensionMismatch {
            what: "optimizer state",
            expected: params.param_count(),
            got: total,
        });
    }
    for (name, block) in &blocks {
        if block.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { block: name.clone() });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let mut offset = 0;
    for ((_, g), (_, p)) in blocks.iter().zip(params.blocks_mut()) {
        for (k, (&gk, pk)) in g.iter().zip(p.iter_mut()).enumerate() {
            let i = offset + k;
            let gk = gk.clamp(-state.clip, state.clip);
            let m = state.beta1 * state.m[i] as f64 + (1.0 - state.beta1) * gk;
            let v = state.beta2 * state.v[i] as f64 + (1.0 - state.beta2) * gk * gk;
            state.m[i] = m as f32;
            state.v[i] = v as f32;
            let update = state.lr * (m / bc1) / ((v / bc2).sqrt() + state.eps);
            *pk = (*pk as f64 - update) as f32;
        }
        offset += g.len();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::MlpArch;

    fn small() -> MlpParams {
        MlpParams::init(
            MlpArch {
                input: 2,
                hidden: vec![3],
                output: 1,
                skip_into: None,
            },
            0,
        )
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = small();
        let before = p.clone();
        let mut s = AdamState::for_params(&p, 1e-3);
        adam_step(&mut s, &mut p, &MlpGrads::zeros_like(&before)).unwrap();
        assert_eq!(p, before);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = small();
        let before = p.clone();
        let mut g = MlpGrads::zeros_like(&p);
        g.layers[0].direction[0] = 0.3;
        g.layers[0].bias[1] = -0.7;
        g.layers[1].bias[0] = 5.0;
        let mut s = AdamState::for_params(&p, 1e-3);
        adam_step(&mut s, &mut p, &g).unwrap();
        let d0 = p.layers[0].direction[0] as f64 - before.layers[0].direction[0] as f64;
        let d1 = p.layers[0].bias[1] as f64;
        let d2 = p.layers[1].bias[0] as f64;
        for (d, sign) in [(d0, -1.0), (d1, 1.0), (d2, -1.0)] {
            assert!((d - sign * 1e-3).abs() < 1e-5, "{d}");
        }
    }

    #[test]
    fn clipping_caps_large_gradients() {
        let p0 = small();
        let run = |v: f64| {
            let mut p = p0.clone();
            let mut g = MlpGrads::zeros_like(&p);
            g.layers[1].bias[0] = v;
            let mut s = AdamState::for_params(&p, 1e-2);
            for _ in 0..3 {
                adam_step(&mut s, &mut p, &g).unwrap();
            }
            (p, s)
        };
        let (a, sa) = run(5.0);
        let (b, sb) = run(1.0);
        assert_eq!(a, b);
        assert_eq!(sa.m, sb.m);
    }

    #[test]
    fn non_finite_gradient_names_block() {
        let mut p = small();
        let before = p.clone();
        let mut g = MlpGrads::zeros_like(&p);
        g.layers[1].magnitude[0] = f64::NAN;
        let mut s = AdamState::for_params(&p, 1e-3);
        let err = adam_step(&mut s, &mut p, &g).unwrap_err();
        assert!(err.to_string().contains("layer1.magnitude"), "{err}");
        assert_eq!(p, before);
        assert_eq!(s.step, 0);
    }
}
