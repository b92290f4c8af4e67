//! Coordinate MLPs: positional encoding, a weight-normalized SoftPlus MLP
//! with a skip connection, a layer-wise reverse-mode tape, Adam with
//! elementwise gradient clipping, and the three fields built on top.

mod adam;
mod batch;
mod encoding;
mod fields;
mod mlp;

pub use adam::{adam_step, AdamState};
pub use batch::Batch;
pub use encoding::{positional_encode, EncodingSpec};
pub use fields::{
    softmax_backward, softmax_rows, AlbedoNet, FieldKind, NetConfig, OutputMode, ShadowNet, SkinNet,
};
pub use mlp::{GradTape, LayerGrads, Mlp, MlpArch, MlpGrads, MlpLayer, MlpParams, Precision};

/// Numerically stable `ln(1 + e^x)`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `e^y` for `y <= 0` in single precision, branch-free so that loops over
/// it vectorize. Relative error is a few ulp; inputs below -87 give 2^-126.
#[inline(always)]
fn exp_nonpositive_f32(y: f32) -> f32 {
    let y = y.max(-87.0);
    // Round-to-nearest via the 1.5 * 2^23 shifter; the low mantissa bits of
    // `z` then hold `k` as an integer.
    let z = y * std::f32::consts::LOG2_E + 12_582_912.0;
    let k = z - 12_582_912.0;
    let r = y - k * 0.693_359_4 - k * -2.121_944_4e-4;
    let p = ((((1.987_569_1e-4 * r + 1.398_199_9e-3) * r + 8.333_452e-3) * r + 4.166_579_6e-2) * r + 0.166_666_65) * r + 0.5;
    let e = p * r * r + r + 1.0;
    e * f32::from_bits(z.to_bits().wrapping_sub(0x4B40_0000 - 127) << 23)
}

/// `ln(1 + t)` for `t` in `[0, 1]` via `2 atanh(t / (2 + t))`.
#[inline(always)]
fn ln_1p_unit_f32(t: f32) -> f32 {
    let s = t / (2.0 + t);
    let s2 = s * s;
    let p = 1.0 + s2 * (1.0 / 3.0 + s2 * (0.2 + s2 * (1.0 / 7.0 + s2 * (1.0 / 9.0 + s2 * (1.0 / 11.0 + s2 * (1.0 / 13.0 + s2 / 15.0))))));
    2.0 * s * p
}

/// Single-precision SoftPlus for the fast training path.
#[inline(always)]
pub(crate) fn softplus_f32(x: f32) -> f32 {
    x.max(0.0) + ln_1p_unit_f32(exp_nonpositive_f32(-x.abs()))
}

#[inline(always)]
pub(crate) fn sigmoid_f32(x: f32) -> f32 {
    let e = exp_nonpositive_f32(-x.abs());
    let inv = 1.0 / (1.0 + e);
    if x >= 0.0 {
        inv
    } else {
        e * inv
    }
}
