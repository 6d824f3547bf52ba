//! Counter-based random numbers for reproducible parallel simulation.
//!
//! Every draw is a pure function of `(seed, path, step, lane)`, so path
//! scheduling and thread counts cannot change the sampled noise. The mixer is
//! the splitmix64 finalizer applied to a keyed counter.

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One 64-bit word keyed by the full counter tuple.
#[inline]
pub fn keyed_u64(seed: u64, path: u64, step: u64, lane: u64) -> u64 {
    let mut z = seed;
    z = mix64(z ^ path.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = mix64(z ^ step.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = mix64(z ^ lane.wrapping_mul(0x94d0_49bb_1331_11eb));
    z
}

/// Uniform draw in the open interval (0, 1).
#[inline]
pub fn keyed_uniform(seed: u64, path: u64, step: u64, lane: u64) -> f64 {
    // 53 mantissa bits, offset by half an ulp so 0 is never produced.
    ((keyed_u64(seed, path, step, lane) >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

/// Standard normal draw via Box-Muller on lanes `2*lane` and `2*lane + 1`.
#[inline]
pub fn keyed_normal(seed: u64, path: u64, step: u64, lane: u64) -> f64 {
    let u1 = keyed_uniform(seed, path, step, 2 * lane);
    let u2 = keyed_uniform(seed, path, step, 2 * lane + 1);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
