//! Mantegna-style Lévy flight steps.

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::gamma;

use crate::scalar::Real;

/// Step-size scale applied to every Lévy sample.
pub const LEVY_SCALE: f64 = 0.01;

/// Mantegna's σ for stability index `beta`:
/// `(Γ(1+β)·sin(πβ/2) / (Γ((1+β)/2)·β·2^((β-1)/2)))^(1/β)`.
pub fn mantegna_sigma<T: Real>(beta: T) -> T {
    let b = beta.as_f64();
    let num = gamma(1.0 + b) * (std::f64::consts::PI * b / 2.0).sin();
    let den = gamma((1.0 + b) / 2.0) * b * 2f64.powf((b - 1.0) / 2.0);
    T::lit((num / den).powf(1.0 / b))
}

/// One Lévy step from the two standard normal draws `u`, `v`.
#[inline]
pub fn levy_from_draws<T: Real>(u: T, v: T, sigma: T, beta: T) -> T {
    T::lit(LEVY_SCALE) * u * sigma / v.abs().powf(T::one() / beta)
}

/// `dim` independent Lévy steps. Draws `(u, v)` pairs in dimension order.
pub fn levy_sample<T: Real, R: Rng + ?Sized>(dim: usize, beta: T, rng: &mut R) -> Vec<T> {
    let sigma = mantegna_sigma(beta);
    (0..dim)
        .map(|_| {
            let u: f64 = rng.sample(StandardNormal);
            let v: f64 = rng.sample(StandardNormal);
            levy_from_draws(T::lit(u), T::lit(v), sigma, beta)
        })
        .collect()
}
