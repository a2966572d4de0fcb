//! Position-update kernels for the four vulture phases.
//!
//! The `*_step` / `exploitation_*` functions draw their random numbers from
//! the generator and clamp the result to the search box. The plain kernels
//! below them take every random quantity explicitly and do not clamp.

use std::f64::consts::PI;

use rand::Rng;

use super::levy::levy_sample;
use super::{AvoaError, AvoaParams, SearchBounds, VultureState};
use crate::scalar::Real;

/// Guard applied to the aggressive-siege denominators.
pub const DENOMINATOR_EPS: f64 = 1e-12;

/// Offset that keeps minimization selection scores strictly positive.
pub const SELECTION_EPS: f64 = 1e-12;

#[inline]
fn uniform<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    T::lit(rng.random::<f64>())
}

#[inline]
fn uniform_in<T: Real, R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> T {
    T::lit(lo + (hi - lo) * rng.random::<f64>())
}

/// Draws an index with probability `score_i / Σ score`.
pub fn roulette_select<T: Real, R: Rng + ?Sized>(scores: &[T], rng: &mut R) -> Result<usize, AvoaError> {
    if scores.iter().any(|s| *s < T::zero() || !s.is_finite()) {
        return Err(AvoaError::InvalidScores("scores must be finite and nonnegative"));
    }
    let total: T = scores.iter().copied().sum();
    if total <= T::zero() {
        return Err(AvoaError::InvalidScores("all selection scores are zero"));
    }
    let target = uniform::<T, _>(rng) * total;
    let mut acc = T::zero();
    let mut last_positive = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > T::zero() {
            last_positive = i;
            acc += s;
            if target < acc {
                return Ok(i);
            }
        }
    }
    Ok(last_positive)
}

/// Turns fitness values (lower is better) into roulette scores
/// `max_f - f_i + ε`.
pub fn selection_scores<T: Real>(fitnesses: &[T]) -> Vec<T> {
    let worst = fitnesses.iter().copied().fold(T::neg_infinity(), T::max);
    fitnesses
        .iter()
        .map(|&f| worst - f + T::lit(SELECTION_EPS))
        .collect()
}

/// Picks the reference vulture R(i): the best with probability `l1`,
/// the runner-up with probability `l2`.
pub fn pick_reference<'a, T: Real, R: Rng + ?Sized>(
    best1: &'a VultureState<T>,
    best2: &'a VultureState<T>,
    params: &AvoaParams<T>,
    rng: &mut R,
) -> &'a VultureState<T> {
    match roulette_select(&[params.l1, params.l2], rng) {
        Ok(0) => best1,
        Ok(_) => best2,
        // l1 + l2 = 1 is validated, so the scores cannot all vanish.
        Err(_) => best1,
    }
}

/// Satiation rate from explicit draws:
/// `(2·rand1 + 1)·z·(1 - t/T) + h·(sin^w(π/2·t/T) + cos(π/2·t/T) - 1)`.
pub fn satiation_from_draws<T: Real>(
    iteration: usize,
    max_iterations: usize,
    w_exponent: T,
    rand1: T,
    z: T,
    h: T,
) -> T {
    let progress = T::from_usize_lossy(iteration) / T::from_usize_lossy(max_iterations);
    let angle = T::lit(PI / 2.0) * progress;
    let t = h * (angle.sin().powf(w_exponent) + angle.cos() - T::one());
    (T::lit(2.0) * rand1 + T::one()) * z * (T::one() - progress) + t
}

/// Draws `rand1 ~ U(0,1)`, `z ~ U(-1,1)`, `h ~ U(-2,2)` in that order.
pub fn satiation_rate<T: Real, R: Rng + ?Sized>(
    iteration: usize,
    max_iterations: usize,
    params: &AvoaParams<T>,
    rng: &mut R,
) -> T {
    let rand1 = uniform(rng);
    let z = uniform_in(rng, -1.0, 1.0);
    let h = uniform_in(rng, -2.0, 2.0);
    satiation_from_draws(iteration, max_iterations, params.w_exponent, rand1, z, h)
}

/// `D(i) = |X·R(i) - P(i)|` per dimension.
pub fn distance_to_reference<T: Real>(position: &[T], reference: &[T], x_coeff: &[T]) -> Vec<T> {
    position
        .iter()
        .zip(reference)
        .zip(x_coeff)
        .map(|((&p, &r), &x)| (x * r - p).abs())
        .collect()
}

/// Focused search around the reference: `R - D·F`.
pub fn focused_search<T: Real>(position: &[T], reference: &[T], f: T, x_coeff: &[T]) -> Vec<T> {
    distance_to_reference(position, reference, x_coeff)
        .into_iter()
        .zip(reference)
        .map(|(d, &r)| r - d * f)
        .collect()
}

/// Global search over the box: `R - F + rand2·((ub - lb)·rand3 + lb)`.
pub fn global_search<T: Real>(reference: &[T], f: T, bounds: &SearchBounds<T>, rand2: T, rand3: T) -> Vec<T> {
    reference
        .iter()
        .zip(bounds.lower())
        .zip(bounds.upper())
        .map(|((&r, &lb), &ub)| r - f + rand2 * ((ub - lb) * rand3 + lb))
        .collect()
}

/// Siege fight: `D·(F + rand4) - (R - P)`.
pub fn siege_fight<T: Real>(position: &[T], reference: &[T], f: T, x_coeff: &[T], rand4: T) -> Vec<T> {
    distance_to_reference(position, reference, x_coeff)
        .into_iter()
        .zip(reference.iter().zip(position))
        .map(|(d, (&r, &p))| d * (f + rand4) - (r - p))
        .collect()
}

/// Rotational flight: `R - (S1 + S2)` with
/// `S1 = R·(rand5·P/2π)·cos P` and `S2 = R·(rand6·P/2π)·sin P`.
pub fn rotational_flight<T: Real>(position: &[T], reference: &[T], rand5: T, rand6: T) -> Vec<T> {
    let two_pi = T::lit(2.0 * PI);
    position
        .iter()
        .zip(reference)
        .map(|(&p, &r)| {
            let s1 = r * (rand5 * p / two_pi) * p.cos();
            let s2 = r * (rand6 * p / two_pi) * p.sin();
            r - (s1 + s2)
        })
        .collect()
}

fn guarded(denominator: f64) -> f64 {
    if denominator.abs() < DENOMINATOR_EPS {
        DENOMINATOR_EPS.copysign(denominator)
    } else {
        denominator
    }
}

/// Aggressive siege: midpoint of `A_k = B_k - (B_k·P)/(B_k - P²)·F` for the
/// two best vultures, with denominators kept at least `DENOMINATOR_EPS` away
/// from zero.
pub fn aggressive_siege<T: Real>(position: &[T], best1: &[T], best2: &[T], f: T) -> Vec<T> {
    let pull = |b: T, p: T| {
        let den = T::lit(guarded((b - p * p).as_f64()));
        b - (b * p) / den * f
    };
    position
        .iter()
        .zip(best1.iter().zip(best2))
        .map(|(&p, (&b1, &b2))| (pull(b1, p) + pull(b2, p)) / T::lit(2.0))
        .collect()
}

/// Lévy flight around the reference: `R - |R - P|·F·levy`.
pub fn levy_flight_step<T: Real>(position: &[T], reference: &[T], f: T, levy: &[T]) -> Vec<T> {
    position
        .iter()
        .zip(reference)
        .zip(levy)
        .map(|((&p, &r), &l)| r - (r - p).abs() * f * l)
        .collect()
}

fn random_coefficients<T: Real, R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<T> {
    (0..dim).map(|_| uniform_in(rng, 0.0, 2.0)).collect()
}

/// Exploration (|F| ≥ 1). Draws `rand_P1`, then either the `X` vector or
/// `rand2, rand3`.
pub fn exploration_step<T: Real, R: Rng + ?Sized>(
    v: &VultureState<T>,
    reference: &VultureState<T>,
    f: T,
    bounds: &SearchBounds<T>,
    params: &AvoaParams<T>,
    rng: &mut R,
) -> Vec<T> {
    let mut next = if uniform::<T, _>(rng) <= params.p1 {
        let x = random_coefficients(v.position.len(), rng);
        focused_search(&v.position, &reference.position, f, &x)
    } else {
        let rand2 = uniform(rng);
        let rand3 = uniform(rng);
        global_search(&reference.position, f, bounds, rand2, rand3)
    };
    bounds.clamp(&mut next);
    next
}

/// First exploitation stage (0.5 ≤ |F| < 1). Draws `rand_P2`, then either
/// `X` and `rand4`, or `rand5, rand6`.
pub fn exploitation_stage1<T: Real, R: Rng + ?Sized>(
    v: &VultureState<T>,
    reference: &VultureState<T>,
    f: T,
    bounds: &SearchBounds<T>,
    params: &AvoaParams<T>,
    rng: &mut R,
) -> Vec<T> {
    let mut next = if uniform::<T, _>(rng) <= params.p2 {
        let x = random_coefficients(v.position.len(), rng);
        let rand4 = uniform(rng);
        siege_fight(&v.position, &reference.position, f, &x, rand4)
    } else {
        let rand5 = uniform(rng);
        let rand6 = uniform(rng);
        rotational_flight(&v.position, &reference.position, rand5, rand6)
    };
    bounds.clamp(&mut next);
    next
}

/// Second exploitation stage (|F| < 0.5). Draws `rand_P3`, then the Lévy
/// normals when the Lévy branch is taken.
#[allow(clippy::too_many_arguments)]
pub fn exploitation_stage2<T: Real, R: Rng + ?Sized>(
    v: &VultureState<T>,
    best1: &VultureState<T>,
    best2: &VultureState<T>,
    reference: &VultureState<T>,
    f: T,
    bounds: &SearchBounds<T>,
    params: &AvoaParams<T>,
    rng: &mut R,
) -> Vec<T> {
    let mut next = if uniform::<T, _>(rng) <= params.p3 {
        aggressive_siege(&v.position, &best1.position, &best2.position, f)
    } else {
        let levy = levy_sample(v.position.len(), params.levy_beta, rng);
        levy_flight_step(&v.position, &reference.position, f, &levy)
    };
    bounds.clamp(&mut next);
    next
}
