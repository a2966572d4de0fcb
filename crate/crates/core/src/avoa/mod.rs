//! African Vultures Optimization Algorithm over box-bounded real spaces.
//!
//! The engine minimizes. Each iteration every vulture picks a reference
//! among the two best vultures found so far, draws a satiation rate `F`, and
//! moves by the phase that `|F|` selects:
//!
//! * `|F| ≥ 1`: exploration (focused or global search),
//! * `0.5 ≤ |F| < 1`: siege fight or rotational flight,
//! * `|F| < 0.5`: aggressive siege or Lévy flight.
//!
//! Every vulture of every iteration draws from its own ChaCha stream, so the
//! run is a pure function of the seed regardless of evaluation threading.

mod levy;
mod phases;

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use levy::{levy_from_draws, levy_sample, mantegna_sigma, LEVY_SCALE};
pub use phases::{
    aggressive_siege, distance_to_reference, exploitation_stage1, exploitation_stage2,
    exploration_step, focused_search, global_search, levy_flight_step, pick_reference,
    roulette_select, rotational_flight, satiation_from_draws, satiation_rate, selection_scores,
    siege_fight, DENOMINATOR_EPS, SELECTION_EPS,
};

use crate::scalar::Real;

#[derive(Debug, Error, PartialEq)]
pub enum AvoaError {
    #[error("invalid optimizer parameters: {0}")]
    InvalidParams(String),
    #[error("invalid search bounds: {0}")]
    InvalidBounds(String),
    #[error("invalid selection scores: {0}")]
    InvalidScores(&'static str),
    #[error("initial population: {0}")]
    InitialPopulation(String),
    #[error("objective returned {value} at position {position:?}")]
    NonFiniteObjective { position: Vec<f64>, value: f64 },
}

/// Controlling parameters. Defaults are the published tuning setup:
/// 50 vultures, 40 iterations, `P1 = 0.6`, `P2 = 0.4`, `P3 = 0.6`,
/// `w = 2.5` and `L1 = 0.8`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AvoaParams<T: Real> {
    pub population_size: usize,
    pub max_iterations: usize,
    pub p1: T,
    pub p2: T,
    pub p3: T,
    pub l1: T,
    pub l2: T,
    pub w_exponent: T,
    pub levy_beta: T,
    pub seed: u64,
    /// Evaluate each generation on the rayon pool.
    pub parallel: bool,
}

impl<T: Real> Default for AvoaParams<T> {
    fn default() -> Self {
        Self {
            population_size: 50,
            max_iterations: 40,
            p1: T::lit(0.6),
            p2: T::lit(0.4),
            p3: T::lit(0.6),
            l1: T::lit(0.8),
            l2: T::lit(0.2),
            w_exponent: T::lit(2.5),
            levy_beta: T::lit(1.5),
            seed: 0,
            parallel: true,
        }
    }
}

impl<T: Real> AvoaParams<T> {
    pub fn validate(&self) -> Result<(), AvoaError> {
        let bad = |msg: String| Err(AvoaError::InvalidParams(msg));
        if self.population_size < 2 {
            return bad(format!("population_size {} < 2", self.population_size));
        }
        if self.max_iterations < 1 {
            return bad("max_iterations must be at least 1".into());
        }
        for (name, p) in [("p1", self.p1), ("p2", self.p2), ("p3", self.p3), ("l1", self.l1), ("l2", self.l2)] {
            if !(p >= T::zero() && p <= T::one()) {
                return bad(format!("{name} = {p} outside [0, 1]"));
            }
        }
        if (self.l1 + self.l2 - T::one()).abs().as_f64() > 1e-12 {
            return bad(format!("l1 + l2 = {} != 1", self.l1 + self.l2));
        }
        if !(self.levy_beta > T::zero() && self.levy_beta <= T::lit(2.0)) {
            return bad(format!("levy_beta {} outside (0, 2]", self.levy_beta));
        }
        if !self.w_exponent.is_finite() {
            return bad("w_exponent must be finite".into());
        }
        Ok(())
    }

    /// Objective evaluations a full run performs.
    pub fn evaluation_count(&self) -> usize {
        self.population_size * (self.max_iterations + 1)
    }
}

/// Axis-aligned search box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SearchBounds<T: Real> {
    lower: Vec<T>,
    upper: Vec<T>,
}

impl<T: Real> SearchBounds<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Result<Self, AvoaError> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(AvoaError::InvalidBounds(format!(
                "{} lower vs {} upper entries",
                lower.len(),
                upper.len()
            )));
        }
        if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] < upper[i]) || !upper[i].is_finite() || !lower[i].is_finite()) {
            return Err(AvoaError::InvalidBounds(format!(
                "dimension {i}: [{}, {}]",
                lower[i], upper[i]
            )));
        }
        Ok(Self { lower, upper })
    }

    /// `[lo, hi]^dim`.
    pub fn uniform(dim: usize, lo: T, hi: T) -> Result<Self, AvoaError> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    pub fn clamp(&self, position: &mut [T]) {
        for ((x, &lo), &hi) in position.iter_mut().zip(&self.lower).zip(&self.upper) {
            *x = x.max(lo).min(hi);
        }
    }

    pub fn contains(&self, position: &[T]) -> bool {
        position.len() == self.dim()
            && position
                .iter()
                .zip(&self.lower)
                .zip(&self.upper)
                .all(|((&x, &lo), &hi)| x >= lo && x <= hi)
    }
}

/// A candidate position and its objective value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct VultureState<T: Real> {
    pub position: Vec<T>,
    pub fitness: T,
}

/// Which update family a vulture used in one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Exploration,
    ExploitationStage1,
    ExploitationStage2,
}

impl Phase {
    /// `|F| = 1` counts as exploration.
    pub fn for_satiation<T: Real>(f: T) -> Self {
        let a = f.abs();
        if a >= T::one() {
            Phase::Exploration
        } else if a >= T::lit(0.5) {
            Phase::ExploitationStage1
        } else {
            Phase::ExploitationStage2
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseCounts {
    pub exploration: usize,
    pub exploitation_stage1: usize,
    pub exploitation_stage2: usize,
}

/// One position update, reported to observers.
#[derive(Debug, Clone, PartialEq)]
pub struct StepEvent<T: Real> {
    pub iteration: usize,
    pub vulture: usize,
    pub satiation: T,
    pub phase: Phase,
}

/// Best-so-far fitness after every iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ConvergenceTrace<T: Real> {
    pub best_fitness_per_iteration: Vec<T>,
    pub best_position_final: Vec<T>,
    pub evaluations: usize,
    pub phase_counts: PhaseCounts,
}

impl<T: Real> ConvergenceTrace<T> {
    /// Writes `iteration,<column>` rows, iterations numbered from 1. Each
    /// value passes through `map` first, so callers can report accuracy
    /// instead of loss.
    pub fn write_csv<W: Write>(
        &self,
        mut out: W,
        column: &str,
        map: impl Fn(T) -> T,
    ) -> std::io::Result<()> {
        writeln!(out, "iteration,{column}")?;
        for (i, &f) in self.best_fitness_per_iteration.iter().enumerate() {
            writeln!(out, "{},{}", i + 1, map(f))?;
        }
        Ok(())
    }
}

/// Fitness function to minimize. Must be reentrant: a generation may be
/// evaluated concurrently.
pub trait Objective<T>: Sync {
    fn evaluate(&self, position: &[T]) -> T;
}

impl<T, F> Objective<T> for F
where
    F: Fn(&[T]) -> T + Sync,
{
    fn evaluate(&self, position: &[T]) -> T {
        self(position)
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Runs the optimizer with a random initial population.
pub fn optimize<T: Real, O: Objective<T>>(
    objective: &O,
    bounds: &SearchBounds<T>,
    params: &AvoaParams<T>,
) -> Result<(VultureState<T>, ConvergenceTrace<T>), AvoaError> {
    Avoa::new(params.clone())?.run(objective, bounds, None, &mut |_| {})
}

pub struct Avoa<T: Real> {
    params: AvoaParams<T>,
}

impl<T: Real> Avoa<T> {
    pub fn new(params: AvoaParams<T>) -> Result<Self, AvoaError> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &AvoaParams<T> {
        &self.params
    }

    /// Full run. `initial` replaces the random population when given (one
    /// position per vulture). `observer` sees every position update.
    pub fn run<O: Objective<T>>(
        &self,
        objective: &O,
        bounds: &SearchBounds<T>,
        initial: Option<Vec<Vec<T>>>,
        observer: &mut dyn FnMut(&StepEvent<T>),
    ) -> Result<(VultureState<T>, ConvergenceTrace<T>), AvoaError> {
        self.run_logged(objective, bounds, initial, observer, &mut Vec::new())
    }

    /// Like [`Avoa::run`], and appends every evaluated state to `log` in
    /// evaluation order (vulture order within a generation).
    pub fn run_logged<O: Objective<T>>(
        &self,
        objective: &O,
        bounds: &SearchBounds<T>,
        initial: Option<Vec<Vec<T>>>,
        observer: &mut dyn FnMut(&StepEvent<T>),
        log: &mut Vec<VultureState<T>>,
    ) -> Result<(VultureState<T>, ConvergenceTrace<T>), AvoaError> {
        let p = &self.params;
        let dim = bounds.dim();
        let positions = match initial {
            Some(pop) => {
                if pop.len() != p.population_size {
                    return Err(AvoaError::InitialPopulation(format!(
                        "{} positions for population {}",
                        pop.len(),
                        p.population_size
                    )));
                }
                if let Some(bad) = pop.iter().position(|x| !bounds.contains(x)) {
                    return Err(AvoaError::InitialPopulation(format!(
                        "position {bad} lies outside the bounds"
                    )));
                }
                pop
            }
            None => {
                // Stream 0: initial positions, vulture-major, dimension-minor.
                let mut rng = stream_rng(p.seed, 0);
                (0..p.population_size)
                    .map(|_| {
                        (0..dim)
                            .map(|j| {
                                let u = T::lit(rand::Rng::random::<f64>(&mut rng));
                                let (lo, hi) = (bounds.lower()[j], bounds.upper()[j]);
                                (lo + u * (hi - lo)).min(hi)
                            })
                            .collect()
                    })
                    .collect()
            }
        };

        let mut evaluations = 0;
        let mut population = self.evaluate_all(objective, positions, &mut evaluations)?;
        log.extend(population.iter().cloned());
        let mut ranked: Vec<usize> = (0..population.len()).collect();
        ranked.sort_by(|&a, &b| {
            population[a]
                .fitness
                .partial_cmp(&population[b].fitness)
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut best1 = population[ranked[0]].clone();
        let mut best2 = population[ranked[1]].clone();

        let mut trace = Vec::with_capacity(p.max_iterations);
        let mut counts = PhaseCounts::default();
        for iteration in 0..p.max_iterations {
            let mut next = Vec::with_capacity(population.len());
            for (i, vulture) in population.iter().enumerate() {
                // Per-vulture draw order: reference roulette, then rand1, z,
                // h for F, then the phase branch draw and its kernel draws.
                let stream = 1 + (iteration * p.population_size + i) as u64;
                let mut rng = stream_rng(p.seed, stream);
                let reference = pick_reference(&best1, &best2, p, &mut rng);
                let f = satiation_rate(iteration, p.max_iterations, p, &mut rng);
                let phase = Phase::for_satiation(f);
                let position = match phase {
                    Phase::Exploration => {
                        counts.exploration += 1;
                        exploration_step(vulture, reference, f, bounds, p, &mut rng)
                    }
                    Phase::ExploitationStage1 => {
                        counts.exploitation_stage1 += 1;
                        exploitation_stage1(vulture, reference, f, bounds, p, &mut rng)
                    }
                    Phase::ExploitationStage2 => {
                        counts.exploitation_stage2 += 1;
                        exploitation_stage2(vulture, &best1, &best2, reference, f, bounds, p, &mut rng)
                    }
                };
                observer(&StepEvent {
                    iteration,
                    vulture: i,
                    satiation: f,
                    phase,
                });
                next.push(position);
            }
            population = self.evaluate_all(objective, next, &mut evaluations)?;
            log.extend(population.iter().cloned());
            for v in &population {
                if v.fitness < best1.fitness {
                    best2 = std::mem::replace(&mut best1, v.clone());
                } else if v.fitness > best1.fitness && v.fitness < best2.fitness {
                    best2 = v.clone();
                }
            }
            trace.push(best1.fitness);
        }

        let trace = ConvergenceTrace {
            best_fitness_per_iteration: trace,
            best_position_final: best1.position.clone(),
            evaluations,
            phase_counts: counts,
        };
        Ok((best1, trace))
    }

    fn evaluate_all<O: Objective<T>>(
        &self,
        objective: &O,
        positions: Vec<Vec<T>>,
        evaluations: &mut usize,
    ) -> Result<Vec<VultureState<T>>, AvoaError> {
        let fitness: Vec<T> = if self.params.parallel {
            positions.par_iter().map(|x| objective.evaluate(x)).collect()
        } else {
            positions.iter().map(|x| objective.evaluate(x)).collect()
        };
        *evaluations += positions.len();
        positions
            .into_iter()
            .zip(fitness)
            .map(|(position, fitness)| {
                if fitness.is_finite() {
                    Ok(VultureState { position, fitness })
                } else {
                    Err(AvoaError::NonFiniteObjective {
                        position: position.iter().map(|x| x.as_f64()).collect(),
                        value: fitness.as_f64(),
                    })
                }
            })
            .collect()
    }
}
