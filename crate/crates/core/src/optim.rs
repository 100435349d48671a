//! Cross-entropy method over flat parameter vectors.
//!
//! Each generation samples a population around the current mean with
//! isotropic Gaussian noise, keeps the best `elite_fraction`, and moves the
//! mean to the elite average. The noise scale decays geometrically. The
//! current mean is always evaluated as population member 0, so a generation
//! can never lose the incumbent.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{rng_from_seed, Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct CemConfig {
    pub population: usize,
    pub elite_fraction: f64,
    pub init_std: f64,
    /// Multiplier applied to the noise scale after every generation.
    pub std_decay: f64,
    pub min_std: f64,
    pub generations: usize,
    pub seed: u64,
}

impl Default for CemConfig {
    fn default() -> Self {
        Self {
            population: 32,
            elite_fraction: 0.25,
            init_std: 0.5,
            std_decay: 0.95,
            min_std: 0.02,
            generations: 30,
            seed: 0,
        }
    }
}

impl CemConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.population >= 2
            && self.elite_fraction > 0.0
            && self.elite_fraction <= 1.0
            && self.init_std > 0.0
            && self.std_decay > 0.0
            && self.std_decay <= 1.0
            && self.min_std >= 0.0;
        if !ok {
            return Err(Error::Config(format!("invalid optimizer settings {self:?}")));
        }
        Ok(())
    }

    pub fn elite_count(&self) -> usize {
        let n = libm::round(self.population as f64 * self.elite_fraction) as usize;
        n.clamp(1, self.population)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GenerationStats {
    pub generation: usize,
    /// Mean return of the elite set.
    pub elite_mean: f64,
    pub best_return: f64,
    pub population_mean: f64,
    /// Noise scale used for this generation.
    pub std: f64,
}

#[derive(Debug, Clone)]
pub struct Cem {
    config: CemConfig,
    mean: Vec<f64>,
    std: f64,
    generation: usize,
    rng: ChaCha8Rng,
    best: Option<(Vec<f64>, f64)>,
    converged: bool,
}

impl Cem {
    pub fn new(init: Vec<f64>, config: CemConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            std: config.init_std,
            rng: rng_from_seed(config.seed),
            config,
            mean: init,
            generation: 0,
            best: None,
            converged: false,
        })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    /// Set once a generation after the first scored every candidate the same.
    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Best single candidate seen so far and its return.
    pub fn best(&self) -> Option<(&[f64], f64)> {
        self.best.as_ref().map(|(p, r)| (p.as_slice(), *r))
    }

    /// Candidates for the next generation; the first is the current mean.
    pub fn ask(&mut self) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.config.population);
        out.push(self.mean.clone());
        for _ in 1..self.config.population {
            let candidate = self
                .mean
                .iter()
                .map(|m| {
                    let z: f64 = self.rng.sample(StandardNormal);
                    m + self.std * z
                })
                .collect();
            out.push(candidate);
        }
        out
    }

    /// Consumes the returns of the candidates from [`Cem::ask`].
    ///
    /// Fails when every candidate of the first generation scored exactly the
    /// same, which means the objective does not depend on the parameters. A
    /// later tie is a plateau the population has converged onto; the update
    /// still happens and [`Cem::converged`] turns true.
    pub fn tell(&mut self, candidates: &[Vec<f64>], returns: &[f64]) -> Result<GenerationStats> {
        if candidates.len() != returns.len() || candidates.is_empty() {
            return Err(Error::Optimizer(format!(
                "{} candidates but {} returns",
                candidates.len(),
                returns.len()
            )));
        }
        let score = |r: f64| if r.is_nan() { f64::NEG_INFINITY } else { r };
        let lo = returns.iter().copied().map(score).fold(f64::INFINITY, f64::min);
        let hi = returns.iter().copied().map(score).fold(f64::NEG_INFINITY, f64::max);
        if lo == hi && self.generation == 0 {
            return Err(Error::Optimizer(format!(
                "all {} candidates returned {hi} in generation {}; the objective ignores the policy",
                returns.len(),
                self.generation
            )));
        }

        self.converged = lo == hi;

        let mut order: Vec<usize> = (0..returns.len()).collect();
        // Stable sort keeps ties in candidate order, which keeps runs reproducible.
        order.sort_by(|&a, &b| score(returns[b]).total_cmp(&score(returns[a])));
        let elite = &order[..self.config.elite_count().min(order.len())];

        let dim = self.mean.len();
        let mut next = alloc::vec![0.0; dim];
        for &i in elite {
            for (n, p) in next.iter_mut().zip(&candidates[i]) {
                *n += p;
            }
        }
        for n in &mut next {
            *n /= elite.len() as f64;
        }
        let elite_mean = elite.iter().map(|&i| score(returns[i])).sum::<f64>() / elite.len() as f64;
        let best_idx = order[0];
        let best_return = score(returns[best_idx]);
        if self.best.as_ref().is_none_or(|(_, r)| best_return > *r) {
            self.best = Some((candidates[best_idx].clone(), best_return));
        }
        let stats = GenerationStats {
            generation: self.generation,
            elite_mean,
            best_return,
            population_mean: returns.iter().copied().map(score).sum::<f64>() / returns.len() as f64,
            std: self.std,
        };
        self.mean = next;
        self.std = (self.std * self.config.std_decay).max(self.config.min_std);
        self.generation += 1;
        Ok(stats)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(p: &[f64]) -> f64 {
        -p.iter().map(|x| (x - 1.5) * (x - 1.5)).sum::<f64>()
    }

    #[test]
    fn converges_on_a_quadratic() {
        let mut cem = Cem::new(alloc::vec![0.0; 4], CemConfig::default()).unwrap();
        for _ in 0..60 {
            let cands = cem.ask();
            let rets: Vec<f64> = cands.iter().map(|c| sphere(c)).collect();
            cem.tell(&cands, &rets).unwrap();
        }
        assert!(sphere(cem.mean()) > -0.05, "{:?}", cem.mean());
    }

    #[test]
    fn flat_objective_is_an_error() {
        let mut cem = Cem::new(alloc::vec![0.0; 3], CemConfig::default()).unwrap();
        let cands = cem.ask();
        let rets = alloc::vec![0.25; cands.len()];
        assert!(matches!(cem.tell(&cands, &rets), Err(Error::Optimizer(_))));
    }

    #[test]
    fn later_plateau_ends_the_run() {
        let mut cem = Cem::new(alloc::vec![0.0; 3], CemConfig::default()).unwrap();
        let cands = cem.ask();
        let rets: Vec<f64> = cands.iter().map(|c| sphere(c)).collect();
        cem.tell(&cands, &rets).unwrap();
        assert!(!cem.converged());
        let cands = cem.ask();
        let rets = alloc::vec![0.25; cands.len()];
        assert!(cem.tell(&cands, &rets).is_ok());
        assert!(cem.converged());
        assert_eq!(cem.generation(), 2);
    }

    #[test]
    fn seeded_runs_repeat() {
        let run = || {
            let mut cem = Cem::new(alloc::vec![0.0; 2], CemConfig::default()).unwrap();
            let cands = cem.ask();
            let rets: Vec<f64> = cands.iter().map(|c| sphere(c)).collect();
            cem.tell(&cands, &rets).unwrap();
            cem.mean().to_vec()
        };
        assert_eq!(run(), run());
    }
}
