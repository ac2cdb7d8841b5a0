use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::instance::{cycle_length, Tour, TspInstance};
use crate::{Error, Result};

const TOURNAMENT_SIZE: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population: usize,
    pub crossover_rate: f64,
    /// Per-gene probability of a swap with a random position.
    pub mutation_rate: f64,
    pub generations: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 300,
            crossover_rate: 0.85,
            mutation_rate: 0.02,
            generations: 500,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::Config("GA population must be at least 2".into()));
        }
        for (name, r) in [("crossover", self.crossover_rate), ("mutation", self.mutation_rate)] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Config(format!("GA {name} rate {r} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Order crossover: copy a random slice of `a`, fill the rest in `b`'s order.
fn order_crossover(a: &[usize], b: &[usize], rng: &mut impl Rng) -> Vec<usize> {
    let n = a.len();
    let (mut lo, mut hi) = (rng.gen_range(0..n), rng.gen_range(0..n));
    if lo > hi {
        std::mem::swap(&mut lo, &mut hi);
    }
    let mut child = vec![usize::MAX; n];
    let mut taken = vec![false; n];
    for k in lo..=hi {
        child[k] = a[k];
        taken[a[k]] = true;
    }
    let mut fill = b.iter().cycle().skip(hi + 1).filter(|&&c| !taken[c]);
    for k in (hi + 1..n).chain(0..lo) {
        child[k] = *fill.next().unwrap();
    }
    child
}

fn swap_mutation(tour: &mut [usize], rate: f64, rng: &mut impl Rng) {
    let n = tour.len();
    for i in 0..n {
        if rng.gen_bool(rate) {
            let j = rng.gen_range(0..n);
            tour.swap(i, j);
        }
    }
}

/// Genetic algorithm: tournament selection, order crossover, swap
/// mutation, one elite carried over per generation.
pub fn solve_genetic(instance: &TspInstance, cfg: &GaConfig) -> Result<Tour> {
    cfg.validate()?;
    let n = instance.n();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut pop: Vec<(Vec<usize>, f64)> = (0..cfg.population)
        .map(|_| {
            let mut t: Vec<usize> = (0..n).collect();
            t.shuffle(&mut rng);
            let len = cycle_length(instance, &t);
            (t, len)
        })
        .collect();

    let best_of = |pop: &[(Vec<usize>, f64)]| {
        pop.iter()
            .enumerate()
            .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .map(|(i, _)| i)
            .unwrap()
    };
    let tournament = |pop: &[(Vec<usize>, f64)], rng: &mut ChaCha8Rng| {
        (0..TOURNAMENT_SIZE)
            .map(|_| rng.gen_range(0..pop.len()))
            .min_by(|&a, &b| pop[a].1.total_cmp(&pop[b].1))
            .unwrap()
    };

    for _ in 0..cfg.generations {
        let elite = best_of(&pop);
        let mut next = Vec::with_capacity(cfg.population);
        next.push(pop[elite].clone());
        while next.len() < cfg.population {
            let a = tournament(&pop, &mut rng);
            let mut child = if rng.gen_bool(cfg.crossover_rate) {
                let b = tournament(&pop, &mut rng);
                order_crossover(&pop[a].0, &pop[b].0, &mut rng)
            } else {
                pop[a].0.clone()
            };
            swap_mutation(&mut child, cfg.mutation_rate, &mut rng);
            let len = cycle_length(instance, &child);
            next.push((child, len));
        }
        pop = next;
    }
    let (order, length) = pop.swap_remove(best_of(&pop));
    Ok(Tour { order, length })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate_instance, validate_tour, Bounds};
    use proptest::prelude::*;

    #[test]
    fn square_is_solved() {
        let sq = TspInstance::new("sq", vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        let cfg = GaConfig {
            generations: 20,
            population: 20,
            ..Default::default()
        };
        assert!((solve_genetic(&sq, &cfg).unwrap().length - 4.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_per_seed() {
        let inst = generate_instance(10, 3, Bounds::default()).unwrap();
        let cfg = GaConfig {
            generations: 50,
            seed: 9,
            ..Default::default()
        };
        assert_eq!(solve_genetic(&inst, &cfg).unwrap(), solve_genetic(&inst, &cfg).unwrap());
    }

    #[test]
    fn rejects_bad_config() {
        let inst = generate_instance(5, 3, Bounds::default()).unwrap();
        let bad = GaConfig {
            crossover_rate: 1.5,
            ..Default::default()
        };
        assert!(solve_genetic(&inst, &bad).is_err());
        let tiny = GaConfig {
            population: 1,
            ..Default::default()
        };
        assert!(solve_genetic(&inst, &tiny).is_err());
    }

    proptest! {
        #[test]
        fn crossover_yields_permutation(seed in any::<u64>(), n in 2usize..15) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut a: Vec<usize> = (0..n).collect();
            let mut b = a.clone();
            a.shuffle(&mut rng);
            b.shuffle(&mut rng);
            let mut child = order_crossover(&a, &b, &mut rng);
            swap_mutation(&mut child, 0.3, &mut rng);
            child.sort_unstable();
            prop_assert_eq!(child, (0..n).collect::<Vec<_>>());
        }

        #[test]
        fn result_is_valid(seed in 0u64..50) {
            let inst = generate_instance(8, seed, Bounds::default()).unwrap();
            let cfg = GaConfig { generations: 10, population: 30, seed, ..Default::default() };
            let t = solve_genetic(&inst, &cfg).unwrap();
            prop_assert!(validate_tour(&inst, &t.order).is_valid());
        }
    }
}
