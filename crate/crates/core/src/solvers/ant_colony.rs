use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::instance::{cycle_length, Tour, TspInstance};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcoConfig {
    pub ant_num: usize,
    /// Pheromone evaporation rate.
    pub rho: f64,
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for AcoConfig {
    fn default() -> Self {
        AcoConfig {
            ant_num: 8,
            rho: 0.5,
            alpha: 1.0,
            beta: 2.0,
            iterations: 200,
            seed: 0,
        }
    }
}

impl AcoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ant_num == 0 {
            return Err(Error::Config("ACO needs at least one ant".into()));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Config(format!("ACO evaporation {} outside (0, 1)", self.rho)));
        }
        Ok(())
    }
}

/// Ant System: each iteration every ant builds a tour edge by edge with
/// probability proportional to `tau^alpha * (1/d)^beta`; trails then
/// evaporate and each ant deposits `1/L` on its edges. Pheromone starts
/// at `1 / (n * L_nn)`. Returns the best tour seen, the nearest-neighbor
/// tour included.
pub fn solve_ant_colony(instance: &TspInstance, cfg: &AcoConfig) -> Result<Tour> {
    cfg.validate()?;
    let n = instance.n();
    let dist = instance.distance_matrix();
    let nn = super::exact::nearest_neighbor(n, &dist);
    let tau0 = 1.0 / (n as f64 * cycle_length(instance, &nn).max(f64::MIN_POSITIVE));
    let mut tau = vec![tau0; n * n];
    // coincident cities get a large but finite attractiveness
    let eta: Vec<f64> = dist.iter().map(|&d| 1.0 / d.max(1e-12)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut best = Tour {
        length: cycle_length(instance, &nn),
        order: nn,
    };
    let mut weights = vec![0.0; n];
    let mut tours: Vec<(Vec<usize>, f64)> = Vec::with_capacity(cfg.ant_num);
    for _ in 0..cfg.iterations {
        tours.clear();
        for _ in 0..cfg.ant_num {
            let mut visited = vec![false; n];
            let mut cur = rng.gen_range(0..n);
            visited[cur] = true;
            let mut order = vec![cur];
            for _ in 1..n {
                let mut total = 0.0;
                for j in 0..n {
                    weights[j] = if visited[j] {
                        0.0
                    } else {
                        tau[cur * n + j].powf(cfg.alpha) * eta[cur * n + j].powf(cfg.beta)
                    };
                    total += weights[j];
                }
                let next = if total > 0.0 && total.is_finite() {
                    let mut r = rng.gen::<f64>() * total;
                    let mut pick = None;
                    for (j, &w) in weights.iter().enumerate() {
                        if w > 0.0 {
                            pick = Some(j);
                            if r < w {
                                break;
                            }
                            r -= w;
                        }
                    }
                    pick.unwrap()
                } else {
                    (0..n).find(|&j| !visited[j]).unwrap()
                };
                visited[next] = true;
                order.push(next);
                cur = next;
            }
            let len = cycle_length(instance, &order);
            tours.push((order, len));
        }
        for t in tau.iter_mut() {
            *t *= 1.0 - cfg.rho;
        }
        for (order, len) in &tours {
            let deposit = 1.0 / len.max(f64::MIN_POSITIVE);
            for k in 0..n {
                let (a, b) = (order[k], order[(k + 1) % n]);
                tau[a * n + b] += deposit;
                tau[b * n + a] += deposit;
            }
            if *len < best.length {
                best = Tour {
                    order: order.clone(),
                    length: *len,
                };
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate_instance, validate_tour, Bounds};

    #[test]
    fn square_is_solved() {
        let sq = TspInstance::new("sq", vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        let t = solve_ant_colony(&sq, &AcoConfig { iterations: 10, ..Default::default() }).unwrap();
        assert!((t.length - 4.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_and_valid() {
        for seed in 0..5 {
            let inst = generate_instance(10, seed, Bounds::default()).unwrap();
            let cfg = AcoConfig { iterations: 30, seed, ..Default::default() };
            let a = solve_ant_colony(&inst, &cfg).unwrap();
            assert_eq!(a, solve_ant_colony(&inst, &cfg).unwrap());
            assert!(validate_tour(&inst, &a.order).is_valid());
        }
    }

    #[test]
    fn coincident_cities_are_handled() {
        let inst = TspInstance::new("c", vec![[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]).unwrap();
        let t = solve_ant_colony(&inst, &AcoConfig { iterations: 5, ..Default::default() }).unwrap();
        assert!(validate_tour(&inst, &t.order).is_valid());
    }

    #[test]
    fn rejects_bad_config() {
        let inst = generate_instance(5, 0, Bounds::default()).unwrap();
        assert!(solve_ant_colony(&inst, &AcoConfig { rho: 1.0, ..Default::default() }).is_err());
        assert!(solve_ant_colony(&inst, &AcoConfig { ant_num: 0, ..Default::default() }).is_err());
    }
}
