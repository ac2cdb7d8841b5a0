//! Tour extraction from a black/white class image.
//!
//! Each candidate edge is scored by the fraction of black pixels sampled
//! along the straight segment between its two cities. A greedy walk from a
//! departure city repeatedly takes the unvisited city with the densest
//! connecting segment; several departures are tried and the shortest
//! closed tour wins.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::instance::{cycle_length, normalize, PixelCoords, Tour, TspInstance};
use crate::par::{self, Execution};
use crate::raster::LabelMask;
use crate::{Error, Result};

/// Pixels sampled along the segment between cities `i` and `j`.
///
/// The count is the larger of the horizontal and vertical pixel-space
/// differences, rounded down. Samples `t = 1..=p` step from one endpoint
/// toward the other and are truncated to integer pixels. The walk always
/// starts at the endpoint with the smaller x (then smaller y), so the
/// result does not depend on argument order.
pub fn sample_pixels(coords: &PixelCoords, i: usize, j: usize) -> Result<Vec<(usize, usize)>> {
    let (a, b) = (coords.points[i], coords.points[j]);
    let p = (a[0] - b[0]).abs().max((a[1] - b[1]).abs()).floor() as usize;
    if p == 0 {
        return Err(Error::DegeneratePath(i, j));
    }
    let (start, end) = if a[0] < b[0] || (a[0] == b[0] && a[1] <= b[1]) {
        (a, b)
    } else {
        (b, a)
    };
    let pf = p as f64;
    Ok((1..=p)
        .map(|t| {
            let t = t as f64;
            let x = start[0] + t * (end[0] - start[0]) / pf;
            let y = start[1] + t * (end[1] - start[1]) / pf;
            (
                crate::instance::to_pixel(x, coords.w),
                crate::instance::to_pixel(y, coords.h),
            )
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Density {
    pub rho: f64,
    /// Both cities fall on the same pixel; `rho` is 1 by convention.
    pub degenerate: bool,
}

/// Fraction of black samples on the segment `i`-`j`.
pub fn path_density(mask: &LabelMask, coords: &PixelCoords, i: usize, j: usize) -> Density {
    match sample_pixels(coords, i, j) {
        Ok(samples) => {
            let black = samples.iter().filter(|&&(x, y)| mask.is_path(x, y)).count();
            Density {
                rho: black as f64 / samples.len() as f64,
                degenerate: false,
            }
        }
        Err(_) => Density {
            rho: 1.0,
            degenerate: true,
        },
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeCounters {
    pub density_evaluations: u64,
    /// Steps where more than one candidate shared the top density.
    pub density_ties: u64,
    pub degenerate_paths: u64,
}

impl DecodeCounters {
    fn absorb(&mut self, other: &DecodeCounters) {
        self.density_evaluations += other.density_evaluations;
        self.density_ties += other.density_ties;
        self.degenerate_paths += other.degenerate_paths;
    }
}

/// Greedy densest-edge walk from `departure`, closed back to it.
///
/// Ties on density go to the geometrically shorter edge, then the lower
/// city index.
pub fn greedy_tour(
    mask: &LabelMask,
    instance: &TspInstance,
    coords: &PixelCoords,
    departure: usize,
    counters: &mut DecodeCounters,
) -> Tour {
    let n = instance.n();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut current = departure;
    visited[current] = true;
    order.push(current);
    for _ in 1..n {
        // (rho, distance, index) of the best candidate so far
        let mut best: Option<(f64, f64, usize)> = None;
        let mut tied = false;
        for next in (0..n).filter(|&c| !visited[c]) {
            let d = path_density(mask, coords, current, next);
            counters.density_evaluations += 1;
            if d.degenerate {
                counters.degenerate_paths += 1;
            }
            let dist = instance.distance(current, next);
            best = match best {
                None => Some((d.rho, dist, next)),
                Some((rho, bd, bi)) => {
                    if d.rho == rho {
                        tied = true;
                    }
                    if d.rho > rho || (d.rho == rho && dist < bd) {
                        Some((d.rho, dist, next))
                    } else {
                        Some((rho, bd, bi))
                    }
                }
            };
        }
        if tied {
            counters.density_ties += 1;
        }
        let (_, _, next) = best.expect("at least one unvisited city");
        visited[next] = true;
        order.push(next);
        current = next;
    }
    let length = cycle_length(instance, &order);
    Tour { order, length }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    /// Number of departure cities; `None` uses every city once.
    pub m: Option<usize>,
    /// Problem-given start city; the result is rotated to begin there.
    pub departure: Option<usize>,
    pub seed: u64,
}

impl DecodeConfig {
    pub fn with_m(m: usize) -> Self {
        DecodeConfig {
            m: Some(m),
            ..Default::default()
        }
    }
}

/// Departure cities for `m` runs: every city once when `m == n`,
/// otherwise `m` seeded draws with repetition. Draws for a smaller `m`
/// are a prefix of those for a larger one.
pub fn departures(n: usize, m: usize, seed: u64) -> Vec<usize> {
    if m == n {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m).map(|_| rng.gen_range(0..n)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepartureRun {
    pub departure: usize,
    pub length: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub counters: DecodeCounters,
    pub runs: Vec<DepartureRun>,
    pub degenerate_normalization: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub order: Vec<usize>,
    pub length: f64,
    pub m: usize,
    pub diagnostics: Diagnostics,
}

impl Solution {
    pub fn tour(&self) -> Tour {
        Tour {
            order: self.order.clone(),
            length: self.length,
        }
    }
}

/// Multi-departure decode of a class mask.
pub fn post_process(mask: &LabelMask, instance: &TspInstance, cfg: &DecodeConfig) -> Result<Solution> {
    post_process_with(mask, instance, cfg, Execution::Sequential)
}

/// [`post_process`] with departures optionally run in parallel. The
/// minimum is reduced in departure order, so the result is identical.
pub fn post_process_with(
    mask: &LabelMask,
    instance: &TspInstance,
    cfg: &DecodeConfig,
    exec: Execution,
) -> Result<Solution> {
    let n = instance.n();
    let m = cfg.m.unwrap_or(n);
    if m == 0 {
        return Err(Error::Config("need at least one departure city".into()));
    }
    if let Some(d) = cfg.departure {
        if d >= n {
            return Err(Error::Config(format!("departure city {d} out of range")));
        }
    }
    let coords = normalize(instance, mask.width(), mask.height())?;
    let starts = departures(n, m, cfg.seed);
    let results = par::map(exec, &starts, |&s| {
        let mut c = DecodeCounters::default();
        let tour = greedy_tour(mask, instance, &coords, s, &mut c);
        (tour, c)
    });

    let mut diagnostics = Diagnostics {
        degenerate_normalization: coords.is_degenerate(),
        ..Default::default()
    };
    let mut best: Option<Tour> = None;
    for (&s, (tour, c)) in starts.iter().zip(results) {
        diagnostics.counters.absorb(&c);
        diagnostics.runs.push(DepartureRun {
            departure: s,
            length: tour.length,
        });
        if best.as_ref().is_none_or(|b| tour.length < b.length) {
            best = Some(tour);
        }
    }
    let mut best = best.expect("m >= 1");
    if let Some(d) = cfg.departure {
        best = best.rotated_to(d);
    }
    Ok(Solution {
        order: best.order,
        length: best.length,
        m,
        diagnostics,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub m: usize,
    /// Mean wall time per decoded mask, milliseconds.
    pub mean_ms: f64,
    pub density_evaluations: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingTable {
    pub rows: Vec<TimingRow>,
    /// Coefficient of determination of the least-squares line time ~ m.
    pub r_squared: f64,
}

/// Decode time per departure count over a fixed batch.
///
/// Each row is the median over `reps` passes (after one warm-up pass) of
/// the batch mean. Runs serially so timings are not disturbed.
pub fn decode_timing(
    batch: &[(LabelMask, TspInstance)],
    ms: &[usize],
    reps: usize,
    seed: u64,
) -> Result<TimingTable> {
    if batch.is_empty() {
        return Err(Error::EmptySet("decode timing batch"));
    }
    let mut rows = Vec::with_capacity(ms.len());
    for &m in ms {
        let cfg = DecodeConfig {
            m: Some(m),
            departure: None,
            seed,
        };
        let mut evaluations = 0;
        let mut samples = Vec::with_capacity(reps);
        for rep in 0..=reps {
            let start = Instant::now();
            let mut evals = 0;
            for (mask, inst) in batch {
                evals += post_process(mask, inst, &cfg)?.diagnostics.counters.density_evaluations;
            }
            let elapsed = start.elapsed().as_secs_f64() * 1e3 / batch.len() as f64;
            if rep > 0 {
                samples.push(elapsed);
            }
            evaluations = evals;
        }
        rows.push(TimingRow {
            m,
            mean_ms: median(&mut samples),
            density_evaluations: evaluations,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.m as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mean_ms).collect();
    Ok(TimingTable {
        r_squared: linear_fit_r2(&xs, &ys),
        rows,
    })
}

pub(crate) fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        0.5 * (v[k - 1] + v[k])
    }
}

/// R^2 of the ordinary least-squares line through `(xs, ys)`.
pub fn linear_fit_r2(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy * sxy / (sxx * syy)
}
