//! TSP instances, tours and the world-to-pixel coordinate mapping.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Axis-aligned sampling region for random instances.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            min_x: 0.0,
            min_y: 0.0,
            max_x: 1.0,
            max_y: 1.0,
        }
    }
}

impl Bounds {
    pub fn center(&self) -> [f64; 2] {
        [
            0.5 * (self.min_x + self.max_x),
            0.5 * (self.min_y + self.max_y),
        ]
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (self.min_x..=self.max_x).contains(&p[0]) && (self.min_y..=self.max_y).contains(&p[1])
    }

    fn validate(&self) -> Result<()> {
        let ok = [self.min_x, self.min_y, self.max_x, self.max_y]
            .iter()
            .all(|v| v.is_finite())
            && self.max_x > self.min_x
            && self.max_y > self.min_y;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInstance(format!("degenerate bounds {self:?}")))
        }
    }
}

/// A set of cities in the plane, optionally with a known optimal tour.
///
/// Serialized as one JSON object per line:
/// `{"id", "coords": [[x,y],...], "tour": [...]?, "length": f64?}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInstance")]
pub struct TspInstance {
    pub id: String,
    coords: Vec<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tour: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
}

#[derive(Deserialize)]
struct RawInstance {
    id: String,
    coords: Vec<[f64; 2]>,
    #[serde(default)]
    tour: Option<Vec<usize>>,
    #[serde(default)]
    length: Option<f64>,
}

impl TryFrom<RawInstance> for TspInstance {
    type Error = Error;

    fn try_from(raw: RawInstance) -> Result<Self> {
        let mut inst = TspInstance::new(raw.id, raw.coords)?;
        if let Some(order) = raw.tour {
            validate_tour(&inst, &order).into_result()?;
            inst.tour = Some(order);
        }
        inst.length = raw.length;
        Ok(inst)
    }
}

impl TspInstance {
    pub fn new(id: impl Into<String>, coords: Vec<[f64; 2]>) -> Result<Self> {
        if coords.len() < 3 {
            return Err(Error::InvalidInstance(format!(
                "need at least 3 cities, got {}",
                coords.len()
            )));
        }
        if let Some(i) = coords.iter().position(|c| !c[0].is_finite() || !c[1].is_finite()) {
            return Err(Error::InvalidInstance(format!(
                "city {i} has non-finite coordinates"
            )));
        }
        Ok(TspInstance {
            id: id.into(),
            coords,
            tour: None,
            length: None,
        })
    }

    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.coords[i], self.coords[j]);
        (a[0] - b[0]).hypot(a[1] - b[1])
    }

    /// Dense row-major `n x n` distance matrix.
    pub fn distance_matrix(&self) -> Vec<f64> {
        let n = self.n();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = self.distance(i, j);
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        d
    }

    /// Attaches a known optimal tour.
    pub fn with_solution(mut self, tour: &Tour) -> Self {
        self.tour = Some(tour.order.clone());
        self.length = Some(tour.length);
        self
    }

    pub fn known_tour(&self) -> Option<Tour> {
        let order = self.tour.as_ref()?;
        Tour::new(self, order.clone()).ok()
    }
}

/// A closed tour: a visiting order over all cities and its cycle length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tour {
    pub order: Vec<usize>,
    pub length: f64,
}

impl Tour {
    pub fn new(instance: &TspInstance, order: Vec<usize>) -> Result<Self> {
        let length = tour_length(instance, &order)?;
        Ok(Tour { order, length })
    }

    /// Rotates the cycle so it starts at `city`.
    pub fn rotated_to(mut self, city: usize) -> Self {
        if let Some(pos) = self.order.iter().position(|&c| c == city) {
            self.order.rotate_left(pos);
        }
        self
    }
}

/// Length of the closed cycle through `order`.
pub fn tour_length(instance: &TspInstance, order: &[usize]) -> Result<f64> {
    validate_tour(instance, order).into_result()?;
    Ok(cycle_length(instance, order))
}

pub(crate) fn cycle_length(instance: &TspInstance, order: &[usize]) -> f64 {
    let n = order.len();
    (0..n)
        .map(|k| instance.distance(order[k], order[(k + 1) % n]))
        .sum()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TourVerdict {
    Valid,
    WrongLength { expected: usize, got: usize },
    OutOfRange(usize),
    Duplicate(usize),
    Missing(usize),
}

impl TourVerdict {
    pub fn is_valid(&self) -> bool {
        *self == TourVerdict::Valid
    }

    pub fn into_result(self) -> Result<()> {
        match self {
            TourVerdict::Valid => Ok(()),
            other => Err(Error::InvalidTour(other.to_string())),
        }
    }
}

impl std::fmt::Display for TourVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TourVerdict::Valid => write!(f, "valid"),
            TourVerdict::WrongLength { expected, got } => {
                write!(f, "wrong length: expected {expected} cities, got {got}")
            }
            TourVerdict::OutOfRange(c) => write!(f, "city {c} out of range"),
            TourVerdict::Duplicate(c) => write!(f, "duplicate city {c}"),
            TourVerdict::Missing(c) => write!(f, "missing city {c}"),
        }
    }
}

/// Checks that `order` visits every city exactly once.
pub fn validate_tour(instance: &TspInstance, order: &[usize]) -> TourVerdict {
    let n = instance.n();
    if order.len() > n {
        return TourVerdict::WrongLength {
            expected: n,
            got: order.len(),
        };
    }
    let mut seen = vec![false; n];
    for &c in order {
        if c >= n {
            return TourVerdict::OutOfRange(c);
        }
        if seen[c] {
            return TourVerdict::Duplicate(c);
        }
        seen[c] = true;
    }
    match seen.iter().position(|s| !s) {
        Some(c) => TourVerdict::Missing(c),
        None => TourVerdict::Valid,
    }
}

/// `n` cities drawn i.i.d. uniformly from `bounds`.
pub fn generate_instance(n: usize, seed: u64, bounds: Bounds) -> Result<TspInstance> {
    if n < 3 {
        return Err(Error::InvalidInstance(format!(
            "need at least 3 cities, got {n}"
        )));
    }
    bounds.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords = (0..n)
        .map(|_| {
            [
                rng.gen_range(bounds.min_x..bounds.max_x),
                rng.gen_range(bounds.min_y..bounds.max_y),
            ]
        })
        .collect();
    TspInstance::new(format!("n{n}-s{seed}"), coords)
}

/// Per-item seed derived from a base seed (splitmix64 finalizer).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// City positions on a `w x h` image grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelCoords {
    pub points: Vec<[f64; 2]>,
    pub w: usize,
    pub h: usize,
    /// All cities share one x (resp. y); placed on the centerline.
    pub degenerate_x: bool,
    pub degenerate_y: bool,
}

impl PixelCoords {
    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate_x || self.degenerate_y
    }

    /// Integer pixel of city `i`: fractional part truncated, clamped so a
    /// city at exactly `w` (or `h`) lands on the last column (row).
    pub fn pixel(&self, i: usize) -> (usize, usize) {
        let [x, y] = self.points[i];
        (
            to_pixel(x, self.w),
            to_pixel(y, self.h),
        )
    }

    /// City pairs that share an integer pixel.
    pub fn collisions(&self) -> Vec<(usize, usize)> {
        let mut first: HashMap<(usize, usize), usize> = HashMap::new();
        let mut out = Vec::new();
        for i in 0..self.n() {
            let p = self.pixel(i);
            match first.get(&p) {
                Some(&j) => out.push((j, i)),
                None => {
                    first.insert(p, i);
                }
            }
        }
        out
    }

    pub fn has_collision(&self) -> bool {
        !self.collisions().is_empty()
    }
}

pub(crate) fn to_pixel(v: f64, extent: usize) -> usize {
    (v.max(0.0).trunc() as usize).min(extent - 1)
}

/// Maps world coordinates onto a `w x h` grid so the extremes land on
/// `0` and `w` (resp. `h`).
pub fn normalize(instance: &TspInstance, w: usize, h: usize) -> Result<PixelCoords> {
    if w < 2 || h < 2 {
        return Err(Error::Config(format!("image must be at least 2x2, got {w}x{h}")));
    }
    let axis = |k: usize, extent: usize| -> (Vec<f64>, bool) {
        let vals = instance.coords.iter().map(|c| c[k]);
        let lo = vals.clone().fold(f64::INFINITY, f64::min);
        let hi = vals.fold(f64::NEG_INFINITY, f64::max);
        let extent = extent as f64;
        if hi == lo {
            (vec![extent / 2.0; instance.n()], true)
        } else {
            let mapped = instance
                .coords
                .iter()
                .map(|c| (c[k] - lo) / (hi - lo) * extent)
                .collect();
            (mapped, false)
        }
    };
    let (xs, degenerate_x) = axis(0, w);
    let (ys, degenerate_y) = axis(1, h);
    Ok(PixelCoords {
        points: xs.into_iter().zip(ys).map(|(x, y)| [x, y]).collect(),
        w,
        h,
        degenerate_x,
        degenerate_y,
    })
}

pub fn read_jsonl(path: &Path) -> Result<Vec<TspInstance>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let inst = serde_json::from_str(&line)
            .map_err(|e| Error::malformed(path, format!("line {}: {e}", lineno + 1)))?;
        out.push(inst);
    }
    Ok(out)
}

pub fn write_jsonl(path: &Path, instances: &[TspInstance]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for inst in instances {
        serde_json::to_writer(&mut w, inst)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn square() -> TspInstance {
        TspInstance::new("sq", vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap()
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_instance(10, 1, Bounds::default()).unwrap();
        let b = generate_instance(10, 1, Bounds::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn generated_points_stay_in_bounds() {
        let bounds = Bounds {
            min_x: -5.0,
            min_y: 2.0,
            max_x: 3.0,
            max_y: 4.0,
        };
        let inst = generate_instance(3, 7, bounds).unwrap();
        assert_eq!(inst.n(), 3);
        assert!(inst.coords().iter().all(|&c| bounds.contains(c)));
    }

    #[test]
    fn generation_rejects_tiny_instances() {
        assert!(matches!(
            generate_instance(2, 0, Bounds::default()),
            Err(Error::InvalidInstance(_))
        ));
    }

    #[test]
    fn uniform_sampler_mean_is_centered() {
        let bounds = Bounds {
            min_x: 10.0,
            min_y: -20.0,
            max_x: 30.0,
            max_y: 20.0,
        };
        let (mut sx, mut sy, mut count) = (0.0, 0.0, 0.0);
        for k in 1..=100 {
            for c in generate_instance(10, k, bounds).unwrap().coords() {
                sx += c[0];
                sy += c[1];
                count += 1.0;
            }
        }
        let [cx, cy] = bounds.center();
        // 5% of each side's extent around the center.
        assert!((sx / count - cx).abs() < 0.05 * 20.0);
        assert!((sy / count - cy).abs() < 0.05 * 40.0);
    }

    #[test]
    fn square_perimeter() {
        assert_eq!(tour_length(&square(), &[0, 1, 2, 3]).unwrap(), 4.0);
    }

    #[test]
    fn triangle_orientations_match() {
        let t = TspInstance::new("t", vec![[0.0, 0.0], [3.0, 0.0], [0.0, 4.0]]).unwrap();
        let a = tour_length(&t, &[0, 1, 2]).unwrap();
        let b = tour_length(&t, &[0, 2, 1]).unwrap();
        assert_eq!(a, 12.0);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn length_matches_pairwise_recomputation() {
        let inst = generate_instance(6, 42, Bounds::default()).unwrap();
        let order = [3, 0, 5, 1, 4, 2];
        let c = inst.coords();
        let mut oracle = 0.0;
        for k in 0..6 {
            let (a, b) = (c[order[k]], c[order[(k + 1) % 6]]);
            oracle += ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        }
        let got = tour_length(&inst, &order).unwrap();
        assert!((got - oracle).abs() <= 1e-12 * oracle);
    }

    #[test]
    fn verdicts() {
        let sq = square();
        assert_eq!(validate_tour(&sq, &[0, 1, 2, 3]), TourVerdict::Valid);
        assert_eq!(validate_tour(&sq, &[0, 1, 1, 3]), TourVerdict::Duplicate(1));
        assert_eq!(validate_tour(&sq, &[0, 1, 2]), TourVerdict::Missing(3));
        assert_eq!(validate_tour(&sq, &[0, 1, 2, 9]), TourVerdict::OutOfRange(9));
        assert!(matches!(
            validate_tour(&sq, &[0, 1, 2, 3, 0]),
            TourVerdict::WrongLength { .. }
        ));
        assert!(matches!(tour_length(&sq, &[0, 0, 1, 2]), Err(Error::InvalidTour(_))));
    }

    #[test]
    fn normalize_maps_extremes() {
        let inst = TspInstance::new("a", vec![[10.0, 10.0], [20.0, 30.0], [15.0, 12.0]]).unwrap();
        let p = normalize(&inst, 224, 224).unwrap();
        assert_eq!(p.points[0], [0.0, 0.0]);
        assert_eq!(p.points[1], [224.0, 224.0]);
        assert!(!p.is_degenerate());
        assert_eq!(p.pixel(1), (223, 223));
    }

    #[test]
    fn normalize_degenerate_axis_is_centered() {
        let inst = TspInstance::new("v", vec![[5.0, 0.0], [5.0, 3.0], [5.0, 9.0]]).unwrap();
        let p = normalize(&inst, 64, 32).unwrap();
        assert!(p.degenerate_x && !p.degenerate_y);
        assert!(p.points.iter().all(|q| q[0] == 32.0));
    }

    #[test]
    fn normalized_random_instance_spans_grid() {
        let inst = generate_instance(12, 5, Bounds::default()).unwrap();
        let p = normalize(&inst, 200, 100).unwrap();
        let min_x = p.points.iter().map(|q| q[0]).fold(f64::INFINITY, f64::min);
        let max_x = p.points.iter().map(|q| q[0]).fold(f64::NEG_INFINITY, f64::max);
        let max_y = p.points.iter().map(|q| q[1]).fold(f64::NEG_INFINITY, f64::max);
        assert!(min_x.abs() < 1e-9);
        assert!((max_x - 200.0).abs() < 1e-9);
        assert!((max_y - 100.0).abs() < 1e-9);
    }

    #[test]
    fn jsonl_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("i.jsonl");
        let sq = square();
        let tour = Tour::new(&sq, vec![0, 1, 2, 3]).unwrap();
        let insts = vec![sq.clone().with_solution(&tour), generate_instance(5, 3, Bounds::default()).unwrap()];
        write_jsonl(&path, &insts).unwrap();
        assert_eq!(read_jsonl(&path).unwrap(), insts);

        let bad = r#"{"id":"x","coords":[[0,0],[1,1]]}"#;
        assert!(serde_json::from_str::<TspInstance>(bad).is_err());
        let bad_tour = r#"{"id":"x","coords":[[0,0],[1,1],[2,0]],"tour":[0,0,1]}"#;
        assert!(serde_json::from_str::<TspInstance>(bad_tour).is_err());
    }

    proptest! {
        #[test]
        fn normalize_is_affine_invariant(
            seed in 0u64..1000,
            scale in 0.01f64..100.0,
            dx in -1e3f64..1e3,
            dy in -1e3f64..1e3,
        ) {
            let inst = generate_instance(8, seed, Bounds::default()).unwrap();
            let moved: Vec<[f64; 2]> = inst.coords().iter().map(|c| [scale * c[0] + dx, scale * c[1] + dy]).collect();
            let moved = TspInstance::new("m", moved).unwrap();
            let a = normalize(&inst, 224, 224).unwrap();
            let b = normalize(&moved, 224, 224).unwrap();
            for (p, q) in a.points.iter().zip(&b.points) {
                prop_assert!((p[0] - q[0]).abs() < 1e-9 && (p[1] - q[1]).abs() < 1e-9);
            }
        }

        #[test]
        fn length_is_rotation_and_reversal_invariant(seed in 0u64..1000, shift in 0usize..9) {
            let inst = generate_instance(9, seed, Bounds::default()).unwrap();
            let order: Vec<usize> = (0..9).collect();
            let mut rotated = order.clone();
            rotated.rotate_left(shift);
            let reversed: Vec<usize> = order.iter().rev().copied().collect();
            let base = tour_length(&inst, &order).unwrap();
            prop_assert!((tour_length(&inst, &rotated).unwrap() - base).abs() < 1e-12);
            prop_assert!((tour_length(&inst, &reversed).unwrap() - base).abs() < 1e-12);
        }

        #[test]
        fn generation_reproducible(n in 3usize..20, seed in any::<u64>()) {
            prop_assert_eq!(
                generate_instance(n, seed, Bounds::default()).unwrap(),
                generate_instance(n, seed, Bounds::default()).unwrap()
            );
        }
    }
}
