//! On-disk datasets:
//!
//! ```text
//! manifest.json        count, n, seed, render config
//! instances.jsonl      one instance per line with its DP-optimal tour
//! images/{id}.png      network input (RGB)
//! labels/{id}.png      path class as 8-bit grayscale, 255 = path
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::instance::{derive_seed, generate_instance, read_jsonl, write_jsonl, Bounds, TspInstance};
use crate::net::Sample;
use crate::par::{self, Execution};
use crate::raster::{load_mask_png, load_png_sized, render_image, render_label, save_mask_png, save_png, RenderConfig};
use crate::solvers::solve_dp;
use crate::{Error, Result};

pub const MANIFEST: &str = "manifest.json";
pub const INSTANCES: &str = "instances.jsonl";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub count: usize,
    pub n: usize,
    pub seed: u64,
    pub render: RenderConfig,
}

/// A generated instance with its rendered input and label.
#[derive(Clone, Debug)]
pub struct Item {
    pub instance: TspInstance,
    pub sample: Sample,
}

/// `count` seeded instances of `n` cities, each solved exactly and
/// rendered. Item `k` uses seed `derive_seed(seed, k)`.
pub fn generate(n: usize, count: usize, seed: u64, render: &RenderConfig, exec: Execution) -> Result<Vec<Item>> {
    render.validate()?;
    let items = par::map_range(exec, count, |k| -> Result<Item> {
        let base = generate_instance(n, derive_seed(seed, k as u64), Bounds::default())?;
        let mut instance = TspInstance::new(format!("n{n}-{k:05}"), base.coords().to_vec())?;
        let tour = solve_dp(&instance)?;
        instance = instance.with_solution(&tour);
        let sample = Sample {
            id: instance.id.clone(),
            image: render_image(&instance, render)?,
            label: render_label(&instance, &tour, render)?,
        };
        Ok(Item { instance, sample })
    });
    items.into_iter().collect()
}

pub fn write(dir: &Path, manifest: &DatasetManifest, items: &[Item]) -> Result<()> {
    for sub in ["images", "labels"] {
        let d = dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let instances: Vec<TspInstance> = items.iter().map(|it| it.instance.clone()).collect();
    write_jsonl(&dir.join(INSTANCES), &instances)?;
    for it in items {
        save_png(&it.sample.image, &image_path(dir, &it.instance.id))?;
        save_mask_png(&it.sample.label, &label_path(dir, &it.instance.id))?;
    }
    let path = dir.join(MANIFEST);
    let json = serde_json::to_string_pretty(manifest)?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
}

pub fn image_path(dir: &Path, id: &str) -> PathBuf {
    dir.join("images").join(format!("{id}.png"))
}

pub fn label_path(dir: &Path, id: &str) -> PathBuf {
    dir.join("labels").join(format!("{id}.png"))
}

/// A dataset directory with its manifest and instances loaded.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
    pub instances: Vec<TspInstance>,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| Error::malformed(&path, e))?;
        let instances = read_jsonl(&root.join(INSTANCES))?;
        if instances.len() != manifest.count {
            return Err(Error::malformed(
                root.join(INSTANCES),
                format!("{} instances, manifest says {}", instances.len(), manifest.count),
            ));
        }
        Ok(Dataset {
            root: root.to_path_buf(),
            manifest,
            instances,
        })
    }

    /// Loads images and labels of every instance, checking dimensions
    /// against the manifest.
    pub fn samples(&self) -> Result<Vec<Sample>> {
        let (w, h) = (self.manifest.render.width, self.manifest.render.height);
        self.instances
            .iter()
            .map(|inst| {
                let image = load_png_sized(&image_path(&self.root, &inst.id), w, h)?;
                let lp = label_path(&self.root, &inst.id);
                let label = load_mask_png(&lp)?;
                if (label.width(), label.height()) != (w, h) {
                    return Err(Error::Shape(format!("{} is not {w}x{h}", lp.display())));
                }
                Ok(Sample {
                    id: inst.id.clone(),
                    image,
                    label,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::solve_exhaustive;

    #[test]
    fn write_then_open_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let render = RenderConfig::desk();
        let items = generate(6, 5, 3, &render, Execution::Sequential).unwrap();
        let manifest = DatasetManifest { count: 5, n: 6, seed: 3, render };
        write(dir.path(), &manifest, &items).unwrap();
        let ds = Dataset::open(dir.path()).unwrap();
        assert_eq!(ds.manifest, manifest);
        assert_eq!(ds.instances.len(), 5);
        let samples = ds.samples().unwrap();
        for (s, it) in samples.iter().zip(&items) {
            assert_eq!(s.image, it.sample.image);
            assert_eq!(s.label, it.sample.label);
        }
        for inst in &ds.instances {
            let exact = solve_exhaustive(inst).unwrap();
            assert!((inst.length.unwrap() - exact.length).abs() < 1e-9);
        }
    }

    #[test]
    fn generation_is_deterministic_and_parallel_safe() {
        let render = RenderConfig::desk();
        let a = generate(7, 4, 9, &render, Execution::Sequential).unwrap();
        let b = generate(7, 4, 9, &render, Execution::Parallel).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.instance, y.instance);
            assert_eq!(x.sample.image, y.sample.image);
        }
        assert_eq!(a[2].instance.id, "n7-00002");
    }

    #[test]
    fn count_mismatch_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let render = RenderConfig::desk();
        let items = generate(5, 2, 1, &render, Execution::Sequential).unwrap();
        let manifest = DatasetManifest { count: 3, n: 5, seed: 1, render };
        write(dir.path(), &manifest, &items).unwrap();
        assert!(matches!(Dataset::open(dir.path()), Err(Error::Malformed { .. })));
    }
}
