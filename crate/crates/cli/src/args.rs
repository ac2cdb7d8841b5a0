//! Argument groups shared by several subcommands.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use tspfcn::net::{load_checkpoint, ArchConfig, FcnModel};
use tspfcn::raster::{RenderConfig, RenderMode};
use tspfcn::solvers::Algorithm;

use crate::Usage;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// 224x224, large city squares
    Full,
    /// 64x64, small city squares
    Desk,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    FullGraph,
    Scatter,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Arch {
    Full,
    Desk,
    Tiny,
}

impl Arch {
    pub fn config(self) -> ArchConfig {
        match self {
            Arch::Full => ArchConfig::full(),
            Arch::Desk => ArchConfig::desk(),
            Arch::Tiny => ArchConfig::tiny(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Algo {
    Exh,
    Dp,
    Bb,
    Ga,
    Aco,
}

impl From<Algo> for Algorithm {
    fn from(a: Algo) -> Self {
        match a {
            Algo::Exh => Algorithm::Exh,
            Algo::Dp => Algorithm::Dp,
            Algo::Bb => Algorithm::Bb,
            Algo::Ga => Algorithm::Ga,
            Algo::Aco => Algorithm::Aco,
        }
    }
}

#[derive(Clone, Debug, Default, Args)]
pub struct RenderArgs {
    /// Resolution and city size preset
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Input rendering: full graph or cities only
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Square image side in pixels, overriding the preset
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub city_halfwidth: Option<usize>,
    #[arg(long)]
    pub label_halfwidth: Option<usize>,
}

impl RenderArgs {
    /// Applies the flags on top of `base`.
    pub fn apply(&self, base: RenderConfig) -> RenderConfig {
        let mut cfg = match self.preset {
            Some(Preset::Full) => RenderConfig::full(),
            Some(Preset::Desk) => RenderConfig::desk(),
            None => base,
        };
        if let Some(s) = self.size {
            cfg.width = s;
            cfg.height = s;
        }
        if let Some(m) = self.mode {
            cfg.mode = match m {
                Mode::FullGraph => RenderMode::FullGraph,
                Mode::Scatter => RenderMode::Scatter,
            };
        }
        if let Some(c) = self.city_halfwidth {
            cfg.city_halfwidth = c;
        }
        if let Some(l) = self.label_halfwidth {
            cfg.label_line_halfwidth = l;
        }
        cfg
    }
}

/// Base render config for a model taking `size`-pixel images.
pub fn render_for_size(size: usize) -> RenderConfig {
    let base = if size >= 224 { RenderConfig::full() } else { RenderConfig::desk() };
    RenderConfig {
        width: size,
        height: size,
        ..base
    }
}

#[derive(Clone, Debug, Default, Args)]
pub struct PredictorArgs {
    /// Trained network checkpoint
    #[arg(long, conflicts_with = "oracle_passthrough")]
    pub checkpoint: Option<PathBuf>,
    /// Use rendered optimal-tour labels in place of network output
    #[arg(long)]
    pub oracle_passthrough: bool,
}

impl PredictorArgs {
    pub fn is_set(&self) -> bool {
        self.checkpoint.is_some() || self.oracle_passthrough
    }

    pub fn require(&self) -> Result<(), Usage> {
        if self.is_set() {
            Ok(())
        } else {
            Err(Usage("pass --checkpoint or --oracle-passthrough".into()))
        }
    }

    pub fn load(&self) -> anyhow::Result<Option<FcnModel<f32>>> {
        Ok(match &self.checkpoint {
            Some(p) => Some(load_checkpoint::<f32>(p)?),
            None => None,
        })
    }
}

/// A list of counts given as `4..12` (inclusive), `4,6,8` or one number.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Counts(pub Vec<usize>);

pub fn parse_counts(s: &str) -> Result<Counts, String> {
    parse_list(s).map(Counts)
}

pub fn parse_list(s: &str) -> Result<Vec<usize>, String> {
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("`{t}` is not a count"));
    if let Some((a, b)) = s.split_once("..") {
        let (lo, hi) = (num(a)?, num(b.trim_start_matches('='))?);
        if lo > hi {
            return Err(format!("empty range {s}"));
        }
        return Ok((lo..=hi).collect());
    }
    s.split(',').map(num).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_and_ranges() {
        assert_eq!(parse_list("4..7").unwrap(), vec![4, 5, 6, 7]);
        assert_eq!(parse_list("4..=5").unwrap(), vec![4, 5]);
        assert_eq!(parse_list("1,3, 10").unwrap(), vec![1, 3, 10]);
        assert_eq!(parse_list("9").unwrap(), vec![9]);
        assert!(parse_list("7..4").is_err());
        assert!(parse_list("x").is_err());
    }

    #[test]
    fn render_flags_override_the_base() {
        let args = RenderArgs {
            mode: Some(Mode::Scatter),
            size: Some(96),
            ..Default::default()
        };
        let cfg = args.apply(RenderConfig::desk());
        assert_eq!((cfg.width, cfg.height, cfg.city_halfwidth), (96, 96, 1));
        assert_eq!(cfg.mode, RenderMode::Scatter);
        assert_eq!(render_for_size(224), RenderConfig::full());
    }
}
