//! Micro placement instances: movable rectangular cells, nets and a bin grid.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("cannot read instance {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed instance: {0}")]
    Parse(String),
    #[error("invalid instance: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub id: String,
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroPlacementInstance {
    pub name: String,
    pub cells: Vec<Cell>,
    /// Each net lists cell indices.
    pub nets: Vec<Vec<usize>>,
    pub layout_width: f64,
    pub layout_height: f64,
    pub bins_x: usize,
    pub bins_y: usize,
    pub target_density: f64,
    pub target_overflow: f64,
    /// Seed the instance was generated from.
    pub seed: u64,
    /// Interleaved cell centres `[x0, y0, x1, y1, ...]`.
    pub initial_positions: Vec<f64>,
}

impl MicroPlacementInstance {
    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn bin_width(&self) -> f64 {
        self.layout_width / self.bins_x as f64
    }

    pub fn bin_height(&self) -> f64 {
        self.layout_height / self.bins_y as f64
    }

    pub fn total_cell_area(&self) -> f64 {
        self.cells.iter().map(|c| c.w * c.h).sum()
    }

    pub fn max_net_size(&self) -> usize {
        self.nets.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        let n = self.cells.len();
        let bad = |m: String| Err(InstanceError::Invalid(m));
        if n == 0 {
            return bad("no cells".into());
        }
        if !(self.layout_width > 0.0 && self.layout_height > 0.0) {
            return bad("layout must have positive size".into());
        }
        if self.bins_x == 0 || self.bins_y == 0 {
            return bad("bin grid must be non-empty".into());
        }
        if !(self.target_density > 0.0 && self.target_density <= 1.0) {
            return bad(format!("target density {} outside (0, 1]", self.target_density));
        }
        if !(self.target_overflow >= 0.0) {
            return bad(format!("target overflow {} is negative", self.target_overflow));
        }
        for (i, c) in self.cells.iter().enumerate() {
            if !(c.w > 0.0 && c.h > 0.0) || c.w > self.layout_width || c.h > self.layout_height {
                return bad(format!("cell {i} has invalid size {}x{}", c.w, c.h));
            }
        }
        for (e, net) in self.nets.iter().enumerate() {
            if net.len() < 2 {
                return bad(format!("net {e} has fewer than 2 cells"));
            }
            if let Some(&c) = net.iter().find(|&&c| c >= n) {
                return bad(format!("net {e} references cell {c} of {n}"));
            }
        }
        let capacity = self.target_density * self.layout_width * self.layout_height;
        if self.total_cell_area() > capacity {
            return bad(format!(
                "cell area {} exceeds target density capacity {capacity}",
                self.total_cell_area()
            ));
        }
        if self.initial_positions.len() != 2 * n || self.initial_positions.iter().any(|v| !v.is_finite()) {
            return bad("initial positions must be 2 finite coordinates per cell".into());
        }
        Ok(())
    }

    /// Moves every centre so its cell lies inside the layout.
    pub fn clamp_positions(&self, positions: &mut [f64]) {
        for (i, c) in self.cells.iter().enumerate() {
            let (hx, hy) = (c.w / 2.0, c.h / 2.0);
            positions[2 * i] = positions[2 * i].clamp(hx, self.layout_width - hx);
            positions[2 * i + 1] = positions[2 * i + 1].clamp(hy, self.layout_height - hy);
        }
    }
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<MicroPlacementInstance, InstanceError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| InstanceError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let instance: MicroPlacementInstance =
        serde_json::from_str(&text).map_err(|e| InstanceError::Parse(e.to_string()))?;
    instance.validate()?;
    Ok(instance)
}

pub fn save_instance(instance: &MicroPlacementInstance, path: impl AsRef<Path>) -> Result<(), InstanceError> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(instance).expect("instances serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| InstanceError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceParams {
    pub cells: usize,
    pub nets: usize,
    pub min_net: usize,
    pub max_net: usize,
    pub grid: usize,
    pub bin_size: f64,
    pub cell_size: (f64, f64),
    pub target_density: f64,
    pub target_overflow: f64,
    /// Standard deviation of the initial spread around the centre, as a
    /// fraction of the layout width.
    pub initial_spread: f64,
}

impl Default for InstanceParams {
    fn default() -> Self {
        Self {
            cells: 100,
            nets: 60,
            min_net: 2,
            max_net: 5,
            grid: 8,
            bin_size: 4.0,
            cell_size: (1.0, 3.0),
            target_density: 0.9,
            target_overflow: 0.10,
            initial_spread: 0.03,
        }
    }
}

pub const REFERENCE_SEED: u64 = 20_250_917;

/// Random instance: integer-sized cells started in a tight cluster at the
/// layout centre, nets of random size over distinct cells.
pub fn generate_instance(name: &str, params: &InstanceParams, seed: u64) -> MicroPlacementInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = params.grid as f64 * params.bin_size;
    let (lo, hi) = params.cell_size;
    let cells: Vec<Cell> = (0..params.cells)
        .map(|i| Cell {
            id: format!("c{i}"),
            w: rng.random_range(lo as u32..=hi as u32) as f64,
            h: rng.random_range(lo as u32..=hi as u32) as f64,
        })
        .collect();
    let nets: Vec<Vec<usize>> = (0..params.nets)
        .map(|_| {
            let size = rng.random_range(params.min_net..=params.max_net);
            let mut members: Vec<usize> = rand::seq::index::sample(&mut rng, params.cells, size).into_vec();
            members.sort_unstable();
            members
        })
        .collect();
    let spread = Normal::new(0.0, params.initial_spread * side).expect("positive spread");
    let mut initial_positions = Vec::with_capacity(2 * params.cells);
    for _ in 0..params.cells {
        initial_positions.push(side / 2.0 + spread.sample(&mut rng));
        initial_positions.push(side / 2.0 + spread.sample(&mut rng));
    }
    let mut instance = MicroPlacementInstance {
        name: name.to_string(),
        cells,
        nets,
        layout_width: side,
        layout_height: side,
        bins_x: params.grid,
        bins_y: params.grid,
        target_density: params.target_density,
        target_overflow: params.target_overflow,
        seed,
        initial_positions: Vec::new(),
    };
    instance.clamp_positions(&mut initial_positions);
    instance.initial_positions = initial_positions;
    instance
}

/// The 100-cell, 60-net, 8x8-bin reference instance.
pub fn reference_instance() -> MicroPlacementInstance {
    generate_instance("micro100", &InstanceParams::default(), REFERENCE_SEED)
}

/// The shipped copy of the reference instance.
pub const REFERENCE_INSTANCE_JSON: &str = include_str!("../../data/micro100.json");

pub fn shipped_reference_instance() -> MicroPlacementInstance {
    serde_json::from_str(REFERENCE_INSTANCE_JSON).expect("shipped instance parses")
}
