//! The assembled upsampling network.
//!
//! embedding EdgeConv → Inception DenseGCN blocks → feature bottleneck →
//! upsampler → two compression layers → two-layer coordinate regressor.

mod checkpoint;

use std::fmt::Write as _;

pub use checkpoint::{load_checkpoint, load_checkpoint_as, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::graph::{BranchGraphs, EdgeConv, Inception, Initializer, Linear};
use crate::tensor::{BoundParams, ParamStore, Tape, Var};
use crate::upsample::{Upsampler, UpsamplerKind};

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub ratio: usize,
    pub num_inception: usize,
    pub upsampler: UpsamplerKind,
    pub embed_width: usize,
    pub bottleneck: usize,
    pub growth: usize,
    pub feature_width: usize,
    pub compress_width: usize,
    pub recon_width: usize,
    pub k: usize,
    pub dilations: (usize, usize),
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            ratio: 4,
            num_inception: 2,
            upsampler: UpsamplerKind::NodeShuffle,
            embed_width: 32,
            bottleneck: 32,
            growth: 32,
            feature_width: 32,
            compress_width: 32,
            recon_width: 32,
            k: 20,
            dilations: (1, 2),
        }
    }
}

impl ModelConfig {
    /// Small widths and `k = 4`, for finite-difference checks on tiny clouds.
    pub fn reduced() -> Self {
        Self {
            embed_width: 8,
            bottleneck: 8,
            growth: 8,
            feature_width: 8,
            compress_width: 8,
            recon_width: 8,
            k: 4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let widths = [
            ("ratio", self.ratio),
            ("num_inception", self.num_inception),
            ("embed_width", self.embed_width),
            ("bottleneck", self.bottleneck),
            ("growth", self.growth),
            ("feature_width", self.feature_width),
            ("compress_width", self.compress_width),
            ("recon_width", self.recon_width),
            ("k", self.k),
            ("dilations", self.dilations.0.min(self.dilations.1)),
        ];
        for (name, v) in widths {
            if v == 0 {
                return Err(Error::Config(format!("model {name} must be at least 1")));
            }
        }
        Ok(())
    }

    /// Fewest input points the neighbor graphs can be built on.
    pub fn min_points(&self) -> usize {
        self.k * self.dilations.0.max(self.dilations.1) + 1
    }

    /// Applies one `key = value` setting; `Ok(false)` for keys that are not
    /// model settings.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let num = |v: &str| -> Result<usize> {
            v.trim()
                .parse()
                .map_err(|e| Error::Config(format!("{key} = `{v}`: {e}")))
        };
        match key {
            "ratio" => self.ratio = num(value)?,
            "num_inception" => self.num_inception = num(value)?,
            "upsampler" => self.upsampler = value.trim().parse()?,
            "embed_width" => self.embed_width = num(value)?,
            "bottleneck" => self.bottleneck = num(value)?,
            "growth" => self.growth = num(value)?,
            "feature_width" => self.feature_width = num(value)?,
            "compress_width" => self.compress_width = num(value)?,
            "recon_width" => self.recon_width = num(value)?,
            "k" => self.k = num(value)?,
            "dilations" => {
                let parts: Vec<&str> = value.split(',').collect();
                if parts.len() != 2 {
                    return Err(Error::Config(format!("dilations = `{value}`: expected two values like `1,2`")));
                }
                self.dilations = (num(parts[0])?, num(parts[1])?);
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// `key = value` lines accepted back by [`ModelConfig::from_text`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "ratio = {}", self.ratio);
        let _ = writeln!(s, "num_inception = {}", self.num_inception);
        let _ = writeln!(s, "upsampler = {}", self.upsampler);
        let _ = writeln!(s, "embed_width = {}", self.embed_width);
        let _ = writeln!(s, "bottleneck = {}", self.bottleneck);
        let _ = writeln!(s, "growth = {}", self.growth);
        let _ = writeln!(s, "feature_width = {}", self.feature_width);
        let _ = writeln!(s, "compress_width = {}", self.compress_width);
        let _ = writeln!(s, "recon_width = {}", self.recon_width);
        let _ = writeln!(s, "k = {}", self.k);
        let _ = writeln!(s, "dilations = {},{}", self.dilations.0, self.dilations.1);
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected `key = value`, found `{line}`")))?;
            if !cfg.set(k.trim(), v)? {
                return Err(Error::Config(format!("unknown model setting `{}`", k.trim())));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Layer layout of the network; the weights live in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub embed: EdgeConv,
    pub blocks: Vec<Inception>,
    pub up_bottleneck: Linear,
    pub upsampler: Upsampler,
    pub compress1: Linear,
    pub compress2: Linear,
    pub recon1: Linear,
    pub recon2: Linear,
}

/// Builds the layout for `cfg` and Glorot-initializes its weights from `seed`.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<(Model, ParamStore)> {
    cfg.validate()?;
    let mut store = ParamStore::new();
    let mut init = Initializer::new(seed);
    let embed = EdgeConv::new(&mut store, &mut init, "embed", 3, cfg.embed_width);
    let mut width = cfg.embed_width;
    let mut blocks = Vec::with_capacity(cfg.num_inception);
    for b in 0..cfg.num_inception {
        let block = Inception::new(
            &mut store,
            &mut init,
            &format!("inception{}", b + 1),
            width,
            cfg.bottleneck,
            cfg.growth,
            cfg.k,
            cfg.dilations,
        );
        width = block.cout();
        blocks.push(block);
    }
    let up_bottleneck = Linear::new(&mut store, &mut init, "up_bottleneck", width, cfg.feature_width);
    let upsampler = Upsampler::new(
        cfg.upsampler,
        &mut store,
        &mut init,
        "upsampler",
        cfg.feature_width,
        cfg.ratio,
    )?;
    let compress1 = Linear::new(&mut store, &mut init, "compress1", cfg.feature_width, cfg.compress_width);
    let compress2 = Linear::new(&mut store, &mut init, "compress2", cfg.compress_width, cfg.compress_width);
    let recon1 = Linear::new(&mut store, &mut init, "recon1", cfg.compress_width, cfg.recon_width);
    let recon2 = Linear::new(&mut store, &mut init, "recon2", cfg.recon_width, 3);
    let model = Model {
        config: cfg.clone(),
        embed,
        blocks,
        up_bottleneck,
        upsampler,
        compress1,
        compress2,
        recon1,
        recon2,
    };
    Ok((model, store))
}

/// Total number of scalar parameters.
pub fn param_count(params: &ParamStore) -> usize {
    params.scalar_count()
}

impl Model {
    pub fn ratio(&self) -> usize {
        self.config.ratio
    }

    /// The same weights with a different neighbor count; layer shapes do
    /// not depend on `k`.
    pub fn with_k(&self, k: usize) -> Model {
        let mut m = self.clone();
        m.config.k = k;
        for block in &mut m.blocks {
            block.branch1.k = k;
            block.branch2.k = k;
        }
        m
    }

    /// Neighbor graphs over the input coordinates, shared by every layer.
    pub fn graphs(&self, cloud: &PointCloud) -> Result<BranchGraphs> {
        let need = self.config.min_points();
        if cloud.len() < need {
            return Err(Error::Argument(format!(
                "model with k={} and dilations {:?} needs at least {need} points, got {}",
                self.config.k,
                self.config.dilations,
                cloud.len()
            )));
        }
        BranchGraphs::build(cloud, self.config.k, self.config.dilations)
    }

    /// `N×3` coordinates to `rN×3`; the children of point `i` are rows
    /// `[i·r, (i+1)·r)`.
    pub fn forward(&self, tape: &mut Tape, p: &BoundParams, cloud: &PointCloud) -> Result<Var> {
        let graphs = self.graphs(cloud)?;
        let x = tape.constant(cloud.to_tensor());
        self.forward_with(tape, p, x, &graphs)
    }

    /// Forward from a coordinate variable with prebuilt graphs.
    pub fn forward_with(&self, tape: &mut Tape, p: &BoundParams, coords: Var, graphs: &BranchGraphs) -> Result<Var> {
        let mut f = self.embed.forward(tape, p, coords, &graphs.near)?;
        for block in &self.blocks {
            f = block.forward_with(tape, p, f, graphs)?;
        }
        let z = self.up_bottleneck.forward_relu(tape, p, f)?;
        let u = self.upsampler.forward(tape, p, z, &graphs.near)?;
        let u = self.compress1.forward_relu(tape, p, u)?;
        let u = self.compress2.forward_relu(tape, p, u)?;
        let h = self.recon1.forward_relu(tape, p, u)?;
        self.recon2.forward(tape, p, h)
    }

    /// Inference on one cloud.
    pub fn predict(&self, params: &ParamStore, cloud: &PointCloud) -> Result<PointCloud> {
        let mut tape = Tape::new();
        let p = params.bind(&mut tape);
        let out = self.forward(&mut tape, &p, cloud)?;
        let t = tape.value(out);
        if !t.is_finite() {
            return Err(Error::NonFinite("model forward"));
        }
        PointCloud::from_tensor(t)
    }
}
