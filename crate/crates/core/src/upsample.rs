//! Feature-space upsamplers mapping `N×C` features to `rN×C`.
//!
//! Output rows `[i·r, (i+1)·r)` are always the children of input point `i`.

use std::fmt;
use std::str::FromStr;

use crate::error::{dim_err, Error, Result};
use crate::geometry::NeighborIndex;
use crate::graph::{EdgeConv, Initializer, Linear};
use crate::tensor::{BoundParams, ParamId, ParamStore, Tape, Var};

/// Width of the per-replica code appended by [`Upsampler::Duplicate`].
pub const REPLICA_CODE_WIDTH: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum UpsamplerKind {
    #[default]
    NodeShuffle,
    MlpShuffle,
    Duplicate,
}

impl UpsamplerKind {
    pub const ALL: [UpsamplerKind; 3] = [Self::NodeShuffle, Self::MlpShuffle, Self::Duplicate];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::NodeShuffle => "nodeshuffle",
            Self::MlpShuffle => "mlpshuffle",
            Self::Duplicate => "duplicate",
        }
    }
}

impl fmt::Display for UpsamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UpsamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nodeshuffle" | "node_shuffle" => Ok(Self::NodeShuffle),
            "mlpshuffle" | "mlp_shuffle" => Ok(Self::MlpShuffle),
            "duplicate" => Ok(Self::Duplicate),
            other => Err(Error::Config(format!(
                "unknown upsampler `{other}` (expected nodeshuffle, mlpshuffle or duplicate)"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Upsampler {
    /// EdgeConv `C → r·C`, then periodic shuffle.
    NodeShuffle { expand: EdgeConv, ratio: usize },
    /// Per-point `relu(linear(C → r·C))`, then periodic shuffle.
    MlpShuffle { expand: Linear, ratio: usize },
    /// `r` copies of each point, each tagged with a learned code and
    /// compressed back to `C` channels.
    Duplicate {
        codes: ParamId,
        compress: Linear,
        ratio: usize,
    },
}

impl Upsampler {
    pub fn new(
        kind: UpsamplerKind,
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        channels: usize,
        ratio: usize,
    ) -> Result<Self> {
        if ratio == 0 || channels == 0 {
            return Err(Error::Config(format!(
                "upsampler needs positive ratio and width, got r={ratio}, C={channels}"
            )));
        }
        Ok(match kind {
            UpsamplerKind::NodeShuffle => Self::NodeShuffle {
                expand: EdgeConv::new(store, init, &format!("{name}.expand"), channels, ratio * channels),
                ratio,
            },
            UpsamplerKind::MlpShuffle => Self::MlpShuffle {
                expand: Linear::new(store, init, &format!("{name}.expand"), channels, ratio * channels),
                ratio,
            },
            UpsamplerKind::Duplicate => Self::Duplicate {
                codes: store.add(
                    format!("{name}.codes"),
                    init.glorot(&[ratio, REPLICA_CODE_WIDTH], ratio, REPLICA_CODE_WIDTH),
                ),
                compress: Linear::new(
                    store,
                    init,
                    &format!("{name}.compress"),
                    channels + REPLICA_CODE_WIDTH,
                    channels,
                ),
                ratio,
            },
        })
    }

    pub fn kind(&self) -> UpsamplerKind {
        match self {
            Self::NodeShuffle { .. } => UpsamplerKind::NodeShuffle,
            Self::MlpShuffle { .. } => UpsamplerKind::MlpShuffle,
            Self::Duplicate { .. } => UpsamplerKind::Duplicate,
        }
    }

    pub fn ratio(&self) -> usize {
        match *self {
            Self::NodeShuffle { ratio, .. } | Self::MlpShuffle { ratio, .. } | Self::Duplicate { ratio, .. } => ratio,
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            Self::NodeShuffle { expand, .. } => expand.cin,
            Self::MlpShuffle { expand, .. } => expand.cin,
            Self::Duplicate { compress, .. } => compress.cout,
        }
    }

    /// Expands `x[N×C]` to `rN×C`. `nbrs` is only read by NodeShuffle.
    pub fn forward(&self, tape: &mut Tape, p: &BoundParams, x: Var, nbrs: &NeighborIndex) -> Result<Var> {
        let (n, c) = tape.value(x).matrix_dims("upsample")?;
        if c != self.channels() {
            return Err(dim_err(
                "upsample",
                format!("{} upsampler built for C={}, got {:?}", self.kind(), self.channels(), tape.value(x).shape()),
            ));
        }
        let r = self.ratio();
        match self {
            Self::NodeShuffle { expand, .. } => {
                let y = expand.forward(tape, p, x, nbrs)?;
                tape.periodic_shuffle(y, r)
            }
            Self::MlpShuffle { expand, .. } => {
                let y = expand.forward_relu(tape, p, x)?;
                tape.periodic_shuffle(y, r)
            }
            Self::Duplicate { codes, compress, .. } => {
                let copies = vec![x; r];
                let wide = tape.concat_channels(&copies)?;
                let replicas = tape.periodic_shuffle(wide, r)?;
                let code_row = tape.reshape(p.var(*codes), &[1, r * REPLICA_CODE_WIDTH])?;
                let code_rows = tape.tile_rows(code_row, n)?;
                let tags = tape.periodic_shuffle(code_rows, r)?;
                let tagged = tape.concat_channels(&[replicas, tags])?;
                compress.forward_relu(tape, p, tagged)
            }
        }
    }
}
