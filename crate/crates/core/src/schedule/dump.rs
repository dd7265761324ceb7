use serde::{Deserialize, Serialize};

use super::cost::{BShape, CostModel};
use super::{FusedSchedule, FusedTile, SchedulerConfig};
use crate::{Result, SparseMatrixCsr};

/// JSON form of a schedule, with the cost of every tile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleDump {
    pub n: usize,
    pub tile_size_t: usize,
    pub wavefronts: Vec<Vec<TileDump>>,
    pub fused_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileDump {
    pub i_lo: usize,
    pub i_hi: usize,
    pub j_list: Vec<usize>,
    pub cost: usize,
}

impl ScheduleDump {
    pub fn new<T>(schedule: &FusedSchedule, a: &SparseMatrixCsr<T>, b: BShape<'_>, config: &SchedulerConfig) -> Self {
        let mut model = CostModel::new(a, b, config);
        let wavefronts = schedule
            .wavefronts
            .iter()
            .map(|tiles| {
                tiles
                    .iter()
                    .map(|t| TileDump {
                        i_lo: t.i_lo,
                        i_hi: t.i_hi,
                        j_list: t.j_list.clone(),
                        cost: model.cost(t),
                    })
                    .collect()
            })
            .collect();
        Self {
            n: schedule.n,
            tile_size_t: schedule.tile_size,
            wavefronts,
            fused_ratio: schedule.fused_ratio(),
        }
    }

    pub fn to_schedule(&self) -> FusedSchedule {
        FusedSchedule {
            n: self.n,
            tile_size: self.tile_size_t,
            wavefronts: self
                .wavefronts
                .iter()
                .map(|tiles| {
                    tiles
                        .iter()
                        .map(|t| FusedTile::new(t.i_lo..t.i_hi, t.j_list.clone()))
                        .collect()
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
