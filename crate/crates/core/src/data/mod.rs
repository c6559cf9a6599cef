// SPDX-License-Identifier: Apache-2.0

//! File formats and in-memory records exchanged by every other module.

mod container;
mod dump;
mod labels;
mod manifest;
mod records;

pub use container::{Tensor, TensorContainer, CONTAINER_ALIGN, CONTAINER_MAGIC};
pub use dump::{DumpSet, HiddenStateDump, DEFAULT_LAYERS};
pub use labels::{LabelId, LabelSpace, INVALID_LABEL};
pub use manifest::{LogPath, Manifest, PairSpec};
pub use records::{
    align_logs, load_prediction_log, parse_prediction_line, parse_prediction_log,
    record_to_json_line, write_prediction_log, Alignment, LineError, PairedPredictions,
    PredictionLog, PredictionRecord,
};
