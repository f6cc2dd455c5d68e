//! Stand-ins for the learned components: depth completion, normal
//! estimation, point embedding and the pose decoders.

mod checkpoint;
mod decoder;
mod embedding;
mod sources;
mod train;

pub use checkpoint::{
    checkpoint_bytes, load_checkpoint, parse_checkpoint, save_checkpoint, CheckpointHeader, TensorInfo,
};
pub use decoder::{DecoderInput, DecoderOutput, LinearDecoder, INPUT_WIDTH, MIN_EXTENT, OUTPUT_WIDTH, PARAM_COUNT};
pub use embedding::{reference_embedding, Embedding, PointEmbedding, CONCAT_WIDTH, GLOBAL_WIDTH, POINT_WIDTH};
pub use sources::{DepthCompleter, NoisyDepth, NoisyNormals, NormalEstimator, OracleDepth, OracleNormals, RawDepth};
pub use train::{train_reference, EpochRecord, TrainConfig, TrainOutcome, TrainingSample};
