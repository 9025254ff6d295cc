//! Frozen feature extractors, the trainable fusion head, and their plumbing.

mod adam;
mod backbone;
mod checkpoint;
mod head;
pub(crate) mod linalg;
mod params;
mod summary;
mod train;

pub use adam::{Adam, AdamConfig};
pub use backbone::{
    Backbone, BackboneSpec, ConvLayerSpec, ConvWeights, FeatureMap, PretrainTag, FEATURE_GRID, VGG16_BLOCKS,
};
pub use checkpoint::{Checkpoint, Tensor, MANIFEST_FILE, WEIGHTS_FILE};
pub use head::{BranchFeature, FusedVector, FusionHead, HeadSpec, MapSample, SharedFeature, FUSED_LEN, POOL_GRID};
pub use params::{ParamEntry, ParamLayout};
pub use summary::{
    count_params, group_thousands, FusionModelSpec, LayerSummary, ModelSummary, FUSION_TOTAL_PARAMS,
    FUSION_TRAINABLE_PARAMS,
};
pub(crate) use train::{run_epochs, single_class_warning};
pub use train::{train_fusion_head, train_head_on_maps, EpochStats, FusionModel, History, LabeledCrops, TrainConfig};
