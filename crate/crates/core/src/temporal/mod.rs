//! Sequence windows and the recurrent classifier over per-frame fused vectors.

mod lstm;
mod predict;
mod scale;
mod store;
mod train;
mod window;

pub use lstm::{lstm_param_count, TemporalModel, TemporalSample, TemporalSpec, TEMPORAL_TOTAL_PARAMS};
pub use predict::{predict_frame_level, predict_video_level, FramePrediction, VideoPrediction};
pub use scale::FeatureScaler;
pub use store::{cache_stem, read_cache_dir, read_cached, write_cached};
pub use train::{train_temporal, video_samples, window_samples};
pub use window::{make_windows, window_count, SequenceWindow, VideoSequence, DEFAULT_WINDOW_LEN};
