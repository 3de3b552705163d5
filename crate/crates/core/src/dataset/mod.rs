//! Paired original/MP3 training data.

pub mod codec;
pub mod fixture;
pub mod manifest;
pub mod prepare;
pub mod segment;
pub mod split;

pub use codec::{encode_decode_mp3, Bitrate, CodecConfig, CodedSignal};
pub use manifest::{Manifest, ManifestRecord, SongPair};
pub use prepare::{prepare, PrepareConfig, PrepareSummary};
pub use segment::{
    batch_iterator, segment_pairs, segment_signals, Batch, BatchIter, SegmentPair, SegmentSource,
};
pub use split::{split_dataset, Split, SplitManifest};
