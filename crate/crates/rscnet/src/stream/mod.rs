//! Edge-to-cloud runtime split: the edge process windows and encodes live
//! CSI and transmits framed compressed windows over a reliable byte
//! stream; the cloud process maintains per-session recurrent state,
//! reconstructs every window, classifies completed samples, and accounts
//! transport overhead.

mod cloud;
mod edge;
mod frame;

pub use cloud::{CloudRuntime, CloudSink, MemorySink, OverheadReport, Prediction, SessionState};
pub use edge::{edge_run, EdgeReport, FrameSource, SampleSource};
pub use frame::{
    decode_frame, encode_frame, FrameReader, WireFrame, FRAME_HEADER_LEN, FRAME_TRAILER_LEN,
    MAX_PAYLOAD_FLOATS, WIRE_MAGIC, WIRE_VERSION,
};
