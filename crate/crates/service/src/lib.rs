//! HTTP service over a data root: the labeling queue with leases and undo,
//! live predictions, class statistics and read-only access to images and
//! reports.
//!
//! [`LabelingService`] holds the logic and is usable without a server;
//! [`router`] exposes it over HTTP+JSON.

mod clock;
mod routes;
mod service;

pub use clock::{Clock, ManualClock, SystemClock};
pub use routes::{router, serve};
pub use service::{
    ApiError, CameraSummary, ClassStats, FrameDescriptor, LabelSubmission, LabelingService, NextFrame, PredictOutcome,
    QueueFilter, ServiceConfig, ServiceError, SubmitAck, UndoAck, UndoRequest, SCHEMA_VERSION,
};
