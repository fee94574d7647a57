pub mod collect;
pub mod eval;
pub mod fusion;
pub mod ingest;
pub mod model;
pub mod predict;
pub mod quality;
pub mod store;
