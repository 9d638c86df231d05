pub mod calibrate;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod synth;
pub mod utility;
