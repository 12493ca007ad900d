//! Library side of the `hdrforge` command: run configuration, dataset
//! curation and manifests, and the desk-scale training experiment.

pub mod config;
pub mod curate;
pub mod experiment;
