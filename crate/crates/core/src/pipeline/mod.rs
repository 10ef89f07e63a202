//! Command implementations shared by the CLI and the Python bindings.

mod commands;
pub mod explain;
pub mod layout;
pub mod manifest;
pub mod render;
pub mod synth;

pub use commands::{
    cmd_clusterize, cmd_evaluate, cmd_explain_dataset, cmd_explain_images, cmd_render, cmd_sweep,
    cmd_synth, crp_method, write_eval_report, ClassClusters, ClusterizeConfig, SweepRow, SweepSpec,
    SweepTable, DCNE_METHOD,
};
pub use explain::{ClassMaps, ExplainConfig, ImageExplanation};
pub use layout::{IndexEntry, RunIndex};
pub use manifest::{Dataset, DatasetManifest};
pub use synth::{build_detector_network, generate, SyntheticDataset, SyntheticSpec};
