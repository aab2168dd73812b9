//! Reading, preprocessing and splitting hypergraph data; model files.

pub mod dataset;
pub mod model_io;

pub use dataset::{
    format_edge_list, parse_edge_list, preprocess, read_edge_list, read_nverts_simplices, split, write_edge_list,
    DatasetSummary, HypergraphDataset, PreprocessOptions, Provenance, ReadOptions, Split, SplitSpec,
};
pub use model_io::{load_model, save_model, SavedModel};
