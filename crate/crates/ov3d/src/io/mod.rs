//! On-disk formats and the embedding-provider abstraction.

pub mod manifests;
pub mod ply;
pub mod provider;
pub mod validate;

pub use manifests::{
    load_boxes2d, load_boxes3d, load_boxes3d_collection, load_calibration, load_descriptions,
    load_embedding_manifest, load_index, load_vocab, save_boxes2d, save_boxes3d, save_calibration,
    save_descriptions, save_embedding_manifest, save_index, save_vocab, Box2dManifest,
    Box3dManifest, Box3dRecord, DatasetIndex, DescriptionManifest, EmbeddingEntry,
    EmbeddingManifest, SCHEMA_VERSION,
};
pub use ply::{load_cloud, load_ply, load_xyz, save_ply, save_xyz};
pub use provider::{load_embeddings, ProviderConfig};
pub use validate::{validate_dataset, Severity, Violation};
