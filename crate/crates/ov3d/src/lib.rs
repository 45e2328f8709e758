//! Open-vocabulary 3D detection toolkit.
//!
//! The non-neural core of a foundation-model-blended 3D detection
//! pipeline: lifting 2D detection boxes into clustered 3D pseudo-labels,
//! oriented-box IoU, localization and cross-modal contrastive losses with
//! analytic gradients, prompt vocabulary machinery, mAP/AR evaluation,
//! and a synthetic scene generator that provides exact ground truth.
//! Foundation models (detectors, LLMs, CLIP) live outside the crate and
//! communicate through manifest files.

pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod lifting;
pub mod losses;
pub mod parallel;
pub mod prompts;
pub mod rng;
pub mod scene;
pub mod synth;

pub use error::{Error, Result};
pub use scene::{Box2D, Box3D, CameraModel, ClassVocabulary, PointCloud, Scene};
