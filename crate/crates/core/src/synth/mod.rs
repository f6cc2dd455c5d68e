//! Synthetic transparent-object scenes.
//!
//! Objects are analytic primitives standing on a table. Depth, normals and
//! instance masks come from exact ray casting; the raw sensor depth is the
//! ground truth passed through a [`CorruptionModel`] inside the objects.

mod corrupt;
mod dataset;
mod scene;
mod shapes;
mod templates;

pub(crate) use corrupt::SmoothField;
pub use corrupt::{corrupt_depth, CorruptionModel};
pub use dataset::{
    compute_priors, frame_file_names, read_dataset_meta, read_frame, write_dataset, write_dataset_meta, write_frame,
    DatasetMeta, FileRecord, FrameData, FrameEntry, Manifest,
};
pub use scene::{
    generate_scene, look_at, render, render_annotations, CameraRig, ExplicitInstance, InstanceAnnotation, Placed,
    RenderLayers, SceneConfig, SceneFrame, TablePlane, MAX_INSTANCES,
};
pub use shapes::{Hit, Primitive, Shape};
pub use templates::{ObjectTemplate, TemplateLibrary};
