//! Synthetic tactile images, the indentation dataset and the contact
//! localisation model.

mod clm;
mod dataset;
mod decode;
mod render;

pub use clm::{clm_mae, clm_predict, holdout_labels, train_clm, ClmHyperparams, ClmModel};
pub use dataset::{
    generate_clm_dataset, load_dataset, press_depths, read_frame, save_dataset, write_frame, ClmDatasetSpec,
    ClmSample,
};
pub use decode::oracle_decode;
pub use render::{
    contact_visible, heat_rows, total_displacement, DeformationField, MarkerLayout, RenderConfig, Renderer,
};

/// Peak heat above which a frame is taken to show a contact.
pub const CONTACT_THRESHOLD: f64 = 0.15;
