//! File formats: models, tensors, labels, configs and reports.

mod dataset;
mod model_file;
mod report;
mod tensor_file;

pub use dataset::{
    evaluate_topk, in_top_k, labels_for, load_calibration, load_labels, load_tensor_dir, tensor_files,
};
pub use model_file::{decode_model, encode_model, load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use report::{load_config, ReportFile, TOOLKIT_NAME, TOOLKIT_VERSION};
pub use tensor_file::{
    decode_tensor, encode_tensor, load_tensor, save_tensor, TENSOR_EXTENSION, TENSOR_MAGIC,
};
