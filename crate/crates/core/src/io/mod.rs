//! On-disk formats: PMAP probability maps, P5 PGM masks, JSON manifests and
//! run reports.

mod manifest;
mod pgm;
mod pmap;
mod report;

pub use manifest::{load_dataset, write_dataset, DatasetManifest, ManifestEntry};
pub use pgm::{decode_mask, encode_mask, read_mask, write_mask, DEFECT_THRESHOLD};
pub use pmap::{
    decode_probability_map, encode_probability_map, read_probability_map, write_probability_map, PMAP_MAGIC,
};
pub use report::{
    read_json_report, render_report, report_to_csv, report_to_json, write_report, ReportFormat, RunParameters,
    RunReport, TOOL_NAME, TOOL_VERSION,
};
