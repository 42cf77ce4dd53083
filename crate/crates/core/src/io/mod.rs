//! File formats, run descriptions and the mask-to-distance conversion.

mod container;
mod edt;
mod obj;
mod report;
mod scenario;
mod vox;

pub use container::{
    decode_basis, decode_mlp, encode_basis, encode_mlp, grid_header, read_basis, read_mlp, write_basis, write_mlp,
};
pub use edt::{interface_distance_transform, signed_distance_transform};
pub use obj::{obj_string, parse_obj, read_obj, write_obj};
pub use report::{read_report, write_report, MetricsRecord};
pub use scenario::{
    build_scenario, build_shape, parse_scenario, parse_scenario_file, parse_scenario_str, scenario_to_string,
    sdf_volume_field, write_scenario, ComponentSpec, ConstraintSpec, FitSpec, Scenario, ScenarioFile, SceneSpec,
    ShapeSpec,
};
pub use vox::{
    decode_vox, encode_mask, encode_sdf, read_mask, read_sdf, read_vox, write_mask, write_sdf, SdfVolume, Volume,
    VolumeHeader, VolumeKind, VoxelMask,
};

pub(crate) use edt::check_mask;
