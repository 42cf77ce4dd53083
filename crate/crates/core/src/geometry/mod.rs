//! Explicit surfaces: extraction, point-to-mesh distance and evaluation metrics.

mod distance;
mod marching;
mod mesh;
mod metrics;

pub use distance::{closest_point_on_triangle, point_triangle_distance, MeshIndex, NearestHit, BRUTE_FORCE_LIMIT};
pub use marching::{extract, marching_cubes, sample_lattice};
pub use mesh::{surface_area, TriangleMesh};
pub use metrics::{
    area_difference, chamfer_distance, chamfer_distance_with, contact_vertex_stats, intersection_volume,
    mesh_contact_ratio, mesh_contact_ratio_symmetric, min_pair_gap, normal_consistency, sample_surface, ChamferMode,
    ContactStats, SurfaceSample,
};
