//! Document rectification from a point cloud and a reference photograph.
//!
//! A developable quad mesh `M` in camera space and its isometric flat
//! counterpart `M'` are optimized jointly against the cloud, smoothness
//! priors, viewing-ray constraints and straight-feature constraints; the
//! reference image is then resampled through the recovered mapping.

pub mod camera;
pub mod cloud;
pub mod energy;
pub mod error;
pub mod features;
pub mod flatten;
pub mod geom;
pub mod gradcheck;
pub mod pipeline;
pub mod rectify;
pub mod solver;
pub mod subdivide;
pub mod synth;

pub use camera::{intersect_ray_mesh, CameraIntrinsics, ViewingRay};
pub use cloud::{filter_noise, Footpoint, KdTree, MeshDistanceIndex, PointCloud};
pub use energy::{
    total_objective, DistCorr, EnergyReport, FeaturePoint, FrozenData, StateLayout, WeightSchedule,
};
pub use error::{Error, Result};
pub use features::{FeatureLine, FeatureSegment, Orientation, SegmentClass};
pub use geom::{
    BarycentricAnchor, FaceIndex, GridDims, Mesh2, Mesh3, MeshPair, OrientedBox, QuadMesh, Vec2,
    Vec3,
};
pub use gradcheck::{check_all_terms, run_suite, GradcheckReport};
pub use pipeline::{Diagnostics, PipelineConfig, PipelineInputs, PipelineOutput};
pub use rectify::{displacement_error, output_region, render, Region, RegionMode, RenderOptions};
pub use solver::{minimize, minimize_traced, LbfgsOptions, LbfgsOutcome};
pub use subdivide::{remap_anchors, subdivide_mesh, subdivide_pair};
pub use synth::{sample_scene, Scene, SceneSpec, SynthBundle};
