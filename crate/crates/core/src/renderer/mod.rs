//! Discretized SDF volume rendering: marching, compositing, ray colors, and
//! the light-transport-segment estimators.

pub mod march;
pub mod model;
pub mod shade;
pub mod transport;

pub use march::{
    alpha_from_sdf, composited_emission, expected_emission_strength, expected_surface_point, march,
    Ray, RayMarch, Strata,
};
pub use model::SceneModel;
pub use shade::{render_ray, render_ray_backward, ColorMode, RayRender};
pub use transport::{
    decompose_illumination, incident_radiance, lhat_e, lhat_s, IlluminationBuffers, LhatEVariant,
    TransportConfig,
};
