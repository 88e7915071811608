//! Synthetic bin: a heightfield world of parametric objects, an orthographic
//! depth + shaded-color renderer, and a geometric suction-seal oracle.

mod objects;
mod observation;
mod oracle;
mod scene;

pub use objects::{Archetype, ObjectKind, ObjectSet, Shape, KNOWN_KINDS, UNSEEN_KINDS};
pub use observation::{surface_normal, Observation, ObservationHeader};
pub use oracle::{suction_oracle, OracleParams, PickCause, PickOutcome};
pub use scene::{generate_scene, DepthScene, ObjectInstance, SceneConfig, NO_OBJECT};
