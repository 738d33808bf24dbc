use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{
    assign_circle_ids, assign_plane_ids, dedup_circles, detect_circles, extract_planes, AffordanceKind,
    CircleAffordance, DetectionConfig, PlaneAffordance,
};
use crate::geometry::Pose;
use crate::hashing::derive_seed;
use crate::scenesim::segment::Segmenter;
use crate::scenesim::{render_with_model, CameraModel, SceneDescription, SceneError, SensorFrame};

/// One published detection result. Snapshots are immutable; a refresh
/// produces a new one with a higher revision.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AffordanceSnapshot {
    pub revision: u64,
    /// Set when the latest capture failed and the contents are carried over.
    pub stale: bool,
    pub timestamp: f64,
    pub planes: Vec<PlaneAffordance>,
    pub circles: Vec<CircleAffordance>,
    pub next_plane_id: u64,
    pub next_circle_id: u64,
}

impl AffordanceSnapshot {
    pub fn plane(&self, id: &str) -> Option<&PlaneAffordance> {
        self.planes.iter().find(|p| p.id == id)
    }

    pub fn circle(&self, id: &str) -> Option<&CircleAffordance> {
        self.circles.iter().find(|c| c.id == id)
    }

    pub fn kind_of(&self, id: &str) -> Option<AffordanceKind> {
        if self.plane(id).is_some() {
            Some(AffordanceKind::Plane)
        } else if self.circle(id).is_some() {
            Some(AffordanceKind::Circle)
        } else {
            None
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SensorError {
    #[error("sensor unavailable: {0}")]
    Unavailable(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

/// Builds the successor of `previous` from one capture. A failed capture
/// republishes the previous contents flagged stale.
pub fn refresh_snapshot(
    previous: &AffordanceSnapshot,
    capture: Result<&SensorFrame, &SensorError>,
    segmenter: &dyn Segmenter,
    config: &DetectionConfig,
) -> AffordanceSnapshot {
    let frame = match capture {
        Ok(f) => f,
        Err(_) => return AffordanceSnapshot { revision: previous.revision + 1, stale: true, ..previous.clone() },
    };
    let masks = segmenter.segment(frame);
    let segmented = SensorFrame { masks, ..frame.clone() };
    let mut next = AffordanceSnapshot {
        revision: previous.revision + 1,
        stale: false,
        timestamp: frame.timestamp,
        planes: extract_planes(&segmented, config),
        circles: dedup_circles(&detect_circles(&segmented, config), config),
        next_plane_id: previous.next_plane_id,
        next_circle_id: previous.next_circle_id,
    };
    assign_plane_ids(&mut next.planes, &previous.planes, &mut next.next_plane_id);
    assign_circle_ids(&mut next.circles, &previous.circles, config, &mut next.next_circle_id);
    next
}

pub trait SensorSource {
    fn capture(&mut self, timestamp: f64) -> Result<SensorFrame, SensorError>;
}

/// Renders the simulated scene. Capture `n` always uses the same noise
/// seed, so a sequence of captures is reproducible.
#[derive(Clone, Debug)]
pub struct SimSensor {
    pub scene: Arc<SceneDescription>,
    pub camera: Pose,
    pub model: CameraModel,
    /// Points per square meter.
    pub density: f64,
    /// Depth noise standard deviation, meters.
    pub noise_sigma: f64,
    pub seed: u64,
    pub captures: u64,
}

impl SimSensor {
    pub fn new(scene: Arc<SceneDescription>, density: f64, noise_sigma: f64, seed: u64) -> Self {
        let camera = scene.camera;
        Self { scene, camera, model: CameraModel::default(), density, noise_sigma, seed, captures: 0 }
    }

    pub fn frame(&self, index: u64, timestamp: f64) -> Result<SensorFrame, SensorError> {
        Ok(render_with_model(
            &self.scene,
            &self.camera,
            &self.model,
            self.density,
            self.noise_sigma,
            derive_seed(self.seed, "sensor", index),
            timestamp,
        )?)
    }
}

impl SensorSource for SimSensor {
    fn capture(&mut self, timestamp: f64) -> Result<SensorFrame, SensorError> {
        let frame = self.frame(self.captures, timestamp);
        self.captures += 1;
        frame
    }
}

/// Captures and publishes a snapshot every `config.refresh_period` seconds
/// of wall time until `stop` is raised. Returns the last snapshot.
pub fn run_refresh_loop(
    source: &mut dyn SensorSource,
    segmenter: &dyn Segmenter,
    config: &DetectionConfig,
    mut publish: impl FnMut(Arc<AffordanceSnapshot>),
    stop: &AtomicBool,
) -> Arc<AffordanceSnapshot> {
    let start = Instant::now();
    let period = Duration::from_secs_f64(config.refresh_period);
    let mut current = Arc::new(AffordanceSnapshot::default());
    let mut due = start;
    while !stop.load(Ordering::Acquire) {
        let t = start.elapsed().as_secs_f64();
        let capture = source.capture(t);
        current = Arc::new(refresh_snapshot(&current, capture.as_ref(), segmenter, config));
        publish(Arc::clone(&current));
        due += period;
        while !stop.load(Ordering::Acquire) {
            let now = Instant::now();
            if now >= due {
                break;
            }
            std::thread::sleep((due - now).min(Duration::from_millis(20)));
        }
    }
    current
}
