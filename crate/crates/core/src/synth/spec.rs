use serde::{Deserialize, Serialize};

use super::SynthError;

/// A painted map marking, in satellite pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Marking {
    Line {
        from: [f64; 2],
        to: [f64; 2],
        width: f64,
        intensity: f64,
    },
    Cross {
        center: [f64; 2],
        /// Half-length of each arm.
        arm: f64,
        width: f64,
        #[serde(default)]
        angle_deg: f64,
        intensity: f64,
    },
    Disk {
        center: [f64; 2],
        radius: f64,
        intensity: f64,
    },
    Block {
        center: [f64; 2],
        /// Full width and height before rotation.
        size: [f64; 2],
        #[serde(default)]
        angle_deg: f64,
        intensity: f64,
    },
}

impl Marking {
    pub fn intensity(&self) -> f64 {
        match self {
            Marking::Line { intensity, .. }
            | Marking::Cross { intensity, .. }
            | Marking::Disk { intensity, .. }
            | Marking::Block { intensity, .. } => *intensity,
        }
    }

    /// Whether the pixel center `(x, y)` is painted.
    pub fn covers(&self, x: f64, y: f64) -> bool {
        match *self {
            Marking::Line { from, to, width, .. } => {
                let (dx, dy) = (to[0] - from[0], to[1] - from[1]);
                let len2 = dx * dx + dy * dy;
                let t = if len2 == 0.0 {
                    0.0
                } else {
                    (((x - from[0]) * dx + (y - from[1]) * dy) / len2).clamp(0.0, 1.0)
                };
                let (px, py) = (from[0] + t * dx - x, from[1] + t * dy - y);
                (px * px + py * py).sqrt() <= 0.5 * width
            }
            Marking::Cross { center, arm, width, angle_deg, .. } => {
                let (a, b) = rotate_into(center, angle_deg, x, y);
                let half = 0.5 * width;
                (a.abs() <= arm && b.abs() <= half) || (b.abs() <= arm && a.abs() <= half)
            }
            Marking::Disk { center, radius, .. } => {
                let (dx, dy) = (x - center[0], y - center[1]);
                (dx * dx + dy * dy).sqrt() <= radius
            }
            Marking::Block { center, size, angle_deg, .. } => {
                let (a, b) = rotate_into(center, angle_deg, x, y);
                a.abs() <= 0.5 * size[0] && b.abs() <= 0.5 * size[1]
            }
        }
    }

    /// Axis-aligned bounds `(x_min, y_min, x_max, y_max)` of the painted area.
    pub fn bounds(&self) -> [f64; 4] {
        let pts = self.outline();
        let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for p in pts {
            b[0] = b[0].min(p[0]);
            b[1] = b[1].min(p[1]);
            b[2] = b[2].max(p[0]);
            b[3] = b[3].max(p[1]);
        }
        b
    }

    /// Characteristic corner points of the marking; these become the scene
    /// points of the synthetic reconstruction.
    pub fn outline(&self) -> Vec<[f64; 2]> {
        match *self {
            Marking::Line { from, to, width, .. } => {
                let (dx, dy) = (to[0] - from[0], to[1] - from[1]);
                let len = (dx * dx + dy * dy).sqrt().max(f64::MIN_POSITIVE);
                let (nx, ny) = (-dy / len * 0.5 * width, dx / len * 0.5 * width);
                vec![
                    [from[0] + nx, from[1] + ny],
                    [to[0] + nx, to[1] + ny],
                    [to[0] - nx, to[1] - ny],
                    [from[0] - nx, from[1] - ny],
                ]
            }
            Marking::Cross { center, arm, width, angle_deg, .. } => {
                let h = 0.5 * width;
                [[arm, h], [arm, -h], [-arm, h], [-arm, -h], [h, arm], [-h, arm], [h, -arm], [-h, -arm]]
                    .iter()
                    .map(|&[a, b]| rotate_out(center, angle_deg, a, b))
                    .collect()
            }
            Marking::Disk { center, radius, .. } => vec![
                [center[0] + radius, center[1]],
                [center[0], center[1] + radius],
                [center[0] - radius, center[1]],
                [center[0], center[1] - radius],
            ],
            Marking::Block { center, size, angle_deg, .. } => {
                let (h0, h1) = (0.5 * size[0], 0.5 * size[1]);
                [[h0, h1], [-h0, h1], [-h0, -h1], [h0, -h1]]
                    .iter()
                    .map(|&[a, b]| rotate_out(center, angle_deg, a, b))
                    .collect()
            }
        }
    }

    fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match *self {
            Marking::Line { from, to, width, .. } => {
                if !finite(&[from[0], from[1], to[0], to[1], width]) || width <= 0.0 {
                    out.push("line needs finite endpoints and a positive width".into());
                }
            }
            Marking::Cross { center, arm, width, angle_deg, .. } => {
                if !finite(&[center[0], center[1], arm, width, angle_deg]) || arm <= 0.0 || width <= 0.0 {
                    out.push("cross needs a positive arm and width".into());
                }
            }
            Marking::Disk { center, radius, .. } => {
                if !finite(&[center[0], center[1], radius]) || radius <= 0.0 {
                    out.push("disk needs a positive radius".into());
                }
            }
            Marking::Block { center, size, angle_deg, .. } => {
                if !finite(&[center[0], center[1], size[0], size[1], angle_deg]) || size[0] <= 0.0 || size[1] <= 0.0 {
                    out.push("block needs a positive size".into());
                }
            }
        }
        if !(0.0..=255.0).contains(&self.intensity()) {
            out.push(format!("intensity {} outside [0, 255]", self.intensity()));
        }
        out
    }
}

fn rotate_into(center: [f64; 2], angle_deg: f64, x: f64, y: f64) -> (f64, f64) {
    let (s, c) = angle_deg.to_radians().sin_cos();
    let (dx, dy) = (x - center[0], y - center[1]);
    (c * dx + s * dy, -s * dx + c * dy)
}

fn rotate_out(center: [f64; 2], angle_deg: f64, a: f64, b: f64) -> [f64; 2] {
    let (s, c) = angle_deg.to_radians().sin_cos();
    [center[0] + c * a - s * b, center[1] + s * a + c * b]
}

/// True pose of one ground camera in the world frame (x, y on the ground in
/// meters, matching satellite columns and rows; z pointing down).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    /// Ground position below the camera, meters.
    pub position: [f64; 2],
    /// Height above the ground, meters.
    pub height: f64,
    /// Heading of the optical axis in the ground plane, degrees from +x toward +y.
    pub yaw_deg: f64,
    /// Depression of the optical axis below the horizon, degrees.
    pub pitch_deg: f64,
    #[serde(default)]
    pub roll_deg: f64,
}

impl CameraSpec {
    /// Camera whose optical axis meets the ground at `target` (satellite pixels).
    pub fn aimed_at(target: [f64; 2], pitch: f64, height: f64, yaw_deg: f64, pitch_deg: f64) -> Self {
        let back = height / pitch_deg.to_radians().tan();
        let (s, c) = yaw_deg.to_radians().sin_cos();
        Self {
            position: [target[0] * pitch - back * c, target[1] * pitch - back * s],
            height,
            yaw_deg,
            pitch_deg,
            roll_deg: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicsSpec {
    pub width: u32,
    pub height: u32,
    pub focal: f64,
    /// SIMPLE_RADIAL coefficient; zero selects the PINHOLE model.
    #[serde(default)]
    pub radial: f64,
}

impl Default for IntrinsicsSpec {
    fn default() -> Self {
        Self { width: 320, height: 240, focal: 250.0, radial: 0.0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DriftSpec {
    /// Horizontal camera-center error per unit of displacement from the first camera.
    pub fraction: f64,
    /// Orientation of the drift field; drawn from the seed when absent.
    pub angle_deg: Option<f64>,
}

/// Region of interest in one synthetic view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRoi {
    pub camera: usize,
    pub vertices: Vec<[f64; 2]>,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub extra: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub map_width: usize,
    pub map_height: usize,
    /// Meters per satellite pixel.
    pub pitch: f64,
    pub background: f64,
    /// Standard deviation of the smoothed background noise, gray levels.
    pub texture_amplitude: f64,
    /// Box-blur radius of the background noise, pixels.
    pub texture_radius: usize,
    pub markings: Vec<Marking>,
    pub cameras: Vec<CameraSpec>,
    pub intrinsics: IntrinsicsSpec,
    pub drift: DriftSpec,
    /// Gaussian out-of-plane noise on scene points, meters.
    pub point_noise: f64,
    /// Express the model in a random similarity frame, as SfM would.
    pub random_frame: bool,
    /// Regions of interest; one central roi per camera when empty.
    pub rois: Vec<SceneRoi>,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        super::presets::default_scene(crate::pipeline::DEFAULT_SEED)
    }
}

impl SceneSpec {
    /// Check the map fields (size, texture, markings).
    pub fn validate_map(&self) -> Result<(), SynthError> {
        let mut problems = Vec::new();
        self.map_problems(&mut problems);
        if problems.is_empty() {
            Ok(())
        } else {
            Err(SynthError::Invalid(problems))
        }
    }

    fn map_problems(&self, problems: &mut Vec<String>) {
        if self.map_width < 2 || self.map_height < 2 || self.map_width > 16384 || self.map_height > 16384 {
            problems.push(format!("map size {}x{} outside [2, 16384]", self.map_width, self.map_height));
        }
        if !(self.pitch.is_finite() && self.pitch > 0.0) {
            problems.push(format!("pitch must be positive, got {}", self.pitch));
        }
        if !(0.0..=255.0).contains(&self.background) {
            problems.push(format!("background {} outside [0, 255]", self.background));
        }
        if !(self.texture_amplitude.is_finite() && self.texture_amplitude >= 0.0) {
            problems.push("texture_amplitude must be non-negative".into());
        }
        if self.texture_radius > 64 {
            problems.push(format!("texture_radius {} exceeds 64", self.texture_radius));
        }
        let (w, h) = ((self.map_width as f64) - 1.0, (self.map_height as f64) - 1.0);
        for (k, m) in self.markings.iter().enumerate() {
            for p in m.problems() {
                problems.push(format!("markings[{k}]: {p}"));
            }
            let b = m.bounds();
            if !(b[0] >= 0.0 && b[1] >= 0.0 && b[2] <= w && b[3] <= h) {
                problems.push(format!(
                    "markings[{k}]: extends outside the map ({:.1}, {:.1})-({:.1}, {:.1})",
                    b[0], b[1], b[2], b[3]
                ));
            }
        }
    }

    /// Check every field and report all problems at once.
    pub fn validate(&self) -> Result<(), SynthError> {
        let mut problems = Vec::new();
        self.map_problems(&mut problems);
        let i = &self.intrinsics;
        if i.width < 2 || i.height < 2 || i.width > 8192 || i.height > 8192 {
            problems.push(format!("intrinsics: image size {}x{} outside [2, 8192]", i.width, i.height));
        }
        if !(i.focal.is_finite() && i.focal > 0.0) {
            problems.push("intrinsics: focal must be positive".into());
        }
        if !i.radial.is_finite() || i.radial.abs() > 1.0 {
            problems.push("intrinsics: radial must lie in [-1, 1]".into());
        }
        if self.cameras.is_empty() {
            problems.push("at least one camera is required".into());
        }
        for (k, c) in self.cameras.iter().enumerate() {
            if !(c.height.is_finite() && c.height > 0.0) {
                problems.push(format!("cameras[{k}]: camera must be above the ground"));
            }
            if !(c.pitch_deg > 0.0 && c.pitch_deg <= 90.0) {
                problems.push(format!("cameras[{k}]: pitch_deg {} must lie in (0, 90] to see the ground", c.pitch_deg));
            }
            if ![c.position[0], c.position[1], c.yaw_deg, c.roll_deg].iter().all(|v| v.is_finite()) {
                problems.push(format!("cameras[{k}]: non-finite pose"));
            }
        }
        if !(self.drift.fraction.is_finite() && self.drift.fraction >= 0.0) {
            problems.push("drift.fraction must be non-negative".into());
        }
        if !(self.point_noise.is_finite() && self.point_noise >= 0.0) {
            problems.push("point_noise must be non-negative".into());
        }
        for (k, r) in self.rois.iter().enumerate() {
            if r.camera >= self.cameras.len() {
                problems.push(format!("rois[{k}]: camera {} does not exist", r.camera));
            }
            if r.vertices.len() < 3 {
                problems.push(format!("rois[{k}]: needs at least 3 vertices"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(SynthError::Invalid(problems))
        }
    }

    /// Parse a JSON scene description and validate it.
    pub fn from_json(bytes: &[u8]) -> Result<Self, SynthError> {
        let spec: Self = serde_json::from_slice(bytes).map_err(|e| SynthError::Invalid(vec![e.to_string()]))?;
        spec.validate()?;
        Ok(spec)
    }
}
