//! Procedural forest, target sequence, and the physical workspace layout.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Circle, OrientedRect, Pose2, Vec2};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SceneError {
    #[error("invalid scene config: {0}")]
    InvalidConfig(String),
    #[error("generation failed: {0}")]
    GenerationFailure(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scene: {0}")]
    InvalidScene(String),
}

impl From<serde_json::Error> for SceneError {
    fn from(e: serde_json::Error) -> Self {
        SceneError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub extent: [f64; 2],
    pub tree_count: usize,
    pub min_spacing: f64,
    pub dbh_mean: f64,
    pub dbh_sd: f64,
    pub target_count: usize,
    pub target_dbh_inflation: f64,
    pub hop_min: f64,
    pub hop_max: f64,
    pub seed: u64,
}

/// Trunks thinner than this are clamped up.
pub const MIN_DBH: f64 = 0.05;

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            extent: [250.0, 250.0],
            tree_count: 2500,
            min_spacing: 2.0,
            dbh_mean: 0.40,
            dbh_sd: 0.12,
            target_count: 17,
            target_dbh_inflation: 1.25,
            hop_min: 12.0,
            hop_max: 25.0,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: &str| Err(SceneError::InvalidConfig(m.to_string()));
        if !(self.extent[0] > 0.0 && self.extent[1] > 0.0) || !self.extent.iter().all(|v| v.is_finite()) {
            return bad("extent must be positive");
        }
        if !(self.min_spacing >= 0.0) {
            return bad("min_spacing must be non-negative");
        }
        if !(self.dbh_mean > 0.0) || !(self.dbh_sd >= 0.0) {
            return bad("dbh_mean must be positive and dbh_sd non-negative");
        }
        if self.target_count > self.tree_count {
            return bad("target_count exceeds tree_count");
        }
        if !(self.target_dbh_inflation > 0.0) {
            return bad("target_dbh_inflation must be positive");
        }
        if !(self.hop_min >= 0.0 && self.hop_min <= self.hop_max) {
            return bad("hop range must satisfy 0 <= hop_min <= hop_max");
        }
        Ok(())
    }
}

/// Axis-aligned world rectangle `[0, width] × [0, height]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub width: f64,
    pub height: f64,
}

impl Bounds {
    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= self.width && p.y <= self.height
    }

    pub fn contains_circle(&self, c: &Circle) -> bool {
        c.center.x - c.radius >= 0.0
            && c.center.y - c.radius >= 0.0
            && c.center.x + c.radius <= self.width
            && c.center.y + c.radius <= self.height
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(self.width / 2.0, self.height / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub trees: Vec<Circle>,
    pub bounds: Bounds,
    pub targets: Vec<usize>,
}

impl Scene {
    /// Where the first trial starts.
    pub fn start(&self) -> Vec2 {
        self.bounds.center()
    }

    pub fn target_tree(&self, position: usize) -> Option<&Circle> {
        self.targets.get(position).map(|&i| &self.trees[i])
    }

    /// Trees per hectare.
    pub fn density(&self) -> f64 {
        self.trees.len() as f64 / (self.bounds.area() / 10_000.0)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: String| Err(SceneError::InvalidScene(m));
        if !(self.bounds.width > 0.0 && self.bounds.height > 0.0) {
            return bad("bounds must be positive".into());
        }
        for (i, t) in self.trees.iter().enumerate() {
            if !(t.radius > 0.0) || !t.center.is_finite() || !t.radius.is_finite() {
                return bad(format!("tree {i}: invalid circle"));
            }
            if !self.bounds.contains_circle(t) {
                return bad(format!("tree {i} lies outside the bounds"));
            }
        }
        let mut seen = vec![false; self.trees.len()];
        for &t in &self.targets {
            if t >= self.trees.len() {
                return bad(format!("target index {t} out of range"));
            }
            if std::mem::replace(&mut seen[t], true) {
                return bad(format!("target index {t} repeated"));
            }
        }
        Ok(())
    }

    /// Byte-stable JSON: `{"bounds":[w,h],"trees":[[x,y,r],…],"targets":[i,…]}`.
    pub fn to_json(&self) -> String {
        let file = SceneFile {
            bounds: [self.bounds.width, self.bounds.height],
            trees: self.trees.iter().map(|t| [t.center.x, t.center.y, t.radius]).collect(),
            targets: self.targets.clone(),
        };
        serde_json::to_string(&file).expect("scene serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Scene, SceneError> {
        let file: SceneFile = serde_json::from_str(text)?;
        let scene = Scene {
            bounds: Bounds {
                width: file.bounds[0],
                height: file.bounds[1],
            },
            trees: file
                .trees
                .iter()
                .map(|t| Circle {
                    center: Vec2 { x: t[0], y: t[1] },
                    radius: t[2],
                })
                .collect(),
            targets: file.targets,
        };
        scene.validate()?;
        Ok(scene)
    }
}

pub fn save_scene(scene: &Scene) -> Vec<u8> {
    scene.to_json().into_bytes()
}

pub fn load_scene(bytes: &[u8]) -> Result<Scene, SceneError> {
    let text = std::str::from_utf8(bytes).map_err(|e| SceneError::Parse {
        line: 0,
        column: e.valid_up_to(),
        message: "scene file is not valid UTF-8".into(),
    })?;
    Scene::from_json(text)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    bounds: [f64; 2],
    trees: Vec<[f64; 3]>,
    targets: Vec<usize>,
}

/// Bucket grid for spacing checks during rejection sampling.
struct SpacingGrid {
    cell: f64,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<Vec2>>,
}

impl SpacingGrid {
    fn new(bounds: Bounds, spacing: f64) -> Self {
        let cell = spacing.max(bounds.width.max(bounds.height) / 512.0).max(1e-6);
        let cols = (bounds.width / cell).ceil().max(1.0) as usize;
        let rows = (bounds.height / cell).ceil().max(1.0) as usize;
        SpacingGrid {
            cell,
            cols,
            rows,
            buckets: vec![Vec::new(); cols * rows],
        }
    }

    fn index(&self, p: Vec2) -> (usize, usize) {
        let c = ((p.x / self.cell) as usize).min(self.cols - 1);
        let r = ((p.y / self.cell) as usize).min(self.rows - 1);
        (c, r)
    }

    fn clear_of(&self, p: Vec2, spacing: f64) -> bool {
        let (c, r) = self.index(p);
        let reach = (spacing / self.cell).ceil() as usize;
        let sq = spacing * spacing;
        for rr in r.saturating_sub(reach)..=(r + reach).min(self.rows - 1) {
            for cc in c.saturating_sub(reach)..=(c + reach).min(self.cols - 1) {
                if self.buckets[rr * self.cols + cc]
                    .iter()
                    .any(|&q| (q - p).norm_squared() < sq)
                {
                    return false;
                }
            }
        }
        true
    }

    fn insert(&mut self, p: Vec2) {
        let (c, r) = self.index(p);
        self.buckets[r * self.cols + c].push(p);
    }
}

/// Seeded forest generation: uniform placement with a minimum spacing,
/// clamped-normal trunk diameters, and a chain of target trees.
pub fn generate_scene(config: &SceneConfig) -> Result<Scene, SceneError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let bounds = Bounds {
        width: config.extent[0],
        height: config.extent[1],
    };
    let dbh = Normal::new(config.dbh_mean, config.dbh_sd).map_err(|e| SceneError::InvalidConfig(e.to_string()))?;
    let radii: Vec<f64> = (0..config.tree_count)
        .map(|_| dbh.sample(&mut rng).max(MIN_DBH) / 2.0)
        .collect();
    // Margin covers a later target inflation so every trunk stays in bounds.
    let inflate = config.target_dbh_inflation.max(1.0);

    let mut grid = SpacingGrid::new(bounds, config.min_spacing);
    let mut trees = Vec::with_capacity(config.tree_count);
    let budget = 10 * config.tree_count;
    let mut attempts = 0usize;
    for &r in &radii {
        let margin = r * inflate;
        if 2.0 * margin > bounds.width || 2.0 * margin > bounds.height {
            return Err(SceneError::GenerationFailure("trunk wider than the world".into()));
        }
        loop {
            if attempts >= budget {
                return Err(SceneError::GenerationFailure(format!(
                    "placed {} of {} trees within {} attempts",
                    trees.len(),
                    config.tree_count,
                    budget
                )));
            }
            attempts += 1;
            let p = Vec2::new(
                rng.random_range(margin..=bounds.width - margin),
                rng.random_range(margin..=bounds.height - margin),
            );
            if grid.clear_of(p, config.min_spacing) {
                grid.insert(p);
                trees.push(Circle { center: p, radius: r });
                break;
            }
        }
    }

    let targets = choose_targets(&trees, bounds, config, &mut rng)?;
    for &t in &targets {
        trees[t].radius *= config.target_dbh_inflation;
    }
    let scene = Scene { trees, bounds, targets };
    debug_assert!(scene.validate().is_ok());
    Ok(scene)
}

fn choose_targets(
    trees: &[Circle],
    bounds: Bounds,
    config: &SceneConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>, SceneError> {
    let mut picked = vec![false; trees.len()];
    let mut targets = Vec::with_capacity(config.target_count);
    let mut from = bounds.center();
    for k in 0..config.target_count {
        let candidates: Vec<usize> = trees
            .iter()
            .enumerate()
            .filter(|(i, t)| {
                let d = t.center.distance(from);
                !picked[*i] && d >= config.hop_min && d <= config.hop_max
            })
            .map(|(i, _)| i)
            .collect();
        let &choice = candidates.choose(rng).ok_or_else(|| {
            SceneError::GenerationFailure(format!(
                "no tree {}–{} m from target {k}'s predecessor",
                config.hop_min, config.hop_max
            ))
        })?;
        picked[choice] = true;
        targets.push(choice);
        from = trees[choice].center;
    }
    Ok(targets)
}

/// Physical room: tracking space centered on the room origin, the
/// workspace home pose (where the user stands at the desk), and the desk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkspaceLayout {
    pub desk_half_width: f64,
    pub desk_half_depth: f64,
    /// Desk center in the home frame (x forward, y left).
    pub desk_offset_from_user: Vec2,
    pub tracking_half_extent: Vec2,
    /// Physical pose of the workspace center, which is also the user's
    /// spot at the desk.
    pub home: Pose2,
}

impl Default for WorkspaceLayout {
    fn default() -> Self {
        WorkspaceLayout {
            desk_half_width: 0.8,
            desk_half_depth: 0.4,
            desk_offset_from_user: Vec2::new(1.0, 0.0),
            tracking_half_extent: Vec2::new(1.25, 2.0),
            home: Pose2::new(Vec2::new(0.0, -0.75), std::f64::consts::FRAC_PI_2),
        }
    }
}

impl WorkspaceLayout {
    /// Desk footprint when the workspace center sits at `workspace`.
    pub fn desk_at(&self, workspace: Pose2) -> OrientedRect {
        OrientedRect {
            center: workspace.transform_point(self.desk_offset_from_user),
            half_width: self.desk_half_width,
            half_depth: self.desk_half_depth,
            yaw: workspace.yaw,
        }
    }

    pub fn desk_physical(&self) -> OrientedRect {
        self.desk_at(self.home)
    }

    pub fn tracking_contains(&self, p: Vec2) -> bool {
        p.x.abs() <= self.tracking_half_extent.x && p.y.abs() <= self.tracking_half_extent.y
    }

    pub fn clamp_to_tracking(&self, p: Vec2) -> Vec2 {
        let e = self.tracking_half_extent;
        Vec2::new(p.x.clamp(-e.x, e.x), p.y.clamp(-e.y, e.y))
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: &str| Err(SceneError::InvalidConfig(m.to_string()));
        if !(self.desk_half_width > 0.0 && self.desk_half_depth > 0.0) {
            return bad("desk half extents must be positive");
        }
        if !(self.tracking_half_extent.x > 0.0 && self.tracking_half_extent.y > 0.0) {
            return bad("tracking space must be non-empty");
        }
        if !self.tracking_contains(self.home.position) {
            return bad("home pose lies outside the tracking space");
        }
        if !self
            .desk_physical()
            .corners()
            .iter()
            .all(|&c| self.tracking_contains(c))
        {
            return bad("desk does not fit inside the tracking space");
        }
        if self.desk_offset_from_user == Vec2::ZERO {
            return bad("desk offset must be nonzero");
        }
        Ok(())
    }
}
