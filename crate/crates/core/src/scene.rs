//! Symbolic CLEVR-style scenes and civilian/spy scene pairs.
//!
//! A [`Scene`] is the attribute record a renderer would consume; the arena
//! never produces pixels. A [`ScenePair`] holds the civilian scene, the spy
//! scene obtained by replacing the shape and colour of exactly two objects,
//! and the [`ChangeLog`] describing that edit.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

/// Minimum centre distance between two objects, in unit-square coordinates.
pub const DEFAULT_MARGIN: f64 = 0.12;
pub const MIN_OBJECTS: usize = 4;
pub const MAX_OBJECTS: usize = 6;
const PLACEMENT_RETRIES: usize = 200;
const SCENE_RETRIES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Cube,
    Sphere,
    Cylinder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Gray,
    Red,
    Blue,
    Green,
    Brown,
    Purple,
    Cyan,
    Yellow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Size {
    Small,
    Large,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Material {
    Metal,
    Rubber,
}

impl Shape {
    pub const ALL: [Shape; 3] = [Shape::Cube, Shape::Sphere, Shape::Cylinder];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Cube => "cube",
            Shape::Sphere => "sphere",
            Shape::Cylinder => "cylinder",
        }
    }
}

impl Color {
    pub const ALL: [Color; 8] = [
        Color::Gray,
        Color::Red,
        Color::Blue,
        Color::Green,
        Color::Brown,
        Color::Purple,
        Color::Cyan,
        Color::Yellow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Color::Gray => "gray",
            Color::Red => "red",
            Color::Blue => "blue",
            Color::Green => "green",
            Color::Brown => "brown",
            Color::Purple => "purple",
            Color::Cyan => "cyan",
            Color::Yellow => "yellow",
        }
    }
}

impl Size {
    pub const ALL: [Size; 2] = [Size::Small, Size::Large];

    pub fn name(self) -> &'static str {
        match self {
            Size::Small => "small",
            Size::Large => "large",
        }
    }
}

impl Material {
    pub const ALL: [Material; 2] = [Material::Metal, Material::Rubber];

    pub fn name(self) -> &'static str {
        match self {
            Material::Metal => "metal",
            Material::Rubber => "rubber",
        }
    }
}

macro_rules! display_by_name {
    ($($t:ty),*) => {
        $(impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        })*
    };
}
display_by_name!(Shape, Color, Size, Material);

/// Point on the abstract ground plane. `x` grows to the right, `y` grows
/// towards the camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneObject {
    pub id: u32,
    pub shape: Shape,
    pub color: Color,
    pub size: Size,
    pub material: Material,
    pub position: Position,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub seed: u64,
    pub objects: Vec<SceneObject>,
}

/// Shape and colour of one object, before or after mutation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Appearance {
    pub shape: Shape,
    pub color: Color,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectChange {
    pub id: u32,
    pub before: Appearance,
    pub after: Appearance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChangeLog {
    pub changes: Vec<ObjectChange>,
}

impl ChangeLog {
    pub fn mutated_ids(&self) -> Vec<u32> {
        self.changes.iter().map(|c| c.id).collect()
    }

    pub fn touches(&self, id: u32) -> bool {
        self.changes.iter().any(|c| c.id == id)
    }

    /// Every shape appearing before or after an edit.
    pub fn shapes(&self) -> Vec<Shape> {
        self.changes
            .iter()
            .flat_map(|c| [c.before.shape, c.after.shape])
            .collect()
    }

    /// Every colour appearing before or after an edit.
    pub fn colors(&self) -> Vec<Color> {
        self.changes
            .iter()
            .flat_map(|c| [c.before.color, c.after.color])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenePair {
    pub civilian: Scene,
    pub spy: Scene,
    pub change_log: ChangeLog,
}

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("margin must be positive and finite, got {0}")]
    InvalidMargin(f64),
    #[error(
        "could not place {wanted} objects with margin {margin} after {attempts} scene attempts"
    )]
    Placement {
        wanted: usize,
        margin: f64,
        attempts: usize,
    },
    #[error("scene has {0} objects, expected {MIN_OBJECTS}..={MAX_OBJECTS}")]
    ObjectCount(usize),
    #[error("duplicate object id {0}")]
    DuplicateId(u32),
    #[error("objects {a} and {b} are {distance:.4} apart, closer than margin {margin}")]
    Overlap {
        a: u32,
        b: u32,
        distance: f64,
        margin: f64,
    },
    #[error("object {0} has a non-finite position")]
    NonFinitePosition(u32),
    #[error("cannot mutate a scene with {0} objects")]
    TooFewObjects(usize),
    #[error("pair invariant violated: {0}")]
    PairInvariant(String),
}

impl Scene {
    pub fn object(&self, id: u32) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    /// Check object count, id uniqueness and pairwise separation.
    pub fn validate(&self, margin: f64) -> Result<(), SceneError> {
        let n = self.objects.len();
        if !(MIN_OBJECTS..=MAX_OBJECTS).contains(&n) {
            return Err(SceneError::ObjectCount(n));
        }
        for (i, a) in self.objects.iter().enumerate() {
            if !a.position.x.is_finite() || !a.position.y.is_finite() {
                return Err(SceneError::NonFinitePosition(a.id));
            }
            for b in &self.objects[i + 1..] {
                if a.id == b.id {
                    return Err(SceneError::DuplicateId(a.id));
                }
                let distance = a.position.distance(&b.position);
                if distance < margin {
                    return Err(SceneError::Overlap {
                        a: a.id,
                        b: b.id,
                        distance,
                        margin,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Sample a scene of 4 to 6 objects with uniform attributes and
/// rejection-sampled, non-overlapping positions in the unit square.
pub fn generate_scene(seed: u64, margin: f64) -> Result<Scene, SceneError> {
    if !(margin > 0.0 && margin.is_finite()) {
        return Err(SceneError::InvalidMargin(margin));
    }
    let mut rng = seed::rng(seed);
    let wanted = rng.gen_range(MIN_OBJECTS..=MAX_OBJECTS);

    for _ in 0..SCENE_RETRIES {
        let mut positions: Vec<Position> = Vec::with_capacity(wanted);
        'object: for _ in 0..wanted {
            for _ in 0..PLACEMENT_RETRIES {
                let candidate = Position {
                    x: rng.gen::<f64>(),
                    y: rng.gen::<f64>(),
                };
                if positions.iter().all(|p| p.distance(&candidate) >= margin) {
                    positions.push(candidate);
                    continue 'object;
                }
            }
            break;
        }
        if positions.len() < wanted {
            continue;
        }
        let objects = positions
            .into_iter()
            .enumerate()
            .map(|(i, position)| SceneObject {
                id: i as u32,
                shape: *Shape::ALL.choose(&mut rng).unwrap(),
                color: *Color::ALL.choose(&mut rng).unwrap(),
                size: *Size::ALL.choose(&mut rng).unwrap(),
                material: *Material::ALL.choose(&mut rng).unwrap(),
                position,
            })
            .collect();
        return Ok(Scene { seed, objects });
    }
    Err(SceneError::Placement {
        wanted,
        margin,
        attempts: SCENE_RETRIES,
    })
}

/// Replace shape and colour of two randomly chosen objects. The new shape is
/// drawn from the two other shapes and the new colour from the seven other
/// colours, so both attributes always change.
pub fn mutate_scene(scene: &Scene, seed: u64) -> Result<ScenePair, SceneError> {
    if scene.objects.len() < 2 {
        return Err(SceneError::TooFewObjects(scene.objects.len()));
    }
    let mut rng = seed::rng(seed);
    let mut picked: Vec<usize> =
        rand::seq::index::sample(&mut rng, scene.objects.len(), 2).into_vec();
    picked.sort_unstable();

    let mut spy = scene.clone();
    let mut changes = Vec::with_capacity(2);
    for idx in picked {
        let obj = &mut spy.objects[idx];
        let before = Appearance {
            shape: obj.shape,
            color: obj.color,
        };
        let shapes: Vec<Shape> = Shape::ALL.into_iter().filter(|s| *s != obj.shape).collect();
        let colors: Vec<Color> = Color::ALL.into_iter().filter(|c| *c != obj.color).collect();
        obj.shape = *shapes.choose(&mut rng).unwrap();
        obj.color = *colors.choose(&mut rng).unwrap();
        changes.push(ObjectChange {
            id: obj.id,
            before,
            after: Appearance {
                shape: obj.shape,
                color: obj.color,
            },
        });
    }
    Ok(ScenePair {
        civilian: scene.clone(),
        spy,
        change_log: ChangeLog { changes },
    })
}

/// Generate a scene and its spy counterpart from a single seed.
pub fn generate_pair(seed: u64, margin: f64) -> Result<ScenePair, SceneError> {
    let scene = generate_scene(seed::derive_seed(seed, &[0]), margin)?;
    mutate_scene(&scene, seed::derive_seed(seed, &[1]))
}

/// Which per-object fields differ between two scenes with identical ids.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum FieldDiff {
    Shape(u32),
    Color(u32),
    Size(u32),
    Material(u32),
    Position(u32),
    Missing(u32),
}

/// Attribute-level difference between two scenes, matched by object id.
pub fn diff_scenes(a: &Scene, b: &Scene) -> Vec<FieldDiff> {
    let mut out = Vec::new();
    for oa in &a.objects {
        match b.object(oa.id) {
            None => out.push(FieldDiff::Missing(oa.id)),
            Some(ob) => {
                if oa.shape != ob.shape {
                    out.push(FieldDiff::Shape(oa.id));
                }
                if oa.color != ob.color {
                    out.push(FieldDiff::Color(oa.id));
                }
                if oa.size != ob.size {
                    out.push(FieldDiff::Size(oa.id));
                }
                if oa.material != ob.material {
                    out.push(FieldDiff::Material(oa.id));
                }
                if oa.position != ob.position {
                    out.push(FieldDiff::Position(oa.id));
                }
            }
        }
    }
    for ob in &b.objects {
        if a.object(ob.id).is_none() {
            out.push(FieldDiff::Missing(ob.id));
        }
    }
    out.sort();
    out
}

impl ScenePair {
    /// Full pair audit: both scenes valid, identical layout, and the spy scene
    /// differs exactly in shape and colour of the two logged objects.
    pub fn validate(&self, margin: f64) -> Result<(), SceneError> {
        self.civilian.validate(margin)?;
        self.spy.validate(margin)?;
        let bad = |msg: String| Err(SceneError::PairInvariant(msg));

        if self.civilian.objects.len() != self.spy.objects.len() {
            return bad("object counts differ".into());
        }
        let log = &self.change_log.changes;
        if log.len() != 2 || log[0].id == log[1].id {
            return bad(format!(
                "change log must name two distinct ids, has {}",
                log.len()
            ));
        }
        let mut expected = Vec::new();
        for change in log {
            let (Some(before), Some(after)) =
                (self.civilian.object(change.id), self.spy.object(change.id))
            else {
                return bad(format!("logged id {} not in scene", change.id));
            };
            if change.after.shape == change.before.shape
                || change.after.color == change.before.color
            {
                return bad(format!(
                    "object {} must change both shape and colour",
                    change.id
                ));
            }
            if before.shape != change.before.shape
                || before.color != change.before.color
                || after.shape != change.after.shape
                || after.color != change.after.color
            {
                return bad(format!(
                    "object {} disagrees with its change log entry",
                    change.id
                ));
            }
            expected.push(FieldDiff::Shape(change.id));
            expected.push(FieldDiff::Color(change.id));
        }
        expected.sort();
        let actual = diff_scenes(&self.civilian, &self.spy);
        if actual != expected {
            return bad(format!("scene diff {actual:?} != logged {expected:?}"));
        }
        // Same order of objects keeps the seating of ids stable for renderers.
        let same_order = self
            .civilian
            .objects
            .iter()
            .zip(&self.spy.objects)
            .all(|(a, b)| a.id == b.id);
        if !same_order {
            return bad("object order differs".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_seven_gives_valid_scene() {
        let scene = generate_scene(7, DEFAULT_MARGIN).unwrap();
        assert!((4..=6).contains(&scene.objects.len()));
        scene.validate(DEFAULT_MARGIN).unwrap();
    }

    #[test]
    fn same_seed_serializes_identically() {
        let a = serde_json::to_string(&generate_scene(99, DEFAULT_MARGIN).unwrap()).unwrap();
        let b = serde_json::to_string(&generate_scene(99, DEFAULT_MARGIN).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn thousand_seeds_cover_all_counts() {
        let mut hist = [0usize; 7];
        for seed in 0..1000 {
            let scene = generate_scene(seed, DEFAULT_MARGIN).unwrap();
            scene.validate(DEFAULT_MARGIN).unwrap();
            hist[scene.objects.len()] += 1;
        }
        assert!(hist[4] > 0 && hist[5] > 0 && hist[6] > 0, "{hist:?}");
        assert_eq!(hist[4] + hist[5] + hist[6], 1000);
    }

    #[test]
    fn rejects_bad_margin() {
        assert_eq!(generate_scene(1, 0.0), Err(SceneError::InvalidMargin(0.0)));
        assert!(generate_scene(1, f64::NAN).is_err());
    }

    #[test]
    fn impossible_margin_is_an_explicit_error() {
        match generate_scene(3, 0.9) {
            Err(SceneError::Placement { wanted, .. }) => assert!(wanted >= 4),
            other => panic!("expected placement error, got {other:?}"),
        }
    }

    #[test]
    fn mutation_touches_two_objects_shape_and_color_only() {
        for seed in 0..200 {
            let pair = generate_pair(seed, DEFAULT_MARGIN).unwrap();
            pair.validate(DEFAULT_MARGIN).unwrap();
            let diff = diff_scenes(&pair.civilian, &pair.spy);
            assert_eq!(diff.len(), 4);
            assert!(diff
                .iter()
                .all(|d| matches!(d, FieldDiff::Shape(_) | FieldDiff::Color(_))));
            for (a, b) in pair.civilian.objects.iter().zip(&pair.spy.objects) {
                assert_eq!(a.position, b.position);
            }
        }
    }

    #[test]
    fn mutation_is_deterministic_and_keeps_civilian() {
        let scene = generate_scene(11, DEFAULT_MARGIN).unwrap();
        let a = mutate_scene(&scene, 5).unwrap();
        let b = mutate_scene(&scene, 5).unwrap();
        assert_eq!(a.change_log, b.change_log);
        assert_eq!(a.civilian, scene);
    }

    #[test]
    fn mutation_needs_two_objects() {
        let mut scene = generate_scene(11, DEFAULT_MARGIN).unwrap();
        scene.objects.truncate(1);
        assert_eq!(mutate_scene(&scene, 0), Err(SceneError::TooFewObjects(1)));
    }

    #[test]
    fn validation_catches_tampering() {
        let mut pair = generate_pair(21, DEFAULT_MARGIN).unwrap();
        let untouched = pair
            .spy
            .objects
            .iter()
            .position(|o| !pair.change_log.touches(o.id))
            .unwrap();
        pair.spy.objects[untouched].size = match pair.spy.objects[untouched].size {
            Size::Small => Size::Large,
            Size::Large => Size::Small,
        };
        assert!(matches!(
            pair.validate(DEFAULT_MARGIN),
            Err(SceneError::PairInvariant(_))
        ));
    }

    #[test]
    fn overlap_detected() {
        let mut scene = generate_scene(4, DEFAULT_MARGIN).unwrap();
        scene.objects[1].position = scene.objects[0].position;
        assert!(matches!(
            scene.validate(DEFAULT_MARGIN),
            Err(SceneError::Overlap { .. })
        ));
    }
}
