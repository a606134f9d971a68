//! Structured clue language over symbolic scenes.
//!
//! Claims name objects through selectors (attribute conjunctions) and
//! evaluate to [`Truth::True`], [`Truth::False`] or [`Truth::Ambiguous`].
//! A claim is ambiguous exactly when one of its selectors does not pick out a
//! single object. Every claim renders to an English sentence and the sentence
//! grammar parses back, so model-written clues in the same grammar can be
//! checked as well.

use serde::{Deserialize, Serialize};

use crate::scene::{Color, Material, Scene, SceneObject, Shape, Size};

/// Positional differences below this are not claimable as relations.
pub const RELATION_DEAD_ZONE: f64 = 0.05;

#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct Selector {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<Size>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<Color>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<Material>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Shape>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attribute {
    Size(Size),
    Color(Color),
    Material(Material),
    Shape(Shape),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    LeftOf,
    RightOf,
    FrontOf,
    Behind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Superlative {
    Largest,
    Smallest,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClueStatement {
    Attribute {
        subject: Selector,
        attribute: Attribute,
    },
    Relation {
        subject: Selector,
        relation: Relation,
        object: Selector,
    },
    Superlative {
        subject: Selector,
        superlative: Superlative,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Truth {
    True,
    False,
    Ambiguous,
}

impl Attribute {
    pub fn holds_for(self, obj: &SceneObject) -> bool {
        match self {
            Attribute::Size(s) => obj.size == s,
            Attribute::Color(c) => obj.color == c,
            Attribute::Material(m) => obj.material == m,
            Attribute::Shape(s) => obj.shape == s,
        }
    }

    fn kind(self) -> usize {
        match self {
            Attribute::Size(_) => 0,
            Attribute::Color(_) => 1,
            Attribute::Material(_) => 2,
            Attribute::Shape(_) => 3,
        }
    }

    fn of(obj: &SceneObject) -> [Attribute; 4] {
        [
            Attribute::Size(obj.size),
            Attribute::Color(obj.color),
            Attribute::Material(obj.material),
            Attribute::Shape(obj.shape),
        ]
    }

    fn word(self) -> &'static str {
        match self {
            Attribute::Size(s) => s.name(),
            Attribute::Color(c) => c.name(),
            Attribute::Material(m) => m.name(),
            Attribute::Shape(s) => s.name(),
        }
    }

    fn from_word(word: &str) -> Option<Attribute> {
        Shape::ALL
            .into_iter()
            .map(Attribute::Shape)
            .chain(Color::ALL.into_iter().map(Attribute::Color))
            .chain(Size::ALL.into_iter().map(Attribute::Size))
            .chain(Material::ALL.into_iter().map(Attribute::Material))
            .find(|a| a.word() == word)
    }
}

impl Selector {
    pub fn with(mut self, attr: Attribute) -> Self {
        match attr {
            Attribute::Size(s) => self.size = Some(s),
            Attribute::Color(c) => self.color = Some(c),
            Attribute::Material(m) => self.material = Some(m),
            Attribute::Shape(s) => self.shape = Some(s),
        }
        self
    }

    pub fn attributes(&self) -> Vec<Attribute> {
        let mut out = Vec::with_capacity(4);
        out.extend(self.size.map(Attribute::Size));
        out.extend(self.color.map(Attribute::Color));
        out.extend(self.material.map(Attribute::Material));
        out.extend(self.shape.map(Attribute::Shape));
        out
    }

    fn constrains(&self, kind: usize) -> bool {
        self.attributes().iter().any(|a| a.kind() == kind)
    }

    pub fn matches(&self, obj: &SceneObject) -> bool {
        self.attributes().iter().all(|a| a.holds_for(obj))
    }

    /// The single object this selector picks out, if there is exactly one.
    pub fn resolve<'s>(&self, scene: &'s Scene) -> Option<&'s SceneObject> {
        let mut hits = scene.objects.iter().filter(|o| self.matches(o));
        match (hits.next(), hits.next()) {
            (Some(obj), None) => Some(obj),
            _ => None,
        }
    }

    /// "large red metal cube", "red object", "object".
    pub fn noun_phrase(&self) -> String {
        let mut words: Vec<&str> = Vec::with_capacity(4);
        words.extend(self.size.map(Size::name));
        words.extend(self.color.map(Color::name));
        words.extend(self.material.map(Material::name));
        words.push(self.shape.map_or("object", Shape::name));
        words.join(" ")
    }

    fn parse(phrase: &str) -> Option<Selector> {
        let words: Vec<&str> = phrase.split_whitespace().collect();
        let (head, modifiers) = words.split_last()?;
        let mut sel = Selector::default();
        if *head != "object" {
            match Attribute::from_word(head)? {
                Attribute::Shape(s) => sel.shape = Some(s),
                _ => return None,
            }
        }
        for word in modifiers {
            let attr = Attribute::from_word(word)?;
            if matches!(attr, Attribute::Shape(_)) || sel.constrains(attr.kind()) {
                return None;
            }
            sel = sel.with(attr);
        }
        Some(sel)
    }
}

impl Relation {
    fn phrase(self) -> &'static str {
        match self {
            Relation::LeftOf => "to the left of",
            Relation::RightOf => "to the right of",
            Relation::FrontOf => "in front of",
            Relation::Behind => "behind",
        }
    }

    /// Signed offset of `a` relative to `b` along this relation's axis;
    /// positive when the relation holds.
    fn offset(self, a: &SceneObject, b: &SceneObject) -> f64 {
        match self {
            Relation::LeftOf => b.position.x - a.position.x,
            Relation::RightOf => a.position.x - b.position.x,
            Relation::FrontOf => a.position.y - b.position.y,
            Relation::Behind => b.position.y - a.position.y,
        }
    }

    const ALL: [Relation; 4] = [
        Relation::LeftOf,
        Relation::RightOf,
        Relation::FrontOf,
        Relation::Behind,
    ];
}

impl Superlative {
    fn holds(self, obj: &SceneObject, scene: &Scene) -> bool {
        let extreme = match self {
            Superlative::Largest => Size::Large,
            Superlative::Smallest => Size::Small,
        };
        obj.size == extreme
            && scene
                .objects
                .iter()
                .filter(|o| o.id != obj.id)
                .all(|o| o.size != extreme)
    }
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

impl ClueStatement {
    pub fn evaluate(&self, scene: &Scene) -> Truth {
        let verdict = |b: bool| if b { Truth::True } else { Truth::False };
        match self {
            ClueStatement::Attribute { subject, attribute } => match subject.resolve(scene) {
                Some(obj) => verdict(attribute.holds_for(obj)),
                None => Truth::Ambiguous,
            },
            ClueStatement::Relation {
                subject,
                relation,
                object,
            } => match (subject.resolve(scene), object.resolve(scene)) {
                (Some(a), Some(b)) => verdict(a.id != b.id && relation.offset(a, b) > 0.0),
                _ => Truth::Ambiguous,
            },
            ClueStatement::Superlative {
                subject,
                superlative,
            } => match subject.resolve(scene) {
                Some(obj) => verdict(superlative.holds(obj, scene)),
                None => Truth::Ambiguous,
            },
        }
    }

    pub fn selectors(&self) -> Vec<Selector> {
        match self {
            ClueStatement::Attribute { subject, .. }
            | ClueStatement::Superlative { subject, .. } => {
                vec![*subject]
            }
            ClueStatement::Relation {
                subject, object, ..
            } => vec![*subject, *object],
        }
    }

    /// Every attribute value mentioned anywhere in the claim.
    pub fn mentioned_attributes(&self) -> Vec<Attribute> {
        let mut out: Vec<Attribute> = self
            .selectors()
            .iter()
            .flat_map(|s| s.attributes())
            .collect();
        if let ClueStatement::Attribute { attribute, .. } = self {
            out.push(*attribute);
        }
        out
    }

    /// Canonical form used for "same claim" comparisons: mirrored relations
    /// are rewritten to left-of / in-front-of.
    pub fn semantic_key(&self) -> ClueStatement {
        match *self {
            ClueStatement::Relation {
                subject,
                relation: Relation::RightOf,
                object,
            } => ClueStatement::Relation {
                subject: object,
                relation: Relation::LeftOf,
                object: subject,
            },
            ClueStatement::Relation {
                subject,
                relation: Relation::Behind,
                object,
            } => ClueStatement::Relation {
                subject: object,
                relation: Relation::FrontOf,
                object: subject,
            },
            ref other => other.clone(),
        }
    }

    pub fn same_claim(&self, other: &ClueStatement) -> bool {
        self.semantic_key() == other.semantic_key()
    }

    pub fn to_sentence(&self) -> String {
        let body = match self {
            ClueStatement::Attribute { subject, attribute } => {
                let predicate = match attribute {
                    Attribute::Shape(s) => format!("a {s}"),
                    other => other.word().to_string(),
                };
                format!("the {} is {predicate}", subject.noun_phrase())
            }
            ClueStatement::Relation {
                subject,
                relation,
                object,
            } => format!(
                "the {} is {} the {}",
                subject.noun_phrase(),
                relation.phrase(),
                object.noun_phrase()
            ),
            ClueStatement::Superlative {
                subject,
                superlative,
            } => {
                let word = match superlative {
                    Superlative::Largest => "largest",
                    Superlative::Smallest => "smallest",
                };
                format!("the {} is the {word} object", subject.noun_phrase())
            }
        };
        format!("{}.", capitalize(&body))
    }

    /// Parse a sentence in the grammar produced by [`Self::to_sentence`].
    /// Case and surrounding whitespace are ignored; a trailing period is optional.
    pub fn parse(sentence: &str) -> Option<ClueStatement> {
        let lower = sentence.trim().to_lowercase();
        let text = lower.strip_suffix('.').unwrap_or(&lower).trim();
        let rest = text.strip_prefix("the ")?;
        let (subject, predicate) = rest.split_once(" is ")?;
        let subject = Selector::parse(subject)?;

        for relation in Relation::ALL {
            if let Some(obj) = predicate
                .strip_prefix(relation.phrase())
                .and_then(|r| r.strip_prefix(" the "))
            {
                return Some(ClueStatement::Relation {
                    subject,
                    relation,
                    object: Selector::parse(obj)?,
                });
            }
        }
        match predicate {
            "the largest object" => {
                return Some(ClueStatement::Superlative {
                    subject,
                    superlative: Superlative::Largest,
                })
            }
            "the smallest object" => {
                return Some(ClueStatement::Superlative {
                    subject,
                    superlative: Superlative::Smallest,
                })
            }
            _ => {}
        }
        let word = predicate
            .strip_prefix("a ")
            .or_else(|| predicate.strip_prefix("an "));
        let attribute = match word {
            Some(shape) => match Attribute::from_word(shape)? {
                a @ Attribute::Shape(_) => a,
                _ => return None,
            },
            None => match Attribute::from_word(predicate)? {
                Attribute::Shape(_) => return None,
                a => a,
            },
        };
        Some(ClueStatement::Attribute { subject, attribute })
    }
}

/// Selectors of at most two attributes that pick out `obj` alone. Falls back
/// to larger conjunctions only if no short selector exists.
pub fn unique_selectors(scene: &Scene, obj: &SceneObject) -> Vec<Selector> {
    let attrs = Attribute::of(obj);
    let mut by_size: [Vec<Selector>; 5] = Default::default();
    for mask in 1u8..16 {
        let sel = (0..4)
            .filter(|i| mask & (1 << i) != 0)
            .fold(Selector::default(), |s, i| s.with(attrs[i]));
        if sel.resolve(scene).map(|o| o.id) == Some(obj.id) {
            by_size[mask.count_ones() as usize].push(sel);
        }
    }
    let short: Vec<Selector> = by_size[1].iter().chain(&by_size[2]).copied().collect();
    if !short.is_empty() {
        return short;
    }
    by_size[3..]
        .iter()
        .find(|v| !v.is_empty())
        .cloned()
        .unwrap_or_default()
}

fn shortest(selectors: &[Selector]) -> Vec<Selector> {
    let min = selectors
        .iter()
        .map(|s| s.attributes().len())
        .min()
        .unwrap_or(0);
    selectors
        .iter()
        .filter(|s| s.attributes().len() == min)
        .copied()
        .collect()
}

/// Claims that are true and unambiguous on `scene`, grouped by claim kind:
/// `[attribute, relation, superlative]`. Relations are only offered when the
/// two objects are separated by at least [`RELATION_DEAD_ZONE`] along the
/// relation's axis.
pub fn true_claims(scene: &Scene) -> [Vec<ClueStatement>; 3] {
    let selectors: Vec<Vec<Selector>> = scene
        .objects
        .iter()
        .map(|o| unique_selectors(scene, o))
        .collect();

    let mut attribute = Vec::new();
    let mut superlative = Vec::new();
    for (obj, sels) in scene.objects.iter().zip(&selectors) {
        for sel in sels {
            for attr in Attribute::of(obj) {
                if !sel.constrains(attr.kind()) {
                    attribute.push(ClueStatement::Attribute {
                        subject: *sel,
                        attribute: attr,
                    });
                }
            }
            for sup in [Superlative::Largest, Superlative::Smallest] {
                if sup.holds(obj, scene) {
                    superlative.push(ClueStatement::Superlative {
                        subject: *sel,
                        superlative: sup,
                    });
                }
            }
        }
    }

    let mut relation = Vec::new();
    for (i, a) in scene.objects.iter().enumerate() {
        for (j, b) in scene.objects.iter().enumerate() {
            if i == j {
                continue;
            }
            for rel in Relation::ALL {
                if rel.offset(a, b) < RELATION_DEAD_ZONE {
                    continue;
                }
                for sa in shortest(&selectors[i]) {
                    for sb in shortest(&selectors[j]) {
                        relation.push(ClueStatement::Relation {
                            subject: sa,
                            relation: rel,
                            object: sb,
                        });
                    }
                }
            }
        }
    }
    [attribute, relation, superlative]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_scene, Position, DEFAULT_MARGIN};
    use proptest::prelude::*;

    fn obj(id: u32, shape: Shape, color: Color, size: Size, x: f64, y: f64) -> SceneObject {
        SceneObject {
            id,
            shape,
            color,
            size,
            material: Material::Rubber,
            position: Position { x, y },
        }
    }

    fn fixture() -> Scene {
        Scene {
            seed: 0,
            objects: vec![
                obj(0, Shape::Cylinder, Color::Red, Size::Large, 0.1, 0.5),
                obj(1, Shape::Cube, Color::Blue, Size::Small, 0.6, 0.5),
                obj(2, Shape::Sphere, Color::Yellow, Size::Small, 0.3, 0.9),
                obj(3, Shape::Cube, Color::Gray, Size::Small, 0.9, 0.1),
            ],
        }
    }

    fn sel(f: impl FnOnce(Selector) -> Selector) -> Selector {
        f(Selector::default())
    }

    #[test]
    fn example_sentences_evaluate() {
        let scene = fixture();
        let cyl_left_of_blue_cube = ClueStatement::Relation {
            subject: sel(|s| s.with(Attribute::Shape(Shape::Cylinder))),
            relation: Relation::LeftOf,
            object: sel(|s| s.with(Attribute::Color(Color::Blue))),
        };
        assert_eq!(cyl_left_of_blue_cube.evaluate(&scene), Truth::True);
        assert_eq!(
            cyl_left_of_blue_cube.to_sentence(),
            "The cylinder is to the left of the blue object."
        );

        let red_largest = ClueStatement::Superlative {
            subject: sel(|s| s.with(Attribute::Color(Color::Red))),
            superlative: Superlative::Largest,
        };
        assert_eq!(red_largest.evaluate(&scene), Truth::True);
        assert_eq!(
            red_largest.to_sentence(),
            "The red object is the largest object."
        );

        let yellow_smallest = ClueStatement::Superlative {
            subject: sel(|s| s.with(Attribute::Color(Color::Yellow))),
            superlative: Superlative::Smallest,
        };
        assert_eq!(yellow_smallest.evaluate(&scene), Truth::False);
    }

    #[test]
    fn ambiguity_means_selector_not_unique() {
        let scene = fixture();
        let the_cube_is_blue = ClueStatement::Attribute {
            subject: sel(|s| s.with(Attribute::Shape(Shape::Cube))),
            attribute: Attribute::Color(Color::Blue),
        };
        assert_eq!(the_cube_is_blue.evaluate(&scene), Truth::Ambiguous);
        let no_green = ClueStatement::Attribute {
            subject: sel(|s| s.with(Attribute::Color(Color::Green))),
            attribute: Attribute::Shape(Shape::Cube),
        };
        assert_eq!(no_green.evaluate(&scene), Truth::Ambiguous);
    }

    #[test]
    fn mirrored_relations_are_the_same_claim() {
        let a = sel(|s| s.with(Attribute::Color(Color::Red)));
        let b = sel(|s| s.with(Attribute::Color(Color::Blue)));
        let left = ClueStatement::Relation {
            subject: a,
            relation: Relation::LeftOf,
            object: b,
        };
        let right = ClueStatement::Relation {
            subject: b,
            relation: Relation::RightOf,
            object: a,
        };
        assert!(left.same_claim(&right));
        assert!(!left.same_claim(&ClueStatement::Relation {
            subject: b,
            relation: Relation::LeftOf,
            object: a,
        }));
    }

    #[test]
    fn parses_free_spacing_and_case() {
        let claim = ClueStatement::parse("  the LARGE red cylinder is a cylinder ").unwrap();
        assert_eq!(
            claim,
            ClueStatement::Attribute {
                subject: sel(|s| s
                    .with(Attribute::Size(Size::Large))
                    .with(Attribute::Color(Color::Red))
                    .with(Attribute::Shape(Shape::Cylinder))),
                attribute: Attribute::Shape(Shape::Cylinder),
            }
        );
        assert!(ClueStatement::parse("The cylinder is to the left of the cube").is_some());
        assert!(ClueStatement::parse("I see a nice picture").is_none());
        assert!(ClueStatement::parse("The red blue object is large").is_none());
        assert!(ClueStatement::parse("The cube is a red").is_none());
    }

    #[test]
    fn enumerated_claims_are_true_and_unambiguous() {
        for seed in 0..200 {
            let scene = generate_scene(seed, DEFAULT_MARGIN).unwrap();
            let groups = true_claims(&scene);
            assert!(!groups[0].is_empty());
            for claim in groups.iter().flatten() {
                assert_eq!(claim.evaluate(&scene), Truth::True, "{claim:?}");
            }
        }
    }

    fn arb_selector() -> impl Strategy<Value = Selector> {
        (
            proptest::option::of(proptest::sample::select(Size::ALL.to_vec())),
            proptest::option::of(proptest::sample::select(Color::ALL.to_vec())),
            proptest::option::of(proptest::sample::select(Material::ALL.to_vec())),
            proptest::option::of(proptest::sample::select(Shape::ALL.to_vec())),
        )
            .prop_map(|(size, color, material, shape)| Selector {
                size,
                color,
                material,
                shape,
            })
    }

    fn arb_claim() -> impl Strategy<Value = ClueStatement> {
        let attribute = prop_oneof![
            proptest::sample::select(Size::ALL.to_vec()).prop_map(Attribute::Size),
            proptest::sample::select(Color::ALL.to_vec()).prop_map(Attribute::Color),
            proptest::sample::select(Material::ALL.to_vec()).prop_map(Attribute::Material),
            proptest::sample::select(Shape::ALL.to_vec()).prop_map(Attribute::Shape),
        ];
        prop_oneof![
            (arb_selector(), attribute)
                .prop_map(|(subject, attribute)| ClueStatement::Attribute { subject, attribute }),
            (
                arb_selector(),
                proptest::sample::select(Relation::ALL.to_vec()),
                arb_selector()
            )
                .prop_map(|(subject, relation, object)| ClueStatement::Relation {
                    subject,
                    relation,
                    object
                }),
            (arb_selector(), any::<bool>()).prop_map(|(subject, big)| ClueStatement::Superlative {
                subject,
                superlative: if big {
                    Superlative::Largest
                } else {
                    Superlative::Smallest
                },
            }),
        ]
    }

    proptest! {
        #[test]
        fn sentence_grammar_roundtrips(claim in arb_claim()) {
            prop_assert_eq!(ClueStatement::parse(&claim.to_sentence()), Some(claim));
        }

        #[test]
        fn evaluation_is_total(claim in arb_claim(), seed in 0u64..500) {
            let scene = generate_scene(seed, DEFAULT_MARGIN).unwrap();
            let truth = claim.evaluate(&scene);
            let unique = claim.selectors().iter().all(|s| s.resolve(&scene).is_some());
            prop_assert_eq!(truth == Truth::Ambiguous, !unique);
        }
    }
}
