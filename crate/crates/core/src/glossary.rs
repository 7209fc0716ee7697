//! Stimulus items: the bundled name and concept word lists, and expansion of
//! semantically bleached sentence templates into sentence items.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};

/// Marker replaced by the filler phrase in a template pattern.
pub const SLOT: &str = "<X>";

/// One probe stimulus. `target` is the token whose embedding stands for the
/// item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    pub text: String,
    pub target: String,
    #[serde(skip)]
    pub set_name: String,
}

impl Item {
    /// A single-word item whose id, text and target are all `word`.
    pub fn word(set_name: &str, word: &str) -> Item {
        Item {
            id: word.to_string(),
            text: word.to_string(),
            target: word.to_string(),
            set_name: set_name.to_string(),
        }
    }
}

/// True when `word` occurs in `text` bounded by non-alphanumeric characters
/// (or the ends of the string).
pub fn contains_word(text: &str, word: &str) -> bool {
    if word.is_empty() {
        return false;
    }
    text.match_indices(word).any(|(pos, _)| {
        let before = text[..pos].chars().next_back();
        let after = text[pos + word.len()..].chars().next();
        !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetKind {
    Group,
    Concept,
}

/// A named, non-empty pool of items with distinct ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ItemSetRepr")]
pub struct ItemSet {
    name: String,
    kind: SetKind,
    items: Vec<Item>,
}

#[derive(Deserialize)]
struct ItemSetRepr {
    name: String,
    kind: SetKind,
    items: Vec<Item>,
}

impl TryFrom<ItemSetRepr> for ItemSet {
    type Error = Error;

    fn try_from(repr: ItemSetRepr) -> Result<Self> {
        ItemSet::new(repr.name, repr.kind, repr.items)
    }
}

impl ItemSet {
    /// Validates the set. Each item's `set_name` is overwritten with `name`.
    pub fn new(name: impl Into<String>, kind: SetKind, mut items: Vec<Item>) -> Result<Self> {
        let name = name.into();
        let invalid = |reason: String| Error::InvalidSet {
            set: name.clone(),
            reason,
        };
        if items.is_empty() {
            return Err(invalid("set has no items".into()));
        }
        let mut seen = HashSet::new();
        for item in &items {
            if !seen.insert(item.id.as_str()) {
                return Err(invalid(format!("duplicate item id {:?}", item.id)));
            }
            if !contains_word(&item.text, &item.target) {
                return Err(invalid(format!(
                    "target {:?} does not occur in {:?}",
                    item.target, item.text
                )));
            }
        }
        for item in &mut items {
            item.set_name.clone_from(&name);
        }
        Ok(ItemSet { name, kind, items })
    }

    pub fn from_words(name: &str, kind: SetKind, words: &[&str]) -> Result<Self> {
        ItemSet::new(
            name,
            kind,
            words.iter().map(|w| Item::word(name, w)).collect(),
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> SetKind {
        self.kind
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Item> {
        self.items.iter().find(|item| item.id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("item sets always serialize")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|source| Error::Json {
            context: "item set".into(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            context: path.display().to_string(),
            source,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GrammaticalNumber {
    Singular,
    Plural,
}

/// A carrier sentence with exactly one [`SLOT`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TemplateRepr")]
pub struct TemplateSpec {
    pattern: String,
    number: GrammaticalNumber,
}

#[derive(Deserialize)]
struct TemplateRepr {
    pattern: String,
    number: GrammaticalNumber,
}

impl TryFrom<TemplateRepr> for TemplateSpec {
    type Error = Error;

    fn try_from(repr: TemplateRepr) -> Result<Self> {
        TemplateSpec::new(repr.pattern, repr.number)
    }
}

impl TemplateSpec {
    pub fn new(pattern: impl Into<String>, number: GrammaticalNumber) -> Result<Self> {
        let pattern = pattern.into();
        let found = pattern.matches(SLOT).count();
        if found != 1 {
            return Err(Error::SlotCount { pattern, found });
        }
        Ok(TemplateSpec { pattern, number })
    }

    pub fn singular(pattern: &str) -> Result<Self> {
        TemplateSpec::new(pattern, GrammaticalNumber::Singular)
    }

    pub fn plural(pattern: &str) -> Result<Self> {
        TemplateSpec::new(pattern, GrammaticalNumber::Plural)
    }

    pub fn pattern(&self) -> &str {
        &self.pattern
    }

    pub fn number(&self) -> GrammaticalNumber {
        self.number
    }

    /// Substitutes `phrase`, capitalising it when the slot opens the sentence.
    pub fn fill(&self, phrase: &str) -> String {
        let phrase = if self.pattern.starts_with(SLOT) {
            capitalize(phrase)
        } else {
            phrase.to_string()
        };
        self.pattern.replacen(SLOT, &phrase, 1)
    }
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// A phrase in singular and plural form. `target_word` indexes the
/// whitespace-separated word of the phrase that becomes the item target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Filler {
    pub singular: String,
    pub plural: String,
    #[serde(default)]
    pub target_word: usize,
}

impl Filler {
    pub fn new(singular: &str, plural: &str) -> Filler {
        Filler {
            singular: singular.to_string(),
            plural: plural.to_string(),
            target_word: 0,
        }
    }

    pub fn with_target_word(mut self, index: usize) -> Filler {
        self.target_word = index;
        self
    }

    fn form(&self, number: GrammaticalNumber) -> &str {
        match number {
            GrammaticalNumber::Singular => &self.singular,
            GrammaticalNumber::Plural => &self.plural,
        }
    }
}

/// Every filler in every template, filler-major. Item ids are
/// `{set_name}/{index:03}`.
pub fn expand_templates(
    set_name: &str,
    fillers: &[Filler],
    templates: &[TemplateSpec],
) -> Result<Vec<Item>> {
    if fillers.is_empty() {
        return Err(Error::InvalidInput("no fillers to expand".into()));
    }
    if templates.is_empty() {
        return Err(Error::InvalidInput("no templates to expand".into()));
    }
    // Specs built through serde or `new` are checked already; this guards
    // values mutated after construction.
    for template in templates {
        let found = template.pattern.matches(SLOT).count();
        if found != 1 {
            return Err(Error::SlotCount {
                pattern: template.pattern.clone(),
                found,
            });
        }
    }

    let mut items = Vec::with_capacity(fillers.len() * templates.len());
    for filler in fillers {
        for template in templates {
            let text = template.fill(filler.form(template.number));
            let realized = if template.pattern.starts_with(SLOT) {
                capitalize(filler.form(template.number))
            } else {
                filler.form(template.number).to_string()
            };
            let target = realized
                .split_whitespace()
                .nth(filler.target_word)
                .ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "filler {realized:?} has no word at index {}",
                        filler.target_word
                    ))
                })?
                .to_string();
            items.push(Item {
                id: format!("{set_name}/{:03}", items.len()),
                text,
                target,
                set_name: set_name.to_string(),
            });
        }
    }
    Ok(items)
}

fn templates(list: &[(&str, GrammaticalNumber)]) -> Vec<TemplateSpec> {
    list.iter()
        .map(|&(p, n)| TemplateSpec::new(p, n).expect("built-in templates have one slot"))
        .collect()
}

use GrammaticalNumber::{Plural, Singular};

const GROUP_PATTERNS: &[(&str, GrammaticalNumber)] = &[
    ("This is a <X>.", Singular),
    ("That is a <X>.", Singular),
    ("The <X> is here.", Singular),
    ("The <X> is there.", Singular),
    ("Here is a <X>.", Singular),
    ("They are <X>.", Plural),
    ("These are <X>.", Plural),
];

const CONCEPT_EXTRA_PATTERNS: &[(&str, GrammaticalNumber)] = &[
    ("<X> are people.", Plural),
    ("Those are <X>.", Plural),
    ("<X> are there.", Plural),
];

/// Templates applied to group fillers.
pub fn group_templates() -> Vec<TemplateSpec> {
    templates(GROUP_PATTERNS)
}

/// Templates applied to concept fillers: the group templates plus three
/// plural patterns, so a single concept filler still yields ten items.
pub fn concept_templates() -> Vec<TemplateSpec> {
    let mut all = templates(GROUP_PATTERNS);
    all.extend(templates(CONCEPT_EXTRA_PATTERNS));
    all
}

/// Declarative description of a templated item set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSet {
    pub name: String,
    pub kind: SetKind,
    pub fillers: Vec<Filler>,
    /// Defaults to the built-in list for `kind`.
    #[serde(default)]
    pub templates: Option<Vec<TemplateSpec>>,
}

impl TemplateSet {
    pub fn expand(&self) -> Result<ItemSet> {
        let templates = match &self.templates {
            Some(t) => t.clone(),
            None => match self.kind {
                SetKind::Group => group_templates(),
                SetKind::Concept => concept_templates(),
            },
        };
        let items = expand_templates(&self.name, &self.fillers, &templates)?;
        ItemSet::new(self.name.clone(), self.kind, items)
    }
}

pub const BLACK_FEMALE_NAMES: &[&str] = &[
    "Aisha", "Keisha", "Latonya", "Lakisha", "Latoya", "Tamika", "Imani", "Shanice", "Aaliyah",
    "Nia", "Latanya", "Latisha", "Deja",
];
pub const BLACK_MALE_NAMES: &[&str] = &[
    "Darnell", "Hakim", "Jermaine", "Kareem", "Jamal", "Leroy", "Rasheed", "DeShawn", "DeAndre",
    "Marquis", "Terrell", "Malik", "Tyrone",
];
pub const WHITE_FEMALE_NAMES: &[&str] = &[
    "Allison", "Anne", "Carrie", "Emily", "Jill", "Laurie", "Kristen", "Meredith", "Molly", "Amy",
    "Claire", "Madeline", "Emma",
];
pub const WHITE_MALE_NAMES: &[&str] = &[
    "Brad", "Brendan", "Geoffrey", "Greg", "Brett", "Jay", "Matthew", "Jake", "Connor", "Tanner",
    "Wyatt", "Cody", "Dustin",
];
pub const FEMALE_CONCEPT_WORDS: &[&str] = &[
    "female",
    "woman",
    "girl",
    "sister",
    "she",
    "her",
    "hers",
    "daughter",
    "aunt",
    "mother",
    "grandmother",
];
pub const BLACK_CONCEPT_WORDS: &[&str] = &[
    "Africa", "Black", "Jamaica", "Haiti", "Nigeria", "Ethiopia", "Somalia", "Ghana", "Barbados",
    "Kenya", "Liberia", "Bahamas",
];

const WORD_SETS: &[(&str, SetKind, &[&str])] = &[
    ("bf-names", SetKind::Group, BLACK_FEMALE_NAMES),
    ("bm-names", SetKind::Group, BLACK_MALE_NAMES),
    ("wf-names", SetKind::Group, WHITE_FEMALE_NAMES),
    ("wm-names", SetKind::Group, WHITE_MALE_NAMES),
    ("female-concept", SetKind::Concept, FEMALE_CONCEPT_WORDS),
    ("black-concept", SetKind::Concept, BLACK_CONCEPT_WORDS),
];

/// The bundled single-word sets: four 13-name identity groups and the
/// female (11) and Black (12) concept word lists.
pub fn builtin_glossaries() -> Vec<ItemSet> {
    WORD_SETS
        .iter()
        .map(|&(name, kind, words)| {
            ItemSet::from_words(name, kind, words).expect("built-in word sets are valid")
        })
        .collect()
}

const FEMALE_NOUNS: &[(&str, &str)] =
    &[("woman", "women"), ("female", "females"), ("girl", "girls")];
const MALE_NOUNS: &[(&str, &str)] = &[("man", "men"), ("male", "males"), ("boy", "boys")];

/// Templated specs behind the built-in sentence sets.
///
/// Group sets come in two flavours: `-race` targets the race word
/// ("Black", "White"), `-gender` targets the noun ("woman", "men", ...).
pub fn builtin_template_sets() -> Vec<TemplateSet> {
    let mut specs = Vec::new();
    for (tag, race, nouns) in [
        ("bf", "Black", FEMALE_NOUNS),
        ("wf", "White", FEMALE_NOUNS),
        ("bm", "Black", MALE_NOUNS),
        ("wm", "White", MALE_NOUNS),
    ] {
        for (flavour, target_word) in [("race", 0), ("gender", 1)] {
            specs.push(TemplateSet {
                name: format!("{tag}-sent-{flavour}"),
                kind: SetKind::Group,
                fillers: nouns
                    .iter()
                    .map(|(sg, pl)| {
                        Filler::new(&format!("{race} {sg}"), &format!("{race} {pl}"))
                            .with_target_word(target_word)
                    })
                    .collect(),
                templates: None,
            });
        }
    }
    specs.push(TemplateSet {
        name: "female-concept-sent".into(),
        kind: SetKind::Concept,
        fillers: FEMALE_NOUNS
            .iter()
            .map(|(sg, pl)| Filler::new(sg, pl))
            .collect(),
        templates: None,
    });
    specs.push(TemplateSet {
        name: "black-concept-sent".into(),
        kind: SetKind::Concept,
        fillers: vec![Filler::new("Black person", "Black people")],
        templates: None,
    });
    specs
}

/// Expanded forms of [`builtin_template_sets`].
pub fn builtin_sentence_sets() -> Vec<ItemSet> {
    builtin_template_sets()
        .iter()
        .map(|spec| spec.expand().expect("built-in template sets are valid"))
        .collect()
}

/// Names of every built-in set, word sets first.
pub fn builtin_set_names() -> Vec<String> {
    WORD_SETS
        .iter()
        .map(|(name, _, _)| name.to_string())
        .chain(builtin_template_sets().into_iter().map(|s| s.name))
        .collect()
}

/// Looks up a built-in word or sentence set by name.
pub fn builtin_set(name: &str) -> Result<ItemSet> {
    if let Some(&(name, kind, words)) = WORD_SETS.iter().find(|(n, _, _)| *n == name) {
        return ItemSet::from_words(name, kind, words);
    }
    builtin_template_sets()
        .into_iter()
        .find(|spec| spec.name == name)
        .ok_or_else(|| Error::UnknownSet(name.to_string()))?
        .expand()
}

/// Targets of `set` that have no vector in `table`, in item order.
pub fn validate_set(set: &ItemSet, table: &EmbeddingTable, case_fold: bool) -> Vec<String> {
    set.items()
        .iter()
        .filter(|item| !table.contains(&item.target, case_fold))
        .map(|item| item.target.clone())
        .collect()
}
