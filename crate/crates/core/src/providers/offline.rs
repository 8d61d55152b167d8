//! Deterministic, network-free providers.

use super::{CaptionTable, VqaTable};
use super::{
    Captioner, Embedder, Entity, EntityCategory, EntityTagger, ImageRef, ProviderError,
    ProviderResult, QuestionAnswerer, TextGenerator, Translator,
};
use crate::summarize::{PromptSections, DESCRIPTION_LABEL};
use crate::text::{fnv1a, fnv1a_seeded, lowercase_article, sentence, split_sentences};

/// Captions used for images missing from the caption table, picked by a
/// hash of the image bytes.
const SCENERY: [&str; 12] = [
    "a paved path lined with tall trees",
    "a cobblestone street next to a building and trees",
    "a brick building with many windows",
    "a wide lawn under a cloudy sky",
    "a row of bicycles parked along a wall",
    "a stone gate in front of an old hall",
    "a sign outside of a coffee shop",
    "a crosswalk on a quiet campus road",
    "yellow leaves scattered on the ground",
    "a bench beside a small pond",
    "a long corridor with glass doors",
    "a staircase leading up to a library",
];

/// Looks captions up by image file name, falling back to a scenery caption
/// chosen from the image bytes.
#[derive(Debug, Clone, Default)]
pub struct TableCaptioner {
    table: CaptionTable,
}

impl TableCaptioner {
    pub fn new(table: CaptionTable) -> Self {
        TableCaptioner { table }
    }
}

impl Captioner for TableCaptioner {
    fn name(&self) -> &str {
        "offline-table"
    }

    fn caption(&self, image: &ImageRef) -> ProviderResult<String> {
        if let Some(caption) = self.table.get(&image.file_name) {
            return Ok(caption.clone());
        }
        let bytes = image.read()?;
        Ok(SCENERY[(fnv1a(&bytes) % SCENERY.len() as u64) as usize].to_string())
    }
}

pub const DEFAULT_EMBEDDING_DIM: usize = 256;
pub const DEFAULT_EMBEDDING_SEED: u64 = 0x5eed_d1a2_0000_0001;

/// Bag of hashed character trigrams over the lowercased text.
///
/// Texts shorter than three characters contribute a single gram made of the
/// whole text. Counts are non-negative, so cosine similarity is in [0, 1].
#[derive(Debug, Clone)]
pub struct TrigramEmbedder {
    dim: usize,
    seed: u64,
}

impl TrigramEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        TrigramEmbedder { dim, seed }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bucket(&self, gram: &str) -> usize {
        (fnv1a_seeded(self.seed, gram.as_bytes()) % self.dim as u64) as usize
    }
}

impl Default for TrigramEmbedder {
    fn default() -> Self {
        TrigramEmbedder::new(DEFAULT_EMBEDDING_DIM, DEFAULT_EMBEDDING_SEED)
    }
}

impl Embedder for TrigramEmbedder {
    fn name(&self) -> &str {
        "offline-trigram"
    }

    fn embed(&self, text: &str) -> ProviderResult<Vec<f64>> {
        let chars: Vec<char> = text.to_lowercase().chars().collect();
        let mut v = vec![0.0; self.dim];
        if chars.is_empty() {
            return Ok(v);
        }
        if chars.len() < 3 {
            v[self.bucket(&chars.iter().collect::<String>())] += 1.0;
            return Ok(v);
        }
        for gram in chars.windows(3) {
            v[self.bucket(&gram.iter().collect::<String>())] += 1.0;
        }
        Ok(v)
    }
}

pub const DEFAULT_PERSON_NOUNS: [&str; 6] = ["person", "man", "woman", "people", "men", "women"];

/// Gazetteer of partner names plus a list of person nouns. Other
/// capitalized tokens that do not open the text are tagged as `OTHER`.
#[derive(Debug, Clone)]
pub struct GazetteerTagger {
    names: Vec<String>,
    person_nouns: Vec<String>,
}

impl GazetteerTagger {
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        GazetteerTagger {
            names: names.into_iter().map(Into::into).collect(),
            person_nouns: DEFAULT_PERSON_NOUNS.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn with_person_nouns<I, S>(mut self, nouns: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.person_nouns = nouns.into_iter().map(Into::into).collect();
        self
    }

    pub fn person_nouns(&self) -> &[String] {
        &self.person_nouns
    }
}

impl EntityTagger for GazetteerTagger {
    fn name(&self) -> &str {
        "offline-gazetteer"
    }

    fn tag(&self, text: &str) -> ProviderResult<Vec<Entity>> {
        let mut entities = Vec::new();
        let tokens = text
            .split(|c: char| !(c.is_alphanumeric() || c == '\''))
            .filter(|t| !t.is_empty());
        for (i, token) in tokens.enumerate() {
            let bare = token.trim_end_matches("'s");
            let lower = bare.to_lowercase();
            let category = if self.names.iter().any(|n| n.eq_ignore_ascii_case(bare))
                || self.person_nouns.contains(&lower)
            {
                Some(EntityCategory::Person)
            } else if i > 0 && bare.chars().next().is_some_and(char::is_uppercase) {
                Some(EntityCategory::Other)
            } else {
                None
            };
            if let Some(category) = category {
                entities.push(Entity {
                    surface: bare.to_string(),
                    category,
                });
            }
        }
        Ok(entities)
    }
}

pub const UNKNOWN_ANSWER: &str = "unknown";

/// Canned answers keyed by `(image_file, question)`.
#[derive(Debug, Clone, Default)]
pub struct TableVqa {
    table: VqaTable,
}

impl TableVqa {
    pub fn new(table: VqaTable) -> Self {
        TableVqa { table }
    }
}

impl QuestionAnswerer for TableVqa {
    fn name(&self) -> &str {
        "offline-table"
    }

    fn answer(&self, image: &ImageRef, question: &str) -> ProviderResult<String> {
        Ok(self
            .table
            .lookup(&image.file_name, question)
            .unwrap_or(UNKNOWN_ANSWER)
            .to_string())
    }
}

/// Writes a first-person diary by stitching the prompt's premise and
/// description sentences together.
#[derive(Debug, Clone)]
pub struct TemplateDiaryWriter {
    pub closing: String,
}

impl Default for TemplateDiaryWriter {
    fn default() -> Self {
        TemplateDiaryWriter {
            closing: "It was a day I would like to remember.".into(),
        }
    }
}

impl TextGenerator for TemplateDiaryWriter {
    fn name(&self) -> &str {
        "offline-template"
    }

    fn generate(&self, prompt: &str) -> ProviderResult<String> {
        let sections = PromptSections::parse(prompt).ok_or_else(|| {
            ProviderError::Failed(format!(
                "prompt lacks the Premise/{DESCRIPTION_LABEL}/Direction layout"
            ))
        })?;
        let field = |key: &str| {
            sections
                .premise_field(key)
                .unwrap_or(UNKNOWN_ANSWER)
                .to_string()
        };
        let mut out = vec![
            format!("Today was {}.", field("Date")),
            format!(
                "I went on {} with {} around {}.",
                lowercase_article(&field("Event")),
                field("Person"),
                field("Place")
            ),
        ];
        for s in split_sentences(&sections.description) {
            let first_person = s.starts_with("I ")
                || s.starts_with("I'")
                || s.starts_with('"')
                || s.starts_with(field("Person").as_str());
            if first_person {
                out.push(s);
            } else {
                out.push(sentence(&format!("I noticed {}", lowercase_article(&s))));
            }
        }
        out.push(self.closing.clone());
        Ok(out.join(" "))
    }
}

/// Returns text unchanged; stands in for a translation service.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityTranslator;

impl Translator for IdentityTranslator {
    fn name(&self) -> &str {
        "identity"
    }

    fn translate(&self, text: &str) -> ProviderResult<String> {
        Ok(text.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    #[test]
    fn trigram_counts_match_windows() {
        let e = TrigramEmbedder::default();
        let v = e.embed("abcd").unwrap();
        assert_eq!(v.iter().sum::<f64>(), 2.0);
        assert_eq!(v[e.bucket("abc")] + v[e.bucket("bcd")], 2.0);
        assert_eq!(e.embed("").unwrap().iter().sum::<f64>(), 0.0);
        assert_eq!(e.embed("ab").unwrap()[e.bucket("ab")], 1.0);
    }

    #[test]
    fn disjoint_trigrams_are_orthogonal() {
        let e = TrigramEmbedder::default();
        assert_ne!(e.bucket("aaa"), e.bucket("zzz"));
        let c = cosine(&e.embed("aaaa").unwrap(), &e.embed("zzzz").unwrap());
        assert_eq!(c, 0.0);
    }

    #[test]
    fn tagger_detects_people() {
        let t = GazetteerTagger::new(["Aiko"]);
        let has_person = |s: &str| {
            t.tag(s)
                .unwrap()
                .iter()
                .any(|e| e.category == EntityCategory::Person)
        };
        assert!(has_person("a woman walking a robot on a path"));
        assert!(!has_person(
            "a cobblestone street next to a building and trees"
        ));
        assert!(has_person("Aiko waves at the camera"));
        assert!(!has_person("a sign outside of a Starbucks coffee shop"));
        let other = t.tag("a sign outside of a Starbucks coffee shop").unwrap();
        assert_eq!(other[0].category, EntityCategory::Other);
    }

    #[test]
    fn fallback_captions_avoid_interaction_objects() {
        for caption in SCENERY {
            for word in ["ball", "dice", "fish", "strawberry", "toy"] {
                assert!(!caption.contains(word), "{caption}");
            }
        }
    }
}
