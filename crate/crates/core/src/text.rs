//! Small text helpers shared by the pipeline stages.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a. Stable across platforms and releases, unlike
/// `std::hash`.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    fnv1a_seeded(FNV_OFFSET, bytes)
}

pub fn fnv1a_seeded(seed: u64, bytes: &[u8]) -> u64 {
    bytes.iter().fold(seed, |hash, &b| {
        (hash ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// Uppercases the first character and guarantees terminal punctuation.
pub fn sentence(text: &str) -> String {
    let text = text.trim();
    let mut chars = text.chars();
    let mut out = match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect::<String>(),
        None => return String::new(),
    };
    if !ends_with_terminal(&out) {
        out.push('.');
    }
    out
}

pub fn ends_with_terminal(text: &str) -> bool {
    text.trim_end().ends_with(['.', '!', '?'])
}

/// Splits text into sentences on `.`, `!` or `?` followed by whitespace.
/// Quoted speech stays attached to the sentence that contains it.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut in_quote = false;
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        if c == '"' {
            in_quote = !in_quote;
        }
        let boundary = !in_quote
            && matches!(c, '.' | '!' | '?')
            && chars.peek().is_none_or(|n| n.is_whitespace());
        if boundary {
            let s = current.trim();
            if !s.is_empty() {
                out.push(s.to_string());
            }
            current.clear();
        }
    }
    let rest = current.trim();
    if !rest.is_empty() {
        out.push(rest.to_string());
    }
    out
}

/// Lowercases a leading article so a caption can continue a sentence.
pub fn lowercase_article(text: &str) -> String {
    for article in ["A ", "An ", "The "] {
        if let Some(rest) = text.strip_prefix(article) {
            return format!("{}{rest}", article.to_lowercase());
        }
    }
    text.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn sentence_normalizes() {
        assert_eq!(sentence("a dog runs"), "A dog runs.");
        assert_eq!(sentence("Really?"), "Really?");
        assert_eq!(sentence("  "), "");
    }

    #[test]
    fn split_keeps_quotes_together() {
        let parts = split_sentences(r#"I ate. "Was the fish good?" Aiko asked. Fine"#);
        assert_eq!(
            parts,
            ["I ate.", r#""Was the fish good?" Aiko asked."#, "Fine"]
        );
    }

    #[test]
    fn articles() {
        assert_eq!(
            lowercase_article("A cobblestone street"),
            "a cobblestone street"
        );
        assert_eq!(lowercase_article("Aiko walks"), "Aiko walks");
    }
}
