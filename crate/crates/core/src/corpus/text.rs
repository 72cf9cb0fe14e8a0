//! Text cleaning: markup removal, formula replacement, sentence splitting,
//! tokenisation and the sentence/token caps.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

pub const MAX_SENTENCES: usize = 30;
pub const MAX_TOKENS: usize = 50;
pub const FORMULA_TOKEN: &str = "formula";

/// Sentences of lowercase tokens.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenizedText {
    pub sentences: Vec<Vec<String>>,
}

impl TokenizedText {
    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn num_tokens(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().flatten().map(String::as_str)
    }

    /// Appends `other` and re-applies the sentence cap.
    pub fn concat(mut self, other: TokenizedText, caps: TextCaps) -> Self {
        self.sentences.extend(other.sentences);
        self.sentences.truncate(caps.max_sentences);
        self
    }

    pub fn from_sentences<S: AsRef<str>>(sentences: &[&[S]]) -> Self {
        Self {
            sentences: sentences
                .iter()
                .map(|s| s.iter().map(|t| t.as_ref().to_owned()).collect())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextCaps {
    pub max_sentences: usize,
    pub max_tokens: usize,
}

impl Default for TextCaps {
    fn default() -> Self {
        Self {
            max_sentences: MAX_SENTENCES,
            max_tokens: MAX_TOKENS,
        }
    }
}

// Outer elements first so nested math inside a display formula goes with it.
const FORMULA_TAGS: &[&str] = &[
    "disp-formula",
    "inline-formula",
    "formula",
    "mml:math",
    "math",
    "tex-math",
];

static FORMULA_RES: LazyLock<Vec<Regex>> = LazyLock::new(|| {
    FORMULA_TAGS
        .iter()
        .map(|t| {
            let t = regex::escape(t);
            Regex::new(&format!(r"(?is)<{t}(?:\s[^>]*)?(?:/>|>.*?</{t}\s*>)")).unwrap()
        })
        .collect()
});
static TAG_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)<[^>]*>").unwrap());
static ENTITY_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"&(#[0-9]+|#[xX][0-9a-fA-F]+|[a-zA-Z]+);").unwrap());

/// Words that end with a period without ending a sentence.
const ABBREVIATIONS: &[&str] = &[
    "al", "cf", "dr", "e.g", "eg", "eq", "eqs", "etc", "fig", "figs", "i.e", "ie", "mr", "mrs",
    "ms", "no", "nos", "prof", "ref", "refs", "sec", "sect", "tab", "vs",
];

/// Cleans raw (possibly marked-up) text with the default caps.
pub fn clean_text(raw: &str) -> TokenizedText {
    clean_text_with(raw, TextCaps::default())
}

pub fn clean_text_with(raw: &str, caps: TextCaps) -> TokenizedText {
    let plain = strip_markup(raw);
    let mut sentences = Vec::new();
    for sentence in split_sentences(&plain) {
        if sentences.len() == caps.max_sentences {
            break;
        }
        let mut tokens = tokenize(sentence);
        if tokens.is_empty() {
            continue;
        }
        tokens.truncate(caps.max_tokens);
        sentences.push(tokens);
    }
    TokenizedText { sentences }
}

/// Replaces formulas by the `formula` token, removes tags, decodes entities
/// and drops non-printable characters.
pub fn strip_markup(raw: &str) -> String {
    let mut s = raw.to_owned();
    for re in FORMULA_RES.iter() {
        s = re.replace_all(&s, " formula ").into_owned();
    }
    let s = TAG_RE.replace_all(&s, " ");
    let s = ENTITY_RE.replace_all(&s, |c: &regex::Captures<'_>| decode_entity(&c[1]));
    s.chars()
        .map(|c| if c.is_control() { ' ' } else { c })
        .filter(|c| !is_invisible(*c))
        .collect()
}

fn is_invisible(c: char) -> bool {
    matches!(c, '\u{200b}'..='\u{200f}' | '\u{2028}'..='\u{202e}' | '\u{feff}')
}

fn decode_entity(body: &str) -> String {
    let decoded = if let Some(num) = body.strip_prefix('#') {
        let code = match num.strip_prefix(['x', 'X']) {
            Some(hex) => u32::from_str_radix(hex, 16).ok(),
            None => num.parse().ok(),
        };
        code.and_then(char::from_u32)
    } else {
        match body {
            "amp" => Some('&'),
            "lt" => Some('<'),
            "gt" => Some('>'),
            "quot" => Some('"'),
            "apos" => Some('\''),
            "nbsp" => Some(' '),
            _ => None,
        }
    };
    decoded.map_or_else(|| " ".to_owned(), String::from)
}

/// Splits on `.`, `!` or `?` followed by whitespace (or end of text), except
/// after a known abbreviation.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if !matches!(c, '.' | '!' | '?') {
            continue;
        }
        let at_boundary = chars.peek().is_none_or(|&(_, n)| n.is_whitespace());
        if !at_boundary {
            continue;
        }
        if c == '.' && ends_with_abbreviation(&text[start..i]) {
            continue;
        }
        out.push(&text[start..i]);
        start = i + c.len_utf8();
    }
    if start < text.len() {
        out.push(&text[start..]);
    }
    out
}

fn ends_with_abbreviation(s: &str) -> bool {
    let word: String = s
        .trim_end()
        .rsplit(|c: char| c.is_whitespace() || c == '(')
        .next()
        .unwrap_or("")
        .to_lowercase();
    ABBREVIATIONS.contains(&word.as_str())
}

/// Maximal runs of alphanumeric characters, lowercased.
pub fn tokenize(sentence: &str) -> Vec<String> {
    sentence
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn formula_replaced() {
        let t = clean_text("Let <formula>x^2</formula> hold.");
        assert_eq!(t.sentences, vec![vec!["let", "formula", "hold"]]);
    }

    #[test]
    fn nested_display_formula_is_one_token() {
        let t = clean_text(
            r#"We get <disp-formula id="e1"><mml:math><mml:mi>x</mml:mi></mml:math></disp-formula> now."#,
        );
        assert_eq!(t.sentences, vec![vec!["we", "get", "formula", "now"]]);
    }

    #[test]
    fn long_sentence_truncated_to_50() {
        let raw: Vec<String> = (0..60).map(|i| format!("w{i}")).collect();
        let t = clean_text(&(raw.join(" ") + "."));
        assert_eq!(t.sentences.len(), 1);
        assert_eq!(t.sentences[0].len(), 50);
        assert_eq!(t.sentences[0][49], "w49");
    }

    #[test]
    fn thirty_five_sentences_capped() {
        let raw: String = (0..35).map(|i| format!("word{i}. ")).collect();
        let t = clean_text(&raw);
        assert_eq!(t.sentences.len(), 30);
        assert_eq!(t.sentences[29], vec!["word29"]);
    }

    #[test]
    fn empty_input() {
        assert!(clean_text("").is_empty());
        assert!(clean_text("  <b></b> . ! ").is_empty());
    }

    #[test]
    fn abbreviations_do_not_split() {
        let t = clean_text("As shown in Fig. 3 the value is 2.5 units. Next one!");
        assert_eq!(t.sentences.len(), 2);
        assert_eq!(
            t.sentences[0],
            vec!["as", "shown", "in", "fig", "3", "the", "value", "is", "2", "5", "units"]
        );
    }

    #[test]
    fn entities_and_controls() {
        let t = clean_text("A &amp; B&#x41;\u{0007}c &lt;tag&gt;");
        assert_eq!(t.sentences, vec![vec!["a", "ba", "c", "tag"]]);
    }

    proptest! {
        #[test]
        fn caps_never_exceeded(words in prop::collection::vec("[a-zA-Z<>/&;. !?]{0,12}", 0..400)) {
            let t = clean_text(&words.join(" "));
            prop_assert!(t.sentences.len() <= MAX_SENTENCES);
            for s in &t.sentences {
                prop_assert!(!s.is_empty() && s.len() <= MAX_TOKENS);
                for tok in s {
                    prop_assert!(tok.chars().all(|c| c.is_alphanumeric()));
                    prop_assert_eq!(tok.to_lowercase(), tok.clone());
                }
            }
        }
    }
}
