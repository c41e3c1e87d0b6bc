use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

use crate::textprep::SPECIAL_TOKENS;

/// Ordered normalized tokens of one sentence or tweet.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
}

impl TokenSequence {
    pub fn new(tokens: Vec<String>) -> Self {
        TokenSequence { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }
}

impl<S: Into<String>> FromIterator<S> for TokenSequence {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        TokenSequence {
            tokens: iter.into_iter().map(Into::into).collect(),
        }
    }
}

/// Word segmentation strategy. Languages written without spaces plug in
/// their own implementation here.
pub trait Segmenter: Send + Sync {
    fn segment(&self, text: &str) -> Vec<String>;
}

/// Splits on whitespace, detaches punctuation into single-character tokens,
/// and emits each emoji (including ZWJ and flag sequences) as one token.
/// Special tokens such as `<mention>` stay atomic.
#[derive(Debug, Clone, Copy, Default)]
pub struct DefaultSegmenter;

fn emoji_head_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^(?:\p{Emoji_Presentation}|\p{Regional_Indicator})").expect("emoji regex")
    })
}

fn pictographic_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\p{Extended_Pictographic}").expect("pictographic regex"))
}

/// Whether one extended grapheme cluster renders as an emoji: an
/// emoji-presentation or regional-indicator head, a pictograph forced to
/// emoji style (U+FE0F) or joined by ZWJ, or a keycap sequence.
pub fn is_emoji_grapheme(g: &str) -> bool {
    if g.is_empty() {
        return false;
    }
    if emoji_head_re().is_match(g) {
        return true;
    }
    if g.contains('\u{20E3}') {
        return true;
    }
    pictographic_re().is_match(g) && (g.contains('\u{FE0F}') || g.contains('\u{200D}'))
}

/// Whether a token is a single emoji.
pub fn is_emoji_token(token: &str) -> bool {
    let mut gs = token.graphemes(true);
    matches!((gs.next(), gs.next()), (Some(g), None) if is_emoji_grapheme(g))
}

fn is_punct_grapheme(g: &str) -> bool {
    let mut chars = g.chars();
    match chars.next() {
        Some(c) => !c.is_alphanumeric() && c != '_' && !c.is_whitespace(),
        None => false,
    }
}

impl Segmenter for DefaultSegmenter {
    fn segment(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        for chunk in text.split_whitespace() {
            segment_chunk(chunk, &mut out);
        }
        out
    }
}

fn segment_chunk(chunk: &str, out: &mut Vec<String>) {
    let mut word = String::new();
    let mut rest = chunk;
    while !rest.is_empty() {
        if let Some(special) = SPECIAL_TOKENS.iter().find(|s| rest.starts_with(*s)) {
            flush(&mut word, out);
            out.push((*special).to_string());
            rest = &rest[special.len()..];
            continue;
        }
        let g = rest.graphemes(true).next().expect("nonempty");
        if is_emoji_grapheme(g) || is_punct_grapheme(g) {
            flush(&mut word, out);
            out.push(g.to_string());
        } else {
            word.push_str(g);
        }
        rest = &rest[g.len()..];
    }
    flush(&mut word, out);
}

fn flush(word: &mut String, out: &mut Vec<String>) {
    if !word.is_empty() {
        out.push(std::mem::take(word));
    }
}

pub fn tokenize(text: &str, segmenter: &dyn Segmenter) -> TokenSequence {
    TokenSequence::new(segmenter.segment(text))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s, &DefaultSegmenter).tokens
    }

    #[test]
    fn whitespace_and_punctuation() {
        assert_eq!(toks("i love it!"), ["i", "love", "it", "!"]);
        assert_eq!(toks("wait... what?"), ["wait", ".", ".", ".", "what", "?"]);
    }

    #[test]
    fn specials_are_atomic() {
        assert_eq!(toks("<mention> hi"), ["<mention>", "hi"]);
        assert_eq!(toks("x<number>!"), ["x", "<number>", "!"]);
    }

    #[test]
    fn emoji_boundaries() {
        assert_eq!(toks("good😊day"), ["good", "😊", "day"]);
        // Oracle: scan chars and pick out the U+1F60A codepoint position.
        let s = "good😊day";
        let pos: Vec<usize> = s
            .char_indices()
            .filter(|(_, c)| *c as u32 == 0x1F60A)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(pos, vec![4]);
        assert_eq!(&s[..pos[0]], "good");
        assert_eq!(&s[pos[0] + 4..], "day");
    }

    #[test]
    fn emoji_sequences_are_single_tokens() {
        assert_eq!(toks("👨‍👩‍👧ok🇯🇵"), ["👨‍👩‍👧", "ok", "🇯🇵"]);
        assert_eq!(toks("❤️❤️"), ["❤️", "❤️"]);
        assert_eq!(toks("👍🏽"), ["👍🏽"]);
    }

    #[test]
    fn emoji_classification() {
        assert!(is_emoji_token("😊"));
        assert!(is_emoji_token("❤️"));
        assert!(is_emoji_token("1️⃣"));
        assert!(!is_emoji_token("❤"));
        assert!(!is_emoji_token("©"));
        assert!(!is_emoji_token("a"));
        assert!(!is_emoji_token("😊😊"));
    }

    #[test]
    fn cjk_punctuation_detached() {
        assert_eq!(toks("すごい。"), ["すごい", "。"]);
    }
}
