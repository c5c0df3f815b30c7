//! Character classes and case folding shared by tokenizers and embedding
//! preprocessing.

/// Han ideographs, kana and Hangul syllables. Each such codepoint is a token
/// on its own under unigram tokenization.
pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF       // hiragana, katakana
        | 0x3400..=0x4DBF     // ext A
        | 0x4E00..=0x9FFF     // unified ideographs
        | 0xAC00..=0xD7AF     // hangul syllables
        | 0xF900..=0xFAFF     // compatibility ideographs
        | 0x20000..=0x2A6DF   // ext B
        | 0x2A700..=0x2EBEF   // ext C-F
        | 0x2F800..=0x2FA1F   // compatibility supplement
        | 0x30000..=0x3134F)  // ext G
}

/// Characters that may appear inside a token.
pub fn is_word_char(c: char) -> bool {
    is_cjk(c) || c.is_alphanumeric()
}

/// One-to-one lowercase mapping per codepoint. Characters whose full
/// lowercase mapping expands to several codepoints keep only the first one,
/// so the character count never changes. CJK text is unaffected.
pub fn fold_case(c: char) -> char {
    if c.is_ascii() {
        return c.to_ascii_lowercase();
    }
    c.to_lowercase().next().unwrap_or(c)
}

pub fn lowercase(text: &str) -> String {
    text.chars().map(fold_case).collect()
}
