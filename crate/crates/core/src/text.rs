//! Word tokenization and rule-based sentence splitting.
//!
//! Tokens are whitespace-delimited chunks with leading and trailing
//! non-alphanumeric characters peeled off as single-character tokens, so
//! `"Tasty."` becomes `["Tasty", "."]`. Offsets are in chars, not bytes.

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let chunk_start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        split_chunk(&chars, chunk_start, i, &mut out);
    }
    out
}

fn split_chunk(chars: &[char], start: usize, end: usize, out: &mut Vec<Token>) {
    let mut core_start = start;
    while core_start < end && !chars[core_start].is_alphanumeric() {
        core_start += 1;
    }
    let mut core_end = end;
    while core_end > core_start && !chars[core_end - 1].is_alphanumeric() {
        core_end -= 1;
    }
    let single = |i: usize| Token {
        text: chars[i].to_string(),
        start: i,
        end: i + 1,
    };
    out.extend((start..core_start).map(single));
    if core_start < core_end {
        out.push(Token {
            text: chars[core_start..core_end].iter().collect(),
            start: core_start,
            end: core_end,
        });
    }
    out.extend((core_end.max(core_start)..end).map(single));
}

pub fn tokenize_words(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.text).collect()
}

pub fn is_word(token: &str) -> bool {
    token.chars().any(char::is_alphanumeric)
}

/// Number of tokens that carry at least one alphanumeric character.
pub fn word_count<S: AsRef<str>>(tokens: &[S]) -> usize {
    tokens.iter().filter(|t| is_word(t.as_ref())).count()
}

/// Case-folded token with surrounding punctuation stripped; the key used for
/// lexicon lookups.
pub fn normalize_word(token: &str) -> String {
    token.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase()
}

/// Locate `tokens` in order inside `text` and return their char offsets.
/// Returns `None` if some token cannot be found after the previous one.
pub fn align_tokens<S: AsRef<str>>(text: &str, tokens: &[S]) -> Option<Vec<(usize, usize)>> {
    let chars: Vec<char> = text.chars().collect();
    let mut cursor = 0;
    let mut offsets = Vec::with_capacity(tokens.len());
    for tok in tokens {
        let needle: Vec<char> = tok.as_ref().chars().collect();
        if needle.is_empty() {
            return None;
        }
        let found =
            (cursor..=chars.len().saturating_sub(needle.len())).find(|&s| chars[s..s + needle.len()] == needle[..])?;
        offsets.push((found, found + needle.len()));
        cursor = found + needle.len();
    }
    Some(offsets)
}

/// Substring by char offsets.
pub fn char_slice(text: &str, start: usize, end: usize) -> String {
    text.chars().skip(start).take(end.saturating_sub(start)).collect()
}

const ABBREVIATIONS: &[&str] = &[
    "dr.", "mr.", "mrs.", "ms.", "prof.", "sr.", "jr.", "st.", "mt.", "ft.", "vs.", "etc.", "e.g.", "i.e.", "inc.",
    "ltd.", "co.", "corp.", "no.", "approx.", "dept.", "est.", "min.", "max.", "a.m.", "p.m.", "jan.", "feb.", "mar.",
    "apr.", "jun.", "jul.", "aug.", "sep.", "sept.", "oct.", "nov.", "dec.", "ave.", "blvd.", "rd.", "hwy.", "u.s.",
    "oz.", "lb.", "lbs.",
];

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closing(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}')
}

/// True if the chunk (whitespace-delimited, ending in `.`) should not end a
/// sentence.
fn blocks_split(chunk: &str) -> bool {
    let lower = chunk.trim_start_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
    if ABBREVIATIONS.contains(&lower.as_str()) {
        return true;
    }
    // single-letter initial such as "J."
    let mut it = lower.chars();
    matches!((it.next(), it.next(), it.next()), (Some(c), Some('.'), None) if c.is_alphabetic())
}

/// Split on terminal punctuation followed by whitespace or end of text.
/// Returned slices are trimmed and non-empty.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let idx: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut sent_start = 0usize; // byte offset
    let mut i = 0;
    while i < idx.len() {
        let (_, c) = idx[i];
        if !is_terminal(c) {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < idx.len() && (is_terminal(idx[j + 1].1) || is_closing(idx[j + 1].1)) {
            j += 1;
        }
        let at_end = j + 1 == idx.len();
        if !at_end && !idx[j + 1].1.is_whitespace() {
            i = j + 1;
            continue;
        }
        let end_byte = if at_end { text.len() } else { idx[j + 1].0 };
        if c == '.' && i == j {
            let chunk_start = text[..idx[i].0]
                .rfind(char::is_whitespace)
                .map(|p| p + text[p..].chars().next().map_or(1, char::len_utf8))
                .unwrap_or(0)
                .max(sent_start);
            if blocks_split(&text[chunk_start..end_byte]) {
                i = j + 1;
                continue;
            }
        }
        let piece = text[sent_start..end_byte].trim();
        if !piece.is_empty() {
            out.push(piece);
        }
        sent_start = end_byte;
        i = j + 1;
    }
    let tail = text[sent_start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peels_punctuation() {
        assert_eq!(
            tokenize_words("The food was Tasty."),
            vec!["The", "food", "was", "Tasty", "."]
        );
        assert_eq!(tokenize_words("(great!) don't"), vec!["(", "great", "!", ")", "don't"]);
        assert_eq!(tokenize_words("..."), vec![".", ".", "."]);
        assert!(tokenize("   ").is_empty());
    }

    #[test]
    fn offsets_are_chars() {
        let toks = tokenize("café au lait.");
        assert_eq!(toks[0].text, "café");
        assert_eq!((toks[0].start, toks[0].end), (0, 4));
        assert_eq!((toks[3].start, toks[3].end), (12, 13));
    }

    #[test]
    fn word_counting_skips_punctuation() {
        let toks = tokenize_words("Hello , world !");
        assert_eq!(word_count(&toks), 2);
        assert_eq!(normalize_word("\"Tasty!"), "tasty");
    }

    #[test]
    fn splits_on_terminals() {
        assert_eq!(
            split_sentences("Great food. Bad service."),
            vec!["Great food.", "Bad service."]
        );
        assert_eq!(split_sentences("Wow!! Really? Yes"), vec!["Wow!!", "Really?", "Yes"]);
        assert!(split_sentences("").is_empty());
    }

    #[test]
    fn abbreviations_and_initials_block() {
        assert_eq!(
            split_sentences("I met Dr. Smith today."),
            vec!["I met Dr. Smith today."]
        );
        assert_eq!(
            split_sentences("Ask for J. Doe. He is great."),
            vec!["Ask for J. Doe.", "He is great."]
        );
        assert_eq!(split_sentences("It cost 3.50 dollars."), vec!["It cost 3.50 dollars."]);
    }

    #[test]
    fn split_reconstructs_text() {
        let text = "  One.  Two!\nThree? four";
        let joined: String = split_sentences(text).concat();
        let squeezed: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        assert_eq!(joined.replace(' ', ""), squeezed);
    }

    #[test]
    fn aligns_tokens() {
        let offs = align_tokens("a nice  car .", &["a", "nice", "car", "."]).unwrap();
        assert_eq!(offs, vec![(0, 1), (2, 6), (8, 11), (12, 13)]);
        assert!(align_tokens("a b", &["b", "a"]).is_none());
    }
}
