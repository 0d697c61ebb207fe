/// Matching key for a candidate name.
///
/// Casefolds, collapses whitespace, strips markdown emphasis, surrounding
/// quotes, trailing punctuation and trailing parenthetical groups. The
/// steps repeat until nothing changes, so the function is idempotent.
pub fn normalize_name(name: &str) -> String {
    let mut s: String = name
        .chars()
        .map(|c| match c {
            '\u{2018}' | '\u{2019}' | '\u{2032}' => '\'',
            '\u{201c}' | '\u{201d}' => '"',
            _ => c,
        })
        .filter(|c| !matches!(c, '*' | '`'))
        .collect::<String>()
        .to_lowercase();
    loop {
        let before = s.clone();
        s = s.split_whitespace().collect::<Vec<_>>().join(" ");
        s = s
            .trim_matches(|c: char| matches!(c, '"' | '\'' | '_') || c.is_whitespace())
            .to_string();
        s = s
            .trim_end_matches(|c: char| matches!(c, '.' | ',' | ';' | ':' | '!' | '?') || c.is_whitespace())
            .to_string();
        if let Some(stripped) = strip_trailing_parenthetical(&s) {
            s = stripped;
        }
        if s == before {
            return s;
        }
    }
}

/// Remove one balanced `( ... )` group at the end, unless it is the whole string.
fn strip_trailing_parenthetical(s: &str) -> Option<String> {
    if !s.ends_with(')') {
        return None;
    }
    let mut depth = 0i32;
    for (i, c) in s.char_indices().rev() {
        match c {
            ')' => depth += 1,
            '(' => {
                depth -= 1;
                if depth == 0 {
                    let head = s[..i].trim_end();
                    return (!head.is_empty()).then(|| head.to_string());
                }
            }
            _ => {}
        }
    }
    None
}

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "of", "and", "or", "in", "on", "for", "to", "by", "at", "with", "from", "per",
];

fn tokens(name: &str) -> Vec<String> {
    let mut t: Vec<String> = normalize_name(name)
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty() && !STOPWORDS.contains(w))
        .map(str::to_string)
        .collect();
    t.sort();
    t.dedup();
    t
}

/// Overlap coefficient of the content-word sets of two names, in `[0, 1]`.
pub fn token_overlap(a: &str, b: &str) -> f64 {
    let (ta, tb) = (tokens(a), tokens(b));
    let smaller = ta.len().min(tb.len());
    if smaller == 0 {
        return 0.0;
    }
    let shared = ta.iter().filter(|t| tb.contains(t)).count();
    shared as f64 / smaller as f64
}
