/// Word-level diff in wdiff notation: `[-removed-]` and `{+added+}`.
///
/// Used to report how an adapted example prompt deviates from the template
/// it was written from. Plain LCS; prompts are a few hundred words at most.
pub fn diff_words(from: &str, to: &str) -> String {
    let a: Vec<&str> = from.split_whitespace().collect();
    let b: Vec<&str> = to.split_whitespace().collect();
    let (n, m) = (a.len(), b.len());
    let mut lcs = vec![vec![0u32; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            lcs[i][j] = if a[i] == b[j] {
                lcs[i + 1][j + 1] + 1
            } else {
                lcs[i + 1][j].max(lcs[i][j + 1])
            };
        }
    }

    let mut out: Vec<String> = Vec::new();
    let mut removed: Vec<&str> = Vec::new();
    let mut added: Vec<&str> = Vec::new();
    let flush = |out: &mut Vec<String>, removed: &mut Vec<&str>, added: &mut Vec<&str>| {
        if !removed.is_empty() {
            out.push(format!("[-{}-]", removed.join(" ")));
            removed.clear();
        }
        if !added.is_empty() {
            out.push(format!("{{+{}+}}", added.join(" ")));
            added.clear();
        }
    };
    let (mut i, mut j) = (0, 0);
    while i < n || j < m {
        if i < n && j < m && a[i] == b[j] {
            flush(&mut out, &mut removed, &mut added);
            out.push(a[i].to_string());
            i += 1;
            j += 1;
        } else if j < m && (i == n || lcs[i][j + 1] >= lcs[i + 1][j]) {
            added.push(b[j]);
            j += 1;
        } else {
            removed.push(a[i]);
            i += 1;
        }
    }
    flush(&mut out, &mut removed, &mut added);
    out.join(" ")
}

#[cfg(test)]
mod tests {
    use super::diff_words;

    #[test]
    fn identical_text_has_no_markers() {
        assert_eq!(diff_words("a b c", "a  b c"), "a b c");
    }

    #[test]
    fn replacement_is_marked() {
        assert_eq!(
            diff_words("list 40 factors that are quantifiable", "list forty factors that are quantifiable"),
            "list [-40-] {+forty+} factors that are quantifiable"
        );
    }

    #[test]
    fn insertion_and_deletion() {
        assert_eq!(diff_words("a c", "a b c"), "a {+b+} c");
        assert_eq!(diff_words("a b c", "a c"), "a [-b-] c");
        assert_eq!(diff_words("", "x"), "{+x+}");
    }
}
