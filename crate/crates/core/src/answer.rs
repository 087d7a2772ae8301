//! Parsing of constrained model answers.

/// Lowercase alphanumeric words of `text`.
fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric() && c != '\'')
        .filter(|w| !w.is_empty())
        .map(|w| w.trim_matches('\'').to_lowercase())
        .collect()
}

fn contains_phrase(haystack: &[String], phrase: &[String]) -> bool {
    !phrase.is_empty() && haystack.windows(phrase.len()).any(|w| w == phrase)
}

/// The value whose keyword appears in `text`, provided every keyword found
/// maps to the same value. Matching is case-insensitive on whole words. A
/// keyword that is part of a longer matched keyword does not count on its own.
pub fn single_keyword<T: Copy + PartialEq>(text: &str, table: &[(&str, T)]) -> Option<T> {
    let hay = words(text);
    let phrases: Vec<(Vec<String>, T)> = table.iter().map(|(k, v)| (words(k), *v)).collect();
    let mut found: Option<T> = None;
    for (i, (p, v)) in phrases.iter().enumerate() {
        if !contains_phrase(&hay, p) {
            continue;
        }
        let shadowed = phrases.iter().enumerate().any(|(j, (q, _))| {
            j != i && q.len() > p.len() && contains_phrase(q, p) && contains_phrase(&hay, q)
        });
        if shadowed {
            continue;
        }
        match found {
            None => found = Some(*v),
            Some(prev) if prev == *v => {}
            Some(_) => return None,
        }
    }
    found
}

/// First nonempty line with surrounding punctuation and markup removed.
pub fn first_line(text: &str) -> &str {
    text.lines()
        .map(|l| l.trim().trim_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace()))
        .find(|l| !l.is_empty())
        .unwrap_or("")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct YesNo {
    pub yes: bool,
    pub rationale: Option<String>,
}

/// Reads a YES/NO verdict from the first line. Returns `None` when the first
/// line does not begin with exactly one of the two words.
pub fn parse_yes_no(text: &str) -> Option<YesNo> {
    let head = first_line(text);
    let first_word = words(head).into_iter().next()?;
    let yes = match first_word.as_str() {
        "yes" => true,
        "no" => false,
        _ => return None,
    };
    let mut rest: Vec<&str> = Vec::new();
    let mut seen_head = false;
    for l in text.lines() {
        let t = l.trim();
        if t.is_empty() {
            continue;
        }
        if !seen_head {
            seen_head = true;
            let tail = t
                .trim_start_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
                .get(first_word.len()..)
                .unwrap_or("")
                .trim_start_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace());
            if !tail.is_empty() {
                rest.push(tail);
            }
            continue;
        }
        rest.push(t);
    }
    let rationale = (!rest.is_empty()).then(|| rest.join(" "));
    Some(YesNo { yes, rationale })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, Copy, PartialEq)]
    enum E {
        Dyn,
        Stat,
        Ment,
    }

    const TABLE: &[(&str, E)] =
        &[("dynamic", E::Dyn), ("dynamically active", E::Dyn), ("stative", E::Stat), ("mentally active", E::Ment)];

    #[test]
    fn keyword_scan() {
        assert_eq!(single_keyword("Mentally Active.", TABLE), Some(E::Ment));
        assert_eq!(single_keyword("It is dynamically active", TABLE), Some(E::Dyn));
        assert_eq!(single_keyword("Stative, Dynamically Active or Mentally Active", TABLE), None);
        assert_eq!(single_keyword("no idea", TABLE), None);
        assert_eq!(single_keyword("undynamic", TABLE), None);
    }

    #[test]
    fn yes_no() {
        assert_eq!(parse_yes_no("YES\nBecause.").unwrap(), YesNo { yes: true, rationale: Some("Because.".into()) });
        assert_eq!(parse_yes_no("**No** - it would happen anyway.").unwrap().yes, false);
        assert_eq!(parse_yes_no("No.").unwrap().rationale, None);
        assert!(parse_yes_no("Maybe").is_none());
        assert!(parse_yes_no("").is_none());
    }
}
