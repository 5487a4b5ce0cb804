//! Shared text utilities: tokenization and token-overlap measures.
//!
//! One tokenizer feeds the keyword index, the local reranking scorer and the
//! offline gateway stubs so that scores computed in different stages agree on
//! what a "token" is: Unicode-aware lowercasing, split on any
//! non-alphanumeric code point, no stemming, no stopword removal.

use std::collections::HashMap;

/// Lowercase and split on non-alphanumeric code points.
///
/// `"Revenue was $10B."` tokenizes to `["revenue", "was", "10b"]`.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_string())
        .collect()
}

/// Token multiset as token -> count.
pub fn token_counts(text: &str) -> HashMap<String, u32> {
    let mut counts = HashMap::new();
    for tok in tokenize(text) {
        *counts.entry(tok).or_insert(0) += 1;
    }
    counts
}

/// Jaccard similarity of the token *sets* of two strings, in [0, 1].
///
/// Both empty means similarity 0.
pub fn token_jaccard(a: &str, b: &str) -> f64 {
    let sa: std::collections::HashSet<String> = tokenize(a).into_iter().collect();
    let sb: std::collections::HashSet<String> = tokenize(b).into_iter().collect();
    if sa.is_empty() && sb.is_empty() {
        return 0.0;
    }
    let inter = sa.intersection(&sb).count();
    let union = sa.len() + sb.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Bag-of-tokens F1 between a candidate and a reference string.
///
/// Overlap is counted per occurrence (multiset intersection), the convention
/// used by extractive QA scoring. Returns 0 when either side has no tokens.
pub fn token_f1(candidate: &str, reference: &str) -> f64 {
    let cand = token_counts(candidate);
    let refr = token_counts(reference);
    let cand_total: u32 = cand.values().sum();
    let ref_total: u32 = refr.values().sum();
    if cand_total == 0 || ref_total == 0 {
        return 0.0;
    }
    let mut overlap = 0u32;
    for (tok, n) in &cand {
        if let Some(m) = refr.get(tok) {
            overlap += (*n).min(*m);
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / cand_total as f64;
    let recall = overlap as f64 / ref_total as f64;
    2.0 * precision * recall / (precision + recall)
}

fn starts_with_ci(haystack: &str, needle_lower: &str) -> bool {
    haystack.len() >= needle_lower.len()
        && haystack
            .bytes()
            .zip(needle_lower.bytes())
            .all(|(h, n)| h.to_ascii_lowercase() == n)
}

fn find_ci(haystack: &str, needle_lower: &str) -> Option<usize> {
    if needle_lower.is_empty() {
        return Some(0);
    }
    (0..=haystack.len().saturating_sub(needle_lower.len()))
        .filter(|&i| haystack.is_char_boundary(i))
        .find(|&i| starts_with_ci(&haystack[i..], needle_lower))
}

/// Strip HTML tags and collapse runs of whitespace to single spaces.
///
/// Deliberately naive: no entity table beyond the common six, no DOM; the
/// bodies of script and style elements are dropped wholesale.
pub fn strip_html(html: &str) -> String {
    let mut out = String::with_capacity(html.len());

    let mut skip_until: usize = 0;
    let mut in_tag = false;
    for (i, c) in html.char_indices() {
        if i < skip_until {
            continue;
        }
        if in_tag {
            if c == '>' {
                in_tag = false;
                out.push(' ');
            }
            continue;
        }
        match c {
            '<' => {
                for (open, close) in [("<script", "</script>"), ("<style", "</style>")] {
                    if starts_with_ci(&html[i..], open) {
                        if let Some(rel) = find_ci(&html[i..], close) {
                            skip_until = i + rel;
                        }
                    }
                }
                in_tag = true;
            }
            '&' => {
                let rest = &html[i..];
                let mut replaced = false;
                for (entity, repl) in [
                    ("&amp;", "&"),
                    ("&lt;", "<"),
                    ("&gt;", ">"),
                    ("&quot;", "\""),
                    ("&nbsp;", " "),
                    ("&#39;", "'"),
                ] {
                    if rest.starts_with(entity) {
                        out.push_str(repl);
                        skip_until = i + entity.len();
                        replaced = true;
                        break;
                    }
                }
                if !replaced {
                    out.push('&');
                }
            }
            _ => out.push(c),
        }
    }

    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_lowercases_and_splits_on_punctuation() {
        assert_eq!(
            tokenize("Revenue was $10B."),
            vec!["revenue", "was", "10b"]
        );
        assert_eq!(tokenize("AAPL/MSFT—2024"), vec!["aapl", "msft", "2024"]);
        assert!(tokenize("...!!!").is_empty());
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn jaccard_identical_and_disjoint() {
        assert_eq!(token_jaccard("net income", "Net Income"), 1.0);
        assert_eq!(token_jaccard("alpha beta", "gamma delta"), 0.0);
        let half = token_jaccard("a b", "b c");
        assert!((half - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn token_f1_partial_overlap() {
        // candidate = prefix of the reference: precision 1, recall 3/8
        let f1 = token_f1(
            "Revenue was $10B.",
            "Revenue was $10B. Revenue grew 5% in 2024.",
        );
        assert!((f1 - 2.0 * (3.0 / 8.0) / (1.0 + 3.0 / 8.0)).abs() < 1e-12);
    }

    #[test]
    fn strip_html_removes_tags_and_entities() {
        let html = "<html><body><h1>Риски</h1><p>Debt &amp; equity<br/>grew.</p>\
                    <script>var x = 1;</script></body></html>";
        let text = strip_html(html);
        assert_eq!(text, "Риски Debt & equity grew.");
    }
}
