//! ROUGE-L: longest-common-subsequence F-measure over normalized tokens.

/// Lowercase, strip punctuation, split on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|word| {
            let cleaned: String = word
                .chars()
                .filter(|c| !c.is_ascii_punctuation())
                .flat_map(|c| c.to_lowercase())
                .collect();
            (!cleaned.is_empty()).then_some(cleaned)
        })
        .collect()
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    // One-row DP over the shorter sequence.
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut row = vec![0usize; short.len() + 1];
    for item in long {
        let mut diag = 0;
        for (j, other) in short.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if item == other {
                diag + 1
            } else {
                up.max(row[j])
            };
            diag = up;
        }
    }
    row[short.len()]
}

/// ROUGE-L F-measure at beta = 1. Two empty texts score 1.0; exactly one
/// empty scores 0.0.
pub fn rouge_l(pred: &str, reference: &str) -> f64 {
    let pred_tokens = tokenize(pred);
    let ref_tokens = tokenize(reference);
    match (pred_tokens.is_empty(), ref_tokens.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let lcs = lcs_len(&pred_tokens, &ref_tokens) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let precision = lcs / pred_tokens.len() as f64;
    let recall = lcs / ref_tokens.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_texts_score_one() {
        assert_eq!(rouge_l("The lungs are clear.", "The lungs are clear."), 1.0);
    }

    #[test]
    fn hand_computed_case() {
        // pred "a b c", ref "a c": LCS=2, P=2/3, R=1, F1=0.8.
        assert!((rouge_l("a b c", "a c") - 0.8).abs() < 1e-12);
    }

    #[test]
    fn disjoint_tokens_score_zero() {
        assert_eq!(rouge_l("alpha beta", "gamma delta"), 0.0);
    }

    #[test]
    fn empty_edge_cases() {
        assert_eq!(rouge_l("", ""), 1.0);
        assert_eq!(rouge_l("", "x"), 0.0);
        assert_eq!(rouge_l("x", ""), 0.0);
        // Punctuation-only collapses to empty.
        assert_eq!(rouge_l("...", "!!!"), 1.0);
    }

    #[test]
    fn normalization_ignores_case_and_punctuation() {
        assert_eq!(rouge_l("Clear lungs.", "clear LUNGS"), 1.0);
    }
}
