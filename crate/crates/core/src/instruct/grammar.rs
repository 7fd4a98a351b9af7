use serde::{Deserialize, Serialize};

use super::QaPair;

/// A reply block that did not match `Q: ...` / `A: ...`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseIssue {
    /// 1-based index of the block within the reply.
    pub block: usize,
    pub reason: String,
    pub text: String,
}

/// Splits a reply into blank-line separated blocks, each a single `Q:` line
/// followed by an `A:` line that may continue over further lines.
///
/// Bad blocks are reported and skipped; good blocks are kept.
pub fn parse_pairs(reply: &str) -> (Vec<QaPair>, Vec<ParseIssue>) {
    let mut pairs = Vec::new();
    let mut issues = Vec::new();
    let mut blocks: Vec<Vec<&str>> = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in reply.lines() {
        let line = line.trim_end();
        if line.trim().is_empty() {
            if !current.is_empty() {
                blocks.push(std::mem::take(&mut current));
            }
        } else {
            current.push(line);
        }
    }
    if !current.is_empty() {
        blocks.push(current);
    }
    for (i, lines) in blocks.iter().enumerate() {
        match parse_block(lines) {
            Ok(pair) => pairs.push(pair),
            Err(reason) => {
                let issue = ParseIssue {
                    block: i + 1,
                    reason: reason.to_string(),
                    text: lines.join("\n"),
                };
                tracing::warn!(block = issue.block, reason = %issue.reason, "unparseable reply block");
                issues.push(issue);
            }
        }
    }
    (pairs, issues)
}

fn parse_block(lines: &[&str]) -> Result<QaPair, &'static str> {
    let query = lines[0].strip_prefix("Q:").ok_or("block does not start with Q:")?.trim();
    if query.is_empty() {
        return Err("empty question");
    }
    let first_answer = lines.get(1).ok_or("question without answer")?;
    let head = first_answer.strip_prefix("A:").ok_or("second line does not start with A:")?;
    let mut response = head.trim().to_string();
    for extra in &lines[2..] {
        if extra.starts_with("Q:") || extra.starts_with("A:") {
            return Err("more than one Q/A in a block");
        }
        if !response.is_empty() {
            response.push('\n');
        }
        response.push_str(extra.trim());
    }
    if response.is_empty() {
        return Err("empty answer");
    }
    Ok(QaPair {
        query: query.to_string(),
        response,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_blocks() {
        let (pairs, issues) = parse_pairs("Q: What is the tempo?\nA: About 120 BPM.\n\nQ: Key?\nA: C major.\n");
        assert!(issues.is_empty());
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[1].response, "C major.");
    }

    #[test]
    fn malformed_third_block_is_logged() {
        let reply = "Q: a?\nA: b.\n\nQ: c?\nA: d.\n\nSure, here are more questions!";
        let (pairs, issues) = parse_pairs(reply);
        assert_eq!(pairs.len(), 2);
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].block, 3);
    }

    #[test]
    fn multi_line_answers_and_crlf() {
        let (pairs, issues) = parse_pairs("Q: Describe it.\r\nA: First line.\r\nSecond line.\r\n");
        assert!(issues.is_empty());
        assert_eq!(pairs[0].response, "First line.\nSecond line.");
    }

    #[test]
    fn empty_fields_are_rejected() {
        for reply in ["Q:\nA: x", "Q: x\nA:", "Q: x", "A: x\nQ: y", "Q: a\nA: b\nQ: c\nA: d"] {
            let (pairs, issues) = parse_pairs(reply);
            assert!(pairs.is_empty(), "{reply:?}");
            assert_eq!(issues.len(), 1, "{reply:?}");
        }
        assert_eq!(parse_pairs(""), (vec![], vec![]));
    }

    proptest! {
        #[test]
        fn never_emits_empty_text(reply in "(Q: ?[a-z ]{0,6}\n|A: ?[a-z ]{0,6}\n|[a-z ]{0,6}\n|\n){0,12}") {
            let (pairs, _) = parse_pairs(&reply);
            for p in pairs {
                prop_assert!(!p.query.trim().is_empty());
                prop_assert!(!p.response.trim().is_empty());
            }
        }

        #[test]
        fn well_formed_replies_round_trip(items in prop::collection::vec(("[a-z][a-z ?]{0,20}[a-z?]", "[a-z][a-z .]{0,20}[a-z.]"), 0..6)) {
            let reply: String = items.iter().map(|(q, a)| format!("Q: {q}\nA: {a}\n\n")).collect();
            let (pairs, issues) = parse_pairs(&reply);
            prop_assert!(issues.is_empty());
            let got: Vec<(String, String)> = pairs.into_iter().map(|p| (p.query, p.response)).collect();
            prop_assert_eq!(got, items);
        }
    }
}
