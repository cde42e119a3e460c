//! Prompt templates, stored byte-for-byte in `prompts/*.txt`.
//!
//! Substitution is single pass: text inserted for one placeholder is never
//! scanned for another.

/// Profile generation prompt; `{api_document}` is replaced by the document.
pub const EXPANSION_V1: &str = include_str!("../prompts/expansion_v1.txt");
/// Consistency judgement prompt. Has no placeholder; both inputs are appended.
pub const JUDGEMENT_V1: &str = include_str!("../prompts/judgement_v1.txt");
/// Two-logit rerank prompt with `FILL_QUERY_HERE` and `FILL_DOCUMENT_HERE`.
pub const RERANK_V1: &str = include_str!("../prompts/rerank_v1.txt");
/// Completeness audit prompt. Has no placeholder; the document is appended.
pub const COMPLETENESS_AUDIT_V1: &str = include_str!("../prompts/completeness_audit_v1.txt");

pub const API_DOCUMENT_SLOT: &str = "{api_document}";
pub const QUERY_SLOT: &str = "FILL_QUERY_HERE";
pub const DOCUMENT_SLOT: &str = "FILL_DOCUMENT_HERE";

/// Replaces each `(slot, value)` once, scanning only the template.
fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let mut positions: Vec<(usize, &str, &str)> = slots
        .iter()
        .map(|(slot, value)| {
            let at = template
                .find(slot)
                .unwrap_or_else(|| panic!("template lacks {slot}"));
            (at, *slot, *value)
        })
        .collect();
    positions.sort_by_key(|(at, _, _)| *at);
    let mut out =
        String::with_capacity(template.len() + slots.iter().map(|(_, v)| v.len()).sum::<usize>());
    let mut cursor = 0;
    for (at, slot, value) in positions {
        out.push_str(&template[cursor..at]);
        out.push_str(value);
        cursor = at + slot.len();
    }
    out.push_str(&template[cursor..]);
    out
}

pub fn expansion_prompt(api_document: &str) -> String {
    fill(EXPANSION_V1, &[(API_DOCUMENT_SLOT, api_document)])
}

pub fn judgement_prompt(original_document: &str, tool_profile: &str) -> String {
    format!(
        "{JUDGEMENT_V1}\n(1) The original API documentation:\n{original_document}\n\n(2) The expanded \"tool_profile\":\n{tool_profile}\n"
    )
}

pub fn rerank_prompt(query: &str, document: &str) -> String {
    fill(RERANK_V1, &[(QUERY_SLOT, query), (DOCUMENT_SLOT, document)])
}

pub fn audit_prompt(document: &str) -> String {
    format!("{COMPLETENESS_AUDIT_V1}\n{document}\n")
}
