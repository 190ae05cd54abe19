//! Versioned prompt templates shipped under `templates/`.
//!
//! Templates use `{name}` placeholders. Rendering is single-pass, so
//! placeholder-like text inside a question or query is never expanded.

use std::collections::BTreeMap;

pub const TEMPLATE_VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Template {
    GenerateNonReasoning,
    GenerateReasoning,
    DiscriminateNonReasoning,
    DiscriminateReasoning,
    DiscriminateReasoningSchema,
}

impl Template {
    pub const ALL: [Template; 5] = [
        Template::GenerateNonReasoning,
        Template::GenerateReasoning,
        Template::DiscriminateNonReasoning,
        Template::DiscriminateReasoning,
        Template::DiscriminateReasoningSchema,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Template::GenerateNonReasoning => "generate_non_reasoning",
            Template::GenerateReasoning => "generate_reasoning",
            Template::DiscriminateNonReasoning => "discriminate_non_reasoning",
            Template::DiscriminateReasoning => "discriminate_reasoning",
            Template::DiscriminateReasoningSchema => "discriminate_reasoning_schema",
        }
    }

    pub fn text(self) -> &'static str {
        match self {
            Template::GenerateNonReasoning => {
                include_str!("../templates/generate_non_reasoning.txt")
            }
            Template::GenerateReasoning => include_str!("../templates/generate_reasoning.txt"),
            Template::DiscriminateNonReasoning => {
                include_str!("../templates/discriminate_non_reasoning.txt")
            }
            Template::DiscriminateReasoning => {
                include_str!("../templates/discriminate_reasoning.txt")
            }
            Template::DiscriminateReasoningSchema => {
                include_str!("../templates/discriminate_reasoning_schema.txt")
            }
        }
    }

    pub fn render(self, vars: &[(&str, &str)]) -> String {
        render(self.text(), vars)
    }
}

/// Snapshot of every template's text keyed by name, for run records.
pub fn snapshot() -> BTreeMap<String, String> {
    Template::ALL
        .iter()
        .map(|t| {
            (
                format!("{}@{TEMPLATE_VERSION}", t.name()),
                t.text().to_string(),
            )
        })
        .collect()
}

fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let replaced = after.find('}').and_then(|close| {
            let key = &after[..close];
            vars.iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| (close, *v))
        });
        match replaced {
            Some((close, value)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}
