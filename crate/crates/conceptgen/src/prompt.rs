//! Prompt templates for concept generation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Which model family a prompt targets: a text-only LLM producing
/// class-level concepts, or a VLM that also sees the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMode {
    Llm,
    Vlm,
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptMode::Llm => "llm",
            PromptMode::Vlm => "vlm",
        })
    }
}

impl FromStr for PromptMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "llm" => Ok(PromptMode::Llm),
            "vlm" => Ok(PromptMode::Vlm),
            other => Err(format!("unknown prompt mode {other:?}")),
        }
    }
}

const LLM_TEMPLATE: &str = "\
Important guidelines for generating visual concepts:
1. Generate GENERAL concepts that can apply to many different photos of the same object type.
2. Include both OBJECT features (e.g., shape, color, parts) AND CONTEXT features (e.g., background, environment, setting).
3. Keep concepts short and specific (1-3 words).
4. DO NOT include class names or object names directly.

Q: What are useful visual features for distinguishing a lemur in a photo?
A: There are several useful visual features to tell there is a lemur in a photo:
- long tail
- large eyes
- gray fur
- trees
- branches
- forest

Q: What are useful features for distinguishing a {class_name} in a photo?
Already generated concepts (DO NOT repeat these): {existing_concepts}.
A: There are several useful visual features to tell there is a {class_name} in a photo. Generate approximately 10 visual concepts to provide comprehensive coverage:
";

const VLM_TEMPLATE: &str = "\
Important guidelines for generating visual concepts:
1. Generate DETAILED and SPECIFIC concepts that can apply to this image.
2. Include both OBJECT features (e.g., shape, color, parts) AND CONTEXT features (e.g., background, environment, setting).
3. Keep concepts short and specific (1-3 words).
4. DO NOT include class names or object names directly.

Examples:
Q: Look at this image carefully. Based on what you can actually see in the image, identify useful visual features that help distinguish this as a koi fish.
A: There are several useful visual features to tell there is a koi fish in a photo:
- bright orange scales
- curved tail fin
- spotted pattern
- long body
- pointed snout
- water surface

Q: Look at this image carefully. Based on what you can actually see in the image, identify useful visual features that help distinguish this as a {class_name}.
Already generated concepts (DO NOT repeat these): {existing_concepts}.
A: There are several useful visual features to tell there is a {class_name} in a photo. Generate approximately 10 visual concepts to provide comprehensive coverage:
";

/// Placeholder written when no concepts exist yet.
pub const NO_EXISTING: &str = "none";

pub fn template(mode: PromptMode) -> &'static str {
    match mode {
        PromptMode::Llm => LLM_TEMPLATE,
        PromptMode::Vlm => VLM_TEMPLATE,
    }
}

/// Fills `{class_name}` and `{existing_concepts}` (comma-joined, or
/// `"none"`) into the template for `mode`.
pub fn render_prompt(class_name: &str, existing: &[String], mode: PromptMode) -> String {
    let existing = if existing.is_empty() {
        NO_EXISTING.to_string()
    } else {
        existing.join(", ")
    };
    template(mode)
        .replace("{class_name}", class_name)
        .replace("{existing_concepts}", &existing)
}
