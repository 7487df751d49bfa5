use crate::types::TaskFamily;

/// Task-specific query sent to experts and rendered into the prompt.
///
/// VQA questions pass through unchanged. Premise families are rephrased as
/// ` does the image describe "<premise>" ?`, leading space included.
pub fn transform_question(family: TaskFamily, raw: &str) -> String {
    if family.is_premise() {
        format!(" does the image describe \"{raw}\" ?")
    } else {
        raw.to_string()
    }
}

/// The `Q:` line for a transformed query. The premise template's leading
/// space is absorbed by the label separator, so the line reads
/// `Q: does the image describe "..." ?`.
pub fn query_line(query: &str) -> String {
    format!("Q: {}", query.trim_start())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vqa_is_unchanged() {
        let q = "What best describes the pool of water?";
        assert_eq!(transform_question(TaskFamily::VqaMc, q), q);
        assert_eq!(transform_question(TaskFamily::VqaDa, q), q);
    }

    #[test]
    fn premise_template_is_literal() {
        assert_eq!(
            transform_question(TaskFamily::Entailment, "the truck is away from the elephant"),
            " does the image describe \"the truck is away from the elephant\" ?"
        );
        assert_eq!(
            transform_question(TaskFamily::Spatial, "the bananas are in a bowl"),
            " does the image describe \"the bananas are in a bowl\" ?"
        );
    }

    #[test]
    fn q_line_contains_query() {
        let t = transform_question(TaskFamily::Entailment, "x");
        let line = query_line(&t);
        assert_eq!(line, "Q: does the image describe \"x\" ?");
        assert!(line.contains(&t));
        assert_eq!(query_line("What?"), "Q: What?");
    }
}
