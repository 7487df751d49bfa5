use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::text::normalize_text;
use crate::types::{InstanceRecord, TaskFamily};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub id: String,
    /// 1-based position of the offending record in the checked list.
    pub row: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }

    pub fn push(&mut self, id: &str, row: usize, message: impl Into<String>) {
        self.violations.push(Violation {
            id: id.to_string(),
            row,
            message: message.into(),
        });
    }

    pub fn extend(&mut self, other: ValidationReport) {
        self.violations.extend(other.violations);
    }

    pub fn offending_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.violations.iter().map(|v| v.id.as_str()).collect();
        ids.dedup();
        ids
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violation(s)", self.violations.len())?;
        for v in self.violations.iter().take(10) {
            write!(f, "\n  row {} `{}`: {}", v.row, v.id, v.message)?;
        }
        if self.violations.len() > 10 {
            write!(f, "\n  ... and {} more", self.violations.len() - 10)?;
        }
        Ok(())
    }
}

/// Checks every record invariant plus duplicate ids. Never fails; returns
/// what it found.
pub fn validate(records: &[InstanceRecord]) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut seen: HashMap<(&str, crate::types::Split), usize> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        let row = i + 1;
        if let Some(first) = seen.insert((r.id.as_str(), r.split), row) {
            report.push(&r.id, row, format!("duplicate id `{}` at rows {first} and {row}", r.id));
            seen.insert((r.id.as_str(), r.split), first);
        }
        check_record(r, row, &mut report);
    }
    report
}

fn check_record(r: &InstanceRecord, row: usize, report: &mut ValidationReport) {
    let mut bad = |msg: String| report.push(&r.id, row, msg);
    if r.id.is_empty() {
        bad("empty id".into());
    }
    if r.image.value.is_empty() {
        bad("empty image reference".into());
    }
    if r.question.trim().is_empty() {
        bad("empty question".into());
    }
    if let Some(g) = r.gold_choice {
        if g >= r.choices.len() {
            bad(format!("gold_choice {g} out of range for {} choices", r.choices.len()));
        }
    }
    match r.family {
        TaskFamily::VqaMc => {
            if r.choices.len() < 2 {
                bad(format!("VQA_MC needs at least 2 choices, has {}", r.choices.len()));
            }
            let mut norm: Vec<String> = r.choices.iter().map(|c| normalize_text(c).into_string()).collect();
            norm.sort();
            if norm.windows(2).any(|w| w[0] == w[1]) {
                bad("duplicate choices after normalization".into());
            }
            if r.gold_choice.is_none() && r.split != crate::types::Split::Test {
                bad("VQA_MC record without gold_choice".into());
            }
        }
        TaskFamily::VqaDa => {
            if r.gold_direct_answers.is_empty() && r.split != crate::types::Split::Test {
                bad("VQA_DA record with empty gold_direct_answers".into());
            }
        }
        TaskFamily::Entailment | TaskFamily::Spatial => {
            let fixed = r.family.fixed_choices().expect("premise families have fixed choices");
            if r.choices.iter().map(String::as_str).ne(fixed.iter().copied()) {
                bad(format!("{} choices must be [{}]", r.family, fixed.join(", ")));
            }
            if r.gold_choice.is_none() && r.split != crate::types::Split::Test {
                bad(format!("{} record without gold_choice", r.family));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{ImageRef, Split};

    fn mc(id: &str) -> InstanceRecord {
        InstanceRecord {
            id: id.into(),
            image: ImageRef::opaque("img"),
            family: TaskFamily::VqaMc,
            question: "what?".into(),
            choices: vec!["a".into(), "b".into(), "c".into(), "d".into()],
            gold_choice: Some(2),
            gold_direct_answers: vec![],
            split: Split::Val,
        }
    }

    #[test]
    fn clean_set_is_empty() {
        assert!(validate(&[mc("a"), mc("b")]).is_empty());
    }

    #[test]
    fn duplicate_id_names_both_rows() {
        let r = validate(&[mc("a"), mc("b"), mc("a")]);
        assert_eq!(r.len(), 1);
        assert_eq!(r.violations[0].row, 3);
        assert!(
            r.violations[0].message.contains("rows 1 and 3"),
            "{}",
            r.violations[0].message
        );
    }

    #[test]
    fn same_id_in_different_splits_is_fine() {
        let mut b = mc("a");
        b.split = Split::Train;
        assert!(validate(&[mc("a"), b]).is_empty());
    }

    #[test]
    fn da_without_answers() {
        let mut r = mc("a");
        r.family = TaskFamily::VqaDa;
        r.choices.clear();
        r.gold_choice = None;
        let rep = validate(&[r]);
        assert_eq!(rep.len(), 1, "{rep}");
        assert!(rep.violations[0].message.contains("gold_direct_answers"));
    }

    #[test]
    fn out_of_range_gold_and_dup_choices() {
        let mut r = mc("a");
        r.gold_choice = Some(5);
        r.choices[1] = "A.".into();
        let rep = validate(&[r]);
        assert_eq!(rep.len(), 2, "{rep}");
    }

    #[test]
    fn entailment_choices_fixed() {
        let mut r = mc("e");
        r.family = TaskFamily::Entailment;
        r.choices = vec!["yes".into(), "no".into(), "maybe".into()];
        r.gold_choice = Some(2);
        assert!(validate(std::slice::from_ref(&r)).is_empty());
        r.choices.pop();
        r.gold_choice = Some(0);
        assert_eq!(validate(&[r]).len(), 1);
    }
}
