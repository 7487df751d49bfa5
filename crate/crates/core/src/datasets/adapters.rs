//! Best-effort field mappings from upstream benchmark rows.
//!
//! Any row carrying a `family` key is read as canonical JSONL regardless of
//! the dataset name. Otherwise:
//!
//! * `aokvqa`: `question_id`, `image_id`, `question`, `choices`,
//!   `correct_choice_idx`, `direct_answers`. Becomes VQA_MC, or VQA_DA (choices
//!   dropped) when the manifest declares VQA_DA.
//! * `okvqa`, `vqav2`: merged question/annotation rows: `question_id`,
//!   `image_id`, `question`, `answers` (strings or `{"answer": ...}`).
//! * `esnlive`: `pairID`, `Flickr30K_ID`, `hypothesis` (or `sentence2`),
//!   `gold_label` in entailment/contradiction/neutral → yes/no/maybe.
//! * `vsr`: `image`, `caption`, `label` (1 true, 0 false) → yes/no.
//! * `gqa`: object keyed by question id with `imageId`, `question`, `answer`.
//! * `clevr`: `{"questions": [...]}` with `question_index`,
//!   `image_filename`, `question`, `answer`.
//!
//! Fields the pipeline never reads (rationales, explanations, relation
//! labels) are dropped. Image references become paths under `image_root`
//! (where `{split}` is substituted) or opaque ids when no root is given.

use serde_json::Value;

use super::DatasetName;
use crate::types::{ImageKind, ImageRef, InstanceRecord, Split, TaskFamily, ENTAILMENT_CHOICES, SPATIAL_CHOICES};

pub(crate) struct RowContext<'a> {
    pub name: DatasetName,
    pub family: TaskFamily,
    pub split: Split,
    pub image_root: Option<&'a str>,
    /// Object key for keyed-object files (GQA).
    pub key: Option<&'a str>,
    /// 1-based row position, used to mint ids when upstream has none.
    pub row: usize,
}

type RowResult = Result<InstanceRecord, String>;

pub(crate) fn convert(v: &Value, ctx: &RowContext<'_>) -> RowResult {
    if v.get("family").is_some() {
        return serde_json::from_value(v.clone()).map_err(|e| format!("canonical row: {e}"));
    }
    match ctx.name {
        DatasetName::Aokvqa => aokvqa(v, ctx),
        DatasetName::Okvqa | DatasetName::Vqav2 => vqa(v, ctx),
        DatasetName::Esnlive => esnlive(v, ctx),
        DatasetName::Vsr => vsr(v, ctx),
        DatasetName::Gqa => gqa(v, ctx),
        DatasetName::Clevr => clevr(v, ctx),
        DatasetName::Custom => Err("custom datasets must be canonical JSONL (rows with a `family` key)".into()),
    }
}

fn field<'v>(v: &'v Value, names: &[&str]) -> Result<&'v Value, String> {
    names
        .iter()
        .find_map(|n| v.get(*n).filter(|x| !x.is_null()))
        .ok_or_else(|| format!("missing field `{}`", names[0]))
}

fn string(v: &Value, names: &[&str]) -> Result<String, String> {
    match field(v, names)? {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        other => Err(format!("field `{}` should be a string, got {other}", names[0])),
    }
}

fn opt_string(v: &Value, names: &[&str]) -> Option<String> {
    string(v, names).ok()
}

fn string_list(v: &Value, name: &str) -> Result<Vec<String>, String> {
    match v.get(name) {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::Array(items)) => items
            .iter()
            .map(|x| match x {
                Value::String(s) => Ok(s.clone()),
                Value::Object(_) => x
                    .get("answer")
                    .and_then(Value::as_str)
                    .map(str::to_string)
                    .ok_or_else(|| format!("`{name}` entry without an `answer` string")),
                other => Err(format!("`{name}` entry should be a string, got {other}")),
            })
            .collect(),
        Some(other) => Err(format!("`{name}` should be a list, got {other}")),
    }
}

fn image(ctx: &RowContext<'_>, file_name: &str) -> ImageRef {
    match ctx.image_root {
        Some(root) => {
            let root = root.replace("{split}", ctx.split.as_str());
            let value = format!("{}/{}", root.trim_end_matches('/'), file_name);
            let kind = if value.starts_with("http://") || value.starts_with("https://") {
                ImageKind::Url
            } else {
                ImageKind::Path
            };
            ImageRef { kind, value }
        }
        None => ImageRef::opaque(file_name.rsplit_once('.').map_or(file_name, |(stem, _)| stem)),
    }
}

fn coco_file(image_id: &str) -> String {
    match image_id.parse::<u64>() {
        Ok(n) => format!("{n:012}.jpg"),
        Err(_) => image_id.to_string(),
    }
}

fn aokvqa(v: &Value, ctx: &RowContext<'_>) -> RowResult {
    let image_id = string(v, &["image_id"])?;
    let mut choices = string_list(v, "choices")?;
    let mut gold_choice = match v.get("correct_choice_idx") {
        None | Some(Value::Null) => None,
        Some(x) => Some(x.as_u64().ok_or("`correct_choice_idx` should be an integer")? as usize),
    };
    if ctx.family == TaskFamily::VqaDa {
        choices.clear();
        gold_choice = None;
    }
    Ok(InstanceRecord {
        id: string(v, &["question_id"])?,
        image: image(ctx, &coco_file(&image_id)),
        family: ctx.family,
        question: string(v, &["question"])?,
        choices,
        gold_choice,
        gold_direct_answers: string_list(v, "direct_answers")?,
        split: ctx.split,
    })
}

fn vqa(v: &Value, ctx: &RowContext<'_>) -> RowResult {
    let image_id = string(v, &["image_id"])?;
    Ok(InstanceRecord {
        id: string(v, &["question_id"])?,
        image: image(ctx, &coco_file(&image_id)),
        family: TaskFamily::VqaDa,
        question: string(v, &["question"])?,
        choices: Vec::new(),
        gold_choice: None,
        gold_direct_answers: string_list(v, "answers")?,
        split: ctx.split,
    })
}

fn esnlive(v: &Value, ctx: &RowContext<'_>) -> RowResult {
    let flickr = string(v, &["Flickr30K_ID", "Flickr30kID", "flickr30k_id", "image"])?;
    let file = if flickr.contains('.') {
        flickr.clone()
    } else {
        format!("{flickr}.jpg")
    };
    let gold_choice = match opt_string(v, &["gold_label", "label"]).as_deref() {
        Some("entailment") => Some(0),
        Some("contradiction") => Some(1),
        Some("neutral") => Some(2),
        Some(other) => return Err(format!("unknown e-SNLI-VE label `{other}`")),
        None => None,
    };
    Ok(InstanceRecord {
        id: opt_string(v, &["pairID", "pair_id", "id"]).unwrap_or_else(|| format!("{flickr}#{}", ctx.row)),
        image: image(ctx, &file),
        family: TaskFamily::Entailment,
        question: string(v, &["hypothesis", "sentence2"])?,
        choices: ENTAILMENT_CHOICES.iter().map(|s| s.to_string()).collect(),
        gold_choice,
        gold_direct_answers: Vec::new(),
        split: ctx.split,
    })
}

fn vsr(v: &Value, ctx: &RowContext<'_>) -> RowResult {
    let file = string(v, &["image"])?;
    let gold_choice = match v.get("label") {
        None | Some(Value::Null) => None,
        Some(Value::Bool(b)) => Some(if *b { 0 } else { 1 }),
        Some(x) => match x.as_u64() {
            Some(1) => Some(0),
            Some(0) => Some(1),
            _ => return Err(format!("VSR label should be 0 or 1, got {x}")),
        },
    };
    Ok(InstanceRecord {
        id: opt_string(v, &["id"]).unwrap_or_else(|| format!("vsr-{}-{}", ctx.split, ctx.row)),
        image: image(ctx, &file),
        family: TaskFamily::Spatial,
        question: string(v, &["caption"])?,
        choices: SPATIAL_CHOICES.iter().map(|s| s.to_string()).collect(),
        gold_choice,
        gold_direct_answers: Vec::new(),
        split: ctx.split,
    })
}

fn gqa(v: &Value, ctx: &RowContext<'_>) -> RowResult {
    let id = match ctx.key {
        Some(k) => k.to_string(),
        None => string(v, &["id", "question_id"])?,
    };
    let image_id = string(v, &["imageId", "image_id"])?;
    Ok(InstanceRecord {
        id,
        image: image(ctx, &format!("{image_id}.jpg")),
        family: TaskFamily::VqaDa,
        question: string(v, &["question"])?,
        choices: Vec::new(),
        gold_choice: None,
        gold_direct_answers: opt_string(v, &["answer"]).into_iter().collect(),
        split: ctx.split,
    })
}

fn clevr(v: &Value, ctx: &RowContext<'_>) -> RowResult {
    let index = string(v, &["question_index"]).unwrap_or_else(|_| ctx.row.to_string());
    Ok(InstanceRecord {
        id: format!("clevr-{}-{index}", ctx.split),
        image: image(ctx, &string(v, &["image_filename"])?),
        family: TaskFamily::VqaDa,
        question: string(v, &["question"])?,
        choices: Vec::new(),
        gold_choice: None,
        gold_direct_answers: opt_string(v, &["answer"]).into_iter().collect(),
        split: ctx.split,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn ctx(name: DatasetName, family: TaskFamily) -> RowContext<'static> {
        RowContext {
            name,
            family,
            split: Split::Val,
            image_root: None,
            key: None,
            row: 4,
        }
    }

    #[test]
    fn aokvqa_row() {
        let row = json!({
            "question_id": "22MexNkBPpdZGX6sxbxVBH",
            "image_id": 299207,
            "question": "What is the man by the bags awaiting?",
            "choices": ["skateboarder", "train", "delivery", "cab"],
            "correct_choice_idx": 3,
            "direct_answers": ["ride", "ride", "bus", "taxi"],
            "rationales": ["ignored"]
        });
        let r = convert(&row, &ctx(DatasetName::Aokvqa, TaskFamily::VqaMc)).unwrap();
        assert_eq!(r.family, TaskFamily::VqaMc);
        assert_eq!(r.gold_choice, Some(3));
        assert_eq!(r.image, ImageRef::opaque("000000299207"));
        assert_eq!(r.gold_direct_answers.len(), 4);

        let da = convert(&row, &ctx(DatasetName::Aokvqa, TaskFamily::VqaDa)).unwrap();
        assert!(da.choices.is_empty() && da.gold_choice.is_none());
    }

    #[test]
    fn image_root_substitutes_split() {
        let mut c = ctx(DatasetName::Aokvqa, TaskFamily::VqaMc);
        c.image_root = Some("/data/coco/{split}2017/");
        let row =
            json!({"question_id": "q", "image_id": 7, "question": "?", "choices": ["a","b"], "correct_choice_idx": 0});
        let r = convert(&row, &c).unwrap();
        assert_eq!(r.image, ImageRef::path("/data/coco/val2017/000000000007.jpg"));
    }

    #[test]
    fn esnlive_labels() {
        let row = json!({"pairID": "p1", "Flickr30K_ID": "3637013c", "hypothesis": "the man is asleep", "gold_label": "neutral"});
        let r = convert(&row, &ctx(DatasetName::Esnlive, TaskFamily::Entailment)).unwrap();
        assert_eq!(r.choices, vec!["yes", "no", "maybe"]);
        assert_eq!(r.gold_choice, Some(2));
        assert_eq!(r.question, "the man is asleep");
        let bad = json!({"Flickr30K_ID": "x", "hypothesis": "h", "gold_label": "unsure"});
        assert!(convert(&bad, &ctx(DatasetName::Esnlive, TaskFamily::Entailment)).is_err());
    }

    #[test]
    fn vsr_labels() {
        let row = json!({"image": "000000085637.jpg", "caption": "The bananas are in the bowl.", "label": 1, "relation": "in"});
        let r = convert(&row, &ctx(DatasetName::Vsr, TaskFamily::Spatial)).unwrap();
        assert_eq!(r.gold_choice, Some(0));
        assert_eq!(r.id, "vsr-val-4");
        assert_eq!(r.image, ImageRef::opaque("000000085637"));
    }

    #[test]
    fn vqa_and_clevr_rows() {
        let row = json!({"question_id": 5, "image_id": 9, "question": "What sport?", "answers": [{"answer": "tennis"}, {"answer": "tennis"}]});
        let r = convert(&row, &ctx(DatasetName::Okvqa, TaskFamily::VqaDa)).unwrap();
        assert_eq!(r.id, "5");
        assert_eq!(r.gold_direct_answers, vec!["tennis", "tennis"]);
        let c = json!({"question_index": 12, "image_filename": "CLEVR_val_000001.png", "question": "How many?", "answer": "3"});
        let r = convert(&c, &ctx(DatasetName::Clevr, TaskFamily::VqaDa)).unwrap();
        assert_eq!(r.id, "clevr-val-12");
        assert_eq!(r.gold_direct_answers, vec!["3"]);
    }

    #[test]
    fn custom_requires_canonical() {
        assert!(convert(&json!({"question": "?"}), &ctx(DatasetName::Custom, TaskFamily::VqaDa)).is_err());
    }
}
