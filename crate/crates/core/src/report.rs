//! Language-group aggregates, Table-style reports and heatmap matrices.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::TrainLanguages;
use crate::error::{Error, Result};
use crate::lang::LanguageCode;
use crate::types::ConsistencyResult;

const SCRIPT_GROUPS: [(&str, &[&str]); 4] = [
    ("Latin", &["cs", "de", "es", "fr", "id", "it", "nl", "pl", "pt", "ro", "tr", "vi"]),
    ("Indic", &["bn", "gu", "hi", "kn", "ml", "pa", "ta", "te"]),
    ("PArb", &["ar", "fa", "ur"]),
    ("Oth1", &["el", "iw", "ja", "ko", "ru", "th", "zh"]),
];

const FAMILY_GROUPS: [(&str, &[&str]); 5] = [
    ("Rom", &["de", "es", "fr", "it", "nl", "pt", "ro"]),
    ("Slav", &["cs", "pl", "ru"]),
    ("IA", &["bn", "fa", "gu", "hi", "pa", "ur"]),
    ("Drav", &["kn", "ml", "ta", "te"]),
    ("Oth2", &["ar", "el", "id", "iw", "ja", "ko", "th", "tr", "vi", "zh"]),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupingKind {
    Script,
    Family,
    Train,
}

impl GroupingKind {
    pub const ALL: [GroupingKind; 3] = [GroupingKind::Script, GroupingKind::Family, GroupingKind::Train];

    pub fn labels(self) -> &'static [&'static str] {
        match self {
            GroupingKind::Script => &["Latin", "Indic", "PArb", "Oth1"],
            GroupingKind::Family => &["Rom", "Slav", "IA", "Drav", "Oth2"],
            GroupingKind::Train => &["In", "Out"],
        }
    }
}

impl FromStr for GroupingKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "script" => Ok(GroupingKind::Script),
            "family" => Ok(GroupingKind::Family),
            "train" | "train_data" => Ok(GroupingKind::Train),
            _ => Err(format!("unknown grouping {s:?} (expected script, family or train)")),
        }
    }
}

/// A partition of languages into labelled groups, in column order.
#[derive(Debug, Clone, PartialEq)]
pub struct LanguageGrouping {
    pub kind: GroupingKind,
    pub groups: Vec<(String, Vec<LanguageCode>)>,
}

fn codes(list: &[&str]) -> Vec<LanguageCode> {
    list.iter()
        .map(|c| LanguageCode::parse(c).expect("grouping tables use valid codes"))
        .collect()
}

impl LanguageGrouping {
    pub fn script() -> Self {
        Self {
            kind: GroupingKind::Script,
            groups: SCRIPT_GROUPS.iter().map(|(l, c)| (l.to_string(), codes(c))).collect(),
        }
    }

    pub fn family() -> Self {
        Self {
            kind: GroupingKind::Family,
            groups: FAMILY_GROUPS.iter().map(|(l, c)| (l.to_string(), codes(c))).collect(),
        }
    }

    /// In/Out split of the evaluation languages by a model's declared
    /// training data. Both groups are empty when the list is unknown.
    pub fn train(declared: &TrainLanguages) -> Self {
        let (inside, outside) = match declared.declared() {
            None => (Vec::new(), Vec::new()),
            Some(list) => LanguageCode::evaluation_languages()
                .into_iter()
                .partition(|l| list.contains(l)),
        };
        Self {
            kind: GroupingKind::Train,
            groups: vec![("In".into(), inside), ("Out".into(), outside)],
        }
    }

    pub fn group_of(&self, language: &LanguageCode) -> Option<&str> {
        self.groups
            .iter()
            .find(|(_, members)| members.contains(language))
            .map(|(label, _)| label.as_str())
    }
}

/// Arithmetic mean of each group over the languages present. Groups with no
/// member present are `None`.
pub fn group_means(
    per_language: &BTreeMap<LanguageCode, f64>,
    grouping: &LanguageGrouping,
) -> Result<BTreeMap<String, Option<f64>>> {
    // the train split only knows the evaluation languages when a list is declared
    let check = grouping.kind != GroupingKind::Train
        || grouping.groups.iter().any(|(_, m)| !m.is_empty());
    if check {
        if let Some(l) = per_language.keys().find(|l| grouping.group_of(l).is_none()) {
            return Err(Error::Ungrouped(l.to_string()));
        }
    }
    Ok(grouping
        .groups
        .iter()
        .map(|(label, members)| {
            let values: Vec<f64> = members.iter().filter_map(|l| per_language.get(l).copied()).collect();
            (label.clone(), mean(&values))
        })
        .collect())
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupedReport {
    pub model_id: String,
    pub evaluator_id: String,
    /// Equal-weighted mean over the languages present.
    pub overall_avg: Option<f64>,
    pub per_group: BTreeMap<String, Option<f64>>,
    pub per_language: BTreeMap<LanguageCode, f64>,
}

impl GroupedReport {
    pub fn build(
        model_id: &str,
        evaluator_id: &str,
        per_language: BTreeMap<LanguageCode, f64>,
        train: &TrainLanguages,
    ) -> Result<Self> {
        let mut per_group = group_means(&per_language, &LanguageGrouping::script())?;
        per_group.extend(group_means(&per_language, &LanguageGrouping::family())?);
        per_group.extend(group_means(&per_language, &LanguageGrouping::train(train))?);
        let values: Vec<f64> = per_language.values().copied().collect();
        Ok(Self {
            model_id: model_id.to_string(),
            evaluator_id: evaluator_id.to_string(),
            overall_avg: mean(&values),
            per_group,
            per_language,
        })
    }

    /// One report per model from per-language consistency results.
    pub fn from_results(
        results: &[ConsistencyResult],
        train: impl Fn(&str) -> TrainLanguages,
    ) -> Result<Vec<Self>> {
        let mut by_model: BTreeMap<(String, String), BTreeMap<LanguageCode, f64>> = BTreeMap::new();
        for r in results {
            by_model
                .entry((r.model_id.clone(), r.evaluator_id.clone()))
                .or_default()
                .insert(r.language.clone(), r.value);
        }
        by_model
            .into_iter()
            .map(|((m, e), per_language)| Self::build(&m, &e, per_language, &train(&m)))
            .collect()
    }
}

/// Two decimals, halves rounded up. The value is first snapped to six
/// decimals so binary noise such as 0.285 → 0.28499999 does not round down.
pub fn render_value(value: Option<f64>) -> String {
    match value {
        None => "--".into(),
        Some(v) => {
            let micro = (v * 1e6).round() as i64;
            let cents = (micro + 5_000).div_euclid(10_000);
            let sign = if cents < 0 { "-" } else { "" };
            format!("{sign}{}.{:02}", cents.abs() / 100, cents.abs() % 100)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Markdown,
    Csv,
}

/// Column labels after `Model`, in fixed order.
pub fn columns(groupings: &[GroupingKind]) -> Vec<&'static str> {
    let mut cols = vec!["Avg."];
    for kind in GroupingKind::ALL {
        if groupings.contains(&kind) {
            cols.extend_from_slice(kind.labels());
        }
    }
    cols
}

pub const TABLE_FOOTER: &str = "Avg. weights every scored language equally. \
Group columns are arithmetic means over member languages with scores; \
-- marks a group with no scored members or an undeclared training-language list.";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn md_cell(s: &str) -> String {
    s.replace('|', "\\|")
}

/// Renders one evaluator's reports. Rows keep the given order.
pub fn emit_table(reports: &[GroupedReport], groupings: &[GroupingKind], format: TableFormat) -> Result<String> {
    if let Some(first) = reports.first() {
        if let Some(other) = reports.iter().find(|r| r.evaluator_id != first.evaluator_id) {
            return Err(Error::MixedEvaluators(format!(
                "{} and {}",
                first.evaluator_id, other.evaluator_id
            )));
        }
    }
    let cols = columns(groupings);
    let row_values = |r: &GroupedReport| -> Vec<String> {
        cols.iter()
            .map(|c| match *c {
                "Avg." => render_value(r.overall_avg),
                label => render_value(r.per_group.get(label).copied().flatten()),
            })
            .collect()
    };
    let mut out = String::new();
    match format {
        TableFormat::Markdown => {
            if let Some(first) = reports.first() {
                writeln!(out, "### {}\n", first.evaluator_id).unwrap();
            }
            writeln!(out, "| Model | {} |", cols.join(" | ")).unwrap();
            writeln!(out, "|---|{}", "---:|".repeat(cols.len())).unwrap();
            for r in reports {
                writeln!(out, "| {} | {} |", md_cell(&r.model_id), row_values(r).join(" | ")).unwrap();
            }
            writeln!(out, "\n{TABLE_FOOTER}").unwrap();
        }
        TableFormat::Csv => {
            writeln!(out, "Evaluator,Model,{}", cols.join(",")).unwrap();
            for r in reports {
                writeln!(
                    out,
                    "{},{},{}",
                    csv_field(&r.evaluator_id),
                    csv_field(&r.model_id),
                    row_values(r).join(",")
                )
                .unwrap();
            }
        }
    }
    Ok(out)
}

/// The 30 evaluation languages ordered by script group.
pub fn heatmap_columns() -> Vec<LanguageCode> {
    LanguageGrouping::script()
        .groups
        .into_iter()
        .flat_map(|(_, members)| members)
        .collect()
}

/// CSV matrix with one row per model and one column per language. Missing
/// scores are empty cells.
pub fn emit_heatmap_matrix(per_model: &BTreeMap<String, BTreeMap<LanguageCode, f64>>) -> String {
    let cols = heatmap_columns();
    let mut out = String::from("model");
    for c in &cols {
        write!(out, ",{c}").unwrap();
    }
    out.push('\n');
    for (model, values) in per_model {
        out.push_str(&csv_field(model));
        for c in &cols {
            out.push(',');
            if let Some(v) = values.get(c) {
                write!(out, "{v}").unwrap();
            }
        }
        out.push('\n');
    }
    out
}
