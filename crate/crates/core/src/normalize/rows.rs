use serde::Serialize;
use serde_json::{Map, Value};

use crate::model::{
    find_choice, typed_value, Codeable, Coding, ResourceTree, TimePoint, TypedValue,
};
use crate::table::{Cell, TableRow};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("required field `{0}` is missing")]
pub struct MissingRequiredField(pub &'static str);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatientRow {
    pub resource_id: String,
    /// First given name and family name.
    pub name: String,
    /// Every given name, in order.
    pub given_names: String,
    pub gender: String,
    pub birth_date: Option<TimePoint>,
    pub identifier_summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservationRow {
    pub resource_id: String,
    pub subject_ref: String,
    pub status: String,
    pub code_system: String,
    pub code: String,
    pub display: String,
    pub effective: Option<TimePoint>,
    pub value: Option<TypedValue>,
    pub unit: String,
    /// 0 for the root value, `i + 1` for `component[i]`.
    pub component_index: usize,
    pub component_code: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EncounterRow {
    pub resource_id: String,
    pub status: String,
    pub class_display: String,
    pub type_display: String,
    pub period_start: Option<TimePoint>,
    pub period_end: Option<TimePoint>,
    pub subject_ref: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DocumentRow {
    pub resource_id: String,
    pub doc_type: String,
    pub status_combined: String,
    pub date: Option<TimePoint>,
    pub author_ref: String,
    /// The source carried inline attachment data that was not copied.
    pub content_excluded: bool,
}

fn str_at<'a>(obj: &'a Value, key: &str) -> Option<&'a str> {
    obj.get(key).and_then(Value::as_str)
}

fn string_at(obj: &Value, key: &str) -> String {
    str_at(obj, key).unwrap_or_default().to_owned()
}

fn array_at<'a>(obj: &'a Value, key: &str) -> &'a [Value] {
    obj.get(key).and_then(Value::as_array).map_or(&[], Vec::as_slice)
}

fn time_at(obj: &Value, key: &str) -> Option<TimePoint> {
    str_at(obj, key).and_then(|s| TimePoint::parse(s).ok())
}

fn reference_at(obj: &Value, key: &str) -> String {
    obj.get(key).map(|r| string_at(r, "reference")).unwrap_or_default()
}

fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Upper-cases the first character, leaving the rest untouched.
pub fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

pub fn normalize_patient(tree: &ResourceTree) -> Result<PatientRow, MissingRequiredField> {
    let root = tree.root();
    let resource_id = tree
        .id()
        .filter(|id| !id.is_empty())
        .ok_or(MissingRequiredField("id"))?
        .to_owned();

    let names = array_at(root, "name");
    let chosen = names
        .iter()
        .find(|n| str_at(n, "use") == Some("usual"))
        .or_else(|| names.first());
    let (name, given_names) = chosen.map(render_name).unwrap_or_default();

    let identifier_summary = array_at(root, "identifier")
        .iter()
        .filter_map(|ident| {
            let value = str_at(ident, "value")?;
            Some(match str_at(ident, "system") {
                Some(system) => format!("{system}|{value}"),
                None => value.to_owned(),
            })
        })
        .collect::<Vec<_>>()
        .join("; ");

    Ok(PatientRow {
        resource_id,
        name,
        given_names,
        gender: capitalize(str_at(root, "gender").unwrap_or_default()),
        birth_date: time_at(root, "birthDate"),
        identifier_summary,
    })
}

/// Returns (first given + family, all given names).
fn render_name(name: &Value) -> (String, String) {
    let given: Vec<&str> = array_at(name, "given").iter().filter_map(Value::as_str).collect();
    let family = str_at(name, "family").unwrap_or_default();
    let display = if given.is_empty() && family.is_empty() {
        str_at(name, "text").unwrap_or_default().to_owned()
    } else {
        format!("{} {}", given.first().copied().unwrap_or_default(), family)
    };
    (collapse_whitespace(&display), collapse_whitespace(&given.join(" ")))
}

struct CodeParts {
    system: String,
    code: String,
    display: String,
}

fn code_parts(concept: Option<&Value>) -> CodeParts {
    let codeable = concept.and_then(Codeable::from_value);
    let primary = codeable.as_ref().and_then(|c| c.primary()).cloned().unwrap_or_default();
    let text = concept.and_then(|c| str_at(c, "text"));
    let display = primary
        .display
        .clone()
        .or_else(|| text.map(str::to_owned))
        .unwrap_or_default();
    let Coding { system, code, .. } = primary;
    CodeParts {
        system: system.unwrap_or_default(),
        code: code.unwrap_or_default(),
        display,
    }
}

/// Value and unit of a choice element, or `(None, "")` when absent.
fn choice_value(obj: &Map<String, Value>) -> (Option<TypedValue>, String) {
    match find_choice(obj, "value").ok().flatten() {
        Some((suffix, raw)) => {
            let value = typed_value(suffix, raw);
            let unit = match &value {
                TypedValue::Quantity(q) => q.unit.clone(),
                _ => String::new(),
            };
            (Some(value), unit)
        }
        None => (None, String::new()),
    }
}

fn effective(root: &Map<String, Value>) -> Option<TimePoint> {
    let (suffix, raw) = find_choice(root, "effective").ok().flatten()?;
    match suffix {
        "DateTime" | "Instant" => raw.as_str().and_then(|s| TimePoint::parse(s).ok()),
        "Period" => time_at(raw, "start"),
        _ => None,
    }
}

pub fn normalize_observation(tree: &ResourceTree) -> Result<Vec<ObservationRow>, MissingRequiredField> {
    let root = tree.root();
    let obj = root.as_object().expect("resource root is an object");
    let code_value = root.get("code").ok_or(MissingRequiredField("code"))?;
    let code = code_parts(Some(code_value));
    let resource_id = tree.id().unwrap_or_default().to_owned();
    let subject_ref = reference_at(root, "subject");
    let status = string_at(root, "status");
    let effective = effective(obj);

    let base = ObservationRow {
        resource_id,
        subject_ref,
        status,
        code_system: code.system,
        code: code.code,
        display: code.display,
        effective,
        value: None,
        unit: String::new(),
        component_index: 0,
        component_code: None,
    };

    let mut rows = Vec::new();
    let (root_value, root_unit) = choice_value(obj);
    if root_value.is_some() {
        rows.push(ObservationRow {
            value: root_value,
            unit: root_unit,
            ..base.clone()
        });
    }
    for (i, component) in array_at(root, "component").iter().enumerate() {
        let Some(comp) = component.as_object() else { continue };
        let parts = code_parts(comp.get("code"));
        let (value, unit) = choice_value(comp);
        let component_code = if parts.code.is_empty() {
            comp.get("code").and_then(|c| str_at(c, "text")).map(str::to_owned)
        } else {
            Some(parts.code)
        };
        rows.push(ObservationRow {
            display: if parts.display.is_empty() { base.display.clone() } else { parts.display },
            value,
            unit,
            component_index: i + 1,
            component_code,
            ..base.clone()
        });
    }
    Ok(rows)
}

pub fn normalize_encounter(tree: &ResourceTree) -> Result<EncounterRow, MissingRequiredField> {
    let root = tree.root();
    let status = str_at(root, "status").ok_or(MissingRequiredField("status"))?.to_owned();
    let class_display = root
        .get("class")
        .and_then(|c| str_at(c, "display").or_else(|| str_at(c, "code")))
        .unwrap_or_default()
        .to_owned();
    let type_display = array_at(root, "type")
        .first()
        .map(|t| {
            let c = code_parts(Some(t));
            if c.display.is_empty() {
                array_at(t, "coding").iter().find_map(|c| str_at(c, "display")).unwrap_or_default().to_owned()
            } else {
                c.display
            }
        })
        .unwrap_or_default();
    let period = root.get("period");
    let period_start = period.and_then(|p| time_at(p, "start"));
    let mut period_end = period.and_then(|p| time_at(p, "end"));
    if let (Some(s), Some(e)) = (
        period_start.as_ref().and_then(TimePoint::epoch_millis_utc),
        period_end.as_ref().and_then(TimePoint::epoch_millis_utc),
    ) {
        if e < s {
            period_end = None;
        }
    }
    Ok(EncounterRow {
        resource_id: tree.id().unwrap_or_default().to_owned(),
        status,
        class_display,
        type_display,
        period_start,
        period_end,
        subject_ref: reference_at(root, "subject"),
    })
}

pub fn normalize_document_reference(tree: &ResourceTree) -> Result<DocumentRow, MissingRequiredField> {
    let root = tree.root();
    let status = str_at(root, "status").ok_or(MissingRequiredField("status"))?;
    let doc_type = root
        .get("type")
        .map(|t| {
            array_at(t, "coding")
                .iter()
                .find_map(|c| str_at(c, "display"))
                .or_else(|| str_at(t, "text"))
                .unwrap_or_default()
                .to_owned()
        })
        .unwrap_or_default();
    let status_combined = match str_at(root, "docStatus") {
        Some(doc_status) if !doc_status.is_empty() => {
            format!("{} / {}", capitalize(status), capitalize(doc_status))
        }
        _ => capitalize(status),
    };
    let author_ref = array_at(root, "author")
        .iter()
        .find_map(|a| str_at(a, "reference"))
        .unwrap_or_default()
        .to_owned();
    let content_excluded = array_at(root, "content")
        .iter()
        .any(|c| c.get("attachment").and_then(|a| a.get("data")).is_some());
    Ok(DocumentRow {
        resource_id: tree.id().unwrap_or_default().to_owned(),
        doc_type,
        status_combined,
        date: time_at(root, "date"),
        author_ref,
        content_excluded,
    })
}

fn time_cell(t: &Option<TimePoint>) -> Cell {
    Cell::opt_text(t.as_ref().map(TimePoint::iso_text))
}

/// Numbers for quantities and integers, text for everything else.
pub fn value_cell(v: &Option<TypedValue>) -> Cell {
    match v {
        None => Cell::Empty,
        Some(TypedValue::Quantity(q)) => Cell::Number(q.value.text().to_owned()),
        Some(TypedValue::Integer(i)) => Cell::number(i),
        Some(other) => Cell::text(other.render()),
    }
}

impl TableRow for PatientRow {
    const COLUMNS: &'static [&'static str] = &[
        "resource_id",
        "name",
        "given_names",
        "gender",
        "birth_date",
        "identifier_summary",
    ];

    fn cells(&self) -> Vec<Cell> {
        vec![
            Cell::text(&self.resource_id),
            Cell::text(&self.name),
            Cell::text(&self.given_names),
            Cell::text(&self.gender),
            time_cell(&self.birth_date),
            Cell::text(&self.identifier_summary),
        ]
    }
}

impl TableRow for ObservationRow {
    const COLUMNS: &'static [&'static str] = &[
        "resource_id",
        "subject_ref",
        "status",
        "code_system",
        "code",
        "display",
        "effective",
        "value",
        "unit",
        "component_index",
        "component_code",
    ];

    fn cells(&self) -> Vec<Cell> {
        vec![
            Cell::text(&self.resource_id),
            Cell::text(&self.subject_ref),
            Cell::text(&self.status),
            Cell::text(&self.code_system),
            Cell::text(&self.code),
            Cell::text(&self.display),
            time_cell(&self.effective),
            value_cell(&self.value),
            Cell::text(&self.unit),
            Cell::number(self.component_index),
            Cell::opt_text(self.component_code.as_deref()),
        ]
    }
}

impl TableRow for EncounterRow {
    const COLUMNS: &'static [&'static str] = &[
        "resource_id",
        "status",
        "class_display",
        "type_display",
        "period_start",
        "period_end",
        "subject_ref",
    ];

    fn cells(&self) -> Vec<Cell> {
        vec![
            Cell::text(&self.resource_id),
            Cell::text(&self.status),
            Cell::text(&self.class_display),
            Cell::text(&self.type_display),
            time_cell(&self.period_start),
            time_cell(&self.period_end),
            Cell::text(&self.subject_ref),
        ]
    }
}

impl TableRow for DocumentRow {
    const COLUMNS: &'static [&'static str] = &[
        "resource_id",
        "doc_type",
        "status_combined",
        "date",
        "author_ref",
        "content_excluded",
    ];

    fn cells(&self) -> Vec<Cell> {
        vec![
            Cell::text(&self.resource_id),
            Cell::text(&self.doc_type),
            Cell::text(&self.status_combined),
            time_cell(&self.date),
            Cell::text(&self.author_ref),
            Cell::text(if self.content_excluded { "yes" } else { "no" }),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_resource_tree;

    fn tree(json: &str) -> ResourceTree {
        parse_resource_tree(json.as_bytes()).unwrap()
    }

    #[test]
    fn sample_patient_row() {
        let row = normalize_patient(&tree(
            r#"{"resourceType":"Patient","id":"32298144","gender":"female","birthDate":"1810-03-21",
            "name":[{"use":"usual","family":"L_Name","given":["F_Name","Renee"]}]}"#,
        ))
        .unwrap();
        assert_eq!(row.resource_id, "32298144");
        assert_eq!(row.name, "F_Name L_Name");
        assert_eq!(row.given_names, "F_Name Renee");
        assert_eq!(row.gender, "Female");
        assert_eq!(row.birth_date.unwrap().iso_text(), "1810-03-21");
        assert_eq!(row.identifier_summary, "");
    }

    #[test]
    fn patient_without_names() {
        let row = normalize_patient(&tree(r#"{"resourceType":"Patient","id":"p"}"#)).unwrap();
        assert_eq!(row.name, "");
        assert_eq!(row.gender, "");
    }

    #[test]
    fn usual_name_preferred() {
        let row = normalize_patient(&tree(
            r#"{"resourceType":"Patient","id":"p","name":[{"use":"official","family":"A"},{"use":"usual","family":"B"}]}"#,
        ))
        .unwrap();
        assert_eq!(row.name, "B");
    }

    #[test]
    fn first_name_when_no_usual() {
        let row = normalize_patient(&tree(
            r#"{"resourceType":"Patient","id":"p","name":[{"family":"A","given":["  X "]},{"family":"B"}],
            "identifier":[{"system":"urn:mrn","value":"1"},{"value":"2"}],"gender":"unknown-ish"}"#,
        ))
        .unwrap();
        assert_eq!(row.name, "X A");
        assert_eq!(row.identifier_summary, "urn:mrn|1; 2");
        assert_eq!(row.gender, "Unknown-ish");
    }

    #[test]
    fn patient_requires_id() {
        assert_eq!(
            normalize_patient(&tree(r#"{"resourceType":"Patient"}"#)).unwrap_err(),
            MissingRequiredField("id")
        );
    }

    #[test]
    fn blood_pressure_components_flatten() {
        let rows = normalize_observation(&tree(
            r#"{"resourceType":"Observation","id":"bp","status":"final","subject":{"reference":"Patient/1"},
            "code":{"coding":[{"system":"http://loinc.org","code":"85354-9","display":"Blood pressure panel"}]},
            "effectiveDateTime":"2024-01-09T10:00:00Z",
            "component":[
              {"code":{"coding":[{"system":"http://loinc.org","code":"8480-6","display":"Systolic"}]},
               "valueQuantity":{"value":120,"unit":"mmHg"}},
              {"code":{"coding":[{"system":"http://loinc.org","code":"8462-4","display":"Diastolic"}]},
               "valueQuantity":{"value":80,"unit":"mmHg"}}]}"#,
        ))
        .unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].component_index, 1);
        assert_eq!(rows[1].component_index, 2);
        assert_eq!(rows[0].component_code.as_deref(), Some("8480-6"));
        assert_eq!(rows[1].component_code.as_deref(), Some("8462-4"));
        assert_eq!(rows[0].display, "Systolic");
        assert_eq!(rows[0].code, "85354-9");
        assert_eq!(rows[0].unit, "mmHg");
        assert_eq!(value_cell(&rows[0].value), Cell::Number("120".into()));
        assert_eq!(value_cell(&rows[1].value), Cell::Number("80".into()));
        assert!(rows.iter().all(|r| r.resource_id == "bp" && r.subject_ref == "Patient/1"));
    }

    #[test]
    fn single_quantity_observation() {
        let rows = normalize_observation(&tree(
            r#"{"resourceType":"Observation","id":"t","code":{"coding":[{"system":"http://loinc.org","code":"8310-5"}],"text":"Body temperature"},
            "valueQuantity":{"value":98.6,"unit":"degF"}}"#,
        ))
        .unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].component_index, 0);
        assert_eq!(rows[0].unit, "degF");
        assert_eq!(rows[0].display, "Body temperature");
        assert_eq!(rows[0].code_system, "http://loinc.org");
    }

    #[test]
    fn observation_without_value_has_no_rows() {
        let rows =
            normalize_observation(&tree(r#"{"resourceType":"Observation","id":"x","code":{"text":"t"}}"#))
                .unwrap();
        assert!(rows.is_empty());
    }

    #[test]
    fn observation_requires_code() {
        assert_eq!(
            normalize_observation(&tree(r#"{"resourceType":"Observation"}"#)).unwrap_err(),
            MissingRequiredField("code")
        );
    }

    #[test]
    fn effective_period_uses_start() {
        let rows = normalize_observation(&tree(
            r#"{"resourceType":"Observation","id":"x","code":{"text":"t"},"valueString":"ok",
            "effectivePeriod":{"start":"2024-01-01","end":"2024-01-02"}}"#,
        ))
        .unwrap();
        assert_eq!(rows[0].effective.as_ref().unwrap().iso_text(), "2024-01-01");
    }

    #[test]
    fn encounter_row() {
        let row = normalize_encounter(&tree(
            r#"{"resourceType":"Encounter","id":"e","status":"finished","class":{"code":"AMB"},
            "period":{"start":"2024-01-09T10:00:00Z","end":"2024-01-09T10:30:00Z"}}"#,
        ))
        .unwrap();
        assert_eq!(row.class_display, "AMB");
        assert_eq!(row.period_end.unwrap().iso_text(), "2024-01-09T10:30:00Z");
    }

    #[test]
    fn minimal_encounter() {
        let row = normalize_encounter(&tree(r#"{"resourceType":"Encounter","status":"planned"}"#)).unwrap();
        assert_eq!(row.class_display, "");
        assert_eq!(row.type_display, "");
        assert_eq!(row.period_start, None);
    }

    #[test]
    fn reversed_period_drops_end() {
        let row = normalize_encounter(&tree(
            r#"{"resourceType":"Encounter","status":"finished",
            "period":{"start":"2024-01-09T10:30:00Z","end":"2024-01-09T10:00:00Z"}}"#,
        ))
        .unwrap();
        assert!(row.period_start.is_some());
        assert_eq!(row.period_end, None);
    }

    #[test]
    fn encounter_requires_status() {
        assert_eq!(
            normalize_encounter(&tree(r#"{"resourceType":"Encounter"}"#)).unwrap_err(),
            MissingRequiredField("status")
        );
    }

    #[test]
    fn document_row_matches_sample() {
        let row = normalize_document_reference(&tree(
            r#"{"resourceType":"DocumentReference","id":"d","status":"current","docStatus":"final",
            "type":{"coding":[{"system":"http://loinc.org","code":"11506-3","display":"Progress Note"}]},
            "date":"2024-01-09","author":[{"reference":"Practitioner/123"}],
            "content":[{"attachment":{"contentType":"text/plain","data":"SGVsbG8="}}]}"#,
        ))
        .unwrap();
        assert_eq!(row.doc_type, "Progress Note");
        assert_eq!(row.status_combined, "Current / Final");
        assert_eq!(row.date.unwrap().iso_text(), "2024-01-09");
        assert_eq!(row.author_ref, "Practitioner/123");
        assert!(row.content_excluded);
    }

    #[test]
    fn document_without_author_or_doc_status() {
        let row = normalize_document_reference(&tree(
            r#"{"resourceType":"DocumentReference","status":"current","type":{"text":"Note"}}"#,
        ))
        .unwrap();
        assert_eq!(row.author_ref, "");
        assert_eq!(row.status_combined, "Current");
        assert_eq!(row.doc_type, "Note");
        assert!(!row.content_excluded);
    }

    #[test]
    fn blob_is_not_copied() {
        let blob = "A".repeat(1 << 20);
        let json = format!(
            r#"{{"resourceType":"DocumentReference","status":"current","content":[{{"attachment":{{"data":"{blob}"}}}}]}}"#
        );
        let row = normalize_document_reference(&tree(&json)).unwrap();
        assert!(row.content_excluded);
        let size = serde_json::to_vec(&row).unwrap().len();
        assert!(size < 512, "row serialized to {size} bytes");
    }
}
