use serde_json::{Map, Value};

use super::report::{ErrorCategory, Finding};
use crate::model::{classify_resource, find_choice, ResourceKind, ResourceTree, TimePoint};

/// Collects every validation finding for one resource.
///
/// Fatal: a missing required field, two keys for one choice element, an
/// extension without `url`, or an incomplete coding in `Observation.code`.
/// Everything else is a warning and the affected field is dropped.
pub fn validate_resource(tree: &ResourceTree) -> Vec<Finding> {
    let root = tree.root().as_object().expect("resource root is an object");
    let kind = classify_resource(tree);
    let mut out = Vec::new();

    match kind {
        ResourceKind::Patient => {
            require_string(root, "id", &mut out);
            check_choices(root, "", &["deceased", "multipleBirth"], &mut out);
        }
        ResourceKind::Observation => {
            check_observation_code(root, &mut out);
            check_choices(root, "", &["value", "effective"], &mut out);
            for (i, component) in array(root, "component").iter().enumerate() {
                if let Some(obj) = component.as_object() {
                    check_choices(obj, &format!("component[{i}]."), &["value"], &mut out);
                }
            }
        }
        ResourceKind::Encounter | ResourceKind::DocumentReference => {
            require_string(root, "status", &mut out);
        }
        ResourceKind::Bundle | ResourceKind::Unsupported(_) => {}
    }

    walk(tree.root(), String::new(), &kind, &mut out);

    match kind {
        ResourceKind::Patient => check_date(root.get("birthDate"), "birthDate", &mut out),
        ResourceKind::Observation => {
            for key in ["effectiveDateTime", "effectiveInstant", "issued", "valueDateTime"] {
                check_date(root.get(key), key, &mut out);
            }
            check_period(root.get("effectivePeriod"), "effectivePeriod", &mut out);
            for (i, component) in array(root, "component").iter().enumerate() {
                check_date(component.get("valueDateTime"), &format!("component[{i}].valueDateTime"), &mut out);
            }
            let has_value = find_choice(root, "value").ok().flatten().is_some();
            if !has_value && array(root, "component").is_empty() {
                out.push(Finding::warning(
                    ErrorCategory::Other("NoValue".into()),
                    "",
                    "observation has neither a value nor components",
                ));
            }
        }
        ResourceKind::Encounter => check_period(root.get("period"), "period", &mut out),
        ResourceKind::DocumentReference => check_date(root.get("date"), "date", &mut out),
        ResourceKind::Bundle | ResourceKind::Unsupported(_) => {}
    }
    out
}

fn array<'a>(obj: &'a Map<String, Value>, key: &str) -> &'a [Value] {
    obj.get(key).and_then(Value::as_array).map_or(&[], Vec::as_slice)
}

fn require_string(obj: &Map<String, Value>, key: &str, out: &mut Vec<Finding>) {
    match obj.get(key) {
        Some(Value::String(s)) if !s.is_empty() => {}
        Some(Value::String(_)) => out.push(Finding::fatal(
            ErrorCategory::MissingRequiredField,
            key,
            format!("`{key}` is empty"),
        )),
        Some(_) => out.push(Finding::fatal(
            ErrorCategory::MissingRequiredField,
            key,
            format!("`{key}` is not a string"),
        )),
        None => out.push(Finding::fatal(
            ErrorCategory::MissingRequiredField,
            key,
            format!("`{key}` is missing"),
        )),
    }
}

fn check_observation_code(root: &Map<String, Value>, out: &mut Vec<Finding>) {
    let code = match root.get("code") {
        None => {
            out.push(Finding::fatal(ErrorCategory::MissingRequiredField, "code", "`code` is missing"));
            return;
        }
        Some(Value::Object(code)) => code,
        Some(_) => {
            out.push(Finding::fatal(
                ErrorCategory::MissingRequiredField,
                "code",
                "`code` is not a CodeableConcept object",
            ));
            return;
        }
    };
    let has_coding = code
        .get("coding")
        .and_then(Value::as_array)
        .is_some_and(|c| !c.is_empty());
    let has_text = code
        .get("text")
        .and_then(Value::as_str)
        .is_some_and(|t| !t.is_empty());
    if !has_coding && !has_text {
        out.push(Finding::fatal(
            ErrorCategory::IncompleteCoding,
            "code",
            "`code` has neither codings nor text",
        ));
    }
}

fn check_choices(obj: &Map<String, Value>, prefix_path: &str, stems: &[&str], out: &mut Vec<Finding>) {
    for stem in stems {
        if let Err(e) = find_choice(obj, stem) {
            out.push(Finding::fatal(
                ErrorCategory::AmbiguousChoice,
                format!("{prefix_path}{stem}[x]"),
                e.to_string(),
            ));
        }
    }
}

fn check_date(value: Option<&Value>, path: &str, out: &mut Vec<Finding>) {
    match value {
        None => {}
        Some(Value::String(s)) => {
            if let Err(e) = TimePoint::parse(s) {
                out.push(Finding::warning(ErrorCategory::InvalidDate, path, e.to_string()));
            }
        }
        Some(_) => out.push(Finding::warning(
            ErrorCategory::InvalidDate,
            path,
            "date value is not a string",
        )),
    }
}

fn check_period(value: Option<&Value>, path: &str, out: &mut Vec<Finding>) {
    let Some(period) = value else { return };
    let Some(obj) = period.as_object() else {
        out.push(Finding::warning(ErrorCategory::InvalidDate, path, "period is not an object"));
        return;
    };
    check_date(obj.get("start"), &format!("{path}.start"), out);
    check_date(obj.get("end"), &format!("{path}.end"), out);
    let epoch = |k: &str| {
        obj.get(k)
            .and_then(Value::as_str)
            .and_then(|s| TimePoint::parse(s).ok())
            .and_then(|t| t.epoch_millis_utc())
    };
    if let (Some(start), Some(end)) = (epoch("start"), epoch("end")) {
        if end < start {
            out.push(Finding::warning(
                ErrorCategory::InvalidDate,
                format!("{path}.end"),
                "period ends before it starts; end dropped",
            ));
        }
    }
}

/// Recursive scan for malformed extensions and incomplete codings.
/// `contained` resources are not visited.
fn walk(node: &Value, path: String, kind: &ResourceKind, out: &mut Vec<Finding>) {
    match node {
        Value::Object(obj) => {
            for (key, child) in obj {
                let child_path = join(&path, key);
                match key.as_str() {
                    "contained" => {}
                    "extension" | "modifierExtension" => check_extensions(child, &child_path, out),
                    "coding" => check_codings(child, &child_path, kind, out),
                    _ => walk(child, child_path, kind, out),
                }
            }
        }
        Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                walk(item, format!("{path}[{i}]"), kind, out);
            }
        }
        _ => {}
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_owned()
    } else {
        format!("{path}.{key}")
    }
}

fn check_extensions(value: &Value, path: &str, out: &mut Vec<Finding>) {
    let Some(items) = value.as_array() else {
        out.push(Finding::fatal(ErrorCategory::MalformedExtension, path, "extension is not an array"));
        return;
    };
    for (i, ext) in items.iter().enumerate() {
        let item_path = format!("{path}[{i}]");
        let Some(obj) = ext.as_object() else {
            out.push(Finding::fatal(ErrorCategory::MalformedExtension, item_path, "extension is not an object"));
            continue;
        };
        match obj.get("url") {
            Some(Value::String(url)) if !url.is_empty() => {}
            _ => out.push(Finding::fatal(
                ErrorCategory::MalformedExtension,
                item_path.clone(),
                "extension has no `url`",
            )),
        }
        // Complex extensions nest further extensions.
        if let Some(nested) = obj.get("extension") {
            check_extensions(nested, &format!("{item_path}.extension"), out);
        }
    }
}

fn check_codings(value: &Value, path: &str, kind: &ResourceKind, out: &mut Vec<Finding>) {
    let fatal = *kind == ResourceKind::Observation && path == "code.coding";
    let push = |out: &mut Vec<Finding>, p: String, msg: &str| {
        let category = ErrorCategory::IncompleteCoding;
        out.push(if fatal {
            Finding::fatal(category, p, msg)
        } else {
            Finding::warning(category, p, msg)
        });
    };
    let Some(items) = value.as_array() else {
        push(out, path.to_owned(), "coding is not an array");
        return;
    };
    for (i, coding) in items.iter().enumerate() {
        let item_path = format!("{path}[{i}]");
        let Some(obj) = coding.as_object() else {
            push(out, item_path, "coding is not an object");
            continue;
        };
        let present = |k: &str| obj.get(k).and_then(Value::as_str).is_some_and(|s| !s.is_empty());
        if !present("system") && !present("code") {
            push(out, item_path, "coding has neither system nor code");
        }
        if let Some(ext) = obj.get("extension") {
            check_extensions(ext, &format!("{path}[{i}].extension"), out);
        }
    }
}
