use std::fmt;

use serde::{Serialize, Serializer};
use serde_json::{Map, Number, Value};

use super::time::TimePoint;

/// A decimal number carried as its original JSON text plus a parsed double.
///
/// Exports print [`Decimal::text`] so that values like `5.50` keep their
/// trailing zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Decimal {
    text: String,
    value: f64,
}

impl Decimal {
    /// Returns `None` for text that is not a finite JSON number.
    pub fn parse(text: &str) -> Option<Self> {
        let number: Number = text.parse().ok()?;
        Self::from_number(&number)
    }

    pub fn from_number(number: &Number) -> Option<Self> {
        let value = number.as_f64()?;
        value.is_finite().then(|| Self {
            text: number.to_string(),
            value,
        })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn value(&self) -> f64 {
        self.value
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl Serialize for Decimal {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self.text.parse::<Number>() {
            Ok(n) => n.serialize(serializer),
            Err(_) => serializer.serialize_f64(self.value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Coding {
    pub system: Option<String>,
    pub code: Option<String>,
    pub display: Option<String>,
}

impl Coding {
    pub fn from_value(value: &Value) -> Option<Self> {
        let obj = value.as_object()?;
        let field = |k: &str| obj.get(k).and_then(Value::as_str).map(str::to_owned);
        Some(Self {
            system: field("system"),
            code: field("code"),
            display: field("display"),
        })
    }

    /// Both `system` and `code` present and non-empty.
    pub fn is_complete(&self) -> bool {
        non_empty(&self.system) && non_empty(&self.code)
    }

    /// Neither `system` nor `code` present.
    pub fn is_incomplete(&self) -> bool {
        !non_empty(&self.system) && !non_empty(&self.code)
    }
}

fn non_empty(s: &Option<String>) -> bool {
    s.as_deref().is_some_and(|s| !s.is_empty())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Quantity {
    pub value: Decimal,
    pub unit: String,
    pub system: Option<String>,
    pub code: Option<String>,
}

/// A CodeableConcept reduced to its display text and codings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Codeable {
    pub text: String,
    pub codings: Vec<Coding>,
}

impl Codeable {
    pub fn from_value(value: &Value) -> Option<Self> {
        let obj = value.as_object()?;
        let codings: Vec<Coding> = obj
            .get("coding")
            .and_then(Value::as_array)
            .map(|list| list.iter().filter_map(Coding::from_value).collect())
            .unwrap_or_default();
        let text = obj
            .get("text")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .or_else(|| codings.iter().find_map(|c| c.display.clone()))
            .or_else(|| codings.iter().find_map(|c| c.code.clone()))
            .unwrap_or_default();
        Some(Self { text, codings })
    }

    /// The first coding carrying both a system and a code.
    pub fn primary(&self) -> Option<&Coding> {
        self.codings.iter().find(|c| c.is_complete())
    }
}

/// Resolution target for FHIR `value[x]`-style choice elements.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", content = "value")]
pub enum TypedValue {
    Quantity(Quantity),
    Codeable(Codeable),
    Text(String),
    Boolean(bool),
    Integer(i64),
    DateTime(TimePoint),
    /// Any other suffix, or a known suffix whose content did not have the
    /// expected shape. Holds the subtree as compact JSON with sorted keys.
    Unrendered(String),
}

impl TypedValue {
    /// Text shown in tables.
    pub fn render(&self) -> String {
        match self {
            TypedValue::Quantity(q) => q.value.text().to_owned(),
            TypedValue::Codeable(c) => c.text.clone(),
            TypedValue::Text(s) | TypedValue::Unrendered(s) => s.clone(),
            TypedValue::Boolean(b) => b.to_string(),
            TypedValue::Integer(i) => i.to_string(),
            TypedValue::DateTime(t) => t.iso_text().to_owned(),
        }
    }
}

/// Type suffixes in resolution priority order.
pub const CHOICE_SUFFIX_PRIORITY: [&str; 7] = [
    "Quantity",
    "CodeableConcept",
    "String",
    "Boolean",
    "Integer",
    "DateTime",
    "Period",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("more than one choice element present: {}", keys.join(", "))]
pub struct AmbiguousChoice {
    pub keys: Vec<String>,
}

/// Finds the single `prefix + TypeSuffix` key of `node`, if any.
///
/// A key matches when it starts with `prefix` and the next character is an
/// ASCII uppercase letter.
pub fn find_choice<'a>(
    node: &'a Map<String, Value>,
    prefix: &str,
) -> Result<Option<(&'a str, &'a Value)>, AmbiguousChoice> {
    let mut found: Vec<(&str, &Value)> = node
        .iter()
        .filter_map(|(key, value)| {
            let suffix = key.strip_prefix(prefix)?;
            suffix
                .chars()
                .next()
                .is_some_and(|c| c.is_ascii_uppercase())
                .then_some((suffix, value))
        })
        .collect();
    match found.len() {
        0 => Ok(None),
        1 => Ok(found.pop()),
        _ => {
            found.sort_by_key(|(suffix, _)| suffix_rank(suffix));
            Err(AmbiguousChoice {
                keys: found.iter().map(|(s, _)| format!("{prefix}{s}")).collect(),
            })
        }
    }
}

fn suffix_rank(suffix: &str) -> (usize, String) {
    let rank = CHOICE_SUFFIX_PRIORITY
        .iter()
        .position(|s| *s == suffix)
        .unwrap_or(CHOICE_SUFFIX_PRIORITY.len());
    (rank, suffix.to_owned())
}

/// Resolves the choice element `prefix[x]` of a JSON object.
///
/// Returns `Ok(None)` when no key matches or `node` is not an object.
pub fn resolve_choice_value(
    node: &Value,
    prefix: &str,
) -> Result<Option<TypedValue>, AmbiguousChoice> {
    let Some(obj) = node.as_object() else {
        return Ok(None);
    };
    Ok(find_choice(obj, prefix)?.map(|(suffix, value)| typed_value(suffix, value)))
}

/// Converts the content of a choice element according to its type suffix.
pub fn typed_value(suffix: &str, value: &Value) -> TypedValue {
    let converted = match suffix {
        "Quantity" => quantity(value).map(TypedValue::Quantity),
        "CodeableConcept" => Codeable::from_value(value).map(TypedValue::Codeable),
        "String" => value.as_str().map(|s| TypedValue::Text(s.to_owned())),
        "Boolean" => value.as_bool().map(TypedValue::Boolean),
        "Integer" => value.as_i64().map(TypedValue::Integer),
        "DateTime" => value
            .as_str()
            .and_then(|s| TimePoint::parse(s).ok())
            .map(TypedValue::DateTime),
        _ => None,
    };
    converted.unwrap_or_else(|| TypedValue::Unrendered(canonical_json(value)))
}

fn quantity(value: &Value) -> Option<Quantity> {
    let obj = value.as_object()?;
    let number = match obj.get("value")? {
        Value::Number(n) => n,
        _ => return None,
    };
    let field = |k: &str| obj.get(k).and_then(Value::as_str).map(str::to_owned);
    Some(Quantity {
        value: Decimal::from_number(number)?,
        unit: field("unit").or_else(|| field("code")).unwrap_or_default(),
        system: field("system"),
        code: field("code"),
    })
}

/// Compact JSON with object keys in sorted order.
pub fn canonical_json(value: &Value) -> String {
    // serde_json's default map is a BTreeMap, so plain serialization is
    // already key-sorted.
    serde_json::to_string(value).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn quantity_choice_resolves() {
        let node = json!({"valueQuantity": {"value": 98.6, "unit": "degF"}});
        let Some(TypedValue::Quantity(q)) = resolve_choice_value(&node, "value").unwrap() else {
            panic!("expected quantity");
        };
        assert_eq!(q.value.text(), "98.6");
        assert_eq!(q.value.value(), 98.6);
        assert_eq!(q.unit, "degF");
    }

    #[test]
    fn decimal_text_survives() {
        let node: Value = serde_json::from_str(r#"{"valueQuantity":{"value":5.50,"unit":"mmol/L"}}"#).unwrap();
        let Some(TypedValue::Quantity(q)) = resolve_choice_value(&node, "value").unwrap() else {
            panic!("expected quantity");
        };
        assert_eq!(q.value.text(), "5.50");
    }

    #[test]
    fn empty_object_has_no_choice() {
        assert_eq!(resolve_choice_value(&json!({}), "value").unwrap(), None);
    }

    #[test]
    fn two_choice_keys_are_ambiguous() {
        let err = resolve_choice_value(&json!({"valueString": "pos", "valueBoolean": true}), "value")
            .unwrap_err();
        assert_eq!(err.keys, vec!["valueString", "valueBoolean"]);
    }

    #[test]
    fn lowercase_continuation_is_not_a_choice() {
        let node = json!({"valueset": 1, "_valueString": {"extension": []}});
        assert_eq!(resolve_choice_value(&node, "value").unwrap(), None);
    }

    #[test]
    fn unknown_suffix_is_unrendered() {
        let node = json!({"valueRange": {"low": {"value": 1}, "high": {"value": 2}}});
        assert_eq!(
            resolve_choice_value(&node, "value").unwrap(),
            Some(TypedValue::Unrendered(r#"{"high":{"value":2},"low":{"value":1}}"#.into()))
        );
    }

    #[test]
    fn quantity_without_number_is_unrendered() {
        let node = json!({"valueQuantity": {"unit": "mg"}});
        assert!(matches!(
            resolve_choice_value(&node, "value").unwrap(),
            Some(TypedValue::Unrendered(_))
        ));
    }

    #[test]
    fn non_finite_decimal_rejected() {
        assert!(Decimal::parse("1e400").is_none());
        assert_eq!(Decimal::parse("-0.0").unwrap().text(), "-0.0");
    }

    #[test]
    fn codeable_text_falls_back_to_display() {
        let c = Codeable::from_value(&json!({"coding": [{"display": "only"}]})).unwrap();
        assert_eq!(c.text, "only");
        assert!(c.primary().is_none());
    }
}
