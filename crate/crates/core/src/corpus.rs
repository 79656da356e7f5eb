//! Deterministic synthetic FHIR corpora with injected malformations.
//!
//! A [`CorpusSpec`] fixes the seed, the number of resources per kind and the
//! fraction of each kind to damage per [`ErrorCategory`]. Generation returns
//! the Bundle bytes plus a [`Manifest`] naming every damaged entry, which is
//! the ground truth the normalizer's report is checked against.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Number, Value};

use crate::model::ResourceKind;
use crate::normalize::{ErrorCategory, TableKind};

/// Categories the generator knows how to inject, in placement order.
pub const INJECTABLE: [ErrorCategory; 5] = [
    ErrorCategory::MalformedExtension,
    ErrorCategory::IncompleteCoding,
    ErrorCategory::MissingRequiredField,
    ErrorCategory::AmbiguousChoice,
    ErrorCategory::InvalidDate,
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorpusError {
    #[error("malformation rate for {category} is {rate}, expected a value in [0, 1]")]
    RateOutOfRange { category: String, rate: f64 },
    #[error("category {0} cannot be injected")]
    UnsupportedCategory(String),
    #[error("unknown resource kind {0} in counts")]
    UnknownKind(String),
    #[error("component weights must have four non-negative entries with a positive sum")]
    BadComponentWeights,
    #[error("invalid corpus spec: {0}")]
    Json(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub seed: u64,
    /// Resource counts keyed by resource type name.
    #[serde(default)]
    pub counts: BTreeMap<String, usize>,
    /// Fraction of each kind to damage, keyed by category name.
    #[serde(default)]
    pub malformation_rates: BTreeMap<String, f64>,
    /// Relative weights of Observations with 0, 1, 2 and 3 components.
    #[serde(default = "default_component_weights")]
    pub component_weights: [f64; 4],
}

fn default_component_weights() -> [f64; 4] {
    [6.0, 1.0, 2.0, 1.0]
}

impl CorpusSpec {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            counts: BTreeMap::new(),
            malformation_rates: BTreeMap::new(),
            component_weights: default_component_weights(),
        }
    }

    pub fn with_count(mut self, kind: TableKind, n: usize) -> Self {
        self.counts.insert(kind.name().to_owned(), n);
        self
    }

    pub fn with_rate(mut self, category: ErrorCategory, rate: f64) -> Self {
        self.malformation_rates.insert(category.name().to_owned(), rate);
        self
    }

    /// One Patient and 200 Observations: the latency benchmark fixture.
    pub fn bench_default(seed: u64) -> Self {
        Self::new(seed)
            .with_count(TableKind::Patient, 1)
            .with_count(TableKind::Observation, 200)
    }

    /// Counts of 1..=40 per kind and small malformation rates, all drawn
    /// from `seed`. Used for property tests over many corpora.
    pub fn sampled(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_C0DE);
        let mut spec = Self::new(seed);
        for kind in TableKind::ALL {
            spec = spec.with_count(kind, rng.random_range(1..=40));
        }
        for category in INJECTABLE {
            if rng.random_bool(0.5) {
                spec = spec.with_rate(category, rng.random_range(0.0..0.15));
            }
        }
        spec
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, CorpusError> {
        let spec: Self = serde_json::from_slice(bytes).map_err(|e| CorpusError::Json(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        for name in self.counts.keys() {
            if TableKind::parse(name).is_none_or(|k| k.name() != name) {
                return Err(CorpusError::UnknownKind(name.clone()));
            }
        }
        for (name, &rate) in &self.malformation_rates {
            let category = ErrorCategory::from_name(name);
            if !INJECTABLE.contains(&category) {
                return Err(CorpusError::UnsupportedCategory(name.clone()));
            }
            if !(0.0..=1.0).contains(&rate) {
                return Err(CorpusError::RateOutOfRange {
                    category: name.clone(),
                    rate,
                });
            }
        }
        let w = &self.component_weights;
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
            return Err(CorpusError::BadComponentWeights);
        }
        Ok(())
    }

    fn count(&self, kind: TableKind) -> usize {
        self.counts.get(kind.name()).copied().unwrap_or(0)
    }
}

/// Whether `category` can be injected into `kind`, and if so whether the
/// damage is fatal (a failure) or only a warning.
pub fn injection_effect(kind: TableKind, category: &ErrorCategory) -> Option<bool> {
    use ErrorCategory as C;
    use TableKind as K;
    match (category, kind) {
        (C::MalformedExtension, _) | (C::MissingRequiredField, _) => Some(true),
        (C::IncompleteCoding, K::Observation) => Some(true),
        (C::AmbiguousChoice, K::Observation | K::Patient) => Some(true),
        (C::InvalidDate, _) => Some(false),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Position in the Bundle's entry list (and in the ingest batch).
    pub index: usize,
    pub kind: String,
    pub resource_id: String,
    pub category: String,
    /// Fatal injections are expected as failures, the rest as warnings.
    pub fatal: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub total_resources: usize,
    pub injected: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn fatal_indices(&self) -> Vec<(usize, String)> {
        self.injected
            .iter()
            .filter(|e| e.fatal)
            .map(|e| (e.index, e.category.clone()))
            .collect()
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec_pretty(self).expect("manifest serializes")
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub bundle: Vec<u8>,
    pub manifest: Manifest,
}

/// Generates the Bundle described by `spec`. Same spec, same bytes.
pub fn generate(spec: &CorpusSpec) -> Result<Corpus, CorpusError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let patient_count = spec.count(TableKind::Patient);
    let mut gen = Generator {
        rng: &mut rng,
        patient_count,
        weights: spec.component_weights,
    };

    let mut entries: Vec<Value> = Vec::new();
    let mut injected = Vec::new();
    for kind in TableKind::ALL {
        let n = spec.count(kind);
        let mut resources: Vec<Value> = (0..n).map(|i| gen.resource(kind, i)).collect();

        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(gen.rng);
        let mut cursor = order.into_iter();
        let mut damage: Vec<(usize, ErrorCategory, bool)> = Vec::new();
        for category in INJECTABLE {
            let Some(&rate) = spec.malformation_rates.get(category.name()) else { continue };
            let Some(fatal) = injection_effect(kind, &category) else { continue };
            let wanted = (rate * n as f64 + 1e-9).floor() as usize;
            for index in cursor.by_ref().take(wanted) {
                damage.push((index, category.clone(), fatal));
            }
        }
        damage.sort_by_key(|d| d.0);
        let base = entries.len();
        for (index, category, fatal) in damage {
            let resource_id = resources[index]["id"].as_str().unwrap_or_default().to_owned();
            inject(&mut resources[index], kind, &category);
            injected.push(ManifestEntry {
                index: base + index,
                kind: kind.name().to_owned(),
                resource_id,
                category: category.name().to_owned(),
                fatal,
            });
        }
        entries.extend(resources);
    }

    let total = entries.len();
    let bundle = json!({
        "resourceType": "Bundle",
        "id": format!("corpus-{}", spec.seed),
        "type": "collection",
        "total": total,
        "entry": entries
            .into_iter()
            .map(|r| {
                let full_url = format!(
                    "urn:fhirlens:{}/{}",
                    r["resourceType"].as_str().unwrap_or_default(),
                    r["id"].as_str().unwrap_or_default()
                );
                json!({ "fullUrl": full_url, "resource": r })
            })
            .collect::<Vec<_>>(),
    });
    Ok(Corpus {
        bundle: serde_json::to_vec_pretty(&bundle).expect("bundle serializes"),
        manifest: Manifest {
            seed: spec.seed,
            total_resources: total,
            injected,
        },
    })
}

fn inject(resource: &mut Value, kind: TableKind, category: &ErrorCategory) {
    let obj = resource.as_object_mut().expect("generated resources are objects");
    match category {
        ErrorCategory::MalformedExtension => {
            obj.insert(
                "extension".into(),
                json!([{ "valueString": "vendor-specific flag without url" }]),
            );
        }
        ErrorCategory::IncompleteCoding => {
            let display = obj["code"]["coding"][0]["display"].clone();
            obj.insert("code".into(), json!({ "coding": [{ "display": display }] }));
        }
        ErrorCategory::MissingRequiredField => {
            let field = match kind {
                TableKind::Patient => "id",
                TableKind::Observation => "code",
                TableKind::Encounter | TableKind::DocumentReference => "status",
            };
            obj.remove(field);
        }
        ErrorCategory::AmbiguousChoice => match kind {
            TableKind::Patient => {
                obj.insert("deceasedBoolean".into(), json!(false));
                obj.insert("deceasedDateTime".into(), json!("2020-01-01T00:00:00Z"));
            }
            _ => {
                // Two distinct value[x] keys, whatever the resource had.
                for (key, v) in [("valueString", json!("conflicting")), ("valueBoolean", json!(true))] {
                    if obj.keys().filter(|k| k.starts_with("value")).count() >= 2 {
                        break;
                    }
                    obj.entry(key).or_insert(v);
                }
            }
        },
        ErrorCategory::InvalidDate => match kind {
            TableKind::Patient => {
                obj.insert("birthDate".into(), json!("1984-02-30"));
            }
            TableKind::Observation => {
                obj.insert("effectiveDateTime".into(), json!("2024-13-01T08:00:00Z"));
            }
            TableKind::Encounter => {
                obj["period"]["start"] = json!("2024-01-32T09:00:00Z");
            }
            TableKind::DocumentReference => {
                obj.insert("date".into(), json!("09/01/2024"));
            }
        },
        _ => unreachable!("validated against INJECTABLE"),
    }
}

const GIVEN: [&str; 10] = ["Ana", "Ben", "Chloe", "Dev", "Eun-ji", "Femi", "Grace", "Hugo", "Ines", "Jon"];
const MIDDLE: [&str; 4] = ["Renee", "Lee", "Marie", "Jay"];
const FAMILY: [&str; 8] = ["Okafor", "Silva", "Nguyen", "Schmidt", "Haddad", "Kowalski", "Tanaka", "Reyes"];
const GENDER: [&str; 4] = ["female", "male", "other", "unknown"];

struct Simple {
    code: &'static str,
    display: &'static str,
    unit: &'static str,
    ucum: &'static str,
    low: f64,
    high: f64,
    decimals: usize,
}

const SIMPLE: [Simple; 4] = [
    Simple { code: "2339-0", display: "Glucose [Mass/volume] in Blood", unit: "mg/dL", ucum: "mg/dL", low: 70.0, high: 180.0, decimals: 0 },
    Simple { code: "8867-4", display: "Heart rate", unit: "beats/minute", ucum: "/min", low: 50.0, high: 120.0, decimals: 0 },
    Simple { code: "8310-5", display: "Body temperature", unit: "Cel", ucum: "Cel", low: 36.0, high: 39.5, decimals: 1 },
    Simple { code: "29463-7", display: "Body weight", unit: "kg", ucum: "kg", low: 45.0, high: 120.0, decimals: 2 },
];

const COMPONENTS: [(&str, &str, f64, f64); 3] = [
    ("8480-6", "Systolic blood pressure", 95.0, 160.0),
    ("8462-4", "Diastolic blood pressure", 55.0, 100.0),
    ("8867-4", "Heart rate", 50.0, 120.0),
];

/// 2024-01-01T00:00:00Z
const BASE_EPOCH_SECS: i64 = 1_704_067_200;

struct Generator<'a> {
    rng: &'a mut ChaCha8Rng,
    patient_count: usize,
    weights: [f64; 4],
}

impl Generator<'_> {
    fn resource(&mut self, kind: TableKind, i: usize) -> Value {
        match kind {
            TableKind::Patient => self.patient(i),
            TableKind::Observation => self.observation(i),
            TableKind::Encounter => self.encounter(i),
            TableKind::DocumentReference => self.document(i),
        }
    }

    fn pick<T: Copy>(&mut self, items: &[T]) -> T {
        items[self.rng.random_range(0..items.len())]
    }

    fn subject(&mut self) -> Value {
        let n = self.rng.random_range(0..self.patient_count.max(1));
        json!({ "reference": format!("Patient/pat-{n}") })
    }

    fn decimal(&mut self, low: f64, high: f64, decimals: usize) -> Value {
        let x = self.rng.random_range(low..high);
        let text = format!("{x:.decimals$}");
        Value::Number(text.parse::<Number>().expect("formatted float is a JSON number"))
    }

    /// Unique per `(slot, i)`; minute resolution keeps timestamps distinct.
    fn instant(&mut self, slot: i64, i: usize) -> String {
        let secs = BASE_EPOCH_SECS + slot * 86_400 * 400 + i as i64 * 3_600 + self.rng.random_range(0..60) * 60;
        let t = chrono::DateTime::from_timestamp(secs, 0).expect("in range");
        if self.rng.random_bool(0.2) {
            let shifted = t + chrono::Duration::hours(2);
            format!("{}+02:00", shifted.format("%Y-%m-%dT%H:%M:%S"))
        } else {
            t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
        }
    }

    fn maybe_extension(&mut self, obj: &mut serde_json::Map<String, Value>) {
        if self.rng.random_bool(0.3) {
            obj.insert(
                "extension".into(),
                json!([{
                    "url": "http://vendor.example/fhir/StructureDefinition/source-system",
                    "valueString": self.pick(&["ehr-a", "ehr-b", "lab-feed"]),
                }]),
            );
        }
    }

    fn patient(&mut self, i: usize) -> Value {
        let given = self.pick(&GIVEN);
        let family = self.pick(&FAMILY);
        let mut given_list = vec![given];
        if self.rng.random_bool(0.4) {
            given_list.push(self.pick(&MIDDLE));
        }
        let year = self.rng.random_range(1925..2020);
        let month = self.rng.random_range(1..=12);
        let day = self.rng.random_range(1..=28);
        let birth = match self.rng.random_range(0..10) {
            0 => format!("{year}"),
            1 => format!("{year}-{month:02}"),
            _ => format!("{year}-{month:02}-{day:02}"),
        };
        let mut names = vec![json!({ "use": "official", "family": family, "given": given_list })];
        if self.rng.random_bool(0.25) {
            names.push(json!({ "use": "usual", "family": family, "given": [self.pick(&GIVEN)] }));
        }
        let mut p = json!({
            "resourceType": "Patient",
            "id": format!("pat-{i}"),
            "identifier": [{ "system": "http://hospital.example/mrn", "value": format!("MRN{:06}", 1000 + i) }],
            "name": names,
            "gender": self.pick(&GENDER),
            "birthDate": birth,
        });
        self.maybe_extension(p.as_object_mut().expect("object"));
        p
    }

    fn components(&mut self) -> usize {
        let total: f64 = self.weights.iter().sum();
        let mut x = self.rng.random_range(0.0..total);
        for (n, w) in self.weights.iter().enumerate() {
            if x < *w {
                return n;
            }
            x -= w;
        }
        3
    }

    fn observation(&mut self, i: usize) -> Value {
        let n_components = self.components();
        let mut obs = json!({
            "resourceType": "Observation",
            "id": format!("obs-{i}"),
            "status": self.pick(&["final", "final", "amended", "preliminary"]),
            "category": [{ "coding": [{
                "system": "http://terminology.hl7.org/CodeSystem/observation-category",
                "code": "vital-signs",
                "display": "Vital Signs",
            }] }],
            "subject": self.subject(),
            "effectiveDateTime": self.instant(0, i),
        });
        let obj = obs.as_object_mut().expect("object");
        if n_components == 0 {
            match self.rng.random_range(0..10) {
                0 => {
                    obj.insert("code".into(), loinc("72166-2", "Tobacco smoking status"));
                    obj.insert(
                        "valueCodeableConcept".into(),
                        json!({ "coding": [{ "system": "http://snomed.info/sct", "code": "266919005", "display": "Never smoked tobacco" }] }),
                    );
                }
                1 => {
                    obj.insert("code".into(), loinc("8693-4", "Mental status"));
                    obj.insert("valueString".into(), json!("Alert and oriented"));
                }
                _ => {
                    let s = &SIMPLE[self.rng.random_range(0..SIMPLE.len())];
                    obj.insert("code".into(), loinc(s.code, s.display));
                    obj.insert(
                        "valueQuantity".into(),
                        json!({
                            "value": self.decimal(s.low, s.high, s.decimals),
                            "unit": s.unit,
                            "system": "http://unitsofmeasure.org",
                            "code": s.ucum,
                        }),
                    );
                }
            }
        } else {
            let code = if n_components == 2 {
                loinc("85354-9", "Blood pressure panel with all children optional")
            } else {
                loinc("85353-1", "Vital signs, weight, height, head circumference, oxygen saturation and BMI panel")
            };
            obj.insert("code".into(), code);
            let comps: Vec<Value> = COMPONENTS[..n_components]
                .iter()
                .map(|(code, display, low, high)| {
                    let unit = if *code == "8867-4" { "/min" } else { "mm[Hg]" };
                    json!({
                        "code": loinc(code, display),
                        "valueQuantity": {
                            "value": self.decimal(*low, *high, 0),
                            "unit": unit,
                            "system": "http://unitsofmeasure.org",
                            "code": unit,
                        },
                    })
                })
                .collect();
            obj.insert("component".into(), Value::Array(comps));
        }
        self.maybe_extension(obj);
        obs
    }

    fn encounter(&mut self, i: usize) -> Value {
        let (class_code, class_display) = self.pick(&[
            ("AMB", "ambulatory"),
            ("IMP", "inpatient encounter"),
            ("EMER", "emergency"),
        ]);
        let start = self.instant(1, i);
        let start_t = chrono::DateTime::parse_from_rfc3339(&start).expect("generated instant");
        let end = (start_t + chrono::Duration::minutes(self.rng.random_range(10..240)))
            .with_timezone(&chrono::Utc)
            .format("%Y-%m-%dT%H:%M:%SZ")
            .to_string();
        let mut e = json!({
            "resourceType": "Encounter",
            "id": format!("enc-{i}"),
            "status": self.pick(&["finished", "in-progress", "planned"]),
            "class": {
                "system": "http://terminology.hl7.org/CodeSystem/v3-ActCode",
                "code": class_code,
                "display": class_display,
            },
            "type": [{ "coding": [{ "system": "http://snomed.info/sct", "code": "185349003", "display": "Encounter for check up" }] }],
            "subject": self.subject(),
            "period": { "start": start, "end": end },
        });
        self.maybe_extension(e.as_object_mut().expect("object"));
        e
    }

    fn document(&mut self, i: usize) -> Value {
        let (code, display) = self.pick(&[("11506-3", "Progress Note"), ("18842-5", "Discharge summary")]);
        let date = if self.rng.random_bool(0.5) {
            self.instant(2, i)
        } else {
            self.instant(2, i)[..10].to_owned()
        };
        let blob: String = (0..self.rng.random_range(8..64))
            .map(|_| self.pick(&['A', 'Q', 'g', 'w', '0', '+', '/']))
            .collect();
        let mut d = json!({
            "resourceType": "DocumentReference",
            "id": format!("doc-{i}"),
            "status": "current",
            "type": { "coding": [{ "system": "http://loinc.org", "code": code, "display": display }] },
            "subject": self.subject(),
            "date": date,
            "author": [{ "reference": format!("Practitioner/prac-{}", self.rng.random_range(0..5)) }],
            "content": [{ "attachment": { "contentType": "text/plain", "data": format!("{blob}==") } }],
        });
        if self.rng.random_bool(0.7) {
            d["docStatus"] = json!(self.pick(&["final", "preliminary", "amended"]));
        }
        self.maybe_extension(d.as_object_mut().expect("object"));
        d
    }
}

fn loinc(code: &str, display: &str) -> Value {
    json!({ "coding": [{ "system": "http://loinc.org", "code": code, "display": display }], "text": display })
}

/// Kind names the corpus can contain, as resource kinds.
pub fn corpus_kinds() -> impl Iterator<Item = ResourceKind> {
    TableKind::ALL.into_iter().map(TableKind::resource_kind)
}
