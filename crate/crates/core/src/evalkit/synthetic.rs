//! Synthetic catalogs, queries and annotation data for the evaluation
//! harness and tests.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::annotation::{read_annotations, AnnotationRecord};
use crate::catalog::{Catalog, Document, Feature, FeatureKind, FeatureSchema, FeatureValue};

const CATEGORICAL: [(&str, &[&str]); 15] = [
    ("format", &["PDF", "PPTX", "DOCX", "XLSX", "OFT", "MP4"]),
    (
        "product",
        &[
            "Dynamics 365",
            "Azure",
            "Power BI",
            "Teams",
            "SharePoint",
            "Dataverse",
            "Intune",
            "Defender",
        ],
    ),
    (
        "industry",
        &[
            "retail",
            "manufacturing",
            "healthcare",
            "financial services",
            "public sector",
            "education",
        ],
    ),
    ("region", &["EMEA", "Americas", "APAC", "global"]),
    ("audience", &["seller", "partner", "customer", "executive"]),
    (
        "language",
        &["English", "French", "German", "Japanese", "Spanish"],
    ),
    (
        "content type",
        &[
            "case study",
            "pitch deck",
            "datasheet",
            "email template",
            "demo video",
            "pricing sheet",
        ],
    ),
    (
        "solution area",
        &[
            "modern work",
            "business applications",
            "security",
            "data and AI",
            "infrastructure",
        ],
    ),
    (
        "sales stage",
        &[
            "prospecting",
            "qualification",
            "proposal",
            "negotiation",
            "closing",
        ],
    ),
    (
        "owner team",
        &[
            "field marketing",
            "product marketing",
            "partner team",
            "readiness",
        ],
    ),
    (
        "asset category",
        &["training", "marketing", "competitive", "technical"],
    ),
    (
        "campaign",
        &[
            "spring launch",
            "fiscal kickoff",
            "cloud migration",
            "AI transformation",
        ],
    ),
    ("segment", &["enterprise", "SMB", "corporate", "strategic"]),
    (
        "licensing",
        &["E3", "E5", "pay as you go", "enterprise agreement"],
    ),
    (
        "partner",
        &["none", "systems integrator", "ISV", "reseller"],
    ),
];

const NUMERICAL: [&str; 5] = ["views", "downloads", "shares", "likes", "age in days"];

/// Twenty-feature schema (15 categorical, 5 numerical) resembling sales
/// collateral metadata.
pub fn collateral_schema() -> FeatureSchema {
    let mut features: Vec<Feature> = CATEGORICAL
        .iter()
        .map(|(name, _)| Feature::new(*name, FeatureKind::Categorical))
        .collect();
    features.extend(
        NUMERICAL
            .iter()
            .map(|n| Feature::new(*n, FeatureKind::Numerical)),
    );
    FeatureSchema::new("collateral-v1", features).expect("static schema is valid")
}

/// Random collateral catalog over [`collateral_schema`]. About a third of
/// numerical values are zero and a few values are missing.
pub fn collateral_catalog(n_docs: usize, seed: u64) -> Catalog {
    let schema = collateral_schema();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let docs = (0..n_docs)
        .map(|i| {
            let mut values = BTreeMap::new();
            for (name, choices) in CATEGORICAL {
                let v = if rng.gen_bool(0.03) {
                    FeatureValue::Missing
                } else {
                    FeatureValue::Text(choices.choose(&mut rng).expect("non-empty").to_string())
                };
                values.insert(name.to_string(), v);
            }
            for name in NUMERICAL {
                let v = if rng.gen_bool(0.03) {
                    FeatureValue::Missing
                } else if rng.gen_bool(0.3) {
                    FeatureValue::Number(0.0)
                } else {
                    // heavy-tailed counts
                    let x: f64 = rng.gen_range(0.0f64..1.0);
                    FeatureValue::Number((10.0f64.powf(4.0 * x)).floor())
                };
                values.insert(name.to_string(), v);
            }
            let id = format!("doc-{i:06}");
            Document {
                url: Some(format!("https://collateral.example/{id}")),
                title: Some(format!("Collateral item {i}")),
                id,
                values,
            }
        })
        .collect();
    Catalog::new(schema, docs).expect("generated catalog is valid")
}

const QUERY_TEMPLATES: [&str; 8] = [
    "What are contents available for {p}? Give a {f} format document.",
    "{p} {c} for {i} customers",
    "Looking for a {c} about {p} in {l}",
    "Share the most viewed {f} on {p} for {s} accounts",
    "{i} {c} for the {st} stage",
    "I need an {a} level {c} for {p}",
    "Do we have a {f} {c} on {sa} for {r}?",
    "Recent {p} material for a {s} {i} customer meeting",
];

/// Deterministic natural-language queries over the collateral vocabulary.
pub fn collateral_queries(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = |rng: &mut ChaCha8Rng, feature: usize| -> &'static str {
        CATEGORICAL[feature].1.choose(rng).expect("non-empty")
    };
    (0..n)
        .map(|i| {
            let t = QUERY_TEMPLATES[i % QUERY_TEMPLATES.len()];
            t.replace("{p}", pick(&mut rng, 1))
                .replace("{f}", pick(&mut rng, 0))
                .replace("{i}", pick(&mut rng, 2))
                .replace("{r}", pick(&mut rng, 3))
                .replace("{a}", pick(&mut rng, 4))
                .replace("{l}", pick(&mut rng, 5))
                .replace("{c}", pick(&mut rng, 6))
                .replace("{sa}", pick(&mut rng, 7))
                .replace("{st}", pick(&mut rng, 8))
                .replace("{s}", pick(&mut rng, 12))
        })
        .collect()
}

/// A query asking for one document format, with the format that a
/// relevant result must have.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormatQuery {
    pub text: String,
    pub format: String,
}

/// Catalog and queries where each query names a product and a format.
///
/// Each product has six documents in the requested format whose subject
/// repeats the query's wording word for word, and three decoys in other
/// formats whose subject glues the same words together
/// (`whatarecontentsavailablefor`). The decoys share slightly more
/// character 3-grams with the query, so the bi-encoder ranks them first;
/// they share no whole words, so the cross-encoder's word overlap term
/// puts the requested format back on top.
#[derive(Debug, Clone)]
pub struct FormatFixture {
    pub catalog: Catalog,
    pub queries: Vec<FormatQuery>,
}

impl FormatFixture {
    pub fn format_of(&self, doc_id: &str) -> Option<&str> {
        match self.catalog.get(doc_id)?.value("format") {
            FeatureValue::Text(t) => Some(t.as_str()),
            _ => None,
        }
    }

    /// True when the document has the format the query asks for.
    pub fn judge(&self, doc_id: &str, query: &str) -> bool {
        let wanted = self
            .queries
            .iter()
            .find(|q| q.text == query)
            .map(|q| q.format.as_str());
        wanted.is_some() && self.format_of(doc_id) == wanted
    }

    pub fn query_texts(&self) -> Vec<String> {
        self.queries.iter().map(|q| q.text.clone()).collect()
    }
}

const FIXTURE_PRODUCTS: [(&str, &str); 10] = [
    ("Dynamics 365", "PDF"),
    ("Azure", "PPTX"),
    ("Power BI", "DOCX"),
    ("Teams", "OFT"),
    ("SharePoint", "XLSX"),
    ("Dataverse", "PDF"),
    ("Intune", "PPTX"),
    ("Defender", "DOCX"),
    ("Viva", "OFT"),
    ("Fabric", "MP4"),
];

const FIXTURE_FORMATS: [&str; 6] = ["PDF", "PPTX", "DOCX", "XLSX", "OFT", "MP4"];

const MATCHING_SUBJECT: &str = "what are contents available for";
const DECOY_SUBJECT: &str = "whatarecontentsavailablefor giveaformatdocument";
const FILLER_SUBJECTS: [&str; 3] = [
    "a guide for sellers",
    "a brief for partners",
    "a story for customers",
];

pub fn format_fixture() -> FormatFixture {
    let schema = FeatureSchema::new(
        "format-fixture-v1",
        vec![
            Feature::new("subject", FeatureKind::Categorical),
            Feature::new("product", FeatureKind::Categorical),
            Feature::new("format", FeatureKind::Categorical),
            Feature::new("views", FeatureKind::Numerical),
        ],
    )
    .expect("static schema is valid");

    let mut docs = Vec::new();
    let mut queries = Vec::new();
    let mut push = |product: &str, subject: &str, format: &str, views: f64| {
        let id = format!("fx-{:04}", docs.len());
        let mut values = BTreeMap::new();
        values.insert(
            "subject".to_string(),
            FeatureValue::Text(subject.to_string()),
        );
        values.insert(
            "product".to_string(),
            FeatureValue::Text(product.to_string()),
        );
        values.insert("format".to_string(), FeatureValue::Text(format.to_string()));
        values.insert("views".to_string(), FeatureValue::Number(views));
        docs.push(Document {
            title: Some(format!("{product} {subject} ({format})")),
            url: Some(format!("https://collateral.example/{id}")),
            id,
            values,
        });
    };

    for (pi, (product, wanted)) in FIXTURE_PRODUCTS.iter().enumerate() {
        let views = (pi * 10) as f64;
        let others: Vec<&str> = FIXTURE_FORMATS
            .iter()
            .copied()
            .filter(|f| f != wanted)
            .collect();
        for _ in 0..6 {
            push(product, MATCHING_SUBJECT, wanted, views);
        }
        for format in &others[..3] {
            push(product, DECOY_SUBJECT, format, views);
        }
        for (i, subject) in FILLER_SUBJECTS.iter().enumerate() {
            push(product, subject, others[(i + 3) % others.len()], views);
        }
        queries.push(FormatQuery {
            text: format!(
                "What are contents available for {product}? Give a {wanted} format document."
            ),
            format: wanted.to_string(),
        });
    }

    FormatFixture {
        catalog: Catalog::new(schema, docs).expect("fixture catalog is valid"),
        queries,
    }
}

const ANNOTATIONS: &str = include_str!("../../fixtures/annotations.jsonl");

/// 31 queries scored 0 to 5 by four annotators. Bucket counts are 15/9/7
/// and per-annotator means run from 2.74 to 3.26.
pub fn annotation_fixture() -> Vec<AnnotationRecord> {
    read_annotations(ANNOTATIONS.as_bytes()).expect("bundled annotation fixture is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collateral_is_deterministic() {
        let a = collateral_catalog(50, 7);
        let b = collateral_catalog(50, 7);
        assert_eq!(a, b);
        assert_eq!(a.schema.len(), 20);
        assert_ne!(a, collateral_catalog(50, 8));
        assert_eq!(collateral_queries(31, 1), collateral_queries(31, 1));
        assert_eq!(collateral_queries(31, 1).len(), 31);
    }

    #[test]
    fn format_fixture_shape() {
        let fx = format_fixture();
        assert_eq!(fx.queries.len(), 10);
        assert!(fx.queries[0].text.contains("Dynamics 365") && fx.queries[0].format == "PDF");
        let q = &fx.queries[0].text;
        let pdf = fx
            .catalog
            .documents
            .iter()
            .find(|d| d.value("format") == &FeatureValue::Text("PDF".into()))
            .unwrap();
        assert!(fx.judge(&pdf.id, q));
        assert!(!fx.judge(&pdf.id, "unknown query"));
    }
}
