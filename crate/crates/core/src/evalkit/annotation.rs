//! Aggregation of per-query annotator scores (0 to 5, one per annotator).
//!
//! A query's average score falls into exactly one bucket:
//! relevant `[3.5, 5]`, somewhat relevant `[2, 3.5)`, not relevant `[0, 2)`.

use std::fmt;
use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_SCORE: u8 = 5;
pub const RELEVANT_FROM: f64 = 3.5;
pub const SOMEWHAT_FROM: f64 = 2.0;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("annotation line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("records have different annotator counts ({expected} vs {got} for `{query_id}`)")]
    RaggedRecords {
        query_id: String,
        expected: usize,
        got: usize,
    },
    #[error("no annotation records")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
enum QueryId {
    Text(String),
    Number(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AnnotationRecord {
    pub query_id: String,
    pub scores: Vec<u8>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    query_id: QueryId,
    scores: Vec<i64>,
}

impl AnnotationRecord {
    pub fn new(query_id: impl Into<String>, scores: Vec<u8>) -> Result<Self, String> {
        if scores.is_empty() {
            return Err("at least one annotator score is required".into());
        }
        if let Some(s) = scores.iter().find(|&&s| s > MAX_SCORE) {
            return Err(format!("score {s} outside 0..={MAX_SCORE}"));
        }
        Ok(Self {
            query_id: query_id.into(),
            scores,
        })
    }

    pub fn average(&self) -> f64 {
        self.scores.iter().map(|&s| f64::from(s)).sum::<f64>() / self.scores.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelevanceBucket {
    Relevant,
    Somewhat,
    NotRelevant,
}

impl RelevanceBucket {
    pub fn for_average(avg: f64) -> Self {
        if avg >= RELEVANT_FROM {
            RelevanceBucket::Relevant
        } else if avg >= SOMEWHAT_FROM {
            RelevanceBucket::Somewhat
        } else {
            RelevanceBucket::NotRelevant
        }
    }
}

impl fmt::Display for RelevanceBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RelevanceBucket::Relevant => "Relevant",
            RelevanceBucket::Somewhat => "Somewhat relevant",
            RelevanceBucket::NotRelevant => "Not relevant",
        })
    }
}

pub fn bucketize_query(rec: &AnnotationRecord) -> (f64, RelevanceBucket) {
    let avg = rec.average();
    (avg, RelevanceBucket::for_average(avg))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasReport {
    /// Mean score of each annotator (column), in record order.
    pub means: Vec<f64>,
    /// `max(means) - min(means)`.
    pub spread: f64,
}

pub fn annotator_bias(records: &[AnnotationRecord]) -> Result<BiasReport, AnnotationError> {
    let first = records.first().ok_or(AnnotationError::Empty)?;
    let width = first.scores.len();
    let mut sums = vec![0u64; width];
    for r in records {
        if r.scores.len() != width {
            return Err(AnnotationError::RaggedRecords {
                query_id: r.query_id.clone(),
                expected: width,
                got: r.scores.len(),
            });
        }
        for (sum, &s) in sums.iter_mut().zip(&r.scores) {
            *sum += u64::from(s);
        }
    }
    let means: Vec<f64> = sums
        .iter()
        .map(|&s| s as f64 / records.len() as f64)
        .collect();
    let max = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = means.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(BiasReport {
        spread: max - min,
        means,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Table2Counts {
    pub relevant: usize,
    pub somewhat: usize,
    pub not_relevant: usize,
}

impl Table2Counts {
    pub fn total(&self) -> usize {
        self.relevant + self.somewhat + self.not_relevant
    }

    pub fn as_tuple(&self) -> (usize, usize, usize) {
        (self.relevant, self.somewhat, self.not_relevant)
    }

    pub fn render_markdown(&self) -> String {
        let n = self.total();
        format!(
            "| Bucket | Score Range | Number of Queries |\n|---|---|---|\n\
             | Relevant | [3.5-5] | {}/{n} |\n\
             | Somewhat relevant | [2-3.5) | {}/{n} |\n\
             | Not relevant | [0-2) | {}/{n} |\n",
            self.relevant, self.somewhat, self.not_relevant
        )
    }
}

pub fn table2_summary(records: &[AnnotationRecord]) -> Table2Counts {
    let mut c = Table2Counts::default();
    for r in records {
        match bucketize_query(r).1 {
            RelevanceBucket::Relevant => c.relevant += 1,
            RelevanceBucket::Somewhat => c.somewhat += 1,
            RelevanceBucket::NotRelevant => c.not_relevant += 1,
        }
    }
    c
}

/// Reads `{"query_id": ..., "scores": [...]}` lines; `query_id` may be a
/// string or an integer.
pub fn read_annotations(reader: impl Read) -> Result<Vec<AnnotationRecord>, AnnotationError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let err = |message: String| AnnotationError::Parse {
            line: line_no,
            message,
        };
        let line = line.map_err(|e| err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        let scores = raw
            .scores
            .iter()
            .map(|&s| {
                u8::try_from(s).map_err(|_| err(format!("score {s} outside 0..={MAX_SCORE}")))
            })
            .collect::<Result<Vec<u8>, _>>()?;
        let query_id = match raw.query_id {
            QueryId::Text(s) => s,
            QueryId::Number(n) => n.to_string(),
        };
        out.push(AnnotationRecord::new(query_id, scores).map_err(err)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(scores: &[u8]) -> AnnotationRecord {
        AnnotationRecord::new("q", scores.to_vec()).unwrap()
    }

    #[test]
    fn bucket_examples() {
        assert_eq!(
            bucketize_query(&rec(&[4, 4, 3, 4])),
            (3.75, RelevanceBucket::Relevant)
        );
        assert_eq!(
            bucketize_query(&rec(&[2, 2, 2, 2])).1,
            RelevanceBucket::Somewhat
        );
        assert_eq!(
            bucketize_query(&rec(&[0, 0, 0, 0])),
            (0.0, RelevanceBucket::NotRelevant)
        );
        assert_eq!(RelevanceBucket::for_average(3.5), RelevanceBucket::Relevant);
        assert_eq!(
            RelevanceBucket::for_average(3.49),
            RelevanceBucket::Somewhat
        );
        assert_eq!(
            RelevanceBucket::for_average(1.99),
            RelevanceBucket::NotRelevant
        );
        assert_eq!(RelevanceBucket::for_average(5.0), RelevanceBucket::Relevant);
    }

    #[test]
    fn bias_and_ragged() {
        let same = [rec(&[3, 3]), rec(&[1, 1])];
        assert_eq!(annotator_bias(&same).unwrap().spread, 0.0);
        let ragged = [rec(&[3, 3]), rec(&[1])];
        assert!(matches!(
            annotator_bias(&ragged),
            Err(AnnotationError::RaggedRecords { .. })
        ));
        assert!(matches!(annotator_bias(&[]), Err(AnnotationError::Empty)));
    }

    #[test]
    fn summary_extremes() {
        let zeros: Vec<_> = (0..6).map(|_| rec(&[0, 0, 0, 0])).collect();
        assert_eq!(table2_summary(&zeros).as_tuple(), (0, 0, 6));
        assert_eq!(table2_summary(&[]).total(), 0);
    }

    #[test]
    fn reads_jsonl() {
        let text =
            "{\"query_id\": 1, \"scores\": [4,4,3,4]}\n{\"query_id\": \"q2\", \"scores\": [0]}\n";
        let recs = read_annotations(text.as_bytes()).unwrap();
        assert_eq!(recs[0].query_id, "1");
        assert_eq!(recs[1].scores, [0]);
        for bad in [
            r#"{"query_id": 1, "scores": [6]}"#,
            r#"{"query_id": 1, "scores": [-1]}"#,
            r#"{"query_id": 1, "scores": []}"#,
            r#"{"query_id": 1}"#,
        ] {
            assert!(read_annotations(bad.as_bytes()).is_err(), "{bad}");
        }
    }
}
