use std::sync::Arc;

use metarank::evalkit::bench::{
    render_csv, render_markdown, summarize_samples, LatencySample, BATCH_GRID,
};
use metarank::evalkit::stats::{mean, median, sample_std};
use metarank::evalkit::synthetic::{
    annotation_fixture, collateral_catalog, collateral_queries, format_fixture,
};
use metarank::evalkit::{
    ablation, annotator_bias, bench, table2_summary, AnnotationRecord, RelevanceBucket,
};
use metarank::index::build_index;
use metarank::promptc::compile_all;
use metarank::rerank::prompt_map;
use metarank::{BackendConfig, Backends, Pipeline, RerankConfig};
use proptest::prelude::*;

/// Plain two-pass statistics written without the library's helpers.
fn oracle(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let mid = s.len() / 2;
    let med = if s.len().is_multiple_of(2) {
        (s[mid - 1] + s[mid]) / 2.0
    } else {
        s[mid]
    };
    (m, var.sqrt(), med)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * b.abs().max(1.0)
}

proptest! {
    #[test]
    fn stats_match_oracle(xs in prop::collection::vec(1e-4f64..10.0, 1..200)) {
        let (m, s, med) = oracle(&xs);
        prop_assert!(close(mean(&xs).unwrap(), m));
        prop_assert!(close(sample_std(&xs).unwrap(), s));
        prop_assert!(close(median(&xs).unwrap(), med));
    }
}

#[test]
fn stats_hand_values() {
    let xs = [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0];
    assert_eq!(mean(&xs), Some(5.0));
    assert!((sample_std(&xs).unwrap() - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
    assert_eq!(median(&xs), Some(4.5));
    assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
    assert_eq!(mean::<f64>(&[]), None);
}

#[test]
fn summarize_groups_by_batch_size() {
    let samples: Vec<LatencySample> = BATCH_GRID
        .iter()
        .flat_map(|&b| {
            (0..31).map(move |q| LatencySample {
                query_id: q,
                batch_size: b,
                wall_time: 0.01 * (q as f64 + 1.0) * b as f64,
            })
        })
        .collect();
    let report = summarize_samples("desk", &samples);
    assert_eq!(report.rows.len(), 7);
    for row in &report.rows {
        let xs: Vec<f64> = samples
            .iter()
            .filter(|s| s.batch_size == row.batch_size)
            .map(|s| s.wall_time)
            .collect();
        let (m, s, med) = oracle(&xs);
        assert_eq!(row.count, 31);
        assert!(close(row.mean, m) && close(row.std, s) && close(row.median, med));
    }
    let md = render_markdown(std::slice::from_ref(&report));
    assert!(md.contains("| desk |") && md.contains("b=64"), "{md}");
    let csv = render_csv(&[report]);
    assert!(
        csv.starts_with("label,stat,b=1,b=2,b=4,b=8,b=16,b=32,b=64"),
        "{csv}"
    );
}

#[test]
fn bench_times_every_query_at_every_batch_size() {
    let cat = collateral_catalog(200, 2);
    let records = compile_all(&cat, 512).unwrap();
    let backends = Backends::from_config(&BackendConfig::stub(64)).unwrap();
    let index = build_index(&records, backends.bi.as_ref()).unwrap();
    let p = Pipeline::new(
        Arc::new(index),
        Arc::new(prompt_map(&records)),
        backends,
        RerankConfig::default(),
    )
    .unwrap();
    let queries = collateral_queries(31, 2);
    let (report, samples) = bench("ci", &queries, &BATCH_GRID, &p).unwrap();
    assert_eq!(samples.len(), 31 * 7);
    assert_eq!(
        report.rows.iter().map(|r| r.batch_size).collect::<Vec<_>>(),
        BATCH_GRID
    );
    assert!(samples.iter().all(|s| s.wall_time > 0.0));
    assert!(bench("ci", &[], &BATCH_GRID, &p).is_err());
    assert!(bench("ci", &queries, &[0], &p).is_err());
}

#[test]
fn table2_on_bundled_annotations() {
    let recs = annotation_fixture();
    assert_eq!(recs.len(), 31);
    assert_eq!(table2_summary(&recs).as_tuple(), (15, 9, 7));
    let bias = annotator_bias(&recs).unwrap();
    assert_eq!(bias.means.len(), 4);
    let lo = bias.means.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = bias.means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(format!("{lo:.2} {hi:.2}"), "2.74 3.26");
}

#[test]
fn bucket_boundaries() {
    assert_eq!(RelevanceBucket::for_average(3.5), RelevanceBucket::Relevant);
    assert_eq!(RelevanceBucket::for_average(5.0), RelevanceBucket::Relevant);
    assert_eq!(
        RelevanceBucket::for_average(3.49),
        RelevanceBucket::Somewhat
    );
    assert_eq!(RelevanceBucket::for_average(2.0), RelevanceBucket::Somewhat);
    assert_eq!(
        RelevanceBucket::for_average(1.99),
        RelevanceBucket::NotRelevant
    );
    assert_eq!(
        RelevanceBucket::for_average(0.0),
        RelevanceBucket::NotRelevant
    );
    assert!(AnnotationRecord::new("q", vec![6]).is_err());
    assert!(AnnotationRecord::new("q", vec![]).is_err());
}

#[test]
fn two_stage_beats_stage_one_on_format_queries() {
    let fx = format_fixture();
    let records = compile_all(&fx.catalog, 512).unwrap();
    let backends = Backends::from_config(&BackendConfig::stub(384)).unwrap();
    let index = build_index(&records, backends.bi.as_ref()).unwrap();
    let p = Pipeline::new(
        Arc::new(index),
        Arc::new(prompt_map(&records)),
        backends,
        RerankConfig::default(),
    )
    .unwrap();
    let report = ablation(&fx.query_texts(), |d, q| fx.judge(d, q), &p).unwrap();
    assert_eq!(report.rows.len(), 10);
    assert!(report.fraction >= 0.9, "{}", report.render_markdown());
    let pdf = &report.rows[0];
    assert_eq!((pdf.stage_one <= 2, pdf.two_stage), (true, 5));
}
