use std::fs;

use coopdrive::accident::{first_warnings, score};
use coopdrive::harness::{
    emit_plots, evaluate, generate_scenario, run_batch, run_pipeline, Config, RunRecord, Scenario, Template,
    PLOT_KINDS, RECORD_FILES,
};

fn read_dir_sorted(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn record_survives_write_read_write() {
    let cfg = Config::default();
    let s = generate_scenario(4, Template::Merging, &cfg).unwrap();
    let record = run_pipeline(&s, &cfg).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    record.write(&a).unwrap();
    let back = RunRecord::read(&a).unwrap();
    back.write(&b).unwrap();
    for name in RECORD_FILES {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    assert_eq!(back.frames.len(), s.frames);
    assert_eq!(back.events_gt.len(), Template::Merging.expected_collisions());
    assert_eq!(Scenario::parse(&fs::read_to_string(a.join("scenario.txt")).unwrap()).unwrap(), s);
}

#[test]
fn plots_are_deterministic_and_layered() {
    let cfg = Config::default();
    let scenarios: Vec<Scenario> = [Template::Benign, Template::Crossing]
        .into_iter()
        .map(|t| generate_scenario(2, t, &cfg).unwrap())
        .collect();
    let records = run_batch(&scenarios, &cfg, 2).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    for (k, r) in records.iter().enumerate() {
        let (d1, d2) = (tmp.path().join(format!("{k}a")), tmp.path().join(format!("{k}b")));
        let paths = emit_plots(r, &d1).unwrap();
        emit_plots(r, &d2).unwrap();
        assert_eq!(paths.len(), r.frames.len() * PLOT_KINDS.len());
        assert_eq!(read_dir_sorted(&d1), read_dir_sorted(&d2));
        let layered = read_dir_sorted(&d1)
            .iter()
            .filter(|(_, bytes)| String::from_utf8_lossy(bytes).contains("id=\"collisions\""))
            .count();
        if r.template == Template::Benign {
            assert_eq!(layered, 0);
        } else {
            assert!(layered > 0);
        }
    }
}

#[test]
fn eval_totals_are_sums_and_perfect_predictions_score_one() {
    let cfg = Config::default();
    let scenarios: Vec<Scenario> = [Template::Crossing, Template::EgoCrossing, Template::Following]
        .into_iter()
        .map(|t| generate_scenario(1, t, &cfg).unwrap())
        .collect();
    let mut records = run_batch(&scenarios, &cfg, 0).unwrap();
    let report = evaluate(&records).unwrap();
    let tp: usize = report.records.iter().map(|r| r.score.true_positives).sum();
    let fp: usize = report.records.iter().map(|r| r.score.false_positives).sum();
    assert_eq!((report.true_positives, report.false_positives), (tp, fp));
    assert_eq!(report.records.len(), 3);

    for r in &mut records {
        r.events_pred = r.events_gt.clone();
    }
    let perfect = evaluate(&records).unwrap();
    assert_eq!(perfect.false_positives + perfect.false_negatives, 0);
    assert_eq!(perfect.precision(), Some(1.0));
    assert_eq!(perfect.recall(), Some(1.0));
    assert_eq!(perfect.mean_time_error, Some(0.0));
    assert!(evaluate(&[]).is_err());
}

#[test]
fn predicted_events_are_first_warnings() {
    let cfg = Config::default();
    let s = generate_scenario(0, Template::EgoCrossing, &cfg).unwrap();
    let r = run_pipeline(&s, &cfg).unwrap();
    let per_frame: Vec<_> = r.frames.iter().map(|f| f.events.clone()).collect();
    assert_eq!(first_warnings(&per_frame), r.events_pred);
    let sc = score(&r.events_pred, &r.events_gt, cfg.accident.time_tol, cfg.accident.dist_tol);
    assert_eq!(sc.false_negatives, 0, "{:?} vs {:?}", r.events_pred, r.events_gt);
}
