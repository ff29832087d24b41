use std::fs;

use cksf_core::{run, DiagnosticsRecord, RunConfig, CSV_HEADER};

#[test]
fn default_run_is_clean_and_mass_decreases() {
    let out = std::env::temp_dir().join(format!("cksf-e2e-{}", std::process::id()));
    let _ = fs::remove_dir_all(&out);
    let cfg = RunConfig {
        out_dir: out.clone(),
        snapshot_every: 0,
        ..RunConfig::default()
    };
    let summary = run(&cfg).unwrap();
    assert!(summary.success(), "{}", summary.to_text());
    assert!(summary.violations.is_empty());
    assert!(summary.steps >= 2000);

    let csv = fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    let recs: Vec<DiagnosticsRecord> = lines
        .map(|l| DiagnosticsRecord::from_csv_row(l).unwrap())
        .collect();
    assert_eq!(recs.len() as u64, summary.steps + 1);
    for w in recs.windows(2) {
        assert!(w[1].mass_n < w[0].mass_n, "step {}", w[1].step);
        assert_eq!(w[1].step, w[0].step + 1);
    }
    assert_eq!(recs.last().unwrap().t, summary.t_final);

    let text = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(text.contains("violations = 0"));
    assert!(text.contains("completed = true"));
    fs::remove_dir_all(out).unwrap();
}
