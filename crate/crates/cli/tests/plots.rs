use lumenlab_cli::plot::{emit_plots, parse_report, Report};
use lumenlab_core::evalbench::{write_bench_reports, BenchReport};

#[test]
fn bench_chart_bars_equal_csv_values() {
    let dir = tempfile::tempdir().unwrap();
    let per = [0.125, 1.0 / 3.0, 0.5, 0.7, 0.9, 0.25];
    let report = BenchReport {
        model: "demo".into(),
        n: 12,
        per_attribute: per,
        avg_score: per.iter().sum::<f64>() / 6.0,
        ci_low: [0.0; 6],
        ci_high: [1.0; 6],
        psnr: 20.0,
        ssim: 0.5,
        temporal_smoothness_proxy: 0.01,
        dense_l2: None,
        degenerate: 0,
    };
    write_bench_reports(dir.path(), &[report]).unwrap();
    let csv = dir.path().join("bench.csv");
    let Report::Bench(rows) = parse_report(&csv).unwrap() else { panic!("not a bench report") };
    assert_eq!(rows[0].per_attribute, per);
    let files = emit_plots(&[csv], &dir.path().join("plots")).unwrap();
    assert_eq!(files.len(), 1);
    let svg = std::fs::read_to_string(&files[0]).unwrap();
    let values: Vec<f64> = svg
        .split("data-value=\"")
        .skip(1)
        .map(|s| s[..s.find('"').unwrap()].parse().unwrap())
        .collect();
    assert_eq!(values, per.to_vec());
}

#[test]
fn one_loss_csv_gives_one_curve() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("loss.csv");
    std::fs::write(&p, "iteration,L0,Lfast,Lphy,total\n0,1,0.5,0.2,1.7\n1,0.8,0.4,0.1,1.3\n").unwrap();
    let files = emit_plots(std::slice::from_ref(&p), dir.path()).unwrap();
    assert_eq!(files, vec![dir.path().join("00_loss_loss.svg")]);
    assert!(std::fs::read_to_string(&files[0]).unwrap().starts_with("<svg"));
}
