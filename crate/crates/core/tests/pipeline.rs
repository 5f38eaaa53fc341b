//! End-to-end paths through generation, calibration and scanning.

use windiff::calibration::{
    representative_band, simulate_null_clouds, CalibrationSet, CalibrationTable, Generator, SimConfig,
};
use windiff::datagen::{gen_synthetic, gen_unibench, SyntheticKind, SyntheticPlan, UniBenchPlan};
use windiff::detectors::{block_scan, QuorumConfig, ScanMethod, ScanPlan, Verdict};
use windiff::measures::{MeasureId, MeasureSpec};
use windiff::ncd::NcdConfig;
use windiff::series::{parse_series, CsvOptions, Series, Window};

fn tables(ids: &[MeasureId]) -> CalibrationSet {
    let specs: Vec<MeasureSpec> = ids.iter().map(|&id| MeasureSpec::new(id)).collect();
    let cfg = SimConfig::new(vec![50, 100], 300, Generator::Normal, 9);
    let mut set = CalibrationSet::new();
    for cloud in simulate_null_clouds(&specs, &cfg).unwrap() {
        set.insert(representative_band(&cloud).unwrap());
    }
    set
}

#[test]
fn generated_series_survive_a_csv_round_trip() {
    let plan = SyntheticPlan::with_layout(SyntheticKind::Mixture, 5, 40, 3, 21);
    let (series, annotations) = gen_synthetic(&plan).unwrap();
    assert!(annotations.is_partition());
    let mut buf = Vec::new();
    series.write_csv(&mut buf, b',').unwrap();
    let opts = CsvOptions {
        has_timestamp: true,
        ..CsvOptions::default()
    };
    assert_eq!(parse_series(buf.as_slice(), &opts).unwrap(), series);
}

#[test]
fn tables_survive_a_file_round_trip() {
    let set = tables(&[MeasureId::KolmogorovSmirnov]);
    let table = set.get(MeasureId::KolmogorovSmirnov).unwrap();
    let dir = std::env::temp_dir().join(format!("windiff-pipeline-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(CalibrationTable::file_name(MeasureId::KolmogorovSmirnov));
    table.save(&path).unwrap();
    let loaded = CalibrationTable::load(&path).unwrap();
    std::fs::remove_dir_all(&dir).unwrap();
    assert_eq!(&loaded, table);
    for v in [0.0, 0.5, 1.0, 2.0] {
        assert_eq!(loaded.p_value(v), table.p_value(v));
    }
}

#[test]
fn block_scans_agree_with_the_planted_change() {
    let ids = vec![MeasureId::KolmogorovSmirnov, MeasureId::Hellinger, MeasureId::CramerVonMises];
    let set = tables(&ids);
    let plan = SyntheticPlan::with_layout(SyntheticKind::Average, 6, 100, 2, 4);
    let (series, _) = gen_synthetic(&plan).unwrap();
    // shift the last two blocks far away
    let rows: Vec<Vec<f64>> = series
        .points()
        .iter()
        .enumerate()
        .map(|(i, p)| p.values.iter().map(|v| if i >= 400 { v + 5.0 } else { *v }).collect())
        .collect();
    let shifted = Series::from_rows(rows).unwrap();
    let quorum = QuorumConfig::new(ids, 0.5, 0.05).unwrap();
    for method in [ScanMethod::Poset(quorum.clone()), ScanMethod::Mst(quorum.clone())] {
        let mut scan = ScanPlan::new(Window::new(0, 100), 100, method);
        scan.first_start = Some(0);
        let records = block_scan(&shifted, &scan, &set).unwrap();
        assert_eq!(records.len(), 6);
        assert_eq!(records[0].verdict, Verdict::Same, "a window compared with itself");
        assert_eq!(records[4].verdict, Verdict::Different);
        assert_eq!(records[5].verdict, Verdict::Different);
    }
}

#[test]
fn ncd_block_scan_reports_every_window() {
    let plan = UniBenchPlan {
        windows: 4,
        window_len: 200,
        embed_position: 3,
        ..UniBenchPlan::random(windiff::datagen::BaseLaw::Normal, windiff::datagen::ChangeKind::Average, 2)
    };
    let (series, annotations) = gen_unibench(&plan).unwrap();
    assert_eq!(series.len(), 800);
    assert_eq!(annotations.segments[2].label, "E");
    let method = ScanMethod::Ncd {
        config: NcdConfig::default(),
        alpha: 0.05,
    };
    let records = block_scan(&series, &ScanPlan::new(Window::new(0, 200), 200, method), &CalibrationSet::new()).unwrap();
    assert_eq!(records.len(), 3);
    assert!(records.iter().all(|r| (0.0..=1.0).contains(&r.p_value)));
}
