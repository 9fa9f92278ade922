use std::io::BufReader;

use clockspin::fitlab::{fit_lineshape, Trace};
use clockspin::hamiltonian::{find_anticrossings, sweep, AnticrossingOptions, Direction, PairSelector, SpinSystem};
use clockspin::spectro::{
    normalize_map, BroadeningModel, CouplingDensity, SpectroSettings, TransmissionMap, TransmissionModel,
};

fn quiet_model() -> TransmissionModel {
    TransmissionModel::new(
        &SpinSystem::how10(),
        CouplingDensity::constant(0.02),
        BroadeningModel::default().without_dipolar(),
        SpectroSettings::default(),
    )
    .unwrap()
}

#[test]
fn sweep_finds_clock_fields_on_a_coarse_grid() {
    let grid: Vec<f64> = (0..60).map(|k| k as f64 * 0.2 / 59.0).collect();
    let d = sweep(&SpinSystem::how10(), Direction::Z, &grid).unwrap();
    let found = find_anticrossings(&d, &PairSelector::LowestPairPerNuclearLabel, &AnticrossingOptions::default())
        .unwrap();
    assert_eq!(found.len(), 4);
    for a in &found {
        let expected = SpinSystem::how10().ising_crossing_field(a.nuclear_label);
        assert!((a.field_center_t - expected).abs() < 2e-4, "{a:?}");
        assert!((a.gap_ghz - 9.1773).abs() < 1e-3);
    }
}

#[test]
fn simulated_clock_line_fits_back() {
    // one field, no dipolar averaging: the spectrum near 9.2 GHz is dominated by one line
    let m = quiet_model();
    let h = SpinSystem::how10().ising_crossing_field(-3.5);
    let line = m
        .lines_at([0.0, 0.0, h])
        .unwrap()
        .into_iter()
        .filter(|l| l.transition.nuclear_label == -3.5)
        .max_by(|a, b| a.transition.delta_p.total_cmp(&b.transition.delta_p))
        .unwrap();
    let freqs: Vec<f64> = (0..301).map(|k| line.omega() - 1.5 + k as f64 * 0.01).collect();
    let t = m.column([0.0, 0.0, h], &freqs).unwrap();
    let trace = Trace::new(freqs.clone(), t.iter().map(|z| z.norm() - 1.0).collect()).unwrap();
    let fit = fit_lineshape(&trace, line.transition.delta_p, None).unwrap();
    let v = fit.values();
    assert!((v[0] - line.rate).abs() / line.rate < 0.02, "{v:?} vs {line:?}");
    assert!((v[1] - line.gamma).abs() / line.gamma < 0.02);
    assert!((v[2] - line.omega()).abs() < 1e-3);
}

#[test]
fn map_csv_roundtrip_and_normalization() {
    let m = quiet_model();
    let fields: Vec<f64> = (0..8).map(|k| 0.15 + k as f64 * 0.005).collect();
    let freqs: Vec<f64> = (0..30).map(|k| 8.5 + k as f64 * 0.1).collect();
    let raw = m.simulate_map(Direction::Z, &fields, &freqs, Some(1.0)).unwrap();
    let mut buf = Vec::new();
    raw.write_csv(&mut buf).unwrap();
    let back = TransmissionMap::read_csv(BufReader::new(&buf[..])).unwrap();
    assert_eq!(back.fields_t, raw.fields_t);
    assert_eq!(back.freqs_ghz, raw.freqs_ghz);
    assert_eq!(back.values(), raw.values());

    let n = normalize_map(&raw, 0.005, 1.0).unwrap();
    // the last row has no partner inside the grid
    assert_eq!(n.fields_t.len(), fields.len() - 1);
    assert!(n.values().iter().all(|z| z.norm().is_finite()));
}
