//! Regenerates the checked-in case files under `data/`.
//!
//! Run with `cargo test -p pfgeom --test gen_data -- --ignored` after
//! changing the generator or the CDF writer. Committed output is the
//! source of truth for all other tests.

use std::path::PathBuf;

use pfgeom::harness::synth_case;
use pfgeom::netio::{case_to_cdf, parse_cdf, serialize_native, Branch, Bus, BusKind, NetworkCase};

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn bus(id: u32, kind: BusKind, load_p: f64, load_q: f64, gen_p: f64, gen_q: f64, shunt_b: f64) -> Bus {
    Bus {
        id,
        kind,
        load_p,
        load_q,
        gen_p,
        gen_q,
        shunt_g: 0.0,
        shunt_b,
        base_kv: 0.0,
    }
}

fn branch(from: u32, to: u32, r: f64, x: f64, b: f64, tap: f64) -> Branch {
    Branch { from, to, r, x, b, tap, shift: 0.0 }
}

/// The IEEE 14-bus test system (impedances, charging, taps and the bus 9
/// shunt from the standard published data).
fn ieee14() -> NetworkCase {
    use BusKind::*;
    NetworkCase {
        name: "IEEE 14 Bus Test Case".into(),
        base_mva: 100.0,
        buses: vec![
            bus(1, Slack, 0.0, 0.0, 232.4, -16.9, 0.0),
            bus(2, Pv, 21.7, 12.7, 40.0, 42.4, 0.0),
            bus(3, Pv, 94.2, 19.0, 0.0, 23.4, 0.0),
            bus(4, Pq, 47.8, -3.9, 0.0, 0.0, 0.0),
            bus(5, Pq, 7.6, 1.6, 0.0, 0.0, 0.0),
            bus(6, Pv, 11.2, 7.5, 0.0, 12.2, 0.0),
            bus(7, Pq, 0.0, 0.0, 0.0, 0.0, 0.0),
            bus(8, Pv, 0.0, 0.0, 0.0, 17.4, 0.0),
            bus(9, Pq, 29.5, 16.6, 0.0, 0.0, 0.19),
            bus(10, Pq, 9.0, 5.8, 0.0, 0.0, 0.0),
            bus(11, Pq, 3.5, 1.8, 0.0, 0.0, 0.0),
            bus(12, Pq, 6.1, 1.6, 0.0, 0.0, 0.0),
            bus(13, Pq, 13.5, 5.8, 0.0, 0.0, 0.0),
            bus(14, Pq, 14.9, 5.0, 0.0, 0.0, 0.0),
        ],
        branches: vec![
            branch(1, 2, 0.01938, 0.05917, 0.0528, 0.0),
            branch(1, 5, 0.05403, 0.22304, 0.0492, 0.0),
            branch(2, 3, 0.04699, 0.19797, 0.0438, 0.0),
            branch(2, 4, 0.05811, 0.17632, 0.0340, 0.0),
            branch(2, 5, 0.05695, 0.17388, 0.0346, 0.0),
            branch(3, 4, 0.06701, 0.17103, 0.0128, 0.0),
            branch(4, 5, 0.01335, 0.04211, 0.0, 0.0),
            branch(4, 7, 0.0, 0.20912, 0.0, 0.978),
            branch(4, 9, 0.0, 0.55618, 0.0, 0.969),
            branch(5, 6, 0.0, 0.25202, 0.0, 0.932),
            branch(6, 11, 0.09498, 0.19890, 0.0, 0.0),
            branch(6, 12, 0.12291, 0.25581, 0.0, 0.0),
            branch(6, 13, 0.06615, 0.13027, 0.0, 0.0),
            branch(7, 8, 0.0, 0.17615, 0.0, 0.0),
            branch(7, 9, 0.0, 0.11001, 0.0, 0.0),
            branch(9, 10, 0.03181, 0.08450, 0.0, 0.0),
            branch(9, 14, 0.12711, 0.27038, 0.0, 0.0),
            branch(10, 11, 0.08205, 0.19207, 0.0, 0.0),
            branch(12, 13, 0.22092, 0.19988, 0.0, 0.0),
            branch(13, 14, 0.17093, 0.34802, 0.0, 0.0),
        ],
    }
}

#[test]
#[ignore = "one-shot data regeneration; output is committed"]
fn regenerate_data_files() {
    let dir = data_dir();
    std::fs::create_dir_all(&dir).unwrap();
    let cases = [
        ("ieee14.cdf", ieee14()),
        ("case30.cdf", synth_case(30, 0x30)),
        ("case57.cdf", synth_case(57, 0x57)),
        ("case118.cdf", synth_case(118, 0x118)),
    ];
    for (file, case) in cases {
        let text = case_to_cdf(&case);
        let back = parse_cdf(&text).unwrap();
        assert_eq!(case, back, "{file} does not round-trip");
        std::fs::write(dir.join(file), text).unwrap();
    }
    // A small native-format sample exercising the JSON schema path.
    let two_bus = NetworkCase {
        name: "two bus".into(),
        base_mva: 100.0,
        buses: vec![
            bus(1, BusKind::Slack, 0.0, 0.0, 0.0, 0.0, 0.0),
            bus(2, BusKind::Pq, 50.0, 10.0, 0.0, 0.0, 0.0),
        ],
        branches: vec![branch(1, 2, 0.0, 0.1, 0.0, 0.0)],
    };
    std::fs::write(dir.join("twobus.json"), serialize_native(&two_bus)).unwrap();
}

#[test]
fn committed_files_parse() {
    for file in ["ieee14.cdf", "case30.cdf", "case57.cdf", "case118.cdf"] {
        let text = std::fs::read_to_string(data_dir().join(file)).unwrap();
        let case = parse_cdf(&text).unwrap();
        assert!(case.n_buses() >= 14, "{file}");
    }
    let case = pfgeom::netio::parse_native(
        &std::fs::read_to_string(data_dir().join("twobus.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(case.n_buses(), 2);
}

#[test]
fn ieee14_counts() {
    let text = std::fs::read_to_string(data_dir().join("ieee14.cdf")).unwrap();
    let case = parse_cdf(&text).unwrap();
    assert_eq!(case.n_buses(), 14);
    assert_eq!(case.branches.len(), 20);
    assert_eq!(case.base_mva, 100.0);
    assert_eq!(case.buses[8].shunt_b, 0.19);
}
