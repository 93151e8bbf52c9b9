#![allow(dead_code)]

use std::path::PathBuf;

use ccopf::netmodel::{Bus, BusKind, Generator, Line, Network};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn case_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../cases")
        .join(name)
}

pub fn load_case(name: &str) -> Network {
    let text = std::fs::read_to_string(case_path(name)).unwrap();
    ccopf::netmodel::parse_case(&text).unwrap()
}

pub fn bus(id: usize, kind: BusKind, pd: f64, qd: f64) -> Bus {
    Bus {
        id,
        kind,
        renewable: false,
        base_kv: 1.0,
        vmin: 0.9,
        vmax: 1.1,
        pd,
        qd,
        vset: None,
    }
}

pub fn line(from: usize, to: usize, y: Complex64, dv_max: f64) -> Line {
    Line {
        from,
        to,
        y,
        dv_max,
        s_max: None,
        dv_derived: false,
    }
}

pub fn gen(bus: usize, pmax: f64, cost: [f64; 3]) -> Generator {
    Generator {
        bus,
        pmin: 0.0,
        pmax,
        qmin: -pmax,
        qmax: pmax,
        cost,
        p_set: None,
        v_set: None,
    }
}

/// Slack at bus 0 feeding a load at bus 1 through admittance `y`.
pub fn two_bus(y: Complex64, pd: f64) -> Network {
    Network::new(
        "two",
        100.0,
        vec![
            bus(0, BusKind::Slack, 0.0, 0.0),
            bus(1, BusKind::Load, pd, 0.0),
        ],
        vec![line(0, 1, y, 1.0)],
        vec![gen(0, 20.0, [0.0, 1.0, 0.0])],
    )
    .unwrap()
}

/// Random connected network with up to `max_bus` buses: a random tree plus a
/// few chords, random inductive admittances, random bus roles and loads.
pub fn random_network(seed: u64, max_bus: usize, lossless: bool) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=max_bus);
    let mut buses = vec![bus(0, BusKind::Slack, 0.0, 0.0)];
    let mut gens = vec![gen(0, 10.0, [1.0, 1.0, 0.0])];
    for k in 1..n {
        let kind = if rng.random_bool(0.4) {
            BusKind::Generator
        } else {
            BusKind::Load
        };
        if kind == BusKind::Generator {
            gens.push(gen(k, 5.0, [1.0, 2.0, 0.0]));
        }
        buses.push(bus(
            k,
            kind,
            rng.random_range(0.0..0.5),
            rng.random_range(-0.1..0.2),
        ));
    }
    let y = |rng: &mut ChaCha8Rng| {
        let b = -rng.random_range(5.0..20.0);
        let g = if lossless {
            0.0
        } else {
            rng.random_range(0.5..3.0)
        };
        Complex64::new(g, b)
    };
    let mut lines = Vec::new();
    let mut used = std::collections::HashSet::new();
    for k in 1..n {
        let p = rng.random_range(0..k);
        used.insert((p, k));
        lines.push(line(p, k, y(&mut rng), 1.0));
    }
    for _ in 0..2 {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        let (a, b) = (a.min(b), a.max(b));
        if a != b && used.insert((a, b)) {
            lines.push(line(a, b, y(&mut rng), 1.0));
        }
    }
    Network::new("random", 100.0, buses, lines, gens).unwrap()
}
