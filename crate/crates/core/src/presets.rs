//! The two reference networks: a three-pipe star with uniform area, and a
//! four-pipe star with blockages.

use crate::network::{validate_network, AreaBlock, AreaProfile, Network, NetworkSpec, PipeSpec};

fn pipe(id: &str, from: &str, to: &str, length: f64, area: AreaProfile) -> PipeSpec {
    PipeSpec {
        id: id.to_string(),
        from: from.to_string(),
        to: to.to_string(),
        length,
        area,
    }
}

fn blocks(base: f64, list: &[(f64, f64, f64)]) -> AreaProfile {
    AreaProfile::Blocks {
        base,
        blocks: list
            .iter()
            .map(|&(x0, x1, delta)| AreaBlock { x0, x1, delta })
            .collect(),
    }
}

/// Junction D joining AD (400 m), BD (300 m) and DC (1000 m); C is
/// inaccessible; A = 1 m² everywhere.
pub fn example1_spec() -> NetworkSpec {
    NetworkSpec {
        wave_speed: 1000.0,
        gravity: 9.81,
        vertices: ["C", "A", "B", "D"].map(String::from).to_vec(),
        pipes: vec![
            pipe("AD", "A", "D", 400.0, AreaProfile::uniform(1.0)),
            pipe("BD", "B", "D", 300.0, AreaProfile::uniform(1.0)),
            pipe("DC", "D", "C", 1000.0, AreaProfile::uniform(1.0)),
        ],
        x0: "C".to_string(),
        accessible: Some(vec!["A".to_string(), "B".to_string()]),
    }
}

/// Junction E joining AE (300 m), BE (400 m), CE (400 m) and ED (500 m); D is
/// inaccessible. Blockages: BE 350–375 m (−0.6 on a 2 m² base), CE 210–250 m
/// (−0.2), ED 410–450 m (−0.4) and 150–250 m (−0.2).
pub fn example2_spec() -> NetworkSpec {
    NetworkSpec {
        wave_speed: 1000.0,
        gravity: 9.81,
        vertices: ["A", "B", "C", "D", "E"].map(String::from).to_vec(),
        pipes: vec![
            pipe("AE", "A", "E", 300.0, AreaProfile::uniform(1.0)),
            pipe("BE", "B", "E", 400.0, blocks(2.0, &[(350.0, 375.0, -0.6)])),
            pipe("CE", "C", "E", 400.0, blocks(1.0, &[(210.0, 250.0, -0.2)])),
            pipe(
                "ED",
                "E",
                "D",
                500.0,
                blocks(1.0, &[(410.0, 450.0, -0.4), (150.0, 250.0, -0.2)]),
            ),
        ],
        x0: "D".to_string(),
        accessible: Some(vec!["A".to_string(), "B".to_string(), "C".to_string()]),
    }
}

pub fn example1() -> Network {
    validate_network(&example1_spec()).expect("example 1 network is valid")
}

pub fn example2() -> Network {
    validate_network(&example2_spec()).expect("example 2 network is valid")
}

/// Example 2 with every blockage removed.
pub fn example2_uniform_spec() -> NetworkSpec {
    let mut spec = example2_spec();
    for p in &mut spec.pipes {
        if let AreaProfile::Blocks { blocks, .. } = &mut p.area {
            blocks.clear();
        }
    }
    spec
}
