//! Built-in synthetic teachers.

use clap::ValueEnum;
use convlogic::synth::{PlantedLiteral as L, PlantedRule, SynthConfig};

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// One layer of 12 kernels, three class rules.
    Planted,
    /// 12 input kernels, 8 hidden concepts, three class rules.
    TwoLayer,
}

fn rule(when: &[L], then: usize) -> PlantedRule {
    PlantedRule::new(when.to_vec(), then)
}

pub fn config(p: Preset, n: usize, seed: u64) -> SynthConfig {
    match p {
        Preset::Planted => SynthConfig::new(
            n,
            vec![12],
            3,
            seed,
            vec![vec![
                rule(&[L::pos(0), L::pos(1)], 0),
                rule(&[L::neg(0), L::pos(2)], 1),
                rule(&[L::pos(0), L::neg(1), L::pos(3)], 1),
            ]],
        ),
        Preset::TwoLayer => SynthConfig::new(
            n,
            vec![12, 8],
            3,
            seed,
            vec![
                vec![
                    rule(&[L::pos(0), L::pos(1)], 0),
                    rule(&[L::neg(2), L::pos(3)], 1),
                    rule(&[L::pos(4), L::neg(5)], 2),
                    rule(&[L::pos(6), L::pos(7)], 3),
                    rule(&[L::neg(8), L::pos(9)], 4),
                    rule(&[L::pos(10), L::neg(11)], 5),
                    rule(&[L::pos(0), L::neg(4)], 6),
                    rule(&[L::pos(2), L::pos(6)], 7),
                ],
                vec![
                    rule(&[L::pos(0), L::neg(1)], 0),
                    rule(&[L::pos(2), L::neg(0)], 1),
                    rule(&[L::pos(3)], 1),
                ],
            ],
        ),
    }
}
