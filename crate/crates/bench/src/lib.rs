//! Shared fixtures for the benchmarks.

use pathflow::cpmodel::{FitOptions, FlowDistributions};
use pathflow::eventlog::{clean, synthesize, SynthSpec};
use pathflow::pathway::{encode_all, CodeMap, PathwaySequence};
use pathflow::pipeline::{fit, mine, MineParams};

pub fn corpus(n_cases: usize, seed: u64) -> Vec<PathwaySequence> {
    let map = CodeMap::default();
    let spec = SynthSpec {
        n_cases,
        seed,
        ..SynthSpec::default()
    };
    let out = synthesize(&spec, &map).expect("synthesis");
    let (cases, _) = clean(&out.cases);
    encode_all(&cases, &map).expect("encoding")
}

pub fn fitted(n_cases: usize) -> FlowDistributions {
    let map = CodeMap::default();
    let spec = SynthSpec {
        n_cases,
        ..SynthSpec::default()
    };
    let out = synthesize(&spec, &map).expect("synthesis");
    let mined = mine(&out.cases, &map, &MineParams::default()).expect("mining");
    fit(&mined, &map, &FitOptions::default()).expect("fitting")
}
