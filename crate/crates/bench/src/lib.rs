//! Benchmarks live under `benches/`; this crate only holds shared fixtures.

use ksbm::{KernelSet, PhiSpec};

pub fn stable() -> KernelSet {
    KernelSet::new(PhiSpec::stable(0.75).expect("valid delta")).expect("kernel set")
}

pub fn mixture() -> KernelSet {
    KernelSet::new(PhiSpec::mixture(vec![(1.0, 0.6), (1.0, 0.9)]).expect("valid terms")).expect("kernel set")
}
