//! Fixtures shared by the benchmarks in `benches/`.

use lieode_core::systems::{builtin, SystemPreset};
use lieode_core::{Builtin, TrialSolution};

/// A preset and a seeded trial solution on its training grid.
pub fn preset_trial(kind: Builtin, seed: u64) -> (SystemPreset, TrialSolution) {
    let p = builtin(kind);
    let trial = TrialSolution::seeded(p.linear_part.clone(), p.system.y0(), &p.train_grid(), p.hidden_units, seed)
        .expect("presets build");
    (p, trial)
}
