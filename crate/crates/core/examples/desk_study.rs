//! Runs (or resumes) the desk-scale study: one-view, rnd-actions, ltla and
//! ours-rew over three seeds, evaluated on the test split.
//!
//! `cargo run --release --example desk_study -- [OUT_DIR] [EPOCHS]`. The
//! full 300 epoch study takes about half an hour on one core; finished
//! stages are reused on the next run.

use std::path::PathBuf;

use viewgrid_sidekick::pipeline::{epochs_to_reach, run_study, StudySpec};
use viewgrid_sidekick::train::Method;

fn main() -> viewgrid_sidekick::Result<()> {
    let mut args = std::env::args().skip(1);
    let root = args.next().map_or_else(|| std::env::temp_dir().join("viewgrid-desk-study"), PathBuf::from);
    let mut spec = StudySpec::desk();
    if let Some(e) = args.next() {
        let e: usize = e
            .parse()
            .map_err(|_| viewgrid_sidekick::Error::InvalidArgument(format!("bad epoch count {e:?}")))?;
        spec.config.epochs = e;
        spec.config.pretrain_epochs = e;
    }
    let out = run_study(&spec, &root, |line| eprintln!("{line}"))?;
    print!("{}", out.report.to_table());

    let ltla = &out.curves[Method::Ltla.name()];
    let ours = &out.curves[Method::OursRew.name()];
    for (seed, (l, o)) in spec.seeds.iter().zip(ltla.iter().zip(ours)) {
        let target = l.last().map_or(f64::NAN, |p| p.1);
        match epochs_to_reach(o, target) {
            Some(e) => println!("seed {seed}: ours-rew reaches ltla's final val {target:.2} after {e} epochs"),
            None => println!("seed {seed}: ours-rew never reaches ltla's final val {target:.2}"),
        }
    }
    println!("outputs in {}", root.display());
    Ok(())
}
