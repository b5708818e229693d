//! Unrolls an untrained completion agent for a few glimpses, prints what
//! it did and saves the episode log.

use viewgrid_sidekick::agent::{load_episode, rollout, save_episode, ActionSource, Agent, ArchConfig};
use viewgrid_sidekick::env::{action_space, generate_synthetic, GridGeometry, Pose, SynthSpec};
use viewgrid_sidekick::rng;
use viewgrid_sidekick::train::reconstruction_mse;

fn main() -> viewgrid_sidekick::Result<()> {
    let geom = GridGeometry::desk();
    let ds = generate_synthetic(&SynthSpec::new(geom, 1, 3))?;
    let grid = &ds.samples()[0];
    let agent: Agent<f32> = Agent::new(geom, ArchConfig::desk(), 0)?;

    let ep = rollout(&agent, grid, Pose::new(2, 5), 4, &ActionSource::sample(), &mut rng::stream(0, "example"))?;
    let actions = action_space(&geom);
    for (t, pose) in ep.poses.iter().enumerate() {
        let err = reconstruction_mse(ndarray::ArrayView1::from(&ep.decoded[t]), grid, ep.start().azim)?;
        print!("t={t} pose ({}, {}) error x1000 {:.2}", pose.elev, pose.azim, err * 1000.0);
        if let Some(&a) = ep.actions.get(t) {
            let m = actions[a];
            print!("  -> move ({:+}, {:+}) with p={:.3}", m.d_elev, m.d_azim, ep.policies[t][a]);
        }
        println!();
    }

    let dir = std::env::temp_dir().join("viewgrid-episode");
    save_episode(&ep, &dir)?;
    assert_eq!(load_episode(&dir)?, ep);
    println!("saved to {}", dir.display());
    Ok(())
}
