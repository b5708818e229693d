//! Generates a small synthetic viewgrid dataset, writes it to disk with
//! preview montages and reads it back.
//!
//!     cargo run --example generate_data -- /tmp/viewgrids

use std::path::PathBuf;

use viewgrid_sidekick::env::{generate_synthetic, load_dataset, save_dataset, write_previews, GridGeometry, Pose, SynthSpec};

fn main() -> viewgrid_sidekick::Result<()> {
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("viewgrids"), PathBuf::from);
    let geom = GridGeometry::desk();
    let ds = generate_synthetic(&SynthSpec::new(geom, 20, 7))?;
    save_dataset(&ds, &out)?;
    let previews = write_previews(&ds, &out, 3)?;

    let back = load_dataset(&out)?;
    assert_eq!(back, ds);
    println!("{} samples of {geom} in {}", back.len(), out.display());
    println!("content id {}", back.content_id());
    for p in &previews {
        println!("preview {}", p.display());
    }

    // Mean intensity per view of the first sample, elevation rows.
    let grid = &back.samples()[0];
    for e in 0..geom.n_elev {
        let row: Vec<String> = (0..geom.n_azim)
            .map(|a| {
                let v = grid.view(Pose::new(e, a));
                format!("{:.2}", v.iter().sum::<f32>() / v.len() as f32)
            })
            .collect();
        println!("elev {e}: {}", row.join(" "));
    }
    Ok(())
}
