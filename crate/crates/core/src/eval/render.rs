use std::path::Path;

use image::{Rgb, RgbImage};

use crate::agent::EpisodeLog;
use crate::env::{action_space, montage, roll_azimuth_flat, tile_origin, GridGeometry, Pose, Viewgrid};
use crate::error::{Error, Result};

use super::Heatmap;

/// Pixels between tiles and around the border of a montage.
pub const GAP: u32 = 2;
/// Heatmap blend weight: `out = (1 - a) * image + a * colormap(h)`.
pub const HEAT_ALPHA: f32 = 0.5;

const OBSERVED: Rgb<u8> = Rgb([40, 200, 80]);
const CURRENT: Rgb<u8> = Rgb([230, 40, 40]);
const ARROW: Rgb<u8> = Rgb([250, 220, 30]);
const BACKGROUND: Rgb<u8> = Rgb([32, 32, 32]);

/// Annotations drawn over one viewgrid montage.
#[derive(Clone, Debug, Default)]
pub struct Overlay {
    pub observed: Vec<Pose>,
    pub current: Option<Pose>,
    /// Action index taken from `current`.
    pub action: Option<usize>,
    /// Per-view intensities in `[0, 1]`, `[N, M]` row-major.
    pub heat: Option<Vec<f64>>,
}

/// `(width, height)` of a montage: `M*W + (M+1)*GAP` by `N*H + (N+1)*GAP`.
pub fn montage_size(g: &GridGeometry) -> (u32, u32) {
    (
        g.n_azim as u32 * g.view_w as u32 + (g.n_azim as u32 + 1) * GAP,
        g.n_elev as u32 * g.view_h as u32 + (g.n_elev as u32 + 1) * GAP,
    )
}

/// Black-body style colormap, 0 is black and 1 is white.
pub fn colormap(h: f64) -> [f32; 3] {
    let h = h.clamp(0.0, 1.0) as f32;
    [(3.0 * h).min(1.0), (3.0 * h - 1.0).clamp(0.0, 1.0), (3.0 * h - 2.0).clamp(0.0, 1.0)]
}

pub fn blend(pixel: u8, heat: f32) -> u8 {
    let v = (1.0 - HEAT_ALPHA) * f32::from(pixel) + HEAT_ALPHA * heat * 255.0;
    v.round().clamp(0.0, 255.0) as u8
}

fn outline(img: &mut RgbImage, g: &GridGeometry, pose: Pose, color: Rgb<u8>) {
    let (x0, y0) = tile_origin(g, pose.elev, pose.azim, GAP);
    let (x0, y0) = (x0 - 1, y0 - 1);
    let (x1, y1) = (x0 + g.view_w as u32 + 1, y0 + g.view_h as u32 + 1);
    for x in x0..=x1 {
        img.put_pixel(x, y0, color);
        img.put_pixel(x, y1, color);
    }
    for y in y0..=y1 {
        img.put_pixel(x0, y, color);
        img.put_pixel(x1, y, color);
    }
}

fn put_clipped(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

/// Bresenham line from `a` to `b` with a small square head at `b`.
fn arrow(img: &mut RgbImage, a: (i64, i64), b: (i64, i64)) {
    let (dx, dy) = ((b.0 - a.0).abs(), -(b.1 - a.1).abs());
    let (sx, sy) = ((b.0 - a.0).signum(), (b.1 - a.1).signum());
    let (mut x, mut y, mut err) = (a.0, a.1, dx + dy);
    loop {
        put_clipped(img, x, y, ARROW);
        if (x, y) == b {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    for oy in -1..=1 {
        for ox in -1..=1 {
            put_clipped(img, b.0 + ox, b.1 + oy, ARROW);
        }
    }
}

/// Renders a flat `[N, M, C, H, W]` grid with annotations. Heat is blended
/// first, then outlines, then the action arrow. Motions that wrap in
/// azimuth are drawn in their relative direction and clipped at the border.
pub fn render_grid(g: &GridGeometry, pixels: &[f32], overlay: &Overlay) -> Result<RgbImage> {
    let grid = Viewgrid::new(*g, pixels.to_vec(), "render")?;
    let mut img = montage(&grid, GAP);
    if let Some(heat) = &overlay.heat {
        if heat.len() != g.n_views() {
            return Err(Error::shape("heatmap", g.n_views(), heat.len()));
        }
        for pose in Pose::all(g) {
            let c = colormap(heat[pose.index(g)]);
            let (x0, y0) = tile_origin(g, pose.elev, pose.azim, GAP);
            for y in y0..y0 + g.view_h as u32 {
                for x in x0..x0 + g.view_w as u32 {
                    let p = img.get_pixel_mut(x, y);
                    for k in 0..3 {
                        p.0[k] = blend(p.0[k], c[k]);
                    }
                }
            }
        }
    }
    for &p in &overlay.observed {
        outline(&mut img, g, p, OBSERVED);
    }
    if let Some(p) = overlay.current {
        outline(&mut img, g, p, CURRENT);
        if let Some(a) = overlay.action {
            let act = *action_space(g)
                .get(a)
                .ok_or_else(|| Error::InvalidArgument(format!("action index {a}")))?;
            let (x0, y0) = tile_origin(g, p.elev, p.azim, GAP);
            let c = (x0 as i64 + g.view_w as i64 / 2, y0 as i64 + g.view_h as i64 / 2);
            let step = (
                i64::from(act.d_azim) * (g.view_w as i64 + i64::from(GAP)),
                i64::from(act.d_elev) * (g.view_h as i64 + i64::from(GAP)),
            );
            if step != (0, 0) {
                arrow(&mut img, c, (c.0 + step.0, c.1 + step.1));
            }
        }
    }
    Ok(img)
}

fn paste(dst: &mut RgbImage, src: &RgbImage, x0: u32, y0: u32) {
    for (x, y, p) in src.enumerate_pixels() {
        dst.put_pixel(x0 + x, y0 + y, *p);
    }
}

/// One row per timestep: the ground truth (or the observed views alone)
/// with outlines, the chosen action and the step's heatmap, next to the
/// decoded grid in absolute coordinates.
pub fn render_episode(ep: &EpisodeLog, truth: Option<&Viewgrid>, heatmaps: &[Option<Heatmap>]) -> Result<RgbImage> {
    let g = ep.geometry;
    let (pw, ph) = montage_size(&g);
    let steps = ep.poses.len();
    let mut img = RgbImage::from_pixel(2 * pw + GAP * 2, steps as u32 * (ph + GAP * 2), BACKGROUND);
    let base: Vec<f32> = match truth {
        Some(t) => {
            if *t.geometry() != g {
                return Err(Error::GeometryMismatch {
                    expected: format!("{g:?}"),
                    found: format!("{:?}", t.geometry()),
                });
            }
            t.pixels().to_vec()
        }
        None => vec![0.0; g.grid_len()],
    };
    let start = ep.start().azim;
    for t in 0..steps {
        let mut shown = base.clone();
        if truth.is_none() {
            for (pose, view) in ep.poses[..=t].iter().zip(&ep.views) {
                let i = pose.index(&g) * g.view_len();
                shown[i..i + view.len()].copy_from_slice(view);
            }
        }
        let overlay = Overlay {
            observed: ep.poses[..t].to_vec(),
            current: Some(ep.poses[t]),
            action: ep.actions.get(t).copied(),
            heat: heatmaps.get(t).and_then(|h| h.as_ref()).map(|h| h.intensity.clone()),
        };
        let left = render_grid(&g, &shown, &overlay)?;
        let y0 = t as u32 * (ph + GAP * 2);
        paste(&mut img, &left, 0, y0);
        if let Some(dec) = ep.decoded.get(t).filter(|d| !d.is_empty()) {
            let abs = roll_azimuth_flat(dec, &g, start);
            let right = render_grid(&g, &abs, &Overlay::default())?;
            paste(&mut img, &right, pw + GAP * 2, y0);
        }
    }
    Ok(img)
}

pub fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    }
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{rollout, ActionSource, Agent, ArchConfig};
    use crate::env::{generate_synthetic, SynthSpec};

    #[test]
    fn montage_dimensions() {
        let g = GridGeometry::new(4, 8, 1, 16, 16).unwrap();
        assert_eq!(montage_size(&g), (8 * 16 + 9 * 2, 4 * 16 + 5 * 2));
        let img = render_grid(&g, &vec![0.5; g.grid_len()], &Overlay::default()).unwrap();
        assert_eq!(img.dimensions(), montage_size(&g));
    }

    #[test]
    fn blend_formula() {
        assert_eq!(blend(100, 0.0), 50);
        assert_eq!(blend(100, 1.0), 178);
        assert_eq!(colormap(0.0), [0.0, 0.0, 0.0]);
        assert_eq!(colormap(1.0), [1.0, 1.0, 1.0]);
    }

    #[test]
    fn episode_render_is_deterministic() {
        let g = GridGeometry::new(2, 4, 1, 4, 4).unwrap();
        let ds = generate_synthetic(&SynthSpec::new(g, 1, 3)).unwrap();
        let agent: Agent<f32> = Agent::new(g, ArchConfig::tiny(), 1).unwrap();
        let ep = rollout(
            &agent,
            &ds.samples()[0],
            Pose::new(1, 3),
            3,
            &ActionSource::sample(),
            &mut crate::rng::stream(0, "r"),
        )
        .unwrap();
        let heat = vec![None, Some(super::super::heatmap_from_decodes(&g, &[0.0; 128], &[0.5; 128], 3, 0.1).unwrap())];
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.png"), dir.path().join("b.png"));
        save_png(&render_episode(&ep, Some(&ds.samples()[0]), &heat).unwrap(), &a).unwrap();
        save_png(&render_episode(&ep, Some(&ds.samples()[0]), &heat).unwrap(), &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        let img = render_episode(&ep, None, &[]).unwrap();
        let (pw, ph) = montage_size(&g);
        assert_eq!(img.dimensions(), (2 * pw + 4, 3 * (ph + 4)));
    }
}
