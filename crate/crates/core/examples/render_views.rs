//! Renders the ego and roadside camera rigs for one frame and writes each
//! view as a binary PPM.
//!
//! `cargo run --release --example render_views -- [out_dir] [frame]`

use std::io::Write;
use std::path::PathBuf;

use coopdrive::harness::{generate_scenario, render_views, Config, Template, Viewpoint, GROUND, SKY};
use coopdrive::tensor::DenseTensor;

fn write_ppm(path: &PathBuf, img: &DenseTensor) -> std::io::Result<()> {
    let (h, w) = (img.shape()[0], img.shape()[1]);
    let mut f = std::fs::File::create(path)?;
    write!(f, "P6\n{w} {h}\n255\n")?;
    let bytes: Vec<u8> = img.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    f.write_all(&bytes)
}

fn main() -> coopdrive::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "views".into()));
    let t: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(4);
    let cfg = Config::default();
    let s = generate_scenario(3, Template::Occluded, &cfg)?;
    std::fs::create_dir_all(&out)?;
    for (name, vp) in [("ego", Viewpoint::Ego), ("infra", Viewpoint::Infrastructure)] {
        let images = render_views(&s, t, vp)?;
        for (k, v) in images.views.iter().enumerate() {
            let path = out.join(format!("{name}_{k}.ppm"));
            write_ppm(&path, v)?;
            let hits = v.data().chunks(3).filter(|p| *p != SKY.as_slice() && *p != GROUND.as_slice()).count();
            println!("{}: {} pixels on agents", path.display(), hits);
        }
    }
    Ok(())
}
