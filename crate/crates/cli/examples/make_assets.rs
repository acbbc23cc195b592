//! Regenerates the synthetic portrait pair and label masks under `assets/`.
//!
//! Labels: 0 background, 1 skin, 2 hair, 3 eyes, 4 mouth.

use std::path::Path;

use portrait_style::correspondence::SemanticMask;
use portrait_style::io::write_png;
use portrait_style::tensor::Image;

const SIZE: usize = 128;

struct Face {
    center: (f32, f32),
    radii: (f32, f32),
    hair_line: f32,
    eye_dy: f32,
    palette: [[f32; 3]; 5],
    brightness: f32,
    tint: f32,
    texture: f32,
    seed: u64,
}

fn inside(p: (f32, f32), c: (f32, f32), r: (f32, f32)) -> bool {
    let dy = (p.0 - c.0) / r.0;
    let dx = (p.1 - c.1) / r.1;
    dy * dy + dx * dx <= 1.0
}

fn label(face: &Face, y: f32, x: f32) -> u32 {
    let (cy, cx) = face.center;
    let (ry, rx) = face.radii;
    let head = inside((y, x), (cy - 6.0, cx), (ry + 10.0, rx + 9.0));
    if inside((y, x), face.center, face.radii) && y > face.hair_line {
        let eye_y = cy + face.eye_dy;
        if inside((y, x), (eye_y, cx - rx * 0.42), (4.0, 7.0))
            || inside((y, x), (eye_y, cx + rx * 0.42), (4.0, 7.0))
        {
            return 3;
        }
        if inside((y, x), (cy + ry * 0.55, cx), (4.0, 12.0)) {
            return 4;
        }
        return 1;
    }
    if head {
        2
    } else {
        0
    }
}

fn hash(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn unit(seed: u64, k: u64) -> f32 {
    (hash(seed.wrapping_mul(31).wrapping_add(k)) >> 40) as f32 / (1u64 << 24) as f32
}

/// Per-block tint plus an oriented square wave whose orientation, frequency
/// and per-channel amplitude change from one 8×8 block to the next, so
/// every feature cell differs.
fn texture(seed: u64, y: usize, x: usize, c: usize) -> (f32, f32) {
    let block = hash(seed ^ ((y / 8) as u64) << 16 ^ (x / 8) as u64);
    let theta = std::f32::consts::PI * unit(block, 0);
    let freq = 0.6 + 2.2 * unit(block, 1);
    let amp = unit(block, 2 + c as u64);
    let tint = unit(block, 5 + c as u64) - 0.5;
    let phase = (x as f32 * theta.cos() + y as f32 * theta.sin()) * freq;
    (tint, amp * phase.sin().signum())
}

fn render(face: &Face) -> (Image, SemanticMask) {
    let mut labels = Vec::with_capacity(SIZE * SIZE);
    for y in 0..SIZE {
        for x in 0..SIZE {
            labels.push(label(face, y as f32, x as f32));
        }
    }
    let image = Image::from_fn(SIZE, SIZE, 3, |y, x, c| {
        let l = labels[y * SIZE + x] as usize;
        let (u, v) = (x as f32 / SIZE as f32, y as f32 / SIZE as f32);
        // slow shading gradient across the frame
        let shade = 0.08 * (3.1 * u + 1.7 * v + c as f32).sin();
        let (tint, wave) = texture(face.seed, y, x, c);
        face.brightness * face.palette[l][c] + shade + face.tint * tint + face.texture * wave
    })
    .expect("valid dimensions");
    let mask = SemanticMask::new(SIZE, SIZE, 5, labels).expect("valid labels");
    (image, mask)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets");
    std::fs::create_dir_all(&dir)?;
    let input = Face {
        center: (70.0, 64.0),
        radii: (36.0, 28.0),
        hair_line: 44.0,
        eye_dy: -4.0,
        palette: [
            [0.30, 0.42, 0.55],
            [0.86, 0.68, 0.56],
            [0.28, 0.18, 0.10],
            [0.12, 0.10, 0.10],
            [0.70, 0.30, 0.32],
        ],
        brightness: 0.35,
        tint: 0.2,
        texture: 0.55,
        seed: 1,
    };
    let reference = Face {
        center: (68.0, 62.0),
        radii: (38.0, 30.0),
        hair_line: 40.0,
        eye_dy: -6.0,
        palette: [
            [0.92, 0.82, 0.45],
            [0.98, 0.84, 0.80],
            [0.55, 0.20, 0.62],
            [0.20, 0.45, 0.75],
            [0.90, 0.25, 0.40],
        ],
        brightness: 0.25,
        tint: 0.2,
        texture: 0.55,
        seed: 2,
    };
    for (name, face) in [("input", &input), ("reference", &reference)] {
        let (image, mask) = render(face);
        write_png(&image, dir.join(format!("{name}.png")))?;
        mask.write_png(dir.join(format!("{name}_mask.png")))?;
    }
    println!("wrote assets to {}", dir.display());
    Ok(())
}
