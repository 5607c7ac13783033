//! STMap plots with trajectory overlays.

use image::{Rgb, RgbImage};
use stmap::stmap::Stmap;
use stmap::traj::WorldTrajectory;

pub const PURPLE: [u8; 3] = [128, 0, 128];
pub const BLUE: [u8; 3] = [0, 0, 255];

/// Parses `#rrggbb`, `rrggbb` or one of a few colour names.
pub fn parse_color(s: &str) -> Result<[u8; 3], String> {
    match s.to_ascii_lowercase().as_str() {
        "purple" => return Ok(PURPLE),
        "blue" => return Ok(BLUE),
        "red" => return Ok([255, 0, 0]),
        "green" => return Ok([0, 160, 0]),
        "yellow" => return Ok([255, 255, 0]),
        "white" => return Ok([255, 255, 255]),
        "black" => return Ok([0, 0, 0]),
        _ => {}
    }
    let hex = s.strip_prefix('#').unwrap_or(s);
    if hex.len() != 6 || !hex.chars().all(|c| c.is_ascii_hexdigit()) {
        return Err(format!("invalid colour {s:?}; use #rrggbb or a colour name"));
    }
    let byte = |i: usize| u8::from_str_radix(&hex[i..i + 2], 16).expect("validated hex");
    Ok([byte(0), byte(2), byte(4)])
}

fn plot(img: &mut RgbImage, x: i64, y: i64, color: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, Rgb(color));
    }
}

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), color: [u8; 3]) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        plot(img, x, y, color);
        if x == x1 && y == y1 {
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
}

/// Draws each trajectory as a polyline through `(frame, y_pix)`; samples
/// more than one frame apart are left unconnected so gaps stay visible.
pub fn draw_trajectories(img: &mut RgbImage, trajs: &[WorldTrajectory], color: [u8; 3]) {
    for t in trajs {
        let pts: Vec<(i64, i64, usize)> = t
            .samples
            .iter()
            .map(|s| (s.frame as i64, s.y_pix.round() as i64, s.frame))
            .collect();
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b.2 == a.2 + 1 {
                line(img, (a.0, a.1), (b.0, b.1), color);
            } else {
                plot(img, a.0, a.1, color);
            }
        }
        if let Some(&(x, y, _)) = pts.last() {
            plot(img, x, y, color);
        }
    }
}

/// The STMap (rows = scanline pixels, columns = frames) with reference
/// trajectories drawn first and detections on top.
pub fn render_overlay(
    map: &Stmap,
    detected: &[WorldTrajectory],
    reference: &[WorldTrajectory],
    detected_color: [u8; 3],
    reference_color: [u8; 3],
) -> RgbImage {
    let mut img = map.to_rgb_image();
    draw_trajectories(&mut img, reference, reference_color);
    draw_trajectories(&mut img, detected, detected_color);
    img
}
