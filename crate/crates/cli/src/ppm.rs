//! Binary PPM (P6) frames with instances coloured by ID.

use iai_core::tracker::MaskTube;

pub const BACKGROUND: [u8; 3] = [0, 0, 0];

const PALETTE: [[u8; 3]; 12] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 190],
    [0, 128, 128],
    [170, 110, 40],
];

/// Colour for an instance ID. A pure function of the ID, never black.
pub fn color(id: usize) -> [u8; 3] {
    if let Some(c) = PALETTE.get(id) {
        return *c;
    }
    // splitmix-style scramble for IDs beyond the fixed palette
    let mut z = (id as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    [64 | (z as u8), 64 | ((z >> 8) as u8), 64 | ((z >> 16) as u8)]
}

/// Encodes frame `t` of `tubes`. Where tubes overlap the later one wins.
pub fn render_frame(tubes: &[MaskTube], t: usize, height: usize, width: usize) -> Vec<u8> {
    let header = format!("P6\n{width} {height}\n255\n");
    let mut out = Vec::with_capacity(header.len() + 3 * height * width);
    out.extend_from_slice(header.as_bytes());
    let mut pixels = vec![BACKGROUND; height * width];
    for tube in tubes {
        if let Some(m) = tube.masks.get(t) {
            let c = color(tube.id);
            for p in m.indices() {
                pixels[p] = c;
            }
        }
    }
    for px in pixels {
        out.extend_from_slice(&px);
    }
    out
}
