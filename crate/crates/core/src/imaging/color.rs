//! BT.601 studio-swing YCbCr on an 8-bit scale, normalised to `[0, 1]`.

use super::{Channel, ImagePlane, ImageRgb};

/// Rows map normalised RGB to YCbCr offsets in 8-bit units.
const FORWARD: [[f64; 3]; 3] = [
    [65.481, 128.553, 24.966],
    [-37.797, -74.203, 112.0],
    [112.0, -93.786, -18.214],
];
const OFFSET: [f64; 3] = [16.0, 128.0, 128.0];

fn inverse(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let mut inv = [[0.0; 3]; 3];
    for (r, row) in inv.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            let (r1, r2) = ((c + 1) % 3, (c + 2) % 3);
            let (c1, c2) = ((r + 1) % 3, (r + 2) % 3);
            *v = (m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1]) / det;
        }
    }
    inv
}

/// Splits an RGB image into unquantised Y, Cb and Cr planes.
pub fn rgb_to_ycbcr(image: &ImageRgb) -> [ImagePlane; 3] {
    let n = image.height() * image.width();
    let mut planes = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
    for px in image.data().chunks_exact(3) {
        let rgb = [px[0] as f64 / 255.0, px[1] as f64 / 255.0, px[2] as f64 / 255.0];
        for (k, plane) in planes.iter_mut().enumerate() {
            let v = OFFSET[k] + FORWARD[k][0] * rgb[0] + FORWARD[k][1] * rgb[1] + FORWARD[k][2] * rgb[2];
            plane.push(v / 255.0);
        }
    }
    let [y, cb, cr] = planes;
    let (h, w) = (image.height(), image.width());
    [
        ImagePlane::new(h, w, Channel::Y, y).expect("image dims are non-zero"),
        ImagePlane::new(h, w, Channel::Cb, cb).expect("image dims are non-zero"),
        ImagePlane::new(h, w, Channel::Cr, cr).expect("image dims are non-zero"),
    ]
}

/// Recombines planes of equal size into 8-bit RGB, rounding and clamping.
pub fn ycbcr_to_rgb(y: &ImagePlane, cb: &ImagePlane, cr: &ImagePlane) -> crate::Result<ImageRgb> {
    if y.dims() != cb.dims() || y.dims() != cr.dims() {
        return Err(crate::Error::Shape(format!(
            "plane sizes differ: {:?} {:?} {:?}",
            y.dims(),
            cb.dims(),
            cr.dims()
        )));
    }
    let inv = inverse(&FORWARD);
    let mut data = Vec::with_capacity(y.data().len() * 3);
    for ((&yv, &cbv), &crv) in y.data().iter().zip(cb.data()).zip(cr.data()) {
        let d = [yv * 255.0 - OFFSET[0], cbv * 255.0 - OFFSET[1], crv * 255.0 - OFFSET[2]];
        for row in &inv {
            let v = row[0] * d[0] + row[1] * d[1] + row[2] * d[2];
            data.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    ImageRgb::new(y.height(), y.width(), data)
}
