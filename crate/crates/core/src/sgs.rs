//! WALE subgrid viscosity.

use crate::vec3::{mat_mul, Mat3};

/// Model constant.
pub const C_W: f64 = 0.325;

/// WALE eddy viscosity for the velocity gradient `g` (`g[i][j] = du_i/dx_j`)
/// in a cell of length scale `delta` (`V^(1/3)`), with `Delta_s = c_w delta`.
pub fn wale_nu_t(g: &Mat3, delta: f64, c_w: f64) -> f64 {
    let g2 = mat_mul(g, g);
    let tr = (g2[0][0] + g2[1][1] + g2[2][2]) / 3.0;
    let mut sdsd = 0.0;
    let mut ss = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let mut sd = 0.5 * (g2[i][j] + g2[j][i]);
            if i == j {
                sd -= tr;
            }
            let s = 0.5 * (g[i][j] + g[j][i]);
            sdsd += sd * sd;
            ss += s * s;
        }
    }
    let den = ss.powf(2.5) + sdsd.powf(1.25);
    if !(den > 0.0) {
        return 0.0;
    }
    let ds = c_w * delta;
    (ds * ds * sdsd.powf(1.5) / den).max(0.0)
}
