//! RGB to HSV on the standard hexcone: h in [0, 360), s and v in [0, 1].

pub fn rgb_to_hsv([r, g, b]: [f64; 3]) -> [f64; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta <= 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    [if h >= 360.0 { h - 360.0 } else { h }, s, v]
}

/// Shortest angular distance between two hues, in degrees, within [0, 180].
pub fn hue_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Circular mean of hues in degrees; 0 when the hues cancel out.
pub fn circular_mean_hue(hues: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0, 0.0);
    for h in hues {
        let r = h.to_radians();
        s += r.sin();
        c += r.cos();
    }
    if s.hypot(c) < 1e-12 {
        return 0.0;
    }
    s.atan2(c).to_degrees().rem_euclid(360.0)
}
