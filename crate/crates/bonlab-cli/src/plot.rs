//! Minimal SVG line charts. Derived from the CSV rows, never the other way.

use std::fmt::Write;

#[derive(Clone, Debug)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub series: Vec<(String, Vec<(f64, f64)>)>,
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 56.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

impl Plot {
    pub fn to_svg(&self) -> String {
        let tx = |x: f64| if self.log_x { x.log10() } else { x };
        let pts: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|(_, s)| s.iter().copied())
            .filter(|(x, y)| tx(*x).is_finite() && y.is_finite())
            .collect();
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64, f64::NEG_INFINITY);
        for &(x, y) in &pts {
            x0 = x0.min(tx(x));
            x1 = x1.max(tx(x));
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !(x1 > x0) {
            x1 = x0 + 1.0;
        }
        if !(y1 > y0) {
            y1 = y0 + 1.0;
        }
        let sx = |x: f64| PAD + (tx(x) - x0) / (x1 - x0) * (W - 2.0 * PAD);
        let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, esc(&self.title));
        let _ = writeln!(
            s,
            r#"<path d="M{PAD} {PAD} V{b} H{r}" fill="none" stroke="black"/>"#,
            b = H - PAD,
            r = W - PAD
        );
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let xv = x0 + f * (x1 - x0);
            let label = tick(if self.log_x { 10f64.powf(xv) } else { xv });
            let px = PAD + f * (W - 2.0 * PAD);
            let _ = writeln!(s, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#, H - PAD + 16.0);
            let yv = y0 + f * (y1 - y0);
            let py = H - PAD - f * (H - 2.0 * PAD);
            let _ = writeln!(s, r#"<text x="{:.2}" y="{py:.2}" text-anchor="end">{}</text>"#, PAD - 4.0, tick(yv));
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, esc(&self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            esc(&self.y_label)
        );
        for (i, (name, series)) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let line: Vec<String> = series
                .iter()
                .filter(|(x, y)| tx(*x).is_finite() && y.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, line.join(" "));
            let ly = PAD + 16.0 * i as f64;
            let _ = writeln!(s, r#"<text x="{:.2}" y="{ly:.2}" fill="{color}" text-anchor="end">{}</text>"#, W - PAD, esc(name));
        }
        s.push_str("</svg>\n");
        s
    }
}

fn tick(v: f64) -> String {
    if v == 0.0 || (1e-3..1e4).contains(&v.abs()) {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

fn esc(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
