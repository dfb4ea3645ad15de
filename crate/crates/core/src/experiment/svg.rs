//! Minimal SVG bar charts and heatmaps.

use std::fmt::Write as _;

const FONT: &str = "font-family=\"sans-serif\" font-size=\"12\"";
const PALETTE: [&str; 6] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Grouped bars. `series` holds one (name, values per group) entry per bar color.
pub fn bar_chart(title: &str, y_label: &str, groups: &[String], series: &[(String, Vec<f64>)]) -> String {
    let (left, top, plot_h, group_w) = (60.0, 40.0, 240.0, 30.0 * series.len().max(1) as f64 + 20.0);
    let plot_w = group_w * groups.len() as f64;
    let width = left + plot_w + 130.0;
    let height = top + plot_h + 60.0;
    let max = series
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let y_max = if max <= 1.0 { 1.0 } else { max };
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\">"
    );
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(s, "<text x=\"{left}\" y=\"20\" {FONT}>{}</text>", escape(title));
    for i in 0..=4 {
        let v = y_max * i as f64 / 4.0;
        let y = top + plot_h - plot_h * i as f64 / 4.0;
        let _ = writeln!(
            s,
            "<line x1=\"{left}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#ddd\"/>",
            left + plot_w
        );
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" {FONT} text-anchor=\"end\">{v:.2}</text>", left - 5.0, y + 4.0);
    }
    let _ = writeln!(
        s,
        "<text x=\"15\" y=\"{:.1}\" {FONT} transform=\"rotate(-90 15 {:.1})\" text-anchor=\"middle\">{}</text>",
        top + plot_h / 2.0,
        top + plot_h / 2.0,
        escape(y_label)
    );
    for (g, label) in groups.iter().enumerate() {
        let gx = left + g as f64 * group_w + 10.0;
        for (k, (_, values)) in series.iter().enumerate() {
            let v = values.get(g).copied().unwrap_or(0.0);
            let h = plot_h * v / y_max;
            let _ = writeln!(
                s,
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"28\" height=\"{h:.1}\" fill=\"{}\"><title>{v:.4}</title></rect>",
                gx + 30.0 * k as f64,
                top + plot_h - h,
                PALETTE[k % PALETTE.len()]
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" {FONT} text-anchor=\"middle\">{}</text>",
            gx + (group_w - 20.0) / 2.0,
            top + plot_h + 18.0,
            escape(label)
        );
    }
    for (k, (name, _)) in series.iter().enumerate() {
        let y = top + 18.0 * k as f64;
        let x = left + plot_w + 15.0;
        let _ = writeln!(
            s,
            "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"12\" height=\"12\" fill=\"{}\"/>",
            PALETTE[k % PALETTE.len()]
        );
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" {FONT}>{}</text>", x + 18.0, y + 11.0, escape(name));
    }
    s.push_str("</svg>\n");
    s
}

/// Cell grid colored by value in [0, 1]. `notes` are printed under the values;
/// `marked` cells get a heavy border.
pub fn heatmap(
    title: &str,
    rows: &[String],
    cols: &[String],
    values: &[Vec<Option<f64>>],
    notes: Option<&[Vec<Option<f64>>]>,
    marked: &[(usize, usize)],
) -> String {
    let (left, top, cw, ch) = (80.0, 50.0, 64.0, 40.0);
    let width = left + cw * cols.len() as f64 + 20.0;
    let height = top + ch * rows.len() as f64 + 20.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\">"
    );
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(s, "<text x=\"{left}\" y=\"20\" {FONT}>{}</text>", escape(title));
    for (c, label) in cols.iter().enumerate() {
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" {FONT} text-anchor=\"middle\">{}</text>",
            left + cw * (c as f64 + 0.5),
            top - 8.0,
            escape(label)
        );
    }
    for (r, label) in rows.iter().enumerate() {
        let y = top + ch * r as f64;
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" {FONT} text-anchor=\"end\">{}</text>",
            left - 8.0,
            y + ch / 2.0 + 4.0,
            escape(label)
        );
        for c in 0..cols.len() {
            let x = left + cw * c as f64;
            let v = values.get(r).and_then(|row| row.get(c)).copied().flatten();
            let fill = match v {
                Some(v) => {
                    let t = v.clamp(0.0, 1.0);
                    let g = (255.0 - 160.0 * t).round() as u8;
                    let b = (255.0 - 60.0 * t).round() as u8;
                    format!("#{:02x}{:02x}{:02x}", (255.0 - 200.0 * t).round() as u8, g, b)
                }
                None => "#eeeeee".into(),
            };
            let stroke = if marked.contains(&(r, c)) {
                "stroke=\"black\" stroke-width=\"3\""
            } else {
                "stroke=\"white\""
            };
            let _ = writeln!(
                s,
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{cw}\" height=\"{ch}\" fill=\"{fill}\" {stroke}/>"
            );
            if let Some(v) = v {
                let _ = writeln!(
                    s,
                    "<text x=\"{:.1}\" y=\"{:.1}\" {FONT} text-anchor=\"middle\">{v:.3}</text>",
                    x + cw / 2.0,
                    y + 18.0
                );
            }
            if let Some(n) = notes.and_then(|n| n.get(r)).and_then(|row| row.get(c)).copied().flatten() {
                let _ = writeln!(
                    s,
                    "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"9\" text-anchor=\"middle\">±{n:.3}</text>",
                    x + cw / 2.0,
                    y + 32.0
                );
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escapes_labels() {
        let svg = bar_chart("a<b", "y", &["1:0.5".into()], &[("Open".into(), vec![0.5])]);
        assert!(svg.contains("a&lt;b"));
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn heatmap_marks_and_blanks() {
        let svg = heatmap(
            "t",
            &["r".into()],
            &["a".into(), "b".into()],
            &[vec![Some(0.25), None]],
            None,
            &[(0, 0)],
        );
        assert!(svg.contains("stroke-width=\"3\""));
        assert!(svg.contains("#eeeeee"));
        assert!(svg.contains(">0.250<"));
    }
}
