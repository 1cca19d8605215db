//! Dependency-free SVG chart emission for sweep results.

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn nice_bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if (hi - lo).abs() < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = (hi - lo) * 0.05;
        (lo - pad, hi + pad)
    }
}

/// Render one or more (x, y) series as an SVG line chart.
pub fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(&str, &Vec<(f64, f64)>)],
) -> String {
    let (x_lo, x_hi) = nice_bounds(series.iter().flat_map(|(_, pts)| pts.iter().map(|p| p.0)));
    let (y_lo, y_hi) = nice_bounds(series.iter().flat_map(|(_, pts)| pts.iter().map(|p| p.1)));
    let sx = |x: f64| MARGIN + (x - x_lo) / (x_hi - x_lo) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y_lo) / (y_hi - y_lo) * (HEIGHT - 2.0 * MARGIN);

    let mut out = format!(
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{title}</text>
"##,
        WIDTH / 2.0
    );
    // Axes.
    out.push_str(&format!(
        r##"<line x1="{m}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>
<line x1="{m}" y1="{t}" x2="{m}" y2="{b}" stroke="black"/>
"##,
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN,
        t = MARGIN
    ));
    // Ticks and grid.
    for i in 0..=4 {
        let fx = x_lo + (x_hi - x_lo) * i as f64 / 4.0;
        let fy = y_lo + (y_hi - y_lo) * i as f64 / 4.0;
        out.push_str(&format!(
            r##"<text x="{:.1}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">{:.4}</text>
<text x="{}" y="{:.1}" text-anchor="end" font-family="sans-serif" font-size="11">{:.3}</text>
<line x1="{m}" y1="{gy:.1}" x2="{r}" y2="{gy:.1}" stroke="#dddddd"/>
"##,
            sx(fx),
            HEIGHT - MARGIN + 18.0,
            fx,
            MARGIN - 8.0,
            sy(fy) + 4.0,
            fy,
            m = MARGIN,
            r = WIDTH - MARGIN,
            gy = sy(fy),
        ));
    }
    // Axis labels.
    out.push_str(&format!(
        r##"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13">{x_label}</text>
<text x="18" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 18 {})">{y_label}</text>
"##,
        WIDTH / 2.0,
        HEIGHT - 14.0,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    ));
    // Series.
    for (si, (name, points)) in series.iter().enumerate() {
        let color = COLORS[si % COLORS.len()];
        let path: Vec<String> = points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        out.push_str(&format!(
            r##"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>
"##,
            path.join(" ")
        ));
        for (x, y) in points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
            out.push_str(&format!(
                r##"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>
"##,
                sx(*x),
                sy(*y)
            ));
        }
        out.push_str(&format!(
            r##"<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="{color}">{name}</text>
"##,
            WIDTH - MARGIN - 120.0,
            MARGIN + 16.0 * (si as f64 + 1.0)
        ));
    }
    out.push_str("</svg>\n");
    out
}

/// Render labeled bars (one group per label) as an SVG bar chart.
pub fn bar_chart(title: &str, y_label: &str, bars: &[(&str, f64)]) -> String {
    let (_, y_hi) = nice_bounds(bars.iter().map(|b| b.1));
    let y_hi = y_hi.max(1e-9);
    let n = bars.len().max(1) as f64;
    let band = (WIDTH - 2.0 * MARGIN) / n;
    let mut out = format!(
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{title}</text>
<text x="18" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 18 {})">{y_label}</text>
"##,
        WIDTH / 2.0,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    for (i, (label, value)) in bars.iter().enumerate() {
        let h = (value / y_hi) * (HEIGHT - 2.0 * MARGIN);
        let x = MARGIN + band * i as f64 + band * 0.15;
        let y = HEIGHT - MARGIN - h;
        out.push_str(&format!(
            r##"<rect x="{x:.1}" y="{y:.1}" width="{:.1}" height="{h:.1}" fill="{}"/>
<text x="{:.1}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">{label}</text>
<text x="{:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="10">{value:.3e}</text>
"##,
            band * 0.7,
            COLORS[i % COLORS.len()],
            x + band * 0.35,
            HEIGHT - MARGIN + 18.0,
            x + band * 0.35,
            y - 6.0,
        ));
    }
    out.push_str("</svg>\n");
    out
}
