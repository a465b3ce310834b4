//! Static SVG charts from trace files: 2-D trajectories with formation
//! snapshots, resultant error with the 0.1 km reference line, and speed and
//! heading time series.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::scenario::Obstacle;
use crate::trace::{
    read_errors, read_events, read_summary, read_trajectory, ErrorRow, Event, EventKind,
    TrajectoryRow, ERROR_FILE, TRAJECTORY_FILE,
};

const WIDTH: f64 = 820.0;
const HEIGHT: f64 = 560.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 55.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn from_points<I: Iterator<Item = (f64, f64)>>(points: I) -> Result<Frame> {
        let mut x_min = f64::INFINITY;
        let mut x_max = f64::NEG_INFINITY;
        let mut y_min = f64::INFINITY;
        let mut y_max = f64::NEG_INFINITY;
        for (x, y) in points {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
        if !x_min.is_finite() {
            return Err(Error::EmptyTrace);
        }
        let pad = |lo: &mut f64, hi: &mut f64| {
            let span = (*hi - *lo).abs();
            let pad = if span < 1e-12 { 0.5 } else { span * 0.06 };
            *lo -= pad;
            *hi += pad;
        };
        pad(&mut x_min, &mut x_max);
        pad(&mut y_min, &mut y_max);
        Ok(Frame {
            x_min,
            x_max,
            y_min,
            y_max,
        })
    }

    fn include_y(&mut self, y: f64) {
        self.y_min = self.y_min.min(y - 0.02 * (self.y_max - self.y_min));
        self.y_max = self.y_max.max(y + 0.02 * (self.y_max - self.y_min));
    }

    fn sx(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn sy(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_BOTTOM
            - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn ticks(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..=count)
        .map(|i| lo + (hi - lo) * i as f64 / count as f64)
        .collect()
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 1000.0 || (v != 0.0 && v.abs() < 0.01) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

struct Chart {
    frame: Frame,
    body: String,
    title: String,
    x_label: String,
    y_label: String,
}

impl Chart {
    fn new(frame: Frame, title: &str, x_label: &str, y_label: &str) -> Chart {
        Chart {
            frame,
            body: String::new(),
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
        }
    }

    fn polyline(&mut self, points: &[(f64, f64)], color: &str, width: f64, dash: Option<&str>) {
        if points.is_empty() {
            return;
        }
        let mut d = String::new();
        for (i, (x, y)) in points.iter().enumerate() {
            let cmd = if i == 0 { 'M' } else { 'L' };
            d.push_str(&format!(
                "{cmd}{:.2} {:.2} ",
                self.frame.sx(*x),
                self.frame.sy(*y)
            ));
        }
        let dash_attr = dash
            .map(|d| format!(" stroke-dasharray=\"{d}\""))
            .unwrap_or_default();
        self.body.push_str(&format!(
            "<path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\"{dash_attr}/>\n",
            d.trim_end()
        ));
    }

    fn circle(&mut self, x: f64, y: f64, r: f64, color: &str) {
        self.body.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{r}\" fill=\"{color}\"/>\n",
            self.frame.sx(x),
            self.frame.sy(y)
        ));
    }

    fn cross(&mut self, x: f64, y: f64, size: f64, color: &str) {
        let (cx, cy) = (self.frame.sx(x), self.frame.sy(y));
        self.body.push_str(&format!(
            "<path d=\"M{} {} L{} {} M{} {} L{} {}\" stroke=\"{color}\" stroke-width=\"2.5\"/>\n",
            cx - size,
            cy - size,
            cx + size,
            cy + size,
            cx - size,
            cy + size,
            cx + size,
            cy - size
        ));
    }

    fn text(&mut self, sx: f64, sy: f64, content: &str, color: &str, anchor: &str) {
        self.body.push_str(&format!(
            "<text x=\"{sx:.1}\" y=\"{sy:.1}\" fill=\"{color}\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"{anchor}\">{content}</text>\n"
        ));
    }

    fn legend(&mut self, entries: &[(String, String)]) {
        for (i, (label, color)) in entries.iter().enumerate() {
            let y = MARGIN_TOP + 8.0 + 16.0 * i as f64;
            self.body.push_str(&format!(
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"10\" height=\"10\" fill=\"{color}\"/>\n",
                WIDTH - 120.0,
                y - 9.0
            ));
            self.text(WIDTH - 105.0, y, label, "#333", "start");
        }
    }

    fn render(self) -> String {
        let mut svg = format!(
            "<svg version=\"1.1\" width=\"{WIDTH}\" height=\"{HEIGHT}\" xmlns=\"http://www.w3.org/2000/svg\">\n<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
        );
        // Axes box and ticks.
        svg.push_str(&format!(
            "<rect x=\"{MARGIN_LEFT}\" y=\"{MARGIN_TOP}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"#444\"/>\n",
            WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
            HEIGHT - MARGIN_TOP - MARGIN_BOTTOM
        ));
        for t in ticks(self.frame.x_min, self.frame.x_max, 6) {
            let sx = self.frame.sx(t);
            svg.push_str(&format!(
                "<line x1=\"{sx:.1}\" y1=\"{:.1}\" x2=\"{sx:.1}\" y2=\"{:.1}\" stroke=\"#bbb\" stroke-width=\"0.6\"/>\n",
                MARGIN_TOP,
                HEIGHT - MARGIN_BOTTOM
            ));
            svg.push_str(&format!(
                "<text x=\"{sx:.1}\" y=\"{:.1}\" fill=\"#333\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
                HEIGHT - MARGIN_BOTTOM + 16.0,
                fmt_tick(t)
            ));
        }
        for t in ticks(self.frame.y_min, self.frame.y_max, 5) {
            let sy = self.frame.sy(t);
            svg.push_str(&format!(
                "<line x1=\"{MARGIN_LEFT}\" y1=\"{sy:.1}\" x2=\"{:.1}\" y2=\"{sy:.1}\" stroke=\"#bbb\" stroke-width=\"0.6\"/>\n",
                WIDTH - MARGIN_RIGHT
            ));
            svg.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"#333\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
                MARGIN_LEFT - 6.0,
                sy + 4.0,
                fmt_tick(t)
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"22\" fill=\"#111\" font-family=\"monospace\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
            WIDTH / 2.0,
            self.title
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"#111\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
            WIDTH / 2.0,
            HEIGHT - 14.0,
            self.x_label
        ));
        svg.push_str(&format!(
            "<text x=\"16\" y=\"{:.1}\" fill=\"#111\" font-family=\"monospace\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>\n",
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            self.y_label
        ));
        svg.push_str(&self.body);
        svg.push_str("</svg>\n");
        svg
    }
}

fn series_by_id<T, F: Fn(&T) -> (usize, f64, f64)>(
    rows: &[T],
    f: F,
) -> BTreeMap<usize, Vec<(f64, f64)>> {
    let mut map: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for row in rows {
        let (id, x, y) = f(row);
        map.entry(id).or_default().push((x, y));
    }
    map
}

fn color_for(id: usize) -> &'static str {
    PALETTE[(id.max(1) - 1) % PALETTE.len()]
}

/// 2-D trajectory chart: per-missile paths, dashed target path, formation
/// snapshots at evenly spaced times, failure marks, wall obstacles.
pub fn trajectory_svg(
    rows: &[TrajectoryRow],
    events: &[Event],
    obstacles: &[Obstacle],
) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let frame = Frame::from_points(rows.iter().map(|r| (r.x, r.y)))?;
    let mut chart = Chart::new(frame, "swarm trajectories", "x [km]", "y [km]");

    for obstacle in obstacles {
        let (lo, hi) = (
            obstacle.gap_center - obstacle.gap_width / 2.0,
            obstacle.gap_center + obstacle.gap_width / 2.0,
        );
        chart.polyline(
            &[(chart.frame.x_min, obstacle.y), (lo, obstacle.y)],
            "#555",
            5.0,
            None,
        );
        chart.polyline(
            &[(hi, obstacle.y), (chart.frame.x_max, obstacle.y)],
            "#555",
            5.0,
            None,
        );
    }

    let series = series_by_id(rows, |r: &TrajectoryRow| (r.id, r.x, r.y));
    let mut legend = Vec::new();
    for (&id, points) in &series {
        if id == 0 {
            chart.polyline(points, "#000", 1.2, Some("6 4"));
            legend.push(("target".to_string(), "#000".to_string()));
        } else {
            chart.polyline(points, color_for(id), 1.5, None);
            legend.push((format!("missile {id}"), color_for(id).to_string()));
        }
    }

    // Formation snapshots: connect missile positions at a few shared steps.
    let steps: Vec<usize> = {
        let mut all: Vec<usize> = rows.iter().filter(|r| r.id != 0).map(|r| r.step).collect();
        all.sort_unstable();
        all.dedup();
        let n = all.len();
        (0..6)
            .map(|i| all[(i * (n - 1)) / 5])
            .collect::<Vec<_>>()
    };
    for &snap in &steps {
        let mut nodes: Vec<&TrajectoryRow> =
            rows.iter().filter(|r| r.step == snap && r.id != 0).collect();
        nodes.sort_by_key(|r| r.id);
        if nodes.len() >= 2 {
            let mut ring: Vec<(f64, f64)> = nodes.iter().map(|r| (r.x, r.y)).collect();
            ring.push(ring[0]);
            chart.polyline(&ring, "#999", 0.8, Some("2 3"));
            for r in &nodes {
                chart.circle(r.x, r.y, 2.2, color_for(r.id));
            }
        }
    }

    // Failure marks at the last recorded position of each failed node.
    for event in events {
        if let EventKind::NodesFailed { nodes } = &event.kind {
            for &id in nodes {
                if let Some(last) = rows
                    .iter()
                    .rfind(|r| r.id == id && r.time <= event.time + 1e-9)
                {
                    chart.cross(last.x, last.y, 6.0, "#d62728");
                    chart.text(
                        chart.frame.sx(last.x) + 8.0,
                        chart.frame.sy(last.y) - 6.0,
                        &format!("node {id} t={:.0}s", event.time),
                        "#d62728",
                        "start",
                    );
                }
            }
        }
    }
    chart.legend(&legend);
    Ok(chart.render())
}

/// Resultant-error chart with the 0.1 km reference line.
pub fn error_svg(rows: &[ErrorRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let mut frame = Frame::from_points(rows.iter().map(|r| (r.time, r.resultant)))?;
    frame.y_min = frame.y_min.min(0.0);
    frame.include_y(0.1);
    let mut chart = Chart::new(frame, "resultant error |e_ri|", "t [s]", "|e_ri| [km]");
    chart.polyline(
        &[(chart.frame.x_min, 0.1), (chart.frame.x_max, 0.1)],
        "#777",
        1.0,
        Some("5 5"),
    );
    chart.text(
        chart.frame.sx(chart.frame.x_min) + 6.0,
        chart.frame.sy(0.1) - 5.0,
        "0.1 km",
        "#777",
        "start",
    );
    let series = series_by_id(rows, |r: &ErrorRow| (r.id, r.time, r.resultant));
    let mut legend = Vec::new();
    for (&id, points) in &series {
        chart.polyline(points, color_for(id), 1.4, None);
        legend.push((format!("missile {id}"), color_for(id).to_string()));
    }
    chart.legend(&legend);
    Ok(chart.render())
}

/// Speed time series per missile.
pub fn speed_svg(rows: &[TrajectoryRow]) -> Result<String> {
    let missiles: Vec<&TrajectoryRow> = rows.iter().filter(|r| r.id != 0).collect();
    if missiles.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let frame = Frame::from_points(missiles.iter().map(|r| (r.time, r.speed)))?;
    let mut chart = Chart::new(frame, "speed", "t [s]", "V [km/s]");
    let series = series_by_id(&missiles, |r: &&TrajectoryRow| (r.id, r.time, r.speed));
    let mut legend = Vec::new();
    for (&id, points) in &series {
        chart.polyline(points, color_for(id), 1.4, None);
        legend.push((format!("missile {id}"), color_for(id).to_string()));
    }
    chart.legend(&legend);
    Ok(chart.render())
}

/// Heading time series per missile.
pub fn heading_svg(rows: &[TrajectoryRow]) -> Result<String> {
    let missiles: Vec<&TrajectoryRow> = rows.iter().filter(|r| r.id != 0).collect();
    if missiles.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let frame = Frame::from_points(missiles.iter().map(|r| (r.time, r.heading)))?;
    let mut chart = Chart::new(frame, "heading angle", "t [s]", "alpha [rad]");
    let series = series_by_id(&missiles, |r: &&TrajectoryRow| (r.id, r.time, r.heading));
    let mut legend = Vec::new();
    for (&id, points) in &series {
        chart.polyline(points, color_for(id), 1.4, None);
        legend.push((format!("missile {id}"), color_for(id).to_string()));
    }
    chart.legend(&legend);
    Ok(chart.render())
}

/// Render all four charts from a trace directory. Nothing is written unless
/// every chart renders (an empty trace errors out before any file exists).
pub fn render_all(trace_dir: &Path) -> Result<Vec<PathBuf>> {
    let rows = read_trajectory(&trace_dir.join(TRAJECTORY_FILE))?;
    let errors = read_errors(&trace_dir.join(ERROR_FILE))?;
    let events = read_events(trace_dir).unwrap_or_default();
    let obstacles = read_summary(trace_dir)
        .map(|s| s.scenario.obstacles)
        .unwrap_or_default();

    let charts = [
        ("trajectory.svg", trajectory_svg(&rows, &events, &obstacles)?),
        ("error.svg", error_svg(&errors)?),
        ("speed.svg", speed_svg(&rows)?),
        ("heading.svg", heading_svg(&rows)?),
    ];
    let mut written = Vec::new();
    for (name, svg) in charts {
        let path = trace_dir.join(name);
        crate::trace::write_atomic(&path, svg.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}
