use std::fmt::Write as _;

use serde_json::{json, Value};

use crate::types::SummaryStatistics;

/// One acceptance check of an experiment run.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_owned(),
            passed,
            detail,
        }
    }
}

/// A labelled set of importances drawn as one panel in the SVG chart.
#[derive(Clone, Debug)]
pub struct ChartPanel {
    pub title: String,
    pub importances: SummaryStatistics,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub experiment: String,
    pub seed: u64,
    pub blackbox_metrics: Value,
    pub melime: Value,
    pub lime_baseline: Value,
    pub checks: Vec<Check>,
    pub panels: Vec<ChartPanel>,
}

impl ExperimentReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> Value {
        let checks: Vec<Value> = self
            .checks
            .iter()
            .map(|c| json!({"name": c.name, "passed": c.passed, "detail": c.detail}))
            .collect();
        json!({
            "experiment": self.experiment,
            "seed": self.seed,
            "blackbox_metrics": self.blackbox_metrics,
            "melime": self.melime,
            "lime_baseline": self.lime_baseline,
            "checks": checks,
        })
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_json()).expect("report is valid JSON");
        s.push('\n');
        s
    }

    /// Horizontal bar chart of every panel's importances, stacked vertically.
    pub fn to_svg(&self) -> String {
        render_svg(&format!("{} (seed {})", self.experiment, self.seed), &self.panels)
    }
}

const WIDTH: f64 = 640.0;
const LABEL_W: f64 = 170.0;
const BAR_H: f64 = 18.0;
const GAP: f64 = 6.0;

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn render_svg(title: &str, panels: &[ChartPanel]) -> String {
    let mut body = String::new();
    let mut y = 40.0;
    let plot_w = WIDTH - LABEL_W - 40.0;
    for panel in panels {
        let _ = writeln!(body, r#"<text x="10" y="{y:.1}" font-weight="bold">{}</text>"#, escape(&panel.title));
        y += 10.0;
        let max = panel.importances.alpha.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        let scale = if max > 0.0 { plot_w / 2.0 / max } else { 0.0 };
        let zero = LABEL_W + plot_w / 2.0;
        let top = y;
        for (name, a) in panel.importances.feature_names.iter().zip(&panel.importances.alpha) {
            let w = a.abs() * scale;
            let x = if *a < 0.0 { zero - w } else { zero };
            let colour = if *a < 0.0 { "#c0392b" } else { "#2471a3" };
            let _ = writeln!(
                body,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                LABEL_W - 6.0,
                y + BAR_H * 0.75,
                escape(name)
            );
            let _ = writeln!(
                body,
                r#"<rect x="{x:.2}" y="{y:.1}" width="{w:.2}" height="{BAR_H}" fill="{colour}"><title>{a}</title></rect>"#
            );
            y += BAR_H + GAP;
        }
        let _ = writeln!(
            body,
            r##"<line x1="{zero:.1}" y1="{top:.1}" x2="{zero:.1}" y2="{:.1}" stroke="#333"/>"##,
            y - GAP
        );
        y += 24.0;
    }
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{:.0}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <text x=\"10\" y=\"20\" font-size=\"14\">{}</text>\n{body}</svg>\n",
        y,
        escape(title)
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_has_one_bar_per_feature() {
        let imp = SummaryStatistics::new(vec![-1.0, 0.5, 0.0], vec!["a".into(), "b<".into(), "c".into()]).unwrap();
        let svg = render_svg("t", &[ChartPanel { title: "p".into(), importances: imp }]);
        assert_eq!(svg.matches("<rect").count(), 3);
        assert!(svg.contains("b&lt;"));
        assert!(svg.starts_with("<svg"));
    }
}
