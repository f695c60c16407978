//! One-line status text for sharing a finished workout.

use crate::metrics::SessionSummary;

pub const MAX_STATUS_CHARS: usize = 280;

/// Renders `summary` with `template`, or the default wording when `None`.
///
/// Template placeholders: `{duration_min}`, `{duration_s}`, `{avg_hr}`,
/// `{min_hr}`, `{max_hr}`, `{distance_m}`, `{strides}`, `{beats}`. Values a
/// session does not have render as `n/a`. Output is cut to 280 characters.
pub fn format_status(summary: &SessionSummary, template: Option<&str>) -> String {
    let text = match template {
        None => default_status(summary),
        Some(t) => render(summary, t),
    };
    truncate_chars(text, MAX_STATUS_CHARS)
}

fn default_status(s: &SessionSummary) -> String {
    let mut out = format!("Workout: {:.1} min", s.duration_s / 60.0);
    if let Some(hr) = s.avg_hr_bpm {
        out.push_str(&format!(", avg HR {hr:.0} bpm, {:.1} m", s.distance_m));
    } else if s.distance_m > 0.0 {
        out.push_str(&format!(", {:.1} m", s.distance_m));
    }
    out
}

fn render(s: &SessionSummary, template: &str) -> String {
    let na = || "n/a".to_string();
    let fields: [(&str, String); 8] = [
        ("{duration_min}", format!("{:.1}", s.duration_s / 60.0)),
        ("{duration_s}", format!("{:.0}", s.duration_s)),
        ("{avg_hr}", s.avg_hr_bpm.map_or_else(na, |v| format!("{v:.0}"))),
        ("{min_hr}", s.min_hr_bpm.map_or_else(na, |v| v.to_string())),
        ("{max_hr}", s.max_hr_bpm.map_or_else(na, |v| v.to_string())),
        ("{distance_m}", format!("{:.1}", s.distance_m)),
        ("{strides}", s.strides_total.to_string()),
        ("{beats}", s.beats_total.to_string()),
    ];
    fields
        .iter()
        .fold(template.to_string(), |acc, (k, v)| acc.replace(k, v))
}

fn truncate_chars(mut s: String, max: usize) -> String {
    if let Some((idx, _)) = s.char_indices().nth(max) {
        s.truncate(idx);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_wording() {
        let mut s = SessionSummary::empty(600.0);
        s.avg_hr_bpm = Some(60.0);
        assert_eq!(format_status(&s, None), "Workout: 10.0 min, avg HR 60 bpm, 0.0 m");
        assert_eq!(format_status(&SessionSummary::empty(0.0), None), "Workout: 0.0 min");
    }

    #[test]
    fn custom_template() {
        let mut s = SessionSummary::empty(90.0);
        s.max_hr_bpm = Some(151);
        assert_eq!(
            format_status(&s, Some("{duration_s}s peak {max_hr} avg {avg_hr}")),
            "90s peak 151 avg n/a"
        );
    }

    #[test]
    fn length_is_bounded() {
        let s = SessionSummary::empty(1.0);
        let long = "é{duration_min}".repeat(200);
        assert_eq!(format_status(&s, Some(&long)).chars().count(), 280);
    }
}
