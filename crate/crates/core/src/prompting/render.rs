use std::fmt;

use crate::data::PredictionSample;

use super::OperatorPreference;

/// Canonical prompt text with exactly one `[MASK]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PromptText(pub String);

impl PromptText {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PromptText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One decimal place; a value that rounds to zero is printed as `0.0` so the
/// sign of tiny negatives never leaks into the text.
fn num(v: f64) -> String {
    let s = format!("{v:.1}");
    if s == "-0.0" {
        "0.0".to_string()
    } else {
        s
    }
}

/// Render the masked prompt:
///
/// `cell <id> ; time <bucket> ; past <v…> ; mean <μ> ; dev <σ> ; next [MASK]`
/// followed by ` ; goal <phrase>` when a preference is given.
pub fn render_prompt(sample: &PredictionSample, pref: Option<OperatorPreference>) -> PromptText {
    let past = sample
        .history
        .iter()
        .map(|&v| num(v))
        .collect::<Vec<_>>()
        .join(" ");
    let mut text = format!(
        "cell {} ; time {} ; past {} ; mean {} ; dev {} ; next [MASK]",
        sample.cell_id,
        sample.tod_bucket,
        past,
        num(sample.mean),
        num(sample.deviation),
    );
    if let Some(p) = pref {
        text.push_str(" ; goal ");
        text.push_str(p.phrase());
    }
    PromptText(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PredictionSample {
        PredictionSample {
            cell_id: 7,
            target_time_ms: 0,
            history: vec![10.0, 12.0, 11.0, 13.0, 12.0],
            mean: 11.6,
            deviation: 1.0,
            tod_bucket: 36,
            target: 0.0,
        }
    }

    #[test]
    fn renders_template() {
        assert_eq!(
            render_prompt(&sample(), None).as_str(),
            "cell 7 ; time 36 ; past 10.0 12.0 11.0 13.0 12.0 ; mean 11.6 ; dev 1.0 ; next [MASK]"
        );
    }

    #[test]
    fn appends_goal_clause() {
        let plain = render_prompt(&sample(), None);
        let with = render_prompt(&sample(), Some(OperatorPreference::HighPowerSavings));
        assert_eq!(
            with.as_str(),
            format!("{plain} ; goal Focus highly on power savings")
        );
    }

    #[test]
    fn zero_deviation() {
        let s = PredictionSample {
            deviation: 0.0,
            ..sample()
        };
        assert!(render_prompt(&s, None).as_str().contains("dev 0.0 ;"));
        let s = PredictionSample {
            deviation: -0.01,
            ..sample()
        };
        assert!(render_prompt(&s, None).as_str().contains("dev 0.0 ;"));
    }
}
