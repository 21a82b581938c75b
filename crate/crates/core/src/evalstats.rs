//! Questionnaire analysis for teacher ratings of the generated reports.
//!
//! Five dimensions are each scored 0 to 10. Responses with a perfect total
//! or a total at or below a low threshold are set aside before per-dimension
//! descriptive statistics are computed. Quartiles are Tukey hinges with the
//! median excluded from both halves for odd sample sizes.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Dimension {
    UnderstandingLevel,
    Practicality,
    MotivationEffect,
    Clarity,
    OrganizationalStructure,
}

impl Dimension {
    pub const ALL: [Dimension; 5] = [
        Dimension::UnderstandingLevel,
        Dimension::Practicality,
        Dimension::MotivationEffect,
        Dimension::Clarity,
        Dimension::OrganizationalStructure,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Dimension::UnderstandingLevel => "Understanding Level",
            Dimension::Practicality => "Practicality",
            Dimension::MotivationEffect => "Motivation effect",
            Dimension::Clarity => "Clarity",
            Dimension::OrganizationalStructure => "Organizational structure",
        }
    }

    /// Column name in the survey CSV.
    pub fn column(self) -> &'static str {
        ["u", "p", "m", "c", "o"][self as usize]
    }
}

pub const MAX_SCORE: u8 = 10;
pub const MAX_TOTAL: u32 = 50;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SurveyResponse {
    pub respondent_id: String,
    /// Scores in [`Dimension::ALL`] order.
    pub scores: [u8; 5],
    pub advice: Option<String>,
}

impl SurveyResponse {
    pub fn new(respondent_id: impl Into<String>, scores: [u8; 5]) -> Result<Self, StatsError> {
        if let Some(&s) = scores.iter().find(|&&s| s > MAX_SCORE) {
            return Err(StatsError::ScoreRange { line: 0, value: s.to_string() });
        }
        Ok(SurveyResponse { respondent_id: respondent_id.into(), scores, advice: None })
    }

    pub fn total(&self) -> u32 {
        self.scores.iter().map(|&s| u32::from(s)).sum()
    }

    pub fn score(&self, d: Dimension) -> u8 {
        self.scores[d as usize]
    }
}

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("no responses to summarize")]
    EmptyInput,
    #[error("line {line}: score `{value}` is not an integer in 0..=10")]
    ScoreRange { line: u64, value: String },
    #[error("missing column `{0}`")]
    MissingColumn(&'static str),
    #[error("survey input: {0}")]
    Csv(#[from] csv::Error),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Reads `respondent_id,u,p,m,c,o,advice` rows. `advice` may be absent.
pub fn parse_survey<R: Read>(reader: R) -> Result<Vec<SurveyResponse>, StatsError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &'static str| headers.iter().position(|h| h.trim() == name);
    let id_col = col("respondent_id").ok_or(StatsError::MissingColumn("respondent_id"))?;
    let mut score_cols = [0usize; 5];
    for (slot, d) in score_cols.iter_mut().zip(Dimension::ALL) {
        *slot = col(d.column()).ok_or(StatsError::MissingColumn(d.column()))?;
    }
    let advice_col = col("advice");

    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut scores = [0u8; 5];
        for (s, &c) in scores.iter_mut().zip(&score_cols) {
            let raw = rec.get(c).unwrap_or("").trim();
            *s = raw
                .parse::<u8>()
                .ok()
                .filter(|v| *v <= MAX_SCORE)
                .ok_or_else(|| StatsError::ScoreRange { line, value: raw.to_owned() })?;
        }
        let advice = advice_col.and_then(|c| rec.get(c)).map(str::trim).filter(|a| !a.is_empty()).map(str::to_owned);
        out.push(SurveyResponse { respondent_id: rec.get(id_col).unwrap_or("").trim().to_owned(), scores, advice });
    }
    Ok(out)
}

pub fn load_survey(path: &Path) -> Result<Vec<SurveyResponse>, StatsError> {
    let file = std::fs::File::open(path).map_err(|source| StatsError::Io { path: path.to_owned(), source })?;
    parse_survey(file)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterOutcome {
    pub valid: Vec<SurveyResponse>,
    pub discarded_low: Vec<SurveyResponse>,
    pub discarded_perfect: Vec<SurveyResponse>,
}

impl FilterOutcome {
    pub fn counts(&self) -> (usize, usize, usize) {
        (self.valid.len(), self.discarded_low.len(), self.discarded_perfect.len())
    }
}

/// Splits responses into valid, low-total and perfect-total sets. A perfect
/// total is checked first.
pub fn filter_responses(responses: &[SurveyResponse], low_total_threshold: u32) -> FilterOutcome {
    let mut out = FilterOutcome::default();
    for r in responses {
        let total = r.total();
        let bucket = if total == MAX_TOTAL {
            &mut out.discarded_perfect
        } else if total <= low_total_threshold {
            &mut out.discarded_low
        } else {
            &mut out.valid
        };
        bucket.push(r.clone());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionSummary {
    pub dimension: Dimension,
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub lower_fence: f64,
    pub upper_fence: f64,
    /// Most extreme observations inside the fences.
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

fn median_sorted(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Tukey hinges, median excluded from both halves when `n` is odd.
/// A single observation is its own hinge.
pub fn hinges(sorted: &[f64]) -> (f64, f64) {
    let n = sorted.len();
    if n == 1 {
        return (sorted[0], sorted[0]);
    }
    let half = n / 2;
    (median_sorted(&sorted[..half]), median_sorted(&sorted[n - half..]))
}

/// Box-plot statistics for one sample.
pub fn describe(dimension: Dimension, values: &[f64]) -> Result<DimensionSummary, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let mut xs = values.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let median = median_sorted(&xs);
    let (q1, q3) = hinges(&xs);
    let iqr = q3 - q1;
    let (lower_fence, upper_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = |x: &&f64| **x >= lower_fence && **x <= upper_fence;
    let whisker_low = xs.iter().find(inside).copied().unwrap_or(q1);
    let whisker_high = xs.iter().rev().find(inside).copied().unwrap_or(q3);
    let outliers = xs.iter().copied().filter(|x| *x < lower_fence || *x > upper_fence).collect();
    Ok(DimensionSummary {
        dimension,
        n,
        mean,
        median,
        q1,
        q3,
        iqr,
        lower_fence,
        upper_fence,
        whisker_low,
        whisker_high,
        outliers,
    })
}

/// Per-dimension summaries over the valid responses.
pub fn summarize(valid: &[SurveyResponse]) -> Result<[DimensionSummary; 5], StatsError> {
    if valid.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let per = |d: Dimension| {
        let values: Vec<f64> = valid.iter().map(|r| f64::from(r.score(d))).collect();
        describe(d, &values)
    };
    Ok([
        per(Dimension::ALL[0])?,
        per(Dimension::ALL[1])?,
        per(Dimension::ALL[2])?,
        per(Dimension::ALL[3])?,
        per(Dimension::ALL[4])?,
    ])
}

/// Summary table as CSV, one row per dimension.
pub fn write_summary_csv<W: Write>(w: W, summaries: &[DimensionSummary]) -> Result<(), StatsError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "dimension",
        "n",
        "mean",
        "median",
        "q1",
        "q3",
        "iqr",
        "whisker_low",
        "whisker_high",
        "outliers",
    ])?;
    for s in summaries {
        let outliers: Vec<String> = s.outliers.iter().map(|o| format!("{o}")).collect();
        wtr.write_record([
            s.dimension.label().to_owned(),
            s.n.to_string(),
            format!("{:.4}", s.mean),
            format!("{}", s.median),
            format!("{}", s.q1),
            format!("{}", s.q3),
            format!("{}", s.iqr),
            format!("{}", s.whisker_low),
            format!("{}", s.whisker_high),
            outliers.join(";"),
        ])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Renders a box plot of all dimensions as a standalone SVG document.
pub fn render_boxplot_svg(summaries: &[DimensionSummary]) -> String {
    const W: f64 = 720.0;
    const H: f64 = 420.0;
    const LEFT: f64 = 50.0;
    const TOP: f64 = 30.0;
    const PLOT_H: f64 = 320.0;
    let y = |v: f64| TOP + PLOT_H * (1.0 - v / f64::from(MAX_SCORE));
    let slot = (W - LEFT - 20.0) / summaries.len().max(1) as f64;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    for tick in 0..=MAX_SCORE {
        let ty = y(f64::from(tick));
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{ty:.1}" x2="{:.1}" y2="{ty:.1}" stroke="#e0e0e0"/><text x="{:.1}" y="{:.1}" text-anchor="end">{tick}</text>"##,
            W - 20.0,
            LEFT - 6.0,
            ty + 4.0
        );
    }
    for (i, s) in summaries.iter().enumerate() {
        let cx = LEFT + slot * (i as f64 + 0.5);
        let half = slot * 0.25;
        let _ = writeln!(
            svg,
            r##"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/>"##,
            y(s.whisker_high),
            y(s.q3)
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/>"##,
            y(s.q1),
            y(s.whisker_low)
        );
        for w in [s.whisker_low, s.whisker_high] {
            let _ = writeln!(
                svg,
                r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"##,
                cx - half / 2.0,
                y(w),
                cx + half / 2.0,
                y(w)
            );
        }
        let _ = writeln!(
            svg,
            r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="#9ecae1" stroke="black"/>"##,
            cx - half,
            y(s.q3),
            2.0 * half,
            (y(s.q1) - y(s.q3)).max(0.5)
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#d62728" stroke-width="2"/>"##,
            cx - half,
            y(s.median),
            cx + half,
            y(s.median)
        );
        for o in &s.outliers {
            let _ = writeln!(svg, r#"<circle cx="{cx:.1}" cy="{:.1}" r="3" fill="none" stroke="black"/>"#, y(*o));
        }
        let _ = writeln!(
            svg,
            r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            TOP + PLOT_H + 22.0,
            s.dimension.label()
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn resp(id: &str, scores: [u8; 5]) -> SurveyResponse {
        SurveyResponse::new(id, scores).unwrap()
    }

    #[test]
    fn median_and_mean_of_four() {
        let s = describe(Dimension::Clarity, &[6.0, 7.0, 8.0, 9.0]).unwrap();
        assert_eq!((s.median, s.mean), (7.5, 7.5));
        assert_eq!((s.q1, s.q3), (6.5, 8.5));
    }

    #[test]
    fn constant_scores_have_no_outliers() {
        let s = describe(Dimension::Clarity, &[7.0, 7.0, 7.0]).unwrap();
        assert_eq!(s.iqr, 0.0);
        assert!(s.outliers.is_empty());
        assert_eq!((s.whisker_low, s.whisker_high), (7.0, 7.0));
    }

    #[test]
    fn odd_sample_excludes_median_from_hinges() {
        // halves [1,2,3] and [5,6,7]
        let s = describe(Dimension::Practicality, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]).unwrap();
        assert_eq!((s.q1, s.median, s.q3), (2.0, 4.0, 6.0));
        let one = describe(Dimension::Practicality, &[3.0]).unwrap();
        assert_eq!((one.q1, one.median, one.q3), (3.0, 3.0, 3.0));
    }

    #[test]
    fn flags_outliers() {
        let s = describe(Dimension::MotivationEffect, &[7.0, 8.0, 8.0, 8.0, 9.0, 8.0, 1.0]).unwrap();
        assert_eq!(s.outliers, vec![1.0]);
        assert_eq!(s.whisker_low, 7.0);
    }

    #[test]
    fn filtering_basics() {
        assert_eq!(filter_responses(&[resp("a", [10; 5])], 5).counts(), (0, 0, 1));
        assert_eq!(filter_responses(&[], 5).counts(), (0, 0, 0));
        let out = filter_responses(&[resp("a", [1, 1, 1, 1, 1]), resp("b", [1, 1, 1, 1, 2]), resp("c", [9; 5])], 5);
        assert_eq!(out.counts(), (2, 1, 0));
        assert_eq!(out.discarded_low[0].respondent_id, "a");
    }

    #[test]
    fn summarize_requires_input() {
        assert!(matches!(summarize(&[]), Err(StatsError::EmptyInput)));
    }

    #[test]
    fn parses_survey_csv() {
        let text = "respondent_id,u,p,m,c,o,advice\nt1,8,7,9,6,8,\"simpler words, please\"\nt2,10,10,10,10,10,\n";
        let rs = parse_survey(text.as_bytes()).unwrap();
        assert_eq!(rs.len(), 2);
        assert_eq!(rs[0].scores, [8, 7, 9, 6, 8]);
        assert_eq!(rs[0].advice.as_deref(), Some("simpler words, please"));
        assert_eq!(rs[1].advice, None);
        assert_eq!(rs[1].total(), 50);
        let bad = "respondent_id,u,p,m,c,o\nt1,11,7,9,6,8\n";
        assert!(matches!(parse_survey(bad.as_bytes()), Err(StatsError::ScoreRange { line: 2, .. })));
        assert!(matches!(parse_survey("respondent_id,u\n".as_bytes()), Err(StatsError::MissingColumn("p"))));
    }

    #[test]
    fn summary_csv_and_svg() {
        let rs = vec![resp("a", [6, 7, 8, 9, 5]), resp("b", [7, 7, 8, 6, 5]), resp("c", [8, 2, 8, 7, 5])];
        let sums = summarize(&rs).unwrap();
        let mut buf = Vec::new();
        write_summary_csv(&mut buf, &sums).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.lines().nth(1).unwrap().starts_with("Understanding Level,3,7.0000,7,"));
        let svg = render_boxplot_svg(&sums);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<rect").count(), 6);
    }

    proptest! {
        #[test]
        fn partition_and_order_invariance(
            scores in prop::collection::vec(prop::array::uniform5(0u8..=10), 0..60),
            threshold in 0u32..20,
            rotate in 0usize..60,
        ) {
            let rs: Vec<_> = scores.iter().enumerate().map(|(i, s)| resp(&i.to_string(), *s)).collect();
            let out = filter_responses(&rs, threshold);
            let (v, l, p) = out.counts();
            prop_assert_eq!(v + l + p, rs.len());
            if !out.valid.is_empty() {
                let mut rotated = out.valid.clone();
                let k = rotate % rotated.len();
                rotated.rotate_left(k);
                rotated.reverse();
                prop_assert_eq!(summarize(&out.valid).unwrap(), summarize(&rotated).unwrap());
            }
        }

        #[test]
        fn hinge_order_and_median_stability(values in prop::collection::vec(0u8..=10, 1..40)) {
            let xs: Vec<f64> = values.iter().map(|&v| f64::from(v)).collect();
            let s = describe(Dimension::Clarity, &xs).unwrap();
            prop_assert!(s.q1 <= s.median && s.median <= s.q3);
            for o in &s.outliers {
                prop_assert!(*o < s.lower_fence || *o > s.upper_fence);
            }
            let mut more = xs.clone();
            more.push(s.median);
            prop_assert_eq!(describe(Dimension::Clarity, &more).unwrap().median, s.median);
        }
    }
}
