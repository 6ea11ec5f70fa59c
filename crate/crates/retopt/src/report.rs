//! Gain curves, final-gain tables and steps-to-mitigation statistics built
//! from persisted trace rows.

use retopt_core::marl::{EpisodeTrace, NetworkAggregate, Variant};

use crate::tables::TraceRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    GoodTraffic,
    Coverage,
    Quality,
    Congestion,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::GoodTraffic, Metric::Coverage, Metric::Quality, Metric::Congestion];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::GoodTraffic => "good_traffic",
            Metric::Coverage => "good_coverage",
            Metric::Quality => "good_quality",
            Metric::Congestion => "congestion",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Metric::GoodTraffic => "Good traffic improvement (%)",
            Metric::Coverage => "Good coverage traffic improvement (%)",
            Metric::Quality => "Good quality traffic improvement (%)",
            Metric::Congestion => "Congestion improvement (%)",
        }
    }

    fn value(self, a: &NetworkAggregate) -> f64 {
        match self {
            Metric::GoodTraffic => a.good_traffic,
            Metric::Coverage => a.good_coverage,
            Metric::Quality => a.good_quality,
            Metric::Congestion => a.congestion_rate,
        }
    }

    /// Improvement in percent relative to the baseline; `None` when the
    /// baseline is zero. Congestion improves as it falls.
    pub fn gain(self, base: &NetworkAggregate, cur: &NetworkAggregate) -> Option<f64> {
        let b = self.value(base);
        let c = self.value(cur);
        if b == 0.0 {
            return None;
        }
        Some(match self {
            Metric::Congestion => 100.0 * (b - c) / b,
            _ => 100.0 * (c - b) / b,
        })
    }
}

/// Distribution summary; quartiles interpolate linearly between order
/// statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
    /// Standard error of the mean; needs two values.
    pub se: Option<f64>,
}

/// Quantile `p` of ascending `sorted` at position `p * (n - 1)`.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let se = (n > 1).then(|| {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    });
    Some(Summary {
        n,
        mean,
        q1: quantile(&sorted, 0.25),
        median: quantile(&sorted, 0.5),
        q3: quantile(&sorted, 0.75),
        min: sorted[0],
        max: sorted[n - 1],
        se,
    })
}

/// Network aggregates of one episode, one per step starting at the baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSeries {
    pub episode: usize,
    pub seed: u64,
    pub steps: Vec<NetworkAggregate>,
}

impl EpisodeSeries {
    /// First step at which every optimized cell is free of congestion, or
    /// `steps + 1` when that never happens.
    pub fn steps_to_mitigation(&self) -> usize {
        self.steps
            .iter()
            .position(|a| a.congestion_free)
            .unwrap_or(self.steps.len())
    }

    pub fn initially_congested(&self) -> bool {
        !self.steps[0].congestion_free
    }
}

impl From<&EpisodeTrace> for EpisodeSeries {
    fn from(t: &EpisodeTrace) -> Self {
        EpisodeSeries {
            episode: t.episode,
            seed: t.seed,
            steps: t.steps.iter().map(|s| s.network).collect(),
        }
    }
}

/// Groups rows by episode and step, in file order.
pub fn episode_series(rows: &[TraceRow]) -> Result<Vec<EpisodeSeries>, String> {
    let mut out: Vec<EpisodeSeries> = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        let (episode, step) = (rows[i].episode, rows[i].step);
        let mut j = i;
        while j < rows.len() && rows[j].episode == episode && rows[j].step == step {
            j += 1;
        }
        let agg = NetworkAggregate::from_kpis(rows[i..j].iter().map(|r| &r.kpi));
        match out.last_mut() {
            Some(s) if s.episode == episode => {
                if step != s.steps.len() {
                    return Err(format!("episode {episode}: step {step} out of order"));
                }
                s.steps.push(agg);
            }
            _ => {
                if step != 0 {
                    return Err(format!("episode {episode} does not start at step 0"));
                }
                if out.iter().any(|s| s.episode == episode) {
                    return Err(format!("episode {episode} is split"));
                }
                out.push(EpisodeSeries {
                    episode,
                    seed: rows[i].seed,
                    steps: vec![agg],
                });
            }
        }
        i = j;
    }
    if let Some(first) = out.first() {
        if let Some(bad) = out.iter().find(|s| s.steps.len() != first.steps.len()) {
            return Err(format!(
                "episode {} has {} steps, episode {} has {}",
                bad.episode,
                bad.steps.len(),
                first.episode,
                first.steps.len()
            ));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantReport {
    pub variant: Variant,
    pub series: Vec<EpisodeSeries>,
    /// Per metric, per step, gains over the episodes with a non-zero baseline.
    pub gains: Vec<(Metric, Vec<Option<Summary>>)>,
    /// Per metric, episodes excluded for a zero baseline.
    pub excluded: Vec<(Metric, usize)>,
    /// Steps to mitigation over every episode; 0 when never congested.
    pub mitigation_all: Option<Summary>,
    /// Steps to mitigation over initially congested episodes.
    pub mitigation_congested: Option<Summary>,
    pub congested_episodes: usize,
    /// Fraction of initially congested episodes that reach zero congestion.
    pub mitigated_fraction: Option<f64>,
}

impl VariantReport {
    pub fn build(variant: Variant, series: Vec<EpisodeSeries>) -> Self {
        let num_steps = series.first().map_or(0, |s| s.steps.len());
        let mut gains = Vec::new();
        let mut excluded = Vec::new();
        for metric in Metric::ALL {
            let usable: Vec<&EpisodeSeries> = series
                .iter()
                .filter(|s| metric.gain(&s.steps[0], &s.steps[0]).is_some())
                .collect();
            let dropped = series.len() - usable.len();
            if dropped > 0 {
                log::warn!(
                    "{}: {dropped} episode(s) with zero baseline {} excluded from its gain",
                    variant.as_str(),
                    metric.as_str()
                );
            }
            let per_step = (0..num_steps)
                .map(|t| {
                    let v: Vec<f64> = usable
                        .iter()
                        .filter_map(|s| metric.gain(&s.steps[0], &s.steps[t]))
                        .collect();
                    summarize(&v)
                })
                .collect();
            gains.push((metric, per_step));
            excluded.push((metric, dropped));
        }
        let all: Vec<f64> = series.iter().map(|s| s.steps_to_mitigation() as f64).collect();
        let congested: Vec<&EpisodeSeries> = series.iter().filter(|s| s.initially_congested()).collect();
        let cond: Vec<f64> = congested.iter().map(|s| s.steps_to_mitigation() as f64).collect();
        let mitigated = congested
            .iter()
            .filter(|s| s.steps_to_mitigation() < s.steps.len())
            .count();
        VariantReport {
            variant,
            mitigation_all: summarize(&all),
            mitigation_congested: summarize(&cond),
            congested_episodes: congested.len(),
            mitigated_fraction: (!congested.is_empty()).then(|| mitigated as f64 / congested.len() as f64),
            series,
            gains,
            excluded,
        }
    }

    pub fn gain_curve(&self, metric: Metric) -> &[Option<Summary>] {
        &self.gains.iter().find(|(m, _)| *m == metric).expect("every metric").1
    }

    pub fn final_gain(&self, metric: Metric) -> Option<Summary> {
        self.gain_curve(metric).last().copied().flatten()
    }

    /// Final gain of each episode, `None` where the baseline is zero.
    pub fn final_gains_by_episode(&self, metric: Metric) -> Vec<Option<f64>> {
        self.series
            .iter()
            .map(|s| metric.gain(&s.steps[0], s.steps.last().expect("non-empty")))
            .collect()
    }
}

/// Final-gain difference `a - b` over the episodes both variants share.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedDiff {
    pub a: Variant,
    pub b: Variant,
    pub metric: Metric,
    pub n: usize,
    pub mean: f64,
    pub se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub variants: Vec<VariantReport>,
    pub paired: Vec<PairedDiff>,
}

impl Report {
    /// Builds the report from per-variant trace rows. Every variant must
    /// cover the same episodes with the same seeds.
    pub fn build(traces: &[(Variant, Vec<TraceRow>)]) -> Result<Report, String> {
        let mut series = Vec::new();
        for (v, rows) in traces {
            series.push((*v, episode_series(rows).map_err(|e| format!("{}: {e}", v.as_str()))?));
        }
        Report::from_series(series)
    }

    /// Builds the report from per-variant episode series.
    pub fn from_series(series: Vec<(Variant, Vec<EpisodeSeries>)>) -> Result<Report, String> {
        let mut variants = Vec::new();
        for (v, s) in series {
            if s.is_empty() {
                return Err(format!("{}: no episodes", v.as_str()));
            }
            variants.push(VariantReport::build(v, s));
        }
        for pair in variants.windows(2) {
            let key = |r: &VariantReport| r.series.iter().map(|s| (s.episode, s.seed)).collect::<Vec<_>>();
            if key(&pair[0]) != key(&pair[1]) {
                return Err(format!(
                    "{} and {} were not run on the same episodes",
                    pair[0].variant.as_str(),
                    pair[1].variant.as_str()
                ));
            }
        }
        let mut paired = Vec::new();
        for (i, b) in variants.iter().enumerate() {
            for a in &variants[i + 1..] {
                for metric in Metric::ALL {
                    let diffs: Vec<f64> = a
                        .final_gains_by_episode(metric)
                        .into_iter()
                        .zip(b.final_gains_by_episode(metric))
                        .filter_map(|(x, y)| Some(x? - y?))
                        .collect();
                    if let Some(s) = summarize(&diffs) {
                        paired.push(PairedDiff {
                            a: a.variant,
                            b: b.variant,
                            metric,
                            n: s.n,
                            mean: s.mean,
                            se: s.se,
                        });
                    }
                }
            }
        }
        Ok(Report { variants, paired })
    }

    pub fn variant(&self, v: Variant) -> Option<&VariantReport> {
        self.variants.iter().find(|r| r.variant == v)
    }

    pub fn paired(&self, a: Variant, b: Variant, metric: Metric) -> Option<&PairedDiff> {
        self.paired
            .iter()
            .find(|p| p.a == a && p.b == b && p.metric == metric)
    }

    /// `report.csv` contents.
    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header = ["section", "variant", "metric", "step", "n", "mean", "q1", "median", "q3", "min", "max", "se"];
        w.write_record(header).expect("in-memory write");
        let num = |v: f64| v.to_string();
        let mut summary_row = |section: &str, variant: &str, metric: &str, step: String, s: &Summary| {
            w.write_record([
                section.to_string(),
                variant.to_string(),
                metric.to_string(),
                step,
                s.n.to_string(),
                num(s.mean),
                num(s.q1),
                num(s.median),
                num(s.q3),
                num(s.min),
                num(s.max),
                s.se.map(num).unwrap_or_default(),
            ])
            .expect("in-memory write");
        };
        for r in &self.variants {
            let name = r.variant.as_str();
            for (metric, curve) in &r.gains {
                for (t, s) in curve.iter().enumerate() {
                    if let Some(s) = s {
                        summary_row("gain", name, metric.as_str(), t.to_string(), s);
                    }
                }
            }
            for metric in Metric::ALL {
                if let Some(s) = r.final_gain(metric) {
                    let last = r.series[0].steps.len() - 1;
                    summary_row("final", name, metric.as_str(), last.to_string(), &s);
                }
            }
            if let Some(s) = &r.mitigation_all {
                summary_row("mitigation", name, "steps_all_episodes", String::new(), s);
            }
            if let Some(s) = &r.mitigation_congested {
                summary_row("mitigation", name, "steps_congested_episodes", String::new(), s);
            }
            if let Some(f) = r.mitigated_fraction {
                let s = Summary {
                    n: r.congested_episodes,
                    mean: f,
                    q1: f,
                    median: f,
                    q3: f,
                    min: f,
                    max: f,
                    se: None,
                };
                summary_row("mitigation", name, "mitigated_fraction", String::new(), &s);
            }
        }
        let mut rows = Vec::new();
        for p in &self.paired {
            rows.push([
                "paired".to_string(),
                format!("{}-{}", p.a.as_str(), p.b.as_str()),
                p.metric.as_str().to_string(),
                String::new(),
                p.n.to_string(),
                num(p.mean),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                p.se.map(num).unwrap_or_default(),
            ]);
        }
        drop(summary_row);
        for row in rows {
            w.write_record(row).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use retopt_core::kpi::KpiRecord;

    fn row(episode: usize, step: usize, cell: usize, gt: f64, cr: f64) -> TraceRow {
        let mut kpi = [0.0; 10];
        kpi[0] = gt;
        kpi[1] = cr;
        kpi[2] = gt;
        kpi[3] = gt;
        TraceRow {
            episode,
            seed: 100 + episode as u64,
            step,
            cell,
            electrical_tilt: 5.0,
            action: None,
            reward: None,
            state: None,
            kpi: KpiRecord::from_array(kpi),
            skipped_learning: false,
        }
    }

    #[test]
    fn quantiles_interpolate() {
        let s = summarize(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((s.q1, s.median, s.q3), (1.75, 2.5, 3.25));
        assert_eq!((s.min, s.max, s.mean), (1.0, 4.0, 2.5));
        let one = summarize(&[7.0]).unwrap();
        assert_eq!((one.q1, one.median, one.q3, one.se), (7.0, 7.0, 7.0, None));
        assert!(summarize(&[]).is_none());
    }

    #[test]
    fn two_traces_average_their_gains() {
        // Gains of 10% and 30% at the single step.
        let rows = vec![
            row(0, 0, 0, 0.5, 0.2),
            row(0, 1, 0, 0.55, 0.0),
            row(1, 0, 0, 0.5, 0.0),
            row(1, 1, 0, 0.65, 0.0),
        ];
        let r = Report::build(&[(Variant::Expert, rows)]).unwrap();
        let v = r.variant(Variant::Expert).unwrap();
        let g = v.final_gain(Metric::GoodTraffic).unwrap();
        assert!((g.mean - 20.0).abs() < 1e-12);
        let c = v.final_gain(Metric::Congestion).unwrap();
        assert_eq!((c.n, c.mean), (1, 100.0));
        assert_eq!(v.excluded[3], (Metric::Congestion, 1));
        assert_eq!(v.mitigation_all.unwrap().mean, 0.5);
        assert_eq!(v.mitigation_congested.unwrap().mean, 1.0);
        assert_eq!(v.mitigated_fraction, Some(1.0));
    }

    #[test]
    fn never_mitigated_is_censored() {
        let rows = vec![row(0, 0, 0, 0.5, 0.2), row(0, 1, 0, 0.5, 0.1), row(0, 2, 0, 0.5, 0.1)];
        let r = Report::build(&[(Variant::Rlin, rows)]).unwrap();
        let v = r.variant(Variant::Rlin).unwrap();
        assert_eq!(v.mitigation_congested.unwrap().mean, 3.0);
        assert_eq!(v.mitigated_fraction, Some(0.0));
    }

    #[test]
    fn network_value_is_the_mean_over_cells() {
        let rows = vec![
            row(0, 0, 0, 0.2, 0.0),
            row(0, 0, 1, 0.6, 0.1),
            row(0, 1, 0, 0.4, 0.0),
            row(0, 1, 1, 0.8, 0.0),
        ];
        let s = episode_series(&rows).unwrap();
        assert_eq!(s.len(), 1);
        assert!((s[0].steps[0].good_traffic - 0.4).abs() < 1e-15);
        assert!(!s[0].steps[0].congestion_free && s[0].steps[1].congestion_free);
        assert_eq!(s[0].steps_to_mitigation(), 1);
    }

    #[test]
    fn unpaired_or_malformed_traces_are_rejected() {
        let a = vec![row(0, 0, 0, 0.5, 0.0), row(0, 1, 0, 0.5, 0.0)];
        let b = vec![row(1, 0, 0, 0.5, 0.0), row(1, 1, 0, 0.5, 0.0)];
        assert!(Report::build(&[(Variant::Expert, a.clone()), (Variant::Rlin, b)]).is_err());
        assert!(episode_series(&[row(0, 1, 0, 0.5, 0.0)]).is_err());
        let split = vec![a[0].clone(), a[1].clone(), row(1, 0, 0, 0.5, 0.0), a[0].clone()];
        assert!(episode_series(&split).is_err());
    }

    #[test]
    fn paired_difference_matches_manual() {
        let es = vec![row(0, 0, 0, 0.5, 0.0), row(0, 1, 0, 0.5, 0.0), row(1, 0, 0, 0.5, 0.0), row(1, 1, 0, 0.6, 0.0)];
        let rl = vec![row(0, 0, 0, 0.5, 0.0), row(0, 1, 0, 0.6, 0.0), row(1, 0, 0, 0.5, 0.0), row(1, 1, 0, 0.8, 0.0)];
        let r = Report::build(&[(Variant::Expert, es), (Variant::Rlin, rl)]).unwrap();
        let p = r.paired(Variant::Rlin, Variant::Expert, Metric::GoodTraffic).unwrap();
        // Differences 20 and 40 percentage points.
        assert!((p.mean - 30.0).abs() < 1e-9);
        assert!((p.se.unwrap() - 10.0).abs() < 1e-9);
    }
}
