//! Coincidence-counting estimators computed from raw time-tag streams:
//! start–stop histograms over trial offsets, cross- and auto-correlation
//! functions, the heralded antibunching parameter, conditional retrieval
//! probabilities, the Cauchy–Schwarz parameter and time-windowed g², all
//! with first-order propagated Poissonian uncertainties.
//!
//! All estimators are pure functions of `(stream, windows)`; clicks are
//! counted at most once per window (threshold detection).

use crate::detection_sim::{Detector, TimeTagStream};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Coincidence-window geometry: a short gate around the write photon and a
/// wider gate around the (possibly delayed) read photon, plus the number of
/// later trials used for the accidental estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub write_center_us: f64,
    pub write_width_us: f64,
    pub read_center_us: f64,
    pub read_width_us: f64,
    pub n_accidental_peaks: u32,
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if self.write_width_us <= 0.0 || self.read_width_us <= 0.0 {
            return Err(Error::invalid("window widths", "must be > 0"));
        }
        if self.n_accidental_peaks < 1 {
            return Err(Error::invalid("n_accidental_peaks", "must be >= 1"));
        }
        Ok(())
    }

    pub fn write_lo(&self) -> f64 {
        self.write_center_us - self.write_width_us / 2.0
    }

    pub fn write_hi(&self) -> f64 {
        self.write_center_us + self.write_width_us / 2.0
    }

    pub fn read_lo(&self) -> f64 {
        self.read_center_us - self.read_width_us / 2.0
    }

    pub fn read_hi(&self) -> f64 {
        self.read_center_us + self.read_width_us / 2.0
    }

    /// Same windows with the read gate recentred (sliding-window g²).
    pub fn with_read_window(&self, center_us: f64, width_us: f64) -> WindowSpec {
        WindowSpec {
            read_center_us: center_us,
            read_width_us: width_us,
            ..self.clone()
        }
    }
}

/// Start–stop coincidence counts per trial offset. `peak_counts[0]` is the
/// same-trial peak; offsets `1..=n` estimate the accidental floor.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceHistogram {
    pub peak_counts: Vec<u64>,
    pub n_starts: u64,
}

impl CoincidenceHistogram {
    pub fn accidentals(&self) -> &[u64] {
        &self.peak_counts[1..]
    }

    pub fn mean_accidentals(&self) -> f64 {
        let acc = self.accidentals();
        acc.iter().sum::<u64>() as f64 / acc.len() as f64
    }
}

/// An estimator value with its one-standard-deviation Poissonian
/// uncertainty and the coincidence count it is based on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub value: f64,
    pub sigma: f64,
    pub n_coinc: u64,
}

/// Sorted deduplicated trial indices with at least one click of `det`
/// inside `[lo, hi]`.
fn trials_with_click(stream: &TimeTagStream, det: Detector, lo: f64, hi: f64) -> Vec<u64> {
    let mut trials: Vec<u64> = stream
        .tags
        .iter()
        .filter(|t| t.detector == det && t.t_us >= lo && t.t_us <= hi)
        .map(|t| t.trial)
        .collect();
    trials.dedup(); // stream is sorted by trial
    trials
}

/// Count pairs `(s, s + offset)` with `s` in `starts` and `s + offset` in
/// `stops` (both sorted).
fn offset_coincidences(starts: &[u64], stops: &[u64], offset: u64) -> u64 {
    let mut count = 0u64;
    let mut j = 0usize;
    for &s in starts {
        let target = s + offset;
        while j < stops.len() && stops[j] < target {
            j += 1;
        }
        if j < stops.len() && stops[j] == target {
            count += 1;
        }
    }
    count
}

fn intersection_count(a: &[u64], b: &[u64]) -> u64 {
    offset_coincidences(a, b, 0)
}

/// Build the start–stop histogram: peak `k` counts coincidences between a
/// start click in trial `i` (within the write window) and a stop click in
/// trial `i + k` (within the read window).
pub fn start_stop_histogram(
    stream: &TimeTagStream,
    w: &WindowSpec,
    start_det: Detector,
    stop_det: Detector,
) -> Result<CoincidenceHistogram> {
    w.validate()?;
    let starts = trials_with_click(stream, start_det, w.write_lo(), w.write_hi());
    let stops = trials_with_click(stream, stop_det, w.read_lo(), w.read_hi());
    let peak_counts = (0..=w.n_accidental_peaks as u64)
        .map(|k| offset_coincidences(&starts, &stops, k))
        .collect();
    Ok(CoincidenceHistogram {
        peak_counts,
        n_starts: starts.len() as u64,
    })
}

/// Histogram with both detectors gated by the same window (used for the
/// unheralded autocorrelation of a split mode).
fn same_window_histogram(
    stream: &TimeTagStream,
    lo: f64,
    hi: f64,
    n_peaks: u32,
    det_a: Detector,
    det_b: Detector,
) -> CoincidenceHistogram {
    let a = trials_with_click(stream, det_a, lo, hi);
    let b = trials_with_click(stream, det_b, lo, hi);
    let peak_counts = (0..=n_peaks as u64)
        .map(|k| offset_coincidences(&a, &b, k))
        .collect();
    CoincidenceHistogram {
        peak_counts,
        n_starts: a.len() as u64,
    }
}

/// Normalised second-order correlation from a coincidence histogram:
/// `g2 = C_0 / mean(C_1..C_n)`, with the uncertainty from first-order
/// propagation of the Poisson errors of the same-trial peak and of the
/// summed accidental counts.
pub fn g2_from_histogram(h: &CoincidenceHistogram) -> Result<CorrelationEstimate> {
    if h.peak_counts.len() < 2 {
        return Err(Error::InsufficientStatistics(
            "histogram needs at least one accidental peak".into(),
        ));
    }
    let c0 = h.peak_counts[0] as f64;
    let acc_sum: u64 = h.accidentals().iter().sum();
    if acc_sum == 0 {
        return Err(Error::InsufficientStatistics(
            "zero accidental coincidences".into(),
        ));
    }
    if c0 == 0.0 {
        return Err(Error::InsufficientStatistics(
            "zero same-trial coincidences".into(),
        ));
    }
    let value = c0 / h.mean_accidentals();
    let rel_var = 1.0 / c0 + 1.0 / acc_sum as f64;
    Ok(CorrelationEstimate {
        value,
        sigma: value * rel_var.sqrt(),
        n_coinc: h.peak_counts[0],
    })
}

/// Cross-correlation `g2` between a start and a stop detector.
pub fn cross_correlation(
    stream: &TimeTagStream,
    w: &WindowSpec,
    start_det: Detector,
    stop_det: Detector,
) -> Result<CorrelationEstimate> {
    g2_from_histogram(&start_stop_histogram(stream, w, start_det, stop_det)?)
}

/// Per-trial click probability of one detector inside a window, with a
/// binomial uncertainty.
pub fn singles_rate(
    stream: &TimeTagStream,
    det: Detector,
    window_lo_us: f64,
    window_hi_us: f64,
) -> Result<CorrelationEstimate> {
    if stream.trial_count == 0 {
        return Err(Error::InsufficientStatistics("empty stream".into()));
    }
    let clicked = trials_with_click(stream, det, window_lo_us, window_hi_us).len() as u64;
    let n = stream.trial_count as f64;
    let p = clicked as f64 / n;
    Ok(CorrelationEstimate {
        value: p,
        sigma: (p * (1.0 - p) / n).sqrt(),
        n_coinc: clicked,
    })
}

/// Conditional retrieval probability `p(stop|start)` — coincidences over
/// starts, with a binomial uncertainty.
pub fn conditional_retrieval(
    stream: &TimeTagStream,
    w: &WindowSpec,
    start_det: Detector,
    stop_det: Detector,
) -> Result<CorrelationEstimate> {
    w.validate()?;
    let starts = trials_with_click(stream, start_det, w.write_lo(), w.write_hi());
    if starts.is_empty() {
        return Err(Error::InsufficientStatistics("zero start clicks".into()));
    }
    let stops = trials_with_click(stream, stop_det, w.read_lo(), w.read_hi());
    let coinc = intersection_count(&starts, &stops);
    let n = starts.len() as f64;
    let p = coinc as f64 / n;
    Ok(CorrelationEstimate {
        value: p,
        sigma: (p * (1.0 - p) / n).sqrt(),
        n_coinc: coinc,
    })
}

/// Ratio of two conditional-retrieval estimates (e.g. storage efficiency
/// `eta_B = p(r|w) / p0(r|w)`), with independent error propagation.
pub fn retrieval_ratio(
    with_memory: &CorrelationEstimate,
    reference: &CorrelationEstimate,
) -> Result<CorrelationEstimate> {
    if reference.value <= 0.0 {
        return Err(Error::InsufficientStatistics(
            "reference retrieval probability is zero".into(),
        ));
    }
    let value = with_memory.value / reference.value;
    let rel = (with_memory.sigma / with_memory.value.max(f64::MIN_POSITIVE)).powi(2)
        + (reference.sigma / reference.value).powi(2);
    Ok(CorrelationEstimate {
        value,
        sigma: value * rel.sqrt(),
        n_coinc: with_memory.n_coinc,
    })
}

/// One-sided 68.27% Poisson upper limit on the mean for zero observed
/// counts: `-ln(1 - 0.6827)`.
const POISSON_ZERO_UPPER_68: f64 = 1.147_870_359_2;

/// Heralded antibunching parameter from an HBT stream:
/// `alpha = p(r3, r4 | w) / (p(r3|w) p(r4|w)) = C_34 N_w / (C_3 C_4)`.
///
/// Zero triple coincidences are reported as `alpha = 0` with a one-sided
/// 68% Poisson upper bound as the uncertainty.
pub fn antibunching_estimator(stream: &TimeTagStream, w: &WindowSpec) -> Result<CorrelationEstimate> {
    w.validate()?;
    let heralds = trials_with_click(stream, Detector::D1, w.write_lo(), w.write_hi());
    if heralds.is_empty() {
        return Err(Error::InsufficientStatistics("zero herald clicks".into()));
    }
    let d3 = trials_with_click(stream, Detector::D3, w.read_lo(), w.read_hi());
    let d4 = trials_with_click(stream, Detector::D4, w.read_lo(), w.read_hi());
    let c3 = intersection_count(&heralds, &d3);
    let c4 = intersection_count(&heralds, &d4);
    if c3 == 0 || c4 == 0 {
        return Err(Error::InsufficientStatistics(
            "no heralded singles on one HBT arm".into(),
        ));
    }
    let both: Vec<u64> = {
        let mut v = Vec::new();
        let mut j = 0usize;
        for &t in &d3 {
            while j < d4.len() && d4[j] < t {
                j += 1;
            }
            if j < d4.len() && d4[j] == t {
                v.push(t);
            }
        }
        v
    };
    let c34 = intersection_count(&heralds, &both);
    let n_w = heralds.len() as f64;
    let scale = n_w / (c3 as f64 * c4 as f64);
    if c34 == 0 {
        return Ok(CorrelationEstimate {
            value: 0.0,
            sigma: POISSON_ZERO_UPPER_68 * scale,
            n_coinc: 0,
        });
    }
    let value = c34 as f64 * scale;
    let rel_var = 1.0 / c34 as f64 + 1.0 / c3 as f64 + 1.0 / c4 as f64 + 1.0 / n_w;
    Ok(CorrelationEstimate {
        value,
        sigma: value * rel_var.sqrt(),
        n_coinc: c34,
    })
}

/// Unheralded autocorrelation of a split mode: same-trial coincidences of
/// the detector pair inside one window, normalised by the accidental floor
/// from offset trials. For a pure two-mode-squeezed marginal this tends to
/// 2; Poissonian background pulls it toward 1.
pub fn autocorrelation_estimator(
    stream: &TimeTagStream,
    dets: (Detector, Detector),
    window_center_us: f64,
    window_width_us: f64,
    n_accidental_peaks: u32,
) -> Result<CorrelationEstimate> {
    if window_width_us <= 0.0 {
        return Err(Error::invalid("window_width_us", "must be > 0"));
    }
    let lo = window_center_us - window_width_us / 2.0;
    let hi = window_center_us + window_width_us / 2.0;
    let h = same_window_histogram(stream, lo, hi, n_accidental_peaks, dets.0, dets.1);
    g2_from_histogram(&h)
}

/// Cauchy–Schwarz parameter `R = g2_wr^2 / (g2_ww g2_rr)`; classical fields
/// satisfy `R <= 1`.
pub fn cauchy_schwarz(
    g_wr: &CorrelationEstimate,
    g_ww: &CorrelationEstimate,
    g_rr: &CorrelationEstimate,
) -> Result<CorrelationEstimate> {
    if g_ww.value <= 0.0 || g_rr.value <= 0.0 {
        return Err(Error::invalid("g_ww/g_rr", "autocorrelations must be > 0"));
    }
    let value = g_wr.value * g_wr.value / (g_ww.value * g_rr.value);
    let rel_var = 4.0 * (g_wr.sigma / g_wr.value).powi(2)
        + (g_ww.sigma / g_ww.value).powi(2)
        + (g_rr.sigma / g_rr.value).powi(2);
    Ok(CorrelationEstimate {
        value,
        sigma: value * rel_var.sqrt(),
        n_coinc: g_wr.n_coinc,
    })
}

/// Cross-correlation restricted to a sliding stop window of `width_us`
/// centred at `t_w_us` (write gate unchanged).
pub fn windowed_g2(
    stream: &TimeTagStream,
    w: &WindowSpec,
    t_w_us: f64,
    width_us: f64,
    stop_det: Detector,
) -> Result<CorrelationEstimate> {
    let w2 = w.with_read_window(t_w_us, width_us);
    cross_correlation(stream, &w2, Detector::D1, stop_det)
}

/// One row of the estimator table written by the analysis pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRecord {
    pub quantity: String,
    pub estimate: CorrelationEstimate,
    pub scenario: String,
}

pub const ESTIMATE_CSV_HEADER: &str = "quantity,value,sigma,n_coinc,scenario";

/// Serialize estimator records with the fixed column order
/// `quantity,value,sigma,n_coinc,scenario`.
pub fn write_estimates_csv<W: Write>(records: &[EstimateRecord], mut w: W) -> Result<()> {
    writeln!(w, "{ESTIMATE_CSV_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{:.9e},{:.9e},{},{}",
            r.quantity, r.estimate.value, r.estimate.sigma, r.estimate.n_coinc, r.scenario
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection_sim::TimeTag;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn windows() -> WindowSpec {
        WindowSpec {
            write_center_us: 0.5,
            write_width_us: 0.06,
            read_center_us: 1.5,
            read_width_us: 0.6,
            n_accidental_peaks: 6,
        }
    }

    fn stream_from(tags: Vec<TimeTag>, trial_count: u64) -> TimeTagStream {
        TimeTagStream {
            tags,
            trial_count,
            trial_period_us: 10.0,
            seed: 0,
            scenario_id: "unit".into(),
        }
    }

    #[test]
    fn single_pair_lands_in_peak_zero() {
        let tags = vec![
            TimeTag {
                detector: Detector::D1,
                trial: 3,
                t_us: 0.5,
            },
            TimeTag {
                detector: Detector::D2,
                trial: 3,
                t_us: 1.5,
            },
        ];
        let h = start_stop_histogram(&stream_from(tags, 20), &windows(), Detector::D1, Detector::D2)
            .unwrap();
        assert_eq!(h.peak_counts[0], 1);
        assert!(h.accidentals().iter().all(|&c| c == 0));
        assert_eq!(h.n_starts, 1);
    }

    #[test]
    fn empty_stream_gives_zero_histogram() {
        let h = start_stop_histogram(&stream_from(vec![], 10), &windows(), Detector::D1, Detector::D2)
            .unwrap();
        assert!(h.peak_counts.iter().all(|&c| c == 0));
        assert_eq!(h.n_starts, 0);
    }

    #[test]
    fn independent_streams_have_flat_peaks() {
        // two independent Bernoulli click streams; chi-square over the
        // seven peaks must not reject flatness at the 1% level
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let n_trials = 200_000u64;
        let mut tags = Vec::new();
        for trial in 0..n_trials {
            if rng.gen::<f64>() < 0.02 {
                tags.push(TimeTag {
                    detector: Detector::D1,
                    trial,
                    t_us: 0.5,
                });
            }
            if rng.gen::<f64>() < 0.02 {
                tags.push(TimeTag {
                    detector: Detector::D2,
                    trial,
                    t_us: 1.5,
                });
            }
        }
        let h = start_stop_histogram(&stream_from(tags, n_trials), &windows(), Detector::D1, Detector::D2)
            .unwrap();
        let mean = h.peak_counts.iter().sum::<u64>() as f64 / h.peak_counts.len() as f64;
        let chi2: f64 = h
            .peak_counts
            .iter()
            .map(|&c| (c as f64 - mean).powi(2) / mean)
            .sum();
        // 1% critical value of chi-square with 6 dof
        assert!(chi2 < 16.81, "chi2 = {chi2}, peaks = {:?}", h.peak_counts);
        let g = g2_from_histogram(&h).unwrap();
        assert!(
            (g.value - 1.0).abs() < 4.0 * g.sigma,
            "uncorrelated g2 = {} ± {}",
            g.value,
            g.sigma
        );
    }

    #[test]
    fn g2_arithmetic_and_sigma() {
        let h = CoincidenceHistogram {
            peak_counts: vec![100, 10, 10, 10, 10, 10, 10],
            n_starts: 1000,
        };
        let g = g2_from_histogram(&h).unwrap();
        assert_relative_eq!(g.value, 10.0);
        // first-order propagation: g * sqrt(1/C0 + 1/sum(acc))
        assert_relative_eq!(g.sigma, 10.0 * (1.0f64 / 100.0 + 1.0 / 60.0).sqrt());
        let flat = CoincidenceHistogram {
            peak_counts: vec![10; 7],
            n_starts: 100,
        };
        assert_relative_eq!(g2_from_histogram(&flat).unwrap().value, 1.0);
        let empty = CoincidenceHistogram {
            peak_counts: vec![5, 0, 0, 0, 0, 0, 0],
            n_starts: 10,
        };
        assert!(matches!(
            g2_from_histogram(&empty),
            Err(Error::InsufficientStatistics(_))
        ));
    }

    #[test]
    fn conditional_retrieval_perfect_pairing() {
        let mut tags = Vec::new();
        for trial in 0..50 {
            tags.push(TimeTag {
                detector: Detector::D1,
                trial,
                t_us: 0.5,
            });
            tags.push(TimeTag {
                detector: Detector::D2,
                trial,
                t_us: 1.5,
            });
        }
        let est = conditional_retrieval(&stream_from(tags, 50), &windows(), Detector::D1, Detector::D2)
            .unwrap();
        assert_relative_eq!(est.value, 1.0);
        assert_eq!(est.n_coinc, 50);
        assert!(conditional_retrieval(
            &stream_from(vec![], 50),
            &windows(),
            Detector::D1,
            Detector::D2
        )
        .is_err());
    }

    #[test]
    fn conditional_retrieval_dark_floor() {
        // no read signal, only darks at rate 0.01: p(r|w) -> dark rate
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let mut tags = Vec::new();
        for trial in 0..100_000u64 {
            tags.push(TimeTag {
                detector: Detector::D1,
                trial,
                t_us: 0.5,
            });
            if rng.gen::<f64>() < 0.01 {
                tags.push(TimeTag {
                    detector: Detector::D2,
                    trial,
                    t_us: 1.5,
                });
            }
        }
        let est = conditional_retrieval(&stream_from(tags, 100_000), &windows(), Detector::D1, Detector::D2)
            .unwrap();
        assert!((est.value - 0.01).abs() < 4.0 * est.sigma);
    }

    #[test]
    fn antibunching_zero_counts_one_sided() {
        // heralds and singles but never a triple coincidence
        let mut tags = Vec::new();
        for trial in 0..1000u64 {
            tags.push(TimeTag {
                detector: Detector::D1,
                trial,
                t_us: 0.5,
            });
            let det = if trial % 2 == 0 {
                Detector::D3
            } else {
                Detector::D4
            };
            tags.push(TimeTag {
                detector: det,
                trial,
                t_us: 1.5,
            });
        }
        let est = antibunching_estimator(&stream_from(tags, 1000), &windows()).unwrap();
        assert_eq!(est.value, 0.0);
        assert_eq!(est.n_coinc, 0);
        let expected = 1.1478703592 * 1000.0 / (500.0 * 500.0);
        assert_relative_eq!(est.sigma, expected, max_relative = 1e-9);
    }

    #[test]
    fn antibunching_poissonian_light_is_one() {
        // independent Bernoulli clicks on D3/D4 given a herald: alpha = 1
        let mut rng = ChaCha12Rng::seed_from_u64(29);
        let mut tags = Vec::new();
        let n_trials = 400_000u64;
        for trial in 0..n_trials {
            tags.push(TimeTag {
                detector: Detector::D1,
                trial,
                t_us: 0.5,
            });
            if rng.gen::<f64>() < 0.03 {
                tags.push(TimeTag {
                    detector: Detector::D3,
                    trial,
                    t_us: 1.4,
                });
            }
            if rng.gen::<f64>() < 0.03 {
                tags.push(TimeTag {
                    detector: Detector::D4,
                    trial,
                    t_us: 1.6,
                });
            }
        }
        let est = antibunching_estimator(&stream_from(tags, n_trials), &windows()).unwrap();
        assert!(
            (est.value - 1.0).abs() < 4.0 * est.sigma,
            "alpha = {} ± {}",
            est.value,
            est.sigma
        );
    }

    /// Auto-correlation of a thermal split mode diluted by Poissonian
    /// background: g2 = 1 + (1-f)^2 for background fraction f per arm.
    #[test]
    fn autocorrelation_thermal_and_mixed() {
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        let n_trials = 500_000u64;
        let eta_arm = 0.06;
        let p: f64 = 0.3;
        let background = 0.012; // per arm, ~40% of the thermal arm rate
        let mut tags_pure = Vec::new();
        let mut tags_mixed = Vec::new();
        for trial in 0..n_trials {
            // geometric photon number, split binomially, thresholded
            let u: f64 = rng.gen();
            let n = if u == 0.0 {
                0
            } else {
                ((1.0 - u).ln() / p.ln()).floor() as u32
            };
            let mut hit3 = false;
            let mut hit4 = false;
            for _ in 0..n {
                if rng.gen::<f64>() < eta_arm {
                    if rng.gen::<bool>() {
                        hit3 = true;
                    } else {
                        hit4 = true;
                    }
                }
            }
            for (det, hit) in [(Detector::D3, hit3), (Detector::D4, hit4)] {
                if hit {
                    tags_pure.push(TimeTag {
                        detector: det,
                        trial,
                        t_us: 1.5,
                    });
                }
                if hit || rng.gen::<f64>() < background {
                    tags_mixed.push(TimeTag {
                        detector: det,
                        trial,
                        t_us: 1.5,
                    });
                }
            }
        }
        let g_pure = autocorrelation_estimator(
            &stream_from(tags_pure, n_trials),
            (Detector::D3, Detector::D4),
            1.5,
            0.6,
            6,
        )
        .unwrap();
        assert!(
            (g_pure.value - 2.0).abs() < 4.0 * g_pure.sigma,
            "thermal marginal g2 = {} ± {}",
            g_pure.value,
            g_pure.sigma
        );

        // measured background fraction per arm dilutes the bunching
        let thermal_rate = eta_arm / 2.0 * p / (1.0 - p);
        let f = background / (background + thermal_rate);
        let expected = 1.0 + (1.0 - f) * (1.0 - f);
        let g_mix = autocorrelation_estimator(
            &stream_from(tags_mixed, n_trials),
            (Detector::D3, Detector::D4),
            1.5,
            0.6,
            6,
        )
        .unwrap();
        assert!(
            (g_mix.value - expected).abs() < 4.0 * g_mix.sigma,
            "mixed g2 = {} ± {} vs {expected:.3} (f = {f:.3})",
            g_mix.value,
            g_mix.sigma
        );
        assert!(g_mix.value > 1.0 && g_mix.value < 2.0);
    }

    #[test]
    fn cauchy_schwarz_table_values() {
        let est = |value: f64, sigma: f64| CorrelationEstimate {
            value,
            sigma,
            n_coinc: 100,
        };
        // reference correlation triples reproduce the tabulated R within
        // input-rounding tolerance
        let r1 = cauchy_schwarz(&est(1.8, 0.2), &est(1.90, 0.02), &est(1.5, 0.3)).unwrap();
        assert!((r1.value - 1.2).abs() < 0.4, "R = {}", r1.value);
        let r2 = cauchy_schwarz(&est(3.7, 0.3), &est(1.97, 0.03), &est(1.6, 0.3)).unwrap();
        assert!((r2.value - 4.4).abs() < 0.4, "R = {}", r2.value);
        let r3 = cauchy_schwarz(&est(4.7, 0.5), &est(2.00, 0.06), &est(1.5, 0.5)).unwrap();
        assert!((r3.value - 7.7).abs() < 0.4, "R = {}", r3.value);
        // thermal pair at the classical boundary
        let rc = cauchy_schwarz(&est(2.0, 0.0), &est(2.0, 0.0), &est(2.0, 0.0)).unwrap();
        assert_relative_eq!(rc.value, 1.0);
        assert!(cauchy_schwarz(&est(2.0, 0.1), &est(0.0, 0.1), &est(1.0, 0.1)).is_err());
    }

    #[test]
    fn estimates_csv_format() {
        let records = vec![EstimateRecord {
            quantity: "g2_wr".into(),
            estimate: CorrelationEstimate {
                value: 10.0,
                sigma: 1.5,
                n_coinc: 100,
            },
            scenario: "unit".into(),
        }];
        let mut buf = Vec::new();
        write_estimates_csv(&records, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("quantity,value,sigma,n_coinc,scenario\n"));
        assert!(text.contains("g2_wr,1.000000000e1,1.500000000e0,100,unit\n"));
    }

    #[test]
    fn windowed_g2_uses_sliding_window() {
        // correlated pairs at t = 1.5, uncorrelated noise at t = 2.5
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let mut tags = Vec::new();
        let n_trials = 300_000u64;
        for trial in 0..n_trials {
            let w = rng.gen::<f64>() < 0.02;
            if w {
                tags.push(TimeTag {
                    detector: Detector::D1,
                    trial,
                    t_us: 0.5,
                });
            }
            if w && rng.gen::<f64>() < 0.3 {
                tags.push(TimeTag {
                    detector: Detector::D2,
                    trial,
                    t_us: 1.5,
                });
            } else if rng.gen::<f64>() < 0.006 {
                tags.push(TimeTag {
                    detector: Detector::D2,
                    trial,
                    t_us: 2.5,
                });
            }
        }
        let stream = stream_from(tags, n_trials);
        let w = windows();
        let g_sig = windowed_g2(&stream, &w, 1.5, 0.123, Detector::D2).unwrap();
        let g_noise = windowed_g2(&stream, &w, 2.5, 0.123, Detector::D2).unwrap();
        assert!(g_sig.value > 10.0, "signal window g2 = {}", g_sig.value);
        assert!(
            (g_noise.value - 1.0).abs() < 4.0 * g_noise.sigma,
            "noise window g2 = {} ± {}",
            g_noise.value,
            g_noise.sigma
        );
        // empty window
        assert!(matches!(
            windowed_g2(&stream, &w, 8.0, 0.123, Detector::D2),
            Err(Error::InsufficientStatistics(_))
        ));
    }

    #[test]
    fn permutation_breaks_no_correlation() {
        // uncorrelated stream: shuffling read trial indices must keep g2
        // consistent with 1
        let mut rng = ChaCha12Rng::seed_from_u64(37);
        let n_trials = 200_000u64;
        let mut tags = Vec::new();
        let mut read_trials = Vec::new();
        for trial in 0..n_trials {
            if rng.gen::<f64>() < 0.03 {
                tags.push(TimeTag {
                    detector: Detector::D1,
                    trial,
                    t_us: 0.5,
                });
            }
            if rng.gen::<f64>() < 0.03 {
                read_trials.push(trial);
            }
        }
        // Fisher-Yates on the read trial labels
        let mut shuffled = read_trials.clone();
        for i in (1..shuffled.len()).rev() {
            let j = rng.gen_range(0..=i);
            shuffled.swap(i, j);
        }
        for &trial in &shuffled {
            tags.push(TimeTag {
                detector: Detector::D2,
                trial,
                t_us: 1.5,
            });
        }
        tags.sort_by(|a, b| {
            a.trial
                .cmp(&b.trial)
                .then(a.t_us.total_cmp(&b.t_us))
                .then(a.detector.cmp(&b.detector))
        });
        let g = cross_correlation(&stream_from(tags, n_trials), &windows(), Detector::D1, Detector::D2)
            .unwrap();
        assert!(
            (g.value - 1.0).abs() < 4.0 * g.sigma,
            "shuffled g2 = {} ± {}",
            g.value,
            g.sigma
        );
    }
}
