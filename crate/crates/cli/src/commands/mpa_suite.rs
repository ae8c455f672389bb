//! The battery of Monte Carlo checks behind `mpa-check`.

use std::fmt;
use std::io::Write;

use anchordt::mpatheory::{
    cdf_conjugate_of, count_fixed_points, finite_translations_check, permutation_fixed_measure_probe,
    pushforward_ks_check, random_nonidentity_permutation, KsCheck, reflection_mpa, MpaKind, MpaSpec,
    PermutedMpa,
};
use anchordt::rng::stream_rng;
use anyhow::{ensure, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, Normal, StandardNormal};
use statrs::distribution::{Exp as ExpLaw, Gamma as GammaLaw};

/// KS distance below which a map counts as preserving its law, at the
/// default sample size.
pub const KS_THRESHOLD: f64 = 0.01;

/// `KS_THRESHOLD`, raised to the 1% two-sample critical value when `n` is
/// too small for it to be meaningful.
pub fn ks_threshold(n: usize) -> f64 {
    KS_THRESHOLD.max(1.63 * (2.0 / n as f64).sqrt())
}
pub const FIXED_MEASURE_EPSILON: f64 = 1e-3;
pub const FIXED_MEASURE_THRESHOLD: f64 = 1e-3;
/// Shift used by the built-in negative control.
pub const CONTROL_SHIFT: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
    /// The map is the identity; neither a violation nor a nontrivial MPA.
    Identity,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Outcome::Pass => "pass",
            Outcome::Fail => "fail",
            Outcome::Identity => "identity",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteRow {
    pub check: String,
    pub statistic: f64,
    pub threshold: f64,
    pub outcome: Outcome,
    pub expected: Outcome,
}

impl SuiteRow {
    pub fn as_expected(&self) -> bool {
        self.outcome == self.expected
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub rows: Vec<SuiteRow>,
}

impl SuiteReport {
    pub fn all_as_expected(&self) -> bool {
        self.rows.iter().all(SuiteRow::as_expected)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "check,statistic,threshold,outcome,expected")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{:.16e},{:.16e},{},{}",
                r.check, r.statistic, r.threshold, r.outcome, r.expected
            )?;
        }
        Ok(())
    }
}

fn ks_row(check: String, ks: KsCheck, expected: Outcome) -> SuiteRow {
    let threshold = ks_threshold(ks.n);
    SuiteRow {
        check,
        statistic: ks.statistic,
        threshold,
        outcome: if ks.statistic < threshold { Outcome::Pass } else { Outcome::Fail },
        expected,
    }
}

fn fixed_point_row<M: Fn(f64) -> f64>(
    check: &str,
    map: M,
    interval: (f64, f64),
    expected: Outcome,
) -> Result<SuiteRow> {
    let report = count_fixed_points(map, interval, 20_001, 1e-10)?;
    let outcome = if report.identity {
        Outcome::Identity
    } else if report.count() == 1 {
        Outcome::Pass
    } else {
        Outcome::Fail
    };
    Ok(SuiteRow {
        check: check.into(),
        statistic: report.count() as f64,
        threshold: 1.0,
        outcome,
        expected,
    })
}

/// Runs every check with `samples` draws each. `inject_shift` adds a
/// translation presented as a candidate MPA, which must be caught.
pub fn run_suite(samples: usize, seed: u64, inject_shift: Option<f64>) -> Result<SuiteReport> {
    if let Some(c) = inject_shift {
        ensure!(c != 0.0 && c.is_finite(), "injected shift must be finite and nonzero, got {c}");
    }
    let (mu, sigma) = (0.5, 1.3);
    let normal = Normal::new(mu, sigma)?;
    let gaussian = move |r: &mut ChaCha8Rng| normal.sample(r);
    let exp = Exp::new(1.0)?;
    let exponential = move |r: &mut ChaCha8Rng| exp.sample(r);
    let gamma = Gamma::new(3.0, 0.5)?;
    let gamma_draw = move |r: &mut ChaCha8Rng| gamma.sample(r);
    let check_pts: Vec<f64> = (1..50).map(|i| 0.2 * i as f64).collect();
    let exp_conj = cdf_conjugate_of("exp(1)", ExpLaw::new(1.0)?, &check_pts, 1e-8)?;
    // statrs parametrizes by rate, rand_distr by scale
    let gamma_conj = cdf_conjugate_of("gamma(3,2)", GammaLaw::new(3.0, 2.0)?, &check_pts, 1e-6)?;

    let mut rows = Vec::new();
    let reflect = reflection_mpa(mu);
    rows.push(ks_row(
        format!("reflection about {mu} of normal({mu};{sigma}): pushforward"),
        pushforward_ks_check(gaussian, reflect, samples, seed)?,
        Outcome::Pass,
    ));
    rows.push(fixed_point_row(
        "reflection: fixed points",
        reflect,
        (mu - 6.0 * sigma, mu + 6.0 * sigma),
        Outcome::Pass,
    )?);
    {
        let m = exp_conj.clone();
        rows.push(ks_row(
            "cdf conjugate of exp(1): pushforward".into(),
            pushforward_ks_check(exponential, move |x| m.apply(x), samples, seed.wrapping_add(1))?,
            Outcome::Pass,
        ));
    }
    rows.push(fixed_point_row(
        "cdf conjugate of exp(1): fixed points",
        |x| exp_conj.apply(x),
        (1e-3, 15.0),
        Outcome::Pass,
    )?);
    {
        let m = gamma_conj.clone();
        rows.push(ks_row(
            "cdf conjugate of gamma(3;2): pushforward".into(),
            pushforward_ks_check(gamma_draw, move |x| m.apply(x), samples, seed.wrapping_add(2))?,
            Outcome::Pass,
        ));
    }
    rows.push(fixed_point_row(
        "cdf conjugate of gamma(3;2): fixed points",
        |x| gamma_conj.apply(x),
        (1e-2, 8.0),
        Outcome::Pass,
    )?);
    rows.push(ks_row(
        "identity: pushforward".into(),
        pushforward_ks_check(gaussian, |x| x, samples, seed.wrapping_add(3))?,
        Outcome::Pass,
    ));
    rows.push(fixed_point_row("identity: fixed points", |x| x, (-5.0, 5.0), Outcome::Identity)?);

    let dim = 4;
    let perm = random_nonidentity_permutation(dim, &mut stream_rng(seed, 9));
    let maps = (0..dim)
        .map(|_| MpaSpec::new(MpaKind::Reflection(0.0), (f64::NEG_INFINITY, f64::INFINITY)))
        .collect::<Result<Vec<_>, _>>()?;
    let pmpa = PermutedMpa::new(perm, maps)?;
    let fraction = permutation_fixed_measure_probe(
        &pmpa,
        |r: &mut ChaCha8Rng| (0..dim).map(|_| r.sample(StandardNormal)).collect(),
        samples,
        FIXED_MEASURE_EPSILON,
        seed.wrapping_add(4),
    )?;
    rows.push(SuiteRow {
        check: format!("permuted reflection in {dim}d: fixed fraction at eps {FIXED_MEASURE_EPSILON}"),
        statistic: fraction,
        threshold: FIXED_MEASURE_THRESHOLD,
        outcome: if fraction <= FIXED_MEASURE_THRESHOLD { Outcome::Pass } else { Outcome::Fail },
        expected: Outcome::Pass,
    });

    let transports = finite_translations_check(gaussian, exponential, samples, seed.wrapping_add(5))?;
    rows.push(SuiteRow {
        check: "normal to exp(1): both monotone transports match".into(),
        statistic: transports.ks_increasing.max(transports.ks_decreasing),
        threshold: transports.threshold,
        outcome: if transports.both_transport() { Outcome::Pass } else { Outcome::Fail },
        expected: Outcome::Pass,
    });
    rows.push(SuiteRow {
        check: "normal to exp(1): transports cross once".into(),
        statistic: transports.crossings.len() as f64,
        threshold: 1.0,
        outcome: if transports.crossings.len() == 1 { Outcome::Pass } else { Outcome::Fail },
        expected: Outcome::Pass,
    });

    rows.push(ks_row(
        format!("shift by {CONTROL_SHIFT} (negative control): pushforward"),
        pushforward_ks_check(gaussian, |x| x + CONTROL_SHIFT, samples, seed.wrapping_add(6))?,
        Outcome::Fail,
    ));
    if let Some(c) = inject_shift {
        rows.push(ks_row(
            format!("injected shift by {c}: pushforward"),
            pushforward_ks_check(gaussian, move |x| x + c, samples, seed.wrapping_add(7))?,
            Outcome::Fail,
        ));
    }
    Ok(SuiteReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_behaves() {
        let report = run_suite(20_000, 3, Some(0.5)).unwrap();
        for r in &report.rows {
            if r.check.starts_with("identity: fixed") {
                assert_eq!(r.outcome, Outcome::Identity);
            }
        }
        let injected = report.rows.last().unwrap();
        assert!(injected.check.starts_with("injected"));
        assert_eq!(injected.outcome, Outcome::Fail);
        assert!(injected.as_expected());
    }

    #[test]
    fn threshold_is_fixed_at_large_samples() {
        assert_eq!(ks_threshold(100_000), KS_THRESHOLD);
        assert!(ks_threshold(1000) > 0.05);
    }

    #[test]
    fn zero_shift_rejected() {
        assert!(run_suite(20_000, 0, Some(0.0)).is_err());
    }

    #[test]
    fn csv_has_one_line_per_row() {
        let report = SuiteReport {
            rows: vec![ks_row("a".into(), KsCheck { statistic: 0.5, n: 100_000 }, Outcome::Fail)],
        };
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.ends_with(",fail,fail\n"));
    }
}
