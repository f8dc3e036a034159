//! Total-variation scans and the likelihood-ratio distinguisher scan.
//!
//! Two evaluation paths:
//! - exhaustive: for diagonal instances measured in the standard basis the
//!   outcome sequences are i.i.d. categorical, so the transcript
//!   distribution is enumerated exactly over count classes and
//!   d_TV(p0, p1) is summed directly (the alternative is averaged over
//!   ensemble draws, exactly for the classical family);
//! - estimator: d_TV = E_{p0}[(L - 1)_-] sampled over simulated null
//!   transcripts with the exact likelihood engines.
//!
//! d_TV is the half-L1 (event-supremum) distance throughout, so the
//! optimal-test success identity reads success = (1 + d_TV)/2.

use rand::RngExt;
use rayon::prelude::*;

use crate::ensembles::{sample_goe_star_truncated, TruncationPolicy};
use crate::error::{Error, Result};
use crate::likelihood::{EngineBudget, GoeLikelihoodContext};
use crate::measurement::{
    simulate_transcript, HaarBasisStrategy, KEigenbasisStrategy, StandardBasisStrategy, Strategy,
};
use crate::rng::derive_rng;
use crate::states::{DensityMatrix, DiagonalSpectrum};

use super::config::{fmt_f64, ExperimentConfig, FamilySpec, StrategySpec, Table};

/// Outcome-sequence budget for the exhaustive path: d^n <= 1e7.
const EXHAUSTIVE_BUDGET: f64 = 1e7;
/// Jackknife groups for the Monte-Carlo mixture stderr.
const JACKKNIFE_GROUPS: usize = 20;

pub(crate) fn make_strategy(
    spec: StrategySpec,
    d: usize,
    a: &DiagonalSpectrum,
    seed: u64,
    stream: u64,
) -> Box<dyn Strategy> {
    match spec {
        StrategySpec::Standard => Box::new(StandardBasisStrategy::new(d)),
        StrategySpec::Haar => Box::new(HaarBasisStrategy::new(d, derive_rng(seed, stream))),
        StrategySpec::KEigenbasis => Box::new(KEigenbasisStrategy::new(d, a.values().to_vec())),
    }
}

/// A diagonal point-vs-mixture task: null outcome probabilities and the
/// per-draw alternative probabilities with their mixture weights.
pub struct DiagonalTask {
    pub q0: Vec<f64>,
    /// Per-draw outcome probabilities; the mixture is uniform over draws
    /// (exact enumeration for the classical family, Monte-Carlo draws for
    /// the GOE family).
    pub alternatives: Vec<Vec<f64>>,
    /// True when the mixture is enumerated exactly rather than sampled.
    pub exact_mixture: bool,
}

/// All balanced sign patterns of the classical instance: floor(d/2) plus
/// and minus signs over the first 2 floor(d/2) slots, zero elsewhere.
pub(crate) fn classical_sign_patterns(d: usize) -> Vec<Vec<i8>> {
    let k = d / 2;
    let slots = 2 * k;
    let mut patterns = Vec::new();
    let mut current = vec![-1i8; slots];
    fn recurse(current: &mut Vec<i8>, start: usize, left: usize, out: &mut Vec<Vec<i8>>, d: usize) {
        if left == 0 {
            let mut p = current.clone();
            p.resize(d, 0);
            out.push(p);
            return;
        }
        for i in start..=(current.len() - left) {
            current[i] = 1;
            recurse(current, i + 1, left - 1, out, d);
            current[i] = -1;
        }
    }
    recurse(&mut current, 0, k, &mut patterns, d);
    patterns
}

/// Builds the diagonal task for the exhaustive path.
pub fn build_diagonal_task(config: &ExperimentConfig) -> Result<DiagonalTask> {
    let d = config.d;
    let a = DiagonalSpectrum::flat(d, 1.0);
    let q0: Vec<f64> = a.values().iter().map(|v| v / d as f64).collect();
    match config.family {
        FamilySpec::ClassicalPaninski => {
            let patterns = classical_sign_patterns(d);
            if patterns.len() > 1_000_000 {
                return Err(Error::BudgetExceeded {
                    what: "classical sign patterns",
                    requested: patterns.len(),
                    budget: 1_000_000,
                });
            }
            let alternatives = patterns
                .into_iter()
                .map(|p| {
                    p.iter()
                        .zip(a.values())
                        .map(|(&s, &ai)| (ai + config.eps * s as f64) / d as f64)
                        .collect()
                })
                .collect();
            Ok(DiagonalTask {
                q0,
                alternatives,
                exact_mixture: true,
            })
        }
        FamilySpec::Mixedness => {
            let policy = TruncationPolicy::goe_star();
            let draws = config.samples.max(1);
            let mut alternatives = Vec::with_capacity(draws);
            let mut rng = derive_rng(config.seed, 0x7ce0);
            for _ in 0..draws {
                let (m, _) = sample_goe_star_truncated(d, &policy, &mut rng)?;
                let q = (0..d)
                    .map(|i| (a.values()[i] + config.eps * m[(i, i)]) / d as f64)
                    .collect();
                alternatives.push(q);
            }
            Ok(DiagonalTask {
                q0,
                alternatives,
                exact_mixture: false,
            })
        }
        _ => Err(Error::InvalidParameter {
            name: "family",
            message: "exhaustive path supports mixedness and classical-paninski".to_string(),
        }),
    }
}

/// Exact transcript-level statistics at copy count n.
#[derive(Debug, Clone)]
pub struct ExhaustiveResult {
    pub tv: f64,
    /// Bayes success of the threshold test (declare H1 iff L* >= 1,
    /// ties split): identically (1 + tv) / 2.
    pub success: f64,
    /// Jackknife stderr of tv over draw groups (0 for exact mixtures).
    pub stderr: f64,
}

fn ln_factorial(n: usize) -> f64 {
    // lgamma via Stirling is overkill at desk scale; tabulate
    let mut acc = 0.0;
    for k in 2..=n {
        acc += (k as f64).ln();
    }
    acc
}

/// Enumerates count classes of n outcomes over d symbols and sums the
/// exact tv and test success.
pub fn exhaustive_tv(task: &DiagonalTask, n: usize) -> Result<ExhaustiveResult> {
    let d = task.q0.len();
    if (d as f64).powi(n as i32) > EXHAUSTIVE_BUDGET {
        return Err(Error::BudgetExceeded {
            what: "outcome sequences",
            requested: n,
            budget: EXHAUSTIVE_BUDGET as usize,
        });
    }
    let ln_fact_n = ln_factorial(n);
    let ln_fact: Vec<f64> = (0..=n).map(ln_factorial).collect();
    let groups = if task.exact_mixture {
        1
    } else {
        JACKKNIFE_GROUPS.min(task.alternatives.len())
    };
    let group_count: Vec<usize> = {
        let mut w = vec![0usize; groups];
        for s in 0..task.alternatives.len() {
            w[s * groups / task.alternatives.len()] += 1;
        }
        w
    };

    struct Enumerator<'a> {
        task: &'a DiagonalTask,
        ln_fact_n: f64,
        ln_fact: Vec<f64>,
        groups: usize,
        group_count: Vec<usize>,
        tv: f64,
        success: f64,
        // for the jackknife: sum over classes of |p0 - p1^{(-g)}| / 2
        tv_loo: Vec<f64>,
    }

    fn class_prob(q: &[f64], counts: &[usize], ln_mult: f64) -> f64 {
        let mut ln_p = ln_mult;
        for (&c, &p) in counts.iter().zip(q) {
            if c > 0 {
                if p <= 0.0 {
                    return 0.0;
                }
                ln_p += c as f64 * p.ln();
            }
        }
        ln_p.exp()
    }

    impl Enumerator<'_> {
        fn group_of(&self, s: usize) -> usize {
            s * self.groups / self.task.alternatives.len()
        }

        fn walk(&mut self, counts: &mut Vec<usize>, pos: usize, remaining: usize) {
            if pos + 1 == counts.len() {
                counts[pos] = remaining;
                self.visit(counts);
                return;
            }
            for c in 0..=remaining {
                counts[pos] = c;
                self.walk(counts, pos + 1, remaining - c);
            }
        }

        fn visit(&mut self, counts: &[usize]) {
            let ln_mult = self.ln_fact_n - counts.iter().map(|&c| self.ln_fact[c]).sum::<f64>();
            let p0 = class_prob(&self.task.q0, counts, ln_mult);
            // Welford means are exact for constant sequences, so an eps = 0
            // mixture reproduces p0 bitwise and the tv vanishes exactly
            let mut mean = 0.0f64;
            let mut group_mean = vec![0.0f64; self.groups];
            let mut group_seen = vec![0usize; self.groups];
            for (s, q) in self.task.alternatives.iter().enumerate() {
                let p = class_prob(q, counts, ln_mult);
                mean += (p - mean) / (s + 1) as f64;
                let g = self.group_of(s);
                group_seen[g] += 1;
                group_mean[g] += (p - group_mean[g]) / group_seen[g] as f64;
            }
            let p1 = mean;
            self.tv += 0.5 * (p0 - p1).abs();
            self.success += 0.5 * p0.max(p1);
            if self.groups > 1 {
                let total = self.task.alternatives.len() as f64;
                for (g, &gm) in group_mean.iter().enumerate() {
                    let rest = total - self.group_count[g] as f64;
                    let p1_loo = (total * p1 - self.group_count[g] as f64 * gm) / rest;
                    self.tv_loo[g] += 0.5 * (p0 - p1_loo).abs();
                }
            }
        }
    }

    let mut enumerator = Enumerator {
        task,
        ln_fact_n,
        ln_fact,
        groups,
        group_count,
        tv: 0.0,
        success: 0.0,
        tv_loo: vec![0.0; groups],
    };
    let mut counts = vec![0usize; d];
    enumerator.walk(&mut counts, 0, n);

    let stderr = if groups > 1 {
        let mean = enumerator.tv_loo.iter().sum::<f64>() / groups as f64;
        let var: f64 = enumerator
            .tv_loo
            .iter()
            .map(|v| (v - mean).powi(2))
            .sum::<f64>();
        ((groups as f64 - 1.0) / groups as f64 * var).sqrt()
    } else {
        0.0
    };
    Ok(ExhaustiveResult {
        tv: enumerator.tv,
        success: enumerator.success,
        stderr,
    })
}

/// Likelihood of a transcript of standard-basis outcome counts under the
/// classical instance mixture, exactly.
pub(crate) fn classical_exact_likelihood(counts: &[usize], eps: f64) -> f64 {
    let d = counts.len();
    let patterns = classical_sign_patterns(d);
    let mut acc = 0.0;
    // A = I_d: ratio per outcome i is 1 + eps s_i
    for p in &patterns {
        let mut v = 1.0;
        for (i, &c) in counts.iter().enumerate() {
            if c > 0 {
                v *= (1.0 + eps * p[i] as f64).powi(c as i32);
            }
        }
        acc += v;
    }
    acc / patterns.len() as f64
}

fn run_trials<T: Send>(
    trials: usize,
    single_thread: bool,
    f: impl Fn(usize) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    if single_thread {
        (0..trials).map(&f).collect()
    } else {
        (0..trials).into_par_iter().map(&f).collect()
    }
}

/// Estimator-path tv at one copy count: sample transcripts under p0 and
/// average (L - 1)_-; with the half-L1 convention no factor 2 applies.
fn estimator_tv(config: &ExperimentConfig, n: usize) -> Result<(f64, f64)> {
    let budget = EngineBudget::default();
    budget.check("copies (estimator path)", n, budget.exact_len)?;
    let d = config.d;
    let a = DiagonalSpectrum::flat(d, 1.0);
    let rho0 = DensityMatrix::maximally_mixed(d);
    let values = run_trials(config.trials, config.single_thread, |trial| {
        let stream = 0x9000_0000u64 + trial as u64;
        let mut rng = derive_rng(config.seed, stream);
        let mut strategy = make_strategy(config.strategy, d, &a, config.seed, stream ^ 0x5a5a);
        let transcript = simulate_transcript(strategy.as_mut(), &rho0, n, &mut rng)?;
        let l = match config.family {
            FamilySpec::Mixedness => {
                GoeLikelihoodContext::from_transcript(&transcript, &a, config.eps, &budget)?
                    .likelihood()
            }
            FamilySpec::ClassicalPaninski => {
                let mut counts = vec![0usize; d];
                for s in transcript.steps() {
                    counts[s.outcome_index] += 1;
                }
                classical_exact_likelihood(&counts, config.eps)
            }
            _ => {
                return Err(Error::InvalidParameter {
                    name: "family",
                    message: "estimator path supports mixedness and classical-paninski".to_string(),
                })
            }
        };
        Ok(-(l - 1.0).min(0.0))
    })?;
    let t = values.len() as f64;
    let mean = values.iter().sum::<f64>() / t;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1.0).max(1.0);
    Ok((mean, (var / t).sqrt()))
}

fn exhaustive_applicable(config: &ExperimentConfig, n: usize) -> bool {
    matches!(
        config.family,
        FamilySpec::Mixedness | FamilySpec::ClassicalPaninski
    ) && config.strategy == StrategySpec::Standard
        && (config.d as f64).powi(n as i32) <= EXHAUSTIVE_BUDGET
}

/// tv-scan: rows of (n, d_TV estimate, stderr, path).
pub fn cmd_tv_scan(config: &ExperimentConfig) -> Result<Table> {
    config.validate()?;
    let n_list: Vec<usize> = config
        .n_list
        .clone()
        .unwrap_or_else(|| (1..=config.n).collect());
    let mut table = Table::new("qcert.tv-scan.v1", &["n", "d_tv", "stderr", "path"]);
    let task = if n_list.iter().any(|&n| exhaustive_applicable(config, n)) {
        Some(build_diagonal_task(config)?)
    } else {
        None
    };
    for &n in &n_list {
        if exhaustive_applicable(config, n) {
            let r = exhaustive_tv(task.as_ref().unwrap(), n)?;
            table.push(vec![
                n.to_string(),
                fmt_f64(r.tv),
                fmt_f64(r.stderr),
                "exhaustive".to_string(),
            ]);
        } else {
            let (tv, se) = estimator_tv(config, n)?;
            table.push(vec![
                n.to_string(),
                fmt_f64(tv),
                fmt_f64(se),
                "estimator".to_string(),
            ]);
        }
    }
    Ok(table)
}

/// Per-dimension scan outcome.
#[derive(Debug, Clone)]
pub struct ScanPoint {
    pub d: usize,
    pub n_star: Option<usize>,
    pub success_at_n_star: Option<f64>,
    pub path: &'static str,
}

#[derive(Debug, Clone)]
pub struct ScanResult {
    pub points: Vec<ScanPoint>,
    /// Least-squares slope of log n* on log d over uncensored points.
    pub slope: Option<f64>,
    pub slope_stderr: Option<f64>,
}

/// Success of the likelihood-ratio test (declare the alternative iff
/// L >= 1, ties split by a fair coin) at every prefix length, from
/// simulated trials under both hypotheses.
fn trial_successes(config: &ExperimentConfig, d: usize, n_max: usize) -> Result<Vec<f64>> {
    let budget = EngineBudget::default();
    budget.check("copies (distinguisher scan)", n_max, budget.exact_len)?;
    let a = DiagonalSpectrum::flat(d, 1.0);
    let policy = TruncationPolicy::goe_star();
    // per trial: prefix likelihoods L_1..L_{n_max} and the hypothesis
    let per_trial = run_trials(config.trials, config.single_thread, |trial| {
        let stream = ((d as u64) << 40) ^ ((n_max as u64) << 24) ^ trial as u64;
        let mut rng = derive_rng(config.seed, stream);
        let is_alt = trial % 2 == 1;
        let rho = match (config.family, is_alt) {
            (_, false) => DensityMatrix::maximally_mixed(d),
            (FamilySpec::Mixedness, true) => {
                crate::ensembles::build_mixedness_instance(&a, config.eps, &policy, &mut rng)?
                    .alt_state
            }
            (FamilySpec::ClassicalPaninski, true) => {
                crate::ensembles::build_classical_paninski_instance(&a, config.eps, &mut rng)?
                    .alt_state
            }
            _ => {
                return Err(Error::InvalidParameter {
                    name: "family",
                    message: "distinguisher scan supports mixedness and classical-paninski"
                        .to_string(),
                })
            }
        };
        let mut strategy = make_strategy(config.strategy, d, &a, config.seed, stream ^ 0xa5a5);
        let transcript = simulate_transcript(strategy.as_mut(), &rho, n_max, &mut rng)?;
        let prefix_l: Vec<f64> = match config.family {
            FamilySpec::Mixedness => {
                let ctx =
                    GoeLikelihoodContext::from_transcript(&transcript, &a, config.eps, &budget)?;
                (1..=n_max)
                    .map(|t| ctx.subset_likelihood((1usize << t) - 1))
                    .collect()
            }
            FamilySpec::ClassicalPaninski => {
                let mut counts = vec![0usize; d];
                let mut out = Vec::with_capacity(n_max);
                for s in transcript.steps() {
                    counts[s.outcome_index] += 1;
                    out.push(classical_exact_likelihood(&counts, config.eps));
                }
                out
            }
            _ => unreachable!(),
        };
        // tie-break coin per prefix, from the trial stream
        let coins: Vec<bool> = (0..n_max)
            .map(|_| rng.random_range(0.0..1.0) < 0.5)
            .collect();
        Ok((is_alt, prefix_l, coins))
    })?;

    let mut successes = vec![0.0f64; n_max];
    let mut count0 = 0usize;
    let mut count1 = 0usize;
    let mut succ0 = vec![0.0f64; n_max];
    let mut succ1 = vec![0.0f64; n_max];
    for (is_alt, prefix_l, coins) in &per_trial {
        if *is_alt {
            count1 += 1;
        } else {
            count0 += 1;
        }
        for t in 0..n_max {
            let declare_alt = if (prefix_l[t] - 1.0).abs() <= 1e-15 {
                coins[t]
            } else {
                prefix_l[t] > 1.0
            };
            let correct = declare_alt == *is_alt;
            if correct {
                if *is_alt {
                    succ1[t] += 1.0;
                } else {
                    succ0[t] += 1.0;
                }
            }
        }
    }
    for t in 0..n_max {
        let r0 = if count0 > 0 {
            succ0[t] / count0 as f64
        } else {
            0.5
        };
        let r1 = if count1 > 0 {
            succ1[t] / count1 as f64
        } else {
            0.5
        };
        successes[t] = 0.5 * (r0 + r1);
    }
    Ok(successes)
}

/// distinguisher-scan: per dimension, the smallest n at which the
/// likelihood-ratio test reaches the success threshold; censored when no
/// n within budget does. The slope of log n* vs log d is fitted over
/// uncensored dimensions.
pub fn cmd_distinguisher_scan(config: &ExperimentConfig) -> Result<(Table, ScanResult)> {
    config.validate()?;
    let d_list = config.d_list.clone().unwrap_or_else(|| vec![config.d]);
    let n_max = config.n;
    let mut points = Vec::new();
    for &d in &d_list {
        let mut cfg = config.clone();
        cfg.d = d;
        let (successes, path): (Vec<f64>, &'static str) = if exhaustive_applicable(&cfg, n_max) {
            let task = build_diagonal_task(&cfg)?;
            let mut s = Vec::with_capacity(n_max);
            for n in 1..=n_max {
                s.push(exhaustive_tv(&task, n)?.success);
            }
            (s, "exhaustive")
        } else {
            (trial_successes(&cfg, d, n_max)?, "trials")
        };
        let hit = successes
            .iter()
            .position(|&s| s >= config.threshold - 1e-12);
        points.push(ScanPoint {
            d,
            n_star: hit.map(|i| i + 1),
            success_at_n_star: hit.map(|i| successes[i]),
            path,
        });
    }
    // least-squares fit of log n* on log d
    let fit: Vec<(f64, f64)> = points
        .iter()
        .filter_map(|p| p.n_star.map(|n| ((p.d as f64).ln(), (n as f64).ln())))
        .collect();
    let (slope, slope_stderr) = if fit.len() >= 2 {
        let m = fit.len() as f64;
        let mean_x = fit.iter().map(|(x, _)| x).sum::<f64>() / m;
        let mean_y = fit.iter().map(|(_, y)| y).sum::<f64>() / m;
        let sxx: f64 = fit.iter().map(|(x, _)| (x - mean_x).powi(2)).sum();
        let sxy: f64 = fit.iter().map(|(x, y)| (x - mean_x) * (y - mean_y)).sum();
        let b = sxy / sxx;
        let se = if fit.len() > 2 {
            let sse: f64 = fit
                .iter()
                .map(|(x, y)| (y - mean_y - b * (x - mean_x)).powi(2))
                .sum();
            (sse / (m - 2.0) / sxx).sqrt()
        } else {
            f64::NAN
        };
        (Some(b), Some(se))
    } else {
        (None, None)
    };

    let mut table = Table::new(
        "qcert.distinguisher-scan.v1",
        &[
            "kind",
            "d",
            "n_star",
            "censored",
            "success",
            "path",
            "slope",
            "slope_stderr",
        ],
    );
    for p in &points {
        table.push(vec![
            "point".to_string(),
            p.d.to_string(),
            p.n_star.map_or(String::new(), |n| n.to_string()),
            (p.n_star.is_none()).to_string(),
            p.success_at_n_star.map_or(String::new(), fmt_f64),
            p.path.to_string(),
            String::new(),
            String::new(),
        ]);
    }
    table.push(vec![
        "summary".to_string(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        slope.map_or("censored".to_string(), fmt_f64),
        slope_stderr.map_or(String::new(), fmt_f64),
    ]);
    Ok((
        table,
        ScanResult {
            points,
            slope,
            slope_stderr,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classical_config(d: usize, eps: f64) -> ExperimentConfig {
        ExperimentConfig {
            family: FamilySpec::ClassicalPaninski,
            d,
            eps,
            ..Default::default()
        }
    }

    #[test]
    fn sign_patterns_enumerate_balanced_assignments() {
        assert_eq!(classical_sign_patterns(2).len(), 2);
        assert_eq!(classical_sign_patterns(3).len(), 2);
        assert_eq!(classical_sign_patterns(4).len(), 6);
        for p in classical_sign_patterns(5) {
            assert_eq!(p.iter().filter(|&&s| s == 1).count(), 2);
            assert_eq!(p.iter().filter(|&&s| s == -1).count(), 2);
            assert_eq!(p[4], 0);
        }
    }

    #[test]
    fn exhaustive_tv_matches_bruteforce_oracle_d2_n3() {
        // independent per-sequence enumeration for the two-sided coin
        let eps = 0.3;
        let task = build_diagonal_task(&classical_config(2, eps)).unwrap();
        let n = 3;
        let result = exhaustive_tv(&task, n).unwrap();

        let mut tv = 0.0;
        for seq in 0..(1u32 << n) {
            let heads = seq.count_ones() as usize;
            let p0 = 0.5f64.powi(n as i32);
            let q_plus = (1.0 + eps) / 2.0;
            let q_minus = (1.0 - eps) / 2.0;
            let p1 = 0.5 * q_plus.powi(heads as i32) * q_minus.powi((n - heads) as i32)
                + 0.5 * q_minus.powi(heads as i32) * q_plus.powi((n - heads) as i32);
            tv += 0.5 * (p0 - p1).abs();
        }
        assert!(
            (result.tv - tv).abs() <= 1e-12 * tv.max(1.0),
            "exhaustive {} vs oracle {tv}",
            result.tv
        );
        assert_eq!(result.stderr, 0.0);
    }

    #[test]
    fn success_identity_holds_exactly() {
        for d in [2usize, 3] {
            let task = build_diagonal_task(&classical_config(d, 0.4)).unwrap();
            for n in 1..=6 {
                let r = exhaustive_tv(&task, n).unwrap();
                assert!(
                    (r.success - (1.0 + r.tv) / 2.0).abs() <= 1e-9,
                    "identity violated: success {} tv {}",
                    r.success,
                    r.tv
                );
            }
        }
    }

    #[test]
    fn zero_eps_gives_zero_tv_exactly() {
        let mut cfg = classical_config(2, 0.0);
        cfg.n = 5;
        let table = cmd_tv_scan(&cfg).unwrap();
        for row in &table.rows {
            assert_eq!(row[1], "0");
        }

        let mut cfg = ExperimentConfig {
            family: FamilySpec::Mixedness,
            d: 3,
            eps: 0.0,
            n: 4,
            samples: 50,
            ..Default::default()
        };
        cfg.n_list = Some(vec![2, 4]);
        let table = cmd_tv_scan(&cfg).unwrap();
        for row in &table.rows {
            assert_eq!(row[1], "0", "mixedness eps=0 row {:?}", row);
        }
    }

    #[test]
    fn tv_scan_monotone_in_n_for_classical() {
        let mut cfg = classical_config(2, 0.6);
        cfg.n = 8;
        let table = cmd_tv_scan(&cfg).unwrap();
        let tvs: Vec<f64> = table.rows.iter().map(|r| r[1].parse().unwrap()).collect();
        for w in tvs.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "tv must be nondecreasing: {tvs:?}");
        }
    }

    #[test]
    fn estimator_and_exhaustive_agree_for_classical() {
        // same instance, both paths; agreement within 3 stderr
        let mut cfg = classical_config(2, 0.5);
        cfg.n = 6;
        cfg.trials = 4000;
        cfg.seed = 1234;
        let task = build_diagonal_task(&cfg).unwrap();
        let exact = exhaustive_tv(&task, 6).unwrap().tv;
        let (est, se) = estimator_tv(&cfg, 6).unwrap();
        assert!(
            (est - exact).abs() <= 3.0 * se.max(1e-6),
            "estimator {est} +/- {se} vs exact {exact}"
        );
    }

    #[test]
    fn scan_detects_easy_classical_instance() {
        // large eps at d = 2 is distinguishable within a few copies
        let cfg = ExperimentConfig {
            family: FamilySpec::ClassicalPaninski,
            d: 2,
            eps: 0.9,
            n: 12,
            d_list: Some(vec![2]),
            ..Default::default()
        };
        let (_, result) = cmd_distinguisher_scan(&cfg).unwrap();
        let p = &result.points[0];
        assert_eq!(p.path, "exhaustive");
        assert!(p.n_star.is_some(), "n* should be found at eps = 0.9");
        assert!(p.success_at_n_star.unwrap() >= 2.0 / 3.0);
    }

    #[test]
    fn scan_censors_hard_instance() {
        // eps = 1/12 is far out of reach within the exact budget
        let cfg = ExperimentConfig {
            family: FamilySpec::ClassicalPaninski,
            d: 2,
            eps: 1.0 / 12.0,
            n: 10,
            d_list: Some(vec![2]),
            ..Default::default()
        };
        let (table, result) = cmd_distinguisher_scan(&cfg).unwrap();
        assert!(result.points[0].n_star.is_none());
        assert!(result.slope.is_none());
        let summary = table.rows.last().unwrap();
        assert_eq!(summary[6], "censored");
    }

    #[test]
    fn tv_scan_output_is_deterministic() {
        let mut cfg = ExperimentConfig {
            family: FamilySpec::Mixedness,
            d: 3,
            eps: 1.0 / 12.0,
            samples: 100,
            seed: 5,
            ..Default::default()
        };
        cfg.n_list = Some(vec![2, 3]);
        let a = cmd_tv_scan(&cfg).unwrap().to_csv();
        let b = cmd_tv_scan(&cfg).unwrap().to_csv();
        assert_eq!(a, b);
        // single-threaded mode must produce identical output
        cfg.single_thread = true;
        let c = cmd_tv_scan(&cfg).unwrap().to_csv();
        assert_eq!(a, c);
    }
}
