//! Quantitative assertions for the built-in scenarios, used both by the
//! command line `--check` flag and the acceptance test suite. Every
//! tolerance is pinned here.

use std::collections::BTreeSet;

use crate::engine::{run_scenario, FittEventKind, RunOutcome};
use crate::fitt::Limit;
use crate::metrics::Metric;
use crate::name::Name;
use crate::packet::Rsn;
use crate::scenario::{
    builtin, granularity_baseline, i1_resilience_with_universe, two_prefix_control, ConfigError,
    SECOND_PREFIX, SIDE_SERVICE_PREFIX, TARGET_PREFIX,
};

#[derive(Clone, Debug)]
pub struct Check {
    pub label: String,
    pub pass: bool,
    pub detail: String,
}

fn check(label: impl Into<String>, pass: bool, detail: impl Into<String>) -> Check {
    Check {
        label: label.into(),
        pass,
        detail: detail.into(),
    }
}

pub fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.pass)
}

pub fn render(checks: &[Check]) -> String {
    let mut out = String::new();
    for c in checks {
        out.push_str(if c.pass { "[PASS] " } else { "[FAIL] " });
        out.push_str(&c.label);
        if !c.detail.is_empty() {
            out.push_str(" — ");
            out.push_str(&c.detail);
        }
        out.push('\n');
    }
    out
}

/// Mean over the bins fully contained in [t0, t1).
fn window_mean(series: &[f64], bin: f64, t0: f64, t1: f64) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (b, v) in series.iter().enumerate() {
        let start = b as f64 * bin;
        if start >= t0 && start + bin <= t1 {
            sum += v;
            count += 1;
        }
    }
    (count > 0).then(|| sum / count as f64)
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Parameters for the valid-overload convergence bundle (the reinforcement
/// criterion), reused by the multi-prefix scenario.
struct Convergence<'a> {
    tag: &'a str,
    pref: Name,
    producer: &'a str,
    attack_start: f64,
    expected_attacker_faces: usize,
    legit_rate: f64,
    /// Whether attacker-origin received traffic itself shows the halving
    /// staircase (false when a concurrent fake reaction already blocks it).
    expect_received_steps: bool,
}

fn check_convergence(out: &RunOutcome, p: &Convergence) -> Vec<Check> {
    let mut checks = Vec::new();
    let pref_text = p.pref.to_string();
    let tag = p.tag;

    let install = out.first_install(&p.pref);
    checks.push(check(
        format!("{tag}: pushback installs throttles"),
        install.is_some(),
        format!("first install at {install:?}"),
    ));
    let Some(install) = install else {
        return checks;
    };

    let rlt = out.rate_limit_timer;
    if p.expect_received_steps {
        let attack_recv = add(
            &out.series(p.producer, &pref_text, Metric::ReceivedAttackValid),
            &out.series(p.producer, &pref_text, Metric::ReceivedAttackFake),
        );
        let mut means = Vec::new();
        let mut k = 0;
        loop {
            let t0 = install + k as f64 * rlt;
            let t1 = t0 + rlt;
            if t1 > out.duration {
                break;
            }
            match window_mean(&attack_recv, out.bin, t0, t1) {
                Some(m) => means.push(m),
                None => break,
            }
            k += 1;
        }
        let ratios: Vec<f64> = means
            .windows(2)
            .take_while(|w| w[0] > 1.0)
            .map(|w| w[1] / w[0])
            .collect();
        let first_three_halve = ratios.len() >= 3
            && ratios[..3].iter().all(|r| (0.35..=0.65).contains(r));
        checks.push(check(
            format!("{tag}: attacker-origin received halves each {rlt:.0}s window"),
            first_three_halve,
            format!("window means {means:?}"),
        ));
        let monotone = means.windows(2).all(|w| w[1] <= w[0] * 1.05);
        let silenced = means.last().is_some_and(|m| *m <= 5.0);
        checks.push(check(
            format!("{tag}: attacker traffic decays to zero"),
            monotone && silenced,
            format!("final window mean {:?}", means.last()),
        ));
    }

    // Every attacker face must be blocked by
    //   attack_start + rlt * (ceil(log2(initial limit)) + 1).
    let attacker_faces = out.attacker_faces(&p.pref);
    checks.push(check(
        format!("{tag}: attacker face census"),
        attacker_faces.len() == p.expected_attacker_faces,
        format!(
            "found {} attacker faces, expected {}",
            attacker_faces.len(),
            p.expected_attacker_faces
        ),
    ));
    let limits = out.initial_limits(&p.pref);
    let blocked_times = out.blacklist_times(&p.pref);
    let mut all_blocked = true;
    let mut detail = String::new();
    for face in &attacker_faces {
        let l0 = limits.get(face).copied();
        let blocked_at = blocked_times.get(face).copied();
        let ok = match (l0, blocked_at) {
            (Some(l0), Some(t)) => {
                let bound = p.attack_start + rlt * (l0.log2().ceil() + 1.0);
                t <= bound
            }
            _ => false,
        };
        if !ok && all_blocked {
            all_blocked = false;
            detail = format!(
                "face {:?}/{} limit {l0:?} blocked at {blocked_at:?}",
                out.name(face.0),
                face.1
            );
        }
    }
    checks.push(check(
        format!("{tag}: every attacker face blacklisted within the halving bound"),
        all_blocked && !attacker_faces.is_empty(),
        if detail.is_empty() {
            format!("{} faces blocked", blocked_times.len())
        } else {
            detail
        },
    ));

    // Legitimate clients return to their configured rate once released.
    let legit = out.legit_clients(&p.pref);
    let n_bins = out.metrics.n_bins();
    let mut all_recovered = true;
    let mut legit_detail = String::new();
    for node in &legit {
        let sent = out.series(out.name(*node), &pref_text, Metric::Sent);
        let tail = &sent[n_bins.saturating_sub(3)..];
        let mean = tail.iter().sum::<f64>() / tail.len().max(1) as f64;
        if !(p.legit_rate * 0.9..=p.legit_rate * 1.1).contains(&mean) {
            all_recovered = false;
            legit_detail = format!("{} tail mean {mean:.1}/s", out.name(*node));
            break;
        }
    }
    checks.push(check(
        format!("{tag}: legitimate clients return to {:.0}/s", p.legit_rate),
        all_recovered && !legit.is_empty(),
        legit_detail,
    ));

    // Throttled legitimate faces must have been released, not blacklisted.
    let legit_nodes: BTreeSet<_> = legit.iter().copied().collect();
    let legit_faces: BTreeSet<_> = out
        .faces
        .iter()
        .filter(|f| legit_nodes.contains(&f.neighbor))
        .map(|f| (f.node, f.face))
        .collect();
    let released = out.released_faces(&p.pref);
    let throttled_legit: Vec<_> = legit_faces
        .iter()
        .filter(|f| limits.contains_key(f))
        .collect();
    let all_released = throttled_legit.iter().all(|f| released.contains(f));
    checks.push(check(
        format!("{tag}: throttled legitimate faces are released"),
        all_released,
        format!(
            "{} of {} throttled legit faces released",
            throttled_legit.iter().filter(|f| released.contains(f)).count(),
            throttled_legit.len()
        ),
    ));

    let share = out.series(p.producer, &pref_text, Metric::LegitShare);
    let final_share = *share.last().unwrap_or(&0.0);
    checks.push(check(
        format!("{tag}: final legitimate share >= 0.99"),
        final_share >= 0.99,
        format!("final bin share {final_share:.4}"),
    ));
    checks
}

/// Fake-flood suppression: the victim's received rate collapses onto the
/// legitimate load within two seconds of the first report, and from t=8s
/// at least 99% of what arrives is legitimate.
pub fn check_fake_attack(out: &RunOutcome) -> Vec<Check> {
    let pref = Name::parse(TARGET_PREFIX).unwrap();
    let mut checks = Vec::new();

    let t_nack = out.first_nack(&pref, Rsn::Fake);
    checks.push(check(
        "fake: victim reports the fake flood",
        t_nack.is_some(),
        format!("first report at {t_nack:?}"),
    ));
    let Some(t_nack) = t_nack else { return checks };

    let received = out.series("srv0", TARGET_PREFIX, Metric::Received);
    let deadline = t_nack + 2.0;
    let first_bin = (deadline / out.bin).ceil() as usize;
    let legit_level = 480.0;
    let out_of_band = received
        .iter()
        .enumerate()
        .skip(first_bin)
        .find(|(_, v)| (**v - legit_level).abs() > legit_level * 0.10);
    checks.push(check(
        format!("fake: received within 10% of 480/s from t={deadline:.1}s"),
        out_of_band.is_none(),
        match out_of_band {
            Some((b, v)) => format!("bin {b} rate {v:.0}/s outside [432, 528]"),
            None => format!("bins {first_bin}.. all inside [432, 528]"),
        },
    ));

    let share = out.series("srv0", TARGET_PREFIX, Metric::LegitShare);
    let bad_share = share
        .iter()
        .enumerate()
        .filter(|(b, _)| *b as f64 * out.bin >= 8.0)
        .find(|(_, s)| **s < 0.99);
    checks.push(check(
        "fake: legit share >= 0.99 for every bin after t=8s",
        bad_share.is_none(),
        match bad_share {
            Some((b, s)) => format!("bin {b} share {s:.4}"),
            None => "all bins at or above 0.99".to_string(),
        },
    ));
    checks
}

/// Valid-overload reinforcement: halving staircase, complete blacklisting
/// within the bound, legitimate recovery, and a clean final share.
pub fn check_valid_attack(out: &RunOutcome) -> Vec<Check> {
    check_convergence(
        out,
        &Convergence {
            tag: "valid",
            pref: Name::parse(TARGET_PREFIX).unwrap(),
            producer: "srv0",
            attack_start: 3.0,
            expected_attacker_faces: 60,
            legit_rate: 40.0,
            expect_received_steps: true,
        },
    )
}

/// Mixed attack: the fake reaction blocks attacker faces outright (the
/// minimum of the fake and valid limits), while the valid reaction still
/// runs its reinforcement to the blacklist and the legit clients recover.
pub fn check_mixed_attack(out: &RunOutcome) -> Vec<Check> {
    let pref = Name::parse(TARGET_PREFIX).unwrap();
    let mut checks = Vec::new();

    let t_fake = out.first_nack(&pref, Rsn::Fake);
    let t_valid = out.first_nack(&pref, Rsn::Valid);
    checks.push(check(
        "mixed: both reactions trigger",
        t_fake.is_some() && t_valid.is_some(),
        format!("fake at {t_fake:?}, valid at {t_valid:?}"),
    ));
    let Some(t_fake) = t_fake else { return checks };

    // Some attacker face must hold a blocked fake throttle and a finite
    // valid throttle at once; admission takes the minimum, i.e. zero.
    let attacker_faces: BTreeSet<_> = out.attacker_faces(&pref).into_iter().collect();
    let fake_blocked: BTreeSet<_> = out
        .log
        .iter()
        .filter(|e| {
            e.pref == pref
                && e.rsn == Rsn::Fake
                && matches!(e.kind, FittEventKind::Install { limit: Limit::Blocked })
        })
        .filter_map(|e| e.face.map(|f| (e.node, f)))
        .collect();
    let valid_limited: BTreeSet<_> = out
        .log
        .iter()
        .filter(|e| {
            e.pref == pref
                && e.rsn == Rsn::Valid
                && matches!(e.kind, FittEventKind::Install { limit: Limit::Finite(_) })
        })
        .filter_map(|e| e.face.map(|f| (e.node, f)))
        .collect();
    let both = attacker_faces
        .iter()
        .filter(|f| fake_blocked.contains(f) && valid_limited.contains(f))
        .count();
    checks.push(check(
        "mixed: attacker faces carry both throttles, effective limit min = 0",
        both == attacker_faces.len() && !attacker_faces.is_empty(),
        format!("{both}/{} faces hold both", attacker_faces.len()),
    ));

    // Fake-stream admission is zero immediately after the first report.
    let quiet_from = ((t_fake / out.bin).floor() + 2.0) as usize;
    let fake_recv = out.series("srv0", TARGET_PREFIX, Metric::ReceivedAttackFake);
    let valid_recv = out.series("srv0", TARGET_PREFIX, Metric::ReceivedAttackValid);
    let leak_fake = fake_recv.iter().skip(quiet_from).any(|v| *v > 0.0);
    checks.push(check(
        format!("mixed: fake streams silenced from bin {quiet_from}"),
        !leak_fake,
        format!(
            "max post-reaction fake rate {:.2}/s",
            fake_recv
                .iter()
                .skip(quiet_from)
                .fold(0.0f64, |a, b| a.max(*b))
        ),
    ));
    let leak_valid = valid_recv.iter().skip(quiet_from).any(|v| *v > 0.5);
    checks.push(check(
        "mixed: attacker valid streams blocked by the fake reaction too",
        !leak_valid,
        format!(
            "max post-reaction attacker-valid rate {:.2}/s",
            valid_recv
                .iter()
                .skip(quiet_from)
                .fold(0.0f64, |a, b| a.max(*b))
        ),
    ));

    checks.extend(check_convergence(
        out,
        &Convergence {
            tag: "mixed",
            pref,
            producer: "srv0",
            attack_start: 3.0,
            expected_attacker_faces: 60,
            legit_rate: 40.0,
            expect_received_steps: false,
        },
    ));
    checks
}

/// Resilience ordinals with a 5% separation margin: aggregation alone keeps
/// the victim below the offered attack rate, caching lowers it further, and
/// a larger name universe weakens both effects.
pub fn check_i1_resilience(
    no_cache: &RunOutcome,
    cache: &RunOutcome,
    cache_big: &RunOutcome,
) -> Vec<Check> {
    let mut checks = Vec::new();
    let (t0, t1) = (8.0, no_cache.duration - 1.0);
    let mean_recv = |out: &RunOutcome| {
        window_mean(
            &out.series("srv0", TARGET_PREFIX, Metric::Received),
            out.bin,
            t0,
            t1,
        )
        .unwrap_or(f64::NAN)
    };
    let sent = no_cache
        .metrics
        .sum_series(Metric::Sent, |n| n.starts_with("atk"));
    let attack_rate = window_mean(&sent, no_cache.bin, t0, t1).unwrap_or(f64::NAN);

    let recv_nc = mean_recv(no_cache);
    let recv_cs = mean_recv(cache);
    let recv_big = mean_recv(cache_big);

    checks.push(check(
        "i1: aggregation alone keeps received below 95% of offered",
        recv_nc <= attack_rate * 0.95,
        format!("received {recv_nc:.0}/s vs offered {attack_rate:.0}/s"),
    ));
    checks.push(check(
        "i1: adding a 200-entry cache lowers received by >= 5%",
        recv_cs <= recv_nc * 0.95,
        format!("cache {recv_cs:.0}/s vs no cache {recv_nc:.0}/s"),
    ));
    checks.push(check(
        "i1: universe 1000 receives >= 5% more than universe 500",
        recv_big >= recv_cs * 1.05,
        format!("universe 1000 {recv_big:.0}/s vs 500 {recv_cs:.0}/s"),
    ));
    checks
}

/// Two victims, two reactions: each converges like the single-victim case
/// and neither perturbs the other's legitimate share by more than one
/// percentage point against its single-attack control run.
pub fn check_two_prefix(
    dual: &RunOutcome,
    ctrl_p: &RunOutcome,
    ctrl_q: &RunOutcome,
) -> Vec<Check> {
    let mut checks = Vec::new();
    checks.extend(check_convergence(
        dual,
        &Convergence {
            tag: "two_prefix/P",
            pref: Name::parse(TARGET_PREFIX).unwrap(),
            producer: "srv0",
            attack_start: 2.0,
            expected_attacker_faces: 30,
            legit_rate: 40.0,
            expect_received_steps: true,
        },
    ));
    checks.extend(check_convergence(
        dual,
        &Convergence {
            tag: "two_prefix/Q",
            pref: Name::parse(SECOND_PREFIX).unwrap(),
            producer: "srv1",
            attack_start: 4.0,
            expected_attacker_faces: 30,
            legit_rate: 40.0,
            expect_received_steps: true,
        },
    ));

    for (tag, producer, pref, ctrl) in [
        ("P", "srv0", TARGET_PREFIX, ctrl_p),
        ("Q", "srv1", SECOND_PREFIX, ctrl_q),
    ] {
        let dual_share = dual.series(producer, pref, Metric::LegitShare);
        let ctrl_share = ctrl.series(producer, pref, Metric::LegitShare);
        let worst = dual_share
            .iter()
            .zip(&ctrl_share)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        checks.push(check(
            format!("two_prefix/{tag}: share perturbation vs control <= 1pp"),
            worst <= 0.01,
            format!("max per-bin deviation {worst:.5}"),
        ));
    }
    checks
}

/// Throttling granularity: the attacked prefix is squelched while the same
/// clients' traffic to the side service stays within 5% of its no-attack
/// baseline in every bin.
pub fn check_granularity(dual: &RunOutcome, baseline: &RunOutcome) -> Vec<Check> {
    let mut checks = Vec::new();
    let pref = Name::parse(TARGET_PREFIX).unwrap();

    let t_fake = dual.first_nack(&pref, Rsn::Fake);
    checks.push(check(
        "granularity: attack on the target prefix triggers a reaction",
        t_fake.is_some(),
        format!("first report at {t_fake:?}"),
    ));
    if let Some(t_fake) = t_fake {
        let quiet_from = ((t_fake / dual.bin).floor() + 2.0) as usize;
        let fake_recv = dual.series("srv0", TARGET_PREFIX, Metric::ReceivedAttackFake);
        let leak = fake_recv.iter().skip(quiet_from).any(|v| *v > 0.0);
        checks.push(check(
            "granularity: attack traffic is squelched",
            !leak,
            format!("post-reaction fake leak from bin {quiet_from}: {leak}"),
        ));
    }

    let base = baseline.series("srv1", SIDE_SERVICE_PREFIX, Metric::Received);
    let dual_recv = dual.series("srv1", SIDE_SERVICE_PREFIX, Metric::Received);
    let mut worst: Option<(usize, f64, f64)> = None;
    for (b, (d, base_v)) in dual_recv.iter().zip(&base).enumerate() {
        if *base_v <= 0.0 {
            continue;
        }
        let dev = (d - base_v).abs() / base_v;
        if worst.is_none_or(|(_, _, w)| dev > w) {
            worst = Some((b, *d, dev));
        }
    }
    let max_dev = worst.map(|(_, _, d)| d).unwrap_or(1.0);
    checks.push(check(
        "granularity: side-service received within 5% of baseline in every bin",
        max_dev <= 0.05 && base.iter().skip(1).all(|v| *v > 0.0),
        format!("max per-bin deviation {:.3}%", max_dev * 100.0),
    ));
    checks
}

/// Runs everything a built-in scenario's verdict needs (including control
/// and variant runs, all at the same seed) and returns the assertion list.
pub fn run_builtin_checks(name: &str, seed: Option<u64>) -> Result<Vec<Check>, ConfigError> {
    let mut cfg = builtin(name)
        .ok_or_else(|| ConfigError::new("scenario", format!("unknown builtin {name:?}")))?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let seeded = |mut variant: crate::scenario::ScenarioConfig| {
        variant.seed = cfg.seed;
        variant
    };
    match name {
        "fake_attack" => Ok(check_fake_attack(&run_scenario(&cfg)?)),
        "valid_attack" => Ok(check_valid_attack(&run_scenario(&cfg)?)),
        "mixed_attack" => Ok(check_mixed_attack(&run_scenario(&cfg)?)),
        "i1_resilience_nocache" | "i1_resilience_cache" => {
            let no_cache = run_scenario(&seeded(i1_resilience_with_universe(0, 500)))?;
            let cache = run_scenario(&seeded(i1_resilience_with_universe(200, 500)))?;
            let cache_big = run_scenario(&seeded(i1_resilience_with_universe(200, 1000)))?;
            Ok(check_i1_resilience(&no_cache, &cache, &cache_big))
        }
        "two_prefix" => {
            let dual = run_scenario(&cfg)?;
            let ctrl_p = run_scenario(&seeded(two_prefix_control(true)))?;
            let ctrl_q = run_scenario(&seeded(two_prefix_control(false)))?;
            Ok(check_two_prefix(&dual, &ctrl_p, &ctrl_q))
        }
        "granularity" => {
            let dual = run_scenario(&cfg)?;
            let base = run_scenario(&seeded(granularity_baseline()))?;
            Ok(check_granularity(&dual, &base))
        }
        other => Err(ConfigError::new(
            "scenario",
            format!("no checks defined for {other:?}"),
        )),
    }
}
