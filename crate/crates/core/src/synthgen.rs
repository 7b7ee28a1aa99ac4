//! Deterministic synthetic call-log generation.
//!
//! Populations and temporal patterns are calibrated to the measured
//! behavior of real traffic: malicious numbers make many short calls to
//! many distinct counterparts, concentrated in working hours on
//! workdays, and tend to stay active through the whole span; benign
//! traffic has strong pair affinity (redials, repeat contacts,
//! symmetric in/out) and spreads across the day and week. Identical
//! `(config, seed)` reproduces a log byte for byte.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::call_log::{
    CallLog, CallRecord, CallTag, CallType, LabelTable, LogMeta, PhoneId, Province,
};
use crate::timeutil::{self, SECS_PER_DAY, SECS_PER_HOUR};

/// Hour-of-day weights plus a weekend volume multiplier for one actor class.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TemporalProfile {
    pub hour_weights: Vec<f64>,
    pub weekend_multiplier: f64,
}

impl Default for TemporalProfile {
    fn default() -> Self {
        TemporalProfile { hour_weights: vec![1.0; 24], weekend_multiplier: 1.0 }
    }
}

impl TemporalProfile {
    /// Draws an hour from the 24-bin categorical.
    pub fn sample_hour(&self, rng: &mut impl Rng) -> u8 {
        let total: f64 = self.hour_weights.iter().sum();
        let mut x = rng.gen_range(0.0..total);
        for (h, w) in self.hour_weights.iter().enumerate() {
            if x < *w {
                return h as u8;
            }
            x -= w;
        }
        23
    }
}

/// Heavy-tailed out-call volume for one actor class: a discrete Pareto
/// draw with exponent `alpha`, minimum `xmin`, bounded by `cap`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TailProfile {
    pub alpha: f64,
    pub xmin: f64,
    pub cap: u64,
    /// Counterpart-pool size as a fraction of the budget.
    pub pool_ratio: f64,
    pub pool_cap: u64,
}

impl Default for TailProfile {
    fn default() -> Self {
        TailProfile { alpha: 2.5, xmin: 1.0, cap: 2000, pool_ratio: 0.3, pool_cap: 60 }
    }
}

/// Per-actor out-call budget and counterpart-pool size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DegreeProfile {
    pub budget: u64,
    pub pool: u64,
}

/// Draws a heavy-tailed call budget and the matching counterpart-pool
/// size for one actor.
pub fn sample_degree_profile(tail: &TailProfile, rng: &mut impl Rng) -> DegreeProfile {
    let u: f64 = rng.gen_range(f64::EPSILON..1.0);
    let x = tail.xmin * u.powf(-1.0 / (tail.alpha - 1.0));
    let budget = (x.round() as u64).clamp(1, tail.cap);
    let pool = ((budget as f64 * tail.pool_ratio).round() as u64).clamp(1, tail.pool_cap);
    DegreeProfile { budget, pool }
}

/// Everything class-specific about one actor population.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassProfile {
    pub temporal: TemporalProfile,
    pub tail: TailProfile,
    /// Probability that a call repeats a previously used counterpart.
    pub repeat_affinity: f64,
    /// Probability of being active over the whole log span.
    pub full_span_rate: f64,
    /// Log-normal duration parameters (natural-log scale), in seconds.
    pub duration_log_mean: f64,
    pub duration_log_sigma: f64,
}

impl Default for ClassProfile {
    fn default() -> Self {
        ClassProfile {
            temporal: TemporalProfile::default(),
            tail: TailProfile::default(),
            repeat_affinity: 0.5,
            full_span_rate: 0.3,
            duration_log_mean: 60f64.ln(),
            duration_log_sigma: 1.0,
        }
    }
}

fn default_malicious_profile() -> ClassProfile {
    ClassProfile {
        temporal: TemporalProfile {
            // Working-hour concentration with a lunch dip.
            hour_weights: vec![
                0.2, 0.1, 0.05, 0.05, 0.05, 0.1, 0.3, 0.8, 2.0, 5.0, 5.5, 5.0, 2.5, 4.5, 5.0,
                4.5, 4.0, 3.0, 1.5, 1.0, 0.8, 0.6, 0.4, 0.3,
            ],
            weekend_multiplier: 0.45,
        },
        tail: TailProfile { alpha: 2.0, xmin: 8.0, cap: 3000, pool_ratio: 0.7, pool_cap: 3000 },
        repeat_affinity: 0.15,
        full_span_rate: 0.75,
        duration_log_mean: 35f64.ln(),
        duration_log_sigma: 1.0,
    }
}

fn default_benign_other_profile() -> ClassProfile {
    ClassProfile {
        temporal: TemporalProfile {
            hour_weights: vec![
                0.5, 0.3, 0.2, 0.15, 0.15, 0.3, 0.8, 1.5, 2.5, 3.0, 3.0, 3.0, 2.8, 2.8, 2.8,
                2.8, 2.8, 3.0, 3.5, 3.8, 3.5, 2.5, 1.5, 0.8,
            ],
            weekend_multiplier: 0.85,
        },
        tail: TailProfile { alpha: 2.5, xmin: 1.0, cap: 1500, pool_ratio: 0.25, pool_cap: 40 },
        repeat_affinity: 0.7,
        full_span_rate: 0.35,
        duration_log_mean: 60f64.ln(),
        duration_log_sigma: 1.0,
    }
}

fn default_app_user_profile() -> ClassProfile {
    ClassProfile {
        tail: TailProfile { alpha: 2.3, xmin: 1.0, cap: 1500, pool_ratio: 0.3, pool_cap: 50 },
        repeat_affinity: 0.6,
        full_span_rate: 0.5,
        ..default_benign_other_profile()
    }
}

/// Full generator configuration. All fields have defaults, so a JSON
/// config only needs the fields it overrides.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub days: u32,
    pub start_epoch: i64,
    /// `(code, weight)` pairs actors draw their province from.
    pub provinces: Vec<(String, f64)>,
    pub n_app_users: usize,
    pub n_benign_others: usize,
    pub n_malicious: usize,
    /// Target mean calls per malicious number over the span.
    pub malicious_calls_per_number_mean: f64,
    /// Target share of malicious records among all records.
    pub malicious_record_fraction_target: f64,
    /// Benign per-number mean, used only when `n_malicious == 0`
    /// (otherwise benign volume is derived from the fraction target).
    pub benign_calls_per_number_mean: f64,
    pub contact_rate_malicious: f64,
    pub contact_rate_benign: f64,
    pub malicious: ClassProfile,
    pub benign_other: ClassProfile,
    pub app_user: ClassProfile,
    /// Share of an app user's outgoing calls that go to another user.
    pub user_to_user_rate: f64,
    /// Probability a user returns a benign / malicious incoming call.
    pub callback_rate_benign: f64,
    pub callback_rate_malicious: f64,
    /// Probability a benign incoming call gets a benign tag.
    pub benign_tag_rate: f64,
    /// Probability a malicious call goes untagged (0 = full labeling).
    pub label_drop_prob: f64,
    pub duration_cap: u32,
    pub timezone_offset_secs: i64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 0,
            days: 30,
            // 2016-10-01T00:00:00Z
            start_epoch: 1_475_280_000,
            provinces: vec![
                ("BJ".into(), 0.20),
                ("SH".into(), 0.18),
                ("GD".into(), 0.15),
                ("SC".into(), 0.12),
                ("ZJ".into(), 0.10),
                ("HN".into(), 0.10),
                ("AH".into(), 0.08),
                ("JL".into(), 0.07),
            ],
            n_app_users: 1_000,
            n_benign_others: 15_000,
            n_malicious: 50,
            malicious_calls_per_number_mean: 91.0,
            malicious_record_fraction_target: 0.008,
            benign_calls_per_number_mean: 15.0,
            contact_rate_malicious: 0.1356,
            contact_rate_benign: 0.45,
            malicious: default_malicious_profile(),
            benign_other: default_benign_other_profile(),
            app_user: default_app_user_profile(),
            user_to_user_rate: 0.2,
            callback_rate_benign: 0.12,
            callback_rate_malicious: 0.12,
            benign_tag_rate: 0.01,
            label_drop_prob: 0.0,
            duration_cap: 3_600,
            timezone_offset_secs: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActorClass {
    Malicious,
    BenignOther,
    AppUser,
}

/// One synthetic participant.
#[derive(Debug, Clone)]
pub struct ActorProfile {
    pub id: PhoneId,
    pub class: ActorClass,
    pub province: usize,
    pub degree: DegreeProfile,
    /// Active day range, inclusive, relative to the log start.
    pub active_span: (u32, u32),
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("infeasible generator config: {0}")]
    Infeasible(String),
}

/// A generated log plus its per-number ground truth.
#[derive(Debug, Clone)]
pub struct GeneratedLog {
    pub log: CallLog,
    pub labels: LabelTable,
}

fn check_fraction(name: &str, v: f64) -> Result<(), GenError> {
    if !(0.0..=1.0).contains(&v) || !v.is_finite() {
        return Err(GenError::InvalidConfig(format!("{name} = {v} must be in [0, 1]")));
    }
    Ok(())
}

fn validate_config(cfg: &GeneratorConfig) -> Result<(), GenError> {
    if cfg.days == 0 {
        return Err(GenError::InvalidConfig("days must be >= 1".into()));
    }
    if cfg.provinces.is_empty() {
        return Err(GenError::InvalidConfig("province set must be non-empty".into()));
    }
    let wsum: f64 = cfg.provinces.iter().map(|(_, w)| *w).sum();
    if cfg.provinces.iter().any(|(c, w)| c.is_empty() || *w < 0.0) || wsum <= 0.0 {
        return Err(GenError::InvalidConfig(
            "province weights must be non-negative with a positive sum".into(),
        ));
    }
    if cfg.n_app_users == 0 || cfg.n_benign_others == 0 {
        return Err(GenError::InvalidConfig(
            "n_app_users and n_benign_others must be >= 1".into(),
        ));
    }
    for (name, p) in [
        ("contact_rate_malicious", cfg.contact_rate_malicious),
        ("contact_rate_benign", cfg.contact_rate_benign),
        ("user_to_user_rate", cfg.user_to_user_rate),
        ("callback_rate_benign", cfg.callback_rate_benign),
        ("callback_rate_malicious", cfg.callback_rate_malicious),
        ("benign_tag_rate", cfg.benign_tag_rate),
        ("label_drop_prob", cfg.label_drop_prob),
        ("malicious.repeat_affinity", cfg.malicious.repeat_affinity),
        ("benign_other.repeat_affinity", cfg.benign_other.repeat_affinity),
        ("app_user.repeat_affinity", cfg.app_user.repeat_affinity),
        ("malicious.full_span_rate", cfg.malicious.full_span_rate),
        ("benign_other.full_span_rate", cfg.benign_other.full_span_rate),
        ("app_user.full_span_rate", cfg.app_user.full_span_rate),
    ] {
        check_fraction(name, p)?;
    }
    for (name, profile) in [
        ("malicious", &cfg.malicious),
        ("benign_other", &cfg.benign_other),
        ("app_user", &cfg.app_user),
    ] {
        if profile.temporal.hour_weights.len() != 24 {
            return Err(GenError::InvalidConfig(format!("{name}: need exactly 24 hour weights")));
        }
        let hsum: f64 = profile.temporal.hour_weights.iter().sum();
        if profile.temporal.hour_weights.iter().any(|w| *w < 0.0) || hsum <= 0.0 {
            return Err(GenError::InvalidConfig(format!(
                "{name}: hour weights must be non-negative with a positive sum"
            )));
        }
        if profile.temporal.weekend_multiplier < 0.0 {
            return Err(GenError::InvalidConfig(format!("{name}: negative weekend multiplier")));
        }
        if profile.tail.alpha <= 1.0 {
            return Err(GenError::InvalidConfig(format!("{name}: tail alpha must exceed 1")));
        }
        if profile.tail.xmin < 1.0 || profile.tail.cap == 0 || profile.tail.pool_ratio <= 0.0 {
            return Err(GenError::InvalidConfig(format!("{name}: invalid tail profile")));
        }
    }
    if cfg.n_malicious > 0 && cfg.malicious_calls_per_number_mean < 1.0 {
        return Err(GenError::InvalidConfig(
            "malicious_calls_per_number_mean must be >= 1".into(),
        ));
    }
    if cfg.malicious_record_fraction_target <= 0.0 || cfg.malicious_record_fraction_target >= 1.0 {
        return Err(GenError::InvalidConfig(
            "malicious_record_fraction_target must be in (0, 1)".into(),
        ));
    }
    Ok(())
}

/// Box-Muller standard normal draw.
fn sample_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn sample_duration(profile: &ClassProfile, cap: u32, rng: &mut impl Rng) -> u32 {
    let z = sample_normal(rng);
    let secs = (profile.duration_log_mean + profile.duration_log_sigma * z).exp();
    (secs.round() as u64).min(cap as u64) as u32
}

/// Draws a `call_date` within `day` (relative to the log start) using the
/// class hour profile.
pub fn sample_timestamp(
    profile: &TemporalProfile,
    start_epoch: i64,
    day: u32,
    rng: &mut impl Rng,
) -> i64 {
    let hour = profile.sample_hour(rng) as i64;
    start_epoch + day as i64 * SECS_PER_DAY + hour * SECS_PER_HOUR + rng.gen_range(0..SECS_PER_HOUR)
}

/// Weighted day pick within an active span: weekdays weigh 1, weekends
/// weigh the class multiplier.
fn sample_day(
    span: (u32, u32),
    weekend_multiplier: f64,
    start_epoch: i64,
    tz: i64,
    rng: &mut impl Rng,
) -> u32 {
    let (lo, hi) = span;
    let mut total = 0.0;
    for day in lo..=hi {
        let t = start_epoch + day as i64 * SECS_PER_DAY;
        total += if timeutil::is_weekend(t, tz) { weekend_multiplier } else { 1.0 };
    }
    if total <= 0.0 {
        return rng.gen_range(lo..=hi);
    }
    let mut x = rng.gen_range(0.0..total);
    for day in lo..=hi {
        let t = start_epoch + day as i64 * SECS_PER_DAY;
        let w = if timeutil::is_weekend(t, tz) { weekend_multiplier } else { 1.0 };
        if x < w {
            return day;
        }
        x -= w;
    }
    hi
}

fn mint_phone_ids(n: usize, taken: &mut HashSet<PhoneId>, rng: &mut impl Rng) -> Vec<PhoneId> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut bytes = [0u8; 16];
        rng.fill_bytes(&mut bytes);
        let id = PhoneId::from_bytes(bytes);
        if taken.insert(id) {
            out.push(id);
        }
    }
    out
}

fn sample_weighted_index(weights: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.gen_range(0.0..total);
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return i;
        }
        x -= w;
    }
    weights.len() - 1
}

/// One planned call; turns into one record per app-user side.
struct CallEvent {
    date: i64,
    order: u64,
    caller: usize,
    callee: usize,
    duration: u32,
    tag: CallTag,
    /// Contact flags resolved per user side at creation time.
    caller_side_contact: bool,
    callee_side_contact: bool,
}

/// Generates a labeled log. Identical `(config, seed)` yields a
/// byte-identical log; the label table marks exactly the malicious
/// actors, every one of whose user-directed calls is tagged (minus the
/// configured drop probability).
pub fn generate_log(cfg: &GeneratorConfig) -> Result<GeneratedLog, GenError> {
    validate_config(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let tz = cfg.timezone_offset_secs;
    let end_epoch = cfg.start_epoch + cfg.days as i64 * SECS_PER_DAY;

    let province_weights: Vec<f64> = cfg.provinces.iter().map(|(_, w)| *w).collect();
    let provinces: Vec<Province> =
        cfg.provinces.iter().map(|(code, _)| Province::new(code.clone())).collect();

    // --- Mint actors ---------------------------------------------------
    let mut taken = HashSet::new();
    let user_ids = mint_phone_ids(cfg.n_app_users, &mut taken, &mut rng);
    let other_ids = mint_phone_ids(cfg.n_benign_others, &mut taken, &mut rng);
    let malicious_ids = mint_phone_ids(cfg.n_malicious, &mut taken, &mut rng);

    let mut actors: Vec<ActorProfile> = Vec::new();
    for (ids, class, profile) in [
        (&user_ids, ActorClass::AppUser, &cfg.app_user),
        (&other_ids, ActorClass::BenignOther, &cfg.benign_other),
        (&malicious_ids, ActorClass::Malicious, &cfg.malicious),
    ] {
        for &id in ids {
            let degree = sample_degree_profile(&profile.tail, &mut rng);
            let active_span = if rng.gen_bool(profile.full_span_rate) {
                (0, cfg.days - 1)
            } else {
                let a = rng.gen_range(0..cfg.days);
                let b = rng.gen_range(0..cfg.days);
                (a.min(b), a.max(b))
            };
            actors.push(ActorProfile {
                id,
                class,
                province: sample_weighted_index(&province_weights, &mut rng),
                degree,
                active_span,
            });
        }
    }

    let users: Vec<usize> = (0..cfg.n_app_users).collect();
    let others: Vec<usize> =
        (cfg.n_app_users..cfg.n_app_users + cfg.n_benign_others).collect();
    let malicious: Vec<usize> =
        (cfg.n_app_users + cfg.n_benign_others..actors.len()).collect();

    // Per-actor malicious tag kind.
    let malicious_tag: Vec<CallTag> = malicious
        .iter()
        .map(|_| if rng.gen_bool(0.5) { CallTag::Harassment } else { CallTag::Fraud })
        .collect();

    // --- Budget scaling --------------------------------------------------
    // Malicious budgets scale to the configured per-number mean; benign
    // budgets scale so the malicious record share hits its target.
    fn rescale(
        actors: &mut [ActorProfile],
        indices: &[usize],
        scale: f64,
        tail: &TailProfile,
    ) {
        for &i in indices {
            let b = (actors[i].degree.budget as f64 * scale).round().max(1.0) as u64;
            let budget = b.min(tail.cap);
            let pool =
                ((budget as f64 * tail.pool_ratio).round() as u64).clamp(1, tail.pool_cap);
            actors[i].degree = DegreeProfile { budget, pool };
        }
    }

    let expected_malicious_records: f64 = if malicious.is_empty() {
        0.0
    } else {
        let raw_mean = malicious.iter().map(|&i| actors[i].degree.budget as f64).sum::<f64>()
            / malicious.len() as f64;
        rescale(
            &mut actors,
            &malicious,
            cfg.malicious_calls_per_number_mean / raw_mean,
            &cfg.malicious.tail,
        );
        malicious.iter().map(|&i| actors[i].degree.budget as f64).sum()
    };

    let other_weight = 1.0 + cfg.callback_rate_benign;
    let user_weight = 1.0 + cfg.user_to_user_rate;
    let benign_target = if malicious.is_empty() {
        cfg.benign_calls_per_number_mean
            * (cfg.n_benign_others as f64 * other_weight
                + cfg.n_app_users as f64 * user_weight)
    } else {
        let f = cfg.malicious_record_fraction_target;
        let total = expected_malicious_records / f;
        let callbacks = expected_malicious_records * cfg.callback_rate_malicious;
        let target = total - expected_malicious_records - callbacks;
        if target <= 0.0 {
            return Err(GenError::Infeasible(
                "malicious_record_fraction_target leaves no room for benign traffic".into(),
            ));
        }
        target
    };
    let benign_raw_weighted: f64 = others
        .iter()
        .map(|&i| actors[i].degree.budget as f64)
        .sum::<f64>()
        * other_weight
        + users.iter().map(|&i| actors[i].degree.budget as f64).sum::<f64>() * user_weight;
    let benign_scale = benign_target / benign_raw_weighted;
    rescale(&mut actors, &others, benign_scale, &cfg.benign_other.tail);
    rescale(&mut actors, &users, benign_scale, &cfg.app_user.tail);

    let realized_benign: f64 = others
        .iter()
        .map(|&i| actors[i].degree.budget as f64)
        .sum::<f64>()
        * other_weight
        + users.iter().map(|&i| actors[i].degree.budget as f64).sum::<f64>() * user_weight;
    if (realized_benign - benign_target).abs() / benign_target > 0.15 {
        return Err(GenError::Infeasible(format!(
            "benign volume target {benign_target:.0} unreachable with the configured actor \
             counts and tail caps (realizable: {realized_benign:.0})"
        )));
    }

    // --- Event generation --------------------------------------------------
    let mut events: Vec<CallEvent> = Vec::new();
    let mut order: u64 = 0;
    // Sticky per (user, other) contact flags.
    let mut contact: HashMap<(PhoneId, PhoneId), bool> = HashMap::new();

    for actor_idx in malicious.iter().chain(others.iter()).chain(users.iter()).copied() {
        let actor = actors[actor_idx].clone();
        let (class_profile, contact_rate) = match actor.class {
            ActorClass::Malicious => (&cfg.malicious, cfg.contact_rate_malicious),
            ActorClass::BenignOther => (&cfg.benign_other, cfg.contact_rate_benign),
            ActorClass::AppUser => (&cfg.app_user, cfg.contact_rate_benign),
        };
        let tag_kind = match actor.class {
            ActorClass::Malicious => {
                malicious_tag[actor_idx - cfg.n_app_users - cfg.n_benign_others]
            }
            _ => CallTag::None,
        };
        let mut seen: Vec<usize> = Vec::new();
        for _ in 0..actor.degree.budget {
            // Counterpart: repeat a known one, or draw a new one while the
            // pool has room.
            let callee = if !seen.is_empty()
                && (seen.len() as u64 >= actor.degree.pool
                    || rng.gen_bool(class_profile.repeat_affinity))
            {
                seen[rng.gen_range(0..seen.len())]
            } else {
                let target = match actor.class {
                    ActorClass::Malicious | ActorClass::BenignOther => {
                        users[rng.gen_range(0..users.len())]
                    }
                    ActorClass::AppUser => {
                        if cfg.user_to_user_rate > 0.0 && rng.gen_bool(cfg.user_to_user_rate) {
                            loop {
                                let u = users[rng.gen_range(0..users.len())];
                                if u != actor_idx {
                                    break u;
                                }
                            }
                        } else {
                            others[rng.gen_range(0..others.len())]
                        }
                    }
                };
                seen.push(target);
                target
            };

            let day = sample_day(
                actor.active_span,
                class_profile.temporal.weekend_multiplier,
                cfg.start_epoch,
                tz,
                &mut rng,
            );
            let date = sample_timestamp(&class_profile.temporal, cfg.start_epoch, day, &mut rng);
            let duration = sample_duration(class_profile, cfg.duration_cap, &mut rng);

            let tag = match actor.class {
                ActorClass::Malicious => {
                    if cfg.label_drop_prob > 0.0 && rng.gen_bool(cfg.label_drop_prob) {
                        CallTag::None
                    } else {
                        tag_kind
                    }
                }
                ActorClass::BenignOther => {
                    if cfg.benign_tag_rate > 0.0 && rng.gen_bool(cfg.benign_tag_rate) {
                        match rng.gen_range(0..3u8) {
                            0 => CallTag::RealEstate,
                            1 => CallTag::Delivery,
                            _ => CallTag::Sales,
                        }
                    } else {
                        CallTag::None
                    }
                }
                ActorClass::AppUser => CallTag::None,
            };

            let caller_side_contact = if actor.class == ActorClass::AppUser {
                *contact
                    .entry((actor.id, actors[callee].id))
                    .or_insert_with(|| rng.gen_bool(contact_rate))
            } else {
                false
            };
            let callee_side_contact = if actors[callee].class == ActorClass::AppUser {
                *contact
                    .entry((actors[callee].id, actor.id))
                    .or_insert_with(|| rng.gen_bool(contact_rate))
            } else {
                false
            };

            events.push(CallEvent {
                date,
                order,
                caller: actor_idx,
                callee,
                duration,
                tag,
                caller_side_contact,
                callee_side_contact,
            });
            order += 1;

            // Possible user callback to a non-user caller.
            if actors[callee].class == ActorClass::AppUser && actor.class != ActorClass::AppUser {
                let cb_rate = match actor.class {
                    ActorClass::Malicious => cfg.callback_rate_malicious,
                    _ => cfg.callback_rate_benign,
                };
                if cb_rate > 0.0 && rng.gen_bool(cb_rate) {
                    let cb_date = date + duration as i64 + rng.gen_range(60..7200);
                    if cb_date < end_epoch {
                        let cb_duration =
                            sample_duration(&cfg.app_user, cfg.duration_cap, &mut rng);
                        let flag = *contact
                            .entry((actors[callee].id, actor.id))
                            .or_insert_with(|| rng.gen_bool(contact_rate));
                        events.push(CallEvent {
                            date: cb_date,
                            order,
                            caller: callee,
                            callee: actor_idx,
                            duration: cb_duration,
                            tag: CallTag::None,
                            caller_side_contact: flag,
                            callee_side_contact: false,
                        });
                        order += 1;
                    }
                }
            }
        }
    }

    // --- Record assembly ---------------------------------------------------
    events.sort_by_key(|e| (e.date, e.order));
    let mut records: Vec<CallRecord> = Vec::with_capacity(events.len() + events.len() / 4);
    let mut seq: u64 = 0;
    for ev in &events {
        let caller = &actors[ev.caller];
        let callee = &actors[ev.callee];
        if caller.class == ActorClass::AppUser {
            records.push(CallRecord {
                user_id: caller.id,
                call_type: CallType::Outgoing,
                other_phone: callee.id,
                other_province: provinces[callee.province].clone(),
                user_province: provinces[caller.province].clone(),
                call_date: ev.date,
                call_duration: ev.duration,
                call_contact: ev.caller_side_contact,
                call_tag: CallTag::None,
                seq,
            });
            seq += 1;
        }
        if callee.class == ActorClass::AppUser {
            records.push(CallRecord {
                user_id: callee.id,
                call_type: CallType::Incoming,
                other_phone: caller.id,
                other_province: provinces[caller.province].clone(),
                user_province: provinces[callee.province].clone(),
                call_date: ev.date,
                call_duration: ev.duration,
                call_contact: ev.callee_side_contact,
                call_tag: ev.tag,
                seq,
            });
            seq += 1;
        }
    }

    let meta = LogMeta {
        provinces,
        seed: cfg.seed,
        start_epoch: cfg.start_epoch,
        days: cfg.days,
        registry: user_ids.iter().copied().collect::<BTreeSet<_>>(),
    };
    let mut labels = BTreeMap::new();
    for &i in others.iter() {
        labels.insert(actors[i].id, false);
    }
    for &i in malicious.iter() {
        labels.insert(actors[i].id, true);
    }

    Ok(GeneratedLog { log: CallLog::new(records, meta), labels: LabelTable { labels } })
}
