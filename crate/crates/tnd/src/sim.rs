//! Synthetic test-negative design data generation.
//!
//! Generates populations with age, sex, latent healthcare-seeking behavior,
//! vaccination, case contact, infection from a log-binomial model, and a
//! reason-for-testing assignment constructed so that the symptoms-stratum
//! odds ratio identifies the infection relative risk.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Homogeneous-scenario log relative risk of infection, vaccinated vs not.
pub const HOMOGENEOUS_LOG_RR: f64 = -0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("reason probabilities sum to {0} > 1 for a subject")]
    ReasonMassExceedsOne(f64),
}

/// Why a subject was tested (or that they were not).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Reason {
    Symptoms,
    DiseaseUnrelated,
    CaseContactTracing,
    Other,
    NotTested,
    Missing,
}

impl Reason {
    /// Lowercase token used in the CSV schema.
    pub fn token(self) -> &'static str {
        match self {
            Reason::Symptoms => "symptoms",
            Reason::DiseaseUnrelated => "unrelated",
            Reason::CaseContactTracing => "cct",
            Reason::Other => "other",
            Reason::NotTested => "nottested",
            Reason::Missing => "missing",
        }
    }

    pub fn from_token(tok: &str) -> Option<Reason> {
        match tok {
            "symptoms" => Some(Reason::Symptoms),
            "unrelated" => Some(Reason::DiseaseUnrelated),
            "cct" => Some(Reason::CaseContactTracing),
            "other" => Some(Reason::Other),
            "nottested" => Some(Reason::NotTested),
            "missing" => Some(Reason::Missing),
            _ => None,
        }
    }
}

/// One individual's covariates, latent behavior, and testing outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Subject {
    /// Age, scaled to [0.5, 1].
    pub x1: f64,
    /// Sex.
    pub x2: u8,
    /// Latent healthcare-seeking behavior.
    pub h: u8,
    /// Vaccination status.
    pub v: u8,
    /// Case-contact indicator.
    pub c: u8,
    /// Recorded infection status.
    pub i: u8,
    pub reason: Reason,
    pub tested: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Prevalence {
    High,
    Low,
}

impl Prevalence {
    /// Intercept of the infection log-binomial model.
    pub fn intercept(self) -> f64 {
        match self {
            Prevalence::High => -0.6,
            Prevalence::Low => -2.1,
        }
    }
}

fn default_n_subjects() -> usize {
    10_000
}
fn default_n_replicates() -> usize {
    1000
}

/// Full specification of a data-generating scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub prevalence: Prevalence,
    #[serde(default)]
    pub effect_modification: bool,
    #[serde(default)]
    pub misclassification_rate: f64,
    #[serde(default)]
    pub missing_reason_rate: f64,
    #[serde(default = "default_n_subjects")]
    pub n_subjects: usize,
    #[serde(default = "default_n_replicates")]
    pub n_replicates: usize,
    #[serde(default)]
    pub base_seed: u64,
}

impl ScenarioConfig {
    pub fn new(prevalence: Prevalence) -> Self {
        ScenarioConfig {
            prevalence,
            effect_modification: false,
            misclassification_rate: 0.0,
            missing_reason_rate: 0.0,
            n_subjects: default_n_subjects(),
            n_replicates: default_n_replicates(),
            base_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(0.0..1.0).contains(&self.misclassification_rate) {
            return Err(SimError::InvalidScenario(
                "misclassification_rate must be in [0, 1)".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.missing_reason_rate) {
            return Err(SimError::InvalidScenario(
                "missing_reason_rate must be in [0, 1)".into(),
            ));
        }
        if self.n_subjects == 0 {
            return Err(SimError::InvalidScenario("n_subjects must be positive".into()));
        }
        if self.n_replicates == 0 {
            return Err(SimError::InvalidScenario("n_replicates must be positive".into()));
        }
        Ok(())
    }

    /// Infection probability given covariates, with C forced to the given value.
    pub fn infection_prob(&self, v: u8, x1: f64, x2: u8, h: u8, c: u8) -> f64 {
        let b0 = self.prevalence.intercept();
        let vf = v as f64;
        let vaccine_term = if self.effect_modification {
            -0.5 * vf * h as f64 - 0.1 * vf * x1
        } else {
            -0.5 * vf
        };
        let eta = b0 + vaccine_term + 0.5 * x1 - x2 as f64 + 0.1 * c as f64;
        eta.exp()
    }
}

/// An ordered collection of subjects, regenerable from (scenario, seed).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub subjects: Vec<Subject>,
    pub scenario: Option<ScenarioConfig>,
    pub seed: u64,
}

impl Dataset {
    /// Tested subjects in a reason stratum.
    pub fn stratum(&self, reason: Reason) -> impl Iterator<Item = &Subject> {
        self.subjects
            .iter()
            .filter(move |s| s.tested == 1 && s.reason == reason)
    }

    /// All tested subjects regardless of reason.
    pub fn tested(&self) -> impl Iterator<Item = &Subject> {
        self.subjects.iter().filter(|s| s.tested == 1)
    }
}

/// Deterministic per-replicate seed, order-independent in `rep`.
pub fn replicate_seed(base_seed: u64, rep: u64) -> u64 {
    // splitmix64 finalizer over the (base, rep) pair
    let mut z = base_seed
        .wrapping_mul(0x9e3779b97f4a7c15)
        .wrapping_add(rep.wrapping_mul(0xbf58476d1ce4e5b9))
        .wrapping_add(0x94d049bb133111eb);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// The factor entering the symptoms testing probability; it makes the
/// symptoms-stratum odds ratio identify the infection relative risk and the
/// within-stratum logistic regression correctly specified.
pub fn compute_g_factor(
    x1: f64,
    x2: u8,
    h: u8,
    v: u8,
    i: u8,
    scenario: &ScenarioConfig,
) -> f64 {
    let p0 = scenario.infection_prob(0, x1, x2, h, 0);
    let p1 = scenario.infection_prob(1, x1, x2, h, 0);
    let surv0 = 1.0 - p0;
    let surv1 = 1.0 - p1;
    if i == 1 {
        surv0
    } else {
        let vf = v as f64;
        (1.0 - vf) + vf * surv0 / surv1
    }
}

/// Probabilities of (Symptoms, DiseaseUnrelated, Other) joint with T=1, for
/// a subject with C=0.
pub fn reason_probabilities(
    x1: f64,
    x2: u8,
    h: u8,
    v: u8,
    i: u8,
    scenario: &ScenarioConfig,
) -> (f64, f64, f64) {
    let g = compute_g_factor(x1, x2, h, v, i, scenario);
    let p_symptoms = 0.4 * h as f64 * x1 * g;
    let p_unrelated = 0.2 * v as f64 + 0.2 * x1;
    let p_other = 0.4 * i as f64 * (1.0 - v as f64);
    (p_symptoms, p_unrelated, p_other)
}

/// Assign the reason for testing and tested flag given a drawn subject.
pub fn assign_reason_and_test<R: Rng>(
    x1: f64,
    x2: u8,
    h: u8,
    v: u8,
    c: u8,
    i: u8,
    scenario: &ScenarioConfig,
    rng: &mut R,
) -> Result<(Reason, u8), SimError> {
    if c == 1 {
        let tested = rng.gen_bool(0.9 + 0.1 * x2 as f64) as u8;
        return Ok((Reason::CaseContactTracing, tested));
    }
    let (ps, pu, po) = reason_probabilities(x1, x2, h, v, i, scenario);
    let mass = ps + pu + po;
    if mass > 1.0 {
        return Err(SimError::ReasonMassExceedsOne(mass));
    }
    let u: f64 = rng.gen();
    if u < ps {
        Ok((Reason::Symptoms, 1))
    } else if u < ps + pu {
        Ok((Reason::DiseaseUnrelated, 1))
    } else if u < mass {
        Ok((Reason::Other, 1))
    } else {
        Ok((Reason::NotTested, 0))
    }
}

/// Generate a dataset of `scenario.n_subjects` subjects. Bit-identical for a
/// given (scenario, seed) regardless of caller threading.
pub fn generate_dataset(scenario: &ScenarioConfig, seed: u64) -> Result<Dataset, SimError> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut subjects = Vec::with_capacity(scenario.n_subjects);
    for _ in 0..scenario.n_subjects {
        let x1 = 0.5 + 0.5 * rng.gen::<f64>();
        let x2 = rng.gen_bool(0.5) as u8;
        let h = rng.gen_bool(x1) as u8;
        let v = rng.gen_bool(0.6 * x1 + 0.1 * x2 as f64) as u8;
        let c = rng.gen_bool(0.05 * (1.0 + x2 as f64)) as u8;
        let p_inf = scenario.infection_prob(v, x1, x2, h, c);
        debug_assert!(p_inf <= 1.0 + 1e-12);
        let mut i = rng.gen_bool(p_inf.min(1.0)) as u8;
        // misclassification happens before testing behavior: the recorded
        // status drives symptom recognition and outcome-dependent testing
        if scenario.misclassification_rate > 0.0 && rng.gen_bool(scenario.misclassification_rate)
        {
            i ^= 1;
        }
        let (reason, tested) = assign_reason_and_test(x1, x2, h, v, c, i, scenario, &mut rng)?;
        subjects.push(Subject {
            x1,
            x2,
            h,
            v,
            c,
            i,
            reason,
            tested,
        });
    }
    let mut ds = Dataset {
        subjects,
        scenario: Some(*scenario),
        seed,
    };
    if scenario.missing_reason_rate > 0.0 {
        ds = apply_missing_reasons(&ds, scenario.missing_reason_rate, &mut rng);
    }
    Ok(ds)
}

/// Flip each subject's recorded infection status independently with the given
/// probability. Returns a new dataset; the input is untouched.
pub fn apply_misclassification<R: Rng>(dataset: &Dataset, rate: f64, rng: &mut R) -> Dataset {
    assert!((0.0..1.0).contains(&rate));
    let mut out = dataset.clone();
    if rate == 0.0 {
        return out;
    }
    for s in &mut out.subjects {
        if rng.gen_bool(rate) {
            s.i ^= 1;
        }
    }
    out
}

/// Replace each tested subject's reason by `Missing` independently with the
/// given probability (missing completely at random). Tested flags unchanged.
pub fn apply_missing_reasons<R: Rng>(dataset: &Dataset, rate: f64, rng: &mut R) -> Dataset {
    assert!((0.0..1.0).contains(&rate));
    let mut out = dataset.clone();
    if rate == 0.0 {
        return out;
    }
    for s in &mut out.subjects {
        if s.tested == 1 && rng.gen_bool(rate) {
            s.reason = Reason::Missing;
        }
    }
    out
}

/// Which conditioning the true VE refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning {
    /// VE(x): marginal over healthcare-seeking behavior.
    Marginal,
    /// VE(x, 1): within the healthcare-seeker stratum.
    SeekerStratum,
}

/// Closed-form true vaccine effectiveness at age `x1`.
pub fn true_ve(scenario: &ScenarioConfig, x1: f64, conditioning: Conditioning) -> f64 {
    assert!((0.5..=1.0).contains(&x1));
    if !scenario.effect_modification {
        return 1.0 - HOMOGENEOUS_LOG_RR.exp();
    }
    match conditioning {
        Conditioning::SeekerStratum => 1.0 - (-0.5 - 0.1 * x1).exp(),
        Conditioning::Marginal => {
            1.0 - (x1 * (-0.5 - 0.1 * x1).exp() + (1.0 - x1) * (-0.1 * x1).exp())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn high() -> ScenarioConfig {
        ScenarioConfig::new(Prevalence::High)
    }

    fn low() -> ScenarioConfig {
        ScenarioConfig::new(Prevalence::Low)
    }

    #[test]
    fn g_factor_unvaccinated_uninfected_is_one() {
        for &x1 in &[0.5, 0.75, 1.0] {
            for x2 in 0..2u8 {
                for h in 0..2u8 {
                    assert_eq!(compute_g_factor(x1, x2, h, 0, 0, &high()), 1.0);
                }
            }
        }
    }

    #[test]
    fn g_factor_closed_form_values() {
        // hand evaluation at x1=1, x2=0, h=1, v=1 under the high-prevalence model
        let g0 = compute_g_factor(1.0, 0, 1, 1, 0, &high());
        let expect0 = (1.0 - (-0.1f64).exp()) / (1.0 - (-0.6f64).exp());
        assert_relative_eq!(g0, expect0, max_relative = 1e-12);
        assert_relative_eq!(g0, 0.2109, max_relative = 1e-3);

        let g1 = compute_g_factor(1.0, 0, 1, 1, 1, &high());
        assert_relative_eq!(g1, 1.0 - (-0.1f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(g1, 0.0952, max_relative = 1e-3);
    }

    #[test]
    fn reason_probabilities_hand_case() {
        // h=0, v=0, x1=0.5, i=0: only disease-unrelated testing possible
        let (ps, pu, po) = reason_probabilities(0.5, 0, 0, 0, 0, &high());
        assert_eq!(ps, 0.0);
        assert_relative_eq!(pu, 0.1, max_relative = 1e-12);
        assert_eq!(po, 0.0);
    }

    #[test]
    fn case_contact_with_x2_always_tested() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let (reason, tested) =
                assign_reason_and_test(0.8, 1, 0, 0, 1, 0, &high(), &mut rng).unwrap();
            assert_eq!(reason, Reason::CaseContactTracing);
            assert_eq!(tested, 1);
        }
    }

    #[test]
    fn true_ve_values() {
        let hom = high();
        assert_relative_eq!(
            true_ve(&hom, 0.7, Conditioning::Marginal),
            1.0 - (-0.5f64).exp(),
            max_relative = 1e-12
        );
        let mut em = high();
        em.effect_modification = true;
        assert_relative_eq!(
            true_ve(&em, 0.5, Conditioning::SeekerStratum),
            1.0 - (-0.55f64).exp(),
            max_relative = 1e-12
        );
        // mixture collapses at x1 = 1 since H ~ Bernoulli(1)
        assert_relative_eq!(
            true_ve(&em, 1.0, Conditioning::Marginal),
            1.0 - (-0.6f64).exp(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn generation_is_deterministic() {
        let sc = high();
        let a = generate_dataset(&sc, 123).unwrap();
        let b = generate_dataset(&sc, 123).unwrap();
        assert_eq!(a, b);
        let c = generate_dataset(&sc, 124).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn high_prevalence_marginals() {
        let mut sc = high();
        sc.n_subjects = 100_000;
        let ds = generate_dataset(&sc, 1).unwrap();
        let n = ds.subjects.len() as f64;
        let tested = ds.subjects.iter().filter(|s| s.tested == 1).count() as f64 / n;
        assert!((tested - 0.54).abs() < 0.01, "tested fraction {tested}");
    }

    #[test]
    fn low_prevalence_infection_rate() {
        let mut sc = low();
        sc.n_subjects = 100_000;
        let ds = generate_dataset(&sc, 2).unwrap();
        let pi = ds.subjects.iter().map(|s| s.i as f64).sum::<f64>() / ds.subjects.len() as f64;
        assert!((pi - 0.10).abs() < 0.005, "Pr(I=1) = {pi}");
    }

    #[test]
    fn low_prevalence_reason_shares() {
        let mut sc = low();
        sc.n_subjects = 200_000;
        let ds = generate_dataset(&sc, 3).unwrap();
        let n = ds.subjects.len() as f64;
        let share = |r: Reason| ds.subjects.iter().filter(|s| s.reason == r).count() as f64 / n;
        assert!((share(Reason::Symptoms) - 0.20).abs() < 0.01);
        assert!((share(Reason::DiseaseUnrelated) - 0.24).abs() < 0.01);
        assert!((share(Reason::CaseContactTracing) - 0.07).abs() < 0.01);
        assert!((share(Reason::Other) - 0.03).abs() < 0.01);
        assert!((share(Reason::NotTested) - 0.46).abs() < 0.015);
    }

    #[test]
    fn clean_scenario_has_no_missing_reasons() {
        let sc = high();
        let ds = generate_dataset(&sc, 9).unwrap();
        assert!(ds.subjects.iter().all(|s| s.reason != Reason::Missing));
        assert!(ds
            .subjects
            .iter()
            .all(|s| s.tested == 1 || matches!(s.reason, Reason::NotTested | Reason::CaseContactTracing)));
    }

    #[test]
    fn misclassification_flip_rate() {
        let mut sc = high();
        sc.n_subjects = 300_000;
        let ds = generate_dataset(&sc, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let flipped = apply_misclassification(&ds, 0.10, &mut rng);
        let frac = ds
            .subjects
            .iter()
            .zip(&flipped.subjects)
            .filter(|(a, b)| a.i != b.i)
            .count() as f64
            / ds.subjects.len() as f64;
        assert!((frac - 0.10).abs() < 0.002, "flip fraction {frac}");
        // input untouched
        assert_eq!(ds, generate_dataset(&sc, 4).unwrap());
    }

    #[test]
    fn missing_reason_rate_on_tested_only() {
        let mut sc = high();
        sc.n_subjects = 200_000;
        let ds = generate_dataset(&sc, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let out = apply_missing_reasons(&ds, 0.20, &mut rng);
        let tested = out.subjects.iter().filter(|s| s.tested == 1).count() as f64;
        let missing = out
            .subjects
            .iter()
            .filter(|s| s.tested == 1 && s.reason == Reason::Missing)
            .count() as f64;
        assert!((missing / tested - 0.20).abs() < 0.005);
        assert!(out
            .subjects
            .iter()
            .zip(&ds.subjects)
            .all(|(a, b)| a.tested == b.tested));
        assert!(out
            .subjects
            .iter()
            .filter(|s| s.tested == 0)
            .all(|s| s.reason != Reason::Missing));
    }

    #[test]
    fn zero_rates_are_identity() {
        let ds = generate_dataset(&high(), 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(apply_misclassification(&ds, 0.0, &mut rng), ds);
        assert_eq!(apply_missing_reasons(&ds, 0.0, &mut rng), ds);
    }

    // Identification check: within the symptoms stratum at fixed covariates the
    // odds ratio of I on V equals the infection relative risk exp(-0.5).
    #[test]
    fn symptoms_stratum_odds_ratio_identifies_rr() {
        let mut sc = high();
        sc.n_subjects = 1_000_000;
        let ds = generate_dataset(&sc, 8).unwrap();
        let mut cells = [[0f64; 2]; 2];
        for s in ds.stratum(Reason::Symptoms) {
            if s.x2 == 0 && s.h == 1 && (0.7..0.8).contains(&s.x1) {
                cells[s.v as usize][s.i as usize] += 1.0;
            }
        }
        let or = (cells[1][1] * cells[0][0]) / (cells[1][0] * cells[0][1]);
        assert!(
            (or.ln() - (-0.5)).abs() < 0.12,
            "log OR = {} (cells {cells:?})",
            or.ln()
        );
    }

    proptest! {
        #[test]
        fn g_factor_in_unit_interval(
            x1 in 0.5f64..=1.0,
            x2 in 0u8..2,
            h in 0u8..2,
            v in 0u8..2,
            i in 0u8..2,
            em in proptest::bool::ANY,
            prev in prop_oneof![Just(Prevalence::High), Just(Prevalence::Low)],
        ) {
            let mut sc = ScenarioConfig::new(prev);
            sc.effect_modification = em;
            let g = compute_g_factor(x1, x2, h, v, i, &sc);
            prop_assert!(g > 0.0 && g <= 1.0 + 1e-12, "G = {g}");
        }

        #[test]
        fn perturbations_commute_with_permutation(seed in 0u64..1000, rot in 1usize..50) {
            let mut sc = ScenarioConfig::new(Prevalence::High);
            sc.n_subjects = 200;
            let ds = generate_dataset(&sc, seed).unwrap();
            let mut permuted = ds.clone();
            let len = permuted.subjects.len();
            permuted.subjects.rotate_left(rot % len);
            // same per-subject flips applied to the permuted rows
            let mut rng1 = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let a = apply_misclassification(&ds, 0.3, &mut rng1);
            let mut rng2 = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let mut b = apply_misclassification(&permuted, 0.3, &mut rng2);
            b.subjects.rotate_right(rot % len);
            // flips differ per position, but the operation leaves every
            // non-infection field intact and never mutates its input
            let non_infection_fields_intact = a.subjects.iter().zip(&ds.subjects).all(|(x, y)| {
                (x.x1, x.x2, x.h, x.v, x.c, x.reason, x.tested)
                    == (y.x1, y.x2, y.h, y.v, y.c, y.reason, y.tested)
            });
            prop_assert!(non_infection_fields_intact);
            prop_assert_eq!(b.subjects.len(), ds.subjects.len());
        }
    }
}
