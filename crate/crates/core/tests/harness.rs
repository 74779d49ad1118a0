use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use mfgsteer::agents::{adaptive_regret, Learner, LearnerKind, OgdLearner, Projector};
use mfgsteer::harness::{
    compute_summary, write_rounds_csv, ExperimentConfig, RoundDiagnostics, RoundRecord, Setup, Simulation,
};
use mfgsteer::model::{sample_trajectory, Density, MfgModel, Policy, Trajectory};
use mfgsteer::polytope::polytope_constraints;
use mfgsteer::steering::sandboxing_reward;

fn config(json: &str) -> ExperimentConfig {
    ExperimentConfig::from_json_str(json).unwrap()
}

fn small(strategy: &str, rounds: usize) -> ExperimentConfig {
    config(&format!(
        r#"{{
            "generator": {{"S": 2, "A": 2, "H": 3, "reward": {{"family": "linear"}}, "r_max": 1.0}},
            "population": [{{"count": 5, "kind": "ogd"}}],
            "mediator": {{"strategy": "{strategy}"}},
            "utility": {{"kind": "linear_random"}},
            "T": {rounds},
            "sigma": 0.2,
            "seed": 3
        }}"#
    ))
}

#[test]
fn single_round_known_model() {
    let mut c = small("known_model", 1);
    c.generator.as_mut().unwrap().reward = serde_json::from_str(r#"{"family": "zero"}"#).unwrap();
    c.generator.as_mut().unwrap().r_max = 0.0;
    let out = Simulation::new(c).unwrap().run().unwrap();
    assert_eq!(out.records.len(), 1);
    let r = &out.records[0];
    assert_eq!(r.t, 1);
    assert_eq!(r.k, 1);
    assert!(r.gap_inc >= -1e-9, "utility above the optimum: {}", r.gap_inc);
    assert!(r.cost >= 0.0);
    assert_eq!(r.cost, r.adj_cost);
    assert_eq!(out.summary.rounds, 1);
}

#[test]
fn average_payment_equals_cost() {
    for strategy in ["known_model", "scenario1", "scenario2"] {
        let mut c = small(strategy, 40);
        if strategy != "scenario2" {
            c.generator.as_mut().unwrap().reward = serde_json::from_str(r#"{"family": "zero"}"#).unwrap();
            c.generator.as_mut().unwrap().r_max = 0.0;
        }
        let out = Simulation::new(c).unwrap().run().unwrap();
        for r in &out.records {
            assert!(
                (r.diagnostics.avg_payment - r.cost).abs() <= 1e-12,
                "{strategy} round {}: {} vs {}",
                r.t,
                r.diagnostics.avg_payment,
                r.cost
            );
        }
    }
}

#[test]
fn same_seed_same_bytes_and_different_seed_differs() {
    let csv = |seed: u64| {
        let mut c = small("scenario2", 50);
        c.seed = seed;
        let out = Simulation::new(c).unwrap().run().unwrap();
        let mut buf = Vec::new();
        write_rounds_csv(&out.records, &mut buf).unwrap();
        buf
    };
    assert_eq!(csv(9), csv(9));
    assert_ne!(csv(9), csv(10));
}

#[test]
fn csv_header_and_row_count() {
    let out = Simulation::new(small("scenario1", 25)).unwrap().run().unwrap();
    let mut buf = Vec::new();
    write_rounds_csv(&out.records, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,k,utility,gap_inc,cost,adj_cost,l1_to_target,max_eps,max_width"
    );
    assert_eq!(lines.count(), 25);
}

/// OGD agent whose policy object must never be consulted by the harness.
struct Sentinel {
    inner: OgdLearner,
    policy: Policy,
    rollouts: Arc<AtomicUsize>,
}

impl Learner for Sentinel {
    fn kind(&self) -> LearnerKind {
        LearnerKind::Ogd
    }

    fn density(&self) -> &Density {
        self.inner.density()
    }

    fn policy(&self) -> Policy {
        panic!("the harness must not read a learner's policy");
    }

    fn update(&mut self, reward_vector: &[f64]) -> mfgsteer::Result<()> {
        self.inner.update(reward_vector)?;
        self.policy = mfgsteer::model::induced_policy(self.inner.density());
        Ok(())
    }

    fn trajectory(
        &self,
        model: &MfgModel,
        population: &Density,
        noise_sigma: f64,
        rng: &mut dyn rand::RngCore,
    ) -> mfgsteer::Result<Trajectory> {
        self.rollouts.fetch_add(1, Ordering::Relaxed);
        sample_trajectory(model, &self.policy, population, noise_sigma, rng)
    }
}

#[test]
fn harness_only_uses_density_update_and_trajectory() {
    let setup = Setup::new(small("scenario2", 30)).unwrap();
    let projector = Arc::new(Projector::new(polytope_constraints(&setup.model)).unwrap());
    let rollouts = Arc::new(AtomicUsize::new(0));
    let agents: Vec<Box<dyn Learner>> = (0..3)
        .map(|_| {
            let policy = Policy::uniform(setup.dims());
            let start = mfgsteer::model::compute_density(&setup.model, &policy).unwrap();
            Box::new(Sentinel {
                inner: OgdLearner::new(projector.clone(), start, 0.5).unwrap(),
                policy,
                rollouts: rollouts.clone(),
            }) as Box<dyn Learner>
        })
        .collect();
    let out = Simulation::with_agents(setup, agents).unwrap().run().unwrap();
    assert_eq!(out.records.len(), 30);
    assert_eq!(rollouts.load(Ordering::Relaxed), 30);
}

#[test]
fn population_regret_is_at_most_the_worst_agent() {
    let mut sim = Simulation::new(small("scenario2", 60)).unwrap();
    sim.track_regret();
    let model = sim.setup().model.clone();
    let out = sim.run().unwrap();
    let trace = out.regret.unwrap();
    for (a, b) in [(1, 60), (1, 20), (21, 60), (30, 45)] {
        let pop = adaptive_regret(&trace.population, &model, a, b).unwrap();
        let worst = trace
            .agents
            .iter()
            .map(|l| adaptive_regret(l, &model, a, b).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        let mean = trace
            .agents
            .iter()
            .map(|l| adaptive_regret(l, &model, a, b).unwrap())
            .sum::<f64>()
            / trace.agents.len() as f64;
        assert!(pop <= mean + 1e-9, "[{a},{b}] population {pop} > mean {mean}");
        assert!(pop <= worst + 1e-9, "[{a},{b}] population {pop} > worst {worst}");
    }
}

#[test]
fn episodes_never_exceed_the_doubling_bound() {
    let out = Simulation::new(small("scenario1", 400)).unwrap().run().unwrap();
    let bound = (3 * 2 * 2) as f64 * (400f64).log2();
    assert!((out.summary.k as f64) <= bound);
    assert_eq!(out.boundaries.first(), Some(&0));
    assert!(out.boundaries.windows(2).all(|w| w[0] < w[1]));
}

fn synthetic(t: usize, gap: f64, cost: f64, adj: f64) -> RoundRecord {
    RoundRecord {
        t,
        k: 1,
        utility: 0.0,
        gap_inc: gap,
        cost,
        adj_cost: adj,
        l1_to_target: gap,
        max_eps: 0.0,
        max_width: 0.0,
        diagnostics: RoundDiagnostics::default(),
    }
}

#[test]
fn inverse_sqrt_increments_have_half_slope() {
    let recs: Vec<RoundRecord> = (1..=4000)
        .map(|t| {
            let v = 0.7 / (t as f64).sqrt();
            synthetic(t, v, v, v)
        })
        .collect();
    let s = compute_summary(&recs, 3);
    for slope in [s.slopes.delta_t, s.slopes.c_t, s.slopes.adj_c_t] {
        let slope = slope.unwrap();
        assert!((slope - 0.5).abs() <= 0.05, "slope {slope}");
    }
    assert_eq!(s.k, 3);
}

#[test]
fn sandboxing_reward_has_zero_adjusted_cost() {
    let r_star = [0.2, 0.9, 0.0, 1.0, 0.5, 0.35];
    let mu = [0.1, 0.3, 0.05, 0.15, 0.25, 0.15];
    let r_max = 1.0;
    let reward = sandboxing_reward(&r_star, r_max).unwrap();
    let cost: f64 = reward.iter().zip(&mu).map(|(a, b)| a * b).sum();
    let comparator: f64 = mu.iter().zip(&r_star).map(|(m, r)| m * (r_max - r)).sum();
    assert!((cost - comparator).abs() <= 1e-15);
    let recs: Vec<RoundRecord> = (1..=100).map(|t| synthetic(t, 0.1, cost, cost - comparator)).collect();
    let s = compute_summary(&recs, 0);
    assert!(s.adj_c_t.abs() <= 1e-12);
    assert_eq!(s.slopes.adj_c_t, None);
}

#[test]
fn shadow_is_rejected_outside_unknown_utility() {
    let mut c = small("scenario2", 10);
    c.mediator.shadow = true;
    assert!(c.validate().is_err());
}

#[test]
fn malformed_configs_name_the_field() {
    let err = ExperimentConfig::from_json_str(r#"{"T": "many"}"#).unwrap_err();
    assert!(err.to_string().contains('T'), "{err}");
    let mut c = small("scenario1", 10);
    c.agents = Some(99);
    let err = c.validate().unwrap_err();
    assert!(err.to_string().contains('N'), "{err}");
    let err = ExperimentConfig::from_json_str(r#"{"bogus": 1}"#).unwrap_err();
    assert!(err.to_string().contains("bogus"), "{err}");
}
