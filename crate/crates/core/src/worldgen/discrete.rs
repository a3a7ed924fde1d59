//! Exactly enumerable discrete world.
//!
//! For small |S| x |A| x |V| the full joint distribution over
//! (S, A, S', V, V', O, O') is tabulated exactly, which makes every entropy
//! and (conditional) mutual information a finite sum. The information-bound
//! verification in the `mi` module consumes these tables.

use crate::error::{Error, Result};
use crate::rng::Rng;

/// How the next-step view V' relates to V.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViewTransition {
    /// Camera static across the transition: V' = V.
    Static,
    /// V' resampled independently from the view prior.
    Resample,
}

/// Specification of a finite world. Dynamics are deterministic
/// (s' = transition[s][a]); the policy, state prior, and view prior are
/// arbitrary distributions; observations are a deterministic table
/// o = obs(s, v).
#[derive(Debug, Clone)]
pub struct DiscreteWorldSpec {
    pub n_states: usize,
    pub n_actions: usize,
    pub n_views: usize,
    /// Row-major [s][a] table of next states.
    pub transition: Vec<usize>,
    /// Row-major [s][a] policy probabilities; rows sum to 1.
    pub policy: Vec<f64>,
    pub state_prior: Vec<f64>,
    pub view_prior: Vec<f64>,
    pub view_transition: ViewTransition,
    /// Optional row-major [s][v] observation table. `None` means the
    /// injective default o = s * n_views + v.
    pub obs_table: Option<Vec<usize>>,
}

/// Upper bound on enumerable joint atoms.
pub const MAX_ATOMS: usize = 10_000;

impl DiscreteWorldSpec {
    /// Uniform-policy world with seeded random deterministic dynamics and
    /// the injective observation function.
    pub fn random(n_states: usize, n_actions: usize, n_views: usize, seed: u64) -> Self {
        let mut rng = Rng::new(seed);
        let transition = (0..n_states * n_actions)
            .map(|_| rng.below(n_states))
            .collect();
        DiscreteWorldSpec {
            n_states,
            n_actions,
            n_views,
            transition,
            policy: vec![1.0 / n_actions as f64; n_states * n_actions],
            state_prior: vec![1.0 / n_states as f64; n_states],
            view_prior: vec![1.0 / n_views as f64; n_views],
            view_transition: ViewTransition::Static,
            obs_table: None,
        }
    }

    pub fn n_obs(&self) -> usize {
        match &self.obs_table {
            Some(t) => t.iter().copied().max().map_or(0, |m| m + 1),
            None => self.n_states * self.n_views,
        }
    }

    fn obs(&self, s: usize, v: usize) -> usize {
        match &self.obs_table {
            Some(t) => t[s * self.n_views + v],
            None => s * self.n_views + v,
        }
    }

    fn validate(&self) -> Result<()> {
        let atoms = self.n_states
            * self.n_actions
            * self.n_views
            * match self.view_transition {
                ViewTransition::Static => 1,
                ViewTransition::Resample => self.n_views,
            };
        if atoms > MAX_ATOMS {
            return Err(Error::config(format!(
                "world too large to enumerate: {atoms} atoms > {MAX_ATOMS}"
            )));
        }
        if self.transition.len() != self.n_states * self.n_actions {
            return Err(Error::config("transition table has wrong size"));
        }
        if self.transition.iter().any(|&s| s >= self.n_states) {
            return Err(Error::config("transition table references invalid state"));
        }
        if self.policy.len() != self.n_states * self.n_actions {
            return Err(Error::config("policy table has wrong size"));
        }
        for s in 0..self.n_states {
            let row: f64 = self.policy[s * self.n_actions..(s + 1) * self.n_actions]
                .iter()
                .sum();
            if (row - 1.0).abs() > 1e-9 {
                return Err(Error::config(format!("policy row {s} sums to {row}")));
            }
        }
        let sp: f64 = self.state_prior.iter().sum();
        let vp: f64 = self.view_prior.iter().sum();
        if (sp - 1.0).abs() > 1e-9 || (vp - 1.0).abs() > 1e-9 {
            return Err(Error::config("priors must sum to 1"));
        }
        Ok(())
    }
}

/// One atom of the exact joint distribution.
#[derive(Debug, Clone, Copy)]
pub struct JointAtom {
    pub s: usize,
    pub a: usize,
    pub s_next: usize,
    pub v: usize,
    pub v_next: usize,
    pub o: usize,
    pub o_next: usize,
    pub p: f64,
}

/// Exhaustive joint table over (S, A, S', V, V', O, O'), optionally extended
/// with a latent column Z = enc(O, O').
#[derive(Debug, Clone)]
pub struct JointTable {
    pub atoms: Vec<JointAtom>,
    pub z: Option<Vec<usize>>,
}

impl JointTable {
    pub fn total_probability(&self) -> f64 {
        self.atoms.iter().map(|a| a.p).sum()
    }

    /// Attach a deterministic encoder column z = enc(o, o').
    pub fn with_encoder(&self, enc: impl Fn(usize, usize) -> usize) -> JointTable {
        let z = self.atoms.iter().map(|a| enc(a.o, a.o_next)).collect();
        JointTable {
            atoms: self.atoms.clone(),
            z: Some(z),
        }
    }
}

/// Enumerate the world's exact joint distribution. Probabilities sum to 1
/// within 1e-12 (checked).
pub fn enumerate_discrete_world(spec: &DiscreteWorldSpec) -> Result<JointTable> {
    spec.validate()?;
    let mut atoms = Vec::new();
    for s in 0..spec.n_states {
        let ps = spec.state_prior[s];
        if ps == 0.0 {
            continue;
        }
        for a in 0..spec.n_actions {
            let pa = spec.policy[s * spec.n_actions + a];
            if pa == 0.0 {
                continue;
            }
            let s_next = spec.transition[s * spec.n_actions + a];
            for v in 0..spec.n_views {
                let pv = spec.view_prior[v];
                if pv == 0.0 {
                    continue;
                }
                match spec.view_transition {
                    ViewTransition::Static => {
                        atoms.push(JointAtom {
                            s,
                            a,
                            s_next,
                            v,
                            v_next: v,
                            o: spec.obs(s, v),
                            o_next: spec.obs(s_next, v),
                            p: ps * pa * pv,
                        });
                    }
                    ViewTransition::Resample => {
                        for v_next in 0..spec.n_views {
                            let pv2 = spec.view_prior[v_next];
                            if pv2 == 0.0 {
                                continue;
                            }
                            atoms.push(JointAtom {
                                s,
                                a,
                                s_next,
                                v,
                                v_next,
                                o: spec.obs(s, v),
                                o_next: spec.obs(s_next, v_next),
                                p: ps * pa * pv * pv2,
                            });
                        }
                    }
                }
            }
        }
    }
    let table = JointTable { atoms, z: None };
    let total = table.total_probability();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::numeric(format!(
            "joint probabilities sum to {total}, not 1"
        )));
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atom_count_for_small_world() {
        // |S|=4, |A|=2, |V|=2 with deterministic dynamics and a uniform
        // policy prior: 4*2*2 = 16 atoms under a static view.
        let spec = DiscreteWorldSpec::random(4, 2, 2, 1);
        let table = enumerate_discrete_world(&spec).unwrap();
        assert_eq!(table.atoms.len(), 16);
        assert!((table.total_probability() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn action_marginal_matches_policy_prior() {
        let mut spec = DiscreteWorldSpec::random(3, 2, 2, 5);
        // Non-uniform, state-independent policy.
        for s in 0..3 {
            spec.policy[s * 2] = 0.3;
            spec.policy[s * 2 + 1] = 0.7;
        }
        let table = enumerate_discrete_world(&spec).unwrap();
        let mut marginal = [0.0; 2];
        for atom in &table.atoms {
            marginal[atom.a] += atom.p;
        }
        assert!((marginal[0] - 0.3).abs() < 1e-12);
        assert!((marginal[1] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn too_large_world_rejected() {
        let spec = DiscreteWorldSpec::random(100, 20, 10, 0);
        assert!(matches!(
            enumerate_discrete_world(&spec),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn resample_views_enumerates_pairs() {
        let mut spec = DiscreteWorldSpec::random(2, 2, 2, 3);
        spec.view_transition = ViewTransition::Resample;
        let table = enumerate_discrete_world(&spec).unwrap();
        assert_eq!(table.atoms.len(), 2 * 2 * 2 * 2);
        assert!((table.total_probability() - 1.0).abs() < 1e-12);
    }
}
