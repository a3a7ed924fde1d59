//! Exact plug-in information quantities on enumerated joint tables, and the
//! executable information lower bound
//!   I(Z;A) >= H(Z) - I(Z;V,V'|S,S') - H(S,S'|A)
//! which holds for every deterministic encoder Z = enc(O, O') on a world
//! where O is a deterministic function of (S, V).

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::worldgen::discrete::JointTable;

/// Column selectors over the joint table (Z requires an attached encoder).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    S,
    A,
    SNext,
    V,
    VNext,
    O,
    ONext,
    Z,
}

fn column_value(table: &JointTable, idx: usize, col: Column) -> Result<usize> {
    let atom = &table.atoms[idx];
    Ok(match col {
        Column::S => atom.s,
        Column::A => atom.a,
        Column::SNext => atom.s_next,
        Column::V => atom.v,
        Column::VNext => atom.v_next,
        Column::O => atom.o,
        Column::ONext => atom.o_next,
        Column::Z => {
            let z = table
                .z
                .as_ref()
                .ok_or_else(|| Error::data("table has no encoder column; attach one first"))?;
            z[idx]
        }
    })
}

fn check_normalized(table: &JointTable) -> Result<()> {
    let total = table.total_probability();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::numeric(format!(
            "joint probabilities sum to {total}, not 1"
        )));
    }
    Ok(())
}

fn marginal(table: &JointTable, cols: &[Column]) -> Result<BTreeMap<Vec<usize>, f64>> {
    let mut probs: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    for idx in 0..table.atoms.len() {
        let key: Vec<usize> = cols
            .iter()
            .map(|&c| column_value(table, idx, c))
            .collect::<Result<_>>()?;
        *probs.entry(key).or_insert(0.0) += table.atoms[idx].p;
    }
    Ok(probs)
}

fn entropy_of(probs: &BTreeMap<Vec<usize>, f64>) -> f64 {
    probs
        .values()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum()
}

/// Round float dust on quantities that are nonnegative by theory.
fn clamp_tiny(v: f64) -> f64 {
    if v < 0.0 && v > -1e-12 {
        0.0
    } else {
        v
    }
}

/// H(cols) in bits.
pub fn entropy_bits(table: &JointTable, cols: &[Column]) -> Result<f64> {
    check_normalized(table)?;
    Ok(clamp_tiny(entropy_of(&marginal(table, cols)?)))
}

/// I(X; Y) in bits, exact plug-in.
pub fn mutual_information_bits(table: &JointTable, x: &[Column], y: &[Column]) -> Result<f64> {
    check_normalized(table)?;
    let hx = entropy_of(&marginal(table, x)?);
    let hy = entropy_of(&marginal(table, y)?);
    let joint: Vec<Column> = x.iter().chain(y).copied().collect();
    let hxy = entropy_of(&marginal(table, &joint)?);
    Ok(clamp_tiny(hx + hy - hxy))
}

/// I(X; Y | C) in bits: H(X,C) + H(Y,C) - H(X,Y,C) - H(C).
pub fn conditional_mi_bits(
    table: &JointTable,
    x: &[Column],
    y: &[Column],
    cond: &[Column],
) -> Result<f64> {
    check_normalized(table)?;
    let xc: Vec<Column> = x.iter().chain(cond).copied().collect();
    let yc: Vec<Column> = y.iter().chain(cond).copied().collect();
    let xyc: Vec<Column> = x.iter().chain(y).chain(cond).copied().collect();
    let h_xc = entropy_of(&marginal(table, &xc)?);
    let h_yc = entropy_of(&marginal(table, &yc)?);
    let h_xyc = entropy_of(&marginal(table, &xyc)?);
    let h_c = entropy_of(&marginal(table, cond)?);
    Ok(clamp_tiny(h_xc + h_yc - h_xyc - h_c))
}

/// H(X | C) in bits: H(X,C) - H(C).
pub fn conditional_entropy_bits(table: &JointTable, x: &[Column], cond: &[Column]) -> Result<f64> {
    check_normalized(table)?;
    let xc: Vec<Column> = x.iter().chain(cond).copied().collect();
    let h_xc = entropy_of(&marginal(table, &xc)?);
    let h_c = entropy_of(&marginal(table, cond)?);
    Ok(clamp_tiny(h_xc - h_c))
}

/// All four bound terms plus the slack, computed exactly.
#[derive(Debug, Clone, Copy)]
pub struct BoundReport {
    pub i_z_a: f64,
    pub h_z: f64,
    pub i_z_views_given_states: f64,
    pub h_states_given_action: f64,
    pub slack: f64,
}

impl BoundReport {
    pub fn rhs(&self) -> f64 {
        self.h_z - self.i_z_views_given_states - self.h_states_given_action
    }
}

/// Evaluate the bound for the deterministic encoder already attached to the
/// table (via [`JointTable::with_encoder`]). Errors if no encoder column is
/// present; stochastic encoders cannot be expressed through that interface.
pub fn verify_bound(table: &JointTable) -> Result<BoundReport> {
    if table.z.is_none() {
        return Err(Error::data(
            "verify_bound needs a deterministic encoder column (JointTable::with_encoder)",
        ));
    }
    let i_z_a = mutual_information_bits(table, &[Column::Z], &[Column::A])?;
    let h_z = entropy_bits(table, &[Column::Z])?;
    let i_z_views_given_states = conditional_mi_bits(
        table,
        &[Column::Z],
        &[Column::V, Column::VNext],
        &[Column::S, Column::SNext],
    )?;
    let h_states_given_action =
        conditional_entropy_bits(table, &[Column::S, Column::SNext], &[Column::A])?;
    let report = BoundReport {
        i_z_a,
        h_z,
        i_z_views_given_states,
        h_states_given_action,
        slack: i_z_a - (h_z - i_z_views_given_states - h_states_given_action),
    };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::worldgen::discrete::{
        enumerate_discrete_world, DiscreteWorldSpec, JointAtom, ViewTransition,
    };

    /// Build a bare two-variable table (X stored in `s`, Y in `a`).
    fn two_var_table(p: &[[f64; 2]; 2]) -> JointTable {
        let mut atoms = Vec::new();
        for x in 0..2 {
            for y in 0..2 {
                atoms.push(JointAtom {
                    s: x,
                    a: y,
                    s_next: 0,
                    v: 0,
                    v_next: 0,
                    o: x,
                    o_next: 0,
                    p: p[x][y],
                });
            }
        }
        JointTable { atoms, z: None }
    }

    #[test]
    fn hand_computed_2x2_mi() {
        let table = two_var_table(&[[0.4, 0.1], [0.1, 0.4]]);
        let mi = mutual_information_bits(&table, &[Column::S], &[Column::A]).unwrap();
        // I = 1 + 1 - H(0.4,0.1,0.1,0.4) = 0.278072 bits
        assert!((mi - 0.2780719051126377).abs() < 1e-12, "mi = {mi}");
    }

    #[test]
    fn product_table_has_zero_mi() {
        let table = two_var_table(&[[0.25, 0.25], [0.25, 0.25]]);
        let mi = mutual_information_bits(&table, &[Column::S], &[Column::A]).unwrap();
        assert_eq!(mi, 0.0);
    }

    #[test]
    fn self_information_equals_entropy() {
        let table = two_var_table(&[[0.3, 0.2], [0.4, 0.1]]);
        let mi = mutual_information_bits(&table, &[Column::S], &[Column::S]).unwrap();
        let h = entropy_bits(&table, &[Column::S]).unwrap();
        assert!((mi - h).abs() < 1e-12);
    }

    #[test]
    fn unnormalized_table_rejected() {
        let table = two_var_table(&[[0.4, 0.1], [0.1, 0.3]]);
        assert!(entropy_bits(&table, &[Column::S]).is_err());
    }

    #[test]
    fn conditional_entropy_on_two_state_chain() {
        // Two states, two actions: action 0 stays, action 1 flips;
        // uniform prior and policy. Given A, (S, S') has exactly the
        // randomness of S: H(S,S'|A) = H(S) = 1 bit.
        let spec = DiscreteWorldSpec {
            n_states: 2,
            n_actions: 2,
            n_views: 1,
            transition: vec![0, 1, 1, 0],
            policy: vec![0.5; 4],
            state_prior: vec![0.5; 2],
            view_prior: vec![1.0],
            view_transition: ViewTransition::Static,
            obs_table: None,
        };
        let table = enumerate_discrete_world(&spec).unwrap();
        let h = conditional_entropy_bits(&table, &[Column::S, Column::SNext], &[Column::A]).unwrap();
        assert!((h - 1.0).abs() < 1e-12, "h = {h}");
        // And unconditionally H(S,S') = 2 bits here (4 equally likely pairs).
        let h2 = entropy_bits(&table, &[Column::S, Column::SNext]).unwrap();
        assert!((h2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn data_processing_inequality_exact() {
        // Coarse-graining Z cannot increase I(Z; A).
        let spec = DiscreteWorldSpec::random(4, 2, 2, 11);
        let table = enumerate_discrete_world(&spec).unwrap();
        let n_obs = spec.n_obs();
        let mut rng = Rng::new(5);
        let fine_map: Vec<usize> = (0..n_obs * n_obs).map(|_| rng.below(6)).collect();
        let fine = table.with_encoder(|o, o2| fine_map[o * n_obs + o2]);
        let i_fine = mutual_information_bits(&fine, &[Column::Z], &[Column::A]).unwrap();
        // Deterministic post-processing f(z) = z % 2.
        let coarse = table.with_encoder(|o, o2| fine_map[o * n_obs + o2] % 2);
        let i_coarse = mutual_information_bits(&coarse, &[Column::Z], &[Column::A]).unwrap();
        assert!(
            i_coarse <= i_fine + 1e-12,
            "coarse {i_coarse} > fine {i_fine}"
        );
    }

    #[test]
    fn bound_constant_encoder() {
        let spec = DiscreteWorldSpec::random(4, 2, 2, 3);
        let table = enumerate_discrete_world(&spec).unwrap().with_encoder(|_, _| 0);
        let report = verify_bound(&table).unwrap();
        assert_eq!(report.i_z_a, 0.0);
        assert_eq!(report.h_z, 0.0);
        assert_eq!(report.i_z_views_given_states, 0.0);
        // Slack reduces to H(S,S'|A) >= 0.
        assert!((report.slack - report.h_states_given_action).abs() < 1e-12);
        assert!(report.slack >= 0.0);
    }

    #[test]
    fn bound_viewpoint_only_encoder() {
        // Injective default observation o = s * nV + v lets the encoder
        // recover (V, V') exactly; V is independent of A, so I(Z;A) = 0 and
        // the slack must still be nonnegative.
        let spec = DiscreteWorldSpec::random(4, 2, 2, 7);
        let n_views = spec.n_views;
        let table = enumerate_discrete_world(&spec)
            .unwrap()
            .with_encoder(move |o, o2| (o % n_views) * n_views + (o2 % n_views));
        let report = verify_bound(&table).unwrap();
        assert!(report.i_z_a.abs() < 1e-12, "I(Z;A) = {}", report.i_z_a);
        assert!(report.slack >= -1e-9, "slack = {}", report.slack);
    }

    #[test]
    fn bound_holds_for_random_encoders() {
        let spec = DiscreteWorldSpec::random(4, 2, 2, 19);
        let table = enumerate_discrete_world(&spec).unwrap();
        let n_obs = spec.n_obs();
        let mut rng = Rng::new(23);
        for trial in 0..100 {
            let n_codes = 2 + rng.below(7);
            let map: Vec<usize> = (0..n_obs * n_obs).map(|_| rng.below(n_codes)).collect();
            let encoded = table.with_encoder(|o, o2| map[o * n_obs + o2]);
            let report = verify_bound(&encoded).unwrap();
            assert!(
                report.slack >= -1e-9,
                "trial {trial}: slack = {}",
                report.slack
            );
        }
    }

    #[test]
    fn missing_encoder_column_rejected() {
        let spec = DiscreteWorldSpec::random(2, 2, 2, 1);
        let table = enumerate_discrete_world(&spec).unwrap();
        assert!(verify_bound(&table).is_err());
    }
}
