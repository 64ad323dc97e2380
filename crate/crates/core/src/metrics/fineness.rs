use super::exact::{d_dpi_exact, d_jpi_exact, d_pi_exact, d_ppi_exact, d_vpi_exact};
use crate::error::Result;
use crate::mdp::{TabularMdp, TabularPolicy};

/// Distances at or below this count as equivalence.
pub const EQUIVALENCE_TOL: f64 = 1e-9;

/// Which abstractions map a policy pair to the same abstract policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FinenessFlags {
    pub eq_pi: bool,
    pub eq_ppi: bool,
    pub eq_vpi: bool,
    pub eq_dpi: bool,
    pub eq_jpi: bool,
}

impl FinenessFlags {
    /// The `(eq_pi, eq_ppi, eq_vpi)` triple.
    pub fn triple(&self) -> (bool, bool, bool) {
        (self.eq_pi, self.eq_ppi, self.eq_vpi)
    }

    /// Implications of the abstraction order that this pair breaks.
    ///
    /// `pi => ppi`, `ppi => dpi` and `vpi => jpi` hold for any reward form;
    /// `ppi => vpi` and `dpi => jpi` only when rewards depend on the state alone.
    pub fn violations(&self, state_based_reward: bool) -> Vec<&'static str> {
        let mut out = Vec::new();
        let mut check = |premise: bool, conclusion: bool, name: &'static str| {
            if premise && !conclusion {
                out.push(name);
            }
        };
        check(self.eq_pi, self.eq_ppi, "pi => ppi");
        check(self.eq_ppi, self.eq_dpi, "ppi => dpi");
        check(self.eq_vpi, self.eq_jpi, "vpi => jpi");
        if state_based_reward {
            check(self.eq_ppi, self.eq_vpi, "ppi => vpi");
            check(self.eq_dpi, self.eq_jpi, "dpi => jpi");
        }
        out
    }
}

/// Evaluates every exact metric on the pair and thresholds it at [`EQUIVALENCE_TOL`].
pub fn fineness_oracle(mdp: &TabularMdp, pi1: &TabularPolicy, pi2: &TabularPolicy) -> Result<FinenessFlags> {
    let eq = |d: f64| d <= EQUIVALENCE_TOL;
    Ok(FinenessFlags {
        eq_pi: eq(d_pi_exact(mdp, pi1, pi2)?),
        eq_ppi: eq(d_ppi_exact(mdp, pi1, pi2)?),
        eq_vpi: eq(d_vpi_exact(mdp, pi1, pi2)?),
        eq_dpi: eq(d_dpi_exact(mdp, pi1, pi2)?),
        eq_jpi: eq(d_jpi_exact(mdp, pi1, pi2)?),
    })
}
