//! Backlog queues driving the online controller.
//!
//! * `Q^r` (r = 1..=R): unserved demand of the EVs with exactly `r` slots of
//!   parking left. Every slot the whole array shifts one step toward `r = 1`.
//! * `Y`: debt, the demand that was still in `Q^1` when its EVs left.
//! * `H_i`: per-EV virtual temperature queue, `T_i - theta_i`.
//!
//! A slot's bookkeeping is `debt_update` (reads `Q^1`), then `advance`
//! (shifts and refills), then one `temp_queue_update` per present EV.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EvId, EvSession, SlotDecision};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueState {
    /// Index `r` holds `Q^r`; index 0 is unused and stays zero.
    q_by_r: Vec<f64>,
    pub y_debt: f64,
    pub h_by_ev: BTreeMap<EvId, f64>,
}

impl QueueState {
    pub fn new(r_max: usize) -> Self {
        Self {
            q_by_r: vec![0.0; r_max + 1],
            y_debt: 0.0,
            h_by_ev: BTreeMap::new(),
        }
    }

    pub fn r_max(&self) -> usize {
        self.q_by_r.len() - 1
    }

    /// `Q^r`, zero outside `1..=R`.
    pub fn q(&self, r: usize) -> f64 {
        if r == 0 {
            return 0.0;
        }
        self.q_by_r.get(r).copied().unwrap_or(0.0)
    }

    /// `Q^1..=Q^R`.
    pub fn demand_queues(&self) -> &[f64] {
        &self.q_by_r[1..]
    }

    /// Sum of all demand queues.
    pub fn demand_backlog(&self) -> f64 {
        self.q_by_r.iter().sum()
    }

    pub fn h(&self, id: EvId) -> Option<f64> {
        self.h_by_ev.get(&id).copied()
    }

    /// A zero vector sized for per-queue quantities (index 0 unused).
    pub fn zeros(&self) -> Vec<f64> {
        vec![0.0; self.q_by_r.len()]
    }

    /// Registers EVs that become available at `next_slot` and returns their
    /// demand grouped by remaining parking time (`a^r`, index `r`). The demand
    /// enters `Q` on the following [`advance`](Self::advance) (or
    /// [`inject`](Self::inject) for the very first slot).
    pub fn admit_arrivals(
        &mut self,
        next_slot: usize,
        arrivals: &[(&EvSession, f64)],
    ) -> Result<Vec<f64>> {
        let r_max = self.r_max();
        let mut a = self.zeros();
        for (ev, _) in arrivals {
            let r = ev.t_depart.saturating_sub(next_slot);
            if r < 1 || r > r_max {
                return Err(Error::RemainingTimeOutOfRange { ev: ev.id, r, r_max });
            }
            if self.h_by_ev.contains_key(&ev.id) {
                return Err(Error::DuplicateEv(ev.id));
            }
        }
        for (i, (ev, _)) in arrivals.iter().enumerate() {
            if arrivals[..i].iter().any(|(other, _)| other.id == ev.id) {
                return Err(Error::DuplicateEv(ev.id));
            }
        }
        for (ev, theta) in arrivals {
            let r = ev.t_depart - next_slot;
            a[r] += ev.demand();
            self.h_by_ev.insert(ev.id, ev.t_initial - theta);
        }
        Ok(a)
    }

    /// Adds arrival demand straight into the queues (no shift).
    pub fn inject(&mut self, a_by_r: &[f64]) {
        for (q, a) in self.q_by_r.iter_mut().zip(a_by_r) {
            *q += a;
        }
    }

    /// Shifts every queue one slot toward its deadline:
    /// `Q^{r-1} <- max(Q^r - x^r, 0) + a^{r-1}` for `r = 2..=R`, and
    /// `Q^R <- a^R`. `Q^1` is dropped; account for it with
    /// [`debt_update`](Self::debt_update) first.
    pub fn advance(&mut self, x_by_r: &[f64], a_by_r: &[f64]) {
        let r_max = self.r_max();
        let x = |r: usize| x_by_r.get(r).copied().unwrap_or(0.0);
        let a = |r: usize| a_by_r.get(r).copied().unwrap_or(0.0);
        for r in 2..=r_max {
            debug_assert!(x(r) >= 0.0);
            self.q_by_r[r - 1] = (self.q_by_r[r] - x(r)).max(0.0) + a(r - 1);
        }
        if r_max >= 1 {
            self.q_by_r[r_max] = a(r_max);
        }
    }

    /// `Y <- Y + Q^1 - x^1`.
    pub fn debt_update(&mut self, q1: f64, x1: f64) {
        debug_assert!(x1 <= q1 + 1e-9, "x1 {x1} exceeds Q^1 {q1}");
        self.y_debt += q1 - x1;
    }

    /// `H_i <- H_i - loss + gain`.
    pub fn temp_queue_update(&mut self, id: EvId, dt_loss: f64, dt_gain: f64) -> Result<f64> {
        let h = self.h_by_ev.get_mut(&id).ok_or(Error::UnknownEv(id))?;
        *h += dt_gain - dt_loss;
        Ok(*h)
    }

    /// Overwrites `H_i`, used when the temperature is observed from a truth
    /// model other than the queue model.
    pub fn set_h(&mut self, id: EvId, h: f64) -> Result<()> {
        let slot = self.h_by_ev.get_mut(&id).ok_or(Error::UnknownEv(id))?;
        *slot = h;
        Ok(())
    }

    pub fn depart(&mut self, id: EvId) {
        self.h_by_ev.remove(&id);
    }
}

/// Membership of one present EV in the deadline groups.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupMember {
    pub id: EvId,
    pub r: usize,
    pub delta_c: f64,
}

/// Energy delivered to each queue: `x^r = sum over group r of delta_c p_c dt`.
pub fn x_from_decisions(
    decision: &SlotDecision,
    groups: &[GroupMember],
    dt_hours: f64,
    r_max: usize,
) -> Vec<f64> {
    let mut x = vec![0.0; r_max + 1];
    for m in groups {
        x[m.r] += m.delta_c * decision.charge(m.id) * dt_hours;
    }
    x
}
