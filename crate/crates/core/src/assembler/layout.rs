use std::ops::Range;

use serde::{Deserialize, Serialize};

/// Column layout of the stacked decision vector.
///
/// Order: per battery `[P_dis(N), P_ch(N)]`, then `P_buy(N)`, `P_sell(N)`,
/// then per step `[P_br(n_br), l_br(n_br), v(n_br)]` (flow models only), then
/// `ΔC(N)` per DR load type. The squared voltage slot `j` belongs to bus `j + 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionLayout {
    pub n_pre: usize,
    pub n_batt: usize,
    pub n_br: usize,
    pub n_tp: usize,
    /// Whether the per-step branch-flow columns exist.
    pub flow: bool,
}

pub fn build_layout(n_pre: usize, n_batt: usize, n_br: usize, n_tp: usize) -> DecisionLayout {
    DecisionLayout {
        n_pre,
        n_batt,
        n_br,
        n_tp,
        flow: true,
    }
}

impl DecisionLayout {
    /// Layout without branch-flow columns, used by the aggregate-balance model.
    pub fn lp(n_pre: usize, n_batt: usize, n_tp: usize) -> Self {
        Self {
            n_pre,
            n_batt,
            n_br: 0,
            n_tp,
            flow: false,
        }
    }

    fn flow_width(&self) -> usize {
        if self.flow {
            3 * self.n_br
        } else {
            0
        }
    }

    pub fn dim(&self) -> usize {
        self.n_pre * (2 * (1 + self.n_batt) + self.flow_width() + self.n_tp)
    }

    pub fn dis(&self, batt: usize, n: usize) -> usize {
        2 * self.n_pre * batt + n
    }

    pub fn ch(&self, batt: usize, n: usize) -> usize {
        2 * self.n_pre * batt + self.n_pre + n
    }

    pub fn buy(&self, n: usize) -> usize {
        2 * self.n_pre * self.n_batt + n
    }

    pub fn sell(&self, n: usize) -> usize {
        2 * self.n_pre * self.n_batt + self.n_pre + n
    }

    fn flow_base(&self, n: usize) -> usize {
        debug_assert!(self.flow, "layout has no branch-flow columns");
        2 * self.n_pre * (self.n_batt + 1) + 3 * self.n_br * n
    }

    /// Sending-end power of branch `e` at step `n`.
    pub fn p(&self, n: usize, e: usize) -> usize {
        self.flow_base(n) + e
    }

    pub fn l(&self, n: usize, e: usize) -> usize {
        self.flow_base(n) + self.n_br + e
    }

    /// Squared voltage in slot `slot` (bus `slot + 2`) at step `n`.
    pub fn v(&self, n: usize, slot: usize) -> usize {
        self.flow_base(n) + 2 * self.n_br + slot
    }

    /// Incentive of DR type `tp` at step `n`.
    pub fn dc(&self, tp: usize, n: usize) -> usize {
        2 * self.n_pre * (self.n_batt + 1) + self.n_pre * self.flow_width() + tp * self.n_pre + n
    }

    pub fn battery_block(&self, batt: usize) -> Range<usize> {
        self.dis(batt, 0)..self.dis(batt, 0) + 2 * self.n_pre
    }

    pub fn grid_block(&self) -> Range<usize> {
        self.buy(0)..self.buy(0) + 2 * self.n_pre
    }

    pub fn flow_block(&self) -> Range<usize> {
        let start = 2 * self.n_pre * (self.n_batt + 1);
        start..start + self.n_pre * self.flow_width()
    }

    pub fn dc_block(&self) -> Range<usize> {
        let start = self.flow_block().end;
        start..start + self.n_tp * self.n_pre
    }
}
