//! Structural checks of the Store-Forward stationary law: local balance,
//! independence of queues sharing no pool, and the large-deviation rate.

pub mod balance;
pub mod independence;
pub mod ldp;

pub use balance::{
    balance_check, forward_transitions, reversed_transitions, BalanceReport, Transition, TransitionClass,
};
pub use independence::{independence_test, IndependenceConfig, IndependenceReport, Verdict};
pub use ldp::{ldp_rate, lyapunov_drift, phi_log_limit, DriftReport, LogPhiLimit, PiecewiseLinearProfile};
