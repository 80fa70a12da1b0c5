//! Crossbar non-idealities and a behavioral model of the analog neuron circuit.

mod circuit;
mod quantize;
mod variation;

pub use circuit::{
    circuit_sim, demo_two_spike, discrete_equivalent, match_discrete, write_trace_csv, AnalogTrace,
    CircuitInput, CircuitParams, MatchReport,
};
pub use quantize::{quantize_matrix, quantize_network, QuantSpec};
pub use variation::{
    apply_variation, apply_variation_network, robustness_sweep, summarize, write_sweep_csv,
    SweepRow, SweepSummary,
};
