//! Frequency-domain channel synthesis with 1-bit beam codebooks.

mod array;
mod grid;
mod synth;

pub use array::{
    array_factor, quantize_1bit, steering_codeword, ArrayGeometry, BeamCodebook, Codeword, RxGrid,
};
pub use grid::FrequencyGrid;
pub use synth::{
    derive_seed, generate_clutter, geometric_paths, run_sweep, synthesize_channel, BeamState,
    ChannelTensor, PathComponent, PathOrigin, PropagationModel, Scatterer, SweepRole, SynthConfig,
    TensorMeta,
};
