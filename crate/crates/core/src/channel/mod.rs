//! Block-fading MIMO link: channel matrices, SNR profiles, symbols, noise and traces.

mod block;
mod constellation;
mod model;
mod snr;
mod trace;

pub use block::{BlockGenerator, ChannelRealization, ChannelSource, LinkConfig, TransmissionBlock};
pub use constellation::Constellation;
pub use model::{generate_symbols, synthetic_channel, transmit};
pub use snr::{db_to_linear, snr_profile, snr_profile_db, SnrProfileConfig, SnrProfileKind};
pub use trace::{format_trace, load_trace, write_trace, TraceRecord};
