//! AST for programs and the runtime data model for institutional state.

pub mod ast;
pub mod pretty;
pub mod state;
pub mod time;
pub mod value;

pub use ast::*;
pub use pretty::{frame_to_string, pretty_print};
pub use state::*;
pub use time::{duration_to_ticks, Duration, InvalidDuration, Overflow, Ticks, TimeUnit};
pub use value::{Bindings, InstanceId, Value};
