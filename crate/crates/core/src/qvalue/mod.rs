//! Arithmetic and metric structure of `A_Q(R^n)`, the space of unordered
//! Q-tuples of vectors.

mod matching;
mod qpoint;
mod selection;

pub use matching::{best_assignment, exhaustive_assignment, hungarian_assignment, metric_g_exhaustive, EXHAUSTIVE_MAX_Q};
pub use qpoint::{average_free, eta, metric_g, QPoint};
pub(crate) use selection::{is_full_cycle, match_step as match_radial};
pub use selection::{track_selection, SheetSelection, TrackOptions};
