//! Reader study for AI-assisted grading of meniscal compartments: stratified
//! case assignment, washout-gated condition sequencing, a durable response
//! log, Table 4 style analytics and the HTTP service the viewer talks to.

pub mod clock;
pub mod config;
pub mod render;
pub mod report;
pub mod response;
pub mod server;
pub mod store;
pub mod stratify;

pub use clock::{Clock, ManualClock, SystemClock};
pub use config::{BoxMode, CaseDescriptor, Condition, ImageSet, StudyConfig, Stratum};
pub use report::{compute_study_report, StudyReport};
pub use response::{CompartmentCalls, ReaderResponse, ResponseSubmission};
pub use server::{router, serve, AppState, StudyService};
pub use store::ResponseStore;
pub use stratify::{stratify_assignment, Assignment, Quota};
