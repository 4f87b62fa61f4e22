//! Scenario files, CSV tables and run records.

pub mod record;
pub mod scenario;
pub mod table;

pub use record::{RunRecord, VERSION_TAG};
pub use scenario::{load_scenario_file, parse_scenario, parse_scenario_file, parse_scenario_str, Angle, Scenario, ScenarioFile};
pub use table::{emit_csv, read_csv, Field, Table};
