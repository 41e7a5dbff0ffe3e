// SPDX-License-Identifier: Apache-2.0

//! Building blocks for generating hotel descriptions from provider catalogs:
//! ingestion, context serialization, datasets, prompting, generation,
//! resource planning, evaluation and a file-backed workspace.

pub mod context;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod generation;
pub mod ingest;
pub mod planner;
pub mod prompt;
pub mod store;
pub mod util;
pub mod workbench;

pub use error::{Error, ErrorClass, Result};
pub use workbench::{IngestSummary, SplitSummary, Workbench};
