//! Probabilistic databases over countably infinite sets of facts.
//!
//! ```
//! use infpdb::{fact, FactProbabilityAssignment, Instance, Schema, TiPdb, Universe};
//!
//! let schema = Schema::new([("R".to_string(), 1)]).unwrap();
//! let head = vec![(fact!("R", 1u64), 0.5), (fact!("R", 2u64), 0.5)];
//! let ti = TiPdb::new(schema, Universe::Naturals, FactProbabilityAssignment::head_only(head)).unwrap();
//! let d: Instance = [fact!("R", 1u64)].into_iter().collect();
//! assert_eq!(ti.instance_prob(&d).mid(), 0.25);
//! assert_eq!(ti.expected_size(), 1.0);
//! ```

pub mod approx;
pub mod completion;
pub mod database;
mod error;
pub mod fo;
pub mod independence;
pub mod io;
pub mod numerics;
pub mod oracle;
pub mod universe;

pub use completion::{complete, Completion};
pub use database::{Fact, FiniteDiscretePdb, Instance, Schema};
pub use error::{Error, NumericsError, Result, UniverseError};
pub use independence::{BidPdb, FactProbabilityAssignment, TiPdb};
pub use universe::{Universe, Value};
