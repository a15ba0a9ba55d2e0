//! First-order queries and views.

mod ast;
mod eval;
pub(crate) mod parser;
mod view;

pub use ast::{Analysis, Formula, Term};
pub(crate) use eval::WorldEvaluator;
pub use eval::{
    eval_boolean, eval_boolean_with_pool, eval_query, eval_query_ordered, generic_elements,
};
pub use parser::{parse, parse_unchecked, ParseError};
pub use view::{view_pushforward, View, ViewRule};
