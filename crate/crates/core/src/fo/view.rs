use std::collections::BTreeMap;

use super::ast::Formula;
use super::eval::{eval_boolean, eval_query_ordered};
use crate::database::{Fact, FiniteDiscretePdb, Instance, Schema};
use crate::error::{Error, Result};
use crate::numerics::CompensatedSum;
use crate::universe::Universe;

/// Defines one target relation: `relation(params) := body`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ViewRule {
    pub relation: String,
    pub params: Vec<String>,
    pub body: Formula,
}

/// An FO view: one defining formula per target relation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct View {
    schema: Schema,
    rules: Vec<ViewRule>,
}

impl View {
    /// Target schema is read off the rules. Every free variable of a body
    /// must be a parameter.
    pub fn new(rules: Vec<ViewRule>) -> Result<Self> {
        let schema = Schema::new(rules.iter().map(|r| (r.relation.clone(), r.params.len())))?;
        for r in &rules {
            let free = r.body.free_vars();
            if free.iter().any(|v| !r.params.contains(v)) {
                return Err(Error::ViewArity {
                    relation: r.relation.clone(),
                    arity: r.params.len(),
                    free: free.len(),
                });
            }
        }
        Ok(View { schema, rules })
    }

    /// `R(x1, …, xk) := R(x1, …, xk)` for every relation of `schema`.
    pub fn identity(schema: &Schema) -> Self {
        let rules = schema
            .relations()
            .map(|(name, arity)| {
                let params: Vec<String> = (1..=arity).map(|i| format!("x{i}")).collect();
                let args = params.iter().map(|p| super::Term::Var(p.clone())).collect();
                ViewRule {
                    relation: name.to_string(),
                    params,
                    body: Formula::atom(name, args),
                }
            })
            .collect();
        View {
            schema: schema.clone(),
            rules,
        }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rules(&self) -> &[ViewRule] {
        &self.rules
    }

    /// `V(D)`, or [`Error::InfiniteAnswer`] if some rule has an infinite answer.
    pub fn apply(&self, d: &Instance, u: &Universe) -> Result<Instance> {
        let mut out = Instance::new();
        for r in &self.rules {
            if r.params.is_empty() {
                if eval_boolean(d, &r.body, u)? {
                    out.insert(Fact::new(r.relation.clone(), vec![]));
                }
                continue;
            }
            for tuple in eval_query_ordered(d, &r.body, &r.params, u)? {
                out.insert(Fact::new(r.relation.clone(), tuple));
            }
        }
        Ok(out)
    }
}

/// Image of a finite PDB under a view: `P'(D') = P(V⁻¹(D'))`.
pub fn view_pushforward(p: &FiniteDiscretePdb, v: &View) -> Result<FiniteDiscretePdb> {
    let mut image: BTreeMap<Instance, CompensatedSum> = BTreeMap::new();
    for (d, prob) in p.worlds() {
        image
            .entry(v.apply(d, p.universe())?)
            .or_default()
            .add(prob);
    }
    FiniteDiscretePdb::new(
        v.schema().clone(),
        p.universe().clone(),
        image.into_iter().map(|(d, s)| (d, s.value())),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fact;
    use crate::fo::parse_unchecked;

    fn base() -> FiniteDiscretePdb {
        let schema = Schema::new([("R".to_string(), 2)]).unwrap();
        let worlds = [
            (Instance::new(), 0.5),
            ([fact!("R", "a", "b")].into_iter().collect(), 0.5),
        ];
        FiniteDiscretePdb::new(schema, Universe::strings("ab").unwrap(), worlds).unwrap()
    }

    fn rule(relation: &str, params: &[&str], body: &str) -> ViewRule {
        ViewRule {
            relation: relation.to_string(),
            params: params.iter().map(|p| p.to_string()).collect(),
            body: parse_unchecked(body).unwrap(),
        }
    }

    #[test]
    fn identity_view_is_neutral() {
        let p = base();
        let q = view_pushforward(&p, &View::identity(p.schema())).unwrap();
        assert_eq!(q, p);
    }

    #[test]
    fn projection_view() {
        let v = View::new(vec![rule("S", &["x"], "exists y. R(x, y)")]).unwrap();
        let q = view_pushforward(&base(), &v).unwrap();
        assert_eq!(q.num_worlds(), 2);
        assert_eq!(q.prob(&Instance::new()), 0.5);
        assert_eq!(q.prob(&[fact!("S", "a")].into_iter().collect()), 0.5);
    }

    #[test]
    fn boolean_view() {
        let v = View::new(vec![rule("S", &[], "exists x. exists y. R(x, y)")]).unwrap();
        let q = view_pushforward(&base(), &v).unwrap();
        assert_eq!(q.prob(&[Fact::new("S", vec![])].into_iter().collect()), 0.5);
        assert_eq!(q.prob(&Instance::new()), 0.5);
    }

    #[test]
    fn collisions_accumulate() {
        let v = View::new(vec![rule("S", &[], "x = x | !(x = x)")]);
        assert!(matches!(v, Err(Error::ViewArity { .. })));
        let v = View::new(vec![rule("S", &[], "forall x. x = x")]).unwrap();
        let q = view_pushforward(&base(), &v).unwrap();
        assert_eq!(q.num_worlds(), 1);
        assert_eq!(q.prob(&[Fact::new("S", vec![])].into_iter().collect()), 1.0);
    }

    #[test]
    fn infinite_view_is_rejected() {
        let v = View::new(vec![rule("S", &["x"], "!R(x, x)")]).unwrap();
        assert!(matches!(
            view_pushforward(&base(), &v),
            Err(Error::InfiniteAnswer)
        ));
    }
}
