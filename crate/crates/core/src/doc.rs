//! JSON model document.
//!
//! ```json
//! {"g": "sqrt",
//!  "p": {"intercept": 0.0, "terms": [{"exponents": [2, 0], "func": "id", "weight": 1.0}]},
//!  "q": {"terms": []}}
//! ```
//!
//! Reals are written in shortest round-trip form and read back with exact
//! parsing, so a document reproduces the model bit for bit.

use serde::{Deserialize, Serialize};

use crate::error::TirError;
use crate::expr::{InvertibleFn, ItExpr, Term, TirExpr, TransformFn};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermDoc {
    pub exponents: Vec<i32>,
    pub func: TransformFn,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumeratorDoc {
    pub intercept: Option<f64>,
    pub terms: Vec<TermDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenominatorDoc {
    pub terms: Vec<TermDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    pub g: InvertibleFn,
    pub p: NumeratorDoc,
    pub q: DenominatorDoc,
}

fn term_docs<T: Scalar>(e: &ItExpr<T>) -> Vec<TermDoc> {
    e.terms
        .iter()
        .zip(&e.weights)
        .map(|(t, w)| TermDoc {
            exponents: t.exponents.clone(),
            func: t.func,
            weight: w.as_f64(),
        })
        .collect()
}

fn from_term_docs<T: Scalar>(docs: Vec<TermDoc>, intercept: Option<f64>) -> ItExpr<T> {
    let (terms, weights) = docs
        .into_iter()
        .map(|d| (Term::new(d.exponents, d.func), T::lit(d.weight)))
        .unzip();
    ItExpr::with_weights(terms, weights, intercept.map(T::lit))
}

impl ModelDoc {
    pub fn from_model<T: Scalar>(m: &TirExpr<T>) -> Self {
        ModelDoc {
            g: m.g,
            p: NumeratorDoc {
                intercept: m.p.intercept.map(Scalar::as_f64),
                terms: term_docs(&m.p),
            },
            q: DenominatorDoc { terms: term_docs(&m.q) },
        }
    }

    pub fn into_model<T: Scalar>(self) -> Result<TirExpr<T>, TirError> {
        let dims: Vec<usize> = self
            .p
            .terms
            .iter()
            .chain(&self.q.terms)
            .map(|t| t.exponents.len())
            .collect();
        if dims.windows(2).any(|w| w[0] != w[1]) {
            return Err(TirError::Document("terms disagree on the number of variables".into()));
        }
        let m = TirExpr::new(
            self.g,
            from_term_docs(self.p.terms, self.p.intercept),
            from_term_docs(self.q.terms, None),
        );
        if !m.p.has_unique_terms() || !m.q.has_unique_terms() {
            return Err(TirError::Document("duplicate term".into()));
        }
        Ok(m)
    }
}

pub fn serialize<T: Scalar>(m: &TirExpr<T>) -> String {
    serde_json::to_string_pretty(&ModelDoc::from_model(m)).expect("model document serializes")
}

pub fn deserialize<T: Scalar>(src: &str) -> Result<TirExpr<T>, TirError> {
    let doc: ModelDoc = serde_json::from_str(src).map_err(|e| TirError::Document(e.to_string()))?;
    doc.into_model()
}
