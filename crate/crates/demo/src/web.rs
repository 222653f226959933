//! JavaScript bindings. Results cross the boundary as JSON strings.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use factsteer::decoding::DecodeMode;

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("views serialize")
}

fn js_err(e: factsteer::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct DemoSession {
    inner: crate::Session,
}

#[wasm_bindgen]
impl DemoSession {
    #[wasm_bindgen(constructor)]
    pub fn new() -> DemoSession {
        DemoSession {
            inner: crate::Session::new(),
        }
    }

    /// Subjects, relations, objects and selector weights.
    pub fn catalog(&self) -> String {
        to_json(&self.inner.catalog())
    }

    pub fn facts(&self) -> String {
        to_json(&self.inner.facts())
    }

    pub fn edit(&mut self, subject: &str, relation: &str, new_object: &str) -> Result<String, JsError> {
        self.inner
            .edit(subject, relation, new_object)
            .map(|f| to_json(&f))
            .map_err(js_err)
    }

    pub fn ask(&self, query: &str, alpha: f64, top_k: usize) -> Result<String, JsError> {
        self.inner.ask(query, alpha, top_k).map(|v| to_json(&v)).map_err(js_err)
    }

    pub fn reset(&mut self) {
        self.inner.reset();
    }
}

impl Default for DemoSession {
    fn default() -> Self {
        DemoSession::new()
    }
}

#[wasm_bindgen(js_name = exploreConflict)]
pub fn explore_conflict(p_old: f64, p_new: f64, faithfulness: f64, alpha: f64, mode: &str) -> Result<String, JsError> {
    let mode: DecodeMode = mode.parse().map_err(js_err)?;
    crate::explore_conflict(p_old, p_new, faithfulness, alpha, mode)
        .map(|v| to_json(&v))
        .map_err(js_err)
}

#[wasm_bindgen(js_name = sweepAlpha)]
pub fn sweep_alpha(cases: u32, seed: u32) -> Result<String, JsError> {
    crate::sweep_alpha(cases as usize, u64::from(seed))
        .map(|rows| to_json(&rows))
        .map_err(js_err)
}
