use wasm_bindgen::prelude::*;

use crate::{Studio, TargetChoice};

fn js(e: makeitso::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    studio: Studio,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new() -> Result<Demo, JsError> {
        Ok(Demo { studio: Studio::new().map_err(js)? })
    }

    pub fn resolution(&self) -> usize {
        self.studio.resolution()
    }

    #[wasm_bindgen(js_name = directionNames)]
    pub fn direction_names(&self) -> Vec<String> {
        self.studio.direction_names()
    }

    /// RGBA of sample `seed` edited along `direction`.
    pub fn sample(&self, seed: u32, direction: usize, strength: f64) -> Result<Vec<u8>, JsError> {
        Ok(self.studio.sample(seed.into(), direction, strength).map_err(js)?.to_rgba8())
    }

    /// Start inverting `"shifted"` or `"checkerboard"`; returns the target RGBA.
    pub fn begin(&mut self, target: &str, seed: u32, iters: usize) -> Result<Vec<u8>, JsError> {
        let choice: TargetChoice = target.parse().map_err(js)?;
        Ok(self.studio.begin(choice, seed.into(), iters).map_err(js)?.to_rgba8())
    }

    /// Run up to `n` iterations; returns the latest pixel MSE or NaN.
    pub fn step(&mut self, n: usize) -> Result<f64, JsError> {
        Ok(self.studio.step(n).map_err(js)?.unwrap_or(f64::NAN))
    }

    pub fn iteration(&self) -> usize {
        self.studio.iteration()
    }

    #[wasm_bindgen(js_name = isDone)]
    pub fn is_done(&self) -> bool {
        self.studio.is_done()
    }

    /// Iterations at which the anchored model was blended so far.
    pub fn blends(&self) -> Vec<usize> {
        self.studio.blends()
    }

    /// RGBA of the current reconstruction edited along `direction`.
    #[wasm_bindgen(js_name = editInverted)]
    pub fn edit_inverted(&self, direction: usize, strength: f64) -> Result<Vec<u8>, JsError> {
        Ok(self.studio.edit_inverted(direction, strength).map_err(js)?.to_rgba8())
    }
}
