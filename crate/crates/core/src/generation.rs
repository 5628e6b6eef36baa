//! Image-generation backends.
//!
//! [`MockBackend`] is a pure function of the request and draws a frame from a documented
//! fill rule (see [`mock_render`]). [`HttpBackend`] talks to a relighting/stylization
//! server over `POST /generate` and `GET /healthz`.

use std::io::Cursor;
use std::time::{Duration, Instant};

use base64::Engine;
use image::{ImageFormat, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::prompting::parse_prompt;

pub const DEFAULT_WIDTH: u32 = 960;
pub const DEFAULT_HEIGHT: u32 = 536;
const MAX_SIDE: u32 = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub width: u32,
    pub height: u32,
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution { width: DEFAULT_WIDTH, height: DEFAULT_HEIGHT }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub request_id: String,
    pub base_image_uri: String,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_prompt: Option<String>,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
}

impl GenerationRequest {
    pub fn new(request_id: impl Into<String>, base_image_uri: impl Into<String>, prompt: impl Into<String>, seed: u64) -> Self {
        let Resolution { width, height } = Resolution::default();
        GenerationRequest {
            request_id: request_id.into(),
            base_image_uri: base_image_uri.into(),
            prompt: prompt.into(),
            user_prompt: None,
            seed,
            width,
            height,
        }
    }

    pub fn with_resolution(mut self, resolution: Resolution) -> Self {
        self.width = resolution.width;
        self.height = resolution.height;
        self
    }

    pub fn validate(&self) -> Result<(), GenerationError> {
        let bad = |m: &str| Err(GenerationError::InvalidRequest(m.to_string()));
        if self.request_id.trim().is_empty() {
            return bad("request_id is empty");
        }
        if self.base_image_uri.trim().is_empty() {
            return bad("base_image_uri is empty");
        }
        if !(1..=MAX_SIDE).contains(&self.width) || !(1..=MAX_SIDE).contains(&self.height) {
            return bad("width and height must be within 1..=8192");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageEncoding {
    Png,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationResult {
    pub request_id: String,
    pub image_bytes: Vec<u8>,
    pub format: ImageEncoding,
    pub elapsed: Duration,
    pub backend: BackendKind,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenerationError {
    #[error("invalid generation request: {0}")]
    InvalidRequest(String),
    #[error("backend timed out after {0:?}")]
    BackendTimeout(Duration),
    #[error("backend error {status}: {body}")]
    BackendError { status: u16, body: String },
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    #[error("backend returned an invalid result: {0}")]
    InvalidResult(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthStatus {
    pub backend: BackendKind,
    pub reachable: bool,
    pub latency_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// Backends take concurrent `generate` calls; every call carries its own state.
pub trait Backend: Send + Sync {
    fn kind(&self) -> BackendKind;

    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, GenerationError>;

    fn health_check(&self) -> HealthStatus;
}

pub fn png_dimensions(bytes: &[u8]) -> Result<(u32, u32), GenerationError> {
    image::ImageReader::with_format(Cursor::new(bytes), ImageFormat::Png)
        .into_dimensions()
        .map_err(|e| GenerationError::InvalidResult(format!("undecodable PNG: {e}")))
}

/// Validates the request, runs it on `backend` and checks the output contract: the
/// request id is echoed and the PNG decodes to the requested size.
pub fn generate(request: &GenerationRequest, backend: &dyn Backend) -> Result<GenerationResult, GenerationError> {
    request.validate()?;
    let result = backend.generate(request)?;
    if result.request_id != request.request_id {
        return Err(GenerationError::InvalidResult(format!(
            "request_id `{}` does not echo `{}`",
            result.request_id, request.request_id
        )));
    }
    let (w, h) = png_dimensions(&result.image_bytes)?;
    if (w, h) != (request.width, request.height) {
        return Err(GenerationError::InvalidResult(format!(
            "image is {w}x{h}, requested {}x{}",
            request.width, request.height
        )));
    }
    Ok(result)
}

/// Mean luminance band per time-of-day token (fraction of full scale).
pub fn luminance_band(prompt: &str) -> f64 {
    parse_prompt(prompt)
        .iter()
        .find_map(|(token, _)| match token.trim() {
            "noon" => Some(0.8),
            "sunrise_sunset" => Some(0.55),
            "night" => Some(0.25),
            _ => None,
        })
        .unwrap_or(0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LightSide {
    Left,
    Right,
}

pub fn light_side(prompt: &str) -> Option<LightSide> {
    parse_prompt(prompt).iter().find_map(|(token, _)| match token.trim() {
        "left light source" => Some(LightSide::Left),
        "right light source" => Some(LightSide::Right),
        _ => None,
    })
}

pub const GRADIENT_AMPLITUDE: f64 = 0.15;
pub const TINT_SPREAD: f64 = 0.16;
pub const NOISE_LEVELS: i32 = 2;
pub const GLYPH_CELL: u32 = 4;

/// Per-channel tint offsets in `[-TINT_SPREAD/2, TINT_SPREAD/2]` from the base image URI.
pub fn uri_tint(base_image_uri: &str) -> [f64; 3] {
    let d = Sha256::digest(base_image_uri.as_bytes());
    [0, 1, 2].map(|i| (f64::from(d[i]) / 255.0 - 0.5) * TINT_SPREAD)
}

/// First 32 bits of the prompt's SHA-256 (its first 8 hex characters).
pub fn prompt_glyph_bits(prompt: &str) -> u32 {
    let d = Sha256::digest(prompt.as_bytes());
    u32::from_be_bytes([d[0], d[1], d[2], d[3]])
}

fn noise_seed(request: &GenerationRequest) -> [u8; 32] {
    let mut h = Sha256::new();
    for part in [request.base_image_uri.as_bytes(), request.prompt.as_bytes()] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part);
    }
    match &request.user_prompt {
        Some(p) => {
            h.update([1]);
            h.update((p.len() as u64).to_le_bytes());
            h.update(p.as_bytes());
        }
        None => h.update([0]),
    }
    h.update(request.seed.to_le_bytes());
    h.update(request.width.to_le_bytes());
    h.update(request.height.to_le_bytes());
    h.finalize().into()
}

/// Deterministic stand-in for a relit frame.
///
/// * luminance band from the time-of-day token: noon 0.8, sunrise_sunset 0.55, night 0.25,
///   0.5 when absent;
/// * a linear gradient of +/-0.15 across x, bright on the side named by the light-direction
///   token (`left light source` / `right light source`), flat when absent;
/// * a per-channel tint from the SHA-256 of `base_image_uri`;
/// * +/-2 levels of noise from a ChaCha8 stream seeded by every request field;
/// * an 8x4 grid of 4-pixel cells in the top-left corner, one cell per bit of the first
///   8 hex characters of SHA-256(prompt), white for 1 and black for 0.
pub fn mock_render(request: &GenerationRequest) -> RgbImage {
    let (w, h) = (request.width, request.height);
    let band = luminance_band(&request.prompt);
    let side = light_side(&request.prompt);
    let tint = uri_tint(&request.base_image_uri);
    let mut rng = ChaCha8Rng::from_seed(noise_seed(request));

    let column_luma: Vec<f64> = (0..w)
        .map(|x| {
            let t = if w > 1 { f64::from(x) / f64::from(w - 1) } else { 0.5 };
            let slope = GRADIENT_AMPLITUDE * (1.0 - 2.0 * t);
            match side {
                Some(LightSide::Left) => band + slope,
                Some(LightSide::Right) => band - slope,
                None => band,
            }
        })
        .collect();

    let mut img = RgbImage::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let luma = column_luma[x as usize];
            let noise = rng.random_range(-NOISE_LEVELS..=NOISE_LEVELS);
            let px = tint.map(|t| {
                let level = ((luma + t).clamp(0.0, 1.0) * 255.0).round() as i32 + noise;
                level.clamp(0, 255) as u8
            });
            img.put_pixel(x, y, Rgb(px));
        }
    }

    let bits = prompt_glyph_bits(&request.prompt);
    for i in 0..32u32 {
        let on = (bits >> (31 - i)) & 1 == 1;
        let value = if on { 255 } else { 0 };
        let (cx, cy) = ((i % 8) * GLYPH_CELL, (i / 8) * GLYPH_CELL);
        for y in cy..(cy + GLYPH_CELL).min(h) {
            for x in cx..(cx + GLYPH_CELL).min(w) {
                img.put_pixel(x, y, Rgb([value; 3]));
            }
        }
    }
    img
}

/// Reads the glyph bits back out of a rendered frame.
pub fn read_glyph(img: &RgbImage) -> Option<u32> {
    if img.width() < 8 * GLYPH_CELL || img.height() < 4 * GLYPH_CELL {
        return None;
    }
    let mut bits = 0u32;
    for i in 0..32u32 {
        let (cx, cy) = ((i % 8) * GLYPH_CELL, (i / 8) * GLYPH_CELL);
        let on = img.get_pixel(cx + GLYPH_CELL / 2, cy + GLYPH_CELL / 2).0[0] > 127;
        bits = (bits << 1) | u32::from(on);
    }
    Some(bits)
}

pub fn encode_png(img: &RgbImage) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).expect("PNG encoding into memory");
    out.into_inner()
}

pub fn decode_png(bytes: &[u8]) -> Result<RgbImage, GenerationError> {
    image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map(|i| i.to_rgb8())
        .map_err(|e| GenerationError::InvalidResult(format!("undecodable PNG: {e}")))
}

/// Rec. 601 mean luminance in `[0, 1]`.
pub fn mean_luminance(img: &RgbImage) -> f64 {
    let total: f64 = img
        .pixels()
        .map(|p| 0.299 * f64::from(p.0[0]) + 0.587 * f64::from(p.0[1]) + 0.114 * f64::from(p.0[2]))
        .sum();
    total / (f64::from(img.width()) * f64::from(img.height()) * 255.0)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MockBackend;

impl Backend for MockBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Mock
    }

    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, GenerationError> {
        let start = Instant::now();
        request.validate()?;
        let image_bytes = encode_png(&mock_render(request));
        Ok(GenerationResult {
            request_id: request.request_id.clone(),
            image_bytes,
            format: ImageEncoding::Png,
            elapsed: start.elapsed(),
            backend: BackendKind::Mock,
        })
    }

    fn health_check(&self) -> HealthStatus {
        HealthStatus {
            backend: BackendKind::Mock,
            reachable: true,
            latency_ms: 0.0,
            version: Some(env!("CARGO_PKG_VERSION").to_string()),
            detail: None,
        }
    }
}

/// Wire body of a successful `POST /generate`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub request_id: String,
    pub image_base64: String,
    pub format: ImageEncoding,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub version: String,
}

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub base_url: String,
    pub timeout: Duration,
    /// Extra attempts after a 5xx answer.
    pub retries: u32,
    pub initial_backoff: Duration,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        HttpConfig {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            timeout: Duration::from_secs(120),
            retries: 2,
            initial_backoff: Duration::from_millis(500),
        }
    }
}

/// Client for a remote generation server. Uses a blocking client, so construct and call
/// it off any async executor thread.
pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, GenerationError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| GenerationError::Unreachable(e.to_string()))?;
        Ok(HttpBackend { config, client })
    }

    pub fn base_url(&self) -> &str {
        &self.config.base_url
    }

    fn attempt(&self, request: &GenerationRequest) -> Result<GenerateResponse, GenerationError> {
        let response = self
            .client
            .post(format!("{}/generate", self.config.base_url))
            .json(request)
            .send()
            .map_err(|e| self.transport_error(e))?;
        let status = response.status();
        if !status.is_success() {
            let body = response.text().unwrap_or_default();
            return Err(GenerationError::BackendError { status: status.as_u16(), body });
        }
        response.json().map_err(|e| GenerationError::InvalidResult(e.to_string()))
    }

    fn transport_error(&self, e: reqwest::Error) -> GenerationError {
        if e.is_timeout() {
            GenerationError::BackendTimeout(self.config.timeout)
        } else {
            GenerationError::Unreachable(e.to_string())
        }
    }
}

impl Backend for HttpBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Http
    }

    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, GenerationError> {
        let start = Instant::now();
        let mut backoff = self.config.initial_backoff;
        let mut attempt = 0;
        let reply = loop {
            match self.attempt(request) {
                Err(GenerationError::BackendError { status, .. }) if status >= 500 && attempt < self.config.retries => {
                    std::thread::sleep(backoff);
                    backoff *= 2;
                    attempt += 1;
                }
                other => break other?,
            }
        };
        let image_bytes = base64::engine::general_purpose::STANDARD
            .decode(reply.image_base64.as_bytes())
            .map_err(|e| GenerationError::InvalidResult(format!("bad base64: {e}")))?;
        Ok(GenerationResult {
            request_id: reply.request_id,
            image_bytes,
            format: reply.format,
            elapsed: start.elapsed(),
            backend: BackendKind::Http,
        })
    }

    fn health_check(&self) -> HealthStatus {
        let start = Instant::now();
        let outcome = self
            .client
            .get(format!("{}/healthz", self.config.base_url))
            .timeout(Duration::from_secs(5))
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json::<HealthResponse>());
        let latency_ms = start.elapsed().as_secs_f64() * 1000.0;
        match outcome {
            Ok(h) => HealthStatus { backend: BackendKind::Http, reachable: true, latency_ms, version: Some(h.version), detail: None },
            Err(e) => HealthStatus {
                backend: BackendKind::Http,
                reachable: false,
                latency_ms,
                version: None,
                detail: Some(e.to_string()),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(prompt: &str) -> GenerationRequest {
        GenerationRequest::new("r1", "catalog://m001/s1.jpg", prompt, 7).with_resolution(Resolution { width: 64, height: 36 })
    }

    #[test]
    fn default_request_is_960_by_536() {
        let req = GenerationRequest::new("r", "catalog://x", "", 1);
        let out = generate(&req, &MockBackend).unwrap();
        assert_eq!(png_dimensions(&out.image_bytes).unwrap(), (960, 536));
        assert_eq!(out.request_id, "r");
        assert_eq!(out.backend, BackendKind::Mock);
    }

    #[test]
    fn mock_is_deterministic() {
        let req = small("(night:3.00)");
        assert_eq!(MockBackend.generate(&req).unwrap().image_bytes, MockBackend.generate(&req).unwrap().image_bytes);
    }

    #[test]
    fn seed_changes_bytes() {
        let a = small("(night:3.00)");
        let b = GenerationRequest { seed: 8, ..a.clone() };
        assert_ne!(mock_render(&a), mock_render(&b));
        let c = GenerationRequest { user_prompt: Some("rain".into()), ..a.clone() };
        assert_ne!(mock_render(&a), mock_render(&c));
    }

    #[test]
    fn night_left_layout() {
        let img = mock_render(&small("(night:3.00), (left light source:2.00)"));
        let left = img.get_pixel(20, 30).0[1];
        let right = img.get_pixel(63, 30).0[1];
        assert!(left > right + 20, "left {left} right {right}");
        assert!(mean_luminance(&img) < 0.35);
    }

    #[test]
    fn absent_lighting_is_mid_grey_band() {
        assert_eq!(luminance_band(""), 0.5);
        assert_eq!(light_side("(beach:3.00)"), None);
        let img = mock_render(&small("(beach:3.00)"));
        // columns at both ends sit on the same band
        let row = 30;
        let l: i32 = img.get_pixel(40, row).0.iter().map(|&v| i32::from(v)).sum();
        let r: i32 = img.get_pixel(63, row).0.iter().map(|&v| i32::from(v)).sum();
        assert!((l - r).abs() <= 3 * 2 * NOISE_LEVELS);
    }

    #[test]
    fn glyph_round_trips() {
        let req = small("(noon:3.00)");
        let img = mock_render(&req);
        assert_eq!(read_glyph(&img), Some(prompt_glyph_bits(&req.prompt)));
    }

    #[test]
    fn invalid_requests() {
        let mut req = small("");
        req.width = 0;
        assert!(matches!(generate(&req, &MockBackend), Err(GenerationError::InvalidRequest(_))));
        let req = GenerationRequest { request_id: " ".into(), ..small("") };
        assert!(matches!(MockBackend.generate(&req), Err(GenerationError::InvalidRequest(_))));
    }

    #[test]
    fn health_checks() {
        assert!(MockBackend.health_check().reachable);
        let http = HttpBackend::new(HttpConfig::new("http://127.0.0.1:9")).unwrap();
        let status = http.health_check();
        assert!(!status.reachable);
        assert!(status.detail.is_some());
    }

    #[test]
    fn unreachable_generate() {
        let mut cfg = HttpConfig::new("http://127.0.0.1:9/");
        cfg.timeout = Duration::from_millis(500);
        let http = HttpBackend::new(cfg).unwrap();
        assert_eq!(http.base_url(), "http://127.0.0.1:9");
        assert!(matches!(http.generate(&small("")), Err(GenerationError::Unreachable(_))));
    }
}
