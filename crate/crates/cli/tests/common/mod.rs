#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdout, Command, Output, Stdio};
use std::time::Duration;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::Value;

pub const SECRET: &str = "acceptance-secret-acceptance-sec";

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_pricing-gate")
}

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

pub fn petclinic() -> PathBuf {
    fixtures().join("petclinic.pricing.yml")
}

pub fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env_remove("PRICING_GATE_SECRET")
        .output()
        .expect("spawn pricing-gate")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Writes the demo config into `dir` (spec copied alongside) and returns its path.
pub fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let spec = dir.join("pricing.yml");
    if !spec.exists() {
        std::fs::copy(petclinic(), &spec).unwrap();
    }
    let config = dir.join("gateway.yml");
    std::fs::write(
        &config,
        format!(
            r#"listenPort: 0
secret: "{SECRET}"
tokenTtl: 3600
specPath: pricing.yml
storePath: store.snapshot
adminUsers: [root]
guards:
  - method: POST
    pathPattern: /api/pets
    feature: pets
    consumes: {{ limit: maxPets, amount: 1 }}
  - method: GET
    pathPattern: /api/consultations
    feature: onlineConsultations
seedSubscriptions:
  - {{ userId: alice, plan: BASIC }}
  - {{ userId: bob, plan: GOLD }}
{extra}"#
        ),
    )
    .unwrap();
    config
}

pub struct Reply {
    pub status: StatusCode,
    pub token: Option<String>,
    pub body: String,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.body).unwrap_or(Value::Null)
    }

    /// Payload of the refreshed token, without signature checks.
    pub fn token_claims(&self) -> Option<Value> {
        let token = self.token.as_ref()?;
        let payload = token.split('.').nth(1)?;
        let bytes = URL_SAFE_NO_PAD.decode(payload).ok()?;
        serde_json::from_slice(&bytes).ok()
    }
}

pub struct Server {
    pub child: Child,
    pub base: String,
    pub client: Client,
    _stdout: BufReader<ChildStdout>,
}

impl Server {
    pub fn start(config: &Path) -> Server {
        let mut child = Command::new(bin())
            .args(["serve", config.to_str().unwrap()])
            .env_remove("PRICING_GATE_SECRET")
            .env_remove("PRICING_GATE_PORT")
            .env_remove("PRICING_GATE_SPEC")
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("spawn serve");
        let mut stdout = BufReader::new(child.stdout.take().unwrap());
        let mut line = String::new();
        stdout.read_line(&mut line).unwrap();
        let announced: Value = serde_json::from_str(&line).unwrap_or_else(|e| panic!("{e}: `{line}`"));
        let addr = announced["listening"].as_str().unwrap().to_string();
        Server {
            child,
            base: format!("http://{addr}"),
            client: Client::builder().timeout(Duration::from_secs(10)).build().unwrap(),
            _stdout: stdout,
        }
    }

    pub fn send(&self, method: &str, path: &str, token: Option<&str>, body: Option<(&str, String)>) -> Reply {
        let mut req = self
            .client
            .request(method.parse().unwrap(), format!("{}{path}", self.base));
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        if let Some((ct, b)) = body {
            req = req.header("content-type", ct).body(b);
        }
        let resp = req.send().expect("request");
        let status = resp.status();
        let token = resp
            .headers()
            .get("pricing-token")
            .map(|v| v.to_str().unwrap().to_string());
        Reply {
            status,
            token,
            body: resp.text().unwrap(),
        }
    }

    pub fn login(&self, user: &str) -> String {
        let r = self.send(
            "POST",
            "/api/login",
            None,
            Some(("application/json", format!(r#"{{"userId":"{user}"}}"#))),
        );
        assert_eq!(r.status, StatusCode::OK, "{}", r.body);
        r.json()["token"].as_str().unwrap().to_string()
    }

    pub fn post_pet(&self, token: &str) -> Reply {
        self.send("POST", "/api/pets", Some(token), Some(("application/json", "{}".into())))
    }

    /// Sends SIGTERM and waits for exit.
    pub fn terminate(mut self) -> std::process::ExitStatus {
        unsafe {
            libc::kill(self.child.id() as i32, libc::SIGTERM);
        }
        self.child.wait().unwrap()
    }

    /// SIGKILL: no shutdown hooks run.
    pub fn kill(mut self) {
        self.child.kill().unwrap();
        self.child.wait().unwrap();
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
