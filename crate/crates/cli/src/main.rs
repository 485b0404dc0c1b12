use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use pricing_gate_core::entitlement::{evaluate_features_with_diagnostics, limit_for_usage_key};
use pricing_gate_core::token::{decode_unverified, DEFAULT_TTL_SECS};
use pricing_gate_core::{mint, parse_spec, verify, PricingSpec, SpecError, Subscription, TokenClaims, TokenError, Value};
use pricing_gate_gateway::{Gateway, GatewayConfig, GatewayError};

#[derive(Parser)]
#[command(name = "pricing-gate", version, about = "Pricing-driven feature gating")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a pricing spec and print its fingerprint
    Validate { spec: PathBuf },
    /// Evaluate every feature for a plan without a store
    Eval {
        spec: PathBuf,
        #[command(flatten)]
        sub: SubscriptionArgs,
    },
    /// Run the gateway until SIGINT or SIGTERM
    Serve {
        config: PathBuf,
        /// Interface to bind
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Inspect or mint evaluation tokens
    Token {
        #[command(subcommand)]
        command: TokenCommand,
    },
}

#[derive(Args)]
struct SubscriptionArgs {
    #[arg(long)]
    plan: String,
    /// Comma-separated add-on names, in priority order
    #[arg(long, value_delimiter = ',')]
    addons: Vec<String>,
    /// JSON object of user context attributes
    #[arg(long)]
    context: Option<PathBuf>,
    /// Usage counter as KEY=N; KEY is a limit or a limited feature
    #[arg(long = "usage", value_name = "KEY=N")]
    usage: Vec<String>,
}

#[derive(Subcommand)]
enum TokenCommand {
    /// Print header and claims; checks the signature when a secret is known
    Decode {
        token: String,
        #[arg(long, env = "PRICING_GATE_SECRET", hide_env_values = true)]
        secret: Option<String>,
        /// Reference time for the expiry check (epoch seconds)
        #[arg(long)]
        now: Option<u64>,
    },
    /// Evaluate a subscription and mint a token for it
    Sign {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        sub: String,
        #[command(flatten)]
        subscription: SubscriptionArgs,
        #[arg(long = "role")]
        roles: Vec<String>,
        #[arg(long, env = "PRICING_GATE_SECRET", hide_env_values = true)]
        secret: String,
        #[arg(long, default_value_t = DEFAULT_TTL_SECS)]
        ttl: u64,
        /// Issue time (epoch seconds), defaults to now
        #[arg(long)]
        now: Option<u64>,
    },
}

/// Exit 1 for domain errors, 2 for usage and I/O errors.
enum Failure {
    Domain(String),
    Usage(String),
}

type CmdResult = Result<(), Failure>;

fn now_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Prints one line to stdout; a closed pipe is not an error.
fn emit(line: &str) {
    let mut out = io::stdout().lock();
    let _ = writeln!(out, "{line}").and_then(|()| out.flush());
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn load_spec(path: &Path) -> Result<PricingSpec, Failure> {
    parse_spec(&read(path)?).map_err(|e| match e {
        SpecError::MalformedDocument(m) => Failure::Usage(format!("MalformedDocument: {m}")),
        SpecError::Invalid(vs) => Failure::Domain(
            vs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\n"),
        ),
    })
}

fn build_subscription(spec: &PricingSpec, user: &str, args: &SubscriptionArgs) -> Result<Subscription, Failure> {
    let mut sub = Subscription::new(user, args.plan.as_str());
    sub.add_ons = args.addons.iter().filter(|a| !a.is_empty()).cloned().collect();
    if let Some(path) = &args.context {
        let attrs: BTreeMap<String, Value> = serde_json::from_str(&read(path)?)
            .map_err(|e| Failure::Usage(format!("{}: expected a JSON object of scalars: {e}", path.display())))?;
        sub.context_attributes = attrs;
    }
    for pair in &args.usage {
        let (key, n) = pair
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--usage `{pair}`: expected KEY=N")))?;
        let n: u64 = n
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("--usage `{pair}`: N must be a non-negative integer")))?;
        let limit = limit_for_usage_key(spec, key.trim())
            .ok_or_else(|| Failure::Domain(format!("UnknownUsageLimit: `{key}` is neither a usage limit nor a limited feature")))?;
        sub.usage.insert(limit.to_string(), n);
    }
    Ok(sub)
}

fn evaluate(spec: &PricingSpec, sub: &Subscription) -> Result<pricing_gate_core::EvaluationMap, Failure> {
    let (map, diagnostics) =
        evaluate_features_with_diagnostics(spec, sub).map_err(|e| Failure::Domain(format!("{}: {e}", e.kind())))?;
    for d in diagnostics {
        eprintln!("warning: feature `{}` disabled, `{}` failed: {}", d.feature, d.expression, d.error);
    }
    Ok(map)
}

fn validate(spec: &Path) -> CmdResult {
    let text = read(spec)?;
    match parse_spec(&text) {
        Ok(s) => {
            emit(&format!("OK, fingerprint {}", s.fingerprint()));
            Ok(())
        }
        Err(SpecError::MalformedDocument(m)) => Err(Failure::Usage(format!("MalformedDocument: {m}"))),
        Err(SpecError::Invalid(vs)) => {
            for v in &vs {
                emit(&v.to_string());
            }
            Err(Failure::Domain(format!("{} violation(s)", vs.len())))
        }
    }
}

fn eval(spec: &Path, args: &SubscriptionArgs) -> CmdResult {
    let spec = load_spec(spec)?;
    let sub = build_subscription(&spec, "cli", args)?;
    let map = evaluate(&spec, &sub)?;
    emit(&serde_json::to_string(&map.entries).expect("map serializes"));
    Ok(())
}

fn token_status(result: &Result<TokenClaims, TokenError>) -> &'static str {
    match result {
        Ok(_) => "VALID",
        Err(TokenError::BadSignature) => "BAD_SIGNATURE",
        Err(TokenError::Expired) => "EXPIRED",
        Err(TokenError::AlgorithmRejected(_)) => "ALGORITHM_REJECTED",
        Err(TokenError::WeakSecret(_)) => "WEAK_SECRET",
        Err(TokenError::InvalidClaims(_)) => "INVALID_CLAIMS",
        Err(TokenError::Malformed(_)) => "MALFORMED",
    }
}

fn decode(token: &str, secret: Option<&str>, now: Option<u64>) -> CmdResult {
    let (header, claims) = decode_unverified(token.trim()).map_err(|e| Failure::Usage(e.to_string()))?;
    let (status, problem) = match secret {
        None => ("UNVERIFIED", None),
        Some(secret) => {
            let result = verify(token.trim(), secret.as_bytes(), now.unwrap_or_else(now_secs));
            (token_status(&result), result.err())
        }
    };
    let out = serde_json::json!({ "status": status, "header": header, "claims": claims });
    emit(&serde_json::to_string_pretty(&out).expect("claims serialize"));
    match (secret, problem) {
        (None, _) => {
            eprintln!("warning: no secret given, signature not checked");
            Ok(())
        }
        (Some(_), Some(e)) => Err(Failure::Domain(format!("warning: {e}; claims above are untrusted"))),
        (Some(_), None) => Ok(()),
    }
}

#[allow(clippy::too_many_arguments)]
fn sign(
    spec: &Path,
    user: &str,
    args: &SubscriptionArgs,
    roles: Vec<String>,
    secret: &str,
    ttl: u64,
    now: Option<u64>,
) -> CmdResult {
    let spec = load_spec(spec)?;
    let sub = build_subscription(&spec, user, args)?;
    let map = evaluate(&spec, &sub)?;
    let claims = TokenClaims::issue(user, roles, &map, now.unwrap_or_else(now_secs), ttl);
    let token = mint(&claims, secret.as_bytes()).map_err(|e| Failure::Domain(e.to_string()))?;
    emit(&token);
    Ok(())
}

fn serve(config: &Path, host: &str) -> CmdResult {
    let config = GatewayConfig::load(config).map_err(|e| Failure::Usage(e.to_string()))?;
    let port = config.listen_port;
    let gateway = Gateway::from_config(config).map_err(|e| match e {
        GatewayError::Io { .. } => Failure::Usage(e.to_string()),
        GatewayError::Spec {
            source: SpecError::MalformedDocument(_),
            ..
        } => Failure::Usage(e.to_string()),
        other => Failure::Domain(other.to_string()),
    })?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::Usage(format!("runtime: {e}")))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .map_err(|e| Failure::Usage(format!("bind {host}:{port}: {e}")))?;
        let addr = listener.local_addr().map_err(|e| Failure::Usage(e.to_string()))?;
        emit(&serde_json::json!({ "listening": addr.to_string(), "fingerprint": gateway.active().spec.fingerprint() }).to_string());
        gateway
            .serve(listener, shutdown_signal())
            .await
            .map_err(|e| Failure::Domain(e.to_string()))
    })
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    tracing::info!("shutdown requested");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(tracing::Level::INFO)
        .init();
    let result = match &cli.command {
        Command::Validate { spec } => validate(spec),
        Command::Eval { spec, sub } => eval(spec, sub),
        Command::Serve { config, host } => serve(config, host),
        Command::Token { command } => match command {
            TokenCommand::Decode { token, secret, now } => decode(token, secret.as_deref(), *now),
            TokenCommand::Sign {
                spec,
                sub,
                subscription,
                roles,
                secret,
                ttl,
                now,
            } => sign(spec, sub, subscription, roles.clone(), secret, *ttl, *now),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain(m)) => {
            eprintln!("{m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("{m}");
            ExitCode::from(2)
        }
    }
}
