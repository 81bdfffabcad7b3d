//! The `lostwage` operator command line.
//!
//! Every subcommand is a thin shell over one service operation. Output is
//! human-readable by default and a single JSON document with `--json`.
//! Exit codes: 0 success, 2 validation or not found, 3 consent or
//! authorization, 4 sync incomplete, 5 internal (including oracle mismatch).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, NaiveDate, Utc};
use clap::{Args, Parser, Subcommand};
use lostwage_core::Platform;
use lostwage_service::scenario::{self, Scenario};
use lostwage_service::{
    Actor, App, Clock, CreateCase, ErrorCode, FixedClock, ParamsPatch, ReportFormat, ReportOptions,
    Role, ServiceConfig, ServiceError, ServiceResult, Store, SystemClock,
};
use serde::Serialize;
use serde_json::json;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_DENIED: i32 = 3;
pub const EXIT_SYNC: i32 = 4;
pub const EXIT_INTERNAL: i32 = 5;

pub fn exit_code(code: ErrorCode) -> i32 {
    match code {
        ErrorCode::Validation | ErrorCode::NotFound | ErrorCode::Conflict | ErrorCode::OtpInvalid => {
            EXIT_VALIDATION
        }
        ErrorCode::ConsentRequired
        | ErrorCode::Forbidden
        | ErrorCode::Unauthenticated
        | ErrorCode::OtpLocked => EXIT_DENIED,
        ErrorCode::SyncIncomplete => EXIT_SYNC,
        ErrorCode::Internal => EXIT_INTERNAL,
    }
}

#[derive(Debug, Parser)]
#[command(name = "lostwage", version, about = "Lost-wage claims: operator tools")]
pub struct Cli {
    /// Service config file (TOML).
    #[arg(long, global = true, env = "LOSTWAGE_CONFIG")]
    config: Option<PathBuf>,
    /// Database path; overrides the config file.
    #[arg(long, global = true)]
    db: Option<PathBuf>,
    /// Emit one JSON document instead of text.
    #[arg(long, global = true)]
    json: bool,
    /// Act as this role.
    #[arg(long = "as-role", global = true, default_value = "ADMIN")]
    as_role: String,
    #[arg(long = "as-id", global = true, default_value = "operator")]
    as_id: String,
    /// Pin the clock (RFC 3339), for replays.
    #[arg(long, global = true)]
    now: Option<DateTime<Utc>>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a scenario's connector accounts and onboard one driver per account.
    Seed { scenario: PathBuf },
    #[command(subcommand)]
    Case(CaseCmd),
    /// Render a case report to a file.
    Report(ReportArgs),
    /// Recompute a case with the brute-force oracle and diff.
    Oracle { case_id: String },
    /// Account, sync and platform counts.
    Stats,
    /// Enrolled drivers.
    Drivers {
        /// Only drivers with (true) or without (false) a synced account.
        #[arg(long)]
        synced: Option<bool>,
    },
    /// Webhook bodies that were rejected or quarantined.
    DeadLetters,
    /// The append-only audit log.
    Audit,
    #[command(subcommand)]
    Connector(ConnectorCmd),
    /// Run the HTTP API.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
enum CaseCmd {
    Create(CreateArgs),
    Show { case_id: String },
    List,
    /// Turn the statutory daily rate on or off for a case.
    Fallback {
        case_id: String,
        #[arg(action = clap::ArgAction::Set)]
        on: bool,
    },
}

#[derive(Debug, Args)]
struct CreateArgs {
    #[arg(long)]
    driver: String,
    #[arg(long)]
    platform: Platform,
    #[arg(long)]
    deactivation: NaiveDate,
    #[arg(long)]
    reactivation: Option<NaiveDate>,
    #[arg(long = "as-of")]
    as_of: Option<NaiveDate>,
    #[arg(long)]
    fallback: bool,
    /// JSON file of policy overrides.
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    case_id: String,
    #[arg(long, default_value = "pdf")]
    format: ReportFormat,
    /// Output path; defaults to the report's filename in the current directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    fallback: bool,
    #[arg(long = "override-sync")]
    override_sync: bool,
    #[arg(long)]
    redact: bool,
}

#[derive(Debug, Subcommand)]
enum ConnectorCmd {
    /// Deliver trips added on the platform side since the last sync.
    Refresh,
}

fn dollars(cents: i64) -> String {
    let sign = if cents < 0 { "-" } else { "" };
    let c = cents.unsigned_abs();
    format!("{sign}${}.{:02}", c / 100, c % 100)
}

struct Ctx<'a> {
    cli: &'a Cli,
    out: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn emit<T: Serialize>(&mut self, value: &T, text: impl FnOnce() -> String) -> ServiceResult<()> {
        let s = if self.cli.json {
            serde_json::to_string_pretty(value).map_err(|e| ServiceError::Internal(e.to_string()))?
        } else {
            text()
        };
        writeln!(self.out, "{s}").map_err(|e| ServiceError::Internal(e.to_string()))
    }

    fn config(&self) -> ServiceResult<ServiceConfig> {
        let mut cfg = ServiceConfig::resolve(self.cli.config.as_deref())?;
        if let Some(db) = &self.cli.db {
            cfg.database = db.clone();
        }
        Ok(cfg)
    }

    fn clock(&self) -> Arc<dyn Clock> {
        match self.cli.now {
            Some(t) => Arc::new(FixedClock::new(t)),
            None => Arc::new(SystemClock),
        }
    }

    fn app(&self) -> ServiceResult<App> {
        App::open(self.config()?, self.clock())
    }

    fn actor(&self) -> ServiceResult<Actor> {
        let role: Role = self.cli.as_role.parse()?;
        Ok(Actor::new(self.cli.as_id.clone(), role))
    }
}

fn read_file(path: &Path) -> ServiceResult<String> {
    std::fs::read_to_string(path).map_err(|e| ServiceError::Validation(format!("{}: {e}", path.display())))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    let json = cli.json;
    let mut ctx = Ctx { cli: &cli, out };
    match dispatch(&mut ctx) {
        Ok(code) => code,
        Err(e) => {
            if json {
                let body = json!({"error": e.code(), "message": e.to_string()});
                let _ = writeln!(ctx.out, "{body}");
            } else {
                let _ = writeln!(err, "error [{}]: {e}", e.code().as_str());
            }
            exit_code(e.code())
        }
    }
}

fn dispatch(ctx: &mut Ctx<'_>) -> ServiceResult<i32> {
    let cli = ctx.cli;
    match &cli.command {
        Command::Seed { scenario: path } => {
            let sc = Scenario::from_json(&read_file(path)?)?;
            let cfg = ctx.config()?;
            let store = Arc::new(Store::open(&cfg.database)?);
            let summary = scenario::seed(store, &cfg, &sc)?;
            let s = &summary.stats;
            ctx.emit(&summary, || {
                format!(
                    "seeded {} accounts ({} drivers, {} sharing)\n\
                     synced {} / failed {} / syncing {}\n\
                     synced by platform: uber {} lyft {}\n\
                     trips {}\nstore hash {}",
                    summary.accounts,
                    s.drivers,
                    s.drivers_sharing,
                    s.synced,
                    s.failed,
                    s.syncing,
                    s.synced_by_platform.uber,
                    s.synced_by_platform.lyft,
                    s.trips,
                    summary.store_hash
                )
            })?;
        }
        Command::Case(cmd) => {
            let app = ctx.app()?;
            let actor = ctx.actor()?;
            let case = match cmd {
                CaseCmd::Create(a) => {
                    let params = match &a.params {
                        Some(p) => Some(
                            serde_json::from_str::<ParamsPatch>(&read_file(p)?)
                                .map_err(|e| ServiceError::Validation(format!("params: {e}")))?,
                        ),
                        None => None,
                    };
                    app.service.create_case(
                        &actor,
                        CreateCase {
                            driver_id: a.driver.clone(),
                            platform: a.platform,
                            deactivation_date: a.deactivation,
                            reactivation_date: a.reactivation,
                            as_of_date: a.as_of,
                            params,
                            use_fallback: a.fallback,
                        },
                    )?
                }
                CaseCmd::Show { case_id } => app.service.get_case(&actor, case_id)?,
                CaseCmd::Fallback { case_id, on } => app.service.set_case_fallback(&actor, case_id, *on)?,
                CaseCmd::List => {
                    let cases = app.service.list_cases(&actor)?;
                    ctx.emit(&cases, || {
                        cases
                            .iter()
                            .map(|c| format!("{}\t{}\t{}\t{}", c.case_id, c.driver_id, c.platform, c.deactivation_date))
                            .collect::<Vec<_>>()
                            .join("\n")
                    })?;
                    return Ok(EXIT_OK);
                }
            };
            ctx.emit(&case, || {
                format!(
                    "{} driver {} {} deactivated {} fallback {}",
                    case.case_id, case.driver_id, case.platform, case.deactivation_date, case.use_fallback
                )
            })?;
        }
        Command::Report(a) => {
            let app = ctx.app()?;
            let opts = ReportOptions {
                override_sync: a.override_sync,
                use_fallback: a.fallback,
                redact: a.redact.then_some(true),
            };
            let r = app.service.get_report(&ctx.actor()?, &a.case_id, a.format, &opts)?;
            let path = a.out.clone().unwrap_or_else(|| PathBuf::from(&r.filename));
            std::fs::write(&path, &r.bytes)
                .map_err(|e| ServiceError::Internal(format!("{}: {e}", path.display())))?;
            let body = json!({
                "path": path,
                "bytes": r.bytes.len(),
                "sha256": r.record.sha256,
                "report_id": r.record.report_id,
                "preview": r.preview,
            });
            let p = &r.preview;
            ctx.emit(&body, || {
                format!(
                    "wrote {} ({} bytes)\nprincipal {} interest {} total {}{}",
                    path.display(),
                    r.bytes.len(),
                    dollars(p.principal_cents),
                    dollars(p.interest_cents),
                    dollars(p.total_cents),
                    if p.fallback_used { " (fallback rate)" } else { "" }
                )
            })?;
        }
        Command::Oracle { case_id } => {
            let app = ctx.app()?;
            let check = app.service.verify_case(&ctx.actor()?, case_id)?;
            let verdict = if check.matches { "MATCH" } else { "MISMATCH" };
            let body = json!({"verdict": verdict, "check": check});
            ctx.emit(&body, || {
                let mut s = format!(
                    "{verdict} {} as of {}: engine {} oracle {} ({} trips)",
                    check.case_id,
                    check.as_of_date,
                    dollars(check.engine.total_cents),
                    dollars(check.oracle.total_cents),
                    check.trips
                );
                for d in &check.diffs {
                    s.push_str("\n  ");
                    s.push_str(d);
                }
                s
            })?;
            return Ok(if check.matches { EXIT_OK } else { EXIT_INTERNAL });
        }
        Command::Stats => {
            let app = ctx.app()?;
            let s = app.service.stats(&ctx.actor()?)?;
            ctx.emit(&s, || {
                format!(
                    "accounts created   {}\n\
                     synced             {}\n\
                     failed             {}\n\
                     syncing            {}\n\
                     pending            {}\n\
                     by platform        uber {} lyft {}\n\
                     synced by platform uber {} lyft {}\n\
                     drivers            {} ({} verified, {} sharing)\n\
                     trips {}  cases {}  reports {}  dead letters {}",
                    s.accounts_created,
                    s.synced,
                    s.failed,
                    s.syncing,
                    s.pending,
                    s.accounts_by_platform.uber,
                    s.accounts_by_platform.lyft,
                    s.synced_by_platform.uber,
                    s.synced_by_platform.lyft,
                    s.drivers,
                    s.drivers_verified,
                    s.drivers_sharing,
                    s.trips,
                    s.cases,
                    s.reports,
                    s.dead_letters
                )
            })?;
        }
        Command::Drivers { synced } => {
            let app = ctx.app()?;
            let list = app.service.list_drivers(&ctx.actor()?, *synced)?;
            ctx.emit(&list, || {
                list.iter()
                    .map(|d| {
                        let accts: Vec<_> =
                            d.accounts.iter().map(|a| format!("{}:{}", a.account_id, a.status.state.as_str())).collect();
                        format!("{}\t{}\tshare={}\t{}", d.driver_id, d.display_name, d.share_consent, accts.join(","))
                    })
                    .collect::<Vec<_>>()
                    .join("\n")
            })?;
        }
        Command::DeadLetters => {
            let app = ctx.app()?;
            let list = app.service.dead_letters(&ctx.actor()?)?;
            ctx.emit(&list, || {
                if list.is_empty() {
                    return "no dead letters".into();
                }
                list.iter()
                    .map(|d| {
                        format!(
                            "{}\t{}\t{}\t{}",
                            d.id,
                            d.delivery_id.as_deref().unwrap_or("-"),
                            d.account_id.as_deref().unwrap_or("-"),
                            d.reason
                        )
                    })
                    .collect::<Vec<_>>()
                    .join("\n")
            })?;
        }
        Command::Audit => {
            let app = ctx.app()?;
            let log = app.service.audit_log(&ctx.actor()?)?;
            ctx.emit(&log, || {
                log.iter()
                    .map(|a| {
                        format!(
                            "{}\t{}\t{}\t{}\t{}",
                            a.seq,
                            a.at,
                            a.actor_id,
                            a.action,
                            a.case_id.as_deref().unwrap_or("-")
                        )
                    })
                    .collect::<Vec<_>>()
                    .join("\n")
            })?;
        }
        Command::Connector(ConnectorCmd::Refresh) => {
            let app = ctx.app()?;
            let n = app.service.refresh_connector(&ctx.actor()?)?;
            ctx.emit(&json!({"deliveries": n}), || format!("{n} deliveries"))?;
        }
        Command::Serve { bind } => {
            let app = ctx.app()?;
            let bind = bind.clone().unwrap_or_else(|| app.config.bind.clone());
            let rt = tokio::runtime::Runtime::new().map_err(|e| ServiceError::Internal(e.to_string()))?;
            rt.block_on(lostwage_service::http::serve(app.state(), &bind))
                .map_err(|e| ServiceError::Internal(format!("serve {bind}: {e}")))?;
        }
    }
    Ok(EXIT_OK)
}
