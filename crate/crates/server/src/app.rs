use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use chrono::{DateTime, Utc};
use icls_core::gamification::GamificationRules;
use icls_core::llm::LlmGateway;

use crate::clock::{Clock, SystemClock};
use crate::config::DEFAULT_PIPELINE_TIMEOUT;
use crate::db::{Database, DbError};
use crate::error::ApiError;
use crate::model::{Change, State, StateExport};

#[derive(Debug, Clone)]
pub struct AppOptions {
    pub admin_token: Option<String>,
    pub pipeline_timeout: Duration,
    pub session_ttl: chrono::Duration,
    pub rules: GamificationRules,
}

impl Default for AppOptions {
    fn default() -> Self {
        AppOptions {
            admin_token: None,
            pipeline_timeout: DEFAULT_PIPELINE_TIMEOUT,
            session_ttl: chrono::Duration::hours(24),
            rules: GamificationRules::default(),
        }
    }
}

pub struct Inner {
    pub state: State,
    pub db: Database,
}

impl Inner {
    /// Persists the changes in one transaction, then applies them in memory.
    pub fn commit(&mut self, changes: Vec<Change>) -> Result<(), ApiError> {
        if changes.is_empty() {
            return Ok(());
        }
        self.db.persist(&changes)?;
        for change in changes {
            self.state.apply(change);
        }
        Ok(())
    }
}

pub struct App {
    inner: Mutex<Inner>,
    gateway: Arc<LlmGateway>,
    clock: Arc<dyn Clock>,
    options: AppOptions,
}

impl App {
    /// Loads the stored state; fails when a ledger does not match its stored totals.
    pub fn new(db: Database, gateway: LlmGateway, clock: Arc<dyn Clock>, options: AppOptions) -> Result<Self, DbError> {
        let state = db.load()?;
        Ok(App {
            inner: Mutex::new(Inner { state, db }),
            gateway: Arc::new(gateway),
            clock,
            options,
        })
    }

    pub fn with_system_clock(db: Database, gateway: LlmGateway, options: AppOptions) -> Result<Self, DbError> {
        Self::new(db, gateway, Arc::new(SystemClock), options)
    }

    pub fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    pub fn gateway(&self) -> Arc<LlmGateway> {
        self.gateway.clone()
    }

    pub fn rules(&self) -> &GamificationRules {
        &self.options.rules
    }

    pub fn admin_token(&self) -> Option<&str> {
        self.options.admin_token.as_deref()
    }

    pub fn pipeline_timeout(&self) -> Duration {
        self.options.pipeline_timeout
    }

    pub fn session_ttl(&self) -> chrono::Duration {
        self.options.session_ttl
    }

    pub fn export(&self) -> StateExport {
        self.lock().state.export()
    }
}
