//! Named pipeline configurations selectable per conversation.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{Branch, LoopConfig, TurnConfig};
use crate::llm::{ProviderConfig, ProviderKind};
use crate::retrieval::RetrievalConfig;
use crate::sql_tool::SqlLimits;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConfigProfile {
    pub id: String,
    pub name: String,
    pub retrieval_branches: BTreeSet<Branch>,
    pub provider_config: ProviderConfig,
    #[serde(default)]
    pub loop_config: LoopConfig,
    #[serde(default)]
    pub retrieval_config: RetrievalConfig,
    #[serde(default)]
    pub sql_limits: SqlLimits,
}

impl ConfigProfile {
    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("profile id must not be empty".into());
        }
        if self.retrieval_branches.is_empty() {
            return Err(format!("profile {}: retrievalBranches must not be empty", self.id));
        }
        if self.loop_config.max_rounds_per_tool == 0 {
            return Err(format!("profile {}: maxRoundsPerTool must be >= 1", self.id));
        }
        self.retrieval_config
            .validate()
            .map_err(|e| format!("profile {}: {e}", self.id))?;
        self.provider_config
            .validate()
            .map_err(|e| format!("profile {}: {e}", self.id))
    }

    pub fn turn_config(&self) -> TurnConfig {
        TurnConfig {
            branches: self.retrieval_branches.clone(),
            loop_config: self.loop_config,
            retrieval: self.retrieval_config,
            sql_limits: self.sql_limits,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProfileSet {
    pub default_profile: String,
    pub profiles: Vec<ConfigProfile>,
}

impl ProfileSet {
    pub fn get(&self, id: &str) -> Option<&ConfigProfile> {
        self.profiles.iter().find(|p| p.id == id)
    }

    pub fn default_profile(&self) -> &ConfigProfile {
        self.get(&self.default_profile).expect("validated")
    }

    pub fn validate(&self) -> Result<(), String> {
        let mut ids = BTreeSet::new();
        for p in &self.profiles {
            p.validate()?;
            if !ids.insert(p.id.as_str()) {
                return Err(format!("duplicate profile id {}", p.id));
            }
        }
        if self.get(&self.default_profile).is_none() {
            return Err(format!("default profile {} is not defined", self.default_profile));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text =
            std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let set: ProfileSet =
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        set.validate()?;
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).expect("profiles serialize");
        std::fs::write(path, text + "\n")
    }

    /// Profiles written by `ingest` when none are supplied: a hosted model
    /// and a locally served open model, each with both branches, plus the
    /// single-branch variants of the hosted one.
    pub fn defaults() -> Self {
        let remote = ProviderConfig {
            kind: ProviderKind::RemoteApi,
            endpoint: Some("https://api.openai.com/v1".into()),
            model: "gpt-4o".into(),
            embedding_model: Some("text-embedding-3-small".into()),
            credentials_ref: Some("OPENAI_API_KEY".into()),
            script: None,
        };
        let local = ProviderConfig {
            kind: ProviderKind::LocalServer,
            endpoint: Some("http://localhost:11434/v1".into()),
            model: "llama3.3:70b".into(),
            embedding_model: None,
            credentials_ref: None,
            script: None,
        };
        let profile = |id: &str, name: &str, branches: &[Branch], provider: &ProviderConfig| {
            ConfigProfile {
                id: id.into(),
                name: name.into(),
                retrieval_branches: branches.iter().copied().collect(),
                provider_config: provider.clone(),
                loop_config: LoopConfig::default(),
                retrieval_config: RetrievalConfig::default(),
                sql_limits: SqlLimits::default(),
            }
        };
        let both = [Branch::Sql, Branch::Text];
        ProfileSet {
            default_profile: "hosted".into(),
            profiles: vec![
                profile("hosted", "Hosted model, SQL + text", &both, &remote),
                profile("hosted-sql", "Hosted model, SQL only", &[Branch::Sql], &remote),
                profile("hosted-text", "Hosted model, text only", &[Branch::Text], &remote),
                profile("local", "Local open model, SQL + text", &both, &local),
            ],
        }
    }

    /// One profile per branch combination, all using `provider`.
    pub fn for_provider(provider: ProviderConfig) -> Self {
        let mut set = Self::defaults();
        set.profiles.truncate(3);
        for (p, (id, name)) in set.profiles.iter_mut().zip([
            ("both", "SQL + text"),
            ("sql-only", "SQL only"),
            ("text-only", "Text only"),
        ]) {
            p.id = id.into();
            p.name = name.into();
            p.provider_config = provider.clone();
        }
        set.default_profile = "both".into();
        set
    }
}
