#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use medorch_core::gateway::{Agent, AgentRole, AgentSpec, Gateway, HttpAgent};
use medorch_core::mock::{serve, MockServer, Script, ScriptedAgent};

pub fn spec(server: &MockServer, id: &str, role: AgentRole) -> AgentSpec {
    let mut spec = AgentSpec::new(id, role, server.base_url(id), "mock-model");
    spec.timeout = Duration::from_secs(10);
    spec.backoff_base = Duration::from_millis(5);
    spec
}

pub fn http_agent(server: &MockServer, id: &str, role: AgentRole) -> Arc<HttpAgent> {
    Gateway::default().agent(spec(server, id, role)).unwrap()
}

pub fn dyn_http(server: &MockServer, id: &str, role: AgentRole) -> Arc<dyn Agent> {
    http_agent(server, id, role)
}

pub fn scripted(script: Script) -> Arc<dyn Agent> {
    Arc::new(ScriptedAgent::new(script))
}

/// Agents served over HTTP by one mock server, grouped by script role.
pub struct HttpPool {
    pub server: MockServer,
    pub experts: Vec<Arc<dyn Agent>>,
    pub mediator: Option<Arc<dyn Agent>>,
    pub judge: Option<Arc<dyn Agent>>,
    pub parser: Option<Arc<dyn Agent>>,
}

pub async fn http_pool(scripts: Vec<Script>) -> HttpPool {
    let roles: Vec<(String, AgentRole)> = scripts.iter().map(|s| (s.agent_id.clone(), s.role)).collect();
    let server = serve(scripts, "127.0.0.1:0").await.unwrap();
    let mut pool = HttpPool { experts: vec![], mediator: None, judge: None, parser: None, server };
    for (id, role) in roles {
        let agent = dyn_http(&pool.server, &id, role);
        match role {
            AgentRole::Expert => pool.experts.push(agent),
            AgentRole::Mediator => pool.mediator = Some(agent),
            AgentRole::Judge => pool.judge = Some(agent),
            AgentRole::Parser => pool.parser = Some(agent),
        }
    }
    pool
}
