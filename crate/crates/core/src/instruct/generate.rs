use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::client::{ChatClient, ChatMessage, ChatRequest, EndpointError};
use super::grammar::{parse_pairs, ParseIssue};
use super::route::{GenerationRoute, ModelMap};
use super::template::PromptTemplate;
use super::QaPair;

/// Pairs parsed from one reply, with the route that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generated {
    pub route: GenerationRoute,
    pub model: String,
    pub pairs: Vec<QaPair>,
    pub issues: Vec<ParseIssue>,
}

/// Sends one chat request for a metadata document and parses the reply.
pub fn generate_pairs(
    doc_text: &str,
    template: &PromptTemplate,
    route: GenerationRoute,
    models: &ModelMap,
    temperature: f64,
    client: &dyn ChatClient,
) -> Result<Generated, EndpointError> {
    let model = models.model(route.model_tier).to_string();
    let request = ChatRequest {
        model: model.clone(),
        messages: vec![
            ChatMessage::system(template.system.clone()),
            ChatMessage::user(template.render_user(doc_text)),
        ],
        temperature,
    };
    let reply = client.complete(&request)?;
    let (pairs, issues) = parse_pairs(&reply);
    Ok(Generated {
        route,
        model,
        pairs,
        issues,
    })
}

#[derive(Debug, Clone)]
pub struct GenerationJob {
    pub doc_text: String,
    pub template: PromptTemplate,
    pub route: GenerationRoute,
}

/// Runs jobs with at most `in_flight` concurrent requests. Results are in
/// job order whatever the completion order.
pub fn generate_batch(
    jobs: &[GenerationJob],
    models: &ModelMap,
    temperature: f64,
    client: &dyn ChatClient,
    in_flight: usize,
) -> Vec<Result<Generated, EndpointError>> {
    let slots: Vec<Mutex<Option<Result<Generated, EndpointError>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = in_flight.clamp(1, jobs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let result = generate_pairs(&job.doc_text, &job.template, job.route, models, temperature, client);
                *slots[i].lock().expect("result slot") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().expect("result slot").expect("every job ran"))
        .collect()
}
