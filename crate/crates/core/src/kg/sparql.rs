//! SPARQL-over-HTTP client for fetching entity facts.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::Deserialize;

use super::{KgEntity, KgError, KgFact};
use crate::throttle::Throttle;

pub const DEFAULT_ENDPOINT: &str = "https://dbpedia.org/sparql";
const DBO: &str = "http://dbpedia.org/ontology/";

static REQUESTS_SENT: AtomicU64 = AtomicU64::new(0);

/// Number of SPARQL HTTP requests issued by this process.
pub fn requests_sent() -> u64 {
    REQUESTS_SENT.load(Ordering::SeqCst)
}

#[derive(Debug, Clone)]
pub struct SparqlConfig {
    pub endpoint: String,
    pub timeout: Duration,
    pub retries: u32,
    pub max_in_flight: usize,
}

impl Default for SparqlConfig {
    fn default() -> Self {
        Self {
            endpoint: DEFAULT_ENDPOINT.into(),
            timeout: Duration::from_secs(10),
            retries: 1,
            max_in_flight: 4,
        }
    }
}

#[derive(Debug)]
pub struct SparqlClient {
    config: SparqlConfig,
    http: reqwest::blocking::Client,
    throttle: Throttle,
}

#[derive(Debug, Deserialize)]
struct SparqlResults {
    results: Bindings,
}

#[derive(Debug, Deserialize)]
struct Bindings {
    bindings: Vec<HashMap<String, Term>>,
}

#[derive(Debug, Deserialize)]
struct Term {
    #[serde(rename = "type")]
    kind: String,
    value: String,
    #[serde(rename = "xml:lang", default)]
    lang: Option<String>,
}

/// Expands a predicate name to a full IRI: bare names go under the DBpedia
/// ontology namespace, `dbo:` prefixes are expanded, anything else that looks
/// like an IRI is kept.
pub fn predicate_iri(predicate: &str) -> String {
    if predicate.starts_with("http://") || predicate.starts_with("https://") {
        predicate.to_string()
    } else if let Some(local) = predicate.strip_prefix("dbo:") {
        format!("{DBO}{local}")
    } else {
        format!("{DBO}{predicate}")
    }
}

fn local_name(iri: &str) -> &str {
    iri.rsplit(['/', '#']).next().unwrap_or(iri)
}

fn check_iri(iri: &str) -> Result<(), KgError> {
    if iri.is_empty() || iri.contains(|c: char| c.is_whitespace() || matches!(c, '<' | '>' | '"' | '{' | '}' | '|' | '^' | '`' | '\\')) {
        return Err(KgError::InvalidUri(iri.to_string()));
    }
    Ok(())
}

/// One query selecting the requested predicates of a resource, literal
/// values restricted to `language`.
pub fn build_fact_query(uri: &str, predicates: &[String], language: &str) -> Result<String, KgError> {
    check_iri(uri)?;
    let mut values = Vec::with_capacity(predicates.len());
    for p in predicates {
        let iri = predicate_iri(p);
        check_iri(&iri)?;
        values.push(format!("<{iri}>"));
    }
    if !language.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') {
        return Err(KgError::InvalidUri(format!("language tag '{language}'")));
    }
    Ok(format!(
        "SELECT ?p ?o WHERE {{\n  VALUES ?p {{ {} }}\n  <{uri}> ?p ?o .\n  FILTER (!isLiteral(?o) || lang(?o) = \"\" || langMatches(lang(?o), \"{language}\"))\n}}",
        values.join(" ")
    ))
}

/// Turns a `application/sparql-results+json` body into facts about `entity`,
/// in the order of `predicates`.
pub fn parse_fact_results(
    body: &str,
    entity: &KgEntity,
    predicates: &[String],
    language: &str,
) -> Result<Vec<KgFact>, KgError> {
    let parsed: SparqlResults =
        serde_json::from_str(body).map_err(|e| KgError::MalformedResponse(e.to_string()))?;
    let mut facts = Vec::new();
    for wanted in predicates {
        let wanted_iri = predicate_iri(wanted);
        for binding in &parsed.results.bindings {
            let (Some(p), Some(o)) = (binding.get("p"), binding.get("o")) else {
                return Err(KgError::MalformedResponse("binding lacks ?p or ?o".into()));
            };
            if p.value != wanted_iri {
                continue;
            }
            if let Some(lang) = &o.lang {
                if !lang.is_empty() && !lang.eq_ignore_ascii_case(language) {
                    continue;
                }
            }
            let object_text = match o.kind.as_str() {
                "uri" => local_name(&o.value).replace('_', " "),
                _ => o.value.clone(),
            };
            if object_text.trim().is_empty() {
                continue;
            }
            facts.push(KgFact {
                subject_label: entity.label.clone(),
                predicate: local_name(&p.value).to_string(),
                object_text,
            });
        }
    }
    Ok(facts)
}

impl SparqlClient {
    pub fn new(config: SparqlConfig) -> Result<Self, KgError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| KgError::Http(e.to_string()))?;
        let throttle = Throttle::new(config.max_in_flight);
        Ok(Self {
            config,
            http,
            throttle,
        })
    }

    pub fn endpoint(&self) -> &str {
        &self.config.endpoint
    }

    /// Runs a SELECT query and returns the raw JSON body.
    pub fn select(&self, query: &str) -> Result<String, KgError> {
        let _permit = self.throttle.acquire();
        let mut last = KgError::EndpointTimeout;
        for _ in 0..=self.config.retries {
            REQUESTS_SENT.fetch_add(1, Ordering::SeqCst);
            let result = self
                .http
                .get(&self.config.endpoint)
                .query(&[("query", query), ("format", "application/sparql-results+json")])
                .header("Accept", "application/sparql-results+json")
                .send();
            match result {
                Ok(resp) if resp.status().is_success() => {
                    return resp.text().map_err(|e| {
                        if e.is_timeout() {
                            KgError::EndpointTimeout
                        } else {
                            KgError::Http(e.to_string())
                        }
                    });
                }
                Ok(resp) if resp.status().is_server_error() => {
                    last = KgError::Http(format!("endpoint returned {}", resp.status()));
                }
                Ok(resp) => return Err(KgError::Http(format!("endpoint returned {}", resp.status()))),
                Err(e) if e.is_timeout() => last = KgError::EndpointTimeout,
                Err(e) => last = KgError::Http(e.to_string()),
            }
            tracing::debug!(endpoint = %self.config.endpoint, error = %last, "sparql attempt failed");
        }
        Err(last)
    }

    pub fn fetch_facts(
        &self,
        entity: &KgEntity,
        predicates: &[String],
        language: &str,
    ) -> Result<Vec<KgFact>, KgError> {
        let query = build_fact_query(&entity.uri, predicates, language)?;
        let body = self.select(&query)?;
        parse_fact_results(&body, entity, predicates, language)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entity() -> KgEntity {
        KgEntity {
            uri: "http://dbpedia.org/resource/Lifestyle_disease".into(),
            label: "lifestyle disease".into(),
            match_score: 1.0,
        }
    }

    #[test]
    fn query_selects_language_filtered_predicates() {
        let q = build_fact_query(&entity().uri, &["abstract".into(), "dbo:type".into()], "en").unwrap();
        assert!(q.contains("<http://dbpedia.org/resource/Lifestyle_disease> ?p ?o"));
        assert!(q.contains("VALUES ?p { <http://dbpedia.org/ontology/abstract> <http://dbpedia.org/ontology/type> }"));
        assert!(q.contains("langMatches(lang(?o), \"en\")"));
    }

    #[test]
    fn rejects_injection_in_uri() {
        assert!(matches!(
            build_fact_query("http://x> } DROP ALL {", &["abstract".into()], "en"),
            Err(KgError::InvalidUri(_))
        ));
        assert!(build_fact_query("http://x", &["abstract".into()], "en\")").is_err());
    }

    #[test]
    fn parses_bindings_and_filters_language() {
        let body = r#"{"head":{"vars":["p","o"]},"results":{"bindings":[
            {"p":{"type":"uri","value":"http://dbpedia.org/ontology/abstract"},
             "o":{"type":"literal","xml:lang":"ja","value":"生活習慣病"}},
            {"p":{"type":"uri","value":"http://dbpedia.org/ontology/abstract"},
             "o":{"type":"literal","xml:lang":"en","value":"Lifestyle diseases can be defined as diseases linked with one's lifestyle."}},
            {"p":{"type":"uri","value":"http://dbpedia.org/ontology/type"},
             "o":{"type":"uri","value":"http://dbpedia.org/resource/Chronic_condition"}}
        ]}}"#;
        let preds = vec!["abstract".to_string(), "type".to_string()];
        let facts = parse_fact_results(body, &entity(), &preds, "en").unwrap();
        assert_eq!(facts.len(), 2);
        assert_eq!(facts[0].predicate, "abstract");
        assert!(facts[0].object_text.starts_with("Lifestyle diseases"));
        assert_eq!(facts[1].predicate, "type");
        assert_eq!(facts[1].object_text, "Chronic condition");
    }

    #[test]
    fn malformed_body_is_reported() {
        let preds = vec!["abstract".to_string()];
        assert!(matches!(
            parse_fact_results("<html>oops</html>", &entity(), &preds, "en"),
            Err(KgError::MalformedResponse(_))
        ));
        assert!(matches!(
            parse_fact_results(r#"{"results":{"bindings":[{"x":{"type":"uri","value":"a"}}]}}"#, &entity(), &preds, "en"),
            Err(KgError::MalformedResponse(_))
        ));
    }
}
