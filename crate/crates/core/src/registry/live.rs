//! Live registry endpoints for downloads and repository metadata.

use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::Value;

use super::{ArchiveSource, DistKind, DistributionRef, Registry, RegistryError, VersionCoordinates};

const USER_AGENT: &str = concat!("update-audit/", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone)]
pub struct LiveRegistry {
    client: Client,
}

impl LiveRegistry {
    pub fn new() -> Result<Self, RegistryError> {
        let client = Client::builder()
            .user_agent(USER_AGENT)
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| RegistryError::Fetch(e.to_string()))?;
        Ok(LiveRegistry { client })
    }

    fn get_json(&self, url: &str, coords: &VersionCoordinates) -> Result<Value, RegistryError> {
        let resp = self.client.get(url).send().map_err(|e| RegistryError::Fetch(e.to_string()))?;
        if resp.status() == StatusCode::NOT_FOUND {
            return Err(RegistryError::VersionNotInRegistry(coords.clone()));
        }
        let resp = resp.error_for_status().map_err(|e| RegistryError::Fetch(e.to_string()))?;
        resp.json().map_err(|e| RegistryError::Fetch(e.to_string()))
    }

    /// The raw repository field the registry lists for a version, if any.
    pub fn repository_field(&self, coords: &VersionCoordinates) -> Result<Option<String>, RegistryError> {
        let text = |v: &Value| v.as_str().filter(|s| !s.trim().is_empty()).map(str::to_string);
        match coords.registry {
            Registry::CratesIo => {
                let v = self.get_json(&format!("https://crates.io/api/v1/crates/{}", coords.package), coords)?;
                Ok(text(&v["crate"]["repository"]))
            }
            Registry::Npm => {
                let v = self.get_json(&format!("https://registry.npmjs.org/{}/{}", coords.package, coords.version), coords)?;
                let repo = &v["repository"];
                Ok(text(repo).or_else(|| text(&repo["url"])))
            }
            Registry::Pypi => {
                let v = self.get_json(&format!("https://pypi.org/pypi/{}/{}/json", coords.package, coords.version), coords)?;
                let info = &v["info"];
                let mut candidates: Vec<String> = Vec::new();
                if let Some(urls) = info["project_urls"].as_object() {
                    // prefer explicit source links, then anything on github
                    for key in ["Source", "Source Code", "Repository", "Code", "GitHub", "Homepage"] {
                        if let Some(u) = urls.get(key).and_then(text) {
                            candidates.push(u);
                        }
                    }
                    candidates.extend(urls.values().filter_map(text));
                }
                candidates.extend(text(&info["home_page"]));
                Ok(candidates
                    .iter()
                    .find(|u| u.contains("github.com"))
                    .or(candidates.first())
                    .cloned())
            }
            Registry::Rubygems => {
                let v = self.get_json(&format!("https://rubygems.org/api/v1/gems/{}.json", coords.package), coords)?;
                Ok(text(&v["source_code_uri"]).or_else(|| text(&v["homepage_uri"])))
            }
        }
    }
}

impl ArchiveSource for LiveRegistry {
    fn distributions(&self, coords: &VersionCoordinates) -> Result<Vec<DistributionRef>, RegistryError> {
        let (name, version) = (&coords.package, &coords.version);
        match coords.registry {
            Registry::CratesIo => Ok(vec![DistributionRef {
                kind: DistKind::Crate,
                filename: format!("{name}-{version}.crate"),
                location: format!("https://static.crates.io/crates/{name}/{name}-{version}.crate"),
            }]),
            Registry::Npm => {
                let v = self.get_json(&format!("https://registry.npmjs.org/{name}/{version}"), coords)?;
                let url = v["dist"]["tarball"]
                    .as_str()
                    .ok_or_else(|| RegistryError::VersionNotInRegistry(coords.clone()))?;
                Ok(vec![DistributionRef {
                    kind: DistKind::NpmTarball,
                    filename: url.rsplit('/').next().unwrap_or(url).to_string(),
                    location: url.to_string(),
                }])
            }
            Registry::Pypi => {
                let v = self.get_json(&format!("https://pypi.org/pypi/{name}/{version}/json"), coords)?;
                let urls = v["urls"].as_array().cloned().unwrap_or_default();
                Ok(urls
                    .iter()
                    .filter_map(|u| {
                        let kind = match u["packagetype"].as_str()? {
                            "bdist_wheel" => DistKind::Wheel,
                            "sdist" => DistKind::Sdist,
                            _ => return None,
                        };
                        Some(DistributionRef {
                            kind,
                            filename: u["filename"].as_str()?.to_string(),
                            location: u["url"].as_str()?.to_string(),
                        })
                    })
                    .collect())
            }
            Registry::Rubygems => Ok(vec![DistributionRef {
                kind: DistKind::Gem,
                filename: format!("{name}-{version}.gem"),
                location: format!("https://rubygems.org/downloads/{name}-{version}.gem"),
            }]),
        }
    }

    fn download(&self, coords: &VersionCoordinates, dist: &DistributionRef) -> Result<Vec<u8>, RegistryError> {
        let resp = self
            .client
            .get(&dist.location)
            .send()
            .map_err(|e| RegistryError::Fetch(e.to_string()))?;
        if resp.status() == StatusCode::NOT_FOUND || resp.status() == StatusCode::FORBIDDEN {
            return Err(RegistryError::VersionNotInRegistry(coords.clone()));
        }
        let resp = resp.error_for_status().map_err(|e| RegistryError::Fetch(e.to_string()))?;
        Ok(resp.bytes().map_err(|e| RegistryError::Fetch(e.to_string()))?.to_vec())
    }
}
