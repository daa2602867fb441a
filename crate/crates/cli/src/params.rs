use std::collections::BTreeMap;
use std::str::FromStr;

use skewnet::{Error, Result};

/// `key=value` pairs from a comma-separated list. Every key must be read
/// before [`Params::finish`], so typos surface as errors.
#[derive(Clone, Debug, Default)]
pub struct Params {
    values: BTreeMap<String, String>,
    used: Vec<String>,
}

impl Params {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Domain(format!("--params: expected key=value, got `{item}`")))?;
            if values.insert(k.trim().to_owned(), v.trim().to_owned()).is_some() {
                return Err(Error::Domain(format!("--params: `{k}` given twice")));
            }
        }
        Ok(Params { values, used: Vec::new() })
    }

    pub fn set(&mut self, key: &str, value: String) {
        self.values.insert(key.to_owned(), value);
    }

    pub fn get<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        self.used.push(key.to_owned());
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Domain(format!("--params: cannot parse {key}={v}"))),
        }
    }

    pub fn or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&mut self, key: &str) -> Result<T> {
        self.get(key)?.ok_or_else(|| Error::Domain(format!("--params: `{key}` is required")))
    }

    pub fn finish(&self) -> Result<()> {
        match self.values.keys().find(|k| !self.used.contains(k)) {
            Some(k) => Err(Error::Domain(format!("--params: unknown key `{k}`"))),
            None => Ok(()),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        self.values.iter().map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone()))).collect()
    }
}

/// Comma-separated list of values.
pub fn list<T: FromStr>(flag: &str, text: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::Domain(format!("{flag}: cannot parse `{s}`"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_tracks_keys() {
        let mut p = Params::parse("n=4, b=3,lambda=2.85").unwrap();
        assert_eq!(p.require::<usize>("n").unwrap(), 4);
        assert_eq!(p.or("c", 4usize).unwrap(), 4);
        assert!(p.finish().is_err());
        assert_eq!(p.get::<f64>("lambda").unwrap(), Some(2.85));
        p.get::<usize>("b").unwrap();
        p.finish().unwrap();
        assert!(Params::parse("n").is_err());
        assert!(Params::parse("n=1,n=2").is_err());
        assert!(Params::parse("n=x").unwrap().require::<usize>("n").is_err());
    }
}
