use std::fmt;
use std::str::FromStr;

/// Seeds given on the command line: `a..b`, `a..=b` or `s1,s2,...`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedList(Vec<u64>);

impl SeedList {
    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }
}

impl FromStr for SeedList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let num = |t: &str| t.trim().parse::<u64>().map_err(|e| format!("bad seed `{t}`: {e}"));
        let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..=") {
            (num(a)?..=num(b)?).collect()
        } else if let Some((a, b)) = s.split_once("..") {
            (num(a)?..num(b)?).collect()
        } else {
            s.split(',').map(num).collect::<Result<_, _>>()?
        };
        if seeds.is_empty() {
            return Err(format!("seed range `{s}` is empty"));
        }
        Ok(Self(seeds))
    }
}

impl fmt::Display for SeedList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u64::to_string).collect();
        f.write_str(&parts.join(","))
    }
}
