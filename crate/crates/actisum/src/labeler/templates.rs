//! The versioned template bank backing the deterministic labeler.
//!
//! Shipped as a JSON resource so the phrase inventory is data, not code.
//! Every trend code carries at least four synonymous templates; the model
//! tokenizer harvests its closed vocabulary from this bank.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeler::trend::TrendCode;

pub const TEMPLATE_BANK_JSON: &str = include_str!("../../resources/template_bank.json");

pub const BLOCK_NAMES: [&str; 4] = ["night", "morning", "afternoon", "evening"];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemplateBank {
    pub version: u32,
    pub banned_phrases: Vec<String>,
    pub period_phrases: BTreeMap<String, Vec<String>>,
    pub trend: BTreeMap<String, Vec<String>>,
    pub peak: Vec<String>,
    pub rest_expected: Vec<String>,
    pub rest_other: Vec<String>,
    pub overall_low_range: Vec<String>,
    pub overall_low: Vec<String>,
    pub overall_moderate: Vec<String>,
    pub overall_high: Vec<String>,
    pub misuse: Vec<String>,
    pub closing_low: Vec<String>,
    pub closing_moderate: Vec<String>,
    pub closing_high: Vec<String>,
}

impl TemplateBank {
    pub fn parse(json: &str) -> Result<Self> {
        let bank: TemplateBank =
            serde_json::from_str(json).map_err(|e| Error::json("template bank", e))?;
        bank.validate()?;
        Ok(bank)
    }

    pub fn builtin() -> &'static TemplateBank {
        static BANK: OnceLock<TemplateBank> = OnceLock::new();
        BANK.get_or_init(|| {
            TemplateBank::parse(TEMPLATE_BANK_JSON).expect("bundled template bank is valid")
        })
    }

    pub fn trend_templates(&self, code: TrendCode) -> &[String] {
        self.trend
            .get(code.key())
            .map(|v| v.as_slice())
            .unwrap_or(&[])
    }

    pub fn periods_for_block(&self, block: usize) -> &[String] {
        self.period_phrases
            .get(BLOCK_NAMES[block])
            .map(|v| v.as_slice())
            .unwrap_or(&[])
    }

    fn validate(&self) -> Result<()> {
        for code in TrendCode::ALL {
            let n = self.trend_templates(code).len();
            if n < 4 {
                return Err(Error::validation(format!(
                    "trend code {} has {n} templates, need at least 4",
                    code.key()
                )));
            }
        }
        for name in BLOCK_NAMES {
            if self.period_phrases.get(name).map_or(0, |v| v.len()) < 4 {
                return Err(Error::validation(format!("period phrases for {name} missing")));
            }
        }
        for (what, group) in self.fixed_groups() {
            if group.len() < 4 {
                return Err(Error::validation(format!("template group {what} has fewer than 4 variants")));
            }
        }
        for text in self.all_strings() {
            if text.chars().any(|c| c.is_ascii_digit()) {
                return Err(Error::validation(format!("template contains a digit: {text}")));
            }
            let lower = text.to_lowercase();
            for banned in &self.banned_phrases {
                if lower.contains(&banned.to_lowercase()) {
                    return Err(Error::validation(format!(
                        "template contains banned phrase {banned:?}: {text}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn fixed_groups(&self) -> Vec<(&'static str, &Vec<String>)> {
        vec![
            ("peak", &self.peak),
            ("rest_expected", &self.rest_expected),
            ("rest_other", &self.rest_other),
            ("overall_low_range", &self.overall_low_range),
            ("overall_low", &self.overall_low),
            ("overall_moderate", &self.overall_moderate),
            ("overall_high", &self.overall_high),
            ("misuse", &self.misuse),
            ("closing_low", &self.closing_low),
            ("closing_moderate", &self.closing_moderate),
            ("closing_high", &self.closing_high),
        ]
    }

    /// Every template and filler string in the bank (placeholders included).
    pub fn all_strings(&self) -> Vec<&String> {
        let mut out: Vec<&String> = Vec::new();
        for group in self.period_phrases.values() {
            out.extend(group.iter());
        }
        for group in self.trend.values() {
            out.extend(group.iter());
        }
        for (_, group) in self.fixed_groups() {
            out.extend(group.iter());
        }
        out
    }
}

/// Substitute the `{period}` slot, if present.
pub fn fill_period(template: &str, period: &str) -> String {
    template.replace("{period}", period)
}
