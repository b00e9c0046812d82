#![allow(dead_code)]

pub mod gradient;
pub mod oracle;
