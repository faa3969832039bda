#![allow(dead_code)]

pub mod deduction;
pub mod properties;
