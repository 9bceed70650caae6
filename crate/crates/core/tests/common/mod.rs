#![allow(dead_code)]

pub mod blocks;
pub mod newton;
pub mod oracles;
