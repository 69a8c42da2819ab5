// SPDX-License-Identifier: Apache-2.0

pub mod context;
pub mod corpus;
pub mod fuzz;
pub mod generation;
pub mod harness;
pub mod isa;
pub mod llm;
pub mod metrics;
pub mod prompts;
pub mod runtime;
pub mod util;
