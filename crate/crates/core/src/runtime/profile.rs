// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

/// Instruction budget of the reference profile.
pub const DEFAULT_STEP_LIMIT: u64 = 1_000_000;
/// Budget of the `tiny-step-limit` profile.
pub const TINY_STEP_LIMIT: u64 = 32;
/// Value an uninitialised register reads as under the sentinel profiles.
pub const UNINIT_SENTINEL: u64 = 0xffff_8b09_dc60_4100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShiftImmPolicy {
    /// Shift amount masked to 31 or 63.
    MaskToWidth,
    /// Immediate shift amounts outside `0..width` are a runtime error.
    /// Register amounts are still masked.
    RejectOverWidth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UninitPolicy {
    ZeroInit,
    RejectUse,
    Sentinel(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FramePointerPolicy {
    Reject,
    SilentlyAllow,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticsProfile {
    pub shift_imm_policy: ShiftImmPolicy,
    /// A right shift whose effective amount is 0 writes 0 to dst.
    pub rsh_zero_shift_bug: bool,
    pub uninitialized_register_policy: UninitPolicy,
    /// A taken conditional jump lands one slot short of its target.
    pub jump_offset_bug: bool,
    pub frame_pointer_write_policy: FramePointerPolicy,
    pub step_limit: u64,
    pub supported_helpers: BTreeSet<i32>,
    /// Loads narrower than 64 bits keep the upper bits of dst instead of
    /// zero-extending.
    #[serde(default)]
    pub narrow_load_leaks_upper: bool,
}

impl SemanticsProfile {
    pub fn reference() -> SemanticsProfile {
        SemanticsProfile {
            shift_imm_policy: ShiftImmPolicy::MaskToWidth,
            rsh_zero_shift_bug: false,
            uninitialized_register_policy: UninitPolicy::ZeroInit,
            jump_offset_bug: false,
            frame_pointer_write_policy: FramePointerPolicy::Reject,
            step_limit: DEFAULT_STEP_LIMIT,
            supported_helpers: (1..=5).collect(),
            narrow_load_leaks_upper: false,
        }
    }

    /// Look up a profile shipped with the crate by name.
    pub fn builtin(name: &str) -> Option<SemanticsProfile> {
        let base = SemanticsProfile::reference();
        let p = match name {
            "reference" => base,
            "rsh-zero-bug" => SemanticsProfile {
                rsh_zero_shift_bug: true,
                ..base
            },
            "jump-offset-bug" => SemanticsProfile {
                jump_offset_bug: true,
                ..base
            },
            "uninit-sentinel" => SemanticsProfile {
                uninitialized_register_policy: UninitPolicy::Sentinel(UNINIT_SENTINEL),
                ..base
            },
            "fp-write-allow" => SemanticsProfile {
                frame_pointer_write_policy: FramePointerPolicy::SilentlyAllow,
                ..base
            },
            "tiny-step-limit" => SemanticsProfile {
                step_limit: TINY_STEP_LIMIT,
                ..base
            },
            "narrow-load-leak" => SemanticsProfile {
                uninitialized_register_policy: UninitPolicy::Sentinel(UNINIT_SENTINEL),
                narrow_load_leaks_upper: true,
                ..base
            },
            "shift-reject" => SemanticsProfile {
                shift_imm_policy: ShiftImmPolicy::RejectOverWidth,
                ..base
            },
            "strict-uninit" => SemanticsProfile {
                uninitialized_register_policy: UninitPolicy::RejectUse,
                ..base
            },
            _ => return None,
        };
        Some(p)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.step_limit == 0 {
            return Err("step_limit must be at least 1".into());
        }
        Ok(())
    }
}

impl Default for SemanticsProfile {
    fn default() -> Self {
        SemanticsProfile::reference()
    }
}

/// Names accepted by [`SemanticsProfile::builtin`].
pub const BUILTIN_PROFILES: &[&str] = &[
    "reference",
    "rsh-zero-bug",
    "jump-offset-bug",
    "uninit-sentinel",
    "fp-write-allow",
    "tiny-step-limit",
    "narrow-load-leak",
    "shift-reject",
    "strict-uninit",
];

/// The five seeded-divergence profiles that each differ from `reference` in
/// exactly one field.
pub const DIVERGENCE_PROFILES: &[&str] = &[
    "rsh-zero-bug",
    "jump-offset-bug",
    "uninit-sentinel",
    "fp-write-allow",
    "tiny-step-limit",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_resolves_and_validates() {
        for name in BUILTIN_PROFILES {
            let p = SemanticsProfile::builtin(name).unwrap();
            p.validate().unwrap();
        }
        assert!(SemanticsProfile::builtin("nope").is_none());
    }

    #[test]
    fn reference_defaults() {
        let r = SemanticsProfile::reference();
        assert_eq!(r.step_limit, 1_000_000);
        assert_eq!(r.uninitialized_register_policy, UninitPolicy::ZeroInit);
        assert_eq!(r.frame_pointer_write_policy, FramePointerPolicy::Reject);
    }

    #[test]
    fn divergence_profiles_differ_from_reference_in_one_field() {
        let r = serde_json::to_value(SemanticsProfile::reference()).unwrap();
        for name in DIVERGENCE_PROFILES {
            let v = serde_json::to_value(SemanticsProfile::builtin(name).unwrap()).unwrap();
            let diffs = r
                .as_object()
                .unwrap()
                .iter()
                .filter(|(k, val)| v.get(k.as_str()) != Some(val))
                .count();
            assert_eq!(diffs, 1, "{name}");
        }
    }

    #[test]
    fn zero_step_limit_invalid() {
        let p = SemanticsProfile {
            step_limit: 0,
            ..SemanticsProfile::reference()
        };
        assert!(p.validate().is_err());
    }
}
