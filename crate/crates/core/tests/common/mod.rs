#![allow(dead_code)]

pub mod oracle;

use std::path::PathBuf;

use tracefault::FaultType::{self, Act, Epoch, Loss, Lr, Optimizer};

pub struct ProgramFixture {
    pub file: &'static str,
    pub lines: &'static [(FaultType, &'static [usize])],
    pub unresolved: &'static [FaultType],
}

/// Hand-derived line sets for every fixture program, all five fault types queried.
pub const PROGRAM_FIXTURES: &[ProgramFixture] = &[
    ProgramFixture {
        file: "listing1_xor.py",
        lines: &[
            (Loss, &[16]),
            (Optimizer, &[13]),
            (Lr, &[13]),
            (Epoch, &[17]),
            (Act, &[6, 10]),
        ],
        unresolved: &[],
    },
    ProgramFixture {
        file: "indirection.py",
        lines: &[
            (Loss, &[5]),
            (Optimizer, &[8]),
            (Lr, &[6]),
            (Epoch, &[7]),
            (Act, &[11, 12]),
        ],
        unresolved: &[],
    },
    ProgramFixture {
        file: "missing_kwargs.py",
        lines: &[(Loss, &[8]), (Optimizer, &[8]), (Lr, &[8]), (Epoch, &[9])],
        unresolved: &[Act],
    },
    ProgramFixture {
        file: "multi_compile.py",
        lines: &[
            (Loss, &[6, 9]),
            (Optimizer, &[6, 9]),
            (Lr, &[6, 9]),
            (Epoch, &[7, 10]),
            (Act, &[4, 5]),
        ],
        unresolved: &[],
    },
    ProgramFixture {
        file: "string_optimizer.py",
        lines: &[
            (Loss, &[6]),
            (Optimizer, &[6]),
            (Lr, &[6]),
            (Epoch, &[7]),
            (Act, &[3, 5]),
        ],
        unresolved: &[],
    },
    ProgramFixture {
        file: "multiline_calls.py",
        lines: &[
            (Loss, &[14]),
            (Optimizer, &[12]),
            (Lr, &[13]),
            (Epoch, &[18]),
            (Act, &[5, 9]),
        ],
        unresolved: &[],
    },
    ProgramFixture {
        file: "positional_args.py",
        lines: &[
            (Loss, &[6]),
            (Optimizer, &[5]),
            (Lr, &[5]),
            (Epoch, &[7]),
            (Act, &[3, 4]),
        ],
        unresolved: &[],
    },
    ProgramFixture {
        file: "functional_api.py",
        lines: &[
            (Loss, &[11]),
            (Optimizer, &[10]),
            (Lr, &[10]),
            (Epoch, &[12]),
            (Act, &[6, 7, 8]),
        ],
        unresolved: &[],
    },
    ProgramFixture {
        file: "rebinding.py",
        lines: &[
            (Loss, &[2, 5]),
            (Optimizer, &[1, 4]),
            (Lr, &[1, 4]),
            (Epoch, &[3, 6]),
        ],
        unresolved: &[Act],
    },
    ProgramFixture {
        file: "opaque_factory.py",
        lines: &[(Loss, &[6]), (Optimizer, &[5]), (Epoch, &[7]), (Act, &[4])],
        unresolved: &[Lr],
    },
    ProgramFixture {
        file: "comments_and_strings.py",
        lines: &[(Loss, &[7]), (Optimizer, &[7]), (Lr, &[7]), (Epoch, &[8])],
        unresolved: &[Act],
    },
    ProgramFixture {
        file: "loss_object.py",
        lines: &[
            (Loss, &[2]),
            (Optimizer, &[7]),
            (Lr, &[7]),
            (Epoch, &[8]),
            (Act, &[4, 6]),
        ],
        unresolved: &[],
    },
];

pub fn fixture_path(file: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/programs")
        .join(file)
}

pub fn read_fixture(file: &str) -> String {
    std::fs::read_to_string(fixture_path(file)).expect("fixture readable")
}
