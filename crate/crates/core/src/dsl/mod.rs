pub mod grammar;
pub mod program;

pub use grammar::{Grammar, LiteralClass, NtId, Production, SemanticRule, Symbol, TermId, TerminalDecl, TerminalKind};
pub use program::{accepts, check, fill_defaults, parse_program, print_program, program_type, sub_all, substitute, Arg, Program};
