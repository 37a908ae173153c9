//! Trainable example-pair retrieval so a black-box reward model can score
//! low-resource-language responses in context.
//!
//! The pieces, bottom to top: [`corpus`] loads example banks and preference
//! sets; [`encoder`] turns text into hashed n-gram features and embeds them
//! through a pair of linear maps; [`auxselect`] picks which high-resource
//! banks are worth retrieving from; [`reward`] renders prompts and talks to a
//! reward backend (in-process synthetic oracle or HTTP); [`trainer`] fits the
//! retrieval maps with a pairwise ranking objective; [`inference`] retrieves
//! and orders labeled example pairs for a test item; [`eval`] compares
//! retrieval strategies on preference pairs; [`cli`] wires everything into
//! the `relic` binary.
//!
//! Each capability has a runnable example:
//!
//! ```text
//! cargo run --example ingest_bank          loading + validating banks
//! cargo run --example embed_similarity     features, embeddings, similarity
//! cargo run --example synthetic_corpus     generating a planted-signal corpus
//! cargo run --example auxiliary_selection  choosing auxiliary banks
//! cargo run --example prompt_rendering     zero-shot + in-context prompts
//! cargo run --example train_retriever      pairwise training end to end
//! cargo run --example retrieve_context     pair banks and context assembly
//! cargo run --example evaluate_strategies  baselines vs trained retrieval
//! cargo run --example oracle_server        the /v1/score wire protocol
//! cargo run --example full_pipeline        one config, all stages
//! ```

pub mod auxselect;
pub mod cli;
pub mod corpus;
pub mod encoder;
pub mod eval;
pub mod inference;
pub mod reward;
pub mod seeding;
pub mod trainer;
