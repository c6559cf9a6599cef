// SPDX-License-Identifier: Apache-2.0

//! Linear concept erasure (LEACE), random-subspace controls and guardedness
//! checks. Erasers are applied as a plain projection with no bias term.

mod concept;
mod leace;
mod stack;
mod verify;

pub use concept::{
    acoustic_concept, boc_concept, ctc_concept, ctc_concept_labels, first_word, proxy_concept, ConceptKind,
    ConceptMatrix, ProxyVocab, PROXY_WIDTH,
};
pub use leace::{eraser_from_basis, fit_leace, random_eraser, Eraser, Shrinkage};
pub use stack::{build_stack, build_stack_with, random_stack, ConceptSource, EraserStack};
pub use verify::{verify_guardedness, GuardMetric, GuardednessReport};
