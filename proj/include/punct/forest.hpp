#ifndef PUNCT_FOREST_HPP
#define PUNCT_FOREST_HPP

#include <limits>

#include "punct/model.hpp"
#include "punct/rng.hpp"

namespace punct {

// Exact inference over one (tree, surface) pair: the inside recursion over
// the per-slot automata, generic in a semiring. Likelihoods are kept as
// (mantissa, base-2 exponent) with per-matrix rescaling so long sentences
// cannot underflow.

struct InsideResult {
  bool explainable = false;
  double mantissa = 0.0;
  int exponent2 = 0;
  double log_likelihood = -std::numeric_limits<double>::infinity();
  double expected_unmatched = 0.0;  // posterior E[c(T')]
  double prior_unmatched = 0.0;     // the literal prior-weighted accumulation
};

InsideResult inside(Model& m, const PreparedSentence& ps);

// A puncteme assignment for every node of a tree.
struct PunctTree {
  std::vector<std::pair<int, int>> punctemes;  // per node, puncteme ids
};

struct ViterbiResult {
  bool ok = false;
  PunctTree tree;
  double mantissa = 0.0;
  int exponent2 = 0;
  double log_score = -std::numeric_limits<double>::infinity();
};

// Best extended derivation: the puncteme assignment together with the edit
// sequence explaining each slot; ties broken toward the left argument.
ViterbiResult viterbi_underlying(Model& m, const PreparedSentence& ps);

// Exact posterior sample of T'; throws when the sentence has likelihood 0.
PunctTree sample_underlying(Model& m, const PreparedSentence& ps, Rng& rng);

// Underlying slot strings read off a punctuated tree: right punctemes of
// constituents ending at a slot (innermost first), then left punctemes of
// constituents starting there (outermost first).
std::vector<std::vector<std::string>> underlying_slots(
    const AnnotatedSentence& sent, const PunctTree& pt,
    const PunctemeVocab& vocab);

// Ancestral sampling: children first, then the internal slots are
// transduced so the c features can see them, then (l, r) is drawn.
struct GenerateResult {
  PunctTree tree;
  std::vector<std::vector<std::string>> underlying;
  std::vector<std::vector<std::string>> surface;
};

GenerateResult generate(Model& m, const DepTree& tree, Rng& rng,
                        const ErrorfulPunctemes* errorful = nullptr);

// bracketed rendering of a punctuated tree, e.g. [[" Dale "] means ...]
std::string bracket_string(const AnnotatedSentence& sent, const PunctTree& pt,
                           const PunctemeVocab& vocab);

// Gradient support: the same inside computation with channel and ATTACH
// parameters as tape leaves. log_likelihood and the unmatched expectations
// are tape nodes; backward passes against them give exact gradients.
struct SentenceTape {
  bool explainable = false;
  int exponent2 = 0;
  Ad log_likelihood{};
  Ad expected_unmatched{};
  Ad prior_unmatched{};
  std::vector<std::pair<int, Ad>> theta_leaves;            // (feature id, leaf)
  std::vector<std::pair<std::pair<int, int>, std::array<Ad, 4>>> phi_leaves;
};

SentenceTape inside_on_tape(Model& m, const PreparedSentence& ps, Tape& tape);

}  // namespace punct

#endif
