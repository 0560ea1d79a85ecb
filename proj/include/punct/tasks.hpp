#ifndef PUNCT_TASKS_HPP
#define PUNCT_TASKS_HPP

#include "punct/forest.hpp"
#include "punct/train.hpp"

namespace punct {

using SlotStrings = std::vector<std::vector<std::string>>;

struct MbrConfig {
  int sample_count = 1000;
  uint64_t seed = 1;
};

// unit-cost token edit distance
int token_edit_distance(std::span<const std::string> a,
                        std::span<const std::string> b);
// summed over aligned slots; throws on slot-count mismatch
long sentence_edit_distance(const SlotStrings& a, const SlotStrings& b);

// average edit distance: total edits / total slots, corpus level
struct AedAccumulator {
  long edits = 0;
  long slots = 0;
  void add(const SlotStrings& pred, const SlotStrings& gold);
  double value() const;
};

// final slot gets the language's final mark, everything else empty
SlotStrings trivial_baseline(const DepTree& tree, const std::string& final_mark);

// Minimum-Bayes-risk restoration: draw samples by ancestral generation and
// pick the unique sampled surface minimizing the expected slot edit
// distance under the empirical distribution (O(m^2)); ties go to the
// earliest-drawn candidate.
std::vector<SlotStrings> draw_restore_samples(Model& m, const DepTree& tree,
                                              int count, Rng& rng);
SlotStrings mbr_decode(std::span<const SlotStrings> samples);
SlotStrings restore(Model& m, const DepTree& tree, const MbrConfig& mbr,
                    uint64_t ordinal);

// slot-level edit records for the F0.5 scorer
struct EditRec {
  int slot = 0;
  std::vector<std::string> before, after;
  bool operator==(const EditRec&) const = default;
};
std::vector<EditRec> edit_set(const SlotStrings& input, const SlotStrings& output);
double f_half(std::span<const EditRec> system, std::span<const EditRec> gold);

// Correction pipeline: recover the errorful underlying tree under the esl
// model, re-attach punctemes with the correction model conditioned on it,
// regenerate the surface, and decode with the same MBR rule. When the esl
// model cannot explain the input, falls back to restoration with the cesl
// model.
struct CorrectOutcome {
  SlotStrings output;
  bool fell_back = false;
};
CorrectOutcome correct_sentence(Model& esl, Model& cesl, Model& correction,
                                const AnnotatedSentence& errorful,
                                const MbrConfig& mbr, uint64_t ordinal);

// Dependent reordering for rephrasing. items is the local sequence of a
// head and its dependents in surface order; implementations return a
// permutation of the same ids.
struct PermutationSource {
  virtual ~PermutationSource() = default;
  virtual std::vector<int> reorder(const DepTree& tree, int head,
                                   const std::vector<int>& items, Rng& rng) = 0;
};

struct IdentitySource : PermutationSource {
  std::vector<int> reorder(const DepTree&, int, const std::vector<int>& items,
                           Rng&) override {
    return items;
  }
};

struct ShuffleSource : PermutationSource {
  std::vector<int> reorder(const DepTree&, int, const std::vector<int>& items,
                           Rng& rng) override {
    std::vector<int> out = items;
    rng.shuffle(out);
    return out;
  }
};

// external ordering file: lines "sent_id<TAB>head_index<TAB>i1 i2 ..."
struct FileOrderingSource : PermutationSource {
  std::unordered_map<std::string, std::vector<int>> orders;
  static FileOrderingSource parse(std::string_view text);
  std::vector<int> reorder(const DepTree& tree, int head,
                           const std::vector<int>& items, Rng& rng) override;
};

// Rephrasing: recover the 1-best underlying tree, permute the dependents of
// noun/verb heads (punctemes travel with their subtrees), then regenerate
// surface punctuation through the channel.
struct RephraseResult {
  bool changed = false;  // false: likelihood 0, sentence passed through
  AnnotatedSentence sentence;
  PunctTree punctemes;
};
RephraseResult rephrase(Model& m, const AnnotatedSentence& sent,
                        PermutationSource& source, Rng& rng,
                        bool argmax_channel);

// baseline permutation that treats surface punctuation as ordinary
// dependents of the raw tree; returns the input unchanged when the raw
// tree is unusable
RawSentence rephrase_baseline(const RawSentence& raw, PermutationSource& source,
                              Rng& rng, bool* ok = nullptr);

// CoNLL-U emission: words of the tree with the given surface punctuation
// reinserted as PUNCT leaves, attached to the outermost constituent edge at
// their slot (widest span; ties prefer the ending constituent).
RawSentence emit_with_punctuation(const DepTree& tree, const SlotStrings& x);

}  // namespace punct

#endif
