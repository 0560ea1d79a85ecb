#ifndef PUNCT_MODEL_HPP
#define PUNCT_MODEL_HPP

#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "punct/attach.hpp"
#include "punct/channel.hpp"
#include "punct/corpus.hpp"

namespace punct {

// Everything inference needs: the puncteme vocabulary and pair inventories,
// the channel parameters over the induced token alphabet, and the ATTACH
// weights. Caches are pre-warmed by prepare_sentence; after that the model
// can be shared read-only across threads.
struct Model {
  PunctemeVocab vocab;
  std::vector<std::string> sigma;
  std::unordered_map<std::string, int> sigma_index;
  std::vector<std::vector<int>> puncteme_tokens;  // vocab punctemes as ids

  ChannelParams channel;
  AttachWeights theta;
  SymmetricPairTable sym_table = SymmetricPairTable::defaults();
  PreprocessConfig prep;
  std::string final_mark = ".";
  uint64_t seed = 1;
  bool correction_mode = false;

  // derived structures
  std::unique_ptr<Pfst> pfst;
  struct SlotCache {
    std::mutex mu;
    std::unordered_map<std::string, std::unique_ptr<SlotAutomaton>> map;
  };
  std::unique_ptr<SlotCache> slot_cache = std::make_unique<SlotCache>();

  // recomputes sigma / puncteme ids / PFST structure from the vocabulary;
  // resizes channel scores if needed (keeping direction and flags)
  void rebuild_alphabet();

  int token_id(const std::string& tok) const {
    auto it = sigma_index.find(tok);
    return it == sigma_index.end() ? -1 : it->second;
  }

  const SlotAutomaton& slot_automaton(std::span<const int> adjusted);
};

struct PreparedPair {
  int l = 0, r = 0;          // puncteme ids
  std::vector<int> feats;    // theta feature ids
  double unmatched = 0;      // c(l, r)
};

struct PreparedNode {
  std::vector<PreparedPair> pairs;
};

struct PreparedSentence {
  const AnnotatedSentence* src = nullptr;
  uint64_t ordinal = 0;
  std::vector<std::vector<int>> slot_tokens;
  bool tokens_known = true;  // false: surface token outside the alphabet
  std::vector<PreparedNode> nodes;
};

// Interns slot strings and per-pair features, and pre-warms the slot
// automaton cache (single-threaded; inference afterwards may run in
// parallel). With create_features the feature table grows; otherwise
// unknown features are dropped (weight 0). In correction mode, errorful
// supplies the recovered (l', r') punctemes per node.
using ErrorfulPunctemes =
    std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>>;

PreparedSentence prepare_sentence(Model& m, const AnnotatedSentence& sent,
                                  uint64_t ordinal, bool create_features,
                                  bool strict_relations = false,
                                  const ErrorfulPunctemes* errorful = nullptr);

}  // namespace punct

#endif
