#ifndef PUNCT_ATTACH_HPP
#define PUNCT_ATTACH_HPP

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "punct/corpus.hpp"

namespace punct {

// Ordered (open, close) pairs defining which punctemes count as symmetric.
// The symmetry feature uses the full table; the unmatched-puncteme counter
// used for posterior regularization skips the equal-token pairs.
struct SymmetricPairTable {
  std::vector<std::pair<std::string, std::string>> pairs;

  static SymmetricPairTable defaults();

  bool mirror_match(std::span<const std::string> l,
                    std::span<const std::string> r, bool include_equal) const;
  // S-feature test; the empty pair does not count as symmetric
  bool symmetric(std::span<const std::string> l,
                 std::span<const std::string> r) const;
  // Appendix-B style count: filter both sides down to tokens that appear in
  // an unequal pair, then require the remnants to mirror each other
  int count_unmatched(std::span<const std::string> l,
                      std::span<const std::string> r) const;
};

struct NodeContext {
  std::string pos;             // POS of the headword (g)
  std::string deprel;          // plain relation d
  std::string deprel_dir;      // decorated with the attachment arrow
  std::string parent_deprel;   // d' (root at the root)
  std::vector<std::string> child_relations;  // distinct, sorted
  std::string pos_out_lo;      // word left of the left slot (BOS at edge)
  std::string pos_in_lo;       // first word of the constituent
  std::string pos_in_hi;       // last word of the constituent
  std::string pos_out_hi;      // word right of the right slot (EOS at edge)
  std::string width_bucket;    // {1,2,3,4-5,6-10,11+}
  std::vector<std::string> internal_tokens;  // distinct surface punctuation
                                             // strictly inside the span
};

NodeContext make_node_context(const AnnotatedSentence& sent, int node_index);

// Feature templates over (left puncteme, right puncteme, context); see the
// registry in attach.cpp. With errorful punctemes supplied, the extended
// correction templates referencing (l', r') fire as well.
std::vector<std::string> extract_features(
    std::span<const std::string> l, std::span<const std::string> r,
    const NodeContext& ctx, const SymmetricPairTable& table);

std::vector<std::string> correction_features(
    std::span<const std::string> l, std::span<const std::string> r,
    const NodeContext& ctx, const SymmetricPairTable& table,
    std::span<const std::string> l_err, std::span<const std::string> r_err);

// Sparse weight vector; absent feature means weight 0.
struct AttachWeights {
  std::vector<std::string> names;
  std::unordered_map<std::string, int> index;
  std::vector<double> weights;

  int find(const std::string& name) const {
    auto it = index.find(name);
    return it == index.end() ? -1 : it->second;
  }
  int intern(const std::string& name) {
    auto it = index.find(name);
    if (it != index.end()) return it->second;
    int id = int(names.size());
    names.push_back(name);
    index.emplace(name, id);
    weights.push_back(0.0);
    return id;
  }
  double weight(const std::string& name) const {
    int id = find(name);
    return id < 0 ? 0.0 : weights[size_t(id)];
  }
  size_t size() const { return names.size(); }
};

// softmax over the scores of an inventory of pairs
std::vector<double> softmax(std::span<const double> scores);

// Probability of (l, r) among the pairs of the node's inventory, Eq.-4
// style. Throws on an empty inventory.
double attach_prob(std::span<const std::string> l,
                   std::span<const std::string> r, const NodeContext& ctx,
                   const AttachWeights& theta, const SymmetricPairTable& table,
                   const PunctemeVocab& vocab,
                   std::span<const std::pair<int, int>> inventory);

}  // namespace punct

#endif
