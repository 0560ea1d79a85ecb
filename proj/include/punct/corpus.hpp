#ifndef PUNCT_CORPUS_HPP
#define PUNCT_CORPUS_HPP

#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "punct/conllu.hpp"

namespace punct {

struct PreprocessConfig {
  int unk_threshold = 5;
  std::string start_mark = "^";
  bool quote_disambiguation = true;
  bool abbreviation_split = true;
};

// A node of the depunctuated tree. Word positions are 1-based; slot s lies
// between word s and word s+1, so a sentence of n words has slots 0..n.
// The constituent of a node spans slots [span_lo, span_hi]; head_slot is the
// slot at the right of the headword.
struct DepNode {
  int index = 0;
  std::string form;
  std::string upos;
  int head = 0;  // 0 = root
  std::string deprel;
  int span_lo = 0;
  int span_hi = 0;
  int head_slot = 0;
  std::vector<int> left_children;   // by increasing position
  std::vector<int> right_children;  // by increasing position
};

struct DepTree {
  std::vector<DepNode> nodes;  // nodes[i] has index i+1
  int root = 0;                // 1-based index of the root node
  std::string sent_id;

  int n() const { return int(nodes.size()); }
  const DepNode& at(int index1) const { return nodes[size_t(index1 - 1)]; }
  DepNode& at(int index1) { return nodes[size_t(index1 - 1)]; }
};

// Tree plus the surface punctuation gathered at its n+1 slots.
struct AnnotatedSentence {
  DepTree tree;
  std::vector<std::vector<std::string>> slots;  // size n()+1
};

enum class DepunctStatus { Ok, OmittedNonLeafPunct, NonProjective, NoRoot };

struct DepunctResult {
  DepunctStatus status = DepunctStatus::Ok;
  AnnotatedSentence sentence;
  std::string reason;
  bool ok() const { return status == DepunctStatus::Ok; }
};

bool is_punct_token(const RawToken& t);

// Removes PUNCT / punct tokens into per-slot surface strings, reindexes the
// remaining words and computes constituent spans. Sentences where a removed
// punctuation token has dependents are omitted; non-projective residual
// trees are rejected with a reason.
DepunctResult depunctuate(const RawSentence& raw);

// Computes spans/children for a tree given (index, head) fields; returns
// false if the tree has no unique root, a cycle, or is non-projective.
bool finish_tree(DepTree& tree, std::string* reason);

using WordCounts = std::unordered_map<std::string, long>;

// Structural rewrites: directional quotes, abbreviation-dot splitting and
// the sentence-initial start mark. UNK replacement is separate because its
// counts must come from the training portion only.
void preprocess_structural(RawSentence& s, const PreprocessConfig& cfg);
WordCounts count_word_forms(std::span<const RawSentence> treebank);
void apply_unk(RawSentence& s, const WordCounts& counts, int threshold);

void preprocess_treebank(std::vector<RawSentence>& treebank,
                         const PreprocessConfig& cfg,
                         const WordCounts* train_counts);

// the token used for a dot split off an abbreviation; distinct from "."
extern const char* kAbbrevDot;
extern const char* kUnk;

struct PunctemeVocab {
  // puncteme 0 is always the empty puncteme
  std::vector<std::vector<std::string>> punctemes;
  std::unordered_map<std::string, int> puncteme_index;  // key: joined tokens

  std::vector<std::string> deprels;  // first-seen order
  std::unordered_map<std::string, int> deprel_index;
  std::vector<std::vector<std::pair<int, int>>> pairs;  // per deprel

  PunctemeVocab();

  int eps() const { return 0; }
  int intern_puncteme(std::span<const std::string> tokens);
  // -1 when unknown
  int find_puncteme(std::span<const std::string> tokens) const;
  int intern_deprel(const std::string& d);
  int find_deprel(const std::string& d) const;
  void add_pair(const std::string& deprel, int l, int r);

  // Inventory for a relation; unseen relations back off to {(eps, eps)}
  // unless strict is set (the caller then reports the mismatch).
  static const std::vector<std::pair<int, int>> kBackoffPairs;
  const std::vector<std::pair<int, int>>& pairs_for(const std::string& deprel,
                                                    bool strict = false) const;

  // Token alphabet: every distinct token appearing in any puncteme,
  // in first-appearance order.
  std::vector<std::string> alphabet() const;
};

PunctemeVocab estimate_vocab(std::span<const AnnotatedSentence> train);

std::string write_vocab(const PunctemeVocab& v);
PunctemeVocab read_vocab(std::string_view text);

// "∅" for the empty puncteme, else tokens joined by spaces.
std::string puncteme_to_string(std::span<const std::string> tokens);
std::vector<std::string> puncteme_from_string(std::string_view s);

struct CorpusStats {
  long kept = 0;
  long omitted_nonleaf = 0;
  long non_projective = 0;
  long no_root = 0;
};

std::vector<AnnotatedSentence> depunctuate_treebank(
    std::span<const RawSentence> treebank, CorpusStats* stats = nullptr);

}  // namespace punct

#endif
