#include "punct/corpus.hpp"

#include <algorithm>
#include <sstream>

namespace punct {

const char* kAbbrevDot = "<.>";
const char* kUnk = "UNK";

bool is_punct_token(const RawToken& t) {
  return t.upos == "PUNCT" || t.deprel == "punct" ||
         t.deprel.rfind("punct:", 0) == 0;
}

bool finish_tree(DepTree& tree, std::string* reason) {
  const int n = tree.n();
  if (n == 0) {
    if (reason) *reason = "empty tree";
    return false;
  }
  tree.root = 0;
  for (auto& node : tree.nodes) {
    node.left_children.clear();
    node.right_children.clear();
  }
  for (const auto& node : tree.nodes) {
    if (node.head == 0) {
      if (tree.root != 0) {
        if (reason) *reason = "multiple roots";
        return false;
      }
      tree.root = node.index;
    } else if (node.head < 1 || node.head > n) {
      if (reason) *reason = "head out of range";
      return false;
    }
  }
  if (tree.root == 0) {
    if (reason) *reason = "no root";
    return false;
  }
  for (const auto& node : tree.nodes) {
    if (node.head == 0) continue;
    auto& parent = tree.at(node.head);
    if (node.index < node.head)
      parent.left_children.push_back(node.index);
    else
      parent.right_children.push_back(node.index);
  }

  // subtree extents bottom-up; a projective tree has contiguous subtrees
  std::vector<int> lo(size_t(n) + 1), hi(size_t(n) + 1), count(size_t(n) + 1, 0);
  std::vector<int> order;
  order.reserve(size_t(n));
  std::vector<int> stack{tree.root};
  std::vector<char> seen(size_t(n) + 1, 0);
  while (!stack.empty()) {
    int w = stack.back();
    stack.pop_back();
    if (seen[size_t(w)]) {
      if (reason) *reason = "cycle";
      return false;
    }
    seen[size_t(w)] = 1;
    order.push_back(w);
    for (int c : tree.at(w).left_children) stack.push_back(c);
    for (int c : tree.at(w).right_children) stack.push_back(c);
  }
  if (int(order.size()) != n) {
    if (reason) *reason = "disconnected (cycle among non-root nodes)";
    return false;
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    int w = *it;
    lo[size_t(w)] = hi[size_t(w)] = w;
    count[size_t(w)] = 1;
    for (int c : tree.at(w).left_children) {
      lo[size_t(w)] = std::min(lo[size_t(w)], lo[size_t(c)]);
      hi[size_t(w)] = std::max(hi[size_t(w)], hi[size_t(c)]);
      count[size_t(w)] += count[size_t(c)];
    }
    for (int c : tree.at(w).right_children) {
      lo[size_t(w)] = std::min(lo[size_t(w)], lo[size_t(c)]);
      hi[size_t(w)] = std::max(hi[size_t(w)], hi[size_t(c)]);
      count[size_t(w)] += count[size_t(c)];
    }
    if (hi[size_t(w)] - lo[size_t(w)] + 1 != count[size_t(w)]) {
      if (reason) *reason = "non-projective at word " + std::to_string(w);
      return false;
    }
  }
  for (auto& node : tree.nodes) {
    node.span_lo = lo[size_t(node.index)] - 1;
    node.span_hi = hi[size_t(node.index)];
    node.head_slot = node.index;
  }
  return true;
}

DepunctResult depunctuate(const RawSentence& raw) {
  DepunctResult res;

  std::vector<char> punct(raw.tokens.size(), 0);
  for (size_t i = 0; i < raw.tokens.size(); ++i)
    punct[i] = is_punct_token(raw.tokens[i]) ? 1 : 0;

  // a punctuation token with dependents makes the sentence unusable
  std::vector<char> has_dep(raw.tokens.size() + 1, 0);
  for (const auto& t : raw.tokens)
    if (t.head >= 1 && t.head <= int(raw.tokens.size()))
      has_dep[size_t(t.head)] = 1;
  for (size_t i = 0; i < raw.tokens.size(); ++i) {
    if (punct[i] && has_dep[size_t(raw.tokens[i].id)]) {
      res.status = DepunctStatus::OmittedNonLeafPunct;
      res.reason = "punctuation token '" + raw.tokens[i].form + "' has dependents";
      return res;
    }
  }

  std::vector<int> new_index(raw.tokens.size() + 1, 0);
  int n = 0;
  for (size_t i = 0; i < raw.tokens.size(); ++i)
    if (!punct[i]) new_index[size_t(raw.tokens[i].id)] = ++n;

  if (n == 0) {
    res.status = DepunctStatus::NoRoot;
    res.reason = "no words left after depunctuation";
    return res;
  }

  AnnotatedSentence& sent = res.sentence;
  sent.slots.assign(size_t(n) + 1, {});
  sent.tree.sent_id = raw.sent_id();
  int words_before = 0;
  for (size_t i = 0; i < raw.tokens.size(); ++i) {
    const RawToken& t = raw.tokens[i];
    if (punct[i]) {
      sent.slots[size_t(words_before)].push_back(t.form);
    } else {
      ++words_before;
      DepNode node;
      node.index = new_index[size_t(t.id)];
      node.form = t.form;
      node.upos = t.upos;
      node.deprel = t.deprel;
      node.head = t.head == 0 ? 0 : new_index[size_t(t.head)];
      sent.tree.nodes.push_back(std::move(node));
    }
  }

  std::string reason;
  if (!finish_tree(sent.tree, &reason)) {
    res.status = reason.rfind("non-projective", 0) == 0
                     ? DepunctStatus::NonProjective
                     : DepunctStatus::NoRoot;
    res.reason = reason;
    return res;
  }
  res.status = DepunctStatus::Ok;
  return res;
}

std::vector<AnnotatedSentence> depunctuate_treebank(
    std::span<const RawSentence> treebank, CorpusStats* stats) {
  std::vector<AnnotatedSentence> out;
  out.reserve(treebank.size());
  for (const auto& raw : treebank) {
    DepunctResult r = depunctuate(raw);
    switch (r.status) {
      case DepunctStatus::Ok:
        out.push_back(std::move(r.sentence));
        if (stats) ++stats->kept;
        break;
      case DepunctStatus::OmittedNonLeafPunct:
        if (stats) ++stats->omitted_nonleaf;
        break;
      case DepunctStatus::NonProjective:
        if (stats) ++stats->non_projective;
        break;
      case DepunctStatus::NoRoot:
        if (stats) ++stats->no_root;
        break;
    }
  }
  return out;
}

namespace {

struct QuoteForms {
  const char* straight;
  const char* open;
  const char* close;
};

const QuoteForms kDouble{"\"", "“", "”"};
const QuoteForms kSingle{"'", "‘", "’"};

void disambiguate_quotes(RawSentence& s, const QuoteForms& q) {
  // language-specific POS first (PTB-style `` and '')
  for (auto& t : s.tokens) {
    if (t.form != q.straight || !is_punct_token(t)) continue;
    if (t.xpos == "``") t.form = q.open;
    if (t.xpos == "''") t.form = q.close;
  }
  // remaining straight marks: pair dependents of a common head in order;
  // the unmatched leftover defaults to the closing form
  std::unordered_map<int, std::vector<size_t>> by_head;
  std::vector<int> heads_in_order;
  for (size_t i = 0; i < s.tokens.size(); ++i) {
    auto& t = s.tokens[i];
    if (t.form == q.straight && is_punct_token(t)) {
      if (by_head.find(t.head) == by_head.end()) heads_in_order.push_back(t.head);
      by_head[t.head].push_back(i);
    }
  }
  for (int h : heads_in_order) {
    auto& group = by_head[h];
    size_t paired = group.size() / 2 * 2;
    for (size_t k = 0; k < paired; k += 2) {
      s.tokens[group[k]].form = q.open;
      s.tokens[group[k + 1]].form = q.close;
    }
    for (size_t k = paired; k < group.size(); ++k)
      s.tokens[group[k]].form = q.close;
  }
}

}  // namespace

void preprocess_structural(RawSentence& s, const PreprocessConfig& cfg) {
  if (cfg.quote_disambiguation) {
    disambiguate_quotes(s, kDouble);
    disambiguate_quotes(s, kSingle);
  }

  // rebuild the token list; inserted tokens carry the old id of their head
  struct Pending {
    RawToken tok;
    int old_head;  // -1: keep tok.head as old id
  };
  std::vector<Pending> result;
  result.reserve(s.tokens.size() + 2);

  int root_old_id = 0;
  for (const auto& t : s.tokens)
    if (t.head == 0 && root_old_id == 0) root_old_id = t.id;

  if (!cfg.start_mark.empty()) {
    RawToken mark;
    mark.form = cfg.start_mark;
    mark.upos = "PUNCT";
    mark.deprel = "punct";
    result.push_back({std::move(mark), root_old_id});
  }

  for (const auto& t : s.tokens) {
    bool split = cfg.abbreviation_split && !is_punct_token(t) &&
                 t.form.size() > 1 && t.form.back() == '.';
    if (!split) {
      result.push_back({t, -1});
      continue;
    }
    RawToken word = t;
    word.form.pop_back();
    int old_id = t.id;
    result.push_back({std::move(word), -1});
    RawToken dot;
    dot.form = kAbbrevDot;
    dot.upos = "PUNCT";
    dot.deprel = "punct";
    result.push_back({std::move(dot), old_id});
  }

  std::unordered_map<int, int> renumber;
  for (size_t i = 0; i < result.size(); ++i) {
    int new_id = int(i) + 1;
    if (result[i].old_head == -1) renumber[result[i].tok.id] = new_id;
  }
  std::vector<RawToken> tokens;
  tokens.reserve(result.size());
  for (size_t i = 0; i < result.size(); ++i) {
    RawToken t = std::move(result[i].tok);
    int old_head = result[i].old_head == -1 ? t.head : result[i].old_head;
    t.id = int(i) + 1;
    t.head = old_head == 0 ? 0 : renumber.at(old_head);
    tokens.push_back(std::move(t));
  }
  s.tokens = std::move(tokens);
}

WordCounts count_word_forms(std::span<const RawSentence> treebank) {
  WordCounts counts;
  for (const auto& s : treebank)
    for (const auto& t : s.tokens)
      if (!is_punct_token(t)) ++counts[t.form];
  return counts;
}

void apply_unk(RawSentence& s, const WordCounts& counts, int threshold) {
  for (auto& t : s.tokens) {
    if (is_punct_token(t)) continue;
    auto it = counts.find(t.form);
    long c = it == counts.end() ? 0 : it->second;
    if (c < threshold) t.form = kUnk;
  }
}

void preprocess_treebank(std::vector<RawSentence>& treebank,
                         const PreprocessConfig& cfg,
                         const WordCounts* train_counts) {
  for (auto& s : treebank) preprocess_structural(s, cfg);
  if (train_counts)
    for (auto& s : treebank) apply_unk(s, *train_counts, cfg.unk_threshold);
}

const std::vector<std::pair<int, int>> PunctemeVocab::kBackoffPairs = {{0, 0}};

PunctemeVocab::PunctemeVocab() {
  punctemes.push_back({});
  puncteme_index[""] = 0;
}

namespace {
std::string join_tokens(std::span<const std::string> tokens) {
  std::string key;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) key += ' ';
    key += tokens[i];
  }
  return key;
}
}  // namespace

int PunctemeVocab::intern_puncteme(std::span<const std::string> tokens) {
  std::string key = join_tokens(tokens);
  auto it = puncteme_index.find(key);
  if (it != puncteme_index.end()) return it->second;
  int id = int(punctemes.size());
  punctemes.emplace_back(tokens.begin(), tokens.end());
  puncteme_index.emplace(std::move(key), id);
  return id;
}

int PunctemeVocab::find_puncteme(std::span<const std::string> tokens) const {
  auto it = puncteme_index.find(join_tokens(tokens));
  return it == puncteme_index.end() ? -1 : it->second;
}

int PunctemeVocab::intern_deprel(const std::string& d) {
  auto it = deprel_index.find(d);
  if (it != deprel_index.end()) return it->second;
  int id = int(deprels.size());
  deprels.push_back(d);
  deprel_index.emplace(d, id);
  pairs.emplace_back();
  return id;
}

int PunctemeVocab::find_deprel(const std::string& d) const {
  auto it = deprel_index.find(d);
  return it == deprel_index.end() ? -1 : it->second;
}

void PunctemeVocab::add_pair(const std::string& deprel, int l, int r) {
  int d = intern_deprel(deprel);
  auto& list = pairs[size_t(d)];
  if (std::find(list.begin(), list.end(), std::make_pair(l, r)) == list.end())
    list.emplace_back(l, r);
}

const std::vector<std::pair<int, int>>& PunctemeVocab::pairs_for(
    const std::string& deprel, bool strict) const {
  int d = find_deprel(deprel);
  if (d >= 0) return pairs[size_t(d)];
  if (strict)
    throw std::runtime_error("no puncteme pair inventory for relation '" +
                             deprel + "'");
  return kBackoffPairs;
}

std::vector<std::string> PunctemeVocab::alphabet() const {
  std::vector<std::string> sigma;
  std::unordered_map<std::string, int> seen;
  for (const auto& p : punctemes)
    for (const auto& tok : p)
      if (seen.emplace(tok, 1).second) sigma.push_back(tok);
  return sigma;
}

PunctemeVocab estimate_vocab(std::span<const AnnotatedSentence> train) {
  PunctemeVocab v;
  for (const auto& sent : train)
    for (const auto& slot : sent.slots) v.intern_puncteme(slot);
  for (const auto& sent : train) {
    for (const auto& node : sent.tree.nodes) {
      int l = v.find_puncteme(sent.slots[size_t(node.span_lo)]);
      int r = v.find_puncteme(sent.slots[size_t(node.span_hi)]);
      v.add_pair(node.deprel, l, r);
    }
  }
  // ATTACH can always abstain
  for (const auto& d : v.deprels) v.add_pair(d, 0, 0);
  return v;
}

std::string puncteme_to_string(std::span<const std::string> tokens) {
  if (tokens.empty()) return "∅";
  return join_tokens(tokens);
}

std::vector<std::string> puncteme_from_string(std::string_view s) {
  if (s == "∅") return {};
  std::vector<std::string> tokens;
  size_t pos = 0;
  while (pos < s.size()) {
    size_t sp = s.find(' ', pos);
    if (sp == std::string_view::npos) {
      tokens.emplace_back(s.substr(pos));
      break;
    }
    tokens.emplace_back(s.substr(pos, sp - pos));
    pos = sp + 1;
  }
  return tokens;
}

std::string write_vocab(const PunctemeVocab& v) {
  std::ostringstream os;
  os << "[V]\n";
  for (const auto& p : v.punctemes) os << puncteme_to_string(p) << '\n';
  for (size_t d = 0; d < v.deprels.size(); ++d) {
    os << "[W " << v.deprels[d] << "]\n";
    for (auto [l, r] : v.pairs[d])
      os << puncteme_to_string(v.punctemes[size_t(l)]) << '\t'
         << puncteme_to_string(v.punctemes[size_t(r)]) << '\n';
  }
  return os.str();
}

PunctemeVocab read_vocab(std::string_view text) {
  PunctemeVocab v;
  std::string current_deprel;
  bool in_v = false;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t nl = text.find('\n', pos);
    std::string_view line = nl == std::string_view::npos
                                ? text.substr(pos)
                                : text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) {
      if (line == "[V]") {
        in_v = true;
        current_deprel.clear();
      } else if (line.size() > 3 && line.rfind("[W ", 0) == 0 &&
                 line.back() == ']') {
        in_v = false;
        current_deprel = std::string(line.substr(3, line.size() - 4));
        v.intern_deprel(current_deprel);
      } else if (in_v) {
        v.intern_puncteme(puncteme_from_string(line));
      } else if (!current_deprel.empty()) {
        size_t tab = line.find('\t');
        if (tab == std::string_view::npos)
          throw std::runtime_error("bad vocab pair line: " + std::string(line));
        auto l = puncteme_from_string(line.substr(0, tab));
        auto r = puncteme_from_string(line.substr(tab + 1));
        v.add_pair(current_deprel, v.intern_puncteme(l), v.intern_puncteme(r));
      }
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return v;
}

}  // namespace punct
