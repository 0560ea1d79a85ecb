#include "punct/attach.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace punct {

SymmetricPairTable SymmetricPairTable::defaults() {
  SymmetricPairTable t;
  t.pairs = {
      {"{", "}"},
      {"[", "]"},
      {"(", ")"},
      {"“", "”"},  // double quotes
      {"‘", "’"},  // single quotes
      {"¿", "?"},       // Spanish question pair
      {"¡", "!"},       // Spanish exclamation pair
      {"«", "»"},  // guillemets
      {"⟨", "⟩"},  // angle brackets
      {"【", "】"},
      {"『", "』"},
      {"「", "」"},
      {"-", "-"},
      {",", ","},
  };
  return t;
}

bool SymmetricPairTable::mirror_match(std::span<const std::string> l,
                                      std::span<const std::string> r,
                                      bool include_equal) const {
  if (l.size() != r.size()) return false;
  const size_t m = l.size();
  for (size_t t = 0; t < m; ++t) {
    const std::string& open = l[t];
    const std::string& close = r[m - 1 - t];
    bool ok = false;
    for (const auto& p : pairs) {
      if (!include_equal && p.first == p.second) continue;
      if (p.first == open && p.second == close) {
        ok = true;
        break;
      }
    }
    if (!ok) return false;
  }
  return true;
}

bool SymmetricPairTable::symmetric(std::span<const std::string> l,
                                   std::span<const std::string> r) const {
  if (l.empty() || r.empty()) return false;
  return mirror_match(l, r, /*include_equal=*/true);
}

int SymmetricPairTable::count_unmatched(std::span<const std::string> l,
                                        std::span<const std::string> r) const {
  auto in_table = [&](const std::string& tok) {
    for (const auto& p : pairs) {
      if (p.first == p.second) continue;
      if (p.first == tok || p.second == tok) return true;
    }
    return false;
  };
  std::vector<std::string> fl, fr;
  for (const auto& t : l)
    if (in_table(t)) fl.push_back(t);
  for (const auto& t : r)
    if (in_table(t)) fr.push_back(t);
  if (fl.empty() && fr.empty()) return 0;
  return mirror_match(fl, fr, /*include_equal=*/false) ? 0 : 1;
}

namespace {

std::string width_bucket_of(int width) {
  if (width <= 3) return std::to_string(width);
  if (width <= 5) return "4-5";
  if (width <= 10) return "6-10";
  return "11+";
}

}  // namespace

NodeContext make_node_context(const AnnotatedSentence& sent, int node_index) {
  const DepTree& tree = sent.tree;
  const DepNode& w = tree.at(node_index);
  NodeContext ctx;
  ctx.pos = w.upos;
  ctx.deprel = w.deprel;
  if (w.head == 0)
    ctx.deprel_dir = w.deprel;
  else
    ctx.deprel_dir =
        (w.index < w.head ? "←" : "→") + w.deprel;
  ctx.parent_deprel = w.head == 0 ? "root" : tree.at(w.head).deprel;

  std::set<std::string> rels;
  for (int c : w.left_children) rels.insert(tree.at(c).deprel);
  for (int c : w.right_children) rels.insert(tree.at(c).deprel);
  ctx.child_relations.assign(rels.begin(), rels.end());

  int lo = w.span_lo, hi = w.span_hi;
  ctx.pos_out_lo = lo == 0 ? "BOS" : tree.at(lo).upos;
  ctx.pos_in_lo = tree.at(lo + 1).upos;
  ctx.pos_in_hi = tree.at(hi).upos;
  ctx.pos_out_hi = hi == tree.n() ? "EOS" : tree.at(hi + 1).upos;
  ctx.width_bucket = width_bucket_of(hi - lo);

  std::set<std::string> internal;
  for (int s = lo + 1; s <= hi - 1; ++s)
    for (const auto& tok : sent.slots[size_t(s)]) internal.insert(tok);
  ctx.internal_tokens.assign(internal.begin(), internal.end());
  return ctx;
}

namespace {

std::string render(std::span<const std::string> puncteme) {
  return puncteme_to_string(puncteme);
}

std::string join(std::span<const std::string> toks) {
  std::string s;
  for (size_t i = 0; i < toks.size(); ++i) {
    if (i) s += ' ';
    s += toks[i];
  }
  return s;
}

}  // namespace

std::vector<std::string> extract_features(std::span<const std::string> l,
                                          std::span<const std::string> r,
                                          const NodeContext& ctx,
                                          const SymmetricPairTable& table) {
  std::vector<std::string> f;
  std::string ls = render(l), rs = render(r);
  f.push_back("N." + ls + "." + rs + "." + ctx.pos + "." + ctx.deprel_dir);
  f.push_back("W." + ctx.width_bucket + "." + ls + "." + rs + "." + ctx.pos +
              "." + ctx.deprel_dir);
  if (table.symmetric(l, r))
    f.push_back("S." + ctx.pos + "." + ctx.deprel_dir);
  f.push_back("A." + ls + "." + rs + "." + ctx.pos + "." + ctx.deprel_dir +
              "." + ctx.parent_deprel);
  f.push_back("L." + ls + "." + ctx.pos_out_lo + "." + ctx.pos_in_lo);
  f.push_back("R." + rs + "." + ctx.pos_in_hi + "." + ctx.pos_out_hi);
  for (const auto& rel : ctx.child_relations)
    f.push_back("C." + ls + "." + rs + "." + ctx.deprel + "." + rel);
  if (!ctx.internal_tokens.empty())
    f.push_back("Nc." + ls + "." + join(ctx.internal_tokens) + "." + rs + "." +
                ctx.deprel_dir);
  return f;
}

std::vector<std::string> correction_features(
    std::span<const std::string> l, std::span<const std::string> r,
    const NodeContext& ctx, const SymmetricPairTable& table,
    std::span<const std::string> l_err, std::span<const std::string> r_err) {
  std::vector<std::string> f = extract_features(l, r, ctx, table);
  std::string ls = render(l), rs = render(r);
  std::string le = render(l_err), re = render(r_err);
  std::string lr = ls + "." + rs, err = le + "." + re;
  f.push_back("N." + lr + "." + ctx.pos + "." + ctx.deprel_dir + "." + err);
  f.push_back("N." + lr + "." + ctx.deprel_dir + "." + err);
  f.push_back("N." + lr + "." + ctx.pos + "." + err);
  f.push_back("N." + lr + "." + err);
  std::string wh = "W." + ctx.width_bucket + "." + lr;
  f.push_back(wh + "." + ctx.pos + "." + ctx.deprel_dir + "." + err);
  f.push_back(wh + "." + ctx.deprel_dir + "." + err);
  f.push_back(wh + "." + ctx.pos + "." + err);
  f.push_back(wh + "." + err);
  return f;
}

std::vector<double> softmax(std::span<const double> scores) {
  double m = scores[0];
  for (double s : scores) m = std::max(m, s);
  std::vector<double> p(scores.size());
  double z = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    p[i] = std::exp(scores[i] - m);
    z += p[i];
  }
  for (auto& v : p) v /= z;
  return p;
}

double attach_prob(std::span<const std::string> l,
                   std::span<const std::string> r, const NodeContext& ctx,
                   const AttachWeights& theta, const SymmetricPairTable& table,
                   const PunctemeVocab& vocab,
                   std::span<const std::pair<int, int>> inventory) {
  if (inventory.empty())
    throw std::runtime_error("attach_prob: empty puncteme pair inventory");
  std::vector<double> scores;
  scores.reserve(inventory.size());
  int target = -1;
  for (size_t i = 0; i < inventory.size(); ++i) {
    const auto& lp = vocab.punctemes[size_t(inventory[i].first)];
    const auto& rp = vocab.punctemes[size_t(inventory[i].second)];
    double s = 0;
    for (const auto& name : extract_features(lp, rp, ctx, table))
      s += theta.weight(name);
    scores.push_back(s);
    if (std::equal(lp.begin(), lp.end(), l.begin(), l.end()) &&
        std::equal(rp.begin(), rp.end(), r.begin(), r.end()))
      target = int(i);
  }
  if (target < 0) return 0.0;  // outside the inventory
  return softmax(scores)[size_t(target)];
}

}  // namespace punct
