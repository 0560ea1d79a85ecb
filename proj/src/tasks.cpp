#include "punct/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

namespace punct {

int token_edit_distance(std::span<const std::string> a,
                        std::span<const std::string> b) {
  const size_t n = a.size(), m = b.size();
  std::vector<int> prev(m + 1), cur(m + 1);
  for (size_t j = 0; j <= m; ++j) prev[j] = int(j);
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = int(i);
    for (size_t j = 1; j <= m; ++j) {
      int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

long sentence_edit_distance(const SlotStrings& a, const SlotStrings& b) {
  if (a.size() != b.size())
    throw std::runtime_error("slot count mismatch: " + std::to_string(a.size()) +
                             " vs " + std::to_string(b.size()));
  long total = 0;
  for (size_t i = 0; i < a.size(); ++i)
    total += token_edit_distance(a[i], b[i]);
  return total;
}

void AedAccumulator::add(const SlotStrings& pred, const SlotStrings& gold) {
  edits += sentence_edit_distance(pred, gold);
  slots += long(gold.size());
}

double AedAccumulator::value() const {
  return slots == 0 ? 0.0 : double(edits) / double(slots);
}

SlotStrings trivial_baseline(const DepTree& tree, const std::string& final_mark) {
  SlotStrings x(size_t(tree.n()) + 1);
  x.back().push_back(final_mark);
  return x;
}

std::vector<SlotStrings> draw_restore_samples(Model& m, const DepTree& tree,
                                              int count, Rng& rng) {
  std::vector<SlotStrings> out;
  out.reserve(size_t(count));
  for (int k = 0; k < count; ++k)
    out.push_back(generate(m, tree, rng).surface);
  return out;
}

namespace {
std::string slots_key(const SlotStrings& x) {
  std::string k;
  for (const auto& slot : x) {
    for (const auto& t : slot) {
      k += t;
      k += '\x01';
    }
    k += '\x02';
  }
  return k;
}
}  // namespace

SlotStrings mbr_decode(std::span<const SlotStrings> samples) {
  if (samples.empty()) throw std::runtime_error("mbr_decode: no samples");
  // unique values in first-occurrence order with empirical counts
  std::vector<const SlotStrings*> uniq;
  std::vector<long> count;
  std::unordered_map<std::string, size_t> index;
  for (const auto& s : samples) {
    std::string key = slots_key(s);
    auto it = index.find(key);
    if (it == index.end()) {
      index.emplace(std::move(key), uniq.size());
      uniq.push_back(&s);
      count.push_back(1);
    } else {
      ++count[it->second];
    }
  }
  size_t best = 0;
  long best_risk = -1;
  for (size_t i = 0; i < uniq.size(); ++i) {
    long risk = 0;
    for (size_t j = 0; j < uniq.size(); ++j) {
      if (i == j) continue;
      risk += count[j] * sentence_edit_distance(*uniq[i], *uniq[j]);
    }
    if (best_risk < 0 || risk < best_risk) {
      best_risk = risk;
      best = i;
    }
  }
  return *uniq[best];
}

SlotStrings restore(Model& m, const DepTree& tree, const MbrConfig& mbr,
                    uint64_t ordinal) {
  Rng rng = Rng::derive(mbr.seed, (ordinal << 16) ^ 0x5e5);
  std::vector<SlotStrings> samples =
      draw_restore_samples(m, tree, mbr.sample_count, rng);
  return mbr_decode(samples);
}

std::vector<EditRec> edit_set(const SlotStrings& input,
                              const SlotStrings& output) {
  if (input.size() != output.size())
    throw std::runtime_error("edit_set: slot count mismatch");
  std::vector<EditRec> out;
  for (size_t s = 0; s < input.size(); ++s)
    if (input[s] != output[s])
      out.push_back({int(s), input[s], output[s]});
  return out;
}

double f_half(std::span<const EditRec> system, std::span<const EditRec> gold) {
  long hit = 0;
  for (const auto& e : system)
    for (const auto& g : gold)
      if (e == g) {
        ++hit;
        break;
      }
  double p = system.empty() ? 1.0 : double(hit) / double(system.size());
  double r = gold.empty() ? 1.0 : double(hit) / double(gold.size());
  if (p == 0.0 && r == 0.0) return 0.0;
  return 1.25 * p * r / (0.25 * p + r);
}

CorrectOutcome correct_sentence(Model& esl, Model& cesl, Model& correction,
                                const AnnotatedSentence& errorful,
                                const MbrConfig& mbr, uint64_t ordinal) {
  CorrectOutcome out;
  PreparedSentence pe = prepare_sentence(esl, errorful, ordinal, false);
  ViterbiResult vit = viterbi_underlying(esl, pe);
  Rng rng = Rng::derive(mbr.seed, (ordinal << 16) ^ 0xC0);
  if (!vit.ok) {
    out.fell_back = true;
    out.output = mbr_decode(
        draw_restore_samples(cesl, errorful.tree, mbr.sample_count, rng));
    return out;
  }
  ErrorfulPunctemes err(errorful.tree.n());
  for (int w = 1; w <= errorful.tree.n(); ++w) {
    auto [l, r] = vit.tree.punctemes[size_t(w - 1)];
    err[size_t(w - 1)] = {esl.vocab.punctemes[size_t(l)],
                          esl.vocab.punctemes[size_t(r)]};
  }
  std::vector<SlotStrings> samples;
  samples.reserve(size_t(mbr.sample_count));
  for (int k = 0; k < mbr.sample_count; ++k)
    samples.push_back(generate(correction, errorful.tree, rng, &err).surface);
  out.output = mbr_decode(samples);
  return out;
}

namespace {

std::vector<int> local_items(const DepTree& tree, int head) {
  const DepNode& nd = tree.at(head);
  std::vector<int> items = nd.left_children;
  items.push_back(head);
  items.insert(items.end(), nd.right_children.begin(), nd.right_children.end());
  return items;
}

bool permutable_head(const DepNode& nd) {
  return nd.upos == "NOUN" || nd.upos == "VERB";
}

// new linear order of old node indices after local reordering
std::vector<int> linearize(const DepTree& tree, PermutationSource& source,
                           Rng& rng) {
  std::vector<int> order;
  order.reserve(size_t(tree.n()));
  std::function<void(int)> rec = [&](int w) {
    std::vector<int> items = local_items(tree, w);
    if (permutable_head(tree.at(w)) && items.size() > 1)
      items = source.reorder(tree, w, items, rng);
    for (int it : items) {
      if (it == w)
        order.push_back(w);
      else
        rec(it);
    }
  };
  rec(tree.root);
  return order;
}

DepTree permute_tree(const DepTree& tree, std::span<const int> order,
                     std::vector<int>& new_index) {
  new_index.assign(size_t(tree.n()) + 1, 0);
  for (size_t pos = 0; pos < order.size(); ++pos)
    new_index[size_t(order[pos])] = int(pos) + 1;
  DepTree out;
  out.sent_id = tree.sent_id;
  out.nodes.resize(size_t(tree.n()));
  for (int old = 1; old <= tree.n(); ++old) {
    const DepNode& src = tree.at(old);
    DepNode nd;
    nd.index = new_index[size_t(old)];
    nd.form = src.form;
    nd.upos = src.upos;
    nd.deprel = src.deprel;
    nd.head = src.head == 0 ? 0 : new_index[size_t(src.head)];
    out.nodes[size_t(nd.index - 1)] = std::move(nd);
  }
  std::string reason;
  if (!finish_tree(out, &reason))
    throw std::runtime_error("permuted tree invalid: " + reason);
  return out;
}

}  // namespace

RephraseResult rephrase(Model& m, const AnnotatedSentence& sent,
                        PermutationSource& source, Rng& rng,
                        bool argmax_channel) {
  RephraseResult res;
  PreparedSentence ps = prepare_sentence(m, sent, 0, false);
  ViterbiResult vit = viterbi_underlying(m, ps);
  if (!vit.ok) {
    res.sentence = sent;
    return res;
  }
  std::vector<int> order = linearize(sent.tree, source, rng);
  std::vector<int> new_index;
  DepTree permuted = permute_tree(sent.tree, order, new_index);

  res.punctemes.punctemes.assign(size_t(permuted.n()), {0, 0});
  for (int old = 1; old <= sent.tree.n(); ++old)
    res.punctemes.punctemes[size_t(new_index[size_t(old)] - 1)] =
        vit.tree.punctemes[size_t(old - 1)];

  res.sentence.tree = permuted;
  res.sentence.slots.assign(size_t(permuted.n()) + 1, {});
  auto u = underlying_slots(res.sentence, res.punctemes, m.vocab);
  for (size_t s = 0; s < u.size(); ++s) {
    std::vector<int> ids;
    ids.reserve(u[s].size());
    for (const auto& tok : u[s]) ids.push_back(m.token_id(tok));
    std::vector<int> x = argmax_channel ? simulate_argmax(ids, m.channel)
                                        : simulate(ids, m.channel, rng);
    for (int t : x) res.sentence.slots[s].push_back(m.sigma[size_t(t)]);
  }
  res.changed = true;
  return res;
}

RawSentence rephrase_baseline(const RawSentence& raw, PermutationSource& source,
                              Rng& rng, bool* ok) {
  if (ok) *ok = false;
  DepTree tree;
  tree.sent_id = raw.sent_id();
  tree.nodes.resize(raw.tokens.size());
  for (size_t i = 0; i < raw.tokens.size(); ++i) {
    const RawToken& t = raw.tokens[i];
    DepNode nd;
    nd.index = t.id;
    nd.form = t.form;
    nd.upos = t.upos;
    nd.deprel = t.deprel;
    nd.head = t.head;
    if (t.id != int(i) + 1) return raw;  // ids must be contiguous
    tree.nodes[i] = std::move(nd);
  }
  std::string reason;
  if (!finish_tree(tree, &reason)) return raw;
  std::vector<int> order = linearize(tree, source, rng);
  RawSentence out;
  out.comments = raw.comments;
  std::vector<int> new_index(raw.tokens.size() + 1, 0);
  for (size_t pos = 0; pos < order.size(); ++pos)
    new_index[size_t(order[pos])] = int(pos) + 1;
  out.tokens.resize(raw.tokens.size());
  for (size_t i = 0; i < raw.tokens.size(); ++i) {
    RawToken t = raw.tokens[i];
    int ni = new_index[size_t(t.id)];
    t.id = ni;
    t.head = t.head == 0 ? 0 : new_index[size_t(t.head)];
    out.tokens[size_t(ni - 1)] = std::move(t);
  }
  if (ok) *ok = true;
  return out;
}

RawSentence emit_with_punctuation(const DepTree& tree, const SlotStrings& x) {
  if (int(x.size()) != tree.n() + 1)
    throw std::runtime_error("emit_with_punctuation: slot count mismatch");
  // attachment for the punctuation at slot s: the widest constituent with an
  // edge exactly at s; ties prefer the constituent ending there
  std::vector<int> attach_to(x.size(), 0);
  for (int s = 0; s <= tree.n(); ++s) {
    int best = -1, best_width = -1;
    bool best_ender = false;
    for (const auto& nd : tree.nodes) {
      bool ender = nd.span_hi == s, starter = nd.span_lo == s;
      if (!ender && !starter) continue;
      int width = nd.span_hi - nd.span_lo;
      if (width > best_width || (width == best_width && ender && !best_ender)) {
        best = nd.index;
        best_width = width;
        best_ender = ender;
      }
    }
    attach_to[size_t(s)] = best < 0 ? tree.root : best;
  }

  RawSentence out;
  if (!tree.sent_id.empty())
    out.comments.push_back("# sent_id = " + tree.sent_id);
  // interleave, then renumber
  struct Item {
    bool punct;
    std::string form;
    int old_index;  // word index, or attachment word for punctuation
    std::string upos, deprel;
  };
  std::vector<Item> items;
  for (int s = 0; s <= tree.n(); ++s) {
    for (const auto& tok : x[size_t(s)])
      items.push_back({true, tok, attach_to[size_t(s)], "PUNCT", "punct"});
    if (s < tree.n()) {
      const DepNode& nd = tree.at(s + 1);
      items.push_back({false, nd.form, nd.index, nd.upos, nd.deprel});
    }
  }
  std::vector<int> new_of_word(size_t(tree.n()) + 1, 0);
  for (size_t i = 0; i < items.size(); ++i)
    if (!items[i].punct) new_of_word[size_t(items[i].old_index)] = int(i) + 1;
  for (size_t i = 0; i < items.size(); ++i) {
    const Item& it = items[i];
    RawToken t;
    t.id = int(i) + 1;
    t.form = it.form;
    t.upos = it.upos;
    t.deprel = it.deprel;
    if (it.punct) {
      t.head = new_of_word[size_t(it.old_index)];
    } else {
      int h = tree.at(it.old_index).head;
      t.head = h == 0 ? 0 : new_of_word[size_t(h)];
      t.deprel = tree.at(it.old_index).deprel;
    }
    out.tokens.push_back(std::move(t));
  }
  return out;
}

FileOrderingSource FileOrderingSource::parse(std::string_view text) {
  FileOrderingSource src;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t nl = text.find('\n', pos);
    std::string_view line = nl == std::string_view::npos
                                ? text.substr(pos)
                                : text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) {
      size_t t1 = line.find('\t');
      size_t t2 = t1 == std::string_view::npos ? t1 : line.find('\t', t1 + 1);
      if (t1 == std::string_view::npos || t2 == std::string_view::npos)
        throw std::runtime_error("bad ordering line: " + std::string(line));
      std::string key = std::string(line.substr(0, t1)) + "\t" +
                        std::string(line.substr(t1 + 1, t2 - t1 - 1));
      std::vector<int> order;
      size_t p = t2 + 1;
      while (p < line.size()) {
        size_t sp = line.find(' ', p);
        if (sp == std::string_view::npos) sp = line.size();
        if (sp > p) order.push_back(std::stoi(std::string(line.substr(p, sp - p))));
        p = sp + 1;
      }
      src.orders.emplace(std::move(key), std::move(order));
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return src;
}

std::vector<int> FileOrderingSource::reorder(const DepTree& tree, int head,
                                             const std::vector<int>& items,
                                             Rng&) {
  auto it = orders.find(tree.sent_id + "\t" + std::to_string(head));
  if (it == orders.end()) return items;
  const std::vector<int>& want = it->second;
  // validate: must be a permutation of items
  std::vector<int> a = items, b = want;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a != b)
    throw std::runtime_error("ordering for head " + std::to_string(head) +
                             " is not a permutation of its local items");
  return want;
}

}  // namespace punct
