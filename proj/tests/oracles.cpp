#include "oracles.hpp"

#include <algorithm>
#include <functional>
#include <stdexcept>

namespace punct::testing {

namespace {

void enumerate_paths(const ChannelParams& p, std::span<const int> u, size_t i,
                     int pending, std::vector<int>& out, double prob,
                     std::map<std::vector<int>, Outcome>& acc) {
  if (i == u.size()) {
    std::vector<int> x = out;
    if (pending >= 0) x.push_back(pending);
    Outcome& o = acc[x];
    o.sum += prob;
    o.best = std::max(o.best, prob);
    return;
  }
  int b = u[i];
  if (pending < 0) {
    enumerate_paths(p, u, i + 1, b, out, prob, acc);
    return;
  }
  auto d = edit_distribution(pending, b, p);
  if (pending == b) {
    // merged arcs: emit (keep+transpose) or drop one token (both absorptions)
    out.push_back(pending);
    enumerate_paths(p, u, i + 1, pending, out, prob * (d[0] + d[3]), acc);
    out.pop_back();
    enumerate_paths(p, u, i + 1, pending, out, prob * (d[1] + d[2]), acc);
    return;
  }
  out.push_back(pending);  // keep
  enumerate_paths(p, u, i + 1, b, out, prob * d[0], acc);
  out.pop_back();
  enumerate_paths(p, u, i + 1, b, out, prob * d[1], acc);        // left absorb
  enumerate_paths(p, u, i + 1, pending, out, prob * d[2], acc);  // right absorb
  out.push_back(b);  // transpose
  enumerate_paths(p, u, i + 1, pending, out, prob * d[3], acc);
  out.pop_back();
}

}  // namespace

std::map<std::vector<int>, Outcome> brute_channel_outcomes(
    std::span<const int> u, const ChannelParams& p) {
  std::vector<int> work;
  std::map<std::vector<int>, Outcome> acc;
  if (p.direction == Direction::L2R) {
    enumerate_paths(p, u, 0, -1, work, 1.0, acc);
    return acc;
  }
  std::vector<int> mu(u.rbegin(), u.rend());
  std::map<std::vector<int>, Outcome> mirrored;
  enumerate_paths(p, mu, 0, -1, work, 1.0, mirrored);
  for (auto& [x, o] : mirrored) {
    std::vector<int> rx(x.rbegin(), x.rend());
    Outcome& dst = acc[rx];
    dst.sum += o.sum;
    dst.best = std::max(dst.best, o.best);
  }
  return acc;
}

double brute_channel_prob(std::span<const int> u, std::span<const int> x,
                          const ChannelParams& p) {
  auto acc = brute_channel_outcomes(u, p);
  auto it = acc.find(std::vector<int>(x.begin(), x.end()));
  return it == acc.end() ? 0.0 : it->second.sum;
}

BruteInside brute_inside(Model& m, const PreparedSentence& ps) {
  const AnnotatedSentence& sent = *ps.src;
  const int n = sent.tree.n();
  BruteInside out;

  // attach distributions per node, from the prepared feature ids
  std::vector<std::vector<double>> attach(static_cast<size_t>(n));
  for (int w = 1; w <= n; ++w) {
    const auto& pairs = ps.nodes[size_t(w - 1)].pairs;
    std::vector<double> scores(pairs.size(), 0.0);
    for (size_t pi = 0; pi < pairs.size(); ++pi)
      for (int f : pairs[pi].feats) scores[pi] += m.theta.weights[size_t(f)];
    attach[size_t(w - 1)] = softmax(scores);
  }
  for (int w = 1; w <= n; ++w)
    for (size_t k = 0; k < ps.nodes[size_t(w - 1)].pairs.size(); ++k)
      out.prior_unmatched += attach[size_t(w - 1)][k] *
                             ps.nodes[size_t(w - 1)].pairs[k].unmatched;
  if (!ps.tokens_known) return out;

  // channel outcome tables, memoized per underlying string
  std::map<std::vector<int>, std::map<std::vector<int>, Outcome>> memo;
  auto outcomes_for = [&](const std::vector<int>& u)
      -> const std::map<std::vector<int>, Outcome>& {
    auto it = memo.find(u);
    if (it == memo.end())
      it = memo.emplace(u, brute_channel_outcomes(u, m.channel)).first;
    return it->second;
  };

  std::vector<size_t> pick(size_t(n), 0);
  std::function<void(int)> rec = [&](int w) {
    if (w > n) {
      PunctTree pt;
      pt.punctemes.resize(size_t(n));
      double p_attach = 1.0;
      double c = 0;
      for (int k = 1; k <= n; ++k) {
        const auto& pp = ps.nodes[size_t(k - 1)].pairs[pick[size_t(k - 1)]];
        pt.punctemes[size_t(k - 1)] = {pp.l, pp.r};
        p_attach *= attach[size_t(k - 1)][pick[size_t(k - 1)]];
        c += pp.unmatched;
      }
      auto u = underlying_slots(sent, pt, m.vocab);
      double chan_sum = 1.0, chan_best = 1.0;
      for (int s = 0; s <= n; ++s) {
        std::vector<int> ui;
        for (const auto& tok : u[size_t(s)]) ui.push_back(m.token_id(tok));
        const auto& table = outcomes_for(ui);
        auto it = table.find(ps.slot_tokens[size_t(s)]);
        if (it == table.end()) {
          chan_sum = chan_best = 0.0;
          break;
        }
        chan_sum *= it->second.sum;
        chan_best *= it->second.best;
      }
      double joint = p_attach * chan_sum;
      out.likelihood += joint;
      out.expected_unmatched += joint * c;
      if (joint > 0) out.posterior[pt.punctemes] += joint;
      double ext_best = p_attach * chan_best;
      if (ext_best > out.best_score) {
        out.second_best_score = out.best_score;
        out.best_score = ext_best;
        out.best_assignment = pt.punctemes;
      } else if (ext_best > out.second_best_score) {
        out.second_best_score = ext_best;
      }
      return;
    }
    for (size_t k = 0; k < ps.nodes[size_t(w - 1)].pairs.size(); ++k) {
      pick[size_t(w - 1)] = k;
      rec(w + 1);
    }
  };
  rec(1);

  if (out.likelihood > 0) {
    out.expected_unmatched /= out.likelihood;
    for (auto& [a, p] : out.posterior) p /= out.likelihood;
  } else {
    out.expected_unmatched = 0;
  }
  return out;
}

TestInstance random_instance(uint64_t seed, const InstanceConfig& cfg) {
  Rng rng(seed);
  TestInstance inst;

  // random projective single-root tree by rejection
  int n = 1 + int(rng.next_below(uint64_t(cfg.max_nodes)));
  DepTree tree;
  const char* pos_tags[] = {"NOUN", "VERB", "ADJ"};
  const char* rels[] = {"a", "b"};
  while (true) {
    tree.nodes.clear();
    for (int i = 1; i <= n; ++i) {
      DepNode nd;
      nd.index = i;
      nd.form = "w" + std::to_string(i);
      nd.upos = pos_tags[rng.next_below(3)];
      nd.head = int(rng.next_below(uint64_t(n) + 1));
      nd.deprel = nd.head == 0 ? "root" : rels[rng.next_below(2)];
      tree.nodes.push_back(std::move(nd));
    }
    std::string reason;
    if (finish_tree(tree, &reason)) break;
  }
  tree.sent_id = "inst" + std::to_string(seed);

  // alphabet and puncteme vocabulary
  const std::string toks[] = {",", ".", "“"};
  int sigma = 1 + int(rng.next_below(uint64_t(cfg.max_sigma)));
  PunctemeVocab vocab;
  int want = 2 + int(rng.next_below(3));  // besides epsilon
  for (int k = 0; k < want; ++k) {
    int len = 1 + int(rng.next_below(2));
    std::vector<std::string> p;
    for (int t = 0; t < len; ++t)
      p.push_back(toks[rng.next_below(uint64_t(sigma))]);
    vocab.intern_puncteme(p);
  }
  // every alphabet token must appear in some puncteme
  for (int t = 0; t < sigma; ++t) {
    std::vector<std::string> p{toks[t]};
    vocab.intern_puncteme(p);
  }
  const char* all_rels[] = {"root", "a", "b"};
  for (const char* d : all_rels) {
    vocab.intern_deprel(d);
    vocab.add_pair(d, 0, 0);
    int extra = int(rng.next_below(uint64_t(cfg.max_pairs)));
    for (int k = 0; k < extra; ++k) {
      if (int(vocab.pairs_for(d).size()) >= cfg.max_pairs) break;
      int l = int(rng.next_below(vocab.punctemes.size()));
      int r = int(rng.next_below(vocab.punctemes.size()));
      vocab.add_pair(d, l, r);
    }
  }

  Model& m = inst.model;
  m.vocab = vocab;
  m.rebuild_alphabet();
  m.channel.direction = cfg.direction;
  for (auto& s : m.channel.scores)
    for (int k = 0; k < 4; ++k) s[size_t(k)] = rng.next_normal();

  inst.sent = std::make_unique<AnnotatedSentence>();
  inst.sent->tree = tree;
  inst.sent->slots.assign(size_t(n) + 1, {});

  bool ok = false;
  if (cfg.surface_from_model) {
    for (int attempt = 0; attempt < 50 && !ok; ++attempt) {
      GenerateResult g = generate(m, tree, rng);
      ok = true;
      for (const auto& slot : g.surface)
        if (int(slot.size()) > cfg.max_x_len) ok = false;
      if (ok) inst.sent->slots = g.surface;
    }
  }
  if (!ok) {
    for (int s = 0; s <= n; ++s) {
      int len = int(rng.next_below(uint64_t(cfg.max_x_len) + 1));
      for (int t = 0; t < len; ++t)
        inst.sent->slots[size_t(s)].push_back(
            toks[rng.next_below(uint64_t(sigma))]);
    }
  }

  inst.prep = prepare_sentence(m, *inst.sent, 0, /*create_features=*/true);
  Rng trng(seed ^ 0x7777);
  for (auto& w : m.theta.weights) w = trng.next_normal();
  return inst;
}

AnnotatedSentence annotated_from_conllu(const std::string& text) {
  auto sentences = parse_conllu(text);
  if (sentences.size() != 1)
    throw std::runtime_error("fixture must contain exactly one sentence");
  DepunctResult r = depunctuate(sentences[0]);
  if (!r.ok())
    throw std::runtime_error("fixture depunctuation failed: " + r.reason);
  return r.sentence;
}

}  // namespace punct::testing
