#include "punct/forest.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

namespace punct {

void Model::rebuild_alphabet() {
  sigma = vocab.alphabet();
  sigma_index.clear();
  for (size_t i = 0; i < sigma.size(); ++i) sigma_index[sigma[i]] = int(i);
  puncteme_tokens.clear();
  puncteme_tokens.reserve(vocab.punctemes.size());
  for (const auto& p : vocab.punctemes) {
    std::vector<int> ids;
    ids.reserve(p.size());
    for (const auto& t : p) ids.push_back(sigma_index.at(t));
    puncteme_tokens.push_back(std::move(ids));
  }
  if (channel.sigma != int(sigma.size())) {
    Direction dir = channel.direction;
    bool ident = channel.identity;
    channel = ChannelParams::make(int(sigma.size()), dir);
    channel.identity = ident;
  }
  pfst = std::make_unique<Pfst>(build_pfst(channel));
  slot_cache = std::make_unique<SlotCache>();
}

namespace {

std::string slot_key(std::span<const int> toks) {
  std::string k;
  for (int t : toks) {
    k += std::to_string(t);
    k += ',';
  }
  return k;
}

}  // namespace

const SlotAutomaton& Model::slot_automaton(std::span<const int> adjusted) {
  std::string key = slot_key(adjusted);
  std::lock_guard<std::mutex> lock(slot_cache->mu);
  auto it = slot_cache->map.find(key);
  if (it != slot_cache->map.end()) return *it->second;
  if (!pfst) pfst = std::make_unique<Pfst>(build_pfst(channel));
  auto sa = std::make_unique<SlotAutomaton>(compose_slot(*pfst, adjusted));
  auto* ptr = sa.get();
  slot_cache->map.emplace(std::move(key), std::move(sa));
  return *ptr;
}

PreparedSentence prepare_sentence(Model& m, const AnnotatedSentence& sent,
                                  uint64_t ordinal, bool create_features,
                                  bool strict_relations,
                                  const ErrorfulPunctemes* errorful) {
  PreparedSentence ps;
  ps.src = &sent;
  ps.ordinal = ordinal;
  const int n = sent.tree.n();
  ps.slot_tokens.resize(size_t(n) + 1);
  for (int s = 0; s <= n; ++s) {
    for (const auto& tok : sent.slots[size_t(s)]) {
      int id = m.token_id(tok);
      if (id < 0) ps.tokens_known = false;
      ps.slot_tokens[size_t(s)].push_back(id);
    }
  }
  if (ps.tokens_known) {
    const bool mir = m.channel.direction == Direction::R2L;
    for (int s = 0; s <= n; ++s) {
      std::vector<int> adj = ps.slot_tokens[size_t(mir ? n - s : s)];
      if (mir) std::reverse(adj.begin(), adj.end());
      m.slot_automaton(adj);
    }
  }
  ps.nodes.resize(size_t(n));
  for (int w = 1; w <= n; ++w) {
    const DepNode& node = sent.tree.at(w);
    const auto& inventory = m.vocab.pairs_for(node.deprel, strict_relations);
    NodeContext ctx = make_node_context(sent, w);
    PreparedNode pn;
    pn.pairs.reserve(inventory.size());
    for (auto [l, r] : inventory) {
      PreparedPair pp;
      pp.l = l;
      pp.r = r;
      const auto& lp = m.vocab.punctemes[size_t(l)];
      const auto& rp = m.vocab.punctemes[size_t(r)];
      std::vector<std::string> names =
          (m.correction_mode && errorful)
              ? correction_features(lp, rp, ctx, m.sym_table,
                                    (*errorful)[size_t(w - 1)].first,
                                    (*errorful)[size_t(w - 1)].second)
              : extract_features(lp, rp, ctx, m.sym_table);
      for (const auto& nm : names) {
        int id = create_features ? m.theta.intern(nm) : m.theta.find(nm);
        if (id >= 0) pp.feats.push_back(id);
      }
      pp.unmatched = m.sym_table.count_unmatched(lp, rp);
      pn.pairs.push_back(std::move(pp));
    }
    ps.nodes[size_t(w - 1)] = std::move(pn);
  }
  return ps;
}

namespace {

// ---- direction-adjusted problem view -------------------------------------

struct ViewPair {
  std::vector<int> left, right;  // adjusted token sequences
};
struct ViewNode {
  int lo = 0, hi = 0, head_slot = 0;
  std::vector<int> left_children, right_children;
  std::vector<ViewPair> pairs;
};
struct ProblemView {
  int n = 0, root = 0;
  std::vector<ViewNode> nodes;
  std::vector<const SlotAutomaton*> automata;
};

ProblemView make_view(Model& m, const PreparedSentence& ps) {
  const AnnotatedSentence& sent = *ps.src;
  const int n = sent.tree.n();
  const bool mir = m.channel.direction == Direction::R2L;
  ProblemView v;
  v.n = n;
  v.root = sent.tree.root;
  v.nodes.resize(size_t(n));
  for (int w = 1; w <= n; ++w) {
    const DepNode& nd = sent.tree.at(w);
    ViewNode vn;
    if (!mir) {
      vn.lo = nd.span_lo;
      vn.hi = nd.span_hi;
      vn.head_slot = nd.head_slot;
      vn.left_children = nd.left_children;
      vn.right_children = nd.right_children;
    } else {
      vn.lo = n - nd.span_hi;
      vn.hi = n - nd.span_lo;
      vn.head_slot = n - nd.head_slot + 1;
      vn.left_children.assign(nd.right_children.rbegin(),
                              nd.right_children.rend());
      vn.right_children.assign(nd.left_children.rbegin(),
                               nd.left_children.rend());
    }
    const PreparedNode& pn = ps.nodes[size_t(w - 1)];
    vn.pairs.reserve(pn.pairs.size());
    for (const auto& pp : pn.pairs) {
      ViewPair vp;
      const auto& lt = m.puncteme_tokens[size_t(pp.l)];
      const auto& rt = m.puncteme_tokens[size_t(pp.r)];
      if (!mir) {
        vp.left = lt;
        vp.right = rt;
      } else {
        vp.left.assign(rt.rbegin(), rt.rend());
        vp.right.assign(lt.rbegin(), lt.rend());
      }
      vn.pairs.push_back(std::move(vp));
    }
    v.nodes[size_t(w - 1)] = std::move(vn);
  }
  v.automata.resize(size_t(n) + 1);
  for (int s = 0; s <= n; ++s) {
    std::vector<int> adj = ps.slot_tokens[size_t(mir ? n - s : s)];
    if (mir) std::reverse(adj.begin(), adj.end());
    v.automata[size_t(s)] = &m.slot_automaton(adj);
  }
  return v;
}

// ---- the generic inside engine --------------------------------------------

// IN(w) is kept as a sum of rank-one terms (column, row): the column covers
// the left slot states and already includes the attach factor, the row the
// right slot states. Chains of children are folded in as vector products,
// never materializing N x N matrices.
template <class P>
struct Engine {
  using V = typename P::V;
  P& pol;
  const ProblemView& view;

  struct NodeRes {
    std::vector<std::pair<std::vector<V>, std::vector<V>>> terms;
    int ex = 0;
  };

  V dot(const std::vector<V>& a, const std::vector<V>& b) {
    V d = pol.zero();
    for (size_t i = 0; i < a.size(); ++i) {
      if (pol.is_zero(a[i]) || pol.is_zero(b[i])) continue;
      d = pol.plus(d, pol.times(a[i], b[i]));
    }
    return d;
  }

  void apply_col(const NodeRes& c, std::vector<V>& v) {
    std::vector<V> out(c.terms[0].first.size(), pol.zero());
    for (const auto& [col, row] : c.terms) {
      V d = dot(row, v);
      if (pol.is_zero(d)) continue;
      for (size_t s = 0; s < col.size(); ++s) {
        if (pol.is_zero(col[s])) continue;
        out[s] = pol.plus(out[s], pol.times(col[s], d));
      }
    }
    v = std::move(out);
  }

  void apply_row(const NodeRes& c, std::vector<V>& u) {
    std::vector<V> out(c.terms[0].second.size(), pol.zero());
    for (const auto& [col, row] : c.terms) {
      V d = dot(u, col);
      if (pol.is_zero(d)) continue;
      for (size_t t = 0; t < row.size(); ++t) {
        if (pol.is_zero(row[t])) continue;
        out[t] = pol.plus(out[t], pol.times(d, row[t]));
      }
    }
    u = std::move(out);
  }

  int rescale(std::vector<V>& v) {
    double mx = 0;
    for (const auto& x : v) mx = std::max(mx, pol.mag(x));
    if (mx <= 0.0 || (mx > 1e-60 && mx < 1e60)) return 0;
    int e = std::ilogb(mx);
    for (auto& x : v) x = pol.scale2(x, -e);
    return e;
  }

  int rescale_terms(NodeRes& r) {
    double mx = 0;
    for (auto& [col, row] : r.terms) {
      double mc = 0, mr = 0;
      for (auto& x : col) mc = std::max(mc, pol.mag(x));
      for (auto& x : row) mr = std::max(mr, pol.mag(x));
      mx = std::max(mx, mc * mr);
    }
    if (mx <= 0.0 || (mx > 1e-60 && mx < 1e60)) return 0;
    int e = std::ilogb(mx);
    for (auto& [col, row] : r.terms)
      for (auto& x : col) x = pol.scale2(x, -e);
    return e;
  }

  NodeRes in_node(int w) {
    const ViewNode& nd = view.nodes[size_t(w - 1)];
    std::vector<V> a = pol.rho_vec(nd.head_slot - 1);
    int ex = 0;
    for (auto it = nd.left_children.rbegin(); it != nd.left_children.rend();
         ++it) {
      NodeRes c = in_node(*it);
      apply_col(c, a);
      ex += c.ex + rescale(a);
    }
    std::vector<V> b = pol.lambda_vec(nd.head_slot);
    for (int cw : nd.right_children) {
      NodeRes c = in_node(cw);
      apply_row(c, b);
      ex += c.ex + rescale(b);
    }
    NodeRes res;
    res.ex = ex;
    res.terms.reserve(nd.pairs.size());
    for (size_t pi = 0; pi < nd.pairs.size(); ++pi) {
      std::vector<V> col = a;
      pol.apply_puncteme_col(nd.lo, nd.pairs[pi].left, col);
      std::vector<V> row = b;
      pol.apply_puncteme_row(nd.hi, nd.pairs[pi].right, row);
      V coef = pol.attach_value(w, int(pi));
      for (auto& x : col)
        if (!pol.is_zero(x)) x = pol.times(coef, x);
      res.terms.emplace_back(std::move(col), std::move(row));
    }
    res.ex += rescale_terms(res);
    return res;
  }

  std::pair<V, int> run() {
    NodeRes r = in_node(view.root);
    std::vector<V> rho = pol.rho_vec(view.n);
    V tot = pol.zero();
    for (const auto& [col, row] : r.terms) {
      if (pol.is_zero(col[0])) continue;
      V d = dot(row, rho);
      if (pol.is_zero(d)) continue;
      tot = pol.plus(tot, pol.times(col[0], d));
    }
    return {tot, r.ex};
  }
};

// ---- ring policy (sum-type semirings: double, Ad, expectation pairs) ------

template <class Ring>
struct RingPolicy {
  using V = typename Ring::V;
  Ring ring;
  const ProblemView* view = nullptr;
  const EditWeights<Ring>* edits = nullptr;
  std::vector<std::vector<V>> attach;  // [node-1][pair]

  V zero() const { return ring.zero(); }
  V plus(const V& x, const V& y) { return ring.plus(x, y); }
  V times(const V& x, const V& y) { return ring.times(x, y); }
  bool is_zero(const V& x) const { return ring.is_zero(x); }
  double mag(const V& x) const { return ring.mag(x); }
  V scale2(const V& x, int e) const { return ring.scale2(x, e); }

  std::vector<V> rho_vec(int slot) const {
    const SlotAutomaton& sa = *view->automata[size_t(slot)];
    std::vector<V> v(size_t(sa.n_states), ring.zero());
    for (int s : sa.rho_states) v[size_t(s)] = ring.one();
    return v;
  }
  std::vector<V> lambda_vec(int slot) const {
    const SlotAutomaton& sa = *view->automata[size_t(slot)];
    std::vector<V> v(size_t(sa.n_states), ring.zero());
    if (!v.empty()) v[0] = ring.one();
    return v;
  }
  void apply_puncteme_col(int slot, std::span<const int> toks,
                          std::vector<V>& v) {
    const SlotAutomaton& sa = *view->automata[size_t(slot)];
    for (auto it = toks.rbegin(); it != toks.rend(); ++it) {
      std::vector<V> out(size_t(sa.n_states), ring.zero());
      slot_apply_col(sa, *it, *edits, ring, std::span<const V>(v),
                     std::span<V>(out));
      v = std::move(out);
    }
  }
  void apply_puncteme_row(int slot, std::span<const int> toks,
                          std::vector<V>& v) {
    const SlotAutomaton& sa = *view->automata[size_t(slot)];
    for (int tok : toks) {
      std::vector<V> out(size_t(sa.n_states), ring.zero());
      slot_apply_row(sa, tok, *edits, ring, std::span<const V>(v),
                     std::span<V>(out));
      v = std::move(out);
    }
  }
  V attach_value(int w, int pi) const {
    return attach[size_t(w - 1)][size_t(pi)];
  }
};

// ---- derivation / sampling policy ------------------------------------------

// Values are (score, derivation) where the derivation is an arena node:
// either a (tree node, pair index) choice or a concatenation. The best (or
// sampled) extended derivation fixes the punctemes and the edit path.
struct DerivArena {
  struct DNode {
    int32_t node, pair, x, y;
  };
  std::vector<DNode> nodes;
  DerivArena() { nodes.push_back({-1, -1, -1, -1}); }
  int32_t empty() const { return 0; }
  int32_t choice(int w, int pi) {
    nodes.push_back({int32_t(w), int32_t(pi), -1, -1});
    return int32_t(nodes.size() - 1);
  }
  int32_t cat(int32_t a, int32_t b) {
    if (a == 0) return b;
    if (b == 0) return a;
    nodes.push_back({-1, -1, a, b});
    return int32_t(nodes.size() - 1);
  }
  void collect(int32_t d, std::vector<std::pair<int, int>>& out) const {
    std::vector<int32_t> stack{d};
    while (!stack.empty()) {
      int32_t k = stack.back();
      stack.pop_back();
      if (k <= 0) continue;
      const DNode& nd = nodes[size_t(k)];
      if (nd.node >= 0)
        out.emplace_back(nd.node, nd.pair);
      else {
        stack.push_back(nd.x);
        stack.push_back(nd.y);
      }
    }
  }
};

template <bool kSample>
struct StructPolicy {
  struct V {
    double sc;
    int32_t d;
  };
  const ProblemView* view = nullptr;
  const EditWeights<DoubleRing>* edits = nullptr;
  std::vector<std::vector<double>> attach_probs;
  DerivArena arena;
  Rng* rng = nullptr;

  V zero() const { return {0.0, -1}; }
  bool is_zero(const V& x) const { return x.d < 0; }
  V plus(const V& x, const V& y) {
    if (x.d < 0) return y;
    if (y.d < 0) return x;
    if constexpr (kSample) {
      double tot = x.sc + y.sc;
      if (!(tot > 0.0)) return {0.0, x.d};
      return rng->next_double() * tot < x.sc ? V{tot, x.d} : V{tot, y.d};
    } else {
      return x.sc >= y.sc ? x : y;  // ties toward the left argument
    }
  }
  V times(const V& x, const V& y) {
    if (x.d < 0 || y.d < 0) return zero();
    return {x.sc * y.sc, arena.cat(x.d, y.d)};
  }
  double mag(const V& x) const { return x.d < 0 ? 0.0 : std::fabs(x.sc); }
  V scale2(const V& x, int e) const {
    return x.d < 0 ? x : V{std::ldexp(x.sc, e), x.d};
  }

  std::vector<V> rho_vec(int slot) const {
    const SlotAutomaton& sa = *view->automata[size_t(slot)];
    std::vector<V> v(size_t(sa.n_states), zero());
    for (int s : sa.rho_states) v[size_t(s)] = {1.0, 0};
    return v;
  }
  std::vector<V> lambda_vec(int slot) const {
    const SlotAutomaton& sa = *view->automata[size_t(slot)];
    std::vector<V> v(size_t(sa.n_states), zero());
    if (!v.empty()) v[0] = {1.0, 0};
    return v;
  }
  void apply_puncteme_col(int slot, std::span<const int> toks,
                          std::vector<V>& v) {
    const SlotAutomaton& sa = *view->automata[size_t(slot)];
    for (auto it = toks.rbegin(); it != toks.rend(); ++it) {
      std::vector<V> out(size_t(sa.n_states), zero());
      if (*it >= 0 && size_t(*it) < sa.arcs_by_token.size()) {
        for (const auto& arc : sa.arcs_by_token[size_t(*it)]) {
          const V& src = v[size_t(arc.to)];
          if (src.d < 0) continue;
          double w = edits->weight(arc.kind, arc.a, arc.b);
          if (w == 0.0) continue;
          out[size_t(arc.from)] =
              plus(out[size_t(arc.from)], V{w * src.sc, src.d});
        }
      }
      v = std::move(out);
    }
  }
  void apply_puncteme_row(int slot, std::span<const int> toks,
                          std::vector<V>& v) {
    const SlotAutomaton& sa = *view->automata[size_t(slot)];
    for (int tok : toks) {
      std::vector<V> out(size_t(sa.n_states), zero());
      if (tok >= 0 && size_t(tok) < sa.arcs_by_token.size()) {
        for (const auto& arc : sa.arcs_by_token[size_t(tok)]) {
          const V& src = v[size_t(arc.from)];
          if (src.d < 0) continue;
          double w = edits->weight(arc.kind, arc.a, arc.b);
          if (w == 0.0) continue;
          out[size_t(arc.to)] = plus(out[size_t(arc.to)], V{src.sc * w, src.d});
        }
      }
      v = std::move(out);
    }
  }
  V attach_value(int w, int pi) {
    return {attach_probs[size_t(w - 1)][size_t(pi)], arena.choice(w, pi)};
  }
};

std::vector<std::vector<double>> attach_tables_double(
    const Model& m, const PreparedSentence& ps) {
  std::vector<std::vector<double>> out(ps.nodes.size());
  for (size_t w = 0; w < ps.nodes.size(); ++w) {
    const auto& pairs = ps.nodes[w].pairs;
    std::vector<double> scores(pairs.size(), 0.0);
    for (size_t pi = 0; pi < pairs.size(); ++pi)
      for (int f : pairs[pi].feats) scores[pi] += m.theta.weights[size_t(f)];
    out[w] = softmax(scores);
  }
  return out;
}

template <class Base>
EditWeights<PairRing<Base>> lift_pair_weights(const PairRing<Base>& ring,
                                              const EditWeights<Base>& src) {
  EditWeights<PairRing<Base>> w;
  w.sigma = src.sigma;
  w.identity = src.identity;
  w.probs.resize(src.probs.size());
  for (size_t i = 0; i < src.probs.size(); ++i)
    for (size_t k = 0; k < 4; ++k)
      w.probs[i][k] = {src.probs[i][k], ring.base.zero()};
  return w;
}

}  // namespace

InsideResult inside(Model& m, const PreparedSentence& ps) {
  InsideResult res;
  auto tables = attach_tables_double(m, ps);
  for (size_t w = 0; w < ps.nodes.size(); ++w)
    for (size_t pi = 0; pi < ps.nodes[w].pairs.size(); ++pi)
      res.prior_unmatched += tables[w][pi] * ps.nodes[w].pairs[pi].unmatched;
  if (!ps.tokens_known) return res;

  ProblemView view = make_view(m, ps);
  DoubleRing dr;
  EditWeights<DoubleRing> base_w = make_edit_weights(dr, m.channel);
  PairRing<DoubleRing> pr;
  EditWeights<PairRing<DoubleRing>> pw = lift_pair_weights(pr, base_w);
  pw.ring = &pr;

  RingPolicy<PairRing<DoubleRing>> pol;
  pol.ring = pr;
  pol.view = &view;
  pol.edits = &pw;
  pol.attach.resize(ps.nodes.size());
  for (size_t w = 0; w < ps.nodes.size(); ++w) {
    pol.attach[w].resize(ps.nodes[w].pairs.size());
    for (size_t pi = 0; pi < ps.nodes[w].pairs.size(); ++pi) {
      double p = tables[w][pi];
      double c = ps.nodes[w].pairs[pi].unmatched;
      pol.attach[w][pi] = {p, p * c};
    }
  }
  Engine<RingPolicy<PairRing<DoubleRing>>> eng{pol, view};
  auto [tot, ex] = eng.run();
  if (!(tot.p > 0.0)) return res;
  res.explainable = true;
  res.mantissa = tot.p;
  res.exponent2 = ex;
  res.log_likelihood = std::log(tot.p) + double(ex) * M_LN2;
  res.expected_unmatched = tot.e / tot.p;
  return res;
}

namespace {

template <bool kSample>
std::pair<typename StructPolicy<kSample>::V, int> run_struct(
    Model& m, const PreparedSentence& ps, const ProblemView& view,
    StructPolicy<kSample>& pol, Rng* rng) {
  DoubleRing dr;
  EditWeights<DoubleRing> weights = make_edit_weights(dr, m.channel);
  pol.view = &view;
  pol.edits = &weights;
  pol.attach_probs = attach_tables_double(m, ps);
  pol.rng = rng;
  Engine<StructPolicy<kSample>> eng{pol, view};
  return eng.run();
}

PunctTree tree_from_derivation(const DerivArena& arena, int32_t d,
                               const PreparedSentence& ps) {
  PunctTree pt;
  pt.punctemes.assign(ps.nodes.size(), {0, 0});
  std::vector<std::pair<int, int>> choices;
  arena.collect(d, choices);
  for (auto [w, pi] : choices) {
    const PreparedPair& pp = ps.nodes[size_t(w - 1)].pairs[size_t(pi)];
    pt.punctemes[size_t(w - 1)] = {pp.l, pp.r};
  }
  return pt;
}

}  // namespace

ViterbiResult viterbi_underlying(Model& m, const PreparedSentence& ps) {
  ViterbiResult res;
  if (!ps.tokens_known) return res;
  ProblemView view = make_view(m, ps);
  StructPolicy<false> pol;
  auto [tot, ex] = run_struct<false>(m, ps, view, pol, nullptr);
  if (tot.d < 0 || !(tot.sc > 0.0)) return res;
  res.ok = true;
  res.mantissa = tot.sc;
  res.exponent2 = ex;
  res.log_score = std::log(tot.sc) + double(ex) * M_LN2;
  res.tree = tree_from_derivation(pol.arena, tot.d, ps);
  return res;
}

PunctTree sample_underlying(Model& m, const PreparedSentence& ps, Rng& rng) {
  if (!ps.tokens_known)
    throw std::runtime_error("sample_underlying: sentence has likelihood 0");
  ProblemView view = make_view(m, ps);
  StructPolicy<true> pol;
  auto [tot, ex] = run_struct<true>(m, ps, view, pol, &rng);
  (void)ex;
  if (tot.d < 0 || !(tot.sc > 0.0))
    throw std::runtime_error("sample_underlying: sentence has likelihood 0");
  return tree_from_derivation(pol.arena, tot.d, ps);
}

SentenceTape inside_on_tape(Model& m, const PreparedSentence& ps, Tape& tape) {
  SentenceTape st;
  AdRing ar{&tape};

  std::unordered_map<int, Ad> leaf_by_feat;
  auto leaf_of = [&](int fid) {
    auto it = leaf_by_feat.find(fid);
    if (it != leaf_by_feat.end()) return it->second;
    Ad l = tape.leaf(m.theta.weights[size_t(fid)]);
    leaf_by_feat.emplace(fid, l);
    st.theta_leaves.emplace_back(fid, l);
    return l;
  };

  // attach softmaxes on the tape, plus the literal prior-weighted count
  std::vector<std::vector<Ad>> attach_ad(ps.nodes.size());
  Ad prior = tape.zero();
  for (size_t w = 0; w < ps.nodes.size(); ++w) {
    const auto& pairs = ps.nodes[w].pairs;
    std::vector<Ad> scores(pairs.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (size_t pi = 0; pi < pairs.size(); ++pi) {
      Ad s = tape.zero();
      for (int f : pairs[pi].feats) s = tape.add(s, leaf_of(f));
      scores[pi] = s;
      mx = std::max(mx, tape.val(s));
    }
    Ad z = tape.zero();
    std::vector<Ad> exps(pairs.size());
    Ad shift = tape.cst(mx);
    for (size_t pi = 0; pi < pairs.size(); ++pi) {
      exps[pi] = tape.exp_(tape.sub(scores[pi], shift));
      z = tape.add(z, exps[pi]);
    }
    attach_ad[w].resize(pairs.size());
    for (size_t pi = 0; pi < pairs.size(); ++pi) {
      attach_ad[w][pi] = tape.div(exps[pi], z);
      if (pairs[pi].unmatched != 0.0)
        prior = tape.add(
            prior, tape.mul(attach_ad[w][pi], tape.cst(pairs[pi].unmatched)));
    }
  }
  st.prior_unmatched = prior;
  if (!ps.tokens_known) return st;

  ProblemView view = make_view(m, ps);

  // channel softmaxes for the bigrams this sentence's automata touch
  EditWeights<AdRing> ew;
  ew.ring = &ar;
  ew.sigma = m.channel.sigma;
  ew.identity = m.channel.identity;
  if (!ew.identity) {
    ew.probs.resize(size_t(m.channel.sigma) * size_t(m.channel.sigma));
    std::map<std::pair<int, int>, bool> touched;
    for (const auto* sa : view.automata)
      for (auto bg : sa->bigrams)
        if (touched.emplace(bg, true).second) {
          auto [a, b] = bg;
          const auto& raw = m.channel.at(a, b);
          std::array<Ad, 4> leaves;
          double mx = std::max(std::max(raw[0], raw[1]),
                               std::max(raw[2], raw[3]));
          Ad shift = tape.cst(mx);
          std::array<Ad, 4> exps;
          Ad z = tape.zero();
          for (int k = 0; k < 4; ++k) {
            leaves[size_t(k)] = tape.leaf(raw[size_t(k)]);
            exps[size_t(k)] = tape.exp_(tape.sub(leaves[size_t(k)], shift));
            z = tape.add(z, exps[size_t(k)]);
          }
          auto& out = ew.probs[size_t(m.channel.bigram(a, b))];
          for (int k = 0; k < 4; ++k) out[size_t(k)] = tape.div(exps[size_t(k)], z);
          st.phi_leaves.push_back({{a, b}, leaves});
        }
  }

  PairRing<AdRing> pr{ar};
  EditWeights<PairRing<AdRing>> pw = lift_pair_weights(pr, ew);
  pw.ring = &pr;

  RingPolicy<PairRing<AdRing>> pol;
  pol.ring = pr;
  pol.view = &view;
  pol.edits = &pw;
  pol.attach.resize(ps.nodes.size());
  for (size_t w = 0; w < ps.nodes.size(); ++w) {
    pol.attach[w].resize(ps.nodes[w].pairs.size());
    for (size_t pi = 0; pi < ps.nodes[w].pairs.size(); ++pi) {
      double c = ps.nodes[w].pairs[pi].unmatched;
      Ad p = attach_ad[w][pi];
      pol.attach[w][pi] = {p, c == 0.0 ? tape.zero() : tape.mul(p, tape.cst(c))};
    }
  }
  Engine<RingPolicy<PairRing<AdRing>>> eng{pol, view};
  auto [tot, ex] = eng.run();
  if (!(tape.val(tot.p) > 0.0)) return st;
  st.explainable = true;
  st.exponent2 = ex;
  st.log_likelihood = tape.add(tape.log_(tot.p), tape.cst(double(ex) * M_LN2));
  st.expected_unmatched = tape.div(tot.e, tot.p);
  return st;
}

// ---- reading punctemes off a tree -----------------------------------------

namespace {

std::vector<std::string> slot_underlying(const AnnotatedSentence& sent,
                                         const PunctTree& pt,
                                         const PunctemeVocab& vocab, int s) {
  const DepTree& tree = sent.tree;
  std::vector<std::pair<int, int>> enders, starters;  // (width, node)
  for (const auto& nd : tree.nodes) {
    if (nd.span_hi == s) enders.emplace_back(nd.span_hi - nd.span_lo, nd.index);
    if (nd.span_lo == s) starters.emplace_back(nd.span_hi - nd.span_lo, nd.index);
  }
  std::sort(enders.begin(), enders.end());    // innermost first
  std::sort(starters.begin(), starters.end(),
            [](auto& a, auto& b) { return a.first > b.first; });  // outermost
  std::vector<std::string> u;
  for (auto [width, w] : enders) {
    int r = pt.punctemes[size_t(w - 1)].second;
    const auto& toks = vocab.punctemes[size_t(r)];
    u.insert(u.end(), toks.begin(), toks.end());
  }
  for (auto [width, w] : starters) {
    int l = pt.punctemes[size_t(w - 1)].first;
    const auto& toks = vocab.punctemes[size_t(l)];
    u.insert(u.end(), toks.begin(), toks.end());
  }
  return u;
}

}  // namespace

std::vector<std::vector<std::string>> underlying_slots(
    const AnnotatedSentence& sent, const PunctTree& pt,
    const PunctemeVocab& vocab) {
  const int n = sent.tree.n();
  std::vector<std::vector<std::string>> u(size_t(n) + 1);
  for (int s = 0; s <= n; ++s) u[size_t(s)] = slot_underlying(sent, pt, vocab, s);
  return u;
}

GenerateResult generate(Model& m, const DepTree& tree, Rng& rng,
                        const ErrorfulPunctemes* errorful) {
  const int n = tree.n();
  GenerateResult g;
  g.tree.punctemes.assign(size_t(n), {0, 0});
  AnnotatedSentence work;
  work.tree = tree;
  work.slots.assign(size_t(n) + 1, {});

  auto fill_slot = [&](int s) {
    std::vector<std::string> u = slot_underlying(work, g.tree, m.vocab, s);
    std::vector<int> ids;
    ids.reserve(u.size());
    for (const auto& tok : u) ids.push_back(m.token_id(tok));
    std::vector<int> x = simulate(ids, m.channel, rng);
    std::vector<std::string> xs;
    xs.reserve(x.size());
    for (int t : x) xs.push_back(m.sigma[size_t(t)]);
    work.slots[size_t(s)] = std::move(xs);
  };

  std::function<void(int)> process = [&](int w) {
    const DepNode& nd = tree.at(w);
    for (int c : nd.left_children) process(c);
    for (int c : nd.right_children) process(c);
    for (int s = nd.span_lo + 1; s <= nd.span_hi - 1; ++s) {
      bool in_child = false;
      for (int c : nd.left_children) {
        const DepNode& cn = tree.at(c);
        if (s > cn.span_lo && s < cn.span_hi) in_child = true;
      }
      for (int c : nd.right_children) {
        const DepNode& cn = tree.at(c);
        if (s > cn.span_lo && s < cn.span_hi) in_child = true;
      }
      if (!in_child) fill_slot(s);
    }
    NodeContext ctx = make_node_context(work, w);
    const auto& inventory = m.vocab.pairs_for(nd.deprel);
    std::vector<double> scores(inventory.size(), 0.0);
    for (size_t pi = 0; pi < inventory.size(); ++pi) {
      const auto& lp = m.vocab.punctemes[size_t(inventory[pi].first)];
      const auto& rp = m.vocab.punctemes[size_t(inventory[pi].second)];
      std::vector<std::string> names =
          (m.correction_mode && errorful)
              ? correction_features(lp, rp, ctx, m.sym_table,
                                    (*errorful)[size_t(w - 1)].first,
                                    (*errorful)[size_t(w - 1)].second)
              : extract_features(lp, rp, ctx, m.sym_table);
      for (const auto& nm : names) scores[pi] += m.theta.weight(nm);
    }
    std::vector<double> probs = softmax(scores);
    double r = rng.next_double();
    size_t k = probs.size() - 1;
    for (size_t pi = 0; pi < probs.size(); ++pi) {
      if (r < probs[pi]) {
        k = pi;
        break;
      }
      r -= probs[pi];
    }
    g.tree.punctemes[size_t(w - 1)] = inventory[k];
  };
  process(tree.root);
  fill_slot(0);
  if (n > 0) fill_slot(n);

  g.underlying = underlying_slots(work, g.tree, m.vocab);
  g.surface = work.slots;
  return g;
}

std::string bracket_string(const AnnotatedSentence& sent, const PunctTree& pt,
                           const PunctemeVocab& vocab) {
  const DepTree& tree = sent.tree;
  std::function<std::string(int)> rec = [&](int w) -> std::string {
    const DepNode& nd = tree.at(w);
    auto [l, r] = pt.punctemes[size_t(w - 1)];
    std::string s = "[";
    const auto& lp = vocab.punctemes[size_t(l)];
    for (const auto& t : lp) {
      s += t;
      s += ' ';
    }
    bool first = true;
    std::vector<int> items = nd.left_children;
    items.push_back(w);
    items.insert(items.end(), nd.right_children.begin(),
                 nd.right_children.end());
    for (int it : items) {
      if (!first) s += ' ';
      first = false;
      s += it == w ? nd.form : rec(it);
    }
    const auto& rp = vocab.punctemes[size_t(r)];
    for (const auto& t : rp) {
      s += ' ';
      s += t;
    }
    s += "]";
    return s;
  };
  return rec(tree.root);
}

}  // namespace punct
