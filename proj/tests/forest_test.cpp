#include <doctest.h>

#include <cmath>
#include <map>

#include "oracles.hpp"
#include "punct/forest.hpp"

using namespace punct;
using namespace punct::testing;

namespace {

std::vector<std::string> toks(std::initializer_list<const char*> v) {
  std::vector<std::string> out;
  for (const char* s : v) out.emplace_back(s);
  return out;
}

// one-word tree with a forced (eps, ".") attachment and identity channel
TestInstance forced_instance() {
  TestInstance inst;
  PunctemeVocab v;
  int dot = v.intern_puncteme(toks({"."}));
  v.intern_deprel("root");
  v.add_pair("root", 0, dot);
  inst.model.vocab = v;
  inst.model.rebuild_alphabet();
  inst.model.channel.identity = true;

  inst.sent = std::make_unique<AnnotatedSentence>();
  DepTree& t = inst.sent->tree;
  DepNode nd;
  nd.index = 1;
  nd.form = "w";
  nd.upos = "NOUN";
  nd.head = 0;
  nd.deprel = "root";
  t.nodes.push_back(nd);
  std::string reason;
  REQUIRE(finish_tree(t, &reason));
  inst.sent->slots = {{}, {"."}};
  inst.prep = prepare_sentence(inst.model, *inst.sent, 0, true);
  return inst;
}

}  // namespace

TEST_CASE("underlying_slots matches the Figure-1 reading") {
  auto sent = annotated_from_conllu(
      "1\t“\t_\tPUNCT\t_\t_\t2\tpunct\t_\t_\n"
      "2\tDale\t_\tNOUN\t_\t_\t4\tnsubj\t_\t_\n"
      "3\t”\t_\tPUNCT\t_\t_\t2\tpunct\t_\t_\n"
      "4\tmeans\t_\tVERB\t_\t_\t0\troot\t_\t_\n"
      "5\t“\t_\tPUNCT\t_\t_\t7\tpunct\t_\t_\n"
      "6\triver\t_\tNOUN\t_\t_\t7\tcompound\t_\t_\n"
      "7\tvalley\t_\tNOUN\t_\t_\t4\tobj\t_\t_\n"
      "8\t”\t_\tPUNCT\t_\t_\t7\tpunct\t_\t_\n");
  PunctemeVocab v;
  int lq = v.intern_puncteme(toks({"“"}));
  int rq = v.intern_puncteme(toks({"”"}));
  PunctTree pt;
  // nodes: Dale, means, river, valley
  pt.punctemes = {{lq, rq}, {0, 0}, {0, 0}, {lq, rq}};
  auto u = underlying_slots(sent, pt, v);
  REQUIRE(u.size() == 5);
  CHECK(u[0] == toks({"“"}));
  CHECK(u[1] == toks({"”"}));
  CHECK(u[2] == toks({"“"}));
  CHECK(u[3] == toks({}));
  CHECK(u[4] == toks({"”"}));
  CHECK(bracket_string(sent, pt, v) ==
        "[[“ Dale ”] means [“ [river] valley ”]]");

  SUBCASE("all-empty punctemes give all-empty slots") {
    PunctTree none;
    none.punctemes = {{0, 0}, {0, 0}, {0, 0}, {0, 0}};
    for (const auto& slot : underlying_slots(sent, none, v))
      CHECK(slot.empty());
  }
}

TEST_CASE("adjacent enders and starters order inner-to-outer at one slot") {
  auto sent = annotated_from_conllu(
      "1\ta\t_\tNOUN\t_\t_\t0\troot\t_\t_\n"
      "2\tb\t_\tNOUN\t_\t_\t1\tdep\t_\t_\n"
      "3\tc\t_\tNOUN\t_\t_\t4\tdep\t_\t_\n"
      "4\td\t_\tNOUN\t_\t_\t1\tdep\t_\t_\n");
  PunctemeVocab v;
  int comma = v.intern_puncteme(toks({","}));
  int semi = v.intern_puncteme(toks({";"}));
  PunctTree pt;
  // b ends at slot 2 with right ","; d starts at slot 2 with left ";"
  pt.punctemes = {{0, 0}, {0, comma}, {0, 0}, {semi, 0}};
  auto u = underlying_slots(sent, pt, v);
  CHECK(u[2] == toks({",", ";"}));  // ender (inner-first) then starter
}

TEST_CASE("forced one-word derivation has likelihood 1") {
  TestInstance inst = forced_instance();
  InsideResult r = inside(inst.model, inst.prep);
  REQUIRE(r.explainable);
  CHECK(r.log_likelihood == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(r.expected_unmatched == doctest::Approx(0.0));

  SUBCASE("a mark outside the alphabet is unexplainable") {
    inst.sent->slots = {{}, {","}};
    PreparedSentence ps = prepare_sentence(inst.model, *inst.sent, 0, false);
    CHECK(!ps.tokens_known);
    InsideResult r2 = inside(inst.model, ps);
    CHECK(!r2.explainable);
  }
  SUBCASE("an in-alphabet surface the channel cannot reach has likelihood 0") {
    inst.sent->slots = {{"."}, {"."}};  // slot 0 must be empty underlyingly
    PreparedSentence ps = prepare_sentence(inst.model, *inst.sent, 0, false);
    CHECK(ps.tokens_known);
    InsideResult r2 = inside(inst.model, ps);
    CHECK(!r2.explainable);
    CHECK(r2.mantissa == 0.0);
  }
}

TEST_CASE("inside matches brute-force enumeration on random instances") {
  int nonzero = 0;
  for (uint64_t seed = 1; seed <= 40; ++seed) {
    InstanceConfig cfg;
    cfg.surface_from_model = seed % 2 == 0;
    cfg.direction = seed % 3 == 0 ? Direction::R2L : Direction::L2R;
    TestInstance inst = random_instance(seed, cfg);
    BruteInside oracle = brute_inside(inst.model, inst.prep);
    InsideResult got = inside(inst.model, inst.prep);
    if (oracle.likelihood > 0) {
      ++nonzero;
      REQUIRE(got.explainable);
      double lik = got.mantissa * std::pow(2.0, got.exponent2);
      CHECK(lik == doctest::Approx(oracle.likelihood).epsilon(1e-9));
      CHECK(got.expected_unmatched ==
            doctest::Approx(oracle.expected_unmatched).epsilon(1e-9));
    } else {
      CHECK(!got.explainable);
    }
    CHECK(got.prior_unmatched ==
          doctest::Approx(oracle.prior_unmatched).epsilon(1e-9));
  }
  CHECK(nonzero >= 10);
}

TEST_CASE("viterbi matches the brute-force best extended derivation") {
  int checked = 0;
  for (uint64_t seed = 100; seed < 140; ++seed) {
    InstanceConfig cfg;
    cfg.surface_from_model = true;
    cfg.direction = seed % 2 == 0 ? Direction::R2L : Direction::L2R;
    TestInstance inst = random_instance(seed, cfg);
    BruteInside oracle = brute_inside(inst.model, inst.prep);
    ViterbiResult got = viterbi_underlying(inst.model, inst.prep);
    if (oracle.likelihood <= 0) {
      CHECK(!got.ok);
      continue;
    }
    REQUIRE(got.ok);
    double score = got.mantissa * std::pow(2.0, got.exponent2);
    CHECK(score == doctest::Approx(oracle.best_score).epsilon(1e-9));
    InsideResult ir = inside(inst.model, inst.prep);
    double lik = ir.mantissa * std::pow(2.0, ir.exponent2);
    CHECK(score <= lik * (1 + 1e-12));
    if (oracle.best_score > oracle.second_best_score * (1 + 1e-9) + 1e-300) {
      ++checked;
      CHECK(got.tree.punctemes == oracle.best_assignment);
    }
  }
  CHECK(checked >= 10);
}

TEST_CASE("two-assignment viterbi picks the heavier one") {
  TestInstance inst = forced_instance();
  inst.model.vocab.add_pair("root", 0, 0);
  inst.prep = prepare_sentence(inst.model, *inst.sent, 0, true);
  ViterbiResult vr = viterbi_underlying(inst.model, inst.prep);
  REQUIRE(vr.ok);
  CHECK(inst.model.vocab.punctemes[size_t(vr.tree.punctemes[0].second)] ==
        toks({"."}));
  double lik = inside(inst.model, inst.prep).mantissa;
  CHECK(vr.mantissa == doctest::Approx(lik));  // point-mass posterior
}

TEST_CASE("posterior sampling matches enumerated posteriors") {
  TestInstance forced = forced_instance();
  Rng rng(1);
  PunctTree pt = sample_underlying(forced.model, forced.prep, rng);
  for (int k = 0; k < 20; ++k)
    CHECK(sample_underlying(forced.model, forced.prep, rng).punctemes ==
          pt.punctemes);

  int found = 0;
  for (uint64_t seed = 300; seed < 400 && found < 3; ++seed) {
    InstanceConfig cfg;
    cfg.surface_from_model = true;
    TestInstance inst = random_instance(seed, cfg);
    BruteInside oracle = brute_inside(inst.model, inst.prep);
    if (oracle.likelihood <= 0 || oracle.posterior.size() < 2) continue;
    ++found;
    const int draws = 10000;
    std::map<std::vector<std::pair<int, int>>, int> freq;
    Rng srng(seed * 17 + 1);
    for (int k = 0; k < draws; ++k)
      ++freq[sample_underlying(inst.model, inst.prep, srng).punctemes];
    double chi2 = 0;
    int dof = -1;
    for (auto& [assignment, p] : oracle.posterior) {
      double expect = p * draws;
      if (expect < 5) continue;
      double diff = freq[assignment] - expect;
      chi2 += diff * diff / expect;
      ++dof;
    }
    if (dof >= 1) CHECK(chi2 < 30.0 + 2.5 * dof);
  }
  CHECK(found >= 2);
}

TEST_CASE("sampling a zero-likelihood sentence throws") {
  TestInstance inst = forced_instance();
  inst.sent->slots = {{"."}, {"."}};
  PreparedSentence ps = prepare_sentence(inst.model, *inst.sent, 0, false);
  Rng rng(4);
  CHECK_THROWS(sample_underlying(inst.model, ps, rng));
}

TEST_CASE("generate: identity channel copies the underlying punctuation") {
  InstanceConfig cfg;
  TestInstance inst = random_instance(7, cfg);
  inst.model.channel.identity = true;
  Rng rng(9);
  for (int k = 0; k < 25; ++k) {
    GenerateResult g = generate(inst.model, inst.sent->tree, rng);
    CHECK(g.surface == g.underlying);
    inst.sent->slots = g.surface;
    PreparedSentence ps = prepare_sentence(inst.model, *inst.sent, 0, true);
    InsideResult r = inside(inst.model, ps);
    CHECK(r.explainable);
  }
}

TEST_CASE("generate: attachment frequencies follow the attach distribution") {
  TestInstance inst = forced_instance();
  inst.model.vocab.add_pair("root", 0, 0);
  inst.prep = prepare_sentence(inst.model, *inst.sent, 0, true);
  NodeContext ctx = make_node_context(*inst.sent, 1);
  auto f = extract_features({}, toks({"."}), ctx, inst.model.sym_table);
  REQUIRE(!f.empty());
  inst.model.theta.weights[size_t(inst.model.theta.intern(f[0]))] =
      std::log(4.0);
  const int draws = 100000;
  Rng rng(31337);
  int hits = 0;
  for (int k = 0; k < draws; ++k) {
    GenerateResult g = generate(inst.model, inst.sent->tree, rng);
    if (!g.underlying[1].empty()) ++hits;
  }
  double p = 0.8, emp = double(hits) / draws;
  double se = std::sqrt(p * (1 - p) / draws);
  CHECK(std::fabs(emp - p) <= 3 * se);
}

TEST_CASE("generated sentences always have positive inside likelihood") {
  for (uint64_t seed = 500; seed < 520; ++seed) {
    InstanceConfig cfg;
    TestInstance inst = random_instance(seed, cfg);
    Rng rng(seed);
    GenerateResult g = generate(inst.model, inst.sent->tree, rng);
    inst.sent->slots = g.surface;
    PreparedSentence ps = prepare_sentence(inst.model, *inst.sent, 1, true);
    InsideResult r = inside(inst.model, ps);
    CHECK(r.explainable);
  }
}

TEST_CASE("long chains do not underflow thanks to the scaling exponents") {
  PunctemeVocab v;
  int comma = v.intern_puncteme(toks({","}));
  v.add_pair("root", 0, comma);
  v.add_pair("dep", 0, comma);
  v.add_pair("dep", 0, 0);
  v.add_pair("root", 0, 0);
  Model m;
  m.vocab = v;
  m.rebuild_alphabet();
  m.channel.identity = true;

  const int n = 400;
  AnnotatedSentence sent;
  sent.tree.nodes.resize(size_t(n));
  for (int i = 1; i <= n; ++i) {
    DepNode nd;
    nd.index = i;
    nd.form = "w";
    nd.upos = "NOUN";
    nd.head = i == n ? 0 : i + 1;  // left-branching chain
    nd.deprel = i == n ? "root" : "dep";
    sent.tree.nodes[size_t(i - 1)] = nd;
  }
  std::string reason;
  REQUIRE(finish_tree(sent.tree, &reason));
  sent.slots.assign(size_t(n) + 1, {});
  for (int s = 1; s <= n; ++s) sent.slots[size_t(s)] = {","};
  PreparedSentence ps = prepare_sentence(m, sent, 0, true);
  InsideResult r = inside(m, ps);
  REQUIRE(r.explainable);
  // every node must attach (eps, ","): probability 1/2 each under zero
  // weights, so the exact log-likelihood is n log(1/2); a naive product
  // would have underflowed to 0 long before n = 400
  CHECK(r.log_likelihood == doctest::Approx(n * std::log(0.5)).epsilon(1e-9));
  CHECK(std::isfinite(r.log_likelihood));
  ViterbiResult vr = viterbi_underlying(m, ps);
  REQUIRE(vr.ok);
  CHECK(vr.log_score == doctest::Approx(n * std::log(0.5)).epsilon(1e-9));
}

TEST_CASE("semiring laws hold on randomized elements") {
  Rng rng(9001);
  auto rnd = [&] { return rng.next_double() * 2.0; };

  SUBCASE("expectation pairs") {
    PairRing<DoubleRing> ring;
    for (int k = 0; k < 200; ++k) {
      PairRing<DoubleRing>::V a{rnd(), rnd()}, b{rnd(), rnd()}, c{rnd(), rnd()};
      auto ab_c = ring.plus(ring.plus(a, b), c);
      auto a_bc = ring.plus(a, ring.plus(b, c));
      CHECK(ab_c.p == doctest::Approx(a_bc.p).epsilon(1e-12));
      CHECK(ab_c.e == doctest::Approx(a_bc.e).epsilon(1e-12));
      auto tab_c = ring.times(ring.times(a, b), c);
      auto ta_bc = ring.times(a, ring.times(b, c));
      CHECK(tab_c.p == doctest::Approx(ta_bc.p).epsilon(1e-12));
      CHECK(tab_c.e == doctest::Approx(ta_bc.e).epsilon(1e-12));
      auto lhs = ring.times(a, ring.plus(b, c));
      auto rhs = ring.plus(ring.times(a, b), ring.times(a, c));
      CHECK(lhs.p == doctest::Approx(rhs.p).epsilon(1e-12));
      CHECK(lhs.e == doctest::Approx(rhs.e).epsilon(1e-12));
      auto z = ring.plus(a, ring.zero());
      CHECK(z.p == a.p);
      auto o = ring.times(a, ring.one());
      CHECK(o.p == doctest::Approx(a.p));
      CHECK(o.e == doctest::Approx(a.e));
      CHECK(ring.is_zero(ring.times(a, ring.zero())));
    }
  }
  SUBCASE("max-derivation scores") {
    for (int k = 0; k < 200; ++k) {
      double a = rnd(), b = rnd(), c = rnd();
      CHECK(std::max(std::max(a, b), c) == std::max(a, std::max(b, c)));
      CHECK(a * std::max(b, c) == doctest::Approx(std::max(a * b, a * c)));
    }
  }
  SUBCASE("sampling semiring totals re-associate") {
    for (int k = 0; k < 100; ++k) {
      double a = rnd(), b = rnd(), c = rnd();
      CHECK((a + b) + c == doctest::Approx(a + (b + c)).epsilon(1e-12));
    }
  }
}
