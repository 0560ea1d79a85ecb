#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "punct/model_io.hpp"
#include "punct/tasks.hpp"
#include "punct/train.hpp"

using namespace punct;
using namespace punct::testing;

namespace {

// finite differences of the batch objective wrt every parameter
void check_gradients(Model& m, std::span<const PreparedSentence* const> batch,
                     const TrainConfig& cfg, int* coords_checked) {
  BatchGradient bg = batch_gradient(m, batch, cfg);
  const double h = 1e-5;
  auto fd = [&](double* param) {
    double orig = *param;
    *param = orig + h;
    double up = batch_objective(m, batch, cfg).value;
    *param = orig - h;
    double dn = batch_objective(m, batch, cfg).value;
    *param = orig;
    return (up - dn) / (2 * h);
  };
  for (size_t i = 0; i < m.theta.weights.size(); ++i) {
    double want = fd(&m.theta.weights[i]);
    double got = bg.d_theta[i];
    double rel = std::fabs(got - want) /
                 std::max({1e-3, std::fabs(got), std::fabs(want)});
    CHECK(rel < 1e-4);
    ++*coords_checked;
  }
  if (!m.channel.identity) {
    for (size_t i = 0; i < m.channel.scores.size(); ++i)
      for (int k = 0; k < 4; ++k) {
        double want = fd(&m.channel.scores[i][size_t(k)]);
        double got = bg.d_phi[i][size_t(k)];
        double rel = std::fabs(got - want) /
                     std::max({1e-3, std::fabs(got), std::fabs(want)});
        CHECK(rel < 1e-4);
        ++*coords_checked;
      }
  }
}

}  // namespace

TEST_CASE("objective closed forms") {
  InstanceConfig icfg;
  icfg.surface_from_model = true;
  TestInstance inst = random_instance(42, icfg);
  std::vector<const PreparedSentence*> batch{&inst.prep};
  TrainConfig cfg;

  SUBCASE("no regularization leaves the summed log-likelihood") {
    cfg.pr_coefficient = 0;
    cfg.l2_coefficient = 0;
    InsideResult r = inside(inst.model, inst.prep);
    ObjectiveStats st = batch_objective(inst.model, batch, cfg);
    if (r.explainable)
      CHECK(st.value == doctest::Approx(r.log_likelihood).epsilon(1e-12));
    else
      CHECK(st.value == 0.0);
  }
  SUBCASE("the L2 term vanishes at theta = 0") {
    cfg.pr_coefficient = 0;
    cfg.l2_coefficient = 3.0;
    for (auto& w : inst.model.theta.weights) w = 0.0;
    InsideResult r = inside(inst.model, inst.prep);
    ObjectiveStats st = batch_objective(inst.model, batch, cfg);
    REQUIRE(r.explainable);
    CHECK(st.value == doctest::Approx(r.log_likelihood).epsilon(1e-12));
  }
  SUBCASE("objective is invariant to batch permutation") {
    TestInstance other = random_instance(43, icfg);
    // same model must score both; rebuild the second sentence under it
    PreparedSentence p2 =
        prepare_sentence(inst.model, *other.sent, 1, true);
    std::vector<const PreparedSentence*> b1{&inst.prep, &p2};
    std::vector<const PreparedSentence*> b2{&p2, &inst.prep};
    CHECK(batch_objective(inst.model, b1, cfg).value ==
          doctest::Approx(batch_objective(inst.model, b2, cfg).value)
              .epsilon(1e-12));
  }
}

TEST_CASE("the forced one-word example has objective 0") {
  PunctemeVocab v;
  std::vector<std::string> dot{"."};
  v.add_pair("root", 0, v.intern_puncteme(dot));
  Model m;
  m.vocab = v;
  m.rebuild_alphabet();
  m.channel.identity = true;
  AnnotatedSentence sent;
  DepNode nd;
  nd.index = 1;
  nd.form = "w";
  nd.upos = "NOUN";
  nd.head = 0;
  nd.deprel = "root";
  sent.tree.nodes.push_back(nd);
  std::string reason;
  REQUIRE(finish_tree(sent.tree, &reason));
  sent.slots = {{}, {"."}};
  PreparedSentence ps = prepare_sentence(m, sent, 0, true);
  for (auto& w : m.theta.weights) w = 0;
  std::vector<const PreparedSentence*> batch{&ps};
  TrainConfig cfg;
  cfg.l2_coefficient = 0.5;  // theta is 0, so the term contributes nothing
  cfg.pr_coefficient = 2.0;  // (eps, ".") has no unmatched tokens
  CHECK(batch_objective(m, batch, cfg).value == doctest::Approx(0.0));
}

TEST_CASE("gradient of an L2-only objective is -2 sigma theta") {
  InstanceConfig icfg;
  TestInstance inst = random_instance(5, icfg);
  // make the sentence unexplainable so only the L2 term remains
  inst.sent->slots.assign(inst.sent->slots.size(), {});
  inst.sent->slots[0] = {",", ",", ",", ",", ","};  // slot 0 over-full
  // actually: guarantee unexplainability via an impossible surface
  // (u_0 can hold at most every node's punctemes; 5 commas may still be
  // explainable, so instead drop all sentences from the batch)
  std::vector<const PreparedSentence*> batch;  // empty batch
  TrainConfig cfg;
  cfg.l2_coefficient = 1.7;
  cfg.pr_coefficient = 3.0;
  BatchGradient bg = batch_gradient(inst.model, batch, cfg);
  for (size_t i = 0; i < inst.model.theta.weights.size(); ++i)
    CHECK(bg.d_theta[i] ==
          doctest::Approx(-2 * 1.7 * inst.model.theta.weights[i]));
}

TEST_CASE("gradients match finite differences") {
  int coords = 0;
  int instances = 0;
  for (uint64_t seed = 1000; seed < 1040; ++seed) {
    InstanceConfig icfg;
    icfg.surface_from_model = seed % 2 == 0;
    icfg.direction = seed % 3 == 0 ? Direction::R2L : Direction::L2R;
    TestInstance inst = random_instance(seed, icfg);
    TestInstance extra = random_instance(seed + 5000, icfg);
    // score the second sentence under the first model
    PreparedSentence p2 = prepare_sentence(inst.model, *extra.sent, 1, true);
    InsideResult r1 = inside(inst.model, inst.prep);
    InsideResult r2 = inside(inst.model, p2);
    if (!r1.explainable && !r2.explainable) continue;
    ++instances;
    std::vector<const PreparedSentence*> batch{&inst.prep, &p2};
    TrainConfig cfg;
    cfg.l2_coefficient = 0.3;
    cfg.pr_coefficient = seed % 2 == 0 ? 0.0 : 3.7;  // both xi = 0 and xi > 0
    cfg.square_pr_term = seed % 4 == 1;
    cfg.threads = 1;
    check_gradients(inst.model, batch, cfg, &coords);
  }
  CHECK(instances >= 20);
  CHECK(coords > 500);
}

TEST_CASE("gradients also match under the literal prior accumulation flag") {
  int coords = 0;
  for (uint64_t seed = 2000; seed < 2006; ++seed) {
    InstanceConfig icfg;
    icfg.surface_from_model = true;
    TestInstance inst = random_instance(seed, icfg);
    if (!inside(inst.model, inst.prep).explainable) continue;
    std::vector<const PreparedSentence*> batch{&inst.prep};
    TrainConfig cfg;
    cfg.l2_coefficient = 0.1;
    cfg.pr_coefficient = 2.5;
    cfg.pr_on_prior = true;
    cfg.threads = 1;
    check_gradients(inst.model, batch, cfg, &coords);
  }
  CHECK(coords > 50);
}

TEST_CASE("gradient of a bigram absent from the batch automata is zero") {
  // identity-channel-like setup: craft a model with two tokens where the
  // surface uses only one of them
  TestInstance inst = random_instance(77, InstanceConfig{});
  if (inst.model.channel.sigma < 2) return;
  // surface with only token 0
  for (auto& slot : inst.sent->slots) slot.clear();
  inst.sent->slots[0] = {inst.model.sigma[0]};
  PreparedSentence ps = prepare_sentence(inst.model, *inst.sent, 0, true);
  if (!inside(inst.model, ps).explainable) return;
  std::vector<const PreparedSentence*> batch{&ps};
  TrainConfig cfg;
  cfg.l2_coefficient = 0;
  cfg.pr_coefficient = 0;
  BatchGradient bg = batch_gradient(inst.model, batch, cfg);
  // a window of two distinct non-surface tokens can never appear in a slot
  // automaton for this sentence
  int a = 1, b = inst.model.channel.sigma > 2 ? 2 : 1;
  if (a != b) {
    auto g = bg.d_phi[size_t(inst.model.channel.bigram(a, b))];
    for (int k = 0; k < 4; ++k) CHECK(g[size_t(k)] == 0.0);
  }
}

namespace {

// a small planted treebank: root always takes (eps, "."), an obj child
// takes (eps, ",") often; the channel is near-deterministic
std::vector<AnnotatedSentence> planted_corpus(int count, uint64_t seed,
                                              Model& planted) {
  PunctemeVocab v;
  std::vector<std::string> dot{"."}, comma{","};
  int pdot = v.intern_puncteme(dot);
  int pcomma = v.intern_puncteme(comma);
  v.add_pair("root", 0, pdot);
  v.add_pair("root", 0, 0);
  v.add_pair("obj", 0, pcomma);
  v.add_pair("obj", 0, 0);
  v.add_pair("nsubj", 0, 0);
  planted.vocab = v;
  planted.rebuild_alphabet();
  // root ends with "." with high probability; obj ends with ","
  AnnotatedSentence proto;
  // theta: weight up (eps,".") at root and (eps,",") at obj
  auto plant_weight = [&](const AnnotatedSentence& s, int node,
                          std::span<const std::string> l,
                          std::span<const std::string> r, double wgt) {
    NodeContext ctx = make_node_context(s, node);
    auto f = extract_features(l, r, ctx, planted.sym_table);
    planted.theta.weights[size_t(planted.theta.intern(f[0]))] += wgt;
  };
  // channel: ", ." window right-absorbs with probability ~0.95
  int ic = planted.token_id(",");
  int id = planted.token_id(".");
  for (auto& s : planted.channel.scores) s = {8, 0, 0, 0};
  planted.channel.at(ic, id) = {0, 0, std::log(0.95 / 0.05 * 3.0), 0};
  // ^ keep/labs/trans get e^0 each; rabs dominates at ~0.95

  Rng rng(seed);
  std::vector<AnnotatedSentence> corpus;
  for (int k = 0; k < count; ++k) {
    int n = 2 + int(rng.next_below(3));  // verb + 1..3 nouns
    AnnotatedSentence s;
    s.tree.nodes.resize(size_t(n));
    for (int i = 1; i <= n; ++i) {
      DepNode nd;
      nd.index = i;
      nd.form = i == 1 ? "v" : "n" + std::to_string(i);
      nd.upos = i == 1 ? "VERB" : "NOUN";
      nd.head = i == 1 ? 0 : 1;
      nd.deprel = i == 1 ? "root" : (i == n ? "obj" : "nsubj");
      s.tree.nodes[size_t(i - 1)] = nd;
    }
    std::string reason;
    REQUIRE(finish_tree(s.tree, &reason));
    s.slots.assign(size_t(n) + 1, {});
    if (k == 0) {
      plant_weight(s, 1, {}, dot, 4.0);
      plant_weight(s, s.tree.n(), {}, comma, 4.0);
    }
    GenerateResult g = generate(planted, s.tree, rng);
    s.slots = g.surface;
    corpus.push_back(std::move(s));
  }
  return corpus;
}

}  // namespace

TEST_CASE("training is deterministic and improves a planted model's fit") {
  Model planted;
  auto corpus = planted_corpus(260, 11, planted);
  std::vector<AnnotatedSentence> train(corpus.begin(), corpus.end() - 60);
  std::vector<AnnotatedSentence> dev(corpus.end() - 60, corpus.end());
  PunctemeVocab vocab = estimate_vocab(train);
  TrainConfig cfg;
  cfg.epochs = 8;
  cfg.sentences_per_epoch = 120;
  cfg.seed = 99;
  cfg.threads = 2;

  TrainResult a = train_model(train, dev, vocab, PreprocessConfig{},
                              SymmetricPairTable::defaults(), cfg);
  TrainResult b = train_model(train, dev, vocab, PreprocessConfig{},
                              SymmetricPairTable::defaults(), cfg);
  // bitwise-identical trajectories under a fixed seed
  REQUIRE(a.model.theta.weights.size() == b.model.theta.weights.size());
  for (size_t i = 0; i < a.model.theta.weights.size(); ++i)
    CHECK(a.model.theta.weights[i] == b.model.theta.weights[i]);
  for (size_t i = 0; i < a.model.channel.scores.size(); ++i)
    for (int k = 0; k < 4; ++k)
      CHECK(a.model.channel.scores[i][size_t(k)] ==
            b.model.channel.scores[i][size_t(k)]);
  CHECK(save_model(a.model) == save_model(b.model));

  // fit improves over the first epoch and ends close to the planted model
  CHECK(a.log.back().dev_perplexity < a.log.front().dev_perplexity + 1e-9);

  std::vector<PreparedSentence> devp;
  for (size_t i = 0; i < dev.size(); ++i)
    devp.push_back(prepare_sentence(planted, dev[i], i, true));
  PerplexityResult truth = perplexity(planted, devp);
  std::vector<PreparedSentence> devq;
  for (size_t i = 0; i < dev.size(); ++i)
    devq.push_back(prepare_sentence(a.best, dev[i], i, false));
  PerplexityResult learned = perplexity(a.best, devq);
  CHECK(learned.perplexity < truth.perplexity * 1.05);
}

TEST_CASE("channel normalization survives training steps") {
  Model planted;
  auto corpus = planted_corpus(60, 21, planted);
  PunctemeVocab vocab = estimate_vocab(corpus);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.sentences_per_epoch = 40;
  cfg.threads = 1;
  TrainResult r = train_model(corpus, {}, vocab, PreprocessConfig{},
                              SymmetricPairTable::defaults(), cfg);
  Pfst f = build_pfst(r.model.channel);
  std::map<std::pair<int, int>, double> mass;
  for (const auto& a : f.arcs) mass[{a.from, a.in}] += a.prob;
  for (auto& [key, sum] : mass)
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("an empty treebank is a configuration error") {
  TrainConfig cfg;
  CHECK_THROWS(train_model({}, {}, PunctemeVocab{}, PreprocessConfig{},
                           SymmetricPairTable::defaults(), cfg));
}

TEST_CASE("direction auto keeps the dev-perplexity winner") {
  Model planted;
  auto corpus = planted_corpus(140, 31, planted);
  std::vector<AnnotatedSentence> train(corpus.begin(), corpus.end() - 40);
  std::vector<AnnotatedSentence> dev(corpus.end() - 40, corpus.end());
  PunctemeVocab vocab = estimate_vocab(train);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.sentences_per_epoch = 60;
  cfg.seed = 5;
  cfg.direction_auto = true;
  TrainResult r = train_model(train, dev, vocab, PreprocessConfig{},
                              SymmetricPairTable::defaults(), cfg);
  CHECK(r.model.channel.direction == r.chosen_direction);
  // the winner's dev perplexity is no worse than retraining the loser
  TrainConfig other = cfg;
  other.direction_auto = false;
  other.direction = r.chosen_direction == Direction::L2R ? Direction::R2L
                                                         : Direction::L2R;
  TrainResult loser = train_model(train, dev, vocab, PreprocessConfig{},
                                  SymmetricPairTable::defaults(), other);
  double won = r.log[size_t(r.best_epoch - 1)].dev_perplexity;
  double lost = loser.log[size_t(loser.best_epoch - 1)].dev_perplexity;
  CHECK(won <= lost + 1e-12);
}

TEST_CASE("the identity lock keeps channel parameters out of the gradient") {
  InstanceConfig icfg;
  icfg.surface_from_model = true;
  TestInstance inst = random_instance(3141, icfg);
  inst.model.channel.identity = true;
  // the surface must equal the underlying for an identity channel to
  // explain it; regenerate under the lock
  Rng rng(1);
  GenerateResult g = generate(inst.model, inst.sent->tree, rng);
  inst.sent->slots = g.surface;
  inst.prep = prepare_sentence(inst.model, *inst.sent, 0, true);
  std::vector<const PreparedSentence*> batch{&inst.prep};
  TrainConfig cfg;
  cfg.threads = 1;
  BatchGradient bg = batch_gradient(inst.model, batch, cfg);
  for (const auto& slot : bg.d_phi)
    for (int k = 0; k < 4; ++k) CHECK(slot[size_t(k)] == 0.0);
}

TEST_CASE("an epoch with too many unexplainable sentences aborts loudly") {
  Model planted;
  auto corpus = planted_corpus(50, 77, planted);
  // a vocabulary whose only pairs are empty cannot explain any punctuation
  PunctemeVocab crippled;
  std::vector<std::string> dot{"."}, comma{","};
  crippled.intern_puncteme(dot);
  crippled.intern_puncteme(comma);
  crippled.add_pair("root", 0, 0);
  crippled.add_pair("obj", 0, 0);
  crippled.add_pair("nsubj", 0, 0);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.sentences_per_epoch = 50;
  CHECK_THROWS_WITH_AS(
      train_model(corpus, {}, crippled, PreprocessConfig{},
                  SymmetricPairTable::defaults(), cfg),
      doctest::Contains("unexplainable"), std::runtime_error);
}

TEST_CASE("identity lock and xi = 0 reduce training to softmax regression") {
  // two corpora: one where a relation's two pair options are used equally
  // (the optimum is the uniform distribution) and one where the choice is
  // deterministic (the optimum is a point mass)
  PunctemeVocab v;
  std::vector<std::string> comma{","};
  int pc = v.intern_puncteme(comma);
  v.add_pair("root", 0, 0);
  v.add_pair("dep", 0, pc);
  v.add_pair("dep", 0, 0);

  auto make_sentence = [&](bool with_comma) {
    AnnotatedSentence s;
    DepNode a, b;
    a.index = 1;
    a.form = "a";
    a.upos = "NOUN";
    a.head = 2;
    a.deprel = "dep";
    b.index = 2;
    b.form = "b";
    b.upos = "VERB";
    b.head = 0;
    b.deprel = "root";
    s.tree.nodes = {a, b};
    std::string reason;
    REQUIRE(finish_tree(s.tree, &reason));
    s.slots = {{}, {}, {}};
    if (with_comma) s.slots[1] = {","};
    return s;
  };

  TrainConfig cfg;  // full-batch so Adam settles onto the exact optimum
  cfg.identity_channel = true;
  cfg.pr_coefficient = 0.0;
  cfg.l2_coefficient = 0.0;
  cfg.epochs = 120;
  cfg.sentences_per_epoch = 40;
  cfg.batch_size = 40;
  cfg.seed = 17;

  SUBCASE("uniform optimum") {
    std::vector<AnnotatedSentence> corpus;
    for (int k = 0; k < 20; ++k) {
      corpus.push_back(make_sentence(true));
      corpus.push_back(make_sentence(false));
    }
    TrainResult r = train_model(corpus, {}, v, PreprocessConfig{},
                                SymmetricPairTable::defaults(), cfg);
    PreparedSentence ps =
        prepare_sentence(r.model, corpus[0], 0, false);
    auto probs = softmax([&] {
      std::vector<double> scores;
      for (auto& pp : ps.nodes[0].pairs) {
        double s = 0;
        for (int f : pp.feats) s += r.model.theta.weights[size_t(f)];
        scores.push_back(s);
      }
      return scores;
    }());
    for (double p : probs) CHECK(p == doctest::Approx(0.5).epsilon(0.05));
  }
  SUBCASE("point mass") {
    std::vector<AnnotatedSentence> corpus;
    for (int k = 0; k < 40; ++k) corpus.push_back(make_sentence(true));
    TrainResult r = train_model(corpus, {}, v, PreprocessConfig{},
                                SymmetricPairTable::defaults(), cfg);
    PreparedSentence ps = prepare_sentence(r.model, corpus[0], 0, false);
    // the comma-bearing pair must dominate
    double comma_score = 0, empty_score = 0;
    for (auto& pp : ps.nodes[0].pairs) {
      double s = 0;
      for (int f : pp.feats) s += r.model.theta.weights[size_t(f)];
      if (pp.r == pc)
        comma_score = s;
      else
        empty_score = s;
    }
    double p = 1.0 / (1.0 + std::exp(empty_score - comma_score));
    CHECK(p > 0.95);
  }
}
