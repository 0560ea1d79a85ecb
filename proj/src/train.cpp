#include "punct/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "punct/parallel.hpp"

namespace punct {

namespace {

double theta_l2(const Model& m) {
  double s = 0;
  for (double w : m.theta.weights) s += w * w;
  return s;
}

double channel_pull_term(const Model& m, const TrainConfig& cfg) {
  if (cfg.channel_pull <= 0 || !cfg.reference_channel || m.channel.identity)
    return 0.0;
  const ChannelParams& ref = *cfg.reference_channel;
  double s = 0;
  for (size_t i = 0; i < m.channel.scores.size(); ++i)
    for (int k = 0; k < 4; ++k) {
      double d = m.channel.scores[i][size_t(k)] -
                 (i < ref.scores.size() ? ref.scores[i][size_t(k)] : 0.0);
      s += d * d;
    }
  return s;
}

}  // namespace

ObjectiveStats batch_objective(Model& m,
                               std::span<const PreparedSentence* const> batch,
                               const TrainConfig& cfg) {
  ObjectiveStats st;
  double loglik = 0, pr = 0;
  for (const PreparedSentence* ps : batch) {
    InsideResult r = inside(m, *ps);
    if (!r.explainable) {
      ++st.skipped;
      continue;
    }
    ++st.used;
    loglik += r.log_likelihood;
    pr += cfg.pr_on_prior ? r.prior_unmatched : r.expected_unmatched;
  }
  double pr_term = cfg.square_pr_term ? pr * pr : pr;
  st.value = loglik - cfg.pr_coefficient * pr_term -
             cfg.l2_coefficient * theta_l2(m) -
             cfg.channel_pull * channel_pull_term(m, cfg);
  return st;
}

BatchGradient batch_gradient(Model& m,
                             std::span<const PreparedSentence* const> batch,
                             const TrainConfig& cfg) {
  struct PerSentence {
    bool explainable = false;
    double loglik = 0, pr = 0;
    std::vector<std::pair<int, std::pair<double, double>>> theta;  // (dL, dPR)
    std::vector<std::pair<std::pair<int, int>, std::array<std::pair<double, double>, 4>>> phi;
  };
  std::vector<PerSentence> per(batch.size());

  parallel_for(int(batch.size()), cfg.threads, [&](int i) {
    Tape tape;
    SentenceTape st = inside_on_tape(m, *batch[size_t(i)], tape);
    PerSentence& out = per[size_t(i)];
    if (!st.explainable) return;
    out.explainable = true;
    out.loglik = tape.val(st.log_likelihood);
    Ad pr_node = cfg.pr_on_prior ? st.prior_unmatched : st.expected_unmatched;
    out.pr = tape.val(pr_node);
    std::vector<double> adj_l, adj_p;
    tape.backward(st.log_likelihood, 1.0, adj_l);
    if (!tape.is_zero(pr_node)) tape.backward(pr_node, 1.0, adj_p);
    bool has_pr = !adj_p.empty();
    for (auto [fid, leaf] : st.theta_leaves)
      out.theta.emplace_back(
          fid, std::make_pair(adj_l[size_t(leaf.i)],
                              has_pr ? adj_p[size_t(leaf.i)] : 0.0));
    for (auto& [bg, leaves] : st.phi_leaves) {
      std::array<std::pair<double, double>, 4> g;
      for (int k = 0; k < 4; ++k)
        g[size_t(k)] = {adj_l[size_t(leaves[size_t(k)].i)],
                        has_pr ? adj_p[size_t(leaves[size_t(k)].i)] : 0.0};
      out.phi.emplace_back(bg, g);
    }
  });

  BatchGradient bg;
  bg.d_theta.assign(m.theta.size(), 0.0);
  bg.d_phi.assign(m.channel.scores.size(), {0, 0, 0, 0});

  double loglik = 0, pr = 0;
  for (const auto& s : per) {
    if (!s.explainable) {
      ++bg.stats.skipped;
      continue;
    }
    ++bg.stats.used;
    loglik += s.loglik;
    pr += s.pr;
  }
  // d/dp [ -xi * PR or -xi * PR^2 ]
  double pr_coef = cfg.square_pr_term ? -2.0 * cfg.pr_coefficient * pr
                                      : -cfg.pr_coefficient;
  for (const auto& s : per) {
    if (!s.explainable) continue;
    for (auto& [fid, g] : s.theta)
      bg.d_theta[size_t(fid)] += g.first + pr_coef * g.second;
    for (auto& [bgm, g] : s.phi) {
      auto& slot = bg.d_phi[size_t(m.channel.bigram(bgm.first, bgm.second))];
      for (int k = 0; k < 4; ++k)
        slot[size_t(k)] += g[size_t(k)].first + pr_coef * g[size_t(k)].second;
    }
  }
  for (size_t i = 0; i < m.theta.weights.size(); ++i)
    bg.d_theta[i] -= 2.0 * cfg.l2_coefficient * m.theta.weights[i];
  if (cfg.channel_pull > 0 && cfg.reference_channel && !m.channel.identity) {
    const ChannelParams& ref = *cfg.reference_channel;
    for (size_t i = 0; i < m.channel.scores.size(); ++i)
      for (int k = 0; k < 4; ++k) {
        double r = i < ref.scores.size() ? ref.scores[i][size_t(k)] : 0.0;
        bg.d_phi[i][size_t(k)] -=
            2.0 * cfg.channel_pull * (m.channel.scores[i][size_t(k)] - r);
      }
  }
  double pr_term = cfg.square_pr_term ? pr * pr : pr;
  bg.stats.value = loglik - cfg.pr_coefficient * pr_term -
                   cfg.l2_coefficient * theta_l2(m) -
                   cfg.channel_pull * channel_pull_term(m, cfg);
  return bg;
}

Model clone_model(const Model& m) {
  Model c;
  c.vocab = m.vocab;
  c.channel = m.channel;
  c.theta = m.theta;
  c.sym_table = m.sym_table;
  c.prep = m.prep;
  c.final_mark = m.final_mark;
  c.seed = m.seed;
  c.correction_mode = m.correction_mode;
  c.rebuild_alphabet();
  // rebuild_alphabet resets the channel when sizes differ; restore it
  c.channel = m.channel;
  return c;
}

namespace {

struct Adam {
  double lr, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  long t = 0;
  std::vector<double> m1, m2;
  explicit Adam(double lr_, size_t n) : lr(lr_), m1(n, 0.0), m2(n, 0.0) {}
  // gradient ascent on the objective
  void step(std::span<double> params, std::span<const double> grad) {
    ++t;
    double c1 = 1.0 - std::pow(b1, double(t));
    double c2 = 1.0 - std::pow(b2, double(t));
    for (size_t i = 0; i < params.size(); ++i) {
      m1[i] = b1 * m1[i] + (1 - b1) * grad[i];
      m2[i] = b2 * m2[i] + (1 - b2) * grad[i] * grad[i];
      params[i] += lr * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + eps);
    }
  }
};

TrainResult train_one_direction(const std::vector<AnnotatedSentence>& train,
                                const std::vector<AnnotatedSentence>& dev,
                                const PunctemeVocab& vocab,
                                const PreprocessConfig& prep,
                                const SymmetricPairTable& sym,
                                const TrainConfig& cfg,
                                const std::vector<ErrorfulPunctemes>* errorful) {
  if (train.empty()) throw std::runtime_error("no trainable sentences");
  TrainResult res;
  Model& m = res.model;
  m.vocab = vocab;
  m.sym_table = sym;
  m.prep = prep;
  m.seed = cfg.seed;
  m.correction_mode = errorful != nullptr;
  m.rebuild_alphabet();
  m.channel.direction = cfg.direction;
  m.channel.identity = cfg.identity_channel;

  if (!m.channel.identity) {
    if (cfg.reference_channel && cfg.channel_pull > 0) {
      if (cfg.reference_channel->sigma != m.channel.sigma)
        throw std::runtime_error("reference channel alphabet mismatch");
      m.channel.scores = cfg.reference_channel->scores;
    } else {
      Rng phi_rng = Rng::derive(cfg.seed, 0xF1);
      for (auto& s : m.channel.scores)
        for (int k = 0; k < 4; ++k) s[size_t(k)] = phi_rng.next_normal();
    }
  }

  std::vector<PreparedSentence> prepared;
  prepared.reserve(train.size());
  for (size_t i = 0; i < train.size(); ++i)
    prepared.push_back(prepare_sentence(
        m, train[i], i, /*create_features=*/true, false,
        errorful ? &(*errorful)[i] : nullptr));
  Rng theta_rng = Rng::derive(cfg.seed, 0x7E);
  for (auto& w : m.theta.weights) w = theta_rng.next_normal();

  std::vector<PreparedSentence> dev_prepared;
  dev_prepared.reserve(dev.size());
  for (size_t i = 0; i < dev.size(); ++i)
    dev_prepared.push_back(prepare_sentence(m, dev[i], i, false));

  Adam adam_theta(cfg.learning_rate, m.theta.size());
  Adam adam_phi(cfg.learning_rate, m.channel.scores.size() * 4);

  double best_ppl = std::numeric_limits<double>::infinity();
  std::vector<double> best_theta = m.theta.weights;
  auto best_phi = m.channel.scores;
  res.best_epoch = 0;

  std::vector<size_t> order(prepared.size());
  std::iota(order.begin(), order.end(), size_t(0));

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng epoch_rng = Rng::derive(cfg.seed, 0xE000 + uint64_t(epoch));
    epoch_rng.shuffle(order);
    size_t take = std::min(order.size(), size_t(cfg.sentences_per_epoch));

    EpochLog log;
    log.epoch = epoch;
    for (size_t off = 0; off < take; off += size_t(cfg.batch_size)) {
      size_t hi = std::min(take, off + size_t(cfg.batch_size));
      std::vector<const PreparedSentence*> batch;
      for (size_t k = off; k < hi; ++k) batch.push_back(&prepared[order[k]]);
      BatchGradient bg = batch_gradient(m, batch, cfg);
      log.objective += bg.stats.value;
      log.skipped_train += bg.stats.skipped;
      adam_theta.step(m.theta.weights, bg.d_theta);
      if (!m.channel.identity) {
        std::span<double> phi_params(&m.channel.scores[0][0],
                                     m.channel.scores.size() * 4);
        std::span<const double> phi_grad(&bg.d_phi[0][0], bg.d_phi.size() * 4);
        adam_phi.step(phi_params, phi_grad);
      }
    }
    if (take > 0 &&
        double(log.skipped_train) > cfg.abort_skip_rate * double(take))
      throw std::runtime_error(
          "training aborted: " + std::to_string(log.skipped_train) + " of " +
          std::to_string(take) +
          " sentences unexplainable this epoch (likely a pair-inventory "
          "estimation bug)");

    if (!dev_prepared.empty()) {
      PerplexityResult pr = perplexity(m, dev_prepared, cfg.threads);
      log.dev_loglik = pr.log_likelihood;
      log.dev_perplexity = pr.perplexity;
      log.skipped_dev = pr.skipped;
      if (pr.perplexity < best_ppl) {
        best_ppl = pr.perplexity;
        best_theta = m.theta.weights;
        best_phi = m.channel.scores;
        res.best_epoch = epoch;
      }
    }
    res.log.push_back(log);
  }

  if (dev_prepared.empty()) {
    res.best_epoch = cfg.epochs;
    best_theta = m.theta.weights;
    best_phi = m.channel.scores;
  }
  res.best = clone_model(m);
  res.best.theta.weights = best_theta;
  res.best.channel.scores = best_phi;
  res.chosen_direction = cfg.direction;
  return res;
}

double result_dev_ppl(const TrainResult& r) {
  if (r.log.empty() || r.best_epoch == 0)
    return std::numeric_limits<double>::infinity();
  return r.log[size_t(r.best_epoch - 1)].dev_perplexity;
}

}  // namespace

TrainResult train_model(const std::vector<AnnotatedSentence>& train,
                        const std::vector<AnnotatedSentence>& dev,
                        const PunctemeVocab& vocab,
                        const PreprocessConfig& prep,
                        const SymmetricPairTable& sym, const TrainConfig& cfg,
                        const std::vector<ErrorfulPunctemes>* errorful) {
  if (!cfg.direction_auto)
    return train_one_direction(train, dev, vocab, prep, sym, cfg, errorful);
  TrainConfig l = cfg, r = cfg;
  l.direction_auto = r.direction_auto = false;
  l.direction = Direction::L2R;
  r.direction = Direction::R2L;
  TrainResult lr = train_one_direction(train, dev, vocab, prep, sym, l, errorful);
  TrainResult rl = train_one_direction(train, dev, vocab, prep, sym, r, errorful);
  return result_dev_ppl(lr) <= result_dev_ppl(rl) ? std::move(lr)
                                                  : std::move(rl);
}

std::string log_to_tsv(std::span<const EpochLog> log) {
  std::ostringstream os;
  os << "epoch\ttrain_objective\tdev_loglik\tdev_perplexity\tskipped_train\t"
        "skipped_dev\n";
  for (const auto& e : log)
    os << e.epoch << '\t' << e.objective << '\t' << e.dev_loglik << '\t'
       << e.dev_perplexity << '\t' << e.skipped_train << '\t' << e.skipped_dev
       << '\n';
  return os.str();
}

PerplexityResult perplexity(Model& m,
                            std::span<const PreparedSentence> sentences,
                            int threads) {
  PerplexityResult res;
  std::vector<InsideResult> rs(sentences.size());
  parallel_for(int(sentences.size()), threads,
               [&](int i) { rs[size_t(i)] = inside(m, sentences[size_t(i)]); });
  for (size_t i = 0; i < sentences.size(); ++i) {
    if (!rs[i].explainable) {
      ++res.skipped;
      continue;
    }
    ++res.used;
    res.log_likelihood += rs[i].log_likelihood;
    res.slots += long(sentences[i].src->tree.n()) + 1;
  }
  res.perplexity = res.slots == 0
                       ? std::numeric_limits<double>::quiet_NaN()
                       : std::exp(-res.log_likelihood / double(res.slots));
  return res;
}

}  // namespace punct
