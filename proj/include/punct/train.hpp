#ifndef PUNCT_TRAIN_HPP
#define PUNCT_TRAIN_HPP

#include "punct/forest.hpp"

namespace punct {

struct TrainConfig {
  double learning_rate = 0.07;
  int batch_size = 5;
  int sentences_per_epoch = 400;
  int epochs = 30;
  double l2_coefficient = 1.0;   // on theta
  double pr_coefficient = 10.0;  // on the expected unmatched count
  bool square_pr_term = false;
  bool pr_on_prior = false;  // penalize the literal prior-weighted count
  uint64_t seed = 1;
  Direction direction = Direction::L2R;
  bool direction_auto = false;
  bool identity_channel = false;
  int threads = 0;  // 0 = hardware concurrency
  double abort_skip_rate = 0.01;
  // correction training: pull channel scores toward a reference channel
  double channel_pull = 0.0;
  const ChannelParams* reference_channel = nullptr;
};

struct ObjectiveStats {
  double value = 0.0;
  long used = 0;
  long skipped = 0;
};

// Regularized conditional log-likelihood of a batch under the model:
// sum log p(x|T) - xi * PR - sigma * ||theta||^2 (PR optionally squared,
// posterior or literal-prior). Zero-likelihood sentences are skipped.
ObjectiveStats batch_objective(Model& m,
                               std::span<const PreparedSentence* const> batch,
                               const TrainConfig& cfg);

struct BatchGradient {
  ObjectiveStats stats;
  std::vector<double> d_theta;               // dense over the feature table
  std::vector<std::array<double, 4>> d_phi;  // dense over bigrams
};

// Exact gradient of batch_objective via reverse accumulation through the
// inside computation; contract: matches central finite differences.
BatchGradient batch_gradient(Model& m,
                             std::span<const PreparedSentence* const> batch,
                             const TrainConfig& cfg);

struct EpochLog {
  int epoch = 0;
  double objective = 0.0;  // summed over the epoch's batches
  double dev_loglik = 0.0;
  double dev_perplexity = 0.0;
  long skipped_train = 0;
  long skipped_dev = 0;
};

std::string log_to_tsv(std::span<const EpochLog> log);

struct TrainResult {
  Model model;  // after the last epoch
  Model best;   // dev-best checkpoint
  int best_epoch = 0;
  std::vector<EpochLog> log;
  Direction chosen_direction = Direction::L2R;
};

// Initializes theta and phi from N(0,1), then runs Adam with the paper's
// schedule: batches of batch_size drawn from sentences_per_epoch sentences
// sampled without replacement each epoch. With direction_auto both
// directions are trained and the dev-perplexity winner is returned. For
// correction training, errorful supplies per-sentence recovered punctemes
// aligned with train.
TrainResult train_model(const std::vector<AnnotatedSentence>& train,
                        const std::vector<AnnotatedSentence>& dev,
                        const PunctemeVocab& vocab,
                        const PreprocessConfig& prep,
                        const SymmetricPairTable& sym, const TrainConfig& cfg,
                        const std::vector<ErrorfulPunctemes>* errorful = nullptr);

Model clone_model(const Model& m);

struct PerplexityResult {
  double perplexity = 0.0;
  double log_likelihood = 0.0;
  long slots = 0;
  long used = 0;
  long skipped = 0;
};

// exp(-sum log p / sum (n+1)) over explainable sentences
PerplexityResult perplexity(Model& m,
                            std::span<const PreparedSentence> sentences,
                            int threads = 0);

}  // namespace punct

#endif
