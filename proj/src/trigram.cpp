#include "punct/trigram.hpp"

#include <cmath>
#include <stdexcept>

namespace punct {

TrigramLm TrigramLm::train(std::span<const std::vector<std::string>> corpus,
                           double lambda) {
  TrigramLm lm;
  lm.lambda_ = lambda;
  lm.types_ = {"<unk>", "</s>", "<s>"};
  for (size_t i = 0; i < lm.types_.size(); ++i) lm.index_[lm.types_[i]] = int(i);
  for (const auto& sent : corpus)
    for (const auto& tok : sent)
      if (lm.index_.find(tok) == lm.index_.end()) {
        lm.index_[tok] = int(lm.types_.size());
        lm.types_.push_back(tok);
      }
  for (const auto& sent : corpus) {
    int a = kBos, b = kBos;
    for (size_t i = 0; i <= sent.size(); ++i) {
      int c = i < sent.size() ? lm.lookup(sent[i]) : kEos;
      ++lm.bigrams_[key2(a, b)];
      ++lm.trigrams_[key3(a, b, c)];
      a = b;
      b = c;
    }
  }
  return lm;
}

double TrigramLm::sentence_logprob(const std::vector<std::string>& sent) const {
  // prediction vocabulary: train types + UNK + EOS (BOS is never predicted)
  const double v = double(types_.size()) - 1.0;
  double lp = 0;
  int a = kBos, b = kBos;
  for (size_t i = 0; i <= sent.size(); ++i) {
    int c = i < sent.size() ? lookup(sent[i]) : kEos;
    auto i2 = bigrams_.find(key2(a, b));
    auto i3 = trigrams_.find(key3(a, b, c));
    double num = (i3 == trigrams_.end() ? 0.0 : double(i3->second)) + lambda_;
    double den =
        (i2 == bigrams_.end() ? 0.0 : double(i2->second)) + lambda_ * v;
    lp += std::log(num / den);
    a = b;
    b = c;
  }
  return lp;
}

double TrigramLm::perplexity(
    std::span<const std::vector<std::string>> corpus) const {
  double lp = 0;
  long tokens = 0;
  for (const auto& sent : corpus) {
    lp += sentence_logprob(sent);
    tokens += long(sent.size()) + 1;
  }
  if (tokens == 0) throw std::runtime_error("trigram perplexity: empty corpus");
  return std::exp(-lp / double(tokens));
}

}  // namespace punct
