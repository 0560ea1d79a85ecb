#ifndef PUNCT_TRIGRAM_HPP
#define PUNCT_TRIGRAM_HPP

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace punct {

// Add-lambda smoothed word trigram model. Sentences are padded with two
// start symbols and one end symbol; the prediction vocabulary is the
// training types plus UNK and the end symbol. Perplexity is per predicted
// token (each sentence contributes length + 1 predictions).
class TrigramLm {
 public:
  static constexpr int kUnk = 0;
  static constexpr int kEos = 1;
  static constexpr int kBos = 2;

  static TrigramLm train(std::span<const std::vector<std::string>> corpus,
                         double lambda = 0.001);

  double sentence_logprob(const std::vector<std::string>& sentence) const;
  double perplexity(std::span<const std::vector<std::string>> corpus) const;

  long vocab_size() const { return long(types_.size()) - 1; }  // minus BOS
  double lambda() const { return lambda_; }

 private:
  int lookup(const std::string& tok) const {
    auto it = index_.find(tok);
    return it == index_.end() ? kUnk : it->second;
  }
  static uint64_t key2(int a, int b) {
    return (uint64_t(uint32_t(a)) << 21) | uint64_t(uint32_t(b));
  }
  static uint64_t key3(int a, int b, int c) {
    return (uint64_t(uint32_t(a)) << 42) | (uint64_t(uint32_t(b)) << 21) |
           uint64_t(uint32_t(c));
  }

  double lambda_ = 0.001;
  std::vector<std::string> types_;  // includes UNK, EOS, BOS sentinels
  std::unordered_map<std::string, int> index_;
  std::unordered_map<uint64_t, long> bigrams_;
  std::unordered_map<uint64_t, long> trigrams_;
};

}  // namespace punct

#endif
