#ifndef PUNCT_AUTODIFF_HPP
#define PUNCT_AUTODIFF_HPP

#include <cstdint>
#include <vector>

namespace punct {

struct Ad {
  int32_t i = -1;
  bool valid() const { return i >= 0; }
};

// Reverse-mode tape over doubles. One tape per sentence keeps gradient
// computation embarrassingly parallel across a batch.
class Tape {
 public:
  Tape() { reset(); }

  void reset() {
    recs_.clear();
    vals_.clear();
    recs_.push_back({kCst, -1, -1});
    vals_.push_back(0.0);
    recs_.push_back({kCst, -1, -1});
    vals_.push_back(1.0);
  }

  Ad zero() const { return {0}; }
  Ad one() const { return {1}; }
  bool is_zero(Ad a) const { return a.i == 0; }
  bool is_one(Ad a) const { return a.i == 1; }

  Ad cst(double v) {
    if (v == 0.0) return zero();
    if (v == 1.0) return one();
    return push(kCst, -1, -1, v);
  }
  Ad leaf(double v) { return push(kLeaf, -1, -1, v); }

  // Structural shortcuts fire only on the shared zero/one constants, so a
  // computed value that happens to equal 0 or 1 still propagates gradient.
  Ad add(Ad a, Ad b) {
    if (is_zero(a)) return b;
    if (is_zero(b)) return a;
    return push(kAdd, a.i, b.i, vals_[size_t(a.i)] + vals_[size_t(b.i)]);
  }
  Ad sub(Ad a, Ad b) {
    if (is_zero(b)) return a;
    return push(kSub, a.i, b.i, vals_[size_t(a.i)] - vals_[size_t(b.i)]);
  }
  Ad mul(Ad a, Ad b) {
    if (is_zero(a) || is_zero(b)) return zero();
    if (is_one(a)) return b;
    if (is_one(b)) return a;
    return push(kMul, a.i, b.i, vals_[size_t(a.i)] * vals_[size_t(b.i)]);
  }
  Ad div(Ad a, Ad b) {
    if (is_zero(a)) return zero();
    if (is_one(b)) return a;
    return push(kDiv, a.i, b.i, vals_[size_t(a.i)] / vals_[size_t(b.i)]);
  }
  Ad exp_(Ad a) { return push(kExp, a.i, -1, __builtin_exp(vals_[size_t(a.i)])); }
  Ad log_(Ad a) { return push(kLog, a.i, -1, __builtin_log(vals_[size_t(a.i)])); }
  Ad neg(Ad a) {
    if (is_zero(a)) return a;
    return push(kNeg, a.i, -1, -vals_[size_t(a.i)]);
  }

  double val(Ad a) const { return vals_[size_t(a.i)]; }
  size_t size() const { return recs_.size(); }

  // Seeds d(output) = seed and accumulates adjoints for every node into
  // adj (resized to the tape length).
  void backward(Ad output, double seed, std::vector<double>& adj) const;

 private:
  enum Op : uint8_t { kCst, kLeaf, kAdd, kSub, kMul, kDiv, kExp, kLog, kNeg };
  struct Rec {
    Op op;
    int32_t a, b;
  };

  Ad push(Op op, int32_t a, int32_t b, double v) {
    recs_.push_back({op, a, b});
    vals_.push_back(v);
    return {int32_t(recs_.size() - 1)};
  }

  std::vector<Rec> recs_;
  std::vector<double> vals_;
};

}  // namespace punct

#endif
