#ifndef PUNCT_RNG_HPP
#define PUNCT_RNG_HPP

#include <cstdint>

namespace punct {

// Splitmix64 stream. Used everywhere so that results are reproducible
// across platforms and independent of the thread count: every sentence
// gets its own stream derived from (root seed, stream id).
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  static Rng derive(uint64_t root, uint64_t stream) {
    Rng r(root ^ (0x9e3779b97f4a7c15ULL * (stream + 1)));
    r.next_u64();
    r.next_u64();
    return r;
  }

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  uint64_t next_below(uint64_t n) { return n ? next_u64() % n : 0; }

  // standard normal via Box-Muller
  double next_normal() {
    double u1, u2;
    do {
      u1 = next_double();
    } while (u1 <= 0.0);
    u2 = next_double();
    const double two_pi = 6.283185307179586476925286766559;
    double r = __builtin_sqrt(-2.0 * __builtin_log(u1));
    return r * __builtin_cos(two_pi * u2);
  }

  template <class T>
  void shuffle(T& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = size_t(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
};

}  // namespace punct

#endif
