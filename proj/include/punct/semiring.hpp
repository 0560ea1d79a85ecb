#ifndef PUNCT_SEMIRING_HPP
#define PUNCT_SEMIRING_HPP

#include <cmath>

#include "punct/autodiff.hpp"

namespace punct {

// Ring abstraction over which the inside recursion and the slot-automaton
// matrix actions are generic. "mag" and "scale2" support the per-matrix
// scaling exponents that keep long products from underflowing.

struct DoubleRing {
  using V = double;
  V zero() const { return 0.0; }
  V one() const { return 1.0; }
  V plus(V a, V b) const { return a + b; }
  V times(V a, V b) const { return a * b; }
  bool is_zero(V a) const { return a == 0.0; }
  double mag(V a) const { return std::fabs(a); }
  V scale2(V a, int e) const { return std::ldexp(a, e); }
  double primal(V a) const { return a; }
};

struct AdRing {
  Tape* tape = nullptr;
  using V = Ad;
  V zero() const { return tape->zero(); }
  V one() const { return tape->one(); }
  V plus(V a, V b) const { return tape->add(a, b); }
  V times(V a, V b) const { return tape->mul(a, b); }
  bool is_zero(V a) const { return tape->is_zero(a); }
  double mag(V a) const { return std::fabs(tape->val(a)); }
  V scale2(V a, int e) const {
    if (e == 0 || tape->is_zero(a)) return a;
    return tape->mul(a, tape->cst(std::ldexp(1.0, e)));
  }
  double primal(V a) const { return tape->val(a); }
};

// First-order expectation semiring: (p, e) with e accumulating p-weighted
// additive statistics, here the unmatched-puncteme count.
template <class Base>
struct PairRing {
  Base base;
  struct V {
    typename Base::V p, e;
  };
  V zero() const { return {base.zero(), base.zero()}; }
  V one() const { return {base.one(), base.zero()}; }
  V plus(const V& a, const V& b) const {
    return {base.plus(a.p, b.p), base.plus(a.e, b.e)};
  }
  V times(const V& a, const V& b) const {
    typename Base::V e1 = base.is_zero(a.p) || base.is_zero(b.e)
                              ? base.zero()
                              : base.times(a.p, b.e);
    typename Base::V e2 = base.is_zero(a.e) || base.is_zero(b.p)
                              ? base.zero()
                              : base.times(a.e, b.p);
    return {base.times(a.p, b.p), base.plus(e1, e2)};
  }
  bool is_zero(const V& a) const { return base.is_zero(a.p) && base.is_zero(a.e); }
  double mag(const V& a) const { return std::max(base.mag(a.p), base.mag(a.e)); }
  V scale2(const V& a, int e) const {
    return {base.scale2(a.p, e), base.scale2(a.e, e)};
  }
};

}  // namespace punct

#endif
