#ifndef PUNCT_CHANNEL_HPP
#define PUNCT_CHANNEL_HPP

#include <array>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "punct/rng.hpp"
#include "punct/semiring.hpp"

namespace punct {

// The sliding-window noisy channel. A 2-token window (a, b) is rewritten by
// one of four edits chosen stochastically; the window then slides to cover
// the next input token. The whole process is realized as a probabilistic
// FST with one state per alphabet symbol plus boundary states.

enum class Edit { Keep = 0, LeftAbsorb = 1, RightAbsorb = 2, Transpose = 3 };
enum class Direction { L2R, R2L };

struct ChannelParams {
  int sigma = 0;  // alphabet size; token ids are 0..sigma-1
  std::vector<std::array<double, 4>> scores;  // raw scores per ordered bigram
  Direction direction = Direction::L2R;
  bool identity = false;  // keep-edit probability forced to 1 (ATTACH ablation)

  static ChannelParams make(int sigma, Direction dir = Direction::L2R) {
    ChannelParams p;
    p.sigma = sigma;
    p.direction = dir;
    p.scores.assign(size_t(sigma) * size_t(sigma), {0, 0, 0, 0});
    return p;
  }
  int bigram(int a, int b) const { return a * sigma + b; }
  std::array<double, 4>& at(int a, int b) { return scores[size_t(bigram(a, b))]; }
  const std::array<double, 4>& at(int a, int b) const {
    return scores[size_t(bigram(a, b))];
  }
};

// softmax of the 4 raw scores, in the order (keep, leftAbsorb, rightAbsorb,
// transpose); throws on tokens outside the alphabet
std::array<double, 4> edit_distribution(int a, int b, const ChannelParams& p);

// One left-to-right pass of the sliding window. R2L channels are run by
// mirroring: reverse the input, run L2R, reverse the output.
std::vector<int> simulate_l2r(std::span<const int> u, const ChannelParams& p,
                              Rng& rng);
std::vector<int> simulate(std::span<const int> u, const ChannelParams& p,
                          Rng& rng);
// picks the argmax edit at every window instead of sampling
std::vector<int> simulate_argmax(std::span<const int> u, const ChannelParams& p);

// Total probability that the channel rewrites u into x, summed over all
// edit sequences. Dynamic program over (input position, pending token,
// output position); independent of the automaton construction below.
double channel_prob_l2r(std::span<const int> u, std::span<const int> x,
                        const ChannelParams& p);
double channel_prob(std::span<const int> u, std::span<const int> x,
                    const ChannelParams& p);

enum class ArcKind : uint8_t {
  Boundary,   // probability 1 (initial slide-in and end-of-input arcs)
  Keep,       // (a) -b:a-> (b)
  LeftAbsorb, // (a) -b:eps-> (b)
  RightAbsorb,// (a) -b:eps-> (a)
  Transpose,  // (a) -b:b-> (a)
  EqualEmit,  // a = b: keep and transpose coincide; carries their sum
  EqualEps,   // a = b: the two absorptions coincide; carries their sum
};

struct Pfst {
  static constexpr int kEpsilon = -1;
  static constexpr int kEndMarker = -2;

  int sigma = 0;
  struct Arc {
    int from, to;
    int in;   // token id or kEndMarker
    int out;  // token id or kEpsilon
    double prob;
    ArcKind kind;
    int a = -1, b = -1;  // window tokens for edit arcs
  };
  std::vector<Arc> arcs;

  int state_lambda() const { return 0; }
  int state_final() const { return sigma + 1; }
  int state_of(int token) const { return token + 1; }
  int num_states() const { return sigma + 2; }
};

Pfst build_pfst(const ChannelParams& p);

// Composition of the PFST with the straight-line acceptor of one surface
// slot string x, trimmed to useful states and projected onto the input
// tape. End-of-input arcs are folded into the final weights rho so that
// lambda^T M(u) rho equals channel_prob(u, x). State 0 is initial; the
// composite final state is kept as the last state.
struct SlotAutomaton {
  int n_states = 0;
  std::vector<int> x;  // the surface string this automaton explains
  struct Arc {
    int from, to;
    ArcKind kind;
    int a, b;  // window; boundary arcs use a = -1, b = consumed token
  };
  std::vector<std::vector<Arc>> arcs_by_token;  // index: consumed token id
  std::vector<int> rho_states;                  // folded final weight 1
  std::vector<std::pair<int, int>> bigrams;     // distinct windows used
};

SlotAutomaton compose_slot(const Pfst& pfst, std::span<const int> x);

// Edit probabilities materialized in a ring (plain doubles or tape nodes).
template <class Ring>
struct EditWeights {
  using V = typename Ring::V;
  const Ring* ring = nullptr;
  int sigma = 0;
  bool identity = false;
  std::vector<std::array<V, 4>> probs;  // per bigram; unset entries unused

  V weight(ArcKind kind, int a, int b) const {
    const Ring& rg = *ring;
    if (kind == ArcKind::Boundary) return rg.one();
    if (identity) {
      switch (kind) {
        case ArcKind::Keep:
        case ArcKind::EqualEmit:
          return rg.one();
        default:
          return rg.zero();
      }
    }
    const auto& p = probs[size_t(a) * size_t(sigma) + size_t(b)];
    switch (kind) {
      case ArcKind::Keep: return p[0];
      case ArcKind::LeftAbsorb: return p[1];
      case ArcKind::RightAbsorb: return p[2];
      case ArcKind::Transpose: return p[3];
      case ArcKind::EqualEmit: return rg.plus(p[0], p[3]);
      case ArcKind::EqualEps: return rg.plus(p[1], p[2]);
      default: return rg.zero();
    }
  }
};

EditWeights<DoubleRing> make_edit_weights(const DoubleRing& ring,
                                          const ChannelParams& p);

// M(token) acting on a column vector: out[s] (+)= w(arc s->t) (x) in[t]
template <class Ring>
void slot_apply_col(const SlotAutomaton& sa, int token,
                    const EditWeights<Ring>& w, const Ring& ring,
                    std::span<const typename Ring::V> in,
                    std::span<typename Ring::V> out) {
  if (token < 0 || size_t(token) >= sa.arcs_by_token.size()) return;
  for (const auto& arc : sa.arcs_by_token[size_t(token)]) {
    if (ring.is_zero(in[size_t(arc.to)])) continue;
    auto wt = w.weight(arc.kind, arc.a, arc.b);
    if (ring.is_zero(wt)) continue;
    out[size_t(arc.from)] =
        ring.plus(out[size_t(arc.from)], ring.times(wt, in[size_t(arc.to)]));
  }
}

// row vector action: out[t] (+)= in[s] (x) w(arc s->t)
template <class Ring>
void slot_apply_row(const SlotAutomaton& sa, int token,
                    const EditWeights<Ring>& w, const Ring& ring,
                    std::span<const typename Ring::V> in,
                    std::span<typename Ring::V> out) {
  if (token < 0 || size_t(token) >= sa.arcs_by_token.size()) return;
  for (const auto& arc : sa.arcs_by_token[size_t(token)]) {
    if (ring.is_zero(in[size_t(arc.from)])) continue;
    auto wt = w.weight(arc.kind, arc.a, arc.b);
    if (ring.is_zero(wt)) continue;
    out[size_t(arc.to)] =
        ring.plus(out[size_t(arc.to)], ring.times(in[size_t(arc.from)], wt));
  }
}

// dense N x N matrix of M(token), for the derivation-semiring path where
// puncteme matrices are computed by ordinary real arithmetic first
void slot_token_matrix(const SlotAutomaton& sa, int token,
                       const EditWeights<DoubleRing>& w,
                       std::vector<double>& out);

// M(p) = M(p_1) M(p_2) ... M(p_m); the empty puncteme gives the identity
std::vector<double> puncteme_matrix(const SlotAutomaton& sa,
                                    std::span<const int> tokens,
                                    const EditWeights<DoubleRing>& w);

}  // namespace punct

#endif
