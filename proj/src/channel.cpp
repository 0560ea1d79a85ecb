#include "punct/channel.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace punct {

std::array<double, 4> edit_distribution(int a, int b, const ChannelParams& p) {
  if (a < 0 || a >= p.sigma || b < 0 || b >= p.sigma)
    throw std::runtime_error("edit_distribution: token outside the alphabet");
  if (p.identity) return {1.0, 0.0, 0.0, 0.0};
  const auto& s = p.at(a, b);
  double m = std::max(std::max(s[0], s[1]), std::max(s[2], s[3]));
  std::array<double, 4> e;
  double z = 0;
  for (int k = 0; k < 4; ++k) {
    e[size_t(k)] = std::exp(s[size_t(k)] - m);
    z += e[size_t(k)];
  }
  for (auto& v : e) v /= z;
  return e;
}

std::vector<int> simulate_l2r(std::span<const int> u, const ChannelParams& p,
                              Rng& rng) {
  std::vector<int> out;
  out.reserve(u.size());
  int pending = -1;
  for (int b : u) {
    if (pending < 0) {
      pending = b;
      continue;
    }
    auto d = edit_distribution(pending, b, p);
    double r = rng.next_double();
    int edit = 3;
    for (int k = 0; k < 3; ++k) {
      if (r < d[size_t(k)]) {
        edit = k;
        break;
      }
      r -= d[size_t(k)];
    }
    switch (Edit(edit)) {
      case Edit::Keep:
        out.push_back(pending);
        pending = b;
        break;
      case Edit::LeftAbsorb:
        pending = b;
        break;
      case Edit::RightAbsorb:
        break;
      case Edit::Transpose:
        out.push_back(b);
        break;
    }
  }
  if (pending >= 0) out.push_back(pending);
  return out;
}

namespace {
std::vector<int> reversed(std::span<const int> v) {
  return std::vector<int>(v.rbegin(), v.rend());
}
}  // namespace

std::vector<int> simulate(std::span<const int> u, const ChannelParams& p,
                          Rng& rng) {
  if (p.direction == Direction::L2R) return simulate_l2r(u, p, rng);
  std::vector<int> m = reversed(u);
  std::vector<int> x = simulate_l2r(m, p, rng);
  std::reverse(x.begin(), x.end());
  return x;
}

std::vector<int> simulate_argmax(std::span<const int> u, const ChannelParams& p) {
  std::vector<int> in = p.direction == Direction::L2R
                            ? std::vector<int>(u.begin(), u.end())
                            : reversed(u);
  std::vector<int> out;
  int pending = -1;
  for (int b : in) {
    if (pending < 0) {
      pending = b;
      continue;
    }
    auto d = edit_distribution(pending, b, p);
    int edit = 0;
    for (int k = 1; k < 4; ++k)
      if (d[size_t(k)] > d[size_t(edit)]) edit = k;
    switch (Edit(edit)) {
      case Edit::Keep:
        out.push_back(pending);
        pending = b;
        break;
      case Edit::LeftAbsorb:
        pending = b;
        break;
      case Edit::RightAbsorb:
        break;
      case Edit::Transpose:
        out.push_back(b);
        break;
    }
  }
  if (pending >= 0) out.push_back(pending);
  if (p.direction == Direction::R2L) std::reverse(out.begin(), out.end());
  return out;
}

double channel_prob_l2r(std::span<const int> u, std::span<const int> x,
                        const ChannelParams& p) {
  const int nx = int(x.size());
  // dp[pending + 1][j]: pending = -1 is the pre-input boundary state
  std::vector<std::vector<double>> dp(size_t(p.sigma) + 1,
                                      std::vector<double>(size_t(nx) + 1, 0.0));
  dp[0][0] = 1.0;
  for (int b : u) {
    std::vector<std::vector<double>> nd(
        size_t(p.sigma) + 1, std::vector<double>(size_t(nx) + 1, 0.0));
    for (int pend = -1; pend < p.sigma; ++pend) {
      const auto& row = dp[size_t(pend + 1)];
      for (int j = 0; j <= nx; ++j) {
        double w = row[size_t(j)];
        if (w == 0.0) continue;
        if (pend < 0) {
          nd[size_t(b + 1)][size_t(j)] += w;
          continue;
        }
        auto d = edit_distribution(pend, b, p);
        if (j < nx && x[size_t(j)] == pend)
          nd[size_t(b + 1)][size_t(j) + 1] += w * d[0];  // keep emits pending
        nd[size_t(b + 1)][size_t(j)] += w * d[1];        // left absorption
        nd[size_t(pend + 1)][size_t(j)] += w * d[2];     // right absorption
        if (j < nx && x[size_t(j)] == b)
          nd[size_t(pend + 1)][size_t(j) + 1] += w * d[3];  // transposition
      }
    }
    dp = std::move(nd);
  }
  double total = 0;
  if (nx == 0) total += dp[0][0];  // empty input explains only empty output
  for (int pend = 0; pend < p.sigma; ++pend)
    if (nx >= 1 && x[size_t(nx) - 1] == pend)
      total += dp[size_t(pend + 1)][size_t(nx) - 1];  // final emit of pending
  return total;
}

double channel_prob(std::span<const int> u, std::span<const int> x,
                    const ChannelParams& p) {
  if (p.direction == Direction::L2R) return channel_prob_l2r(u, x, p);
  std::vector<int> mu = reversed(u), mx = reversed(x);
  return channel_prob_l2r(mu, mx, p);
}

Pfst build_pfst(const ChannelParams& p) {
  Pfst f;
  f.sigma = p.sigma;
  for (int a = 0; a < p.sigma; ++a) {
    for (int b = 0; b < p.sigma; ++b) {
      auto d = edit_distribution(a, b, p);
      int sa = f.state_of(a), sb = f.state_of(b);
      if (a != b) {
        f.arcs.push_back({sa, sb, b, a, d[0], ArcKind::Keep, a, b});
        f.arcs.push_back({sa, sb, b, Pfst::kEpsilon, d[1], ArcKind::LeftAbsorb, a, b});
        f.arcs.push_back({sa, sa, b, Pfst::kEpsilon, d[2], ArcKind::RightAbsorb, a, b});
        f.arcs.push_back({sa, sa, b, b, d[3], ArcKind::Transpose, a, b});
      } else {
        f.arcs.push_back({sa, sa, a, a, d[0] + d[3], ArcKind::EqualEmit, a, a});
        f.arcs.push_back({sa, sa, a, Pfst::kEpsilon, d[1] + d[2], ArcKind::EqualEps, a, a});
      }
    }
  }
  for (int a = 0; a < p.sigma; ++a) {
    f.arcs.push_back({f.state_lambda(), f.state_of(a), a, Pfst::kEpsilon, 1.0,
                      ArcKind::Boundary, -1, a});
    f.arcs.push_back({f.state_of(a), f.state_final(), Pfst::kEndMarker, a, 1.0,
                      ArcKind::Boundary, -1, -2});
  }
  f.arcs.push_back({f.state_lambda(), f.state_final(), Pfst::kEndMarker,
                    Pfst::kEpsilon, 1.0, ArcKind::Boundary, -1, -2});
  return f;
}

SlotAutomaton compose_slot(const Pfst& pfst, std::span<const int> x) {
  const int nx = int(x.size());
  const int ns = pfst.num_states();
  auto sid = [&](int y, int z) { return z * ns + y; };
  const int total = ns * (nx + 1);

  struct CArc {
    int from, to;
    int in;  // token or kEndMarker
    ArcKind kind;
    int a, b;
  };
  std::vector<CArc> carcs;
  for (const auto& arc : pfst.arcs) {
    for (int z = 0; z <= nx; ++z) {
      int zt;
      if (arc.out == Pfst::kEpsilon) {
        zt = z;
      } else if (z < nx && x[size_t(z)] == arc.out) {
        zt = z + 1;
      } else {
        continue;
      }
      carcs.push_back({sid(arc.from, z), sid(arc.to, zt), arc.in, arc.kind,
                       arc.a, arc.b});
    }
  }

  // forward accessibility from (Lambda, 0)
  const size_t total_sz = size_t(total);
  std::vector<std::vector<int>> fwd(total_sz), bwd(total_sz);
  for (size_t k = 0; k < carcs.size(); ++k) {
    fwd[size_t(carcs[k].from)].push_back(int(k));
    bwd[size_t(carcs[k].to)].push_back(int(k));
  }
  std::vector<char> acc(size_t(total), 0), coacc(size_t(total), 0);
  std::vector<int> stack{sid(pfst.state_lambda(), 0)};
  acc[size_t(stack[0])] = 1;
  while (!stack.empty()) {
    int s = stack.back();
    stack.pop_back();
    for (int k : fwd[size_t(s)]) {
      int t = carcs[size_t(k)].to;
      if (!acc[size_t(t)]) {
        acc[size_t(t)] = 1;
        stack.push_back(t);
      }
    }
  }
  int final_state = sid(pfst.state_final(), nx);
  coacc[size_t(final_state)] = 1;
  stack.push_back(final_state);
  while (!stack.empty()) {
    int s = stack.back();
    stack.pop_back();
    for (int k : bwd[size_t(s)]) {
      int t = carcs[size_t(k)].from;
      if (!coacc[size_t(t)]) {
        coacc[size_t(t)] = 1;
        stack.push_back(t);
      }
    }
  }

  // useful states ordered by (z, y); the initial state sorts first and the
  // final composite state last, matching the figure convention
  std::vector<int> states;
  for (int z = 0; z <= nx; ++z)
    for (int y = 0; y < ns; ++y) {
      int s = sid(y, z);
      if (acc[size_t(s)] && coacc[size_t(s)]) states.push_back(s);
    }
  std::vector<int> index(size_t(total), -1);
  for (size_t i = 0; i < states.size(); ++i) index[size_t(states[i])] = int(i);

  SlotAutomaton sa;
  sa.x.assign(x.begin(), x.end());
  sa.n_states = int(states.size());
  sa.arcs_by_token.assign(size_t(pfst.sigma), {});
  std::map<std::pair<int, int>, int> seen_bigrams;
  for (const auto& c : carcs) {
    int fi = index[size_t(c.from)], ti = index[size_t(c.to)];
    if (fi < 0 || ti < 0) continue;
    if (c.in == Pfst::kEndMarker) {
      sa.rho_states.push_back(fi);
    } else {
      sa.arcs_by_token[size_t(c.in)].push_back({fi, ti, c.kind, c.a, c.b});
      if (c.a >= 0 && seen_bigrams.emplace(std::make_pair(c.a, c.b), 1).second)
        sa.bigrams.emplace_back(c.a, c.b);
    }
  }
  return sa;
}

EditWeights<DoubleRing> make_edit_weights(const DoubleRing& ring,
                                          const ChannelParams& p) {
  EditWeights<DoubleRing> w;
  w.ring = &ring;
  w.sigma = p.sigma;
  w.identity = p.identity;
  if (!p.identity) {
    w.probs.resize(size_t(p.sigma) * size_t(p.sigma));
    for (int a = 0; a < p.sigma; ++a)
      for (int b = 0; b < p.sigma; ++b)
        w.probs[size_t(p.bigram(a, b))] = edit_distribution(a, b, p);
  }
  return w;
}

void slot_token_matrix(const SlotAutomaton& sa, int token,
                       const EditWeights<DoubleRing>& w,
                       std::vector<double>& out) {
  out.assign(size_t(sa.n_states) * size_t(sa.n_states), 0.0);
  if (token < 0 || size_t(token) >= sa.arcs_by_token.size()) return;
  for (const auto& arc : sa.arcs_by_token[size_t(token)])
    out[size_t(arc.from) * size_t(sa.n_states) + size_t(arc.to)] +=
        w.weight(arc.kind, arc.a, arc.b);
}

std::vector<double> puncteme_matrix(const SlotAutomaton& sa,
                                    std::span<const int> tokens,
                                    const EditWeights<DoubleRing>& w) {
  const size_t n = size_t(sa.n_states);
  std::vector<double> acc(n * n, 0.0);
  for (size_t i = 0; i < n; ++i) acc[i * n + i] = 1.0;
  std::vector<double> tok, next(n * n);
  for (int t : tokens) {
    slot_token_matrix(sa, t, w, tok);
    std::fill(next.begin(), next.end(), 0.0);
    for (size_t i = 0; i < n; ++i)
      for (size_t k = 0; k < n; ++k) {
        double a = acc[i * n + k];
        if (a == 0.0) continue;
        for (size_t j = 0; j < n; ++j) next[i * n + j] += a * tok[k * n + j];
      }
    acc.swap(next);
  }
  return acc;
}

}  // namespace punct
