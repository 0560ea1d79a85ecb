#include "punct/autodiff.hpp"

namespace punct {

void Tape::backward(Ad output, double seed, std::vector<double>& adj) const {
  if (adj.size() != recs_.size()) adj.assign(recs_.size(), 0.0);
  adj[size_t(output.i)] += seed;
  for (size_t k = recs_.size(); k-- > 2;) {
    double g = adj[k];
    if (g == 0.0) continue;
    const Rec& r = recs_[k];
    switch (r.op) {
      case kCst:
      case kLeaf:
        break;
      case kAdd:
        adj[size_t(r.a)] += g;
        adj[size_t(r.b)] += g;
        break;
      case kSub:
        adj[size_t(r.a)] += g;
        adj[size_t(r.b)] -= g;
        break;
      case kMul:
        adj[size_t(r.a)] += g * vals_[size_t(r.b)];
        adj[size_t(r.b)] += g * vals_[size_t(r.a)];
        break;
      case kDiv: {
        double vb = vals_[size_t(r.b)];
        adj[size_t(r.a)] += g / vb;
        adj[size_t(r.b)] -= g * vals_[size_t(r.a)] / (vb * vb);
        break;
      }
      case kExp:
        adj[size_t(r.a)] += g * vals_[k];
        break;
      case kLog:
        adj[size_t(r.a)] += g / vals_[size_t(r.a)];
        break;
      case kNeg:
        adj[size_t(r.a)] -= g;
        break;
    }
  }
}

}  // namespace punct
