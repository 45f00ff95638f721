#include "spikekit/skeleton.hpp"

#include <cmath>
#include <stdexcept>

namespace spikekit {

BitOp bit_op_from_string(const std::string& name) {
  if (name == "AND") return BitOp::kAnd;
  if (name == "OR") return BitOp::kOr;
  if (name == "XOR") return BitOp::kXor;
  throw std::invalid_argument("unknown bit op '" + name + "'");
}

const char* to_string(BitOp op) {
  switch (op) {
    case BitOp::kAnd: return "AND";
    case BitOp::kOr: return "OR";
    case BitOp::kXor: return "XOR";
  }
  return "?";
}

ConsistencyFn consistency_fn_from_string(const std::string& name) {
  if (name == "MSE") return ConsistencyFn::kMse;
  if (name == "KL") return ConsistencyFn::kKl;
  if (name == "COSINE") return ConsistencyFn::kCosine;
  throw std::invalid_argument("unknown consistency fn '" + name + "'");
}

const char* to_string(ConsistencyFn fn) {
  switch (fn) {
    case ConsistencyFn::kMse: return "MSE";
    case ConsistencyFn::kKl: return "KL";
    case ConsistencyFn::kCosine: return "COSINE";
  }
  return "?";
}

std::vector<Tensor> stable_and(const std::vector<Tensor>& spikes) {
  return bit_combine(spikes, BitOp::kAnd);
}

std::vector<Tensor> bit_combine(const std::vector<Tensor>& spikes, BitOp op) {
  if (spikes.size() < 2)
    throw std::invalid_argument(
        "bit_combine: need at least 2 timesteps, got " +
        std::to_string(spikes.size()));
  std::vector<Tensor> out;
  out.reserve(spikes.size() - 1);
  for (size_t t = 0; t + 1 < spikes.size(); ++t) {
    const Tensor& a = spikes[t];
    const Tensor& b = spikes[t + 1];
    Tensor ab = a * b;
    switch (op) {
      case BitOp::kAnd:
        out.push_back(ab);
        break;
      case BitOp::kOr:
        out.push_back(a + b - ab);
        break;
      case BitOp::kXor:
        out.push_back(a + b - scalar_mul(ab, 2.0));
        break;
    }
  }
  return out;
}

namespace {

Tensor mean_of(const std::vector<Tensor>& maps) {
  Tensor acc = maps[0];
  for (size_t t = 1; t < maps.size(); ++t) acc = acc + maps[t];
  return scalar_mul(acc, 1.0 / static_cast<scalar_t>(maps.size()));
}

}  // namespace

Tensor firing_rate(const std::vector<Tensor>& spikes) {
  if (spikes.empty())
    throw std::invalid_argument("firing_rate: empty spike sequence");
  return mean_of(spikes);
}

Tensor stable_firing_rate(const std::vector<Tensor>& skeleton) {
  if (skeleton.empty())
    throw std::invalid_argument("stable_firing_rate: empty skeleton");
  return mean_of(skeleton);
}

namespace {

constexpr scalar_t kRateEps = 1e-8;

// KL(anchor || rate) on per-sample distributions obtained by adding a
// small epsilon and normalizing the flattened rate maps. The anchor is
// a constant; the gradient reaches only the rate argument.
Tensor kl_rate_loss(const Tensor& anchor, const Tensor& rate) {
  const index_t batch = rate.dim(0);
  const index_t m = rate.size() / batch;
  const ArrayX& av = anchor.values();
  scalar_t loss = 0.0;
  for (index_t b = 0; b < batch; ++b) {
    auto a = av.segment(b * m, m) + kRateEps;
    auto r = rate.values().segment(b * m, m) + kRateEps;
    scalar_t asum = a.sum(), rsum = r.sum();
    loss += ((a / asum) * ((a / asum).log() - (r / rsum).log())).sum();
  }
  ArrayX out(1);
  out[0] = loss / batch;
  ArrayX anchor_values = anchor.values();
  return make_op(
      "kl_rate_loss", {1}, std::move(out), {rate},
      [batch, m, anchor_values](detail::TapeNode& n) {
        if (!n.parents[0]->requires_grad) return;
        ArrayX dx(batch * m);
        for (index_t b = 0; b < batch; ++b) {
          ArrayX a = anchor_values.segment(b * m, m) + kRateEps;
          ArrayX r = n.parents[0]->values.segment(b * m, m) + kRateEps;
          a /= a.sum();
          dx.segment(b * m, m) = (1.0 / r.sum() - a / r) / batch;
        }
        n.parents[0]->accumulate(dx * n.grad[0]);
      });
}

// Mean over samples of 1 - cos(anchor, rate) on flattened vectors; a
// zero-norm side contributes 0 (degenerate silence).
Tensor cosine_rate_loss(const Tensor& anchor, const Tensor& rate) {
  const index_t batch = rate.dim(0);
  const index_t m = rate.size() / batch;
  const ArrayX& av = anchor.values();
  scalar_t loss = 0.0;
  for (index_t b = 0; b < batch; ++b) {
    auto a = av.segment(b * m, m);
    auto r = rate.values().segment(b * m, m);
    scalar_t na = std::sqrt(a.square().sum()), nr = std::sqrt(r.square().sum());
    if (na == 0.0 || nr == 0.0) continue;
    loss += 1.0 - (a * r).sum() / (na * nr);
  }
  ArrayX out(1);
  out[0] = loss / batch;
  ArrayX anchor_values = anchor.values();
  return make_op(
      "cosine_rate_loss", {1}, std::move(out), {rate},
      [batch, m, anchor_values](detail::TapeNode& n) {
        if (!n.parents[0]->requires_grad) return;
        ArrayX dx = ArrayX::Zero(batch * m);
        for (index_t b = 0; b < batch; ++b) {
          auto a = anchor_values.segment(b * m, m);
          auto r = n.parents[0]->values.segment(b * m, m);
          scalar_t na = std::sqrt(a.square().sum());
          scalar_t nr = std::sqrt(r.square().sum());
          if (na == 0.0 || nr == 0.0) continue;
          scalar_t dot = (a * r).sum();
          dx.segment(b * m, m) =
              -(a / (na * nr) - r * (dot / (na * nr * nr * nr))) / batch;
        }
        n.parents[0]->accumulate(dx * n.grad[0]);
      });
}

}  // namespace

Tensor spike_consistency_loss(const Tensor& anchor, const Tensor& rate,
                              ConsistencyFn fn) {
  if (anchor.shape() != rate.shape())
    throw std::invalid_argument("spike_consistency_loss: shape mismatch " +
                                shape_str(anchor.shape()) + " vs " +
                                shape_str(rate.shape()));
  switch (fn) {
    case ConsistencyFn::kMse:
      return mean(square(anchor - rate));
    case ConsistencyFn::kKl:
      return kl_rate_loss(anchor, rate);
    case ConsistencyFn::kCosine:
      return cosine_rate_loss(anchor, rate);
  }
  throw std::logic_error("spike_consistency_loss: bad fn");
}

}  // namespace spikekit
