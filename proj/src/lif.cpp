#include "spikekit/lif.hpp"

#include <stdexcept>

namespace spikekit {

void LifParams::validate() const {
  if (!(tau > 1.0))
    throw std::invalid_argument("lif: tau must exceed 1, got " +
                                std::to_string(tau));
  if (!(theta > 0.0))
    throw std::invalid_argument("lif: theta must be positive");
  if (!(surrogate_width > 0.0))
    throw std::invalid_argument("lif: surrogate width must be positive");
}

ArrayX surrogate_grad(const ArrayX& charge, const LifParams& p) {
  const scalar_t half = 0.5 * p.surrogate_width;
  const scalar_t inv = 1.0 / p.surrogate_width;
  return ((charge - p.theta).abs() < half).select(inv, ArrayX::Zero(charge.size()));
}

Tensor spike(const Tensor& charge, const LifParams& p, SpikeMode mode) {
  ArrayX out;
  if (mode == SpikeMode::kHard) {
    out = (charge.values() >= p.theta)
              .select(ArrayX::Ones(charge.size()),
                      ArrayX::Zero(charge.size()));
  } else {
    // Antiderivative of the rectangular window: linear ramp over
    // [theta - a/2, theta + a/2], clipped to [0, 1].
    out = ((charge.values() - p.theta) / p.surrogate_width + 0.5)
              .cwiseMax(0.0)
              .cwiseMin(1.0);
  }
  return make_op("spike", charge.shape(), std::move(out), {charge},
                 [p](detail::TapeNode& n) {
                   if (n.parents[0]->requires_grad)
                     n.parents[0]->accumulate(
                         n.grad * surrogate_grad(n.parents[0]->values, p));
                 });
}

LifStepResult lif_step(const MembraneState& prev, const Tensor& input,
                       const LifParams& p, SpikeMode mode) {
  p.validate();
  Tensor charge;
  if (prev.potential.defined()) {
    if (prev.potential.shape() != input.shape())
      throw std::invalid_argument("lif_step: state " +
                                  shape_str(prev.potential.shape()) +
                                  " vs input " + shape_str(input.shape()));
    charge = scalar_mul(prev.potential, 1.0 - 1.0 / p.tau) + input;
  } else {
    charge = input;  // zero initial state
  }
  Tensor s = spike(charge, p, mode);
  // Soft reset; the subtraction back-propagates through both the carried
  // potential and the spike (full BPTT through the reset path).
  Tensor next = charge - scalar_mul(s, p.theta);
  return {s, MembraneState{next}, charge};
}

std::vector<Tensor> lif_sequence(const std::vector<Tensor>& inputs,
                                 const LifParams& p, SpikeMode mode) {
  if (inputs.empty())
    throw std::invalid_argument("lif_sequence: empty input sequence");
  std::vector<Tensor> spikes;
  spikes.reserve(inputs.size());
  MembraneState state;
  for (const Tensor& input : inputs) {
    LifStepResult r = lif_step(state, input, p, mode);
    spikes.push_back(r.spikes);
    state = r.state;
  }
  return spikes;
}

}  // namespace spikekit
