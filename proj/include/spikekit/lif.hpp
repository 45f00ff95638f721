#pragma once

#include <vector>

#include "spikekit/ops.hpp"
#include "spikekit/tensor.hpp"

namespace spikekit {

/** Leaky integrate-and-fire parameters. */
struct LifParams {
  scalar_t tau = 2.0;              // leak constant, leak factor 1 - 1/tau
  scalar_t theta = 1.0;            // firing threshold
  scalar_t surrogate_width = 1.0;  // rectangular window width a

  void validate() const;
};

/** Forward mode of the threshold nonlinearity.
 *
 *  kHard emits binary spikes. kRamp replaces the step with the
 *  surrogate's antiderivative (a clipped linear ramp) so that finite
 *  differences of the whole network match the surrogate backward rule;
 *  it exists for gradient verification, not for training.
 */
enum class SpikeMode { kHard, kRamp };

/** Membrane potential carried across timesteps within one forward. */
struct MembraneState {
  Tensor potential;  // undefined means "zero state"
};

struct LifStepResult {
  Tensor spikes;
  MembraneState state;
  Tensor charge;  // pre-reset potential (saved for inspection/tests)
};

/** Elementwise surrogate derivative dS/dH: 1/a inside the window
 *  |H - theta| < a/2, zero outside. */
ArrayX surrogate_grad(const ArrayX& charge, const LifParams& p);

/** Threshold nonlinearity as a tape op: Heaviside(H - theta) forward
 *  (or its ramp stand-in), rectangular surrogate backward. */
Tensor spike(const Tensor& charge, const LifParams& p,
             SpikeMode mode = SpikeMode::kHard);

/** One timestep: charge with leak, fire, soft reset. */
LifStepResult lif_step(const MembraneState& prev, const Tensor& input,
                       const LifParams& p, SpikeMode mode = SpikeMode::kHard);

/** Folds lif_step over a sequence of input currents; state starts at
 *  zero and is dropped at the end (nothing leaks across samples). */
std::vector<Tensor> lif_sequence(const std::vector<Tensor>& inputs,
                                 const LifParams& p,
                                 SpikeMode mode = SpikeMode::kHard);

}  // namespace spikekit
