#pragma once

#include <string>

#include "spikekit/ops.hpp"
#include "spikekit/rng.hpp"
#include "spikekit/tensor.hpp"

namespace spikekit {

enum class NoiseKind { kAmplitudeAware, kFixedP, kGaussian };

NoiseKind noise_kind_from_string(const std::string& name);
const char* to_string(NoiseKind kind);

/** Noise source applied to the stable firing rate during training. */
struct NoiseSpec {
  NoiseKind kind = NoiseKind::kAmplitudeAware;
  scalar_t p = 0.5;    // FIXED_P spike probability
  scalar_t std = 0.5;  // GAUSSIAN standard deviation

  void validate() const;
};

/** Draws one noise value per element. Spike kinds draw a Bernoulli
 *  spike (amplitude-aware uses the local rate as its probability); the
 *  Gaussian ablation draws Normal(0, std^2). The result carries no
 *  gradient. */
ArrayX sample_noise(const ArrayX& stable_rate, const NoiseSpec& spec,
                    Rng& rng);

/** Adds sampled noise to the stable firing rate. The rate argument
 *  stays on the tape, so the perturbation loss can train the backbone
 *  through it. */
Tensor perturb(const Tensor& stable_rate, const ArrayX& noise);

/** True when every value sits on the perturbed-rate lattice
 *  {0, 1/(T-1), ..., 2} within `tol`. */
bool on_perturbed_lattice(const ArrayX& values, index_t timesteps,
                          scalar_t tol = 1e-9);

/** Temperature-softened class distribution (Eq. softmax with max shift). */
Tensor soften(const Tensor& logits, scalar_t temperature);

/** alpha^2 * KL(soften(clean) || soften(noisy)), averaged over the
 *  batch. The clean side is detached by default (teacher). */
Tensor perturbation_loss(const Tensor& clean_logits,
                         const Tensor& noisy_logits, scalar_t temperature,
                         bool detach_clean = true);

}  // namespace spikekit
