#include "spikekit/noise.hpp"

#include <cmath>
#include <stdexcept>

namespace spikekit {

NoiseKind noise_kind_from_string(const std::string& name) {
  if (name == "AMPLITUDE_AWARE") return NoiseKind::kAmplitudeAware;
  if (name == "FIXED_P") return NoiseKind::kFixedP;
  if (name == "GAUSSIAN") return NoiseKind::kGaussian;
  throw std::invalid_argument("unknown noise kind '" + name + "'");
}

const char* to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::kAmplitudeAware: return "AMPLITUDE_AWARE";
    case NoiseKind::kFixedP: return "FIXED_P";
    case NoiseKind::kGaussian: return "GAUSSIAN";
  }
  return "?";
}

void NoiseSpec::validate() const {
  if (kind == NoiseKind::kFixedP && (p < 0.0 || p > 1.0))
    throw std::invalid_argument("noise: FIXED_P probability " +
                                std::to_string(p) + " outside [0,1]");
  if (kind == NoiseKind::kGaussian && std < 0.0)
    throw std::invalid_argument("noise: negative Gaussian std");
}

ArrayX sample_noise(const ArrayX& stable_rate, const NoiseSpec& spec,
                    Rng& rng) {
  spec.validate();
  ArrayX eps(stable_rate.size());
  switch (spec.kind) {
    case NoiseKind::kAmplitudeAware:
      if ((stable_rate < 0.0).any() || (stable_rate > 1.0).any())
        throw std::invalid_argument(
            "sample_noise: rate values outside [0,1]");
      for (index_t i = 0; i < eps.size(); ++i)
        eps[i] = rng.bernoulli(stable_rate[i]) ? 1.0 : 0.0;
      break;
    case NoiseKind::kFixedP:
      for (index_t i = 0; i < eps.size(); ++i)
        eps[i] = rng.bernoulli(spec.p) ? 1.0 : 0.0;
      break;
    case NoiseKind::kGaussian:
      for (index_t i = 0; i < eps.size(); ++i)
        eps[i] = spec.std * rng.normal();
      break;
  }
  return eps;
}

Tensor perturb(const Tensor& stable_rate, const ArrayX& noise) {
  if (noise.size() != stable_rate.size())
    throw std::invalid_argument("perturb: noise size " +
                                std::to_string(noise.size()) +
                                " vs rate " + shape_str(stable_rate.shape()));
  return add(stable_rate, Tensor::from_array(stable_rate.shape(), noise));
}

bool on_perturbed_lattice(const ArrayX& values, index_t timesteps,
                          scalar_t tol) {
  if (timesteps < 2) return false;
  const scalar_t denom = static_cast<scalar_t>(timesteps - 1);
  for (index_t i = 0; i < values.size(); ++i) {
    scalar_t scaled = values[i] * denom;
    scalar_t nearest = std::round(scaled);
    if (std::abs(scaled - nearest) > tol * denom) return false;
    if (nearest < -tol || nearest > 2.0 * denom + tol) return false;
  }
  return true;
}

Tensor soften(const Tensor& logits, scalar_t temperature) {
  return softmax(logits, temperature);
}

Tensor perturbation_loss(const Tensor& clean_logits,
                         const Tensor& noisy_logits, scalar_t temperature,
                         bool detach_clean) {
  if (clean_logits.shape() != noisy_logits.shape())
    throw std::invalid_argument("perturbation_loss: shape mismatch " +
                                shape_str(clean_logits.shape()) + " vs " +
                                shape_str(noisy_logits.shape()));
  const scalar_t k = static_cast<scalar_t>(clean_logits.shape().back());
  Tensor p = soften(detach_clean ? clean_logits.detach() : clean_logits,
                    temperature);
  Tensor q = soften(noisy_logits, temperature);
  // KL(p||q) summed over classes, averaged over the batch: the full mean
  // runs over B*K elements, so scale back by K.
  Tensor kl = mean(mul(p, log(p) - log(q)));
  return scalar_mul(kl, temperature * temperature * k);
}

}  // namespace spikekit
