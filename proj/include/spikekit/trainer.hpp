#pragma once

#include <string>
#include <vector>

#include "spikekit/checkpoint.hpp"
#include "spikekit/config.hpp"
#include "spikekit/events.hpp"
#include "spikekit/model.hpp"

namespace spikekit {

/** Plain SGD with momentum and coupled weight decay:
 *  v <- mu*v + (g + wd*w), w <- w - lr*v. */
class Sgd {
 public:
  Sgd(std::vector<Tensor> params, scalar_t momentum, scalar_t weight_decay);

  void step(scalar_t lr);
  void zero_grad();

  const std::vector<ArrayX>& velocity() const { return velocity_; }
  void set_velocity(const std::vector<ArrayX>& v);

 private:
  std::vector<Tensor> params_;
  std::vector<ArrayX> velocity_;
  scalar_t momentum_;
  scalar_t weight_decay_;
};

struct StepLosses {
  scalar_t total = 0.0;
  scalar_t ce = 0.0;
  scalar_t spike = 0.0;
  scalar_t noise = 0.0;
  index_t correct = 0;  // argmax hits on this batch (pre-update)
  index_t batch = 0;
};

struct EpochRecord {
  int epoch = 0;
  scalar_t lr = 0.0;
  scalar_t train_acc = 0.0;
  scalar_t test_acc = 0.0;
  scalar_t mean_ce = 0.0;
  scalar_t mean_spike = 0.0;
  scalar_t mean_noise = 0.0;
};

struct EvalResult {
  scalar_t accuracy = 0.0;
  scalar_t hamming_variance = 0.0;  // mean adjacent-timestep distance
  size_t samples = 0;
};

struct FiringEnergyReport {
  std::vector<std::string> layer_names;       // one per LIF layer
  std::vector<scalar_t> rate_percent;         // spikes / (neurons*T*samples) * 100
  scalar_t synops = 0.0;                      // accumulate-op count
  scalar_t first_layer_macs = 0.0;
  scalar_t energy_pj = 0.0;
  size_t samples = 0;
};

struct MetricsReport {
  std::vector<EpochRecord> epochs;
  scalar_t final_test_acc = 0.0;
  scalar_t best_test_acc = 0.0;
  int best_epoch = -1;
  scalar_t test_hamming_variance = 0.0;
  FiringEnergyReport firing;
};

/** Batch view: frames[t] is [B,C,H,W] for timestep t. */
struct Batch {
  std::vector<Tensor> frames;
  std::vector<int> labels;
};

Batch assemble_batch(const Dataset& data, const std::vector<size_t>& indices);

/** One optimizer step of the dual-consistency objective:
 *  L = CE + beta * L_spike + gamma * L_noise. Throws on non-finite loss
 *  naming the offending component. */
StepLosses train_step(const Batch& batch, const SnnModel& model,
                      const TrainConfig& cfg, Sgd& opt, scalar_t lr,
                      Rng& noise_rng);

/** Full training run. When run_dir is non-empty, writes config echo,
 *  line-delimited metrics, the final report, and the best checkpoint
 *  there (all byte-deterministic for a fixed seed). */
MetricsReport fit(const Dataset& train, const Dataset& test, SnnModel& model,
                  const TrainConfig& cfg, const std::string& run_dir = "");

/** Inference-mode accuracy plus the mean adjacent-timestep Hamming
 *  distance of the backbone spike maps. No noise, no consistency. */
EvalResult evaluate(const Dataset& data, const SnnModel& model,
                    index_t eval_batch = 32);

/** Spike-rate and energy accounting over up to max_samples streams.
 *  SynOps_l = nonzero inputs of synaptic layer l x its fan-out; the
 *  first (analog-input) layer is counted as MACs instead. */
FiringEnergyReport firing_and_energy(const SnnModel& model,
                                     const Dataset& data, size_t max_samples,
                                     scalar_t e_ac_pj, scalar_t e_mac_pj);

/** Mean Hamming distance between adjacent backbone spike maps of one
 *  forward record, normalized by element count. */
scalar_t timestep_variance(const ForwardRecord& record);

/** Row argmax with lowest-index tie break. */
std::vector<int> argmax_rows(const Tensor& logits);

void write_metrics_report(const MetricsReport& report,
                          const std::string& path);

}  // namespace spikekit
