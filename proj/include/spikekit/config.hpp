#pragma once

#include <string>
#include <vector>

#include "spikekit/events.hpp"
#include "spikekit/noise.hpp"
#include "spikekit/skeleton.hpp"

namespace spikekit {

/** Full training configuration. Every field is serializable and echoed
 *  into the run directory before a run starts. */
struct TrainConfig {
  // model
  std::string arch = "CONV_SNN_MINI";
  index_t timesteps = 4;
  int classes = 4;

  // losses
  scalar_t beta = 1.0;
  scalar_t gamma = 1.0;
  scalar_t alpha = 2.0;
  ConsistencyFn consistency_fn = ConsistencyFn::kMse;
  BitOp bitop = BitOp::kAnd;
  NoiseSpec noise;
  bool dense = false;
  bool detach_anchor = true;      // skeleton rate as fixed target
  bool detach_clean = true;       // clean branch of the KL as teacher
  bool detach_noise_input = false;  // block grads through the perturbed rate

  // optimizer
  scalar_t lr = 0.1;
  scalar_t momentum = 0.9;
  scalar_t weight_decay = 1e-3;
  int lr_decay_every = 10;
  scalar_t lr_decay_factor = 0.1;
  int epochs = 30;
  index_t batch_size = 32;

  // data
  std::uint64_t seed = 1;
  std::string train_manifest;  // empty: use the synthetic generator
  std::string test_manifest;
  int synth_train = 400;
  int synth_test = 100;
  scalar_t input_gain = 1.0;  // binned counts -> input current
  SynthParams synth;

  // energy model
  scalar_t e_ac_pj = 0.9;
  scalar_t e_mac_pj = 4.6;

  void validate() const;

  /** Canonical echo, one key per line, grouped by section. Parsing the
   *  echo back yields an identical config. */
  std::string echo() const;

  static TrainConfig from_file(const std::string& path);
  static TrainConfig from_string(const std::string& text);

  /** Applies one "key=value" override; unknown keys are rejected. */
  void apply_override(const std::string& assignment);
};

scalar_t schedule_lr(const TrainConfig& cfg, int epoch);

}  // namespace spikekit
