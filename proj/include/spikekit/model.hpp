#pragma once

#include <string>
#include <variant>
#include <vector>

#include "spikekit/lif.hpp"
#include "spikekit/ops.hpp"
#include "spikekit/rng.hpp"
#include "spikekit/tensor.hpp"

namespace spikekit {

struct ConvLayer {
  Tensor weight;  // [Cout,Cin,kh,kw]
  Tensor bias;    // [Cout]
  int pad = 1;
};

struct LinearLayer {
  Tensor weight;  // [in,out]
  Tensor bias;    // [out]
};

struct PoolLayer {};
struct FlattenLayer {};

struct LifLayer {
  LifParams params;
};

using Layer = std::variant<ConvLayer, PoolLayer, FlattenLayer, LinearLayer,
                           LifLayer>;

/** Everything one training step needs from a forward pass. */
struct ForwardRecord {
  std::vector<Tensor> backbone_spikes;  // final-stage spike map per timestep
  std::vector<std::vector<Tensor>> stage_spikes;  // [stage][t], dense hooks
  std::vector<Tensor> logits_t;  // per-timestep classifier output
  Tensor logits;                 // arithmetic mean of logits_t
};

/** Spiking network with an explicit backbone/classifier split. All
 *  nonlinear backbone activations are LIF layers; the classifier is a
 *  time-free global-average-pool (4-D features) plus linear map. */
class SnnModel {
 public:
  SnnModel() = default;

  const std::string& arch() const { return arch_; }
  const Shape& input_shape() const { return input_shape_; }
  int classes() const { return classes_; }
  std::uint64_t init_seed() const { return init_seed_; }
  bool dense_hooks() const { return dense_hooks_; }
  void set_dense_hooks(bool on) { dense_hooks_ = on; }
  size_t stage_count() const { return stage_count_; }

  /** Shape of one timestep's backbone output (without batch axis). */
  const Shape& backbone_shape() const { return backbone_shape_; }

  /** Trainable tensors in a stable order (layer order, then classifier). */
  std::vector<Tensor> params() const;

  /** Runs the backbone over T timesteps (carrying membrane state) and
   *  the classifier on each timestep's spikes. Frames: T x [B,C,H,W]. */
  ForwardRecord forward(const std::vector<Tensor>& frames,
                        SpikeMode mode = SpikeMode::kHard) const;

  /** Single time-free classifier pass over a firing-rate tensor shaped
   *  like one timestep's backbone output. */
  Tensor classifier_forward(const Tensor& rate) const;

  /** Per-stage spike maps recorded by the last forward; requires dense
   *  hooks to have been enabled when the record was made. */
  static const std::vector<std::vector<Tensor>>& dense_stage_maps(
      const ForwardRecord& record);

  static SnnModel build_architecture(const std::string& name,
                                     const Shape& input_shape, int classes,
                                     std::uint64_t seed);

  /** MLP with explicit hidden widths (the named MLP_SNN uses {128,64}). */
  static SnnModel build_mlp(const Shape& input_shape,
                            const std::vector<index_t>& hidden, int classes,
                            std::uint64_t seed);

  const std::vector<Layer>& backbone() const { return backbone_; }
  const LinearLayer& classifier() const { return classifier_; }
  bool classifier_gap() const { return classifier_gap_; }

 private:
  std::string arch_;
  Shape input_shape_;
  Shape backbone_shape_;
  int classes_ = 0;
  std::uint64_t init_seed_ = 0;
  bool dense_hooks_ = false;
  size_t stage_count_ = 0;
  std::vector<Layer> backbone_;
  LinearLayer classifier_;
  bool classifier_gap_ = false;

  friend SnnModel build_conv_mini(const Shape&, int, std::uint64_t);
  friend class Checkpoint;
};

}  // namespace spikekit
