#pragma once

#include <string>
#include <vector>

#include "spikekit/ops.hpp"
#include "spikekit/tensor.hpp"

namespace spikekit {

/** Adjacent-timestep combination rule. AND keeps coincident spikes (the
 *  stable skeleton); OR and XOR exist for ablation. */
enum class BitOp { kAnd, kOr, kXor };

BitOp bit_op_from_string(const std::string& name);
const char* to_string(BitOp op);

/** Consistency guidance function between firing rates. */
enum class ConsistencyFn { kMse, kKl, kCosine };

ConsistencyFn consistency_fn_from_string(const std::string& name);
const char* to_string(ConsistencyFn fn);

/** Skeleton of T-1 stable spike maps: slice t is S_t AND S_{t+1},
 *  realized as the elementwise product so it stays differentiable
 *  through the surrogate chain (identical values on binary inputs). */
std::vector<Tensor> stable_and(const std::vector<Tensor>& spikes);

/** Adjacent-pair combination under the chosen truth table, in the same
 *  product arithmetic (AND: ab, OR: a+b-ab, XOR: a+b-2ab). */
std::vector<Tensor> bit_combine(const std::vector<Tensor>& spikes, BitOp op);

/** Per-element mean over the T spike maps. */
Tensor firing_rate(const std::vector<Tensor>& spikes);

/** Per-element mean over the T-1 skeleton slices. */
Tensor stable_firing_rate(const std::vector<Tensor>& skeleton);

/** Consistency loss between the (already detached) anchor rate and the
 *  live rate. MSE averages the squared gap over every element; KL and
 *  COSINE operate on flattened, per-sample-normalized rate vectors. */
Tensor spike_consistency_loss(const Tensor& anchor, const Tensor& rate,
                              ConsistencyFn fn);

}  // namespace spikekit
