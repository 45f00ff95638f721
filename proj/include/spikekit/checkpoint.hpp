#pragma once

#include <string>
#include <vector>

#include "spikekit/model.hpp"

namespace spikekit {

/** Versioned binary container for a model and its optimizer state.
 *
 *  All integers little-endian. Field order (stable across releases):
 *    magic "SKCP"            4 bytes
 *    version                 u32 (currently 1)
 *    arch name               u32 length + bytes
 *    init seed               u64
 *    input shape             u32 rank + u64 extents
 *    classes                 u32
 *    parameter tensors       u32 count, then per tensor
 *                            u32 rank + u64 extents + f64 values
 *    momentum buffers        u32 count (0 or same as parameters),
 *                            then flat f64 values per buffer
 */
struct Checkpoint {
  std::string arch;
  Shape input_shape;
  int classes = 0;
  std::uint64_t init_seed = 0;
  std::vector<std::pair<Shape, ArrayX>> params;
  std::vector<ArrayX> momentum;

  static Checkpoint capture(const SnnModel& model,
                            const std::vector<ArrayX>& momentum = {});

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  /** Rebuilds the architecture and restores weights. Throws when the
   *  stored architecture does not match what the name rebuilds. */
  SnnModel restore() const;

  /** Copies stored weights into an existing model of the same layout. */
  void restore_into(SnnModel& model) const;
};

}  // namespace spikekit
