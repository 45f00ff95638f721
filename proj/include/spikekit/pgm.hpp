#pragma once

#include <string>

#include "spikekit/types.hpp"

namespace spikekit {

/** Plain (P2) grayscale PGM of an H x W image with values in [0,1];
 *  pixels are floor(255 * v), clamped. */
void write_pgm(const std::string& path, const ArrayX& values, index_t h,
               index_t w);

}  // namespace spikekit
