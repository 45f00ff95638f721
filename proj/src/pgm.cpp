#include "spikekit/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace spikekit {

void write_pgm(const std::string& path, const ArrayX& values, index_t h,
               index_t w) {
  if (values.size() != h * w)
    throw std::invalid_argument("pgm: " + std::to_string(values.size()) +
                                " values for " + std::to_string(h) + "x" +
                                std::to_string(w));
  std::ofstream os(path);
  if (!os) throw std::runtime_error("pgm: cannot write " + path);
  os << "P2\n" << w << " " << h << "\n255\n";
  for (index_t y = 0; y < h; ++y) {
    for (index_t x = 0; x < w; ++x) {
      int px = static_cast<int>(std::floor(255.0 * values[y * w + x]));
      px = std::clamp(px, 0, 255);
      os << px << (x + 1 == w ? "" : " ");
    }
    os << "\n";
  }
  if (!os) throw std::runtime_error("pgm: write failed for " + path);
}

}  // namespace spikekit
