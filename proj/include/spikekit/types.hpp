#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace spikekit {

/** Scalar type used throughout training (64-bit). */
using scalar_t = double;

/** Flat dense storage backing every tensor. */
using ArrayX = Eigen::Array<scalar_t, Eigen::Dynamic, 1>;

/** Row-major matrix view type for GEMM kernels. */
using MatrixX =
    Eigen::Matrix<scalar_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<MatrixX>;
using ConstMatMap = Eigen::Map<const MatrixX>;

using index_t = Eigen::Index;

/** Tensor extents, outermost axis first (row-major layout). */
using Shape = std::vector<index_t>;

inline index_t shape_size(const Shape& s) {
  index_t n = 1;
  for (index_t e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

}  // namespace spikekit
