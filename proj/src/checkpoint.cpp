#include "spikekit/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace spikekit {

namespace {

constexpr char kMagic[4] = {'S', 'K', 'C', 'P'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = (v >> (8 * i)) & 0xFF;
  os.write(reinterpret_cast<char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = (v >> (8 * i)) & 0xFF;
  os.write(reinterpret_cast<char*>(b), 8);
}

void put_f64(std::ostream& os, const ArrayX& v) {
  static_assert(sizeof(scalar_t) == 8);
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * 8));
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

ArrayX get_f64(std::istream& is, index_t n) {
  ArrayX v(n);
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(n * 8));
  return v;
}

}  // namespace

Checkpoint Checkpoint::capture(const SnnModel& model,
                               const std::vector<ArrayX>& momentum) {
  Checkpoint ck;
  ck.arch = model.arch();
  ck.input_shape = model.input_shape();
  ck.classes = model.classes();
  ck.init_seed = model.init_seed();
  for (const Tensor& p : model.params())
    ck.params.emplace_back(p.shape(), p.values());
  ck.momentum = momentum;
  return ck;
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot write " + path);
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_u32(os, static_cast<std::uint32_t>(arch.size()));
  os.write(arch.data(), static_cast<std::streamsize>(arch.size()));
  put_u64(os, init_seed);
  put_u32(os, static_cast<std::uint32_t>(input_shape.size()));
  for (index_t e : input_shape) put_u64(os, static_cast<std::uint64_t>(e));
  put_u32(os, static_cast<std::uint32_t>(classes));
  put_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& [shape, values] : params) {
    put_u32(os, static_cast<std::uint32_t>(shape.size()));
    for (index_t e : shape) put_u64(os, static_cast<std::uint64_t>(e));
    put_f64(os, values);
  }
  put_u32(os, static_cast<std::uint32_t>(momentum.size()));
  for (const ArrayX& v : momentum) put_f64(os, v);
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: " + path + " is not a checkpoint");
  std::uint32_t version = get_u32(is);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(version));
  Checkpoint ck;
  std::uint32_t name_len = get_u32(is);
  ck.arch.resize(name_len);
  is.read(ck.arch.data(), name_len);
  ck.init_seed = get_u64(is);
  std::uint32_t rank = get_u32(is);
  for (std::uint32_t i = 0; i < rank; ++i)
    ck.input_shape.push_back(static_cast<index_t>(get_u64(is)));
  ck.classes = static_cast<int>(get_u32(is));
  std::uint32_t count = get_u32(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t r = get_u32(is);
    Shape shape;
    for (std::uint32_t d = 0; d < r; ++d)
      shape.push_back(static_cast<index_t>(get_u64(is)));
    ck.params.emplace_back(shape, get_f64(is, shape_size(shape)));
  }
  std::uint32_t mcount = get_u32(is);
  for (std::uint32_t i = 0; i < mcount; ++i)
    ck.momentum.push_back(get_f64(is, ck.params[i].second.size()));
  if (!is) throw std::runtime_error("checkpoint: truncated file " + path);
  return ck;
}

SnnModel Checkpoint::restore() const {
  SnnModel model =
      SnnModel::build_architecture(arch, input_shape, classes, init_seed);
  restore_into(model);
  return model;
}

void Checkpoint::restore_into(SnnModel& model) const {
  if (model.arch() != arch || model.input_shape() != input_shape ||
      model.classes() != classes)
    throw std::runtime_error(
        "checkpoint: architecture mismatch (checkpoint " + arch + " " +
        shape_str(input_shape) + " x" + std::to_string(classes) +
        " vs model " + model.arch() + " " + shape_str(model.input_shape()) +
        " x" + std::to_string(model.classes()) + ")");
  std::vector<Tensor> ps = model.params();
  if (ps.size() != params.size())
    throw std::runtime_error("checkpoint: parameter count mismatch");
  for (size_t i = 0; i < ps.size(); ++i) {
    if (ps[i].shape() != params[i].first)
      throw std::runtime_error("checkpoint: parameter " + std::to_string(i) +
                               " shape mismatch " +
                               shape_str(params[i].first) + " vs " +
                               shape_str(ps[i].shape()));
    ps[i].set_values(params[i].second);
  }
}

}  // namespace spikekit
