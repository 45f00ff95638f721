#include "spikekit/model.hpp"

#include <cmath>
#include <stdexcept>

namespace spikekit {

namespace {

Tensor kaiming_uniform(Shape shape, index_t fan_in, Rng& rng) {
  scalar_t bound = std::sqrt(6.0 / static_cast<scalar_t>(fan_in));
  ArrayX v(shape_size(shape));
  for (index_t i = 0; i < v.size(); ++i) v[i] = rng.uniform(-bound, bound);
  return Tensor::from_array(std::move(shape), std::move(v), true);
}

Tensor bias_uniform(index_t n, index_t fan_in, Rng& rng) {
  scalar_t bound = 1.0 / std::sqrt(static_cast<scalar_t>(fan_in));
  ArrayX v(n);
  for (index_t i = 0; i < v.size(); ++i) v[i] = rng.uniform(-bound, bound);
  return Tensor::from_array({n}, std::move(v), true);
}

ConvLayer make_conv(index_t cin, index_t cout, index_t k, int pad, Rng& rng) {
  index_t fan_in = cin * k * k;
  return ConvLayer{kaiming_uniform({cout, cin, k, k}, fan_in, rng),
                   bias_uniform(cout, fan_in, rng), pad};
}

LinearLayer make_linear(index_t in, index_t out, Rng& rng) {
  return LinearLayer{kaiming_uniform({in, out}, in, rng),
                     bias_uniform(out, in, rng)};
}

Tensor apply_linear(const LinearLayer& l, const Tensor& x) {
  return bias_add(matmul(x, l.weight), l.bias);
}

}  // namespace

std::vector<Tensor> SnnModel::params() const {
  std::vector<Tensor> out;
  for (const Layer& layer : backbone_) {
    if (const auto* c = std::get_if<ConvLayer>(&layer)) {
      out.push_back(c->weight);
      out.push_back(c->bias);
    } else if (const auto* l = std::get_if<LinearLayer>(&layer)) {
      out.push_back(l->weight);
      out.push_back(l->bias);
    }
  }
  out.push_back(classifier_.weight);
  out.push_back(classifier_.bias);
  return out;
}

ForwardRecord SnnModel::forward(const std::vector<Tensor>& frames,
                                SpikeMode mode) const {
  if (frames.empty()) throw std::invalid_argument("forward: no frames");
  for (const Tensor& f : frames) {
    Shape expect = {f.dim(0)};
    expect.insert(expect.end(), input_shape_.begin(), input_shape_.end());
    if (f.shape() != expect)
      throw std::invalid_argument("forward: frame " + shape_str(f.shape()) +
                                  " incompatible with input " +
                                  shape_str(input_shape_));
  }

  ForwardRecord rec;
  if (dense_hooks_) rec.stage_spikes.resize(stage_count_);
  std::vector<MembraneState> states(backbone_.size());

  for (const Tensor& frame : frames) {
    Tensor h = frame;
    size_t stage = 0;
    for (size_t i = 0; i < backbone_.size(); ++i) {
      const Layer& layer = backbone_[i];
      if (const auto* c = std::get_if<ConvLayer>(&layer)) {
        h = conv2d(h, c->weight, c->bias, c->pad);
      } else if (std::get_if<PoolLayer>(&layer)) {
        h = avg_pool2(h);
      } else if (std::get_if<FlattenLayer>(&layer)) {
        h = reshape(h, {h.dim(0), h.size() / h.dim(0)});
      } else if (const auto* l = std::get_if<LinearLayer>(&layer)) {
        h = apply_linear(*l, h);
      } else if (const auto* s = std::get_if<LifLayer>(&layer)) {
        LifStepResult r = lif_step(states[i], h, s->params, mode);
        states[i] = r.state;
        h = r.spikes;
        if (dense_hooks_) rec.stage_spikes[stage].push_back(h);
        ++stage;
      }
    }
    rec.backbone_spikes.push_back(h);
    rec.logits_t.push_back(classifier_forward(h));
  }

  Tensor acc = rec.logits_t[0];
  for (size_t t = 1; t < rec.logits_t.size(); ++t) acc = acc + rec.logits_t[t];
  rec.logits = scalar_mul(acc, 1.0 / static_cast<scalar_t>(frames.size()));
  return rec;
}

Tensor SnnModel::classifier_forward(const Tensor& rate) const {
  Shape expect = {rate.dim(0)};
  expect.insert(expect.end(), backbone_shape_.begin(), backbone_shape_.end());
  if (rate.shape() != expect)
    throw std::invalid_argument("classifier: input " +
                                shape_str(rate.shape()) +
                                " does not match backbone output " +
                                shape_str(backbone_shape_));
  Tensor h = classifier_gap_ ? global_avg_pool(rate) : rate;
  return apply_linear(classifier_, h);
}

const std::vector<std::vector<Tensor>>& SnnModel::dense_stage_maps(
    const ForwardRecord& record) {
  if (record.stage_spikes.empty())
    throw std::logic_error(
        "dense_stage_maps: record was made without dense hooks");
  return record.stage_spikes;
}

SnnModel SnnModel::build_mlp(const Shape& input_shape,
                             const std::vector<index_t>& hidden, int classes,
                             std::uint64_t seed) {
  if (hidden.empty())
    throw std::invalid_argument("build_mlp: need at least one hidden width");
  Rng rng(seed, RngStream::kWeightInit);
  SnnModel m;
  m.arch_ = "MLP_SNN";
  m.input_shape_ = input_shape;
  m.classes_ = classes;
  m.init_seed_ = seed;
  index_t width = shape_size(input_shape);
  m.backbone_.push_back(FlattenLayer{});
  for (index_t hw : hidden) {
    m.backbone_.push_back(make_linear(width, hw, rng));
    m.backbone_.push_back(LifLayer{});
    width = hw;
    ++m.stage_count_;
  }
  m.backbone_shape_ = {width};
  m.classifier_ = make_linear(width, classes, rng);
  m.classifier_gap_ = false;
  return m;
}

SnnModel build_conv_mini(const Shape& input_shape, int classes,
                         std::uint64_t seed) {
  if (input_shape.size() != 3)
    throw std::invalid_argument("CONV_SNN_MINI: need [C,H,W] input, got " +
                                shape_str(input_shape));
  const index_t cin = input_shape[0], h = input_shape[1], w = input_shape[2];
  if (h % 4 != 0 || w % 4 != 0)
    throw std::invalid_argument(
        "CONV_SNN_MINI: spatial extents must be divisible by 4, got " +
        shape_str(input_shape));
  Rng rng(seed, RngStream::kWeightInit);
  SnnModel m;
  m.arch_ = "CONV_SNN_MINI";
  m.input_shape_ = input_shape;
  m.classes_ = classes;
  m.init_seed_ = seed;
  m.backbone_.push_back(make_conv(cin, 16, 3, 1, rng));
  m.backbone_.push_back(LifLayer{});
  m.backbone_.push_back(PoolLayer{});
  m.backbone_.push_back(make_conv(16, 32, 3, 1, rng));
  m.backbone_.push_back(LifLayer{});
  m.backbone_.push_back(PoolLayer{});
  m.backbone_.push_back(make_conv(32, 32, 3, 1, rng));
  m.backbone_.push_back(LifLayer{});
  m.stage_count_ = 3;
  m.backbone_shape_ = {32, h / 4, w / 4};
  m.classifier_ = make_linear(32, classes, rng);
  m.classifier_gap_ = true;
  return m;
}

SnnModel SnnModel::build_architecture(const std::string& name,
                                      const Shape& input_shape, int classes,
                                      std::uint64_t seed) {
  if (name == "MLP_SNN") return build_mlp(input_shape, {128, 64}, classes, seed);
  if (name == "CONV_SNN_MINI") return build_conv_mini(input_shape, classes, seed);
  throw std::invalid_argument("unknown architecture '" + name + "'");
}

}  // namespace spikekit
