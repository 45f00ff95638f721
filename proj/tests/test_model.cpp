#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "spikekit/checkpoint.hpp"
#include "spikekit/model.hpp"
#include "support/gradcheck.hpp"

using namespace spikekit;
using spikekit::test::random_tensor;

namespace {

std::vector<Tensor> random_frames(index_t t_steps, index_t batch,
                                  const Shape& input_shape, Rng& rng,
                                  scalar_t hi = 1.5) {
  std::vector<Tensor> frames;
  for (index_t t = 0; t < t_steps; ++t) {
    Shape s = {batch};
    s.insert(s.end(), input_shape.begin(), input_shape.end());
    frames.push_back(random_tensor(s, rng, 0.0, hi, false));
  }
  return frames;
}

}  // namespace

TEST_CASE("builds are deterministic and reproducible") {
  SnnModel a = SnnModel::build_architecture("CONV_SNN_MINI", {2, 24, 24}, 4, 7);
  SnnModel b = SnnModel::build_architecture("CONV_SNN_MINI", {2, 24, 24}, 4, 7);
  auto pa = a.params(), pb = b.params();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i)
    CHECK((pa[i].values() - pb[i].values()).abs().maxCoeff() == 0.0);

  SnnModel c = SnnModel::build_architecture("CONV_SNN_MINI", {2, 24, 24}, 4, 8);
  bool any_diff = false;
  auto pc = c.params();
  for (size_t i = 0; i < pa.size(); ++i)
    if ((pa[i].values() - pc[i].values()).abs().maxCoeff() > 0.0)
      any_diff = true;
  CHECK(any_diff);

  CHECK_THROWS_AS(SnnModel::build_architecture("VGG_99", {2, 24, 24}, 4, 1),
                  std::invalid_argument);
}

TEST_CASE("parameter count matches the closed-form sum") {
  SnnModel m = SnnModel::build_architecture("CONV_SNN_MINI", {2, 24, 24}, 4, 1);
  index_t total = 0;
  for (const Tensor& p : m.params()) total += p.size();
  // conv1 16x2x3x3+16, conv2 32x16x3x3+32, conv3 32x32x3x3+32, fc 32x4+4
  index_t expected = (16 * 2 * 9 + 16) + (32 * 16 * 9 + 32) +
                     (32 * 32 * 9 + 32) + (32 * 4 + 4);
  CHECK(total == expected);
}

TEST_CASE("forward shapes and logit averaging") {
  Rng rng(3, 0);
  SnnModel m = SnnModel::build_architecture("MLP_SNN", {2, 24, 24}, 4, 5);
  auto frames = random_frames(4, 2, {2, 24, 24}, rng);
  ForwardRecord rec = m.forward(frames);
  REQUIRE(rec.logits.shape() == Shape{2, 4});
  REQUIRE(rec.logits_t.size() == 4);
  REQUIRE(rec.backbone_spikes.size() == 4);

  // O is exactly the arithmetic mean of the recorded per-timestep logits.
  ArrayX acc = ArrayX::Zero(rec.logits.size());
  for (const Tensor& o : rec.logits_t) acc += o.values();
  acc /= 4.0;
  CHECK((rec.logits.values() - acc).abs().maxCoeff() < 1e-15);
}

TEST_CASE("zero input gives bias-only logits") {
  SnnModel m = SnnModel::build_architecture("CONV_SNN_MINI", {2, 24, 24}, 4, 2);
  std::vector<Tensor> frames(3, Tensor::zeros({1, 2, 24, 24}));
  ForwardRecord rec = m.forward(frames);
  for (const Tensor& s : rec.backbone_spikes)
    CHECK(s.values().abs().maxCoeff() == 0.0);
  const ArrayX& bias = m.classifier().bias.values();
  for (const Tensor& o : rec.logits_t)
    CHECK((o.values() - bias).abs().maxCoeff() == 0.0);
  CHECK((rec.logits.values() - bias).abs().maxCoeff() < 1e-15);
}

TEST_CASE("T = 1 forward works when consistency is off") {
  Rng rng(5, 0);
  SnnModel m = SnnModel::build_architecture("MLP_SNN", {1, 4, 4}, 3, 2);
  auto frames = random_frames(1, 2, {1, 4, 4}, rng);
  ForwardRecord rec = m.forward(frames);
  CHECK(rec.logits_t.size() == 1);
  CHECK((rec.logits.values() - rec.logits_t[0].values()).abs().maxCoeff() ==
        0.0);
}

TEST_CASE("incompatible input shape is rejected") {
  SnnModel m = SnnModel::build_architecture("CONV_SNN_MINI", {2, 24, 24}, 4, 2);
  std::vector<Tensor> frames(2, Tensor::zeros({1, 2, 20, 20}));
  CHECK_THROWS_AS(m.forward(frames), std::invalid_argument);
}

TEST_CASE("classifier forward replays recorded timestep logits") {
  Rng rng(7, 0);
  SnnModel m = SnnModel::build_architecture("CONV_SNN_MINI", {2, 24, 24}, 4, 3);
  auto frames = random_frames(3, 2, {2, 24, 24}, rng);
  ForwardRecord rec = m.forward(frames);
  for (size_t t = 0; t < 3; ++t) {
    Tensor replay = m.classifier_forward(rec.backbone_spikes[t]);
    CHECK((replay.values() - rec.logits_t[t].values()).abs().maxCoeff() ==
          0.0);
  }
}

TEST_CASE("classifier is linear in its input") {
  Rng rng(9, 0);
  SnnModel m = SnnModel::build_architecture("CONV_SNN_MINI", {2, 24, 24}, 4, 4);
  Shape rate_shape = {2};
  rate_shape.insert(rate_shape.end(), m.backbone_shape().begin(),
                    m.backbone_shape().end());
  Tensor rate = random_tensor(rate_shape, rng, 0.0, 1.0, false);

  const ArrayX& bias = m.classifier().bias.values();
  ArrayX bias_rows(2 * 4);
  bias_rows << bias, bias;

  ArrayX once = m.classifier_forward(rate).values() - bias_rows;
  ArrayX twice =
      m.classifier_forward(scalar_mul(rate, 2.0)).values() - bias_rows;
  CHECK((twice - 2.0 * once).abs().maxCoeff() < 1e-12);

  Tensor zero = Tensor::zeros(rate_shape);
  CHECK((m.classifier_forward(zero).values() - bias_rows).abs().maxCoeff() ==
        0.0);

  CHECK_THROWS_AS(m.classifier_forward(Tensor::zeros({2, 32, 5, 5})),
                  std::invalid_argument);
}

TEST_CASE("dense hooks expose binary per-stage maps") {
  Rng rng(11, 0);
  SnnModel m = SnnModel::build_architecture("CONV_SNN_MINI", {2, 24, 24}, 4, 5);
  CHECK(m.stage_count() == 3);

  auto frames = random_frames(3, 2, {2, 24, 24}, rng);
  ForwardRecord plain = m.forward(frames);
  CHECK_THROWS_AS(SnnModel::dense_stage_maps(plain), std::logic_error);

  m.set_dense_hooks(true);
  ForwardRecord rec = m.forward(frames);
  const auto& stages = SnnModel::dense_stage_maps(rec);
  REQUIRE(stages.size() == 3);
  for (const auto& stage : stages) {
    REQUIRE(stage.size() == 3);
    for (const Tensor& map : stage)
      for (index_t i = 0; i < map.size(); ++i) {
        scalar_t v = map.values()[i];
        CHECK((v == 0.0 || v == 1.0));
      }
  }
  // The final stage is the backbone output itself.
  for (size_t t = 0; t < 3; ++t)
    CHECK((stages.back()[t].values() - rec.backbone_spikes[t].values())
              .abs()
              .maxCoeff() == 0.0);
}

TEST_CASE("weights are shared across timesteps") {
  Rng rng(13, 0);
  SnnModel m = SnnModel::build_architecture("MLP_SNN", {1, 4, 4}, 3, 6);
  auto frames = random_frames(3, 1, {1, 4, 4}, rng);
  ForwardRecord before = m.forward(frames);

  // Nudge one classifier bias; every timestep's logits must move.
  Tensor w = m.classifier().bias;
  ArrayX nudged = w.values();
  nudged[0] += 0.5;
  w.set_values(nudged);
  ForwardRecord after = m.forward(frames);
  for (size_t t = 0; t < 3; ++t)
    CHECK((after.logits_t[t].values() - before.logits_t[t].values())
              .abs()
              .maxCoeff() > 0.0);
}

TEST_CASE("checkpoint round trip is bit exact") {
  Rng rng(15, 0);
  SnnModel m = SnnModel::build_architecture("CONV_SNN_MINI", {2, 24, 24}, 4, 9);
  std::vector<ArrayX> momentum;
  for (const Tensor& p : m.params())
    momentum.push_back(ArrayX::Constant(p.size(), 0.125));

  auto path = std::filesystem::temp_directory_path() / "spikekit_ck_test.ckpt";
  Checkpoint::capture(m, momentum).save(path.string());
  Checkpoint ck = Checkpoint::load(path.string());
  SnnModel restored = ck.restore();

  auto pa = m.params(), pb = restored.params();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i)
    CHECK((pa[i].values() - pb[i].values()).abs().maxCoeff() == 0.0);
  REQUIRE(ck.momentum.size() == momentum.size());
  for (size_t i = 0; i < momentum.size(); ++i)
    CHECK((ck.momentum[i] - momentum[i]).abs().maxCoeff() == 0.0);

  auto frames = random_frames(2, 1, {2, 24, 24}, rng);
  CHECK((m.forward(frames).logits.values() -
         restored.forward(frames).logits.values())
            .abs()
            .maxCoeff() == 0.0);

  // Mismatched architecture is rejected.
  SnnModel other = SnnModel::build_architecture("MLP_SNN", {2, 24, 24}, 4, 9);
  CHECK_THROWS_AS(ck.restore_into(other), std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("MLP forward shape example") {
  Rng rng(17, 0);
  SnnModel m = SnnModel::build_architecture("MLP_SNN", {2, 24, 24}, 4, 2);
  auto frames = random_frames(4, 2, {2, 24, 24}, rng);
  CHECK(m.forward(frames).logits.shape() == Shape{2, 4});
}
