#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "spikekit/trainer.hpp"

using namespace spikekit;

namespace {

SynthParams tiny_synth() {
  SynthParams p;
  p.width = 12;
  p.height = 12;
  p.duration_us = 20000;
  p.motion_steps = 16;
  return p;
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.timesteps = 3;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.synth = tiny_synth();
  cfg.synth_train = 16;
  cfg.synth_test = 8;
  return cfg;
}

Dataset tiny_dataset(std::uint64_t seed, size_t count, index_t t_steps,
                     std::uint64_t salt = 0) {
  return synth_dataset(seed, count, t_steps, tiny_synth(), salt);
}

SnnModel tiny_model(std::uint64_t seed) {
  return SnnModel::build_architecture("CONV_SNN_MINI", {2, 12, 12}, 4, seed);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(is)), {});
}

// Sets every linear/conv weight to zero and all biases to `bias`.
void force_bias_model(SnnModel& m, scalar_t bias) {
  auto ps = m.params();
  for (Tensor& p : ps) {
    if (p.ndim() == 1)
      p.set_values(ArrayX::Constant(p.size(), bias));
    else
      p.set_values(ArrayX::Zero(p.size()));
  }
}

}  // namespace

TEST_CASE("beta = gamma = 0 reduces bit-identically to a vanilla CE loop") {
  TrainConfig cfg = tiny_config();
  cfg.beta = 0.0;
  cfg.gamma = 0.0;
  Dataset train = tiny_dataset(cfg.seed, 16, cfg.timesteps);
  Dataset test = tiny_dataset(cfg.seed, 8, cfg.timesteps, 1);

  SnnModel via_fit = tiny_model(5);
  fit(train, test, via_fit, cfg);

  // Hand-rolled cross-entropy training with the same streams.
  SnnModel by_hand = tiny_model(5);
  Sgd opt(by_hand.params(), cfg.momentum, cfg.weight_decay);
  Rng shuffle_rng(cfg.seed, RngStream::kShuffle);
  std::vector<size_t> order(train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    scalar_t lr = schedule_lr(cfg, epoch);
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    for (size_t pos = 0; pos < order.size(); pos += cfg.batch_size) {
      size_t n = std::min<size_t>(cfg.batch_size, order.size() - pos);
      std::vector<size_t> idx(order.begin() + pos, order.begin() + pos + n);
      Batch batch = assemble_batch(train, idx);
      ForwardRecord rec = by_hand.forward(batch.frames);
      backward(cross_entropy(rec.logits, batch.labels));
      opt.step(lr);
      opt.zero_grad();
    }
  }

  auto pa = via_fit.params(), pb = by_hand.params();
  for (size_t i = 0; i < pa.size(); ++i)
    CHECK((pa[i].values() - pb[i].values()).abs().maxCoeff() == 0.0);
}

TEST_CASE("loss additivity holds to machine precision") {
  TrainConfig cfg = tiny_config();
  Dataset train = tiny_dataset(3, 8, cfg.timesteps);
  SnnModel model = tiny_model(3);
  Sgd opt(model.params(), cfg.momentum, cfg.weight_decay);
  Rng noise_rng(cfg.seed, RngStream::kNoise);
  std::vector<size_t> idx = {0, 1, 2, 3};
  StepLosses sl =
      train_step(assemble_batch(train, idx), model, cfg, opt, 0.1, noise_rng);
  CHECK(sl.total == (sl.ce + cfg.beta * sl.spike) + cfg.gamma * sl.noise);
  CHECK(sl.batch == 4);
}

TEST_CASE("gamma = 0 consumes no noise RNG draws") {
  TrainConfig cfg = tiny_config();
  cfg.gamma = 0.0;
  Dataset train = tiny_dataset(4, 8, cfg.timesteps);
  SnnModel model = tiny_model(4);
  Sgd opt(model.params(), cfg.momentum, cfg.weight_decay);
  Rng noise_rng(cfg.seed, RngStream::kNoise);
  Rng untouched(cfg.seed, RngStream::kNoise);
  std::vector<size_t> idx = {0, 1, 2, 3};
  train_step(assemble_batch(train, idx), model, cfg, opt, 0.1, noise_rng);
  CHECK(noise_rng.next_u64() == untouched.next_u64());

  // With gamma > 0 the stream does advance.
  cfg.gamma = 1.0;
  Rng active(cfg.seed, RngStream::kNoise);
  Rng twin(cfg.seed, RngStream::kNoise);
  train_step(assemble_batch(train, idx), model, cfg, opt, 0.1, active);
  CHECK(active.next_u64() != twin.next_u64());
}

TEST_CASE("constant spike trains contribute exactly zero spike loss") {
  TrainConfig cfg = tiny_config();
  // Zero input current everywhere: spikes are all-zero at every step.
  Dataset zeros;
  zeros.timesteps = cfg.timesteps;
  zeros.frame_shape = {2, 12, 12};
  for (int i = 0; i < 4; ++i) {
    zeros.frames.push_back(ArrayX::Zero(cfg.timesteps * 2 * 12 * 12));
    zeros.labels.push_back(i);
  }
  SnnModel model = tiny_model(6);
  Sgd opt(model.params(), cfg.momentum, cfg.weight_decay);
  Rng noise_rng(cfg.seed, RngStream::kNoise);
  StepLosses sl = train_step(assemble_batch(zeros, {0, 1, 2, 3}), model, cfg,
                             opt, 0.1, noise_rng);
  CHECK(sl.spike == 0.0);
}

TEST_CASE("non-finite losses abort with the component named") {
  TrainConfig cfg = tiny_config();
  cfg.beta = 0.0;
  cfg.gamma = 0.0;
  Dataset train = tiny_dataset(5, 4, cfg.timesteps);
  SnnModel model = tiny_model(5);
  // Blow up the classifier so CE overflows to inf.
  Tensor w = model.classifier().bias;
  ArrayX huge = ArrayX::Constant(w.size(), 1e308);
  huge[0] = -1e308;
  w.set_values(huge);
  Sgd opt(model.params(), cfg.momentum, cfg.weight_decay);
  Rng noise_rng(cfg.seed, RngStream::kNoise);
  CHECK_THROWS_WITH_AS(
      train_step(assemble_batch(train, {0, 1}), model, cfg, opt, 0.1,
                 noise_rng),
      doctest::Contains("cross-entropy"), std::runtime_error);
}

TEST_CASE("fit is deterministic and reproducible end to end") {
  namespace fs = std::filesystem;
  TrainConfig cfg = tiny_config();
  Dataset train = tiny_dataset(cfg.seed, 16, cfg.timesteps);
  Dataset test = tiny_dataset(cfg.seed, 8, cfg.timesteps, 1);

  fs::path dir_a = fs::temp_directory_path() / "spikekit_fit_a";
  fs::path dir_b = fs::temp_directory_path() / "spikekit_fit_b";
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);

  SnnModel ma = tiny_model(1);
  MetricsReport ra = fit(train, test, ma, cfg, dir_a.string());
  SnnModel mb = tiny_model(1);
  MetricsReport rb = fit(train, test, mb, cfg, dir_b.string());

  auto pa = ma.params(), pb = mb.params();
  for (size_t i = 0; i < pa.size(); ++i)
    CHECK((pa[i].values() - pb[i].values()).abs().maxCoeff() == 0.0);
  CHECK(ra.final_test_acc == rb.final_test_acc);

  for (const char* name :
       {"config.txt", "metrics.txt", "report.txt", "best.ckpt"})
    CHECK(slurp(dir_a / name) == slurp(dir_b / name));

  CHECK(!ra.epochs.empty());
  CHECK(ra.epochs[0].lr == doctest::Approx(cfg.lr));
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("zero-epoch fit gives an evaluation-only report") {
  TrainConfig cfg = tiny_config();
  cfg.epochs = 0;
  Dataset train = tiny_dataset(8, 8, cfg.timesteps);
  Dataset test = tiny_dataset(8, 8, cfg.timesteps, 1);
  SnnModel model = tiny_model(8);
  MetricsReport rep = fit(train, test, model, cfg);
  CHECK(rep.epochs.empty());
  CHECK(rep.best_epoch == -1);
  CHECK(rep.final_test_acc == rep.best_test_acc);
}

TEST_CASE("best checkpoint restores and evaluates bit-identically") {
  namespace fs = std::filesystem;
  TrainConfig cfg = tiny_config();
  Dataset train = tiny_dataset(9, 16, cfg.timesteps);
  Dataset test = tiny_dataset(9, 8, cfg.timesteps, 1);
  fs::path dir = fs::temp_directory_path() / "spikekit_fit_ck";
  fs::remove_all(dir);
  SnnModel model = tiny_model(2);
  fit(train, test, model, cfg, dir.string());

  SnnModel restored = Checkpoint::load((dir / "best.ckpt").string()).restore();
  EvalResult a = evaluate(test, restored, cfg.batch_size);
  EvalResult b = evaluate(test, restored, cfg.batch_size);
  CHECK(a.accuracy == b.accuracy);
  CHECK(a.hamming_variance == b.hamming_variance);
  fs::remove_all(dir);
}

TEST_CASE("a memorized single-sample set evaluates at 100 percent") {
  TrainConfig cfg = tiny_config();
  cfg.beta = 0.0;
  cfg.gamma = 0.0;
  cfg.epochs = 25;
  cfg.batch_size = 1;
  Dataset one = tiny_dataset(10, 1, cfg.timesteps);
  SnnModel model = tiny_model(10);
  MetricsReport rep = fit(one, one, model, cfg);
  CHECK(rep.best_test_acc == 1.0);
}

TEST_CASE("uniform-logit model predicts at the label-0 share") {
  // All-zero weights and biases give identical logits; argmax breaks
  // ties toward class 0, so accuracy equals the share of 0 labels.
  TrainConfig cfg = tiny_config();
  Dataset test = tiny_dataset(11, 16, cfg.timesteps);
  SnnModel model = tiny_model(11);
  force_bias_model(model, 0.0);
  EvalResult ev = evaluate(test, model, cfg.batch_size);
  scalar_t zero_share = 0.0;
  for (int label : test.labels) zero_share += label == 0 ? 1.0 : 0.0;
  zero_share /= test.labels.size();
  CHECK(ev.accuracy == doctest::Approx(zero_share));
}

TEST_CASE("timestep variance examples") {
  ForwardRecord rec;
  rec.backbone_spikes = {Tensor::full({1, 4}, 1.0), Tensor::full({1, 4}, 1.0),
                         Tensor::full({1, 4}, 1.0)};
  CHECK(timestep_variance(rec) == 0.0);

  ArrayX a(4), b(4);
  a << 1, 0, 1, 0;
  b << 0, 1, 0, 1;
  rec.backbone_spikes = {Tensor::from_array({1, 4}, ArrayX(a)),
                         Tensor::from_array({1, 4}, ArrayX(b))};
  CHECK(timestep_variance(rec) == 1.0);

  Rng rng(12, 0);
  std::vector<Tensor> maps;
  for (int t = 0; t < 4; ++t) {
    ArrayX v(8);
    for (index_t i = 0; i < 8; ++i) v[i] = rng.below(2);
    maps.push_back(Tensor::from_array({1, 8}, std::move(v)));
  }
  rec.backbone_spikes = maps;
  scalar_t expect = 0.0;
  for (int t = 0; t < 3; ++t) {
    int flips = 0;
    for (index_t i = 0; i < 8; ++i)
      flips += maps[t].values()[i] != maps[t + 1].values()[i];
    expect += static_cast<scalar_t>(flips) / 8.0;
  }
  expect /= 3.0;
  CHECK(timestep_variance(rec) == doctest::Approx(expect));

  rec.backbone_spikes = {Tensor::full({1, 4}, 1.0)};
  CHECK_THROWS_AS(timestep_variance(rec), std::invalid_argument);
}

TEST_CASE("silent network reports zero rates and MAC-only energy") {
  TrainConfig cfg = tiny_config();
  Dataset test = tiny_dataset(13, 4, cfg.timesteps);
  SnnModel model = tiny_model(13);
  force_bias_model(model, -1.0);  // every neuron stays below threshold
  FiringEnergyReport rep =
      firing_and_energy(model, test, 4, cfg.e_ac_pj, cfg.e_mac_pj);
  for (scalar_t rate : rep.rate_percent) CHECK(rate == 0.0);
  CHECK(rep.synops == 0.0);
  CHECK(rep.first_layer_macs > 0.0);
  CHECK(rep.energy_pj == rep.first_layer_macs * cfg.e_mac_pj);
}

TEST_CASE("firing and synop accounting matches a brute-force recount") {
  TrainConfig cfg = tiny_config();
  Dataset test = tiny_dataset(14, 6, cfg.timesteps);
  SnnModel model = tiny_model(14);
  FiringEnergyReport rep =
      firing_and_energy(model, test, 6, cfg.e_ac_pj, cfg.e_mac_pj);

  // Independent recount from dense-hook records, one sample at a time.
  model.set_dense_hooks(true);
  NoGradGuard no_grad;
  std::vector<scalar_t> spikes(3, 0.0);
  std::vector<scalar_t> neurons(3, 0.0);
  scalar_t synops = 0.0;
  for (size_t s = 0; s < 6; ++s) {
    Batch batch = assemble_batch(test, {s});
    ForwardRecord rec = model.forward(batch.frames);
    const auto& stages = SnnModel::dense_stage_maps(rec);
    for (index_t t = 0; t < cfg.timesteps; ++t) {
      for (int l = 0; l < 3; ++l) {
        scalar_t count = 0.0;
        for (index_t i = 0; i < stages[l][t].size(); ++i)
          count += stages[l][t].values()[i] != 0.0 ? 1.0 : 0.0;
        spikes[l] += count;
        neurons[l] = static_cast<scalar_t>(stages[l][t].size());
      }
      // conv2 sees pool(stage1), conv3 sees pool(stage2), fc sees GAP.
      Tensor in2 = avg_pool2(stages[0][t]);
      Tensor in3 = avg_pool2(stages[1][t]);
      Tensor fc_in = global_avg_pool(stages[2][t]);
      synops += static_cast<scalar_t>((in2.values() != 0.0).count()) * 32 * 9;
      synops += static_cast<scalar_t>((in3.values() != 0.0).count()) * 32 * 9;
      synops += static_cast<scalar_t>((fc_in.values() != 0.0).count()) * 4;
    }
  }
  for (int l = 0; l < 3; ++l) {
    scalar_t expect = 100.0 * spikes[l] / (neurons[l] * cfg.timesteps * 6);
    CHECK(rep.rate_percent[l] == expect);
  }
  CHECK(rep.synops == synops);

  // First layer: conv1 MACs = out positions x kernel volume, per step.
  scalar_t macs_per_step = 12.0 * 12.0 * 16.0 * (2.0 * 9.0);
  CHECK(rep.first_layer_macs ==
        macs_per_step * static_cast<scalar_t>(cfg.timesteps) * 6.0);
  CHECK(rep.energy_pj ==
        rep.synops * cfg.e_ac_pj + rep.first_layer_macs * cfg.e_mac_pj);
}

TEST_CASE("doubling T with identical per-step rates doubles synops") {
  TrainConfig cfg = tiny_config();
  SnnModel model = tiny_model(15);
  force_bias_model(model, 2.0);  // saturated: every neuron fires each step

  auto constant_dataset = [&](index_t t_steps) {
    Dataset d;
    d.timesteps = t_steps;
    d.frame_shape = {2, 12, 12};
    d.frames.push_back(ArrayX::Zero(t_steps * 2 * 12 * 12));
    d.labels.push_back(0);
    return d;
  };
  FiringEnergyReport r2 = firing_and_energy(model, constant_dataset(2), 1,
                                            cfg.e_ac_pj, cfg.e_mac_pj);
  FiringEnergyReport r4 = firing_and_energy(model, constant_dataset(4), 1,
                                            cfg.e_ac_pj, cfg.e_mac_pj);
  for (int l = 0; l < 3; ++l) {
    CHECK(r2.rate_percent[l] == 100.0);
    CHECK(r4.rate_percent[l] == 100.0);
  }
  CHECK(r4.synops == 2.0 * r2.synops);
  CHECK(r4.first_layer_macs == 2.0 * r2.first_layer_macs);
}

TEST_CASE("dense mode with a single stage equals the default") {
  // An MLP with one hidden LIF layer has exactly one stage, so the
  // dense average reduces to the last-stage-only loss.
  TrainConfig cfg = tiny_config();
  cfg.arch = "MLP_SNN";
  Dataset train = tiny_dataset(16, 8, cfg.timesteps);

  SnnModel dense_model = SnnModel::build_mlp({2, 12, 12}, {16}, 4, 16);
  SnnModel plain_model = SnnModel::build_mlp({2, 12, 12}, {16}, 4, 16);

  TrainConfig dense_cfg = cfg;
  dense_cfg.dense = true;
  dense_model.set_dense_hooks(true);

  Sgd opt_d(dense_model.params(), cfg.momentum, cfg.weight_decay);
  Sgd opt_p(plain_model.params(), cfg.momentum, cfg.weight_decay);
  Rng noise_d(cfg.seed, RngStream::kNoise);
  Rng noise_p(cfg.seed, RngStream::kNoise);
  Batch batch = assemble_batch(train, {0, 1, 2, 3});
  StepLosses sd = train_step(batch, dense_model, dense_cfg, opt_d, 0.1, noise_d);
  StepLosses sp = train_step(batch, plain_model, cfg, opt_p, 0.1, noise_p);
  CHECK(sd.spike == sp.spike);
  CHECK(sd.total == sp.total);
  auto pa = dense_model.params(), pb = plain_model.params();
  for (size_t i = 0; i < pa.size(); ++i)
    CHECK((pa[i].values() - pb[i].values()).abs().maxCoeff() == 0.0);
}

TEST_CASE("evaluation is bit-identical with the method machinery present") {
  // Same weights, one model with dense hooks + a full method config, one
  // bare: inference logits must agree exactly.
  TrainConfig cfg = tiny_config();
  Dataset test = tiny_dataset(17, 8, cfg.timesteps);
  SnnModel a = tiny_model(17);
  SnnModel b = tiny_model(17);
  b.set_dense_hooks(true);

  NoGradGuard no_grad;
  std::vector<size_t> idx = {0, 1, 2, 3, 4, 5, 6, 7};
  Batch batch = assemble_batch(test, idx);
  ForwardRecord ra = a.forward(batch.frames);
  ForwardRecord rb = b.forward(batch.frames);
  CHECK((ra.logits.values() - rb.logits.values()).abs().maxCoeff() == 0.0);

  EvalResult ea = evaluate(test, a, cfg.batch_size);
  EvalResult eb = evaluate(test, b, cfg.batch_size);
  CHECK(ea.accuracy == eb.accuracy);
  CHECK(ea.hamming_variance == eb.hamming_variance);
}
