#include "spikekit/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "spikekit/noise.hpp"
#include "spikekit/skeleton.hpp"

namespace spikekit {

Sgd::Sgd(std::vector<Tensor> params, scalar_t momentum, scalar_t weight_decay)
    : params_(std::move(params)),
      momentum_(momentum),
      weight_decay_(weight_decay) {
  velocity_.reserve(params_.size());
  for (const Tensor& p : params_)
    velocity_.push_back(ArrayX::Zero(p.size()));
}

void Sgd::step(scalar_t lr) {
  for (size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) continue;
    ArrayX g = params_[i].grad() + weight_decay_ * params_[i].values();
    velocity_[i] = momentum_ * velocity_[i] + g;
    params_[i].set_values(params_[i].values() - lr * velocity_[i]);
  }
}

void Sgd::zero_grad() {
  for (Tensor& p : params_) p.clear_grad();
}

void Sgd::set_velocity(const std::vector<ArrayX>& v) {
  if (v.size() != velocity_.size())
    throw std::invalid_argument("sgd: velocity count mismatch");
  for (size_t i = 0; i < v.size(); ++i) {
    if (v[i].size() != velocity_[i].size())
      throw std::invalid_argument("sgd: velocity size mismatch");
    velocity_[i] = v[i];
  }
}

Batch assemble_batch(const Dataset& data, const std::vector<size_t>& indices) {
  if (indices.empty()) throw std::invalid_argument("batch: no indices");
  const index_t t_steps = data.timesteps;
  const index_t frame_elems = shape_size(data.frame_shape);
  const index_t b = static_cast<index_t>(indices.size());
  Batch batch;
  batch.frames.reserve(t_steps);
  for (index_t t = 0; t < t_steps; ++t) {
    ArrayX values(b * frame_elems);
    for (index_t i = 0; i < b; ++i)
      values.segment(i * frame_elems, frame_elems) =
          data.frames[indices[i]].segment(t * frame_elems, frame_elems);
    Shape shape = {b};
    shape.insert(shape.end(), data.frame_shape.begin(),
                 data.frame_shape.end());
    batch.frames.push_back(
        Tensor::from_array(std::move(shape), std::move(values)));
  }
  for (size_t i : indices) batch.labels.push_back(data.labels[i]);
  return batch;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  const index_t k = logits.shape().back();
  const index_t rows = logits.size() / k;
  std::vector<int> out(rows);
  for (index_t r = 0; r < rows; ++r) {
    int best = 0;
    scalar_t bv = logits.values()[r * k];
    for (index_t j = 1; j < k; ++j) {
      scalar_t v = logits.values()[r * k + j];
      if (v > bv) {
        bv = v;
        best = static_cast<int>(j);
      }
    }
    out[r] = best;
  }
  return out;
}

namespace {

void check_finite(scalar_t v, const char* component) {
  if (!std::isfinite(v))
    throw std::runtime_error(std::string("train_step: non-finite ") +
                             component + " loss (" + std::to_string(v) + ")");
}

// Spike-map consistency over one stage's spike maps.
Tensor stage_consistency(const std::vector<Tensor>& spikes,
                         const TrainConfig& cfg) {
  std::vector<Tensor> skel = bit_combine(spikes, cfg.bitop);
  Tensor anchor = stable_firing_rate(skel);
  if (cfg.detach_anchor) anchor = anchor.detach();
  Tensor rate = firing_rate(spikes);
  return spike_consistency_loss(anchor, rate, cfg.consistency_fn);
}

}  // namespace

StepLosses train_step(const Batch& batch, const SnnModel& model,
                      const TrainConfig& cfg, Sgd& opt, scalar_t lr,
                      Rng& noise_rng) {
  cfg.validate();
  ForwardRecord rec = model.forward(batch.frames);

  Tensor loss_ce = cross_entropy(rec.logits, batch.labels);
  Tensor total = loss_ce;
  StepLosses out;
  out.ce = loss_ce.item();
  check_finite(out.ce, "cross-entropy");

  if (cfg.beta > 0.0) {
    Tensor loss_spike;
    if (cfg.dense) {
      const auto& stages = SnnModel::dense_stage_maps(rec);
      Tensor acc = stage_consistency(stages[0], cfg);
      for (size_t s = 1; s < stages.size(); ++s)
        acc = acc + stage_consistency(stages[s], cfg);
      loss_spike = scalar_mul(acc, 1.0 / static_cast<scalar_t>(stages.size()));
    } else {
      loss_spike = stage_consistency(rec.backbone_spikes, cfg);
    }
    out.spike = loss_spike.item();
    check_finite(out.spike, "spike-consistency");
    total = total + scalar_mul(loss_spike, cfg.beta);
  }

  if (cfg.gamma > 0.0) {
    std::vector<Tensor> skel = bit_combine(rec.backbone_spikes, cfg.bitop);
    Tensor stable_rate = stable_firing_rate(skel);
    ArrayX eps = sample_noise(stable_rate.values(), cfg.noise, noise_rng);
    Tensor perturbed = perturb(
        cfg.detach_noise_input ? stable_rate.detach() : stable_rate, eps);
    if (cfg.noise.kind != NoiseKind::kGaussian &&
        !on_perturbed_lattice(perturbed.values(), cfg.timesteps))
      throw std::runtime_error(
          "train_step: perturbed rate left the discrete lattice");
    Tensor noisy_logits = model.classifier_forward(perturbed);
    Tensor loss_noise = perturbation_loss(rec.logits, noisy_logits, cfg.alpha,
                                          cfg.detach_clean);
    out.noise = loss_noise.item();
    check_finite(out.noise, "perturbation");
    total = total + scalar_mul(loss_noise, cfg.gamma);
  }

  out.total = total.item();
  check_finite(out.total, "total");

  std::vector<int> pred = argmax_rows(rec.logits);
  for (size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == batch.labels[i]) ++out.correct;
  out.batch = static_cast<index_t>(batch.labels.size());

  backward(total);
  opt.step(lr);
  opt.zero_grad();
  return out;
}

EvalResult evaluate(const Dataset& data, const SnnModel& model,
                    index_t eval_batch) {
  NoGradGuard no_grad;
  EvalResult res;
  res.samples = data.size();
  if (data.size() == 0) return res;
  size_t correct = 0;
  scalar_t variance_sum = 0.0;
  size_t pos = 0;
  while (pos < data.size()) {
    size_t n = std::min<size_t>(eval_batch, data.size() - pos);
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = pos + i;
    Batch batch = assemble_batch(data, idx);
    ForwardRecord rec = model.forward(batch.frames);
    std::vector<int> pred = argmax_rows(rec.logits);
    for (size_t i = 0; i < n; ++i)
      if (pred[i] == batch.labels[i]) ++correct;
    variance_sum += timestep_variance(rec) * static_cast<scalar_t>(n);
    pos += n;
  }
  res.accuracy = static_cast<scalar_t>(correct) / data.size();
  res.hamming_variance = variance_sum / static_cast<scalar_t>(data.size());
  return res;
}

scalar_t timestep_variance(const ForwardRecord& record) {
  const auto& maps = record.backbone_spikes;
  if (maps.size() < 2)
    throw std::invalid_argument("timestep_variance: need T >= 2");
  scalar_t acc = 0.0;
  for (size_t t = 0; t + 1 < maps.size(); ++t)
    acc += (maps[t].values() - maps[t + 1].values()).abs().mean();
  return acc / static_cast<scalar_t>(maps.size() - 1);
}

FiringEnergyReport firing_and_energy(const SnnModel& model,
                                     const Dataset& data, size_t max_samples,
                                     scalar_t e_ac_pj, scalar_t e_mac_pj) {
  NoGradGuard no_grad;
  FiringEnergyReport rep;
  rep.samples = std::min(max_samples, data.size());
  if (rep.samples == 0) return rep;

  // Instrumented re-walk of the backbone: spike counts per LIF layer,
  // nonzero inputs per synaptic layer.
  size_t lif_count = 0;
  for (const Layer& l : model.backbone())
    if (std::holds_alternative<LifLayer>(l)) ++lif_count;
  std::vector<scalar_t> spike_totals(lif_count, 0.0);
  std::vector<scalar_t> neuron_count(lif_count, 0.0);

  const index_t t_steps = data.timesteps;
  scalar_t synops = 0.0, first_macs = 0.0;

  for (size_t s = 0; s < rep.samples; ++s) {
    Batch batch = assemble_batch(data, {s});
    std::vector<MembraneState> states(model.backbone().size());
    for (index_t t = 0; t < t_steps; ++t) {
      Tensor h = batch.frames[t];
      bool first_synaptic = true;
      size_t lif_idx = 0;
      for (size_t i = 0; i < model.backbone().size(); ++i) {
        const Layer& layer = model.backbone()[i];
        if (const auto* c = std::get_if<ConvLayer>(&layer)) {
          const index_t cout = c->weight.dim(0), cin = c->weight.dim(1);
          const index_t kh = c->weight.dim(2), kw = c->weight.dim(3);
          Tensor y = conv2d(h, c->weight, c->bias, c->pad);
          if (first_synaptic) {
            first_macs += static_cast<scalar_t>(y.size() / cout) * cout *
                          (cin * kh * kw);
            first_synaptic = false;
          } else {
            synops += static_cast<scalar_t>((h.values() != 0.0).count()) *
                      static_cast<scalar_t>(cout * kh * kw);
          }
          h = y;
        } else if (std::get_if<PoolLayer>(&layer)) {
          h = avg_pool2(h);
        } else if (std::get_if<FlattenLayer>(&layer)) {
          h = reshape(h, {h.dim(0), h.size() / h.dim(0)});
        } else if (const auto* l = std::get_if<LinearLayer>(&layer)) {
          if (first_synaptic) {
            first_macs += static_cast<scalar_t>(l->weight.size());
            first_synaptic = false;
          } else {
            synops += static_cast<scalar_t>((h.values() != 0.0).count()) *
                      static_cast<scalar_t>(l->weight.dim(1));
          }
          h = bias_add(matmul(h, l->weight), l->bias);
        } else if (const auto* lf = std::get_if<LifLayer>(&layer)) {
          LifStepResult r = lif_step(states[i], h, lf->params);
          states[i] = r.state;
          h = r.spikes;
          spike_totals[lif_idx] += h.values().sum();
          if (t == 0 && s == 0)
            neuron_count[lif_idx] = static_cast<scalar_t>(h.size());
          ++lif_idx;
        }
      }
      // Classifier: GAP output feeds the final linear map.
      Tensor feat = model.classifier_gap() ? global_avg_pool(h) : h;
      synops += static_cast<scalar_t>((feat.values() != 0.0).count()) *
                static_cast<scalar_t>(model.classifier().weight.dim(1));
    }
  }

  for (size_t l = 0; l < lif_count; ++l) {
    rep.layer_names.push_back("lif" + std::to_string(l + 1));
    rep.rate_percent.push_back(
        100.0 * spike_totals[l] /
        (neuron_count[l] * static_cast<scalar_t>(t_steps) *
         static_cast<scalar_t>(rep.samples)));
  }
  rep.synops = synops;
  rep.first_layer_macs = first_macs;
  rep.energy_pj = synops * e_ac_pj + first_macs * e_mac_pj;
  return rep;
}

namespace {

std::string fmt(scalar_t v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void write_metrics_report(const MetricsReport& report,
                          const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("report: cannot write " + path);
  os << "final_test_accuracy = " << fmt(report.final_test_acc) << "\n";
  os << "best_test_accuracy = " << fmt(report.best_test_acc) << "\n";
  os << "best_epoch = " << report.best_epoch << "\n";
  os << "test_hamming_variance = " << fmt(report.test_hamming_variance)
     << "\n";
  for (size_t i = 0; i < report.firing.layer_names.size(); ++i)
    os << "firing_rate_percent_" << report.firing.layer_names[i] << " = "
       << fmt(report.firing.rate_percent[i]) << "\n";
  os << "synops = " << fmt(report.firing.synops) << "\n";
  os << "first_layer_macs = " << fmt(report.firing.first_layer_macs) << "\n";
  os << "energy_pj = " << fmt(report.firing.energy_pj) << "\n";
  os << "energy_samples = " << report.firing.samples << "\n";
  if (!os) throw std::runtime_error("report: write failed for " + path);
}

MetricsReport fit(const Dataset& train, const Dataset& test, SnnModel& model,
                  const TrainConfig& cfg, const std::string& run_dir) {
  cfg.validate();
  if (cfg.dense) model.set_dense_hooks(true);

  std::ofstream metrics;
  if (!run_dir.empty()) {
    std::filesystem::create_directories(run_dir);
    std::ofstream cfg_out(run_dir + "/config.txt");
    cfg_out << cfg.echo();
    metrics.open(run_dir + "/metrics.txt");
    if (!metrics)
      throw std::runtime_error("fit: cannot write metrics in " + run_dir);
  }

  Sgd opt(model.params(), cfg.momentum, cfg.weight_decay);
  Rng shuffle_rng(cfg.seed, RngStream::kShuffle);
  Rng noise_rng(cfg.seed, RngStream::kNoise);

  MetricsReport report;
  scalar_t best_acc = -1.0;
  Checkpoint best_ck;

  std::vector<size_t> order(train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    scalar_t lr = schedule_lr(cfg, epoch);
    // Fisher-Yates off the dedicated shuffle stream.
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    EpochRecord er;
    er.epoch = epoch;
    er.lr = lr;
    index_t correct = 0, seen = 0;
    scalar_t ce_sum = 0.0, spike_sum = 0.0, noise_sum = 0.0;
    size_t steps = 0;

    for (size_t pos = 0; pos < order.size(); pos += cfg.batch_size) {
      size_t n = std::min<size_t>(cfg.batch_size, order.size() - pos);
      std::vector<size_t> idx(order.begin() + pos, order.begin() + pos + n);
      Batch batch = assemble_batch(train, idx);
      StepLosses sl = train_step(batch, model, cfg, opt, lr, noise_rng);
      correct += sl.correct;
      seen += sl.batch;
      ce_sum += sl.ce;
      spike_sum += sl.spike;
      noise_sum += sl.noise;
      ++steps;
      if (metrics.is_open())
        metrics << "step epoch=" << epoch << " step=" << steps - 1
                << " lr=" << fmt(lr) << " loss=" << fmt(sl.total)
                << " ce=" << fmt(sl.ce) << " spike=" << fmt(sl.spike)
                << " noise=" << fmt(sl.noise) << "\n";
    }

    EvalResult ev = evaluate(test, model, cfg.batch_size);
    er.train_acc = seen ? static_cast<scalar_t>(correct) / seen : 0.0;
    er.test_acc = ev.accuracy;
    er.mean_ce = steps ? ce_sum / steps : 0.0;
    er.mean_spike = steps ? spike_sum / steps : 0.0;
    er.mean_noise = steps ? noise_sum / steps : 0.0;
    report.epochs.push_back(er);
    if (metrics.is_open())
      metrics << "epoch epoch=" << epoch << " lr=" << fmt(lr)
              << " train_acc=" << fmt(er.train_acc)
              << " test_acc=" << fmt(er.test_acc) << " ce=" << fmt(er.mean_ce)
              << " spike=" << fmt(er.mean_spike)
              << " noise=" << fmt(er.mean_noise) << "\n";

    if (ev.accuracy > best_acc) {
      best_acc = ev.accuracy;
      report.best_epoch = epoch;
      best_ck = Checkpoint::capture(model, opt.velocity());
    }
  }

  if (best_acc < 0.0) {
    best_ck = Checkpoint::capture(model, opt.velocity());
    report.best_epoch = -1;
  }

  EvalResult final_ev = evaluate(test, model, cfg.batch_size);
  report.final_test_acc = final_ev.accuracy;
  report.best_test_acc = best_acc >= 0.0 ? best_acc : final_ev.accuracy;
  report.test_hamming_variance = final_ev.hamming_variance;
  report.firing =
      firing_and_energy(model, test, test.size(), cfg.e_ac_pj, cfg.e_mac_pj);

  if (!run_dir.empty()) {
    best_ck.save(run_dir + "/best.ckpt");
    write_metrics_report(report, run_dir + "/report.txt");
  }
  return report;
}

}  // namespace spikekit
