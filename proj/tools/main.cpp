#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "spikekit/pgm.hpp"
#include "spikekit/trainer.hpp"

namespace fs = std::filesystem;
using namespace spikekit;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "config file (key = value)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--set", args.overrides,
                  "override a config key, e.g. --set beta=0.5");
}

TrainConfig resolve_config(const CommonArgs& args) {
  TrainConfig cfg = args.config_path.empty()
                        ? TrainConfig{}
                        : TrainConfig::from_file(args.config_path);
  for (const std::string& o : args.overrides) cfg.apply_override(o);
  cfg.validate();
  return cfg;
}

void echo_config(const TrainConfig& cfg) {
  std::cout << "# resolved config\n" << cfg.echo() << "\n";
}

Dataset resolve_train_data(const TrainConfig& cfg) {
  if (!cfg.train_manifest.empty())
    return load_dataset(cfg.train_manifest, cfg.timesteps, cfg.synth.height,
                        cfg.synth.width, cfg.input_gain);
  return synth_dataset(cfg.seed, cfg.synth_train, cfg.timesteps, cfg.synth,
                       /*split_salt=*/0, cfg.input_gain);
}

Dataset resolve_test_data(const TrainConfig& cfg) {
  if (!cfg.test_manifest.empty())
    return load_dataset(cfg.test_manifest, cfg.timesteps, cfg.synth.height,
                        cfg.synth.width, cfg.input_gain);
  return synth_dataset(cfg.seed, cfg.synth_test, cfg.timesteps, cfg.synth,
                       /*split_salt=*/1, cfg.input_gain);
}

std::string acc_str(scalar_t v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << 100.0 * v;
  return os.str();
}

std::string full_str(scalar_t v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

int run_train(const CommonArgs& args, const std::string& run_dir) {
  TrainConfig cfg = resolve_config(args);
  echo_config(cfg);
  Dataset train = resolve_train_data(cfg);
  Dataset test = resolve_test_data(cfg);
  SnnModel model = SnnModel::build_architecture(cfg.arch, train.frame_shape,
                                                cfg.classes, cfg.seed);
  MetricsReport rep = fit(train, test, model, cfg, run_dir);
  std::cout << "final_test_accuracy " << acc_str(rep.final_test_acc) << "%\n"
            << "best_test_accuracy " << acc_str(rep.best_test_acc)
            << "% (epoch " << rep.best_epoch << ")\n"
            << "artifacts " << run_dir << "\n";
  return 0;
}

int run_eval(const CommonArgs& args, const std::string& checkpoint) {
  TrainConfig cfg = resolve_config(args);
  echo_config(cfg);
  SnnModel model = Checkpoint::load(checkpoint).restore();
  Dataset test = resolve_test_data(cfg);
  EvalResult ev = evaluate(test, model, cfg.batch_size);
  std::cout << "test_accuracy " << acc_str(ev.accuracy) << "%\n"
            << "hamming_variance " << ev.hamming_variance << "\n"
            << "samples " << ev.samples << "\n";
  return 0;
}

scalar_t train_variant(const TrainConfig& cfg, const Dataset& train,
                       const Dataset& test, const std::string& run_dir) {
  SnnModel model = SnnModel::build_architecture(cfg.arch, train.frame_shape,
                                                cfg.classes, cfg.seed);
  MetricsReport rep = fit(train, test, model, cfg, run_dir);
  return rep.final_test_acc;
}

int run_ablate(const CommonArgs& args, const std::string& axis,
               const std::string& run_dir) {
  TrainConfig base = resolve_config(args);
  echo_config(base);
  Dataset train = resolve_train_data(base);
  Dataset test = resolve_test_data(base);

  std::vector<std::pair<std::string, TrainConfig>> variants;
  TrainConfig vanilla = base;
  vanilla.beta = 0.0;
  vanilla.gamma = 0.0;
  variants.emplace_back("vanilla", vanilla);

  if (axis == "bitop") {
    for (BitOp op : {BitOp::kAnd, BitOp::kOr, BitOp::kXor}) {
      TrainConfig v = base;
      v.bitop = op;
      variants.emplace_back(to_string(op), v);
    }
  } else if (axis == "noise") {
    TrainConfig aware = base;
    aware.noise.kind = NoiseKind::kAmplitudeAware;
    variants.emplace_back("aware", aware);
    for (scalar_t p : {0.4, 0.5, 0.6}) {
      TrainConfig v = base;
      v.noise.kind = NoiseKind::kFixedP;
      v.noise.p = p;
      std::ostringstream name;
      name << "fixed_p" << p;
      variants.emplace_back(name.str(), v);
    }
    for (scalar_t s : {0.1, 0.5, 1.0}) {
      TrainConfig v = base;
      v.noise.kind = NoiseKind::kGaussian;
      v.noise.std = s;
      std::ostringstream name;
      name << "gauss_std" << s;
      variants.emplace_back(name.str(), v);
    }
  } else if (axis == "consistency_fn") {
    for (ConsistencyFn fn :
         {ConsistencyFn::kMse, ConsistencyFn::kKl, ConsistencyFn::kCosine}) {
      TrainConfig v = base;
      v.consistency_fn = fn;
      variants.emplace_back(to_string(fn), v);
    }
  } else {
    std::cerr << "unknown ablation axis '" << axis
              << "' (expected bitop, noise or consistency_fn)\n";
    return 1;
  }

  std::ostringstream table;
  table << "axis " << axis << " seed " << base.seed << "\n";
  for (auto& [name, cfg] : variants) {
    scalar_t acc = train_variant(cfg, train, test, run_dir + "/" + name);
    table << name << " " << acc_str(acc) << "\n";
  }
  fs::create_directories(run_dir);
  std::ofstream out(run_dir + "/ablate_" + axis + ".txt");
  out << table.str();
  std::cout << table.str();
  return 0;
}

int run_sweep(const CommonArgs& args, std::vector<index_t> t_values, int reps,
              const std::string& run_dir) {
  TrainConfig base = resolve_config(args);
  echo_config(base);

  std::ostringstream table;
  table << "T baseline method delta seeds\n";
  for (index_t t : t_values) {
    if (t < 2) {
      std::cerr << "sweep-T: every T must be >= 2\n";
      return 1;
    }
    scalar_t base_sum = 0.0, method_sum = 0.0;
    std::ostringstream seeds;
    for (int r = 0; r < reps; ++r) {
      TrainConfig cfg = base;
      cfg.timesteps = t;
      cfg.seed = base.seed + static_cast<std::uint64_t>(r);
      seeds << (r ? "," : "") << cfg.seed;
      Dataset train = resolve_train_data(cfg);
      Dataset test = resolve_test_data(cfg);

      TrainConfig vanilla = cfg;
      vanilla.beta = 0.0;
      vanilla.gamma = 0.0;
      std::string tag = "T" + std::to_string(t) + "_r" + std::to_string(r);
      base_sum +=
          train_variant(vanilla, train, test, run_dir + "/baseline_" + tag);
      method_sum +=
          train_variant(cfg, train, test, run_dir + "/method_" + tag);
    }
    scalar_t b = base_sum / reps, m = method_sum / reps;
    table << t << " " << acc_str(b) << " " << acc_str(m) << " "
          << acc_str(m - b) << " " << seeds.str() << "\n";
  }
  fs::create_directories(run_dir);
  std::ofstream out(run_dir + "/sweep_T.txt");
  out << table.str();
  std::cout << table.str();
  return 0;
}

int run_gen_data(const CommonArgs& args, const std::string& outdir) {
  TrainConfig cfg = resolve_config(args);
  echo_config(cfg);
  fs::create_directories(fs::path(outdir) / "train");
  fs::create_directories(fs::path(outdir) / "test");

  auto write_split = [&](const std::string& split, int count,
                         std::uint64_t salt) {
    std::vector<ManifestEntry> entries;
    for (int i = 0; i < count; ++i) {
      auto cls = static_cast<MotionClass>(i % kMotionClasses);
      std::uint64_t stream_seed =
          Rng(cfg.seed, (salt << 32) + static_cast<std::uint64_t>(i))
              .next_u64();
      EventStream s = synth_generate(cls, stream_seed, cfg.synth);
      std::ostringstream name;
      name << "stream_" << std::setw(5) << std::setfill('0') << i << ".evt";
      write_event_file((fs::path(outdir) / split / name.str()).string(), s);
      entries.push_back({name.str(), s.label});
    }
    write_manifest((fs::path(outdir) / split / "manifest.txt").string(),
                   entries);
  };
  write_split("train", cfg.synth_train, 0);
  write_split("test", cfg.synth_test, 1);
  std::cout << "wrote " << cfg.synth_train << " train / " << cfg.synth_test
            << " test streams under " << outdir << "\n";
  return 0;
}

int run_inspect(const CommonArgs& args, const std::string& checkpoint,
                const std::string& dump_dir, int samples) {
  TrainConfig cfg = resolve_config(args);
  echo_config(cfg);
  SnnModel model = Checkpoint::load(checkpoint).restore();
  Dataset test = resolve_test_data(cfg);

  EvalResult ev = evaluate(test, model, cfg.batch_size);
  FiringEnergyReport rep = firing_and_energy(
      model, test, static_cast<size_t>(samples), cfg.e_ac_pj, cfg.e_mac_pj);

  std::cout << "test_accuracy " << acc_str(ev.accuracy) << "%\n";
  std::cout << "hamming_variance " << full_str(ev.hamming_variance) << "\n";
  for (size_t i = 0; i < rep.layer_names.size(); ++i)
    std::cout << "rate_" << rep.layer_names[i] << " "
              << full_str(rep.rate_percent[i]) << "%\n";
  std::cout << "synops " << full_str(rep.synops) << "\n"
            << "first_layer_macs " << full_str(rep.first_layer_macs) << "\n"
            << "energy_pj " << full_str(rep.energy_pj) << "\n"
            << "energy_samples " << rep.samples << "\n";

  if (!dump_dir.empty()) {
    if (model.backbone_shape().size() != 3) {
      std::cerr << "inspect: --dump-maps needs a spatial backbone\n";
      return 1;
    }
    fs::create_directories(dump_dir);
    NoGradGuard no_grad;
    Batch batch = assemble_batch(test, {0});
    ForwardRecord rec = model.forward(batch.frames);
    auto skeleton = stable_and(rec.backbone_spikes);
    const index_t c = model.backbone_shape()[0];
    const index_t h = model.backbone_shape()[1];
    const index_t w = model.backbone_shape()[2];
    auto channel_mean = [&](const Tensor& map) {
      ArrayX img = ArrayX::Zero(h * w);
      for (index_t ci = 0; ci < c; ++ci)
        img += map.values().segment(ci * h * w, h * w);
      return ArrayX(img / static_cast<scalar_t>(c));
    };
    for (size_t t = 0; t < rec.backbone_spikes.size(); ++t)
      write_pgm(dump_dir + "/map_t" + std::to_string(t) + ".pgm",
                channel_mean(rec.backbone_spikes[t]), h, w);
    for (size_t t = 0; t < skeleton.size(); ++t)
      write_pgm(dump_dir + "/skeleton_t" + std::to_string(t) + ".pgm",
                channel_mean(skeleton[t]), h, w);
    std::cout << "maps " << dump_dir << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spiking-network training kit with dual consistency losses"};
  app.require_subcommand(1);

  CommonArgs train_args, eval_args, ablate_args, sweep_args, gen_args,
      inspect_args;
  std::string train_dir = "run";
  std::string eval_ckpt;
  std::string ablate_axis, ablate_dir = "ablate";
  std::string sweep_ts = "2,4", sweep_dir = "sweep";
  int sweep_reps = 1;
  std::string gen_outdir;
  std::string inspect_ckpt, inspect_dump;
  int inspect_samples = 10;

  CLI::App* train_cmd = app.add_subcommand("train", "train one model");
  add_common(train_cmd, train_args);
  train_cmd->add_option("--run-dir", train_dir, "output directory");

  CLI::App* eval_cmd =
      app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  add_common(eval_cmd, eval_args);
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);

  CLI::App* ablate_cmd = app.add_subcommand(
      "ablate", "train every variant along one ablation axis");
  add_common(ablate_cmd, ablate_args);
  ablate_cmd
      ->add_option("--axis", ablate_axis, "bitop | noise | consistency_fn")
      ->required();
  ablate_cmd->add_option("--run-dir", ablate_dir, "output directory");

  CLI::App* sweep_cmd = app.add_subcommand(
      "sweep-T", "baseline vs method across timestep counts");
  add_common(sweep_cmd, sweep_args);
  sweep_cmd->add_option("--T", sweep_ts, "comma-separated timesteps");
  sweep_cmd->add_option("--reps", sweep_reps, "repetitions per T");
  sweep_cmd->add_option("--run-dir", sweep_dir, "output directory");

  CLI::App* gen_cmd =
      app.add_subcommand("gen-data", "write a synthetic event dataset");
  add_common(gen_cmd, gen_args);
  gen_cmd->add_option("--outdir", gen_outdir, "dataset directory")->required();

  CLI::App* inspect_cmd = app.add_subcommand(
      "inspect", "firing, energy and variance report for a checkpoint");
  add_common(inspect_cmd, inspect_args);
  inspect_cmd->add_option("--checkpoint", inspect_ckpt, "checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);
  inspect_cmd->add_option("--dump-maps", inspect_dump,
                          "also write PGM spike-map and skeleton grids here");
  inspect_cmd->add_option("--samples", inspect_samples,
                          "streams used for energy accounting");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return run_train(train_args, train_dir);
    if (eval_cmd->parsed()) return run_eval(eval_args, eval_ckpt);
    if (ablate_cmd->parsed())
      return run_ablate(ablate_args, ablate_axis, ablate_dir);
    if (sweep_cmd->parsed()) {
      std::vector<index_t> ts;
      std::stringstream ss(sweep_ts);
      std::string item;
      while (std::getline(ss, item, ',')) ts.push_back(std::stol(item));
      return run_sweep(sweep_args, ts, sweep_reps, sweep_dir);
    }
    if (gen_cmd->parsed()) return run_gen_data(gen_args, gen_outdir);
    if (inspect_cmd->parsed())
      return run_inspect(inspect_args, inspect_ckpt, inspect_dump,
                         inspect_samples);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
