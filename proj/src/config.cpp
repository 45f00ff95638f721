#include "spikekit/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace spikekit {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: bad boolean '" + v + "'");
}

std::string fmt(scalar_t v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

// Key table: parse and echo live in one place so they cannot drift.
struct KeyHandler {
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

const std::map<std::string, KeyHandler>& key_table() {
  static const std::map<std::string, KeyHandler> table = {
      {"arch",
       {[](TrainConfig& c, const std::string& v) { c.arch = v; },
        [](const TrainConfig& c) { return c.arch; }}},
      {"T",
       {[](TrainConfig& c, const std::string& v) { c.timesteps = std::stol(v); },
        [](const TrainConfig& c) { return std::to_string(c.timesteps); }}},
      {"classes",
       {[](TrainConfig& c, const std::string& v) { c.classes = std::stoi(v); },
        [](const TrainConfig& c) { return std::to_string(c.classes); }}},
      {"beta",
       {[](TrainConfig& c, const std::string& v) { c.beta = std::stod(v); },
        [](const TrainConfig& c) { return fmt(c.beta); }}},
      {"gamma",
       {[](TrainConfig& c, const std::string& v) { c.gamma = std::stod(v); },
        [](const TrainConfig& c) { return fmt(c.gamma); }}},
      {"alpha",
       {[](TrainConfig& c, const std::string& v) { c.alpha = std::stod(v); },
        [](const TrainConfig& c) { return fmt(c.alpha); }}},
      {"consistency_fn",
       {[](TrainConfig& c, const std::string& v) {
          c.consistency_fn = consistency_fn_from_string(v);
        },
        [](const TrainConfig& c) { return to_string(c.consistency_fn); }}},
      {"bitop",
       {[](TrainConfig& c, const std::string& v) {
          c.bitop = bit_op_from_string(v);
        },
        [](const TrainConfig& c) { return to_string(c.bitop); }}},
      {"noise",
       {[](TrainConfig& c, const std::string& v) {
          c.noise.kind = noise_kind_from_string(v);
        },
        [](const TrainConfig& c) { return to_string(c.noise.kind); }}},
      {"noise_p",
       {[](TrainConfig& c, const std::string& v) { c.noise.p = std::stod(v); },
        [](const TrainConfig& c) { return fmt(c.noise.p); }}},
      {"noise_std",
       {[](TrainConfig& c, const std::string& v) { c.noise.std = std::stod(v); },
        [](const TrainConfig& c) { return fmt(c.noise.std); }}},
      {"dense",
       {[](TrainConfig& c, const std::string& v) { c.dense = parse_bool(v); },
        [](const TrainConfig& c) { return c.dense ? "true" : "false"; }}},
      {"detach_anchor",
       {[](TrainConfig& c, const std::string& v) {
          c.detach_anchor = parse_bool(v);
        },
        [](const TrainConfig& c) { return c.detach_anchor ? "true" : "false"; }}},
      {"detach_clean",
       {[](TrainConfig& c, const std::string& v) {
          c.detach_clean = parse_bool(v);
        },
        [](const TrainConfig& c) { return c.detach_clean ? "true" : "false"; }}},
      {"detach_noise_input",
       {[](TrainConfig& c, const std::string& v) {
          c.detach_noise_input = parse_bool(v);
        },
        [](const TrainConfig& c) {
          return c.detach_noise_input ? "true" : "false";
        }}},
      {"lr",
       {[](TrainConfig& c, const std::string& v) { c.lr = std::stod(v); },
        [](const TrainConfig& c) { return fmt(c.lr); }}},
      {"momentum",
       {[](TrainConfig& c, const std::string& v) { c.momentum = std::stod(v); },
        [](const TrainConfig& c) { return fmt(c.momentum); }}},
      {"weight_decay",
       {[](TrainConfig& c, const std::string& v) {
          c.weight_decay = std::stod(v);
        },
        [](const TrainConfig& c) { return fmt(c.weight_decay); }}},
      {"lr_decay_every",
       {[](TrainConfig& c, const std::string& v) {
          c.lr_decay_every = std::stoi(v);
        },
        [](const TrainConfig& c) { return std::to_string(c.lr_decay_every); }}},
      {"lr_decay_factor",
       {[](TrainConfig& c, const std::string& v) {
          c.lr_decay_factor = std::stod(v);
        },
        [](const TrainConfig& c) { return fmt(c.lr_decay_factor); }}},
      {"epochs",
       {[](TrainConfig& c, const std::string& v) { c.epochs = std::stoi(v); },
        [](const TrainConfig& c) { return std::to_string(c.epochs); }}},
      {"batch_size",
       {[](TrainConfig& c, const std::string& v) {
          c.batch_size = std::stol(v);
        },
        [](const TrainConfig& c) { return std::to_string(c.batch_size); }}},
      {"seed",
       {[](TrainConfig& c, const std::string& v) { c.seed = std::stoull(v); },
        [](const TrainConfig& c) { return std::to_string(c.seed); }}},
      {"train_manifest",
       {[](TrainConfig& c, const std::string& v) { c.train_manifest = v; },
        [](const TrainConfig& c) { return c.train_manifest; }}},
      {"test_manifest",
       {[](TrainConfig& c, const std::string& v) { c.test_manifest = v; },
        [](const TrainConfig& c) { return c.test_manifest; }}},
      {"synth_train",
       {[](TrainConfig& c, const std::string& v) {
          c.synth_train = std::stoi(v);
        },
        [](const TrainConfig& c) { return std::to_string(c.synth_train); }}},
      {"synth_test",
       {[](TrainConfig& c, const std::string& v) {
          c.synth_test = std::stoi(v);
        },
        [](const TrainConfig& c) { return std::to_string(c.synth_test); }}},
      {"input_gain",
       {[](TrainConfig& c, const std::string& v) {
          c.input_gain = std::stod(v);
        },
        [](const TrainConfig& c) { return fmt(c.input_gain); }}},
      {"synth_width",
       {[](TrainConfig& c, const std::string& v) {
          c.synth.width = static_cast<std::uint16_t>(std::stoi(v));
        },
        [](const TrainConfig& c) { return std::to_string(c.synth.width); }}},
      {"synth_height",
       {[](TrainConfig& c, const std::string& v) {
          c.synth.height = static_cast<std::uint16_t>(std::stoi(v));
        },
        [](const TrainConfig& c) { return std::to_string(c.synth.height); }}},
      {"synth_duration_us",
       {[](TrainConfig& c, const std::string& v) {
          c.synth.duration_us = static_cast<std::uint32_t>(std::stoul(v));
        },
        [](const TrainConfig& c) {
          return std::to_string(c.synth.duration_us);
        }}},
      {"synth_bar_thickness",
       {[](TrainConfig& c, const std::string& v) {
          c.synth.bar_thickness = std::stoi(v);
        },
        [](const TrainConfig& c) {
          return std::to_string(c.synth.bar_thickness);
        }}},
      {"synth_motion_steps",
       {[](TrainConfig& c, const std::string& v) {
          c.synth.motion_steps = std::stoi(v);
        },
        [](const TrainConfig& c) {
          return std::to_string(c.synth.motion_steps);
        }}},
      {"synth_emission_prob",
       {[](TrainConfig& c, const std::string& v) {
          c.synth.emission_prob = std::stod(v);
        },
        [](const TrainConfig& c) { return fmt(c.synth.emission_prob); }}},
      {"synth_speed_jitter",
       {[](TrainConfig& c, const std::string& v) {
          c.synth.speed_jitter = std::stod(v);
        },
        [](const TrainConfig& c) { return fmt(c.synth.speed_jitter); }}},
      {"synth_polarity_flip",
       {[](TrainConfig& c, const std::string& v) {
          c.synth.polarity_flip = std::stod(v);
        },
        [](const TrainConfig& c) { return fmt(c.synth.polarity_flip); }}},
      {"synth_noise_rate",
       {[](TrainConfig& c, const std::string& v) {
          c.synth.noise_rate = std::stod(v);
        },
        [](const TrainConfig& c) { return fmt(c.synth.noise_rate); }}},
      {"e_ac_pj",
       {[](TrainConfig& c, const std::string& v) { c.e_ac_pj = std::stod(v); },
        [](const TrainConfig& c) { return fmt(c.e_ac_pj); }}},
      {"e_mac_pj",
       {[](TrainConfig& c, const std::string& v) { c.e_mac_pj = std::stod(v); },
        [](const TrainConfig& c) { return fmt(c.e_mac_pj); }}},
  };
  return table;
}

// Echo layout: section header followed by its keys.
const std::vector<std::pair<std::string, std::string>>& echo_layout() {
  static const std::vector<std::pair<std::string, std::string>> layout = {
      {"model", "arch"},          {"model", "T"},
      {"model", "classes"},       {"loss", "beta"},
      {"loss", "gamma"},          {"loss", "alpha"},
      {"loss", "consistency_fn"}, {"loss", "bitop"},
      {"loss", "noise"},          {"loss", "noise_p"},
      {"loss", "noise_std"},      {"loss", "dense"},
      {"loss", "detach_anchor"},  {"loss", "detach_clean"},
      {"loss", "detach_noise_input"},
      {"optim", "lr"},            {"optim", "momentum"},
      {"optim", "weight_decay"},  {"optim", "lr_decay_every"},
      {"optim", "lr_decay_factor"},
      {"optim", "epochs"},        {"optim", "batch_size"},
      {"data", "seed"},           {"data", "train_manifest"},
      {"data", "test_manifest"},  {"data", "synth_train"},
      {"data", "synth_test"},     {"data", "input_gain"},
      {"data", "synth_width"},
      {"data", "synth_height"},   {"data", "synth_duration_us"},
      {"data", "synth_bar_thickness"},
      {"data", "synth_motion_steps"},
      {"data", "synth_emission_prob"},
      {"data", "synth_speed_jitter"},
      {"data", "synth_polarity_flip"},
      {"data", "synth_noise_rate"},
      {"energy", "e_ac_pj"},      {"energy", "e_mac_pj"},
  };
  return layout;
}

}  // namespace

void TrainConfig::validate() const {
  if (beta < 0.0 || gamma < 0.0)
    throw std::invalid_argument("config: beta and gamma must be >= 0");
  if ((beta > 0.0 || gamma > 0.0) && timesteps < 2)
    throw std::invalid_argument(
        "config: consistency losses need T >= 2, got T = " +
        std::to_string(timesteps));
  if (timesteps < 1) throw std::invalid_argument("config: T must be >= 1");
  if (alpha <= 0.0) throw std::invalid_argument("config: alpha must be > 0");
  if (batch_size < 1 || epochs < 0)
    throw std::invalid_argument("config: bad batch size or epoch count");
  if (lr_decay_every < 1)
    throw std::invalid_argument("config: lr_decay_every must be >= 1");
  noise.validate();
}

std::string TrainConfig::echo() const {
  std::ostringstream os;
  std::string section;
  for (const auto& [sec, key] : echo_layout()) {
    if (sec != section) {
      if (!section.empty()) os << "\n";
      os << "[" << sec << "]\n";
      section = sec;
    }
    os << key << " = " << key_table().at(key).get(*this) << "\n";
  }
  return os.str();
}

TrainConfig TrainConfig::from_string(const std::string& text) {
  TrainConfig cfg;
  std::istringstream is(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[' && t.back() == ']') continue;  // section header
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " is not key = value: '" + t + "'");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    auto it = key_table().find(key);
    if (it == key_table().end())
      throw std::invalid_argument("config: unknown key '" + key + "'");
    it->second.set(cfg, value);
  }
  return cfg;
}

TrainConfig TrainConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config: cannot open " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return from_string(buf.str());
}

void TrainConfig::apply_override(const std::string& assignment) {
  size_t eq = assignment.find('=');
  if (eq == std::string::npos)
    throw std::invalid_argument("override '" + assignment +
                                "' is not key=value");
  std::string key = trim(assignment.substr(0, eq));
  std::string value = trim(assignment.substr(eq + 1));
  auto it = key_table().find(key);
  if (it == key_table().end())
    throw std::invalid_argument("config: unknown key '" + key + "'");
  it->second.set(*this, value);
}

scalar_t schedule_lr(const TrainConfig& cfg, int epoch) {
  int drops = epoch / cfg.lr_decay_every;
  return cfg.lr * std::pow(cfg.lr_decay_factor, drops);
}

}  // namespace spikekit
