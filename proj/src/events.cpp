#include "spikekit/events.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace spikekit {

void EventStream::validate() const {
  std::uint32_t prev = 0;
  for (const Event& e : events) {
    if (e.t_us < prev)
      throw std::invalid_argument("event stream: timestamps not ordered");
    if (e.x >= width || e.y >= height)
      throw std::invalid_argument(
          "event stream: event at (" + std::to_string(e.x) + "," +
          std::to_string(e.y) + ") outside sensor " + std::to_string(width) +
          "x" + std::to_string(height));
    if (e.p > 1)
      throw std::invalid_argument("event stream: polarity must be 0 or 1");
    prev = e.t_us;
  }
}

Tensor bin_events(const EventStream& s, index_t timesteps, index_t out_h,
                  index_t out_w) {
  if (timesteps < 1)
    throw std::invalid_argument("bin_events: need T >= 1");
  if (s.events.empty())
    throw std::invalid_argument("bin_events: empty event stream");
  s.validate();
  const std::uint64_t t_min = s.events.front().t_us;
  const std::uint64_t t_max = s.events.back().t_us;
  const std::uint64_t span = t_max - t_min;
  ArrayX counts = ArrayX::Zero(timesteps * 2 * out_h * out_w);
  for (const Event& e : s.events) {
    std::uint64_t w =
        span == 0 ? 0 : ((e.t_us - t_min) * static_cast<std::uint64_t>(timesteps)) / span;
    if (w >= static_cast<std::uint64_t>(timesteps)) w = timesteps - 1;
    index_t row = static_cast<index_t>(e.y) * out_h / s.height;
    index_t col = static_cast<index_t>(e.x) * out_w / s.width;
    counts[((static_cast<index_t>(w) * 2 + e.p) * out_h + row) * out_w +
           col] += 1.0;
  }
  return Tensor::from_array({timesteps, 2, out_h, out_w}, std::move(counts));
}

Tensor encode_static(const Tensor& image, index_t timesteps) {
  if (timesteps < 1)
    throw std::invalid_argument("encode_static: need T >= 1");
  Shape shape = {timesteps};
  shape.insert(shape.end(), image.shape().begin(), image.shape().end());
  ArrayX out(timesteps * image.size());
  for (index_t t = 0; t < timesteps; ++t)
    out.segment(t * image.size(), image.size()) = image.values();
  return Tensor::from_array(std::move(shape), std::move(out));
}

// ---- File formats -----------------------------------------------------

namespace {

constexpr char kEventMagic[4] = {'S', 'K', 'E', 'V'};
constexpr std::uint32_t kEventVersion = 1;

void put_u16(std::ostream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xFF),
                        static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<char*>(b), 2);
}

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = (v >> (8 * i)) & 0xFF;
  os.write(reinterpret_cast<char*>(b), 4);
}

std::uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (std::uint16_t(b[1]) << 8));
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_event_file(const std::string& path, const EventStream& s) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("events: cannot write " + path);
  os.write(kEventMagic, 4);
  put_u32(os, kEventVersion);
  put_u16(os, s.width);
  put_u16(os, s.height);
  put_u32(os, static_cast<std::uint32_t>(s.events.size()));
  for (const Event& e : s.events) {
    put_u32(os, e.t_us);
    put_u16(os, e.x);
    put_u16(os, e.y);
    os.put(static_cast<char>(e.p));
  }
  if (!os) throw std::runtime_error("events: write failed for " + path);
}

EventStream read_event_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("events: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kEventMagic, 4) != 0)
    throw std::runtime_error("events: " + path + " is not an event file");
  std::uint32_t version = get_u32(is);
  if (version != kEventVersion)
    throw std::runtime_error("events: unsupported version " +
                             std::to_string(version) + " in " + path);
  EventStream s;
  s.width = get_u16(is);
  s.height = get_u16(is);
  std::uint32_t count = get_u32(is);
  s.events.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    s.events[i].t_us = get_u32(is);
    s.events[i].x = get_u16(is);
    s.events[i].y = get_u16(is);
    s.events[i].p = static_cast<std::uint8_t>(is.get());
  }
  if (!is) throw std::runtime_error("events: truncated file " + path);
  s.validate();
  return s;
}

EventStream read_event_csv(const std::string& path, std::uint16_t width,
                           std::uint16_t height) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("events: cannot open " + path);
  EventStream s;
  s.width = width;
  s.height = height;
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (lineno == 1 && line.find_first_not_of("txyp, \r") == std::string::npos)
      continue;  // header
    Event e;
    char c1, c2, c3;
    unsigned long t;
    unsigned x, y, p;
    std::istringstream ls(line);
    if (!(ls >> t >> c1 >> x >> c2 >> y >> c3 >> p) || c1 != ',' ||
        c2 != ',' || c3 != ',')
      throw std::runtime_error("events: bad CSV line " +
                               std::to_string(lineno) + " in " + path);
    e.t_us = static_cast<std::uint32_t>(t);
    e.x = static_cast<std::uint16_t>(x);
    e.y = static_cast<std::uint16_t>(y);
    e.p = static_cast<std::uint8_t>(p);
    s.events.push_back(e);
  }
  s.validate();
  return s;
}

void write_manifest(const std::string& path,
                    const std::vector<ManifestEntry>& entries) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("manifest: cannot write " + path);
  for (const ManifestEntry& e : entries)
    os << e.file << " " << e.label << "\n";
  if (!os) throw std::runtime_error("manifest: write failed for " + path);
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("manifest: cannot open " + path);
  std::vector<ManifestEntry> out;
  std::string file;
  int label;
  while (is >> file >> label) out.push_back({file, label});
  return out;
}

// ---- Synthetic generator ----------------------------------------------

namespace {

struct Trajectory {
  MotionClass cls;
  SynthParams params;
  scalar_t speed_factor;
  scalar_t phase;
  int lane_offset = 0;

  bool horizontal() const {
    return cls == MotionClass::kLeft || cls == MotionClass::kRight;
  }

  int span() const { return horizontal() ? params.width : params.height; }

  // Leading/trailing edge coordinate along the motion axis at step k.
  std::pair<int, int> edges_at_step(int k) const {
    const scalar_t travel =
        static_cast<scalar_t>(span() + params.bar_thickness);
    const scalar_t v = travel / params.motion_steps * speed_factor;
    const scalar_t offset = phase + v * k;
    int lead;
    if (cls == MotionClass::kRight || cls == MotionClass::kDown)
      lead = static_cast<int>(std::floor(offset)) - 1;
    else
      lead = span() - static_cast<int>(std::floor(offset));
    int dir = (cls == MotionClass::kRight || cls == MotionClass::kDown) ? 1 : -1;
    int trail = lead - dir * params.bar_thickness;
    return {lead, trail};
  }

  std::uint32_t step_time(int k) const {
    return static_cast<std::uint32_t>(
        static_cast<std::uint64_t>(k) * params.duration_us /
        params.motion_steps);
  }
};

Rng stream_rng(MotionClass cls, std::uint64_t seed) {
  return Rng(seed, static_cast<std::uint64_t>(RngStream::kSynthData) +
                       (static_cast<std::uint64_t>(cls) << 8));
}

Trajectory make_trajectory(MotionClass cls, const SynthParams& params,
                           Rng& rng) {
  Trajectory tr;
  tr.cls = cls;
  tr.params = params;
  // First draws of the stream's generator; regeneration from the same
  // (class, seed) reproduces them.
  tr.speed_factor = rng.uniform(1.0 - params.speed_jitter,
                                1.0 + params.speed_jitter);
  const scalar_t travel =
      static_cast<scalar_t>(tr.span() + params.bar_thickness);
  tr.phase = rng.uniform(0.0, params.phase_range * travel);
  const int lanes = tr.horizontal() ? params.height : params.width;
  const int play = std::max(0, lanes - params.bar_length);
  tr.lane_offset = static_cast<int>(rng.below(play + 1));
  return tr;
}

}  // namespace

std::vector<std::tuple<std::uint32_t, int, int>> synth_edge_schedule(
    MotionClass cls, std::uint64_t seed, const SynthParams& params) {
  Rng rng = stream_rng(cls, seed);
  Trajectory tr = make_trajectory(cls, params, rng);
  std::vector<std::tuple<std::uint32_t, int, int>> out;
  out.reserve(params.motion_steps);
  for (int k = 0; k < params.motion_steps; ++k) {
    auto [lead, trail] = tr.edges_at_step(k);
    out.emplace_back(tr.step_time(k), lead, trail);
  }
  return out;
}

EventStream synth_generate(MotionClass cls, std::uint64_t seed,
                           const SynthParams& params) {
  Rng rng = stream_rng(cls, seed);
  Trajectory tr = make_trajectory(cls, params, rng);

  EventStream s;
  s.width = params.width;
  s.height = params.height;
  s.label = static_cast<int>(cls);

  const bool horiz = tr.horizontal();
  const int lanes = horiz ? params.height : params.width;
  const int lane_end =
      std::min(lanes, tr.lane_offset + std::max(1, params.bar_length));
  for (int k = 0; k < params.motion_steps; ++k) {
    auto [lead, trail] = tr.edges_at_step(k);
    std::uint32_t t = tr.step_time(k);
    for (int lane = tr.lane_offset; lane < lane_end; ++lane) {
      for (int which = 0; which < 2; ++which) {
        int pos = which == 0 ? lead : trail;
        if (pos < 0 || pos >= tr.span()) continue;
        if (!rng.bernoulli(params.emission_prob)) continue;
        std::uint8_t pol = which == 0 ? 1 : 0;  // leading edge brightens
        if (params.polarity_flip > 0.0 && rng.bernoulli(params.polarity_flip))
          pol = static_cast<std::uint8_t>(1 - pol);
        Event e;
        e.t_us = t;
        e.x = static_cast<std::uint16_t>(horiz ? pos : lane);
        e.y = static_cast<std::uint16_t>(horiz ? lane : pos);
        e.p = pol;
        s.events.push_back(e);
      }
    }
  }

  const size_t signal_count = s.events.size();
  const size_t noise_count = static_cast<size_t>(
      std::llround(params.noise_rate * static_cast<scalar_t>(signal_count)));
  for (size_t i = 0; i < noise_count; ++i) {
    Event e;
    e.t_us = static_cast<std::uint32_t>(rng.below(params.duration_us + 1));
    e.x = static_cast<std::uint16_t>(rng.below(params.width));
    e.y = static_cast<std::uint16_t>(rng.below(params.height));
    e.p = static_cast<std::uint8_t>(rng.below(2));
    s.events.push_back(e);
  }
  std::stable_sort(s.events.begin(), s.events.end(),
                   [](const Event& a, const Event& b) { return a.t_us < b.t_us; });
  return s;
}

Dataset synth_dataset(std::uint64_t seed, size_t count, index_t timesteps,
                      const SynthParams& params, std::uint64_t split_salt,
                      scalar_t input_gain) {
  Dataset d;
  d.timesteps = timesteps;
  d.frame_shape = {2, params.height, params.width};
  d.frames.reserve(count);
  d.labels.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    MotionClass cls = static_cast<MotionClass>(i % kMotionClasses);
    std::uint64_t stream_seed =
        Rng(seed, (split_salt << 32) + i).next_u64();
    EventStream s = synth_generate(cls, stream_seed, params);
    Tensor frames = bin_events(s, timesteps, params.height, params.width);
    d.frames.push_back(frames.values() * input_gain);
    d.labels.push_back(s.label);
  }
  return d;
}

Dataset load_dataset(const std::string& manifest_path, index_t timesteps,
                     index_t out_h, index_t out_w, scalar_t input_gain) {
  auto entries = read_manifest(manifest_path);
  if (entries.empty())
    throw std::runtime_error("dataset: empty manifest " + manifest_path);
  std::filesystem::path base =
      std::filesystem::path(manifest_path).parent_path();
  Dataset d;
  d.timesteps = timesteps;
  d.frame_shape = {2, out_h, out_w};
  for (const ManifestEntry& e : entries) {
    EventStream s = read_event_file((base / e.file).string());
    Tensor frames = bin_events(s, timesteps, out_h, out_w);
    d.frames.push_back(frames.values() * input_gain);
    d.labels.push_back(e.label);
  }
  return d;
}

}  // namespace spikekit
