#pragma once

#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

#include "spikekit/rng.hpp"
#include "spikekit/tensor.hpp"

namespace spikekit {

/** One sensor event. Polarity 1 = brightness increase, 0 = decrease. */
struct Event {
  std::uint32_t t_us = 0;
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::uint8_t p = 0;
};

/** Ordered event record from a sensor or the synthetic generator. */
struct EventStream {
  std::vector<Event> events;  // nondecreasing timestamps
  std::uint16_t width = 0;    // sensor extents
  std::uint16_t height = 0;
  int label = -1;

  void validate() const;
};

/** Splits [t_min, t_max] into T equal windows and counts events per
 *  (window, polarity, downsampled row, downsampled column). The
 *  boundary event at t_max lands in the last window. Result shape
 *  [T, 2, H, W]; counts are fed downstream as input current. */
Tensor bin_events(const EventStream& s, index_t timesteps, index_t out_h,
                  index_t out_w);

/** Constant-current encoding of a static image: the [C,H,W] tensor is
 *  repeated T times into a [T,C,H,W] input. */
Tensor encode_static(const Tensor& image, index_t timesteps);

// ---- On-disk formats -------------------------------------------------
//
// Event file (little-endian):
//   magic "SKEV"  4 bytes
//   version       u32 (currently 1)
//   width, height u16 each
//   count         u32
//   records       count x { t_us u32, x u16, y u16, p u8 }
//
// Manifest: one "relative-path<space>label" line per stream.

void write_event_file(const std::string& path, const EventStream& s);
EventStream read_event_file(const std::string& path);

/** Reads "t,x,y,p" lines (a leading header line is skipped). Extents
 *  must be supplied since CSV carries none. */
EventStream read_event_csv(const std::string& path, std::uint16_t width,
                           std::uint16_t height);

struct ManifestEntry {
  std::string file;
  int label = -1;
};

void write_manifest(const std::string& path,
                    const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& path);

// ---- Synthetic dataset ------------------------------------------------

/** Motion classes of the synthetic generator. */
enum class MotionClass { kLeft = 0, kRight = 1, kUp = 2, kDown = 3 };
constexpr int kMotionClasses = 4;

/** Generator parameters. A bright bar sweeps the frame; its leading
 *  edge emits ON events and its trailing edge OFF events, plus uniform
 *  background noise. Speed and phase jitter plus sparse edge emission
 *  keep single frames ambiguous, and polarity flips make the
 *  ON/OFF geometry unreliable, so temporal pooling has to do real work. */
struct SynthParams {
  std::uint16_t width = 24;
  std::uint16_t height = 24;
  std::uint32_t duration_us = 40000;
  int bar_thickness = 3;
  int bar_length = 12;            // lanes covered; offset drawn per stream
  int motion_steps = 32;          // bar position updates per stream
  scalar_t emission_prob = 0.22;  // per edge pixel per step
  scalar_t speed_jitter = 0.5;    // relative speed range +-
  scalar_t phase_range = 0.4;     // start offset as a fraction of travel
  scalar_t polarity_flip = 0.5;   // chance an edge event flips polarity
  scalar_t noise_rate = 0.05;     // background events / signal events
};

/** Deterministic stream for (class, seed). */
EventStream synth_generate(MotionClass cls, std::uint64_t seed,
                           const SynthParams& params = {});

/** The (timestamp, leading edge, trailing edge) schedule the generator
 *  used for (cls, seed). Lets a test verify event geometry without
 *  re-running the emission loop. */
std::vector<std::tuple<std::uint32_t, int, int>> synth_edge_schedule(
    MotionClass cls, std::uint64_t seed, const SynthParams& params = {});

/** In-memory labelled dataset of binned frames. */
struct Dataset {
  std::vector<ArrayX> frames;  // each [T*2*H*W] flat
  std::vector<int> labels;
  index_t timesteps = 0;
  Shape frame_shape;  // [2,H,W]

  size_t size() const { return labels.size(); }
};

/** Generates `count` streams per split with balanced labels and bins
 *  them; split determinism is a pure function of the seed. `input_gain`
 *  scales the binned counts into input current (counts stay raw inside
 *  bin_events itself). */
Dataset synth_dataset(std::uint64_t seed, size_t count, index_t timesteps,
                      const SynthParams& params = {},
                      std::uint64_t split_salt = 0, scalar_t input_gain = 1.0);

/** Loads a manifest of event files and bins every stream. */
Dataset load_dataset(const std::string& manifest_path, index_t timesteps,
                     index_t out_h, index_t out_w, scalar_t input_gain = 1.0);

}  // namespace spikekit
