#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hiersteer/tensor.hpp"
#include "hiersteer/track.hpp"

namespace hiersteer {

inline constexpr std::uint16_t kLapVersion = 1;

/// One logged time step. The image is the quantized 6xHxW stereo pair.
struct FrameRecord {
  std::uint32_t frame_index = 0;
  double timestamp = 0;
  float steering = 0;
  float throttle = 0;
  float frame_rate = 0;
  std::uint8_t zone = 0;  // 0 = unlabeled
  std::vector<std::uint8_t> image;

  friend bool operator==(const FrameRecord&, const FrameRecord&) = default;
};

/// Vehicle pose at a frame, kept beside the lap file for zone labeling.
struct FramePose {
  double x = 0, y = 0, heading = 0, s = 0;
  friend bool operator==(const FramePose&, const FramePose&) = default;
};

struct LapHeader {
  std::uint64_t track_hash = 0;
  Direction direction = Direction::kCcw;
  float dt = 0.05f;
  std::uint16_t height = 0, width = 0;
  friend bool operator==(const LapHeader&, const LapHeader&) = default;
};

struct LapLog {
  LapHeader header;
  std::vector<FrameRecord> frames;
  std::vector<FramePose> poses;  // empty, or one per frame

  std::size_t image_bytes() const noexcept { return std::size_t{6} * header.height * header.width; }
  friend bool operator==(const LapLog&, const LapLog&) = default;
};

/// Writes the binary lap file and, when poses are present, `<path>.pose`.
/// Throws FormatError when the log violates its invariants.
void write_lap(const LapLog& log, const std::filesystem::path& path);
/// Reads a lap file (and its pose sidecar if present). Malformed input throws
/// FormatError naming the byte offset and, for records, the frame index.
LapLog read_lap(const std::filesystem::path& path);
std::filesystem::path pose_sidecar(const std::filesystem::path& lap_path);

/// CSV with frame_index,timestamp,steering,throttle,frame_rate,zone.
void export_lap_csv(const LapLog& log, const std::filesystem::path& path);

/// value * 255 rounded, clamped to [0, 255].
std::vector<std::uint8_t> quantize_image(const Tensor<float>& image);
/// Writes byte / 255 into `out` (image.size() floats).
void dequantize_into(std::span<const std::uint8_t> image, float* out);
Tensor<float> dequantize_image(std::span<const std::uint8_t> image, std::size_t height, std::size_t width);

struct PwmCalibration {
  double min_us = 1000.0;
  double mid_us = 1500.0;
  double max_us = 2000.0;
};
/// Piecewise-linear min -> -100, mid -> 0, max -> +100, clamped outside.
float normalize_pwm(double raw_us, const PwmCalibration& calibration = {});

/// Block average over `factor` x `factor` tiles of every channel of [C,H,W].
/// The camera resolution 672x376 maps to 168x94 at the default factor 4.
Tensor<float> resize_image(const Tensor<float>& image, std::size_t factor = 4);

/// Relabels every frame from its recorded arc length. Requires poses and a
/// matching track hash (IncompatibleTrackError otherwise).
LapLog label_zones(const LapLog& log, const Track& track);

/// A maximal run of one zone within one lap: frames [begin, end).
struct ZoneSegment {
  std::size_t lap = 0;
  std::size_t begin = 0, end = 0;
  bool short_run = false;  // shorter than the requested sequence length
  std::size_t size() const noexcept { return end - begin; }
};

/// Runs of `zone` in temporal order; runs shorter than `seq_len` are flagged.
std::vector<ZoneSegment> extract_zone_frames(std::span<const LapLog> laps, int zone, std::size_t seq_len = 0);

/// Every lap as one segment (for models trained on whole laps).
std::vector<ZoneSegment> whole_lap_segments(std::span<const LapLog> laps, std::span<const std::size_t> lap_ids);

/// Table-of-schedule row: base laps are split evenly across directions.
struct TrainingSchedule {
  std::string model;
  std::size_t base_laps = 20;
  std::size_t epochs = 100;
};
/// Default schedule for "mcn", "srn1".."srn5" and "baseline".
TrainingSchedule default_schedule(const std::string& model);

struct FrameRef {
  std::size_t lap = 0, frame = 0;
  friend bool operator==(const FrameRef&, const FrameRef&) = default;
  friend auto operator<=>(const FrameRef&, const FrameRef&) = default;
};

struct DatasetSplit {
  std::vector<std::size_t> train_laps, test_laps;
  std::vector<FrameRef> train, test;
  // Frame references of each zone 1..5 (index 0 unused).
  std::vector<std::vector<FrameRef>> train_by_zone, test_by_zone;
};

/// Uses the first base_laps/2 laps of each direction for training and the
/// last `test_per_direction` laps of each direction for testing. The two sets
/// never share a lap. Throws DataError naming the deficit.
DatasetSplit make_split(std::span<const LapLog> laps, std::size_t base_laps, std::size_t test_per_direction);

}  // namespace hiersteer
