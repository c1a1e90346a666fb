#include "hiersteer/datalog.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hiersteer/binio.hpp"
#include "hiersteer/textio.hpp"

namespace hiersteer {

namespace {

constexpr char kLapMagic[4] = {'H', 'M', 'T', 'L'};
constexpr char kPoseMagic[4] = {'H', 'M', 'T', 'P'};

void check_log(const LapLog& log) {
  if (log.header.height == 0 || log.header.width == 0) throw FormatError("lap log: image dims must be positive");
  if (log.frames.size() > UINT32_MAX) throw FormatError("lap log: too many frames");
  if (!log.poses.empty() && log.poses.size() != log.frames.size())
    throw FormatError("lap log: pose count does not match frame count");
  for (std::size_t i = 0; i < log.frames.size(); ++i) {
    const FrameRecord& f = log.frames[i];
    if (f.image.size() != log.image_bytes())
      throw FormatError("lap log: frame " + std::to_string(i) + " image has " + std::to_string(f.image.size()) +
                        " bytes, header dims need " + std::to_string(log.image_bytes()));
    if (f.zone > 5) throw FormatError("lap log: frame " + std::to_string(i) + " has zone > 5");
    if (i > 0 && f.frame_index <= log.frames[i - 1].frame_index)
      throw FormatError("lap log: frame indices must increase strictly");
  }
}

}  // namespace

std::filesystem::path pose_sidecar(const std::filesystem::path& lap_path) {
  std::filesystem::path p = lap_path;
  p += ".pose";
  return p;
}

void write_lap(const LapLog& log, const std::filesystem::path& path) {
  check_log(log);
  ByteWriter w;
  w.put_bytes(kLapMagic, 4);
  w.put<std::uint16_t>(kLapVersion);
  w.put<std::uint64_t>(log.header.track_hash);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(log.header.direction));
  w.put<float>(log.header.dt);
  w.put<std::uint16_t>(log.header.height);
  w.put<std::uint16_t>(log.header.width);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(log.frames.size()));
  for (const FrameRecord& f : log.frames) {
    w.put<std::uint32_t>(f.frame_index);
    w.put<double>(f.timestamp);
    w.put<float>(f.steering);
    w.put<float>(f.throttle);
    w.put<float>(f.frame_rate);
    w.put<std::uint8_t>(f.zone);
    w.put_bytes(f.image.data(), f.image.size());
  }
  w.write_file(path);

  const auto sidecar = pose_sidecar(path);
  if (log.poses.empty()) {
    std::error_code ec;
    std::filesystem::remove(sidecar, ec);
    return;
  }
  ByteWriter p;
  p.put_bytes(kPoseMagic, 4);
  p.put<std::uint32_t>(static_cast<std::uint32_t>(log.poses.size()));
  for (const FramePose& q : log.poses) {
    p.put<double>(q.x);
    p.put<double>(q.y);
    p.put<double>(q.heading);
    p.put<double>(q.s);
  }
  p.write_file(sidecar);
}

LapLog read_lap(const std::filesystem::path& path) {
  ByteReader r = ByteReader::from_file(path);
  char magic[4];
  r.get_bytes(magic, 4, "magic");
  if (!std::equal(magic, magic + 4, kLapMagic)) r.fail("bad lap magic");
  const auto version = r.get<std::uint16_t>("version");
  if (version != kLapVersion) r.fail("unsupported lap version " + std::to_string(version));
  LapLog log;
  log.header.track_hash = r.get<std::uint64_t>("track hash");
  const auto direction = r.get<std::uint8_t>("direction");
  if (direction > 1) r.fail("bad direction byte " + std::to_string(direction));
  log.header.direction = static_cast<Direction>(direction);
  log.header.dt = r.get<float>("dt");
  log.header.height = r.get<std::uint16_t>("height");
  log.header.width = r.get<std::uint16_t>("width");
  if (log.header.height == 0 || log.header.width == 0) r.fail("zero image dimension in header");
  const auto count = r.get<std::uint32_t>("frame count");
  const std::size_t record = 4 + 8 + 4 * 3 + 1 + log.image_bytes();
  log.frames.reserve(std::min<std::size_t>(count, r.remaining() / record + 1));
  for (std::uint32_t i = 0; i < count; ++i) {
    if (r.remaining() < record)
      r.fail("truncated in frame " + std::to_string(i) + " of " + std::to_string(count));
    FrameRecord f;
    f.frame_index = r.get<std::uint32_t>("frame index");
    f.timestamp = r.get<double>("timestamp");
    f.steering = r.get<float>("steering");
    f.throttle = r.get<float>("throttle");
    f.frame_rate = r.get<float>("frame rate");
    f.zone = r.get<std::uint8_t>("zone");
    if (f.zone > 5) r.fail("frame " + std::to_string(i) + " has zone " + std::to_string(f.zone));
    if (i > 0 && f.frame_index <= log.frames.back().frame_index)
      r.fail("frame " + std::to_string(i) + " index does not increase");
    f.image.resize(log.image_bytes());
    r.get_bytes(f.image.data(), f.image.size(), "image");
    log.frames.push_back(std::move(f));
  }
  if (!r.at_end()) r.fail("trailing bytes after " + std::to_string(count) + " frames (record size mismatch)");

  const auto sidecar = pose_sidecar(path);
  if (std::filesystem::exists(sidecar)) {
    ByteReader p = ByteReader::from_file(sidecar);
    p.get_bytes(magic, 4, "magic");
    if (!std::equal(magic, magic + 4, kPoseMagic)) p.fail("bad pose magic");
    const auto n = p.get<std::uint32_t>("pose count");
    if (n != log.frames.size()) p.fail("pose count does not match the lap's frame count");
    log.poses.resize(n);
    for (FramePose& q : log.poses) {
      q.x = p.get<double>("x");
      q.y = p.get<double>("y");
      q.heading = p.get<double>("heading");
      q.s = p.get<double>("s");
    }
    if (!p.at_end()) p.fail("trailing bytes");
  }
  return log;
}

void export_lap_csv(const LapLog& log, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "frame_index,timestamp,steering,throttle,frame_rate,zone\n";
  for (const FrameRecord& f : log.frames)
    os << f.frame_index << ',' << format_double(f.timestamp) << ',' << format_double(f.steering) << ','
       << format_double(f.throttle) << ',' << format_double(f.frame_rate) << ',' << int(f.zone) << '\n';
  write_text(path, os.str());
}

std::vector<std::uint8_t> quantize_image(const Tensor<float>& image) {
  std::vector<std::uint8_t> out(image.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<std::uint8_t>(std::lround(std::clamp(image[i], 0.0f, 1.0f) * 255.0f));
  return out;
}

void dequantize_into(std::span<const std::uint8_t> image, float* out) {
  for (std::size_t i = 0; i < image.size(); ++i) out[i] = static_cast<float>(image[i]) / 255.0f;
}

Tensor<float> dequantize_image(std::span<const std::uint8_t> image, std::size_t height, std::size_t width) {
  if (image.size() != 6 * height * width) throw DimensionError("dequantize_image: byte count does not match dims");
  Tensor<float> t({6, height, width});
  dequantize_into(image, t.data().data());
  return t;
}

float normalize_pwm(double raw_us, const PwmCalibration& c) {
  if (!(c.min_us < c.mid_us && c.mid_us < c.max_us))
    throw ParameterError("normalize_pwm: calibration needs min < mid < max");
  double v;
  if (raw_us <= c.min_us)
    v = -100.0;
  else if (raw_us >= c.max_us)
    v = 100.0;
  else if (raw_us < c.mid_us)
    v = -100.0 * (c.mid_us - raw_us) / (c.mid_us - c.min_us);
  else
    v = 100.0 * (raw_us - c.mid_us) / (c.max_us - c.mid_us);
  return static_cast<float>(v);
}

Tensor<float> resize_image(const Tensor<float>& image, std::size_t factor) {
  if (image.rank() != 3) throw DimensionError("resize_image: expected [C,H,W]");
  if (factor == 0) throw ParameterError("resize_image: factor must be positive");
  const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
  if (H % factor != 0 || W % factor != 0)
    throw ParameterError("resize_image: " + shape_to_string(image.shape()) + " is not divisible by " +
                         std::to_string(factor));
  const std::size_t h = H / factor, w = W / factor;
  Tensor<float> out({C, h, w});
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        double acc = 0;
        for (std::size_t a = 0; a < factor; ++a)
          for (std::size_t b = 0; b < factor; ++b) acc += image[(c * H + i * factor + a) * W + j * factor + b];
        out[(c * h + i) * w + j] = static_cast<float>(acc * inv);
      }
  return out;
}

LapLog label_zones(const LapLog& log, const Track& track) {
  if (log.header.track_hash != track.hash)
    throw IncompatibleTrackError("label_zones: lap was recorded on a different track");
  if (log.poses.size() != log.frames.size()) throw DataError("label_zones: lap has no recorded poses");
  LapLog out = log;
  for (std::size_t i = 0; i < out.frames.size(); ++i)
    out.frames[i].zone = static_cast<std::uint8_t>(zone_of(track, out.poses[i].s));
  return out;
}

std::vector<ZoneSegment> extract_zone_frames(std::span<const LapLog> laps, int zone, std::size_t seq_len) {
  if (zone < 1 || zone > 5) throw ParameterError("extract_zone_frames: zone must be 1..5");
  std::vector<ZoneSegment> out;
  for (std::size_t l = 0; l < laps.size(); ++l) {
    const auto& frames = laps[l].frames;
    std::size_t i = 0;
    while (i < frames.size()) {
      if (frames[i].zone != zone) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j < frames.size() && frames[j].zone == zone) ++j;
      out.push_back({l, i, j, j - i < seq_len});
      i = j;
    }
  }
  return out;
}

std::vector<ZoneSegment> whole_lap_segments(std::span<const LapLog> laps, std::span<const std::size_t> lap_ids) {
  std::vector<ZoneSegment> out;
  for (std::size_t l : lap_ids)
    if (!laps[l].frames.empty()) out.push_back({l, 0, laps[l].frames.size(), false});
  return out;
}

TrainingSchedule default_schedule(const std::string& model) {
  if (model == "mcn") return {model, 20, 100};
  if (model == "srn1") return {model, 8, 200};
  if (model == "srn2") return {model, 20, 200};
  if (model == "srn3") return {model, 20, 200};
  if (model == "srn4") return {model, 8, 300};
  if (model == "srn5") return {model, 8, 200};
  if (model == "baseline") return {model, 20, 100};
  throw ParameterError("no schedule for model '" + model + "'");
}

DatasetSplit make_split(std::span<const LapLog> laps, std::size_t base_laps, std::size_t test_per_direction) {
  if (base_laps == 0 || base_laps % 2 != 0) throw ParameterError("make_split: base laps must be even and positive");
  const std::size_t per_dir = base_laps / 2;
  std::vector<std::size_t> by_dir[2];
  for (std::size_t i = 0; i < laps.size(); ++i) by_dir[static_cast<int>(laps[i].header.direction)].push_back(i);
  for (int d = 0; d < 2; ++d) {
    const std::size_t need = per_dir + test_per_direction;
    if (by_dir[d].size() < need)
      throw DataError("make_split: need " + std::to_string(need) + " " + to_string(static_cast<Direction>(d)) +
                      " laps (" + std::to_string(per_dir) + " train + " + std::to_string(test_per_direction) +
                      " test), have " + std::to_string(by_dir[d].size()) + "; short by " +
                      std::to_string(need - by_dir[d].size()));
  }
  DatasetSplit split;
  split.train_by_zone.resize(6);
  split.test_by_zone.resize(6);
  for (int d = 0; d < 2; ++d) {
    const auto& ids = by_dir[d];
    split.train_laps.insert(split.train_laps.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(per_dir));
    split.test_laps.insert(split.test_laps.end(), ids.end() - static_cast<std::ptrdiff_t>(test_per_direction),
                           ids.end());
  }
  std::sort(split.train_laps.begin(), split.train_laps.end());
  std::sort(split.test_laps.begin(), split.test_laps.end());
  auto collect = [&](const std::vector<std::size_t>& ids, std::vector<FrameRef>& all,
                     std::vector<std::vector<FrameRef>>& by_zone) {
    for (std::size_t l : ids)
      for (std::size_t f = 0; f < laps[l].frames.size(); ++f) {
        all.push_back({l, f});
        by_zone[laps[l].frames[f].zone].push_back({l, f});
      }
  };
  collect(split.train_laps, split.train, split.train_by_zone);
  collect(split.test_laps, split.test, split.test_by_zone);
  if (split.train.empty() || split.test.empty()) throw DataError("make_split: empty train or test set");
  return split;
}

}  // namespace hiersteer
