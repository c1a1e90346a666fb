#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "hiersteer/binio.hpp"
#include "hiersteer/datalog.hpp"
#include "hiersteer/recording.hpp"

using namespace hiersteer;

namespace {

std::filesystem::path temp_dir() {
  auto d = std::filesystem::temp_directory_path() / "hiersteer_test_datalog";
  std::filesystem::create_directories(d);
  return d;
}

LapLog synthetic_lap(std::size_t frames, std::uint64_t seed, std::uint16_t h = 5, std::uint16_t w = 7) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> byte(0, 255);
  std::uniform_real_distribution<float> steer(-100, 100);
  LapLog log;
  log.header = {0xdeadbeefcafef00dULL, Direction::kCw, 0.05f, h, w};
  for (std::size_t i = 0; i < frames; ++i) {
    FrameRecord f;
    f.frame_index = static_cast<std::uint32_t>(i * 2 + 1);
    f.timestamp = 0.05 * static_cast<double>(i) + 1e-13;
    f.steering = steer(rng);
    f.throttle = 0.7f;
    f.frame_rate = 20.0f;
    f.zone = static_cast<std::uint8_t>(1 + i % 5);
    f.image.resize(log.image_bytes());
    for (auto& b : f.image) b = static_cast<std::uint8_t>(byte(rng));
    log.frames.push_back(std::move(f));
    log.poses.push_back({0.1 * static_cast<double>(i), -0.3, 1.0 / 3.0, 0.123456789 * static_cast<double>(i)});
  }
  return log;
}

std::vector<unsigned char> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const std::filesystem::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::string format_error_of(const std::filesystem::path& p) {
  try {
    read_lap(p);
  } catch (const FormatError& e) {
    return e.what();
  }
  return "";
}

LapLog zoned_lap(std::initializer_list<int> zones, Direction d = Direction::kCcw) {
  LapLog log;
  log.header = {1, d, 0.05f, 1, 1};
  std::uint32_t i = 0;
  for (int z : zones) {
    FrameRecord f;
    f.frame_index = i++;
    f.zone = static_cast<std::uint8_t>(z);
    f.image.assign(6, 0);
    log.frames.push_back(f);
  }
  return log;
}

}  // namespace

TEST_CASE("lap round trip is bit exact") {
  const auto path = temp_dir() / "lap.hml";
  const LapLog log = synthetic_lap(100, 1);
  write_lap(log, path);
  const LapLog back = read_lap(path);
  CHECK(back == log);
  // Rewriting the read log reproduces the identical bytes.
  const auto bytes = slurp(path);
  write_lap(back, temp_dir() / "lap2.hml");
  CHECK(slurp(temp_dir() / "lap2.hml") == bytes);
  // Header layout: magic, version, hash, direction, dt, H, W, count.
  CHECK(bytes.size() == 4 + 2 + 8 + 1 + 4 + 2 + 2 + 4 + 100 * (4 + 8 + 12 + 1 + log.image_bytes()));
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "HMTL");

  LapLog no_pose = log;
  no_pose.poses.clear();
  write_lap(no_pose, path);
  CHECK_FALSE(std::filesystem::exists(pose_sidecar(path)));
  CHECK(read_lap(path) == no_pose);
}

TEST_CASE("corrupted lap files raise format errors") {
  const auto dir = temp_dir();
  const LapLog log = synthetic_lap(10, 2);
  write_lap(log, dir / "good.hml");
  const auto bytes = slurp(dir / "good.hml");
  const std::size_t header = 27, record = 4 + 8 + 12 + 1 + log.image_bytes();

  auto bad = bytes;
  bad[0] = 'X';
  dump(dir / "magic.hml", bad);
  CHECK(format_error_of(dir / "magic.hml").find("magic") != std::string::npos);

  bad = bytes;
  bad[4] = 9;
  dump(dir / "version.hml", bad);
  CHECK(format_error_of(dir / "version.hml").find("version") != std::string::npos);

  // Cut in the middle of frame 3.
  bad.assign(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(header + 3 * record + record / 2));
  dump(dir / "trunc.hml", bad);
  const std::string msg = format_error_of(dir / "trunc.hml");
  CHECK(msg.find("frame 3") != std::string::npos);
  CHECK(msg.find("byte offset") != std::string::npos);

  bad.assign(bytes.begin(), bytes.begin() + 10);
  dump(dir / "short.hml", bad);
  CHECK(format_error_of(dir / "short.hml").find("truncated") != std::string::npos);

  // Header promising larger images than the records carry.
  bad = bytes;
  bad[header - 6] = static_cast<unsigned char>(bad[header - 6] + 1);
  dump(dir / "dims.hml", bad);
  CHECK_FALSE(format_error_of(dir / "dims.hml").empty());

  // Writing a record whose image disagrees with the header.
  LapLog mismatched = log;
  mismatched.frames[4].image.pop_back();
  CHECK_THROWS_AS(write_lap(mismatched, dir / "never.hml"), FormatError);
  LapLog unordered = log;
  unordered.frames[2].frame_index = unordered.frames[1].frame_index;
  CHECK_THROWS_AS(write_lap(unordered, dir / "never.hml"), FormatError);

  CHECK_THROWS_AS(read_lap(dir / "missing.hml"), IoError);
}

TEST_CASE("normalize_pwm") {
  CHECK(normalize_pwm(1500) == 0.0f);
  CHECK(normalize_pwm(1000) == -100.0f);
  CHECK(normalize_pwm(2000) == 100.0f);
  CHECK(normalize_pwm(800) == -100.0f);
  CHECK(normalize_pwm(2300) == 100.0f);
  CHECK(normalize_pwm(1750) == doctest::Approx(50.0f));
  const PwmCalibration skewed{1100, 1400, 2000};
  CHECK(normalize_pwm(1250, skewed) == doctest::Approx(-50.0f));
  CHECK(normalize_pwm(1700, skewed) == doctest::Approx(50.0f));
  float prev = -101;
  for (double us = 900; us <= 2100; us += 7) {
    const float v = normalize_pwm(us, skewed);
    CHECK(v >= prev);
    prev = v;
  }
  CHECK_THROWS_AS(normalize_pwm(1500, {2000, 1500, 1000}), ParameterError);
  CHECK_THROWS_AS(normalize_pwm(1500, {1000, 1000, 2000}), ParameterError);
}

TEST_CASE("resize_image block average") {
  CHECK(672 / 168 == 4);
  CHECK(376 / 94 == 4);
  Tensor<float> constant({6, 376, 672}, 0.25f);
  const Tensor<float> small = resize_image(constant);
  CHECK(small.shape() == Shape{6, 94, 168});
  for (float v : small.data()) REQUIRE(v == 0.25f);

  // Checkerboards: 4x4 tiles resolve to their source value, 1x1 averages to 0.5.
  Tensor<float> coarse({6, 376, 672}), fine({6, 376, 672});
  for (std::size_t c = 0; c < 6; ++c)
    for (std::size_t i = 0; i < 376; ++i)
      for (std::size_t j = 0; j < 672; ++j) {
        coarse[(c * 376 + i) * 672 + j] = static_cast<float>(((i / 4) + (j / 4)) % 2);
        fine[(c * 376 + i) * 672 + j] = static_cast<float>((i + j) % 2);
      }
  const Tensor<float> rc = resize_image(coarse), rf = resize_image(fine);
  for (std::size_t i = 0; i < 94; ++i)
    for (std::size_t j = 0; j < 168; ++j) {
      REQUIRE(rc[(2 * 94 + i) * 168 + j] == static_cast<float>((i + j) % 2));
      REQUIRE(rf[(2 * 94 + i) * 168 + j] == 0.5f);
    }

  // Mean preservation on random data.
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(0, 1);
  Tensor<float> noise({6, 16, 24});
  for (float& v : noise.data()) v = u(rng);
  const Tensor<float> rn = resize_image(noise);
  for (std::size_t c = 0; c < 6; ++c) {
    double a = 0, b = 0;
    for (std::size_t k = 0; k < 16 * 24; ++k) a += noise[c * 16 * 24 + k];
    for (std::size_t k = 0; k < 4 * 6; ++k) b += rn[c * 4 * 6 + k];
    CHECK(a / (16 * 24) == doctest::Approx(b / (4 * 6)).epsilon(1e-6));
  }
  CHECK_THROWS_AS(resize_image(Tensor<float>({6, 10, 12})), ParameterError);
}

TEST_CASE("quantization") {
  Tensor<float> img({6, 1, 2}, std::vector<float>{0, 1, 0.5f, -0.2f, 1.3f, 0.1f, 0, 0, 0, 0, 0, 0});
  const auto q = quantize_image(img);
  CHECK(q[0] == 0);
  CHECK(q[1] == 255);
  CHECK(q[2] == 128);
  CHECK(q[3] == 0);
  CHECK(q[4] == 255);
  CHECK(q[5] == 26);
  const Tensor<float> back = dequantize_image(q, 1, 2);
  CHECK(back[1] == 1.0f);
  CHECK(std::abs(back[5] - 0.1f) <= 0.5f / 255);
}

TEST_CASE("zone labeling from recorded poses") {
  const Track track = build_track({});
  LapLog lap = run_recording_lap(track, rig_for_scale(0.25), Direction::kCcw);
  for (auto& f : lap.frames) f.zone = 0;
  const LapLog labeled = label_zones(lap, track);
  int hist[6] = {};
  for (std::size_t i = 0; i < labeled.frames.size(); ++i) {
    CHECK(labeled.frames[i].zone == zone_of(track, labeled.poses[i].s));
    ++hist[labeled.frames[i].zone];
  }
  CHECK(hist[0] == 0);
  for (int z = 1; z <= 5; ++z) CHECK(hist[z] > 0);
  CHECK(labeled.frames.front().zone == 1);
  CHECK(label_zones(labeled, track) == labeled);

  LapLog foreign = lap;
  foreign.header.track_hash ^= 1;
  CHECK_THROWS_AS(label_zones(foreign, track), IncompatibleTrackError);
  LapLog poseless = lap;
  poseless.poses.clear();
  CHECK_THROWS_AS(label_zones(poseless, track), DataError);
}

TEST_CASE("zone extraction") {
  const std::vector<LapLog> laps = {zoned_lap({1, 1, 2, 2, 1}), zoned_lap({3, 1, 1, 1})};
  const auto z1 = extract_zone_frames(laps, 1, 2);
  REQUIRE(z1.size() == 3);
  CHECK(z1[0].lap == 0);
  CHECK(z1[0].size() == 2);
  CHECK_FALSE(z1[0].short_run);
  CHECK(z1[1].size() == 1);
  CHECK(z1[1].short_run);
  CHECK(z1[2].lap == 1);
  CHECK(z1[2].begin == 1);
  CHECK(z1[2].size() == 3);

  // Partition: every frame appears in exactly one segment of its own zone.
  std::size_t total = 0;
  for (int z = 1; z <= 5; ++z)
    for (const ZoneSegment& s : extract_zone_frames(laps, z)) {
      total += s.size();
      for (std::size_t i = s.begin; i < s.end; ++i) CHECK(laps[s.lap].frames[i].zone == z);
    }
  CHECK(total == 9);
  CHECK_THROWS_AS(extract_zone_frames(laps, 6), ParameterError);
}

TEST_CASE("dataset split schedules") {
  CHECK(default_schedule("mcn").base_laps == 20);
  CHECK(default_schedule("mcn").epochs == 100);
  CHECK(default_schedule("srn4").base_laps == 8);
  CHECK(default_schedule("srn4").epochs == 300);
  for (const char* m : {"srn1", "srn5"}) CHECK(default_schedule(m).base_laps == 8);
  for (const char* m : {"srn2", "srn3"}) CHECK(default_schedule(m).base_laps == 20);
  CHECK_THROWS_AS(default_schedule("srn9"), ParameterError);

  std::vector<LapLog> laps;
  for (int i = 0; i < 14; ++i) laps.push_back(zoned_lap({1, 2, 3, 4, 5}, Direction::kCw));
  for (int i = 0; i < 14; ++i) laps.push_back(zoned_lap({1, 2, 3, 4, 5, 5}, Direction::kCcw));
  const DatasetSplit full = make_split(laps, 20, 4);
  CHECK(full.train_laps.size() == 20);
  CHECK(full.test_laps.size() == 8);
  std::size_t cw = 0;
  for (std::size_t l : full.train_laps) cw += laps[l].header.direction == Direction::kCw;
  CHECK(cw == 10);
  for (std::size_t l : full.train_laps)
    CHECK(std::find(full.test_laps.begin(), full.test_laps.end(), l) == full.test_laps.end());
  CHECK(full.train_by_zone[5].size() == 10 + 20);

  const DatasetSplit reduced = make_split(laps, 8, 4);
  CHECK(reduced.train_laps.size() == 8);
  CHECK(reduced.test_laps == full.test_laps);

  std::vector<LapLog> few(laps.begin(), laps.begin() + 20);  // 14 cw + 6 ccw
  try {
    make_split(few, 20, 4);
    FAIL("expected a data error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("short by 8") != std::string::npos);
  }
}

TEST_CASE("lap csv export") {
  const LapLog log = synthetic_lap(12, 5);
  const auto p = temp_dir() / "lap.csv";
  export_lap_csv(log, p);
  std::ifstream in(p);
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 13);
}
