#include <gtest/gtest.h>

#include <cstring>
#include <fstream>

#include "gean/detector.hpp"
#include "gean/error.hpp"
#include "test_support.hpp"

namespace gean {
namespace {

using testing::TempDir;

std::string read_all(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_all(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << s;
}

Checkpoint sample_checkpoint() {
  ToyDetector::Architecture arch;
  arch.landmarks = 5;
  arch.width = 16;
  arch.height = 8;
  arch.enc1_channels = 3;
  arch.enc2_channels = 4;
  const ToyDetector det(arch, 42);
  Checkpoint c;
  c.architecture = arch;
  c.parameters.assign(det.parameters().begin(), det.parameters().end());
  c.config = {{"epochs", "3"}, {"variant", "GK"}, {"learning_rate", "0.002"}};
  c.epoch_losses = {0.125, 0.1 / 3.0, 1e-300};
  return c;
}

TEST(Checkpoint, RoundTripIsBitExact) {
  TempDir dir("ckpt");
  const Checkpoint c = sample_checkpoint();
  save_checkpoint(c, dir / "a.ckpt");
  const Checkpoint back = load_checkpoint(dir / "a.ckpt");
  EXPECT_EQ(back.architecture, c.architecture);
  EXPECT_EQ(back.parameters, c.parameters);
  EXPECT_EQ(back.config, c.config);
  EXPECT_EQ(back.epoch_losses, c.epoch_losses);
  save_checkpoint(back, dir / "b.ckpt");
  EXPECT_EQ(read_all(dir / "a.ckpt"), read_all(dir / "b.ckpt"));

  const HeatmapStack ha = c.detector().predict_heatmaps(testing::random_image(16, 8, 1));
  const HeatmapStack hb = back.detector().predict_heatmaps(testing::random_image(16, 8, 1));
  EXPECT_EQ(ha.values, hb.values);
}

TEST(Checkpoint, PayloadIsLittleEndianFloat32) {
  TempDir dir("ckpt");
  const Checkpoint c = sample_checkpoint();
  save_checkpoint(c, dir / "a.ckpt");
  const std::string bytes = read_all(dir / "a.ckpt");
  const std::size_t n = c.parameters.size();
  ASSERT_GE(bytes.size(), 4 * n);
  const std::string payload = bytes.substr(bytes.size() - 4 * n);
  for (std::size_t i = 0; i < n; i += 17) {
    std::uint32_t bits = 0;
    for (int b = 3; b >= 0; --b) bits = (bits << 8) | static_cast<unsigned char>(payload[4 * i + b]);
    float f;
    std::memcpy(&f, &bits, 4);
    EXPECT_EQ(double(f), c.parameters[i]);
  }
  EXPECT_EQ(bytes.rfind("GEAN-CHECKPOINT 1\n", 0), 0u);
  EXPECT_NE(bytes.find("payload float32-le " + std::to_string(n) + "\n"), std::string::npos);
  EXPECT_NE(bytes.find("tensor e1.weight 3x3x3x3\n"), std::string::npos);
}

class CheckpointErrors : public ::testing::Test {
 protected:
  void SetUp() override {
    save_checkpoint(sample_checkpoint(), dir / "good.ckpt");
    good = read_all(dir / "good.ckpt");
  }
  std::filesystem::path with(const std::string& from, const std::string& to) {
    std::string s = good;
    const auto at = s.find(from);
    EXPECT_NE(at, std::string::npos) << from;
    s.replace(at, from.size(), to);
    write_all(dir / "bad.ckpt", s);
    return dir / "bad.ckpt";
  }
  TempDir dir{"ckpt"};
  std::string good;
};

TEST_F(CheckpointErrors, MissingFile) { EXPECT_THROW(load_checkpoint(dir / "nope.ckpt"), IoError); }

TEST_F(CheckpointErrors, BadMagic) {
  EXPECT_THROW(load_checkpoint(with("GEAN-CHECKPOINT", "NOT-A-CHECKPOINT")), FormatError);
}

TEST_F(CheckpointErrors, FutureVersion) {
  EXPECT_THROW(load_checkpoint(with("GEAN-CHECKPOINT 1", "GEAN-CHECKPOINT 2")), UnsupportedFormatError);
}

TEST_F(CheckpointErrors, OtherEncoding) {
  EXPECT_THROW(load_checkpoint(with("float32-le", "float64-le")), UnsupportedFormatError);
}

TEST_F(CheckpointErrors, ManifestMismatch) {
  EXPECT_THROW(load_checkpoint(with("tensor e1.weight 3x3x3x3", "tensor e1.weight 3x3x5x5")), ShapeError);
  EXPECT_THROW(load_checkpoint(with("enc2=4", "enc2=5")), ShapeError);
}

TEST_F(CheckpointErrors, TruncatedPayload) {
  write_all(dir / "short.ckpt", good.substr(0, good.size() - 6));
  EXPECT_THROW(load_checkpoint(dir / "short.ckpt"), TruncatedDataError);
  write_all(dir / "head.ckpt", good.substr(0, good.find("tensor")));
  EXPECT_THROW(load_checkpoint(dir / "head.ckpt"), TruncatedDataError);
}

TEST_F(CheckpointErrors, UnknownHeaderLine) {
  EXPECT_THROW(load_checkpoint(with("loss 1 ", "lost 1 ")), FormatError);
}

TEST(Checkpoint, RejectsMultiLineConfigValues) {
  TempDir dir("ckpt");
  Checkpoint c = sample_checkpoint();
  c.config["note"] = "two\nlines";
  EXPECT_THROW(save_checkpoint(c, dir / "x.ckpt"), FormatError);
}

}  // namespace
}  // namespace gean
