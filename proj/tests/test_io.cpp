#include "agentsod/io.hpp"
#include "agentsod/rng.hpp"

#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

using namespace agentsod;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "agentsod_test_io";
  fs::create_directories(dir);
  return dir / name;
}

ContainerErrorKind decode_error(const std::vector<std::uint8_t>& bytes) {
  try {
    (void)decode_ften(bytes);
  } catch (const ContainerError& e) {
    return e.kind();
  }
  FAIL("decode succeeded unexpectedly");
  return ContainerErrorKind::io_failure;
}

void put_u32(std::vector<std::uint8_t>& b, std::size_t at, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

}  // namespace

TEST_CASE("FTEN layout is magic, version, rank, dims, little-endian floats") {
  const Tensor t({2, 1}, {1.0f, -2.5f});
  const std::vector<std::uint8_t> b = encode_ften(t);
  REQUIRE(b.size() == 4 + 4 + 4 + 8 + 8);
  CHECK(std::memcmp(b.data(), "FTEN", 4) == 0);
  CHECK(b[4] == 1);
  CHECK(b[8] == 2);
  CHECK(b[12] == 2);
  CHECK(b[16] == 1);
  // 1.0f = 0x3F800000 little-endian.
  CHECK(b[20] == 0x00);
  CHECK(b[23] == 0x3F);
}

TEST_CASE("FTEN round trip is bit exact") {
  SplitMix64 rng(1);
  const Tensor t = random_tensor({3, 4, 5}, rng, 1e3f);
  CHECK(bit_equal(decode_ften(encode_ften(t)), t));
  const fs::path p = scratch("round.ften");
  write_ften(p, t);
  CHECK(bit_equal(read_ften(p), t));
}

TEST_CASE("FTEN errors are distinct") {
  const std::vector<std::uint8_t> good = encode_ften(Tensor({2, 3}, 1.0f));

  std::vector<std::uint8_t> magic = good;
  magic[0] = 'X';
  CHECK(decode_error(magic) == ContainerErrorKind::bad_magic);

  std::vector<std::uint8_t> version = good;
  put_u32(version, 4, 2);
  CHECK(decode_error(version) == ContainerErrorKind::bad_version);

  std::vector<std::uint8_t> overflow = good;
  put_u32(overflow, 12, 0xFFFFFFFFu);
  CHECK(decode_error(overflow) == ContainerErrorKind::dim_overflow);

  std::vector<std::uint8_t> truncated(good.begin(), good.end() - 3);
  CHECK(decode_error(truncated) == ContainerErrorKind::bad_container);

  std::vector<std::uint8_t> trailing = good;
  trailing.push_back(0);
  CHECK(decode_error(trailing) == ContainerErrorKind::bad_container);

  try {
    (void)read_ften(scratch("does_not_exist.ften"));
    FAIL("expected missing file");
  } catch (const ContainerError& e) {
    CHECK(e.kind() == ContainerErrorKind::missing_file);
  }
}

TEST_CASE("manifest round trip preserves order") {
  const Manifest m{{"b.weight", "b.weight.ften"}, {"a.bias", "a.bias.ften"}};
  const fs::path p = scratch("manifest.txt");
  write_manifest(p, m);
  CHECK(read_manifest(p) == m);
  std::ifstream in(p, std::ios::binary);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(text == "b.weight=b.weight.ften\na.bias=a.bias.ften\n");
}

TEST_CASE("PGM round trip, comments and validation") {
  GrayImage img;
  img.width = 3;
  img.height = 2;
  img.pixels = {0, 127, 128, 255, 1, 200};
  const fs::path p = scratch("img.pgm");
  write_pgm(p, img);
  const GrayImage back = read_pgm(p);
  CHECK(back.width == 3);
  CHECK(back.height == 2);
  CHECK(back.pixels == img.pixels);

  const fs::path c = scratch("comment.pgm");
  {
    std::ofstream out(c, std::ios::binary);
    out << "P5\n# a comment\n2 1\n255\n";
    out.put(static_cast<char>(10));
    out.put(static_cast<char>(20));
  }
  CHECK(read_pgm(c).pixels == std::vector<std::uint8_t>{10, 20});

  const fs::path bad = scratch("bad.pgm");
  {
    std::ofstream out(bad, std::ios::binary);
    out << "P5\n2 2\n65535\n";
  }
  CHECK_THROWS_AS(read_pgm(bad), ImageError);
  {
    std::ofstream out(bad, std::ios::binary);
    out << "P5\n4 4\n255\nab";
  }
  CHECK_THROWS_AS(read_pgm(bad), ImageError);
  CHECK_THROWS_AS(read_pgm(scratch("missing.pgm")), ImageError);
}

TEST_CASE("pixel conversions") {
  GrayImage img;
  img.width = 4;
  img.height = 1;
  img.pixels = {0, 127, 128, 255};
  const Tensor v = image_to_tensor(img);
  CHECK(v.shape() == Shape{1, 4});
  CHECK(v[3] == 1.0f);
  const Tensor m = mask_to_tensor(img);
  CHECK(m[1] == 0.0f);
  CHECK(m[2] == 1.0f);
  const GrayImage back = tensor_to_image(v);
  CHECK(back.pixels == img.pixels);
  const GrayImage rounded = tensor_to_image(Tensor({1, 1, 3}, {0.5f, 1.5f, -0.2f}));
  CHECK(rounded.pixels == std::vector<std::uint8_t>{128, 255, 0});
}
