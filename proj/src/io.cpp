#include "agentsod/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

namespace agentsod {

namespace fs = std::filesystem;

const char* to_string(ContainerErrorKind kind) {
  switch (kind) {
    case ContainerErrorKind::missing_file: return "missing file";
    case ContainerErrorKind::bad_magic: return "bad magic";
    case ContainerErrorKind::bad_version: return "bad version";
    case ContainerErrorKind::dim_overflow: return "dim overflow";
    case ContainerErrorKind::bad_container: return "bad container";
    case ContainerErrorKind::io_failure: return "io failure";
  }
  return "unknown";
}

namespace {

constexpr std::uint32_t kFtenVersion = 1;
// Caps the element count so that a hostile header cannot request more than
// 4 GiB of payload.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 30;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[offset + i]) << (8 * i);
  return v;
}

std::vector<std::uint8_t> slurp(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw ContainerError(ContainerErrorKind::missing_file, path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContainerError(ContainerErrorKind::io_failure, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

std::vector<std::uint8_t> encode_ften(const Tensor& t) {
  std::vector<std::uint8_t> out;
  out.reserve(12 + 4 * t.shape().size() + 4 * t.size());
  out.insert(out.end(), {'F', 'T', 'E', 'N'});
  put_u32(out, kFtenVersion);
  put_u32(out, static_cast<std::uint32_t>(t.ndim()));
  for (int d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
  for (float v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor decode_ften(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  if (bytes.size() < 4 || !std::equal(bytes.begin(), bytes.begin() + 4, "FTEN")) {
    throw ContainerError(ContainerErrorKind::bad_magic, origin);
  }
  if (bytes.size() < 12) throw ContainerError(ContainerErrorKind::bad_container, origin + ": truncated header");
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kFtenVersion) {
    throw ContainerError(ContainerErrorKind::bad_version, origin + ": version " + std::to_string(version));
  }
  const std::uint32_t ndim = get_u32(bytes, 8);
  if (ndim == 0 || ndim > 8) {
    throw ContainerError(ContainerErrorKind::bad_container, origin + ": rank " + std::to_string(ndim));
  }
  const std::size_t header = 12 + 4 * static_cast<std::size_t>(ndim);
  if (bytes.size() < header) throw ContainerError(ContainerErrorKind::bad_container, origin + ": truncated dims");
  Shape shape;
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    const std::uint32_t d = get_u32(bytes, 12 + 4 * i);
    if (d == 0) throw ContainerError(ContainerErrorKind::bad_container, origin + ": zero extent");
    if (d > static_cast<std::uint32_t>(std::numeric_limits<int>::max()) || count > kMaxElements / d) {
      throw ContainerError(ContainerErrorKind::dim_overflow, origin);
    }
    count *= d;
    shape.push_back(static_cast<int>(d));
  }
  if (bytes.size() != header + 4 * count) {
    throw ContainerError(ContainerErrorKind::bad_container,
                         origin + ": payload is " + std::to_string(bytes.size() - header) + " bytes, expected " +
                             std::to_string(4 * count));
  }
  std::vector<float> data(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = std::bit_cast<float>(get_u32(bytes, header + 4 * i));
  return Tensor(std::move(shape), std::move(data));
}

void write_ften(const fs::path& path, const Tensor& t) {
  const auto bytes = encode_ften(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ContainerError(ContainerErrorKind::io_failure, "cannot write " + path.string());
}

Tensor read_ften(const fs::path& path) { return decode_ften(slurp(path), path.string()); }

void write_manifest(const fs::path& path, const Manifest& manifest) {
  std::ofstream out(path, std::ios::trunc);
  for (const auto& [name, rel] : manifest) out << name << '=' << rel << '\n';
  if (!out) throw ContainerError(ContainerErrorKind::io_failure, "cannot write " + path.string());
}

Manifest read_manifest(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw ContainerError(ContainerErrorKind::missing_file, path.string());
  std::ifstream in(path);
  Manifest manifest;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == line.size()) {
      throw ContainerError(ContainerErrorKind::bad_container,
                           path.string() + ":" + std::to_string(line_no) + ": expected name=path");
    }
    manifest.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  return manifest;
}

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string pgm_token(std::istream& in) {
  std::string token;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      if (!token.empty()) break;
      continue;
    }
    if (std::isspace(ch)) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(static_cast<char>(ch));
  }
  return token;
}

int pgm_int(std::istream& in, const fs::path& path) {
  const std::string token = pgm_token(in);
  if (token.empty() || !std::all_of(token.begin(), token.end(), [](char c) { return std::isdigit(c); }) ||
      token.size() > 6) {
    throw ImageError(path.string() + ": malformed PGM header");
  }
  return std::stoi(token);
}

}  // namespace

GrayImage read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError("cannot open " + path.string());
  if (pgm_token(in) != "P5") throw ImageError(path.string() + ": not a binary PGM (P5)");
  GrayImage img;
  img.width = pgm_int(in, path);
  img.height = pgm_int(in, path);
  const int maxval = pgm_int(in, path);
  if (img.width < 1 || img.height < 1) throw ImageError(path.string() + ": empty image");
  if (maxval != 255) throw ImageError(path.string() + ": maxval must be 255, got " + std::to_string(maxval));
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw ImageError(path.string() + ": truncated pixel data");
  }
  return img;
}

void write_pgm(const fs::path& path, const GrayImage& image) {
  if (image.pixels.size() != static_cast<std::size_t>(image.width) * image.height) {
    throw ImageError("write_pgm: pixel buffer does not match extents");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw ImageError("cannot write " + path.string());
}

Tensor image_to_tensor(const GrayImage& image) {
  Tensor t({image.height, image.width});
  for (std::size_t i = 0; i < image.pixels.size(); ++i) t[i] = static_cast<float>(image.pixels[i]) / 255.0f;
  return t;
}

Tensor mask_to_tensor(const GrayImage& image) {
  Tensor t({image.height, image.width});
  for (std::size_t i = 0; i < image.pixels.size(); ++i) t[i] = image.pixels[i] >= 128 ? 1.0f : 0.0f;
  return t;
}

GrayImage tensor_to_image(const Tensor& t) {
  GrayImage img;
  if (t.ndim() == 2) {
    img.height = t.dim(0);
    img.width = t.dim(1);
  } else if (t.ndim() == 3 && t.dim(0) == 1) {
    img.height = t.dim(1);
    img.width = t.dim(2);
  } else {
    throw ShapeError("tensor_to_image: expected H x W or 1 x H x W, got " + to_string(t.shape()));
  }
  img.pixels.resize(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const float v = std::clamp(t[i], 0.0f, 1.0f);
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0f * v));
  }
  return img;
}

}  // namespace agentsod
