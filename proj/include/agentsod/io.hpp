#pragma once

#include "agentsod/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace agentsod {

enum class ContainerErrorKind { missing_file, bad_magic, bad_version, dim_overflow, bad_container, io_failure };

const char* to_string(ContainerErrorKind kind);

class ContainerError : public std::runtime_error {
 public:
  ContainerError(ContainerErrorKind kind, const std::string& detail)
      : std::runtime_error(std::string(to_string(kind)) + ": " + detail), kind_(kind) {}
  ContainerErrorKind kind() const { return kind_; }

 private:
  ContainerErrorKind kind_;
};

// FTEN layout: "FTEN", u32 version (1), u32 ndim, u32 dims[ndim], then
// product(dims) little-endian float32 values in row-major order.
std::vector<std::uint8_t> encode_ften(const Tensor& t);
Tensor decode_ften(const std::vector<std::uint8_t>& bytes, const std::string& origin = "<memory>");
void write_ften(const std::filesystem::path& path, const Tensor& t);
Tensor read_ften(const std::filesystem::path& path);

/// Ordered `name=relative_path` entries.
using Manifest = std::vector<std::pair<std::string, std::string>>;
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8-bit grayscale image.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

/// Binary PGM (P5) with maxval 255. Comments in the header are skipped.
GrayImage read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const GrayImage& image);

/// [H x W] tensor with values v / 255.
Tensor image_to_tensor(const GrayImage& image);
/// [H x W] binary tensor, 1 where v >= 128.
Tensor mask_to_tensor(const GrayImage& image);
/// Pixel = round(255 * clamp(v, 0, 1)) for an [H x W] or [1 x H x W] tensor.
GrayImage tensor_to_image(const Tensor& t);

}  // namespace agentsod
