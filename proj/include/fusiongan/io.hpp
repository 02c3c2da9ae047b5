#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fusiongan/tensor.hpp"

namespace fgan {

// Binary PNM image (P5 grey or P6 RGB). Samples are stored widened to 16 bits;
// maxval > 255 means two big-endian bytes per sample on disk.
struct PnmImage {
  int width = 0;
  int height = 0;
  int channels = 1;  // 1 -> P5, 3 -> P6
  int maxval = 255;
  std::vector<std::uint16_t> samples;  // row-major, interleaved channels
};

void write_pnm(const std::filesystem::path& path, const PnmImage& image);
PnmImage read_pnm(const std::filesystem::path& path);

// Raw tensor fixture: "FTEN", u32 version = 1, u32 ndims = 4, four u32 dims,
// then little-endian float32 payload in NCHW order.
inline constexpr std::uint32_t kFtenVersion = 1;
void write_ften(std::ostream& os, const Tensor& t);
Tensor read_ften(std::istream& is);
void write_ften(const std::filesystem::path& path, const Tensor& t);
Tensor read_ften(const std::filesystem::path& path);

// Little-endian primitives shared by the binary formats.
namespace le {
void put_u32(std::ostream& os, std::uint32_t v);
void put_u64(std::ostream& os, std::uint64_t v);
void put_f32(std::ostream& os, float v);
void put_string(std::ostream& os, const std::string& s);
std::uint32_t get_u32(std::istream& is);
std::uint64_t get_u64(std::istream& is);
float get_f32(std::istream& is);
std::string get_string(std::istream& is);
void put_f32_array(std::ostream& os, std::span<const float> values);
void get_f32_array(std::istream& is, std::span<float> values);
}  // namespace le

}  // namespace fgan
