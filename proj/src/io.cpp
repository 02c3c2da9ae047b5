#include "fusiongan/io.hpp"

#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <sstream>

namespace fgan {

namespace le {

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  put_u32(os, static_cast<std::uint32_t>(v & 0xFFFFFFFFu));
  put_u32(os, static_cast<std::uint32_t>(v >> 32));
}

void put_f32(std::ostream& os, float v) { put_u32(os, std::bit_cast<std::uint32_t>(v)); }

void put_string(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("unexpected end of binary stream");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t get_u64(std::istream& is) {
  const std::uint64_t lo = get_u32(is);
  const std::uint64_t hi = get_u32(is);
  return lo | (hi << 32);
}

float get_f32(std::istream& is) { return std::bit_cast<float>(get_u32(is)); }

std::string get_string(std::istream& is) {
  const std::uint32_t n = get_u32(is);
  if (n > (1u << 28)) throw IoError("string record too long");
  std::string s(n, '\0');
  if (n && !is.read(s.data(), n)) throw IoError("unexpected end of binary stream");
  return s;
}

void put_f32_array(std::ostream& os, std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(values.data()),
             static_cast<std::streamsize>(values.size() * sizeof(float)));
  } else {
    for (float v : values) put_f32(os, v);
  }
}

void get_f32_array(std::istream& is, std::span<float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    if (!is.read(reinterpret_cast<char*>(values.data()),
                 static_cast<std::streamsize>(values.size() * sizeof(float)))) {
      throw IoError("unexpected end of float payload");
    }
  } else {
    for (float& v : values) v = get_f32(is);
  }
}

}  // namespace le

void write_pnm(const std::filesystem::path& path, const PnmImage& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw IoError("PNM supports 1 or 3 channels, got " + std::to_string(image.channels));
  }
  const std::size_t expected =
      static_cast<std::size_t>(image.width) * image.height * image.channels;
  if (image.samples.size() != expected) throw IoError("PNM sample count mismatch for " + path.string());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << (image.channels == 3 ? "P6" : "P5") << "\n"
     << image.width << " " << image.height << "\n"
     << image.maxval << "\n";
  std::string payload;
  const bool wide = image.maxval > 255;
  payload.reserve(expected * (wide ? 2 : 1));
  for (std::uint16_t s : image.samples) {
    if (wide) payload.push_back(static_cast<char>(s >> 8));
    payload.push_back(static_cast<char>(s & 0xFF));
  }
  os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!os) throw IoError("failed writing " + path.string());
}

namespace {
int read_header_int(std::istream& is, const std::filesystem::path& path) {
  int c = is.peek();
  while (c == '#' || std::isspace(c)) {
    if (c == '#') {
      std::string skip;
      std::getline(is, skip);
    } else {
      is.get();
    }
    c = is.peek();
  }
  int v = 0;
  if (!(is >> v)) throw IoError("malformed PNM header in " + path.string());
  return v;
}
}  // namespace

PnmImage read_pnm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::string magic(2, '\0');
  is.read(magic.data(), 2);
  PnmImage img;
  if (magic == "P5") {
    img.channels = 1;
  } else if (magic == "P6") {
    img.channels = 3;
  } else {
    throw IoError("unsupported PNM magic in " + path.string());
  }
  img.width = read_header_int(is, path);
  img.height = read_header_int(is, path);
  img.maxval = read_header_int(is, path);
  is.get();  // single whitespace before the raster
  if (img.width <= 0 || img.height <= 0 || img.maxval <= 0 || img.maxval > 65535) {
    throw IoError("invalid PNM dimensions in " + path.string());
  }
  const std::size_t count = static_cast<std::size_t>(img.width) * img.height * img.channels;
  const bool wide = img.maxval > 255;
  std::string raw(count * (wide ? 2 : 1), '\0');
  if (!is.read(raw.data(), static_cast<std::streamsize>(raw.size()))) {
    throw IoError("truncated PNM raster in " + path.string());
  }
  img.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (wide) {
      img.samples[i] = static_cast<std::uint16_t>(
          (static_cast<unsigned char>(raw[2 * i]) << 8) | static_cast<unsigned char>(raw[2 * i + 1]));
    } else {
      img.samples[i] = static_cast<unsigned char>(raw[i]);
    }
  }
  return img;
}

void write_ften(std::ostream& os, const Tensor& t) {
  os.write("FTEN", 4);
  le::put_u32(os, kFtenVersion);
  le::put_u32(os, 4);
  const Shape& s = t.shape();
  for (int d : {s.n, s.c, s.h, s.w}) le::put_u32(os, static_cast<std::uint32_t>(d));
  le::put_f32_array(os, t.data());
}

Tensor read_ften(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "FTEN", 4) != 0) {
    throw IoError("not an FTEN tensor file (bad magic)");
  }
  const std::uint32_t version = le::get_u32(is);
  if (version != kFtenVersion) {
    throw IoError("FTEN version " + std::to_string(version) + " is not supported (expected " +
                  std::to_string(kFtenVersion) + ")");
  }
  if (le::get_u32(is) != 4) throw IoError("FTEN tensors must have 4 dims");
  Shape s;
  s.n = static_cast<int>(le::get_u32(is));
  s.c = static_cast<int>(le::get_u32(is));
  s.h = static_cast<int>(le::get_u32(is));
  s.w = static_cast<int>(le::get_u32(is));
  Tensor t = Tensor::zeros(s);
  le::get_f32_array(is, t.mutable_data());
  return t;
}

void write_ften(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_ften(os, t);
  if (!os) throw IoError("failed writing " + path.string());
}

Tensor read_ften(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return read_ften(is);
}

}  // namespace fgan
