#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "vlcount/core/tensor.hpp"

namespace vlcount {

inline void write_file_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open file: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return bytes;
}

namespace detail {

inline void put_u32(std::string& out, uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

inline uint32_t get_u32(const std::string& in, size_t& pos) {
  if (pos + 4 > in.size()) throw std::runtime_error("truncated binary file");
  uint32_t v;
  std::memcpy(&v, in.data() + pos, 4);
  pos += 4;
  return v;
}

inline void put_u64(std::string& out, uint64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  out.append(b, 8);
}

inline uint64_t get_u64(const std::string& in, size_t& pos) {
  if (pos + 8 > in.size()) throw std::runtime_error("truncated binary file");
  uint64_t v;
  std::memcpy(&v, in.data() + pos, 8);
  pos += 8;
  return v;
}

inline void put_f64(std::string& out, double v) {
  char b[8];
  std::memcpy(b, &v, 8);
  out.append(b, 8);
}

inline double get_f64(const std::string& in, size_t& pos) {
  if (pos + 8 > in.size()) throw std::runtime_error("truncated binary file");
  double v;
  std::memcpy(&v, in.data() + pos, 8);
  pos += 8;
  return v;
}

inline void put_string(std::string& out, const std::string& s) {
  put_u64(out, s.size());
  out.append(s);
}

inline std::string get_string(const std::string& in, size_t& pos) {
  uint64_t n = get_u64(in, pos);
  if (pos + n > in.size()) throw std::runtime_error("truncated binary file");
  std::string s = in.substr(pos, n);
  pos += n;
  return s;
}

inline void put_tensor(std::string& out, const Tensor& t) {
  put_u32(out, static_cast<uint32_t>(t.ndim()));
  for (int d : t.shape()) put_u32(out, static_cast<uint32_t>(d));
  const char* bytes = reinterpret_cast<const char*>(t.data());
  out.append(bytes, static_cast<size_t>(t.size()) * sizeof(double));
}

inline Tensor get_tensor(const std::string& in, size_t& pos) {
  uint32_t nd = get_u32(in, pos);
  std::vector<int> shape(nd);
  for (uint32_t i = 0; i < nd; ++i) shape[i] = static_cast<int>(get_u32(in, pos));
  Tensor t(shape);
  size_t nbytes = static_cast<size_t>(t.size()) * sizeof(double);
  if (pos + nbytes > in.size()) throw std::runtime_error("truncated tensor payload");
  std::memcpy(t.data(), in.data() + pos, nbytes);
  pos += nbytes;
  return t;
}

}  // namespace detail

/// Raw tensor container. Layout: "TEN1", u32 ndim, u32 dims..., f64 data
/// (little-endian, row-major).
inline void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::string out = "TEN1";
  detail::put_tensor(out, t);
  write_file_bytes(path, out);
}

inline Tensor load_tensor(const std::filesystem::path& path) {
  std::string in = read_file_bytes(path);
  if (in.size() < 4 || in.compare(0, 4, "TEN1") != 0) {
    throw std::runtime_error("not a TEN1 file: " + path.string());
  }
  size_t pos = 4;
  return detail::get_tensor(in, pos);
}

/// Density target cache. Layout: "DEN1", u32 H, u32 W, u32 dtype
/// (0 = float64), data row-major little-endian.
inline void save_density(const std::filesystem::path& path, const Tensor& density) {
  if (density.ndim() != 2) throw std::invalid_argument("save_density: need 2-D tensor");
  std::string out = "DEN1";
  detail::put_u32(out, static_cast<uint32_t>(density.dim(0)));
  detail::put_u32(out, static_cast<uint32_t>(density.dim(1)));
  detail::put_u32(out, 0u);
  out.append(reinterpret_cast<const char*>(density.data()),
             static_cast<size_t>(density.size()) * sizeof(double));
  write_file_bytes(path, out);
}

inline Tensor load_density(const std::filesystem::path& path) {
  std::string in = read_file_bytes(path);
  if (in.size() < 4 || in.compare(0, 4, "DEN1") != 0) {
    throw std::runtime_error("not a DEN1 file: " + path.string());
  }
  size_t pos = 4;
  int h = static_cast<int>(detail::get_u32(in, pos));
  int w = static_cast<int>(detail::get_u32(in, pos));
  uint32_t dtype = detail::get_u32(in, pos);
  if (dtype != 0) throw std::runtime_error("unsupported density dtype in " + path.string());
  Tensor t({h, w});
  size_t nbytes = static_cast<size_t>(t.size()) * sizeof(double);
  if (in.size() - pos < nbytes) throw std::runtime_error("truncated density file: " + path.string());
  std::memcpy(t.data(), in.data() + pos, nbytes);
  return t;
}

/// Binary PPM (P6, 8-bit). Images are {3,H,W} in [0,1]; quantization to a
/// byte grid is part of the determinism contract for generated datasets.
inline void save_ppm(const std::filesystem::path& path, const Tensor& image) {
  if (image.ndim() != 3 || image.dim(0) != 3) {
    throw std::invalid_argument("save_ppm: need {3,H,W} tensor");
  }
  const int h = image.dim(1), w = image.dim(2);
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  out.reserve(out.size() + static_cast<size_t>(3) * h * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        double v = std::clamp(image.at(c, y, x), 0.0, 1.0);
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
      }
    }
  }
  write_file_bytes(path, out);
}

inline Tensor load_ppm(const std::filesystem::path& path) {
  std::string in = read_file_bytes(path);
  std::istringstream header(in.substr(0, 64));
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  header >> magic >> w >> h >> maxval;
  if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255) {
    throw std::runtime_error("unsupported PPM file: " + path.string());
  }
  size_t pos = static_cast<size_t>(header.tellg()) + 1;  // single whitespace after maxval
  size_t need = static_cast<size_t>(3) * w * h;
  if (in.size() - pos < need) throw std::runtime_error("truncated PPM file: " + path.string());
  Tensor image({3, h, w});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        unsigned char b = static_cast<unsigned char>(in[pos++]);
        image.at(c, y, x) = static_cast<double>(b) / 255.0;
      }
    }
  }
  return image;
}

/// Loads an image by extension: .ppm (8-bit) or .ten (raw float64).
inline Tensor load_image(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  if (ext == ".ppm") return load_ppm(path);
  if (ext == ".ten") return load_tensor(path);
  throw std::runtime_error("unsupported image format '" + ext + "': " + path.string());
}

}  // namespace vlcount
