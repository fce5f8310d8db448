#include "sonogan/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sonogan::io {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  return in;
}

// Next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in) {
  std::string tok;
  char ch = 0;
  while (in.get(ch)) {
    if (ch == '#') {
      std::string discard;
      std::getline(in, discard);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(ch);
  }
  return tok;
}

}  // namespace

void write_pgm16(const fs::path& path, const Grid<std::uint16_t>& img) {
  std::ofstream out = open_out(path);
  out << "P5\n" << img.cols() << " " << img.rows() << "\n65535\n";
  std::string buf(img.size() * 2, '\0');
  for (std::size_t k = 0; k < img.size(); ++k) {
    const std::uint16_t v = img.data()[k];
    buf[2 * k] = static_cast<char>(v >> 8);
    buf[2 * k + 1] = static_cast<char>(v & 0xff);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Grid<std::uint16_t> read_pgm16(const fs::path& path) {
  std::ifstream in = open_in(path);
  if (header_token(in) != "P5") throw std::runtime_error("not a binary PGM: " + path.string());
  const std::size_t cols = std::stoul(header_token(in));
  const std::size_t rows = std::stoul(header_token(in));
  const unsigned long maxval = std::stoul(header_token(in));
  Grid<std::uint16_t> img(rows, cols);
  if (maxval < 256) {
    std::string buf(img.size(), '\0');
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!in) throw std::runtime_error("truncated PGM: " + path.string());
    for (std::size_t k = 0; k < img.size(); ++k) {
      img.data()[k] = static_cast<unsigned char>(buf[k]);
    }
    return img;
  }
  std::string buf(img.size() * 2, '\0');
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!in) throw std::runtime_error("truncated PGM: " + path.string());
  for (std::size_t k = 0; k < img.size(); ++k) {
    img.data()[k] = static_cast<std::uint16_t>((static_cast<unsigned char>(buf[2 * k]) << 8) |
                                               static_cast<unsigned char>(buf[2 * k + 1]));
  }
  return img;
}

void write_unit_image(const fs::path& path, const ImageF& img) {
  Grid<std::uint16_t> q(img.rows(), img.cols());
  for (std::size_t k = 0; k < img.size(); ++k) {
    const double v = std::clamp(static_cast<double>(img.data()[k]), 0.0, 1.0);
    q.data()[k] = static_cast<std::uint16_t>(std::lround(v * 65535.0));
  }
  write_pgm16(path, q);
}

ImageF read_unit_image(const fs::path& path) {
  const Grid<std::uint16_t> q = read_pgm16(path);
  ImageF img(q.rows(), q.cols());
  for (std::size_t k = 0; k < q.size(); ++k) {
    img.data()[k] = static_cast<float>(q.data()[k] / 65535.0);
  }
  return img;
}

void write_mask(const fs::path& path, const Grid<std::uint8_t>& mask) {
  Grid<std::uint16_t> q(mask.rows(), mask.cols());
  for (std::size_t k = 0; k < mask.size(); ++k) q.data()[k] = mask.data()[k] ? 1 : 0;
  write_pgm16(path, q);
}

Grid<std::uint8_t> read_mask(const fs::path& path) {
  const Grid<std::uint16_t> q = read_pgm16(path);
  Grid<std::uint8_t> m(q.rows(), q.cols());
  for (std::size_t k = 0; k < q.size(); ++k) m.data()[k] = q.data()[k] ? 1 : 0;
  return m;
}

void write_ppm(const fs::path& path, const Grid<Rgb>& img) {
  std::ofstream out = open_out(path);
  out << "P6\n" << img.cols() << " " << img.rows() << "\n255\n";
  for (const Rgb& px : img.values()) {
    out.write(reinterpret_cast<const char*>(px.data()), 3);
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Rgb colormap(double v) {
  // piecewise-linear dark blue -> teal -> yellow ramp
  static constexpr std::array<std::array<double, 3>, 5> stops{{
      {0.267, 0.005, 0.329},
      {0.230, 0.322, 0.546},
      {0.128, 0.567, 0.551},
      {0.369, 0.789, 0.383},
      {0.993, 0.906, 0.144},
  }};
  const double t = std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 1.0) * (stops.size() - 1);
  const auto i = std::min(static_cast<std::size_t>(t), stops.size() - 2);
  const double f = t - static_cast<double>(i);
  Rgb out{};
  for (std::size_t c = 0; c < 3; ++c) {
    const double x = (1.0 - f) * stops[i][c] + f * stops[i + 1][c];
    out[c] = static_cast<std::uint8_t>(std::lround(255.0 * x));
  }
  return out;
}

std::string read_text(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out = open_out(path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string content_hash(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char ch : bytes) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_hash(const fs::path& path) { return content_hash(read_text(path)); }

}  // namespace sonogan::io
