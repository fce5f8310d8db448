#pragma once

// Lossless image files (binary netpbm) and small file helpers.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "sonogan/grid.hpp"

namespace sonogan::io {

// 16-bit binary PGM (P5, maxval 65535, big-endian samples).
void write_pgm16(const std::filesystem::path& path, const Grid<std::uint16_t>& img);
Grid<std::uint16_t> read_pgm16(const std::filesystem::path& path);

// [0, 1] image quantised to 16 bits; values are clamped.
void write_unit_image(const std::filesystem::path& path, const ImageF& img);
ImageF read_unit_image(const std::filesystem::path& path);

void write_mask(const std::filesystem::path& path, const Grid<std::uint8_t>& mask);
Grid<std::uint8_t> read_mask(const std::filesystem::path& path);

using Rgb = std::array<std::uint8_t, 3>;

// 8-bit binary PPM (P6).
void write_ppm(const std::filesystem::path& path, const Grid<Rgb>& img);

// Fixed perceptual colour ramp for values in [0, 1] (clamped).
Rgb colormap(double v);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

// FNV-1a 64-bit of a byte string, hex encoded.
std::string content_hash(const std::string& bytes);
std::string file_hash(const std::filesystem::path& path);

}  // namespace sonogan::io
