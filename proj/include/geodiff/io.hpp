#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "geodiff/grid.hpp"
#include "geodiff/metrics.hpp"
#include "geodiff/toy/network.hpp"

namespace geodiff {

enum class PfmKind { grayscale, color };

/// Portable float map. `data` is row-major from the top row down with
/// channels interleaved; the file itself stores rows bottom-up. The sign of
/// `scale` selects the payload byte order (negative = little-endian).
struct PfmImage {
  PfmKind kind = PfmKind::grayscale;
  int width = 0;
  int height = 0;
  double scale = -1.0;
  std::vector<float> data;

  int channels() const { return kind == PfmKind::color ? 3 : 1; }
};

std::string encode_pfm(const PfmImage& image);
PfmImage decode_pfm(std::string_view bytes);

PfmImage to_pfm(const Field2D& field);
PfmImage to_pfm(const FieldStack& stack);  // 1 or 3 channels
FieldStack from_pfm(const PfmImage& image);

/// 16-bit binary PGM (big-endian samples) with [lo, hi] mapped to [0, 65535].
std::string encode_pgm16(const Field2D& field, double lo, double hi);

/// One `key = value` line per metric and per config entry (prefixed
/// `config.`), sorted by key; values in shortest round-trip form.
std::string format_metrics(const MetricsReport& report);

/// Versioned flat binary: magic, format version, architecture fields,
/// parameterization tag, parameter count, then little-endian float32
/// parameters. Parameters are rounded to float32 on encode.
std::string encode_denoiser(const toy::ToyDenoiser& model);
toy::ToyDenoiser decode_denoiser(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

PfmImage read_pfm(const std::filesystem::path& path);
void write_pfm(const std::filesystem::path& path, const PfmImage& image);

}  // namespace geodiff
