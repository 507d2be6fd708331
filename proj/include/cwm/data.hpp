#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cwm/core_math.hpp"

namespace cwm {

/// Axis-aligned box guaranteed to contain every generated point.
struct SupportBox {
  Vec lo;
  Vec hi;
  bool contains(std::span<const double> x) const;
};

/// Enough to regenerate a dataset bit-for-bit.
struct Provenance {
  std::string source;  // "synthetic:<kind>", "image:<path>" or "csv:<path>"
  std::uint64_t seed = 0;
  std::size_t n = 0;
  std::map<std::string, double> params;
  std::optional<SupportBox> support;
};

/// Point set with a train/validation partition. A fresh dataset has every
/// index in train and an empty validation set.
struct DensityDataset {
  Matrix points;
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::uint64_t split_seed = 0;
  Provenance provenance;

  std::size_t size() const { return points.rows; }
  std::size_t dim() const { return points.cols; }
  Matrix train_points() const;
  Matrix validation_points() const;
};

/// Grey-scale image read as an unnormalized density over [0,1]^2. Pixel (row,
/// col) with row 0 at the top covers x in [col/W, (col+1)/W) and y in
/// [1 - (row+1)/H, 1 - row/H).
struct ImageDensity {
  std::size_t width = 0;
  std::size_t height = 0;
  std::uint32_t maxval = 0;
  std::vector<double> intensities;  // row-major, height x width
  double mass = 0.0;

  double at(std::size_t row, std::size_t col) const { return intensities[row * width + col]; }
};

/// Parses a P2 (ASCII) or P5 (binary, 8- or 16-bit) graymap.
ImageDensity parse_pgm(std::string_view bytes);
ImageDensity load_image_density(const std::filesystem::path& path);
/// Writes a binary P5 graymap. values are row-major and must not exceed maxval.
void write_pgm(const std::filesystem::path& path, std::size_t width, std::size_t height,
               std::span<const std::uint16_t> values, std::uint16_t maxval = 255);

/// Pixel cell drawn proportionally to intensity, then a uniform point inside it.
DensityDataset sample_from_image(const ImageDensity& img, std::size_t n, RngHandle& rng);

enum class SyntheticKind { checkerboard, two_moons, rings, gmm_ground_truth };

SyntheticKind parse_synthetic_kind(std::string_view name);
std::string_view synthetic_kind_name(SyntheticKind kind);

/// Synthetic 2D datasets in the [0,1]^2 frame.
///   checkerboard:     cells (4)
///   two-moons:        noise (0.03)
///   rings:            rings (2), noise (0.01)
///   gmm-ground-truth: k (3), sd_min (0.03), sd_max (0.1); the drawn means and
///                     standard deviations are recorded as mu_<k>_<j>, sd_<k>_<j>
/// Gaussian noise is truncated at 10 standard deviations so the declared
/// support box is exact.
DensityDataset make_synthetic(SyntheticKind kind, std::size_t n, const std::map<std::string, double>& params,
                              RngHandle& rng);

/// Rebuilds a synthetic or image dataset from its provenance record.
DensityDataset regenerate(const Provenance& prov);

/// Shuffled partition with round(n * validation_fraction) validation points.
DensityDataset split(DensityDataset data, double validation_fraction, std::uint64_t seed);

}  // namespace cwm
