#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <variant>

#include <json.hpp>

#include "cwm/data.hpp"
#include "cwm/gmm.hpp"
#include "cwm/model.hpp"
#include "cwm/training.hpp"

namespace cwm {

inline constexpr int kModelFormatVersion = 1;

struct ModelFile {
  std::variant<CwmModel, Gmm> model;
  /// Free-form record of how the model was produced, kept verbatim.
  nlohmann::ordered_json provenance = nlohmann::ordered_json::object();

  bool is_cwm() const { return std::holds_alternative<CwmModel>(model); }
  std::size_t dim() const;
  std::size_t num_components() const;
};

/// Versioned JSON text. Doubles use the shortest representation that parses
/// back to the same value, so a load/save cycle reproduces the file exactly.
std::string model_to_text(const ModelFile& f);
/// Throws ParseError on malformed text, VersionError on an unknown
/// format_version and ShapeError when array lengths disagree with dim/k.
ModelFile model_from_text(const std::string& text);
void save_model(const std::filesystem::path& path, const ModelFile& f);
ModelFile load_model(const std::filesystem::path& path);

/// Config fingerprint, seed and data source of a training run.
nlohmann::ordered_json training_provenance(const TrainConfig& config, const Provenance& data, std::size_t K);

/// A CWM with a constant classifier reproducing the GMM's density.
CwmModel as_cwm(const ModelFile& f);

/// out[i] = log density at row i.
using LogDensityFn = std::function<void(const Matrix& points, std::span<double> out)>;
LogDensityFn log_density_of(const ModelFile& f);

struct GridBounds {
  double x_lo = 0.0, x_hi = 1.0;
  double y_lo = 0.0, y_hi = 1.0;
};

/// Density at cell centres; row 0 is the top (largest y), as in an image.
struct DensityGrid {
  std::size_t resolution = 0;
  GridBounds bounds;
  std::vector<double> density;  // resolution x resolution, row-major
  /// Trapezoid rule over the cell-centre nodes.
  double mass = 0.0;
};

DensityGrid evaluate_density_grid(const LogDensityFn& log_density, std::size_t resolution, const GridBounds& bounds);

/// Writes <path>.csv with the raw densities and <path>.pgm scaled linearly to
/// 0..255 (the extension of path is replaced).
DensityGrid export_density_grid(const LogDensityFn& log_density, std::size_t resolution, const GridBounds& bounds,
                                const std::filesystem::path& path);
/// Same for a model file; the model must be two-dimensional.
DensityGrid export_density_grid(const ModelFile& f, std::size_t resolution, const GridBounds& bounds,
                                const std::filesystem::path& path);

/// Header x0,...,x{d-1},split with split in {train, val}.
void write_dataset_csv(const std::filesystem::path& path, const DensityDataset& data);
/// Reads x0..x{d-1} columns. The split column is optional (missing means
/// train); other columns are ignored.
DensityDataset read_dataset_csv(const std::filesystem::path& path);

/// Header z0..,r,x0.. with one row per draw.
void write_samples_csv(const std::filesystem::path& path, const std::vector<SampleTrace>& samples);

}  // namespace cwm
