#include "cwm/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cwm/errors.hpp"

namespace cwm {

using ojson = nlohmann::ordered_json;

std::size_t ModelFile::dim() const {
  return std::visit([](const auto& m) { return m.dim(); }, model);
}

std::size_t ModelFile::num_components() const {
  return std::visit([](const auto& m) { return m.num_components(); }, model);
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContractError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw ContractError("write failed for '" + path.string() + "'");
}

ojson components_json(const std::vector<DiagGaussianComponent>& comps) {
  ojson arr = ojson::array();
  for (const auto& c : comps) arr.push_back({{"mu", c.mu()}, {"log_var", c.log_var()}});
  return arr;
}

const ojson& field(const ojson& obj, const char* key) {
  if (!obj.is_object()) throw ParseError("model file: expected an object holding '" + std::string(key) + "'");
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError("model file: missing field '" + std::string(key) + "'");
  return *it;
}

std::size_t size_field(const ojson& obj, const char* key) {
  const ojson& v = field(obj, key);
  if (!v.is_number_unsigned()) throw ParseError("model file: '" + std::string(key) + "' must be a non-negative integer");
  return v.get<std::size_t>();
}

Vec vec_field(const ojson& obj, const char* key, std::size_t expected) {
  const ojson& v = field(obj, key);
  if (!v.is_array()) throw ParseError("model file: '" + std::string(key) + "' must be an array");
  Vec out;
  out.reserve(v.size());
  for (const auto& e : v) {
    if (!e.is_number()) throw ParseError("model file: '" + std::string(key) + "' holds a non-number");
    out.push_back(e.get<double>());
  }
  if (out.size() != expected) {
    throw ShapeError("model file: '" + std::string(key) + "' has " + std::to_string(out.size()) +
                     " entries, expected " + std::to_string(expected));
  }
  return out;
}

std::vector<DiagGaussianComponent> read_components(const ojson& doc, std::size_t dim, std::size_t k) {
  const ojson& arr = field(doc, "components");
  if (!arr.is_array()) throw ParseError("model file: 'components' must be an array");
  if (arr.size() != k) throw ShapeError("model file: expected " + std::to_string(k) + " components");
  std::vector<DiagGaussianComponent> comps;
  for (const auto& c : arr) comps.emplace_back(vec_field(c, "mu", dim), vec_field(c, "log_var", dim));
  return comps;
}

MlpClassifier read_classifier(const ojson& doc, std::size_t dim, std::size_t k) {
  const ojson& clf = field(doc, "classifier");
  if (field(clf, "activation") != "tanh") throw ParseError("model file: unsupported activation");
  const ojson& sizes_json = field(clf, "layer_sizes");
  if (!sizes_json.is_array()) throw ParseError("model file: 'layer_sizes' must be an array");
  std::vector<std::size_t> sizes;
  for (const auto& s : sizes_json) {
    if (!s.is_number_unsigned() || s.get<std::size_t>() == 0) throw ParseError("model file: bad layer size");
    sizes.push_back(s.get<std::size_t>());
  }
  if (sizes.size() < 2 || sizes.front() != dim || sizes.back() != k) {
    throw ShapeError("model file: classifier layer sizes do not match dim and k");
  }
  MlpClassifier out(sizes);
  const ojson& layers = field(clf, "layers");
  if (!layers.is_array()) throw ParseError("model file: 'layers' must be an array");
  if (layers.size() != sizes.size() - 1) throw ShapeError("model file: wrong number of classifier layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& layer = out.layers()[l];
    layer.weights = vec_field(layers[l], "weights", layer.in * layer.out);
    layer.bias = vec_field(layers[l], "bias", layer.out);
    require_finite(layer.weights, "classifier weight");
    require_finite(layer.bias, "classifier bias");
  }
  return out;
}

}  // namespace

std::string model_to_text(const ModelFile& f) {
  ojson doc;
  doc["format"] = "cwm-model";
  doc["format_version"] = kModelFormatVersion;
  if (const auto* m = std::get_if<CwmModel>(&f.model)) {
    doc["kind"] = "cwm";
    doc["dim"] = m->dim();
    doc["k"] = m->num_components();
    doc["components"] = components_json(m->components());
    ojson layers = ojson::array();
    for (const auto& layer : m->classifier().layers()) {
      layers.push_back({{"weights", layer.weights}, {"bias", layer.bias}});
    }
    doc["classifier"] = {{"activation", "tanh"}, {"layer_sizes", m->classifier().layer_sizes()}, {"layers", layers}};
  } else {
    const auto& g = std::get<Gmm>(f.model);
    doc["kind"] = "gmm";
    doc["dim"] = g.dim();
    doc["k"] = g.num_components();
    doc["weights"] = g.pis();
    doc["components"] = components_json(g.components());
  }
  doc["provenance"] = f.provenance;
  return doc.dump(2) + "\n";
}

ModelFile model_from_text(const std::string& text) {
  ojson doc;
  try {
    doc = ojson::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("model file: ") + e.what());
  }
  if (!doc.is_object() || field(doc, "format") != "cwm-model") throw ParseError("model file: not a cwm-model document");
  const ojson& version = field(doc, "format_version");
  if (!version.is_number_integer()) throw ParseError("model file: 'format_version' must be an integer");
  if (version.get<long long>() != kModelFormatVersion) {
    throw VersionError("model file: unsupported format_version " + version.dump());
  }
  const std::size_t dim = size_field(doc, "dim");
  const std::size_t k = size_field(doc, "k");
  if (dim == 0 || k == 0) throw ShapeError("model file: dim and k must be positive");
  const ojson& kind = field(doc, "kind");

  ModelFile f;
  try {
    if (kind == "cwm") {
      f.model = CwmModel(read_components(doc, dim, k), read_classifier(doc, dim, k));
    } else if (kind == "gmm") {
      Vec pis = vec_field(doc, "weights", k);
      f.model = Gmm(std::move(pis), read_components(doc, dim, k));
    } else {
      throw ParseError("model file: unknown kind " + kind.dump());
    }
  } catch (const ContractError& e) {
    throw ParseError(std::string("model file: invalid parameters: ") + e.what());
  }
  if (auto it = doc.find("provenance"); it != doc.end()) f.provenance = *it;
  return f;
}

void save_model(const std::filesystem::path& path, const ModelFile& f) { write_file(path, model_to_text(f)); }

ModelFile load_model(const std::filesystem::path& path) { return model_from_text(read_file(path)); }

nlohmann::ordered_json training_provenance(const TrainConfig& config, const Provenance& data, std::size_t K) {
  ojson cfg;
  cfg["k"] = K;
  cfg["learning_rate"] = config.learning_rate;
  cfg["batch_size"] = config.batch_size;
  cfg["epochs"] = config.epochs;
  cfg["adam_beta1"] = config.adam_beta1;
  cfg["adam_beta2"] = config.adam_beta2;
  cfg["adam_eps"] = config.adam_eps;
  cfg["pretrain"] = config.pretrain;
  cfg["em_max_iters"] = config.em_max_iters;
  cfg["em_tol"] = config.em_tol;
  cfg["hidden"] = config.hidden;
  // FNV-1a over the canonical dump.
  std::uint64_t hash = 1469598103934665603ull;
  for (unsigned char c : cfg.dump()) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(hash));

  ojson out;
  out["seed"] = config.seed;
  out["config"] = cfg;
  out["config_hash"] = hex;
  out["data"] = {{"source", data.source}, {"seed", data.seed}, {"n", data.n}};
  return out;
}

CwmModel as_cwm(const ModelFile& f) {
  if (const auto* m = std::get_if<CwmModel>(&f.model)) return *m;
  const auto& g = std::get<Gmm>(f.model);
  RngHandle rng(0);
  return init_cwm_from_gmm(g, std::vector<std::size_t>{}, rng);
}

LogDensityFn log_density_of(const ModelFile& f) {
  if (const auto* m = std::get_if<CwmModel>(&f.model)) {
    return [m](const Matrix& pts, std::span<double> out) {
      CwmEvaluator ev;
      ev.log_prob(*m, pts, out);
    };
  }
  const auto* g = &std::get<Gmm>(f.model);
  return [g](const Matrix& pts, std::span<double> out) { gmm_log_prob(*g, pts, out); };
}

DensityGrid evaluate_density_grid(const LogDensityFn& log_density, std::size_t resolution, const GridBounds& bounds) {
  if (resolution < 2) throw ContractError("density grid: resolution must be at least 2");
  if (!(bounds.x_hi > bounds.x_lo) || !(bounds.y_hi > bounds.y_lo)) throw ContractError("density grid: empty bounds");
  const double hx = (bounds.x_hi - bounds.x_lo) / static_cast<double>(resolution);
  const double hy = (bounds.y_hi - bounds.y_lo) / static_cast<double>(resolution);
  Matrix pts(resolution * resolution, 2);
  for (std::size_t r = 0; r < resolution; ++r) {
    for (std::size_t c = 0; c < resolution; ++c) {
      pts(r * resolution + c, 0) = bounds.x_lo + (static_cast<double>(c) + 0.5) * hx;
      pts(r * resolution + c, 1) = bounds.y_hi - (static_cast<double>(r) + 0.5) * hy;
    }
  }
  DensityGrid grid{resolution, bounds, std::vector<double>(resolution * resolution), 0.0};
  log_density(pts, grid.density);
  double mass = 0.0;
  for (std::size_t r = 0; r < resolution; ++r) {
    const double wr = (r == 0 || r + 1 == resolution) ? 0.5 : 1.0;
    for (std::size_t c = 0; c < resolution; ++c) {
      const double wc = (c == 0 || c + 1 == resolution) ? 0.5 : 1.0;
      double& v = grid.density[r * resolution + c];
      v = std::exp(v);
      mass += wr * wc * v;
    }
  }
  grid.mass = mass * hx * hy;
  return grid;
}

DensityGrid export_density_grid(const ModelFile& f, std::size_t resolution, const GridBounds& bounds,
                                const std::filesystem::path& path) {
  if (f.dim() != 2) throw ContractError("density grid: model must be two-dimensional");
  return export_density_grid(log_density_of(f), resolution, bounds, path);
}

DensityGrid export_density_grid(const LogDensityFn& log_density, std::size_t resolution, const GridBounds& bounds,
                                const std::filesystem::path& path) {
  DensityGrid grid = evaluate_density_grid(log_density, resolution, bounds);

  std::string csv;
  char buf[32];
  for (std::size_t r = 0; r < resolution; ++r) {
    for (std::size_t c = 0; c < resolution; ++c) {
      std::snprintf(buf, sizeof buf, c == 0 ? "%.17g" : ",%.17g", grid.density[r * resolution + c]);
      csv += buf;
    }
    csv += '\n';
  }
  auto csv_path = path;
  write_file(csv_path.replace_extension(".csv"), csv);

  double peak = 0.0;
  for (double v : grid.density) peak = std::max(peak, v);
  std::vector<std::uint16_t> pixels(grid.density.size(), 0);
  if (peak > 0.0) {
    for (std::size_t i = 0; i < pixels.size(); ++i) {
      pixels[i] = static_cast<std::uint16_t>(std::lround(255.0 * grid.density[i] / peak));
    }
  }
  auto pgm_path = path;
  write_pgm(pgm_path.replace_extension(".pgm"), resolution, resolution, pixels, 255);
  return grid;
}

void write_dataset_csv(const std::filesystem::path& path, const DensityDataset& data) {
  std::vector<char> is_val(data.size(), 0);
  for (std::size_t i : data.validation) is_val.at(i) = 1;
  std::string out;
  for (std::size_t j = 0; j < data.dim(); ++j) out += "x" + std::to_string(j) + ",";
  out += "split\n";
  char buf[32];
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < data.dim(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g,", data.points(i, j));
      out += buf;
    }
    out += is_val[i] ? "val\n" : "train\n";
  }
  write_file(path, out);
}

namespace {

std::vector<std::string_view> split_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  for (auto& f : out) {
    while (!f.empty() && (f.back() == '\r' || f.back() == ' ')) f.remove_suffix(1);
    while (!f.empty() && f.front() == ' ') f.remove_prefix(1);
  }
  return out;
}

}  // namespace

DensityDataset read_dataset_csv(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("csv '" + path.string() + "': empty file");
  const auto header = split_line(line);

  std::vector<std::size_t> x_cols;
  std::optional<std::size_t> split_col;
  for (std::size_t d = 0;; ++d) {
    const std::string name = "x" + std::to_string(d);
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) break;
    x_cols.push_back(static_cast<std::size_t>(it - header.begin()));
  }
  if (x_cols.empty()) throw ParseError("csv '" + path.string() + "': no x0 column");
  if (auto it = std::find(header.begin(), header.end(), "split"); it != header.end()) {
    split_col = static_cast<std::size_t>(it - header.begin());
  }

  std::vector<double> values;
  DensityDataset data;
  std::size_t row = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_line(line);
    if (fields.size() != header.size()) {
      throw ParseError("csv '" + path.string() + "' line " + std::to_string(line_no) + ": wrong field count");
    }
    for (std::size_t c : x_cols) {
      double v = 0.0;
      const auto f = fields[c];
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size() || !std::isfinite(v)) {
        throw ParseError("csv '" + path.string() + "' line " + std::to_string(line_no) + ": bad number '" +
                         std::string(f) + "'");
      }
      values.push_back(v);
    }
    const std::string_view s = split_col ? fields[*split_col] : std::string_view("train");
    if (s == "val") {
      data.validation.push_back(row);
    } else if (s == "train") {
      data.train.push_back(row);
    } else {
      throw ParseError("csv '" + path.string() + "' line " + std::to_string(line_no) + ": split must be train or val");
    }
    ++row;
  }
  if (row == 0) throw ParseError("csv '" + path.string() + "': no data rows");
  data.points.rows = row;
  data.points.cols = x_cols.size();
  data.points.data = std::move(values);
  data.provenance.source = "csv:" + path.string();
  data.provenance.n = row;
  return data;
}

void write_samples_csv(const std::filesystem::path& path, const std::vector<SampleTrace>& samples) {
  const std::size_t d = samples.empty() ? 0 : samples.front().x.size();
  std::string out;
  for (std::size_t j = 0; j < d; ++j) out += "z" + std::to_string(j) + ",";
  out += "r";
  for (std::size_t j = 0; j < d; ++j) out += ",x" + std::to_string(j);
  out += '\n';
  char buf[32];
  for (const auto& s : samples) {
    for (double v : s.z) {
      std::snprintf(buf, sizeof buf, "%.17g,", v);
      out += buf;
    }
    out += std::to_string(s.r);
    for (double v : s.x) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      out += buf;
    }
    out += '\n';
  }
  write_file(path, out);
}

}  // namespace cwm
