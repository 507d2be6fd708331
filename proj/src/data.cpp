#include "cwm/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "cwm/errors.hpp"

namespace cwm {

bool SupportBox::contains(std::span<const double> x) const {
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (x[j] < lo[j] || x[j] > hi[j]) return false;
  }
  return true;
}

namespace {

Matrix gather(const Matrix& points, const std::vector<std::size_t>& idx) {
  Matrix out(idx.size(), points.cols);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto r = points.row(idx[i]);
    std::copy(r.begin(), r.end(), out.row(i).begin());
  }
  return out;
}

DensityDataset make_dataset(Matrix points, Provenance prov) {
  DensityDataset ds;
  ds.train.resize(points.rows);
  std::iota(ds.train.begin(), ds.train.end(), 0);
  ds.points = std::move(points);
  ds.provenance = std::move(prov);
  return ds;
}

// Minimal tokenizer for the whitespace/comment-separated PGM header.
class PgmReader {
 public:
  explicit PgmReader(std::string_view bytes) : s_(bytes) {}

  std::size_t pos() const { return pos_; }

  void skip_space_and_comments() {
    while (pos_ < s_.size()) {
      const char c = s_[pos_];
      if (c == '#') {
        while (pos_ < s_.size() && s_[pos_] != '\n' && s_[pos_] != '\r') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::uint64_t number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (start == pos_) throw ParseError(std::string("pgm: expected ") + what);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s_.data() + start, s_.data() + pos_, v);
    if (ec != std::errc()) throw ParseError(std::string("pgm: bad ") + what);
    return v;
  }

  /// Exactly one whitespace byte separates the header from a binary raster.
  void single_whitespace() {
    if (pos_ >= s_.size() || !std::isspace(static_cast<unsigned char>(s_[pos_]))) {
      throw ParseError("pgm: missing whitespace before raster");
    }
    ++pos_;
  }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace

Matrix DensityDataset::train_points() const { return gather(points, train); }
Matrix DensityDataset::validation_points() const { return gather(points, validation); }

ImageDensity parse_pgm(std::string_view bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P') throw ParseError("pgm: missing magic number");
  const char kind = bytes[1];
  if (kind != '2' && kind != '5') throw FormatError(std::string("pgm: unsupported magic P") + kind);
  PgmReader rd(bytes.substr(2));
  ImageDensity img;
  img.width = rd.number("width");
  img.height = rd.number("height");
  const std::uint64_t maxval = rd.number("maxval");
  if (img.width == 0 || img.height == 0) throw ParseError("pgm: zero image size");
  if (maxval == 0 || maxval > 65535) throw ParseError("pgm: maxval must be in [1, 65535]");
  img.maxval = static_cast<std::uint32_t>(maxval);

  const std::size_t count = img.width * img.height;
  img.intensities.resize(count);
  if (kind == '2') {
    for (std::size_t i = 0; i < count; ++i) {
      const std::uint64_t v = rd.number("pixel value");
      if (v > maxval) throw ParseError("pgm: pixel value exceeds maxval");
      img.intensities[i] = static_cast<double>(v);
    }
  } else {
    rd.single_whitespace();
    const std::size_t offset = 2 + rd.pos();
    const std::size_t bpp = maxval < 256 ? 1 : 2;
    if (bytes.size() < offset + count * bpp) throw ParseError("pgm: truncated raster");
    const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data() + offset);
    for (std::size_t i = 0; i < count; ++i) {
      const std::uint32_t v = bpp == 1 ? raw[i] : (std::uint32_t(raw[2 * i]) << 8) | raw[2 * i + 1];
      if (v > maxval) throw ParseError("pgm: pixel value exceeds maxval");
      img.intensities[i] = static_cast<double>(v);
    }
  }
  img.mass = std::accumulate(img.intensities.begin(), img.intensities.end(), 0.0);
  if (!(img.mass > 0.0)) throw FormatError("pgm: image has zero total intensity");
  return img;
}

ImageDensity load_image_density(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open image " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_pgm(ss.str());
}

void write_pgm(const std::filesystem::path& path, std::size_t width, std::size_t height,
               std::span<const std::uint16_t> values, std::uint16_t maxval) {
  if (values.size() != width * height) throw ContractError("write_pgm: value count differs from width * height");
  if (maxval == 0) throw ContractError("write_pgm: maxval must be positive");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "P5\n" << width << ' ' << height << '\n' << maxval << '\n';
  for (std::uint16_t v : values) {
    if (v > maxval) throw ContractError("write_pgm: value exceeds maxval");
    if (maxval < 256) {
      out.put(static_cast<char>(v));
    } else {
      out.put(static_cast<char>(v >> 8));
      out.put(static_cast<char>(v & 0xFF));
    }
  }
}

DensityDataset sample_from_image(const ImageDensity& img, std::size_t n, RngHandle& rng) {
  if (n == 0) throw ContractError("sample_from_image: n must be at least 1");
  const CategoricalTable cells(img.intensities);
  Matrix pts(n, 2);
  const auto w = static_cast<double>(img.width);
  const auto h = static_cast<double>(img.height);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cell = cells.draw(rng);
    const auto row = static_cast<double>(cell / img.width);
    const auto col = static_cast<double>(cell % img.width);
    const double u = rng.uniform();
    const double v = rng.uniform();
    pts(i, 0) = (col + u) / w;
    pts(i, 1) = 1.0 - (row + v) / h;
  }
  Provenance prov;
  prov.source = "image";
  prov.seed = rng.seed();
  prov.n = n;
  prov.params = {{"width", w}, {"height", h}};
  prov.support = SupportBox{{0.0, 0.0}, {1.0, 1.0}};
  return make_dataset(std::move(pts), std::move(prov));
}

SyntheticKind parse_synthetic_kind(std::string_view name) {
  if (name == "checkerboard") return SyntheticKind::checkerboard;
  if (name == "two-moons") return SyntheticKind::two_moons;
  if (name == "rings") return SyntheticKind::rings;
  if (name == "gmm-ground-truth") return SyntheticKind::gmm_ground_truth;
  throw ContractError("unknown synthetic kind '" + std::string(name) + "'");
}

std::string_view synthetic_kind_name(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::checkerboard: return "checkerboard";
    case SyntheticKind::two_moons: return "two-moons";
    case SyntheticKind::rings: return "rings";
    case SyntheticKind::gmm_ground_truth: return "gmm-ground-truth";
  }
  return "unknown";
}

namespace {

double param(const std::map<std::string, double>& p, const std::string& key, double fallback) {
  const auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

double truncated_noise(RngHandle& rng, double sd) {
  if (sd == 0.0) return 0.0;
  for (;;) {
    const double e = rng.normal();
    if (std::abs(e) <= 10.0) return sd * e;
  }
}

}  // namespace

DensityDataset make_synthetic(SyntheticKind kind, std::size_t n, const std::map<std::string, double>& params,
                              RngHandle& rng) {
  if (n == 0) throw ContractError("make_synthetic: n must be at least 1");
  Provenance prov;
  prov.source = "synthetic:" + std::string(synthetic_kind_name(kind));
  prov.seed = rng.seed();
  prov.n = n;
  Matrix pts(n, 2);
  constexpr double pi = std::numbers::pi;

  switch (kind) {
    case SyntheticKind::checkerboard: {
      const double cells_d = param(params, "cells", 4.0);
      if (!(cells_d >= 1.0) || cells_d != std::floor(cells_d)) throw ContractError("checkerboard: cells must be a positive integer");
      const auto cells = static_cast<std::size_t>(cells_d);
      std::vector<std::size_t> dark;  // squares with (row + col) even
      for (std::size_t r = 0; r < cells; ++r) {
        for (std::size_t c = 0; c < cells; ++c) {
          if ((r + c) % 2 == 0) dark.push_back(r * cells + c);
        }
      }
      const double side = 1.0 / cells_d;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t sq = dark[rng.index(dark.size())];
        pts(i, 0) = (static_cast<double>(sq % cells) + rng.uniform()) * side;
        pts(i, 1) = (static_cast<double>(sq / cells) + rng.uniform()) * side;
      }
      prov.params = {{"cells", cells_d}};
      prov.support = SupportBox{{0.0, 0.0}, {1.0, 1.0}};
      break;
    }
    case SyntheticKind::two_moons: {
      const double noise = param(params, "noise", 0.03);
      if (!(noise >= 0.0)) throw ContractError("two-moons: noise must be nonnegative");
      // Classic moons (unit radius, x in [-1, 2]) scaled by s into the frame.
      const double s = 0.8 / 3.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double t = pi * rng.uniform();
        const bool upper = rng.uniform() < 0.5;
        const double mx = upper ? std::cos(t) : 1.0 - std::cos(t);
        const double my = upper ? std::sin(t) : 0.5 - std::sin(t);
        pts(i, 0) = 0.1 + (mx + 1.0) * s + truncated_noise(rng, noise);
        pts(i, 1) = 0.5 + (my - 0.25) * s + truncated_noise(rng, noise);
      }
      prov.params = {{"noise", noise}, {"radius", s}};
      const double pad = 10.0 * noise;
      prov.support = SupportBox{{0.1 - pad, 0.5 - 0.75 * s - pad}, {0.9 + pad, 0.5 + 0.75 * s + pad}};
      break;
    }
    case SyntheticKind::rings: {
      const double rings_d = param(params, "rings", 2.0);
      const double noise = param(params, "noise", 0.01);
      if (!(rings_d >= 1.0) || rings_d != std::floor(rings_d)) throw ContractError("rings: rings must be a positive integer");
      if (!(noise >= 0.0)) throw ContractError("rings: noise must be nonnegative");
      const auto rings = static_cast<std::size_t>(rings_d);
      std::vector<double> radii(rings);
      for (std::size_t j = 0; j < rings; ++j) radii[j] = 0.4 * static_cast<double>(j + 1) / rings_d;
      const CategoricalTable pick(radii);  // uniform density along the arcs
      for (std::size_t i = 0; i < n; ++i) {
        const double r = radii[pick.draw(rng)];
        const double t = 2.0 * pi * rng.uniform();
        pts(i, 0) = 0.5 + r * std::cos(t) + truncated_noise(rng, noise);
        pts(i, 1) = 0.5 + r * std::sin(t) + truncated_noise(rng, noise);
      }
      prov.params = {{"rings", rings_d}, {"noise", noise}};
      const double ext = 0.4 + 10.0 * noise;
      prov.support = SupportBox{{0.5 - ext, 0.5 - ext}, {0.5 + ext, 0.5 + ext}};
      break;
    }
    case SyntheticKind::gmm_ground_truth: {
      const double k_d = param(params, "k", 3.0);
      const double sd_min = param(params, "sd_min", 0.03);
      const double sd_max = param(params, "sd_max", 0.1);
      if (!(k_d >= 1.0) || k_d != std::floor(k_d)) throw ContractError("gmm-ground-truth: k must be a positive integer");
      if (!(sd_min > 0.0 && sd_max >= sd_min)) throw ContractError("gmm-ground-truth: need 0 < sd_min <= sd_max");
      const auto K = static_cast<std::size_t>(k_d);
      prov.params = {{"k", k_d}, {"sd_min", sd_min}, {"sd_max", sd_max}};
      Matrix mu(K, 2), sd(K, 2);
      for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t j = 0; j < 2; ++j) {
          mu(k, j) = 0.2 + 0.6 * rng.uniform();
          sd(k, j) = sd_min + (sd_max - sd_min) * rng.uniform();
          prov.params["mu_" + std::to_string(k) + "_" + std::to_string(j)] = mu(k, j);
          prov.params["sd_" + std::to_string(k) + "_" + std::to_string(j)] = sd(k, j);
        }
      }
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = rng.index(K);
        for (std::size_t j = 0; j < 2; ++j) pts(i, j) = mu(k, j) + truncated_noise(rng, sd(k, j));
      }
      SupportBox box{{mu(0, 0), mu(0, 1)}, {mu(0, 0), mu(0, 1)}};
      for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t j = 0; j < 2; ++j) {
          box.lo[j] = std::min(box.lo[j], mu(k, j) - 10.0 * sd(k, j));
          box.hi[j] = std::max(box.hi[j], mu(k, j) + 10.0 * sd(k, j));
        }
      }
      prov.support = box;
      break;
    }
  }
  return make_dataset(std::move(pts), std::move(prov));
}

DensityDataset regenerate(const Provenance& prov) {
  RngHandle rng(prov.seed);
  if (prov.source.starts_with("synthetic:")) {
    std::map<std::string, double> params;
    for (const auto& [k, v] : prov.params) {
      if (!k.starts_with("mu_") && !k.starts_with("sd_")) params[k] = v;
    }
    return make_synthetic(parse_synthetic_kind(prov.source.substr(10)), prov.n, params, rng);
  }
  if (prov.source.starts_with("image:")) {
    DensityDataset ds = sample_from_image(load_image_density(prov.source.substr(6)), prov.n, rng);
    ds.provenance.source = prov.source;
    return ds;
  }
  throw ContractError("regenerate: provenance source '" + prov.source + "' cannot be regenerated");
}

DensityDataset split(DensityDataset data, double validation_fraction, std::uint64_t seed) {
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ContractError("split: validation fraction must lie in (0, 1)");
  }
  const std::size_t n = data.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  RngHandle rng(seed);
  shuffle_indices(idx, rng);
  const auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(n)));
  data.validation.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  data.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  std::sort(data.validation.begin(), data.validation.end());
  std::sort(data.train.begin(), data.train.end());
  data.split_seed = seed;
  return data;
}

}  // namespace cwm
