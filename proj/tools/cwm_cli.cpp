// Command-line front end: fitting, sampling, evaluation, rendering and
// estimator benchmarks.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "cwm/data.hpp"
#include "cwm/errors.hpp"
#include "cwm/estimators.hpp"
#include "cwm/gmm.hpp"
#include "cwm/io.hpp"
#include "cwm/model.hpp"
#include "cwm/training.hpp"

namespace {

using namespace cwm;

struct DataArgs {
  std::string path;
  std::size_t n = 50000;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;
};

void add_data_options(CLI::App* cmd, DataArgs& args, bool required = true) {
  auto* opt = cmd->add_option("--data", args.path, "CSV dataset or PGM image")->check(CLI::ExistingFile);
  if (required) opt->required();
  cmd->add_option("--n", args.n, "points drawn from a PGM image")->check(CLI::PositiveNumber);
  cmd->add_option("--val-fraction", args.val_fraction,
                  "validation share when the input carries no split (0 disables)")
      ->check(CLI::Range(0.0, 0.99));
}

bool has_extension(const std::string& path, const char* ext) {
  return std::filesystem::path(path).extension() == ext;
}

// Image inputs are sampled with the run's seed; CSV inputs without a split
// column are split with it.
DensityDataset load_data(const DataArgs& args) {
  DensityDataset data;
  if (has_extension(args.path, ".pgm")) {
    RngHandle rng(args.seed);
    data = sample_from_image(load_image_density(args.path), args.n, rng);
    data.provenance.source = "image:" + args.path;
  } else {
    data = read_dataset_csv(args.path);
  }
  if (data.validation.empty() && args.val_fraction > 0.0) data = split(std::move(data), args.val_fraction, args.seed);
  return data;
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || v == 0) throw ContractError("--hidden: bad layer width '" + item + "'");
    out.push_back(v);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

GridBounds parse_bounds(const std::string& text) {
  std::vector<double> v;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = text.find(',', start);
    const std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw ContractError("--bounds: bad number '" + item + "'");
    v.push_back(x);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (v.size() == 2) return {v[0], v[1], v[0], v[1]};
  if (v.size() == 4) return {v[0], v[1], v[2], v[3]};
  throw ContractError("--bounds expects lo,hi or xlo,xhi,ylo,yhi");
}

Matrix eval_points(const DensityDataset& data) {
  return data.validation.empty() ? data.points : data.validation_points();
}

double mean_log_prob(const ModelFile& f, const Matrix& pts) {
  std::vector<double> lp(pts.rows);
  log_density_of(f)(pts, lp);
  double s = 0.0;
  for (double v : lp) s += v;
  return s / static_cast<double>(pts.rows);
}

std::size_t parameter_count(const ModelFile& f) {
  if (const auto* m = std::get_if<CwmModel>(&f.model)) return count_parameters(*m);
  return count_parameters(std::get<Gmm>(f.model));
}

int run(int argc, char** argv) {
  CLI::App app{"Classifier weighted mixtures: fit, sample and evaluate 2D densities"};
  app.require_subcommand(1);

  // fit-gmm
  DataArgs gmm_data;
  std::size_t gmm_k = 0;
  EmOptions em_opts;
  std::string gmm_out;
  auto* fit_gmm = app.add_subcommand("fit-gmm", "fit a diagonal Gaussian mixture by EM");
  add_data_options(fit_gmm, gmm_data);
  fit_gmm->add_option("--k", gmm_k, "number of components")->required()->check(CLI::PositiveNumber);
  fit_gmm->add_option("--em-iters", em_opts.max_iters, "maximum EM iterations")->check(CLI::PositiveNumber);
  fit_gmm->add_option("--em-tol", em_opts.tol, "stop when the mean LL improves by less than this");
  fit_gmm->add_option("--seed", gmm_data.seed, "random seed");
  fit_gmm->add_option("--out", gmm_out, "model file to write")->required();

  // fit-cwm
  DataArgs cwm_data;
  std::size_t cwm_k = 0;
  TrainConfig config;
  std::string hidden = "64,64";
  bool no_pretrain = false;
  std::string cwm_out;
  auto* fit = app.add_subcommand("fit-cwm", "fit a classifier weighted mixture");
  add_data_options(fit, cwm_data);
  fit->add_option("--k", cwm_k, "number of components")->required()->check(CLI::PositiveNumber);
  fit->add_option("--hidden", hidden, "hidden layer widths, comma separated");
  fit->add_option("--lr", config.learning_rate, "Adam learning rate");
  fit->add_option("--epochs", config.epochs, "training epochs");
  fit->add_option("--batch", config.batch_size, "minibatch size")->check(CLI::PositiveNumber);
  fit->add_option("--em-iters", config.em_max_iters, "EM iterations for the warm start")->check(CLI::PositiveNumber);
  fit->add_option("--em-tol", config.em_tol, "EM tolerance for the warm start");
  fit->add_option("--seed", cwm_data.seed, "random seed");
  fit->add_flag("--no-pretrain", no_pretrain, "skip the EM warm start");
  fit->add_option("--out", cwm_out, "model file to write")->required();

  // sample
  std::string sample_model, sample_out;
  std::size_t sample_n = 0;
  std::uint64_t sample_seed = 0;
  auto* sample_cmd = app.add_subcommand("sample", "draw ancestral samples with their latent variables");
  sample_cmd->add_option("--model", sample_model, "model file")->required()->check(CLI::ExistingFile);
  sample_cmd->add_option("--n", sample_n, "number of samples")->required()->check(CLI::PositiveNumber);
  sample_cmd->add_option("--seed", sample_seed, "random seed");
  sample_cmd->add_option("--out", sample_out, "CSV file to write")->required();

  // logprob
  std::string lp_model, lp_data, lp_out;
  auto* logprob = app.add_subcommand("logprob", "log-density of every point in a CSV file");
  logprob->add_option("--model", lp_model, "model file")->required()->check(CLI::ExistingFile);
  logprob->add_option("--data", lp_data, "CSV points")->required()->check(CLI::ExistingFile);
  logprob->add_option("--out", lp_out, "write per-point values here instead of stdout");

  // eval
  std::string eval_model;
  DataArgs eval_data;
  auto* eval = app.add_subcommand("eval", "held-out mean log-likelihood and parameter count");
  eval->add_option("--model", eval_model, "model file")->required()->check(CLI::ExistingFile);
  add_data_options(eval, eval_data);
  eval->add_option("--seed", eval_data.seed, "seed for image sampling and splitting");

  // render
  std::string render_model, render_bounds = "0,1", render_out;
  std::size_t render_res = 400;
  auto* render = app.add_subcommand("render", "density on a grid, written as CSV and PGM");
  render->add_option("--model", render_model, "model file")->required()->check(CLI::ExistingFile);
  render->add_option("--res", render_res, "cells per axis")->check(CLI::Range(2, 100000));
  render->add_option("--bounds", render_bounds, "lo,hi or xlo,xhi,ylo,yhi");
  render->add_option("--out", render_out, "output path; .pgm and .csv are written")->required();

  // grad-bench
  std::string gb_model, gb_h = "squared-norm";
  std::size_t gb_m = 1000, gb_reps = 200;
  std::uint64_t gb_seed = 0;
  auto* grad_bench = app.add_subcommand("grad-bench", "variance of expectation and gradient estimators");
  grad_bench->set_help_flag("--help", "print this help message and exit");
  grad_bench->add_option("--model", gb_model, "model file")->required()->check(CLI::ExistingFile);
  grad_bench->add_option("--h", gb_h, "constant-one, coordinate-sum, squared-norm or halfspace");
  grad_bench->add_option("--m", gb_m, "samples per estimate")->check(CLI::PositiveNumber);
  grad_bench->add_option("--reps", gb_reps, "replications (at least 30)")->check(CLI::Range(30, 100000000));
  grad_bench->add_option("--seed", gb_seed, "base seed; replication r uses seed + r");

  // make-data
  std::string md_kind, md_out;
  std::size_t md_n = 0;
  std::uint64_t md_seed = 0;
  double md_val = 0.2;
  std::map<std::string, double> md_params;
  auto* make_data = app.add_subcommand("make-data", "generate a synthetic 2D dataset");
  make_data->add_option("--kind", md_kind, "checkerboard, two-moons, rings or gmm-ground-truth")->required();
  make_data->add_option("--n", md_n, "number of points")->required()->check(CLI::PositiveNumber);
  make_data->add_option("--seed", md_seed, "random seed");
  make_data->add_option("--param", md_params, "generator parameter as key=value")->delimiter(',');
  make_data->add_option("--val-fraction", md_val, "validation share (0 disables)")->check(CLI::Range(0.0, 0.99));
  make_data->add_option("--out", md_out, "CSV file to write")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "cwm: error: %s\n", e.what());
    return e.get_exit_code() != 0 ? e.get_exit_code() : 2;
  }

  if (*fit_gmm) {
    const DensityDataset data = load_data(gmm_data);
    const Matrix train = data.train_points();
    RngHandle rng(gmm_data.seed);
    const EmResult em = em_fit(init_gmm(train, gmm_k, rng, em_opts.var_floor), train, em_opts);
    TrainConfig prov_config;
    prov_config.seed = gmm_data.seed;
    prov_config.em_max_iters = em_opts.max_iters;
    prov_config.em_tol = em_opts.tol;
    prov_config.epochs = 0;
    ModelFile f{em.gmm, training_provenance(prov_config, data.provenance, gmm_k)};
    f.provenance["trainer"] = "em";
    save_model(gmm_out, f);
    std::printf("em iterations %zu converged %s\n", em.iterations, em.converged ? "yes" : "no");
    std::printf("train_ll %.6f\n", em.loglik_trace.back());
    if (!data.validation.empty()) std::printf("val_ll %.6f\n", gmm_mean_log_prob(em.gmm, data.validation_points()));
    std::printf("parameters %zu\n", count_parameters(em.gmm));
  } else if (*fit) {
    const DensityDataset data = load_data(cwm_data);
    config.seed = cwm_data.seed;
    config.hidden = parse_sizes(hidden);
    config.pretrain = !no_pretrain;
    const FitResult res = fit_cwm(data, cwm_k, config, [](std::size_t epoch, double train_ll, double val_ll) {
      std::printf("epoch %zu train_ll %.6f val_ll %.6f\n", epoch, train_ll, val_ll);
      std::fflush(stdout);
    });
    if (res.report.em_train_ll) {
      std::printf("em_gmm train_ll %.6f val_ll %.6f\n", *res.report.em_train_ll,
                  res.report.em_val_ll.value_or(std::nan("")));
    }
    ModelFile f{res.model, training_provenance(config, data.provenance, cwm_k)};
    f.provenance["trainer"] = "adam";
    save_model(cwm_out, f);
    std::printf("parameters %zu\n", res.report.parameter_count);
  } else if (*sample_cmd) {
    const CwmModel m = as_cwm(load_model(sample_model));
    RngHandle rng(sample_seed);
    write_samples_csv(sample_out, sample(m, rng, sample_n));
  } else if (*logprob) {
    const ModelFile f = load_model(lp_model);
    const DensityDataset data = read_dataset_csv(lp_data);
    if (data.dim() != f.dim()) throw ContractError("logprob: data dimension does not match the model");
    std::vector<double> lp(data.size());
    log_density_of(f)(data.points, lp);
    std::string per_point = "log_prob\n";
    double sum = 0.0;
    char buf[32];
    for (double v : lp) {
      sum += v;
      std::snprintf(buf, sizeof buf, "%.17g\n", v);
      per_point += buf;
    }
    std::printf("mean_log_prob %.17g\n", sum / static_cast<double>(lp.size()));
    if (lp_out.empty()) {
      std::fputs(per_point.c_str(), stdout);
    } else {
      std::ofstream(lp_out, std::ios::binary) << per_point;
    }
  } else if (*eval) {
    const ModelFile f = load_model(eval_model);
    const DensityDataset data = load_data(eval_data);
    if (data.dim() != f.dim()) throw ContractError("eval: data dimension does not match the model");
    const Matrix pts = eval_points(data);
    std::printf("model,k,parameters,points,mean_ll\n%s,%zu,%zu,%zu,%.6f\n", f.is_cwm() ? "cwm" : "gmm",
                f.num_components(), parameter_count(f), pts.rows, mean_log_prob(f, pts));
  } else if (*render) {
    const DensityGrid grid = export_density_grid(load_model(render_model), render_res, parse_bounds(render_bounds),
                                                 render_out);
    std::printf("grid_mass %.6f\n", grid.mass);
  } else if (*grad_bench) {
    const CwmModel m = as_cwm(load_model(gb_model));
    const auto reports = variance_bench(m, TestFunction::from_name(gb_h, m.dim()), gb_m, gb_reps, gb_seed);
    std::fputs(format_variance_table(reports).c_str(), stdout);
  } else if (*make_data) {
    RngHandle rng(md_seed);
    DensityDataset data = make_synthetic(parse_synthetic_kind(md_kind), md_n, md_params, rng);
    if (md_val > 0.0) data = split(std::move(data), md_val, md_seed);
    write_dataset_csv(md_out, data);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "cwm: error: %s\n", e.what());
    return 1;
  }
}
