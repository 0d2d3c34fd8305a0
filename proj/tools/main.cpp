// symmetry-eb: simulate | fit | krige | bench over the empirical Bayes
// denoising toolkit. Every command takes a flat JSON config plus --set
// overrides; outputs are byte-stable given the same config and seed, with
// timestamps and runtimes confined to manifest.json.

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "symmeb/ebmr.hpp"
#include "symmeb/errors.hpp"
#include "symmeb/io.hpp"
#include "symmeb/linalg.hpp"
#include "symmeb/npmle.hpp"
#include "symmeb/rng.hpp"
#include "symmeb/simgen.hpp"
#include "symmeb/spatial.hpp"

namespace fs = std::filesystem;
using namespace symmeb;

namespace {

constexpr int kSchemaVersion = 1;

std::string timestamp_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[64];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

void write_manifest(const fs::path& dir, const io::Config& cfg, const std::string& command,
                    const std::vector<std::string>& files, double runtime_seconds,
                    nlohmann::json result = nlohmann::json::object()) {
  nlohmann::json m;
  m["schema_version"] = kSchemaVersion;
  m["command"] = command;
  m["config"] = cfg.json();
  m["files"] = files;
  m["generated_at"] = timestamp_now();
  m["runtime_seconds"] = runtime_seconds;
  if (!result.empty()) m["result"] = result;
  io::write_json(dir / "manifest.json", m);
}

std::vector<std::string> expand_seeds(const io::Config& cfg) {
  std::vector<std::string> out;
  for (const auto& tok : cfg.get_list("seeds")) {
    const auto colon = tok.find(':');
    if (colon == std::string::npos) {
      out.push_back(tok);
    } else {
      const long lo = std::stol(tok.substr(0, colon)), hi = std::stol(tok.substr(colon + 1));
      if (hi < lo) throw ConfigError("seed range '" + tok + "' is decreasing");
      for (long s = lo; s <= hi; ++s) out.push_back(std::to_string(s));
    }
  }
  if (out.empty()) throw ConfigError("config key 'seeds' expands to nothing");
  return out;
}

// ---------------------------------------------------------------------------
// dataset plumbing shared by fit/bench

Eigen::MatrixXd tau_matrix(const io::Config& cfg, Eigen::Index n, Eigen::Index p,
                           bool has_header) {
  if (cfg.has("tau_csv")) return io::read_csv(cfg.get_string("tau_csv"), has_header).values;
  const double tau = cfg.get_double("tau", 1.0);
  return Eigen::MatrixXd::Constant(n, p, tau);
}

struct SpatialColumns {
  std::vector<int> site, covariate;
  int x = -1, tau = -1;
};

SpatialColumns resolve_columns(const io::Csv& csv, const io::Config& cfg) {
  const auto site_names = cfg.get_list("site_cols", {"s"});
  const auto cov_names = cfg.get_list("covariate_cols", {"a0", "a1", "a2"});
  const std::string x_name = cfg.get_string("x_col", "x");
  const std::string tau_name = cfg.get_string("tau_col", "tau");
  auto index_of = [&](const std::string& name) {
    if (csv.header.empty()) {
      try {
        return std::stoi(name);
      } catch (const std::exception&) {
        throw ConfigError("headerless csv needs numeric column indices, got '" + name + "'");
      }
    }
    for (std::size_t c = 0; c < csv.header.size(); ++c)
      if (csv.header[c] == name) return static_cast<int>(c);
    throw DataError("column '" + name + "' not found in csv header");
  };
  SpatialColumns cols;
  for (const auto& s : site_names) cols.site.push_back(index_of(s));
  for (const auto& s : cov_names) cols.covariate.push_back(index_of(s));
  cols.x = index_of(x_name);
  cols.tau = index_of(tau_name);
  return cols;
}

spatial::SpatialData spatial_from_csv(const io::Csv& csv, const SpatialColumns& cols) {
  const Eigen::Index n = csv.values.rows();
  Eigen::MatrixXd sites(n, cols.site.size()), a(n, cols.covariate.size());
  for (std::size_t c = 0; c < cols.site.size(); ++c) sites.col(c) = csv.values.col(cols.site[c]);
  for (std::size_t c = 0; c < cols.covariate.size(); ++c)
    a.col(c) = csv.values.col(cols.covariate[c]);
  return spatial::SpatialData(sites, a, csv.values.col(cols.x), csv.values.col(cols.tau));
}

std::vector<std::string> spatial_header(const io::Config& cfg) {
  auto h = cfg.get_list("site_cols", {"s"});
  for (const auto& c : cfg.get_list("covariate_cols", {"a0", "a1", "a2"})) h.push_back(c);
  h.push_back(cfg.get_string("x_col", "x"));
  h.push_back(cfg.get_string("tau_col", "tau"));
  return h;
}

// ---------------------------------------------------------------------------
// method runners (in-memory); fit/bench share these

struct MethodResult {
  Eigen::MatrixXd posterior_mean;
  double final_loglik = 0.0;   // marginal loglik, elbo, or -objective/2
  nlohmann::json checkpoint;   // method-specific fitted state
};

npmle::GridPrior run_npmle_prior(const Eigen::VectorXd& x, const Eigen::VectorXd& sd,
                                 const io::Config& cfg) {
  npmle::SequenceData data(x, sd);
  const auto atoms = npmle::build_grid(data, static_cast<int>(cfg.get_int("G", 300)),
                                       cfg.get_double("extend_sd", 0.0));
  return npmle::fit_npmle(data, atoms, cfg.get_double("tol", 1e-8),
                          static_cast<int>(cfg.get_int("max_iter", 2000)));
}

MethodResult run_npmle(const Eigen::MatrixXd& x, const Eigen::MatrixXd& tau,
                       const io::Config& cfg) {
  const Eigen::Index n = x.rows(), p = x.cols();
  Eigen::VectorXd xv(n * p), sd(n * p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) {
      xv[i * p + j] = x(i, j);
      sd[i * p + j] = 1.0 / std::sqrt(tau(i, j));
    }
  auto prior = run_npmle_prior(xv, sd, cfg);
  npmle::SequenceData data(xv, sd);
  const Eigen::VectorXd pm = npmle::posterior_mean(data, prior);
  MethodResult res;
  res.posterior_mean.resize(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) res.posterior_mean(i, j) = pm[i * p + j];
  res.final_loglik = npmle::marginal_loglik(data, prior);
  res.checkpoint = npmle::to_json(prior);
  res.checkpoint["kind"] = "grid_prior";
  return res;
}

ebmr::FitConfig ebmr_config(const io::Config& cfg, uint64_t seed, ebmr::Flavor flavor) {
  ebmr::FitConfig fc;
  fc.K = static_cast<int>(cfg.get_int("K", 10));
  fc.epochs = static_cast<int>(cfg.get_int("epochs", 500));
  fc.sgd_steps_per_epoch = static_cast<int>(cfg.get_int("sgd_steps", 50));
  fc.lr = cfg.get_double("lr", 0.01);
  fc.sgd_batch = static_cast<int>(cfg.get_int("sgd_batch", 0));
  fc.seed = seed;
  if (cfg.has("hidden")) {
    fc.hidden.clear();
    for (const auto& tok : cfg.get_list("hidden")) fc.hidden.push_back(std::stoi(tok));
  }
  (void)flavor;
  return fc;
}

MethodResult run_ebmr(const Eigen::MatrixXd& x, const Eigen::MatrixXd& tau, ebmr::Flavor flavor,
                      const ebmr::CovariateArrays* cov, const io::Config& cfg, uint64_t seed) {
  ebmr::NoisyMatrix data(x, tau);
  auto fit = ebmr::fit(data, flavor, cov, ebmr_config(cfg, seed, flavor));
  Rng sampler_rng = Rng(seed).split(2);
  const int samples = static_cast<int>(cfg.get_int("samples", 200));
  MethodResult res;
  res.posterior_mean = ebmr::rao_blackwell_posterior_mean(fit, data, samples, sampler_rng, cov);
  res.final_loglik = fit.elbo_trace.empty() ? 0.0 : fit.elbo_trace.back();
  res.checkpoint = ebmr::to_json(fit);
  res.checkpoint["kind"] = "ebmr_fit";
  return res;
}

MethodResult run_spatial(const spatial::SpatialData& data, const io::Config& cfg, uint64_t seed) {
  spatial::SpectralFitConfig sc;
  sc.steps = static_cast<int>(cfg.get_int("steps", 200));
  sc.restarts = static_cast<int>(cfg.get_int("restarts", 3));
  sc.lr = cfg.get_double("lr", 0.1);
  sc.seed = seed;
  auto fit = spatial::fit_spectral(data, static_cast<int>(cfg.get_int("spectral_K", 3)), sc);
  auto post_beta = spatial::posterior_beta(fit.mixture, data);
  auto post_z = spatial::posterior_z(fit.mixture, data, post_beta.mean);
  MethodResult res;
  res.posterior_mean = post_z.mean;
  res.final_loglik = -0.5 * fit.objective;
  res.checkpoint = spatial::to_json(fit.mixture);
  res.checkpoint["kind"] = "spectral_mixture";
  res.checkpoint["objective"] = fit.objective;
  res.checkpoint["objective_trace"] = fit.trace;
  return res;
}

nlohmann::json beta_summary_json(const spatial::GaussianPosterior& post) {
  nlohmann::json j;
  j["mean"] = std::vector<double>(post.mean.data(), post.mean.data() + post.mean.size());
  const Eigen::MatrixXd cov = post.cov_chol.lower * post.cov_chol.lower.transpose();
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < cov.rows(); ++i)
    rows.push_back(std::vector<double>(cov.row(i).begin(), cov.row(i).end()));
  j["covariance"] = rows;
  return j;
}

// ---------------------------------------------------------------------------
// simulate

const std::set<std::string> kSimulateRequired = {"family", "out_dir"};
const std::set<std::string> kSimulateOptional = {"t0", "n", "p", "tau", "seed"};

int cmd_simulate(const io::Config& cfg) {
  cfg.check_keys(kSimulateRequired, kSimulateOptional);
  Timer timer;
  simgen::SimSpec spec;
  spec.family = simgen::family_from_name(cfg.get_string("family"));
  spec.t0_id = cfg.get_string("t0", "linear");
  spec.n = static_cast<int>(cfg.get_int("n", 20));
  spec.p = static_cast<int>(cfg.get_int("p", 20));
  spec.tau = cfg.get_double("tau", 1.0);
  spec.seed = static_cast<uint64_t>(cfg.get_int("seed", 0));
  const fs::path dir = cfg.get_string("out_dir");
  fs::create_directories(dir);

  auto ds = simgen::generate(spec);
  std::vector<std::string> files;
  auto put = [&](const std::string& name, const Eigen::MatrixXd& m,
                 const std::vector<std::string>& header = {}) {
    io::write_csv(dir / name, m, header);
    files.push_back(name);
  };
  if (spec.family == simgen::Family::spatial) {
    const auto& sd = *ds.spatial;
    Eigen::MatrixXd table(sd.n(), sd.d() + sd.p() + 2);
    table.leftCols(sd.d()) = sd.sites;
    table.middleCols(sd.d(), sd.p()) = sd.covariates;
    table.col(sd.d() + sd.p()) = sd.x;
    table.col(sd.d() + sd.p() + 1) = sd.tau;
    std::vector<std::string> header = {"s"};
    for (Eigen::Index q = 0; q < sd.p(); ++q) header.push_back("a" + std::to_string(q));
    header.push_back("x");
    header.push_back("tau");
    put("data.csv", table, header);
    put("z_star.csv", ds.z_star);
    put("beta_star.csv", ds.beta_star);
  } else {
    put("x.csv", ds.x);
    put("tau.csv", ds.tau);
    put("z_star.csv", ds.z_star);
    if (ds.cov) {
      put("row_cov.csv", ds.cov->row_cov);
      put("col_cov.csv", ds.cov->col_cov);
    }
  }
  write_manifest(dir, cfg, "simulate", files, timer.seconds());
  return 0;
}

// ---------------------------------------------------------------------------
// fit

const std::set<std::string> kFitRequired = {"method", "out_dir"};
const std::set<std::string> kFitOptional = {
    "x_csv", "tau_csv", "tau", "has_header", "row_cov_csv", "col_cov_csv", "data_csv",
    "site_cols", "covariate_cols", "x_col", "tau_col", "truth_csv", "seed", "G", "tol",
    "max_iter", "extend_sd", "K", "epochs", "sgd_steps", "lr", "sgd_batch", "hidden",
    "samples", "samples_out", "steps", "restarts", "spectral_K", "spectral_export",
    "spectral_export_max", "spectral_export_points"};

void export_spectral_density(const spatial::SpectralMixture& theta, const io::Config& cfg) {
  const fs::path out = cfg.get_string("spectral_export");
  double smax = cfg.get_double("spectral_export_max", 0.0);
  if (smax <= 0.0) {
    for (Eigen::Index k = 0; k < theta.K(); ++k)
      for (Eigen::Index j = 0; j < theta.dim(); ++j)
        smax = std::max(smax, std::fabs(theta.means(k, j)) + 3.0 * theta.scales(k, j));
  }
  const int points = static_cast<int>(cfg.get_int("spectral_export_points", 512));
  if (theta.dim() == 1) {
    Eigen::MatrixXd table(points, 2);
    for (int i = 0; i < points; ++i) {
      const double s = -smax + 2.0 * smax * i / (points - 1);
      table(i, 0) = s;
      table(i, 1) = spatial::spectral_density(theta, Eigen::VectorXd::Constant(1, s));
    }
    io::write_csv(out, table, {"s", "psi"});
    return;
  }
  if (theta.dim() == 2) {
    Eigen::MatrixXd table(points * points, 3);
    Eigen::VectorXd s(2);
    for (int i = 0; i < points; ++i)
      for (int j = 0; j < points; ++j) {
        s[0] = -smax + 2.0 * smax * i / (points - 1);
        s[1] = -smax + 2.0 * smax * j / (points - 1);
        table(i * points + j, 0) = s[0];
        table(i * points + j, 1) = s[1];
        table(i * points + j, 2) = spatial::spectral_density(theta, s);
      }
    io::write_csv(out, table, {"s1", "s2", "psi"});
    return;
  }
  throw ConfigError("spectral_export supports 1- or 2-dimensional frequency grids");
}

int cmd_fit(const io::Config& cfg) {
  cfg.check_keys(kFitRequired, kFitOptional);
  Timer timer;
  const std::string method = cfg.get_string("method");
  const fs::path dir = cfg.get_string("out_dir");
  fs::create_directories(dir);
  const uint64_t seed = static_cast<uint64_t>(cfg.get_int("seed", 0));
  const bool has_header = cfg.get_bool("has_header", false);

  MethodResult res;
  std::vector<std::string> files;
  std::optional<Eigen::MatrixXd> truth;
  std::optional<Eigen::MatrixXd> truth_tau;

  if (method == "npmle" || method == "ebmr-sep" || method == "ebmr-joint" || method == "caeb") {
    const Eigen::MatrixXd x = io::read_csv(cfg.get_string("x_csv"), has_header).values;
    const Eigen::MatrixXd tau = tau_matrix(cfg, x.rows(), x.cols(), has_header);
    if (tau.rows() != x.rows() || tau.cols() != x.cols())
      throw ShapeMismatch("x and tau shapes differ");
    truth_tau = tau;
    if (method == "npmle") {
      res = run_npmle(x, tau, cfg);
    } else if (method == "caeb") {
      ebmr::CovariateArrays cov;
      cov.row_cov = io::read_csv(cfg.get_string("row_cov_csv"), has_header).values;
      cov.col_cov = io::read_csv(cfg.get_string("col_cov_csv"), has_header).values;
      res = run_ebmr(x, tau, ebmr::Flavor::relative, &cov, cfg, seed);
    } else {
      const auto flavor = (method == "ebmr-sep") ? ebmr::Flavor::separate : ebmr::Flavor::joint;
      res = run_ebmr(x, tau, flavor, nullptr, cfg, seed);
    }
    if (cfg.has("samples_out") && method != "npmle") {
      // one flattened draw per line, row-major
      auto fit = ebmr::fit_from_json(res.checkpoint);
      ebmr::NoisyMatrix data(x, tau);
      std::optional<ebmr::CovariateArrays> cov;
      if (method == "caeb") {
        cov.emplace();
        cov->row_cov = io::read_csv(cfg.get_string("row_cov_csv"), has_header).values;
        cov->col_cov = io::read_csv(cfg.get_string("col_cov_csv"), has_header).values;
      }
      Rng rng = Rng(seed).split(3);
      auto draws = ebmr::surrogate_posterior_sample(
          fit, data, static_cast<int>(cfg.get_int("samples", 200)), rng,
          cov ? &*cov : nullptr);
      std::string lines;
      for (const auto& z : draws.z) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index i = 0; i < z.rows(); ++i)
          for (Eigen::Index j = 0; j < z.cols(); ++j) row.push_back(z(i, j));
        lines += row.dump();
        lines += '\n';
      }
      io::atomic_write(cfg.get_string("samples_out"), lines);
    }
  } else if (method == "spatial") {
    const auto csv = io::read_csv(cfg.get_string("data_csv"), cfg.get_bool("has_header", true));
    const auto cols = resolve_columns(csv, cfg);
    const auto data = spatial_from_csv(csv, cols);
    res = run_spatial(data, cfg, seed);
    truth_tau = data.tau;

    auto theta = spatial::mixture_from_json(res.checkpoint);
    auto post_beta = spatial::posterior_beta(theta, data);
    auto post_z = spatial::posterior_z(theta, data, post_beta.mean);
    io::write_json(dir / "beta_summary.json", beta_summary_json(post_beta));
    files.push_back("beta_summary.json");

    // conditional-on-beta-hat law, the same object krige restricts to S
    const Eigen::VectorXd sd = post_z.sd();
    Eigen::MatrixXd table(data.n(), data.d() + 3);
    table.leftCols(data.d()) = data.sites;
    table.col(data.d()) = post_z.mean;
    table.col(data.d() + 1) = sd;
    table.col(data.d() + 2).setZero();
    std::vector<std::string> header = cfg.get_list("site_cols", {"s"});
    header.push_back("post_mean_z");
    header.push_back("post_sd_z");
    header.push_back("kriged");
    io::write_csv(dir / "posterior_summary.csv", table, header);
    files.push_back("posterior_summary.csv");

    if (cfg.has("spectral_export")) export_spectral_density(theta, cfg);
  } else {
    throw ConfigError("unknown method '" + method + "'");
  }

  io::write_json(dir / "checkpoint.json", res.checkpoint);
  io::write_csv(dir / "posterior_mean.csv", res.posterior_mean);
  files.push_back("checkpoint.json");
  files.push_back("posterior_mean.csv");

  nlohmann::json record;
  record["method"] = method;
  record["seed"] = static_cast<long>(seed);
  record["elbo_or_loglik_final"] = res.final_loglik;
  record["spec"] = cfg.json();
  if (cfg.has("truth_csv")) {
    truth = io::read_csv(cfg.get_string("truth_csv"), has_header && method != "spatial").values;
    record["r_mse"] = simgen::r_mse(res.posterior_mean, *truth, *truth_tau);
  }
  nlohmann::json result_file = record;
  io::write_json(dir / "result.json", result_file);
  files.push_back("result.json");
  record["runtime_seconds"] = timer.seconds();
  write_manifest(dir, cfg, "fit", files, timer.seconds(), record);
  return 0;
}

// ---------------------------------------------------------------------------
// krige

const std::set<std::string> kKrigeRequired = {"fit_dir", "data_csv", "new_sites_csv", "out_dir"};
const std::set<std::string> kKrigeOptional = {"site_cols", "covariate_cols", "x_col", "tau_col",
                                              "has_header"};

int cmd_krige(const io::Config& cfg) {
  cfg.check_keys(kKrigeRequired, kKrigeOptional);
  Timer timer;
  const fs::path fit_dir = cfg.get_string("fit_dir");
  if (!fs::exists(fit_dir / "checkpoint.json"))
    throw DataError("missing checkpoint: " + (fit_dir / "checkpoint.json").string());
  const auto theta = spatial::mixture_from_json(io::read_json(fit_dir / "checkpoint.json"));
  const auto beta_json = io::read_json(fit_dir / "beta_summary.json");
  auto beta_vec = beta_json.at("mean").get<std::vector<double>>();
  const Eigen::VectorXd beta =
      Eigen::Map<Eigen::VectorXd>(beta_vec.data(), beta_vec.size());

  const auto csv = io::read_csv(cfg.get_string("data_csv"), cfg.get_bool("has_header", true));
  const auto cols = resolve_columns(csv, cfg);
  const auto data = spatial_from_csv(csv, cols);

  const auto new_csv =
      io::read_csv(cfg.get_string("new_sites_csv"), cfg.get_bool("has_header", true));
  const fs::path dir = cfg.get_string("out_dir");
  fs::create_directories(dir);

  std::vector<std::string> header = cfg.get_list("site_cols", {"s"});
  header.push_back("post_mean_z");
  header.push_back("post_sd_z");
  header.push_back("kriged");

  const Eigen::Index d = data.d();
  Eigen::MatrixXd requested(new_csv.values.rows(), d);
  if (new_csv.values.rows() > 0) {
    if (new_csv.values.cols() < d) throw DataError("new sites csv has too few columns");
    requested = new_csv.values.leftCols(d);
  }

  // prediction set = observed sites plus any requested sites not observed
  std::vector<Eigen::Index> req_to_all(requested.rows(), -1);
  std::vector<bool> req_is_new(requested.rows(), false);
  std::vector<Eigen::VectorXd> extra;
  for (Eigen::Index r = 0; r < requested.rows(); ++r) {
    Eigen::Index hit = -1;
    for (Eigen::Index i = 0; i < data.n() && hit < 0; ++i)
      if ((data.sites.row(i).array() == requested.row(r).array()).all()) hit = i;
    if (hit >= 0) {
      req_to_all[r] = hit;
    } else {
      req_is_new[r] = true;
      req_to_all[r] = data.n() + static_cast<Eigen::Index>(extra.size());
      extra.push_back(requested.row(r).transpose());
    }
  }
  Eigen::MatrixXd all_sites(data.n() + static_cast<Eigen::Index>(extra.size()), d);
  all_sites.topRows(data.n()) = data.sites;
  for (std::size_t e = 0; e < extra.size(); ++e)
    all_sites.row(data.n() + static_cast<Eigen::Index>(e)) = extra[e].transpose();

  Eigen::MatrixXd table(requested.rows(), d + 3);
  if (requested.rows() > 0) {
    auto post = spatial::krige(theta, data, beta, all_sites);
    const Eigen::VectorXd sd = post.sd();
    for (Eigen::Index r = 0; r < requested.rows(); ++r) {
      table.block(r, 0, 1, d) = requested.row(r);
      table(r, d) = post.mean[req_to_all[r]];
      table(r, d + 1) = sd[req_to_all[r]];
      table(r, d + 2) = req_is_new[r] ? 1.0 : 0.0;
    }
  }
  io::write_csv(dir / "predictions.csv", table, header);
  write_manifest(dir, cfg, "krige", {"predictions.csv"}, timer.seconds());
  return 0;
}

// ---------------------------------------------------------------------------
// bench

const std::set<std::string> kBenchRequired = {"family", "methods", "seeds", "out_dir"};
const std::set<std::string> kBenchOptional = {
    "t0", "n", "p", "tau", "workers", "G", "tol", "max_iter", "extend_sd", "K", "epochs",
    "sgd_steps", "lr", "sgd_batch", "hidden", "samples", "steps", "restarts", "spectral_K"};

struct BenchCell {
  std::string method, t0;
  int n = 0, p = 0;
  double tau = 1.0;
  long seed = 0;

  std::string id() const {
    std::string t = io::fmt(tau);
    for (auto& ch : t)
      if (ch == '.') ch = '_';
    return method + "__" + (t0.empty() ? "none" : t0) + "__n" + std::to_string(n) + "_p" +
           std::to_string(p) + "_tau" + t + "_s" + std::to_string(seed);
  }
};

nlohmann::json run_bench_cell(const BenchCell& cell, simgen::Family family,
                              const io::Config& cfg) {
  simgen::SimSpec spec;
  spec.family = family;
  spec.t0_id = cell.t0;
  spec.n = cell.n;
  spec.p = cell.p;
  spec.tau = cell.tau;
  spec.seed = static_cast<uint64_t>(cell.seed);
  auto ds = simgen::generate(spec);

  MethodResult res;
  Eigen::MatrixXd truth = ds.z_star;
  Eigen::MatrixXd tau_used = ds.tau;
  if (cell.method == "mle") {
    res.posterior_mean = (family == simgen::Family::spatial) ? Eigen::MatrixXd(ds.spatial->x)
                                                             : ds.x;
  } else if (cell.method == "npmle") {
    if (family == simgen::Family::spatial) {
      const Eigen::MatrixXd x = ds.spatial->x;
      res = run_npmle(x, ds.tau, cfg);
    } else {
      res = run_npmle(ds.x, ds.tau, cfg);
    }
  } else if (cell.method == "npmle-residual") {
    if (family != simgen::Family::spatial)
      throw ConfigError("method npmle-residual applies to the spatial family only");
    const Eigen::MatrixXd resid = ds.spatial->x - ds.spatial->covariates * ds.beta_star;
    res = run_npmle(resid, ds.tau, cfg);
  } else if (cell.method == "ebmr-sep" || cell.method == "ebmr-joint") {
    const auto flavor =
        (cell.method == "ebmr-sep") ? ebmr::Flavor::separate : ebmr::Flavor::joint;
    res = run_ebmr(ds.x, ds.tau, flavor, nullptr, cfg, static_cast<uint64_t>(cell.seed));
  } else if (cell.method == "caeb") {
    if (family != simgen::Family::caeb)
      throw ConfigError("method caeb needs the caeb family (covariates)");
    res = run_ebmr(ds.x, ds.tau, ebmr::Flavor::relative, &*ds.cov, cfg,
                   static_cast<uint64_t>(cell.seed));
  } else if (cell.method == "spatial") {
    if (family != simgen::Family::spatial)
      throw ConfigError("method spatial needs the spatial family");
    res = run_spatial(*ds.spatial, cfg, static_cast<uint64_t>(cell.seed));
  } else {
    throw ConfigError("unknown bench method '" + cell.method + "'");
  }

  nlohmann::json rec;
  rec["status"] = "ok";
  rec["method"] = cell.method;
  rec["family"] = simgen::family_name(family);
  rec["t0"] = cell.t0;
  rec["n"] = cell.n;
  rec["p"] = cell.p;
  rec["tau"] = cell.tau;
  rec["seed"] = cell.seed;
  rec["r_mse"] = simgen::r_mse(res.posterior_mean, truth, tau_used);
  rec["elbo_or_loglik_final"] = res.final_loglik;
  return rec;
}

// lower-interpolation quantile: value at floor(q * (m - 1))
double quantile_lower(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const auto idx = static_cast<std::size_t>(q * (v.size() - 1));
  return v[idx];
}

int cmd_bench(const io::Config& cfg) {
  cfg.check_keys(kBenchRequired, kBenchOptional);
  Timer timer;
  const auto family = simgen::family_from_name(cfg.get_string("family"));
  const fs::path dir = cfg.get_string("out_dir");
  fs::create_directories(dir / "cells");

  std::vector<BenchCell> cells;
  for (const auto& method : cfg.get_list("methods"))
    for (const auto& t0 : cfg.get_list("t0", {family == simgen::Family::spatial ? "" : "linear"}))
      for (const auto& n : cfg.get_list("n", {"20"}))
        for (const auto& p : cfg.get_list("p", {"20"}))
          for (const auto& tau : cfg.get_list("tau", {"1"}))
            for (const auto& seed : expand_seeds(cfg)) {
              BenchCell c;
              c.method = method;
              c.t0 = t0;
              c.n = std::stoi(n);
              c.p = std::stoi(p);
              c.tau = std::stod(tau);
              c.seed = std::stol(seed);
              cells.push_back(c);
            }

  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  nlohmann::json runtimes = nlohmann::json::object();
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      const auto& cell = cells[i];
      const fs::path cell_path = dir / "cells" / (cell.id() + ".json");
      if (fs::exists(cell_path)) {
        const auto existing = io::read_json(cell_path);
        if (existing.value("status", "") == "ok") continue;  // resume: keep finished cells
      }
      Timer cell_timer;
      nlohmann::json rec;
      try {
        rec = run_bench_cell(cell, family, cfg);
      } catch (const std::exception& e) {
        rec["status"] = "failed";
        rec["method"] = cell.method;
        rec["t0"] = cell.t0;
        rec["n"] = cell.n;
        rec["p"] = cell.p;
        rec["tau"] = cell.tau;
        rec["seed"] = cell.seed;
        rec["error"] = e.what();
      }
      io::write_json(cell_path, rec);
      {
        std::lock_guard<std::mutex> lock(log_mutex);
        runtimes[cell.id()] = cell_timer.seconds();
      }
    }
  };
  const int workers =
      std::max(1, static_cast<int>(cfg.get_int("workers", 1)));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  // aggregate: per-cell table plus median/IQR summaries over seeds
  nlohmann::json cells_json = nlohmann::json::array();
  std::string csv = "method,family,t0,n,p,tau,seed,status,r_mse,elbo_or_loglik_final\n";
  std::map<std::string, std::vector<double>> groups;
  std::map<std::string, nlohmann::json> group_meta;
  std::map<std::string, int> group_failures;
  for (const auto& cell : cells) {
    const auto rec = io::read_json(dir / "cells" / (cell.id() + ".json"));
    cells_json.push_back(rec);
    const bool ok = rec.value("status", "") == "ok";
    csv += cell.method + "," + simgen::family_name(family) + "," + cell.t0 + "," +
           std::to_string(cell.n) + "," + std::to_string(cell.p) + "," + io::fmt(cell.tau) + "," +
           std::to_string(cell.seed) + "," + rec.value("status", "unknown") + "," +
           (ok ? io::fmt(rec["r_mse"].get<double>()) : "") + "," +
           (ok ? io::fmt(rec["elbo_or_loglik_final"].get<double>()) : "") + "\n";
    const std::string gkey = cell.method + "|" + cell.t0 + "|" + std::to_string(cell.n) + "|" +
                             std::to_string(cell.p) + "|" + io::fmt(cell.tau);
    if (ok) {
      groups[gkey].push_back(rec["r_mse"].get<double>());
    } else {
      group_failures[gkey] += 1;
    }
    if (!group_meta.count(gkey)) {
      nlohmann::json g;
      g["method"] = cell.method;
      g["t0"] = cell.t0;
      g["n"] = cell.n;
      g["p"] = cell.p;
      g["tau"] = cell.tau;
      group_meta[gkey] = g;
    }
  }
  nlohmann::json summaries = nlohmann::json::array();
  for (auto& [key, vals] : group_meta) {
    nlohmann::json g = vals;
    const auto it = groups.find(key);
    if (it != groups.end() && !it->second.empty()) {
      g["n_seeds"] = it->second.size();
      g["median_r_mse"] = quantile_lower(it->second, 0.5);
      g["iqr_lo_r_mse"] = quantile_lower(it->second, 0.25);
      g["iqr_hi_r_mse"] = quantile_lower(it->second, 0.75);
    } else {
      g["n_seeds"] = 0;
    }
    g["n_failed"] = group_failures.count(key) ? group_failures[key] : 0;
    summaries.push_back(g);
  }
  nlohmann::json results;
  results["schema_version"] = kSchemaVersion;
  results["cells"] = cells_json;
  results["summaries"] = summaries;
  io::write_json(dir / "results.json", results);
  io::atomic_write(dir / "results.csv", csv);
  write_manifest(dir, cfg, "bench", {"results.json", "results.csv"}, timer.seconds(), runtimes);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"empirical Bayes denoising under probabilistic symmetries"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "path to a flat JSON run config")->required();
    sub->add_option("--set", overrides, "override config entries as key=value");
  };
  auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
  auto* fit = app.add_subcommand("fit", "fit a method and write posterior summaries");
  auto* krg = app.add_subcommand("krige", "predict the latent field at new sites");
  auto* ben = app.add_subcommand("bench", "run a (method x setting x seed) sweep");
  for (auto* sub : {sim, fit, krg, ben}) add_common(sub);

  CLI11_PARSE(app, argc, argv);

  try {
    io::Config cfg = io::Config::load(config_path);
    for (const auto& kv : overrides) cfg.set_override(kv);
    if (sim->parsed()) return cmd_simulate(cfg);
    if (fit->parsed()) return cmd_fit(cfg);
    if (krg->parsed()) return cmd_krige(cfg);
    if (ben->parsed()) return cmd_bench(cfg);
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
