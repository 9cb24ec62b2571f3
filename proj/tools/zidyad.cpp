// Command-line front end: simulate -> fit-measurement -> fit -> summarize / pi-table.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <Eigen/Core>

#include "zidyad/config.hpp"
#include "zidyad/diagnostics.hpp"
#include "zidyad/error.hpp"
#include "zidyad/io.hpp"
#include "zidyad/kernels.hpp"
#include "zidyad/manifest.hpp"
#include "zidyad/measurement_fit.hpp"
#include "zidyad/mcmc.hpp"
#include "zidyad/model.hpp"
#include "zidyad/simulate.hpp"

namespace fs = std::filesystem;
using namespace zidyad;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::size_t> chains, iterations, burn_in, thin;
  std::string out;
  std::string data;
  std::string measurement;
  std::string structural;
  std::string draws;
  std::vector<std::string> settings;
  std::optional<std::size_t> quad_order;
  std::string verify;
};

// Tracks one invocation's manifest: written before compute, rewritten at exit.
class Run {
 public:
  Run(std::string command, std::string path) : path_(std::move(path)) {
    m_.command = std::move(command);
    m_.versions = {{"zidyad", library_version()},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)},
                   {"compiler", __VERSION__}};
    m_.isa = std::string(kernels::to_string(kernels::active_isa()));
    start_ = std::chrono::steady_clock::now();
  }

  RunManifest& manifest() { return m_; }
  std::string id() const { return m_.run_id(); }
  void input(const std::string& role, const std::string& path) { m_.inputs.push_back(digest_file(role, path)); }
  void begin() { save_manifest(path_, m_); }
  void output(const std::string& role, const std::string& path) { m_.outputs.push_back(digest_file(role, path)); }
  void finish(int status, const Error* err = nullptr) {
    m_.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    m_.exit_status = status;
    m_.status = status == 0 ? "ok" : "error";
    if (err) {
      m_.error_category = std::string(to_string(err->category()));
      m_.error_message = err->what();
    }
    save_manifest(path_, m_);
  }
  const std::string& path() const { return path_; }

 private:
  RunManifest m_;
  std::string path_;
  std::chrono::steady_clock::time_point start_;
};

std::uint64_t resolve_seed(const Options& o, std::optional<std::uint64_t> from_config, RunManifest& m) {
  if (o.seed) {
    m.seed = *o.seed;
  } else if (from_config) {
    m.seed = *from_config;
  } else {
    std::random_device rd;
    m.seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    m.seed_generated = true;
  }
  return m.seed;
}

Config require_config(const Options& o) {
  if (o.config.empty()) throw Error(ErrorCategory::config, "--config is required");
  return load_config(o.config);
}

std::string dataset_path(const Options& o, const Config& c) {
  const std::string p = o.data.empty() ? c.dataset_path : o.data;
  if (p.empty()) throw Error(ErrorCategory::config, "no dataset path (set [dataset] path or --data)");
  return p;
}

std::string overrides_text(const Options& o) {
  std::ostringstream os;
  if (o.chains) os << "cli.chains=" << *o.chains << '\n';
  if (o.iterations) os << "cli.iterations=" << *o.iterations << '\n';
  if (o.burn_in) os << "cli.burn_in=" << *o.burn_in << '\n';
  if (o.thin) os << "cli.thin=" << *o.thin << '\n';
  if (o.quad_order) os << "cli.quad_order=" << *o.quad_order << '\n';
  for (const auto& s : o.settings) os << "cli.setting=" << s << '\n';
  return os.str();
}

int cmd_simulate(const Options& o, Run*& run) {
  const Config c = require_config(o);
  if (!c.has_simulate) throw Error(ErrorCategory::config, "config has no [simulate] section");
  if (o.out.empty()) throw Error(ErrorCategory::config, "--out (output directory) is required");
  const auto& sc = c.simulate;
  fs::create_directories(o.out);
  static Run r("simulate", (fs::path(o.out) / "manifest.json").string());
  run = &r;
  r.manifest().config_hash = sha256_hex(c.canonical + overrides_text(o));
  r.manifest().threads = o.threads.value_or(sc.threads);
  r.input("config", o.config);
  if (sc.measurement_path.empty() || sc.structural_path.empty())
    throw Error(ErrorCategory::config, "[simulate] needs measurement and structural parameter files");
  r.input("measurement", sc.measurement_path);
  r.input("structural", sc.structural_path);

  SimSpec spec;
  spec.n = sc.n;
  spec.seed = resolve_seed(o, sc.seed, r.manifest());
  spec.threads = r.manifest().threads;
  spec.covariates.push_back({"intercept", CovariateGenerator::Kind::constant, 0.0});
  spec.covariates.insert(spec.covariates.end(), sc.covariates.begin(), sc.covariates.end());
  std::vector<std::string> names;
  for (const auto& g : spec.covariates) names.push_back(g.name);
  for (const auto& z : sc.z_columns) {
    const auto it = std::find(names.begin(), names.end(), z);
    if (it == names.end()) throw Error(ErrorCategory::config, "simulate.z_columns: unknown covariate '" + z + "'");
    spec.z_cols.push_back(static_cast<std::size_t>(it - names.begin()));
  }
  spec.phi = load_measurement(sc.measurement_path);
  spec.psi = load_structural(sc.structural_path, names);
  const auto expand = [](const std::vector<double>& v, std::size_t p) {
    return v.size() == 1 ? std::vector<double>(p, v[0]) : v;
  };
  spec.missing_g = expand(sc.missing_g, spec.phi.items_g.size());
  spec.missing_r = expand(sc.missing_r, spec.phi.items_r.size());
  if (sc.linked) {
    LinkedMissingness l = *sc.linked;
    const auto it = std::find(names.begin(), names.end(), sc.linked_column);
    if (it == names.end()) throw Error(ErrorCategory::config, "simulate.linked_column: unknown covariate");
    l.column = static_cast<std::size_t>(it - names.begin());
    spec.linked = l;
  }
  r.begin();

  const SimResult res = simulate(spec);
  const std::string data_path = (fs::path(o.out) / "data.csv").string();
  const std::string latent_path = (fs::path(o.out) / "latent.csv").string();
  save_dataset(data_path, res.data, "NA", r.id());
  {
    auto f = open_output(latent_path);
    write_latent_state(f, res.truth);
  }
  r.output("dataset", data_path);
  r.output("latent", latent_path);
  r.manifest().statistics["dyads"] = static_cast<double>(res.data.n());
  r.manifest().statistics["mask_redraws"] = static_cast<double>(res.mask_redraws);
  std::cout << "simulated " << res.data.n() << " dyads (seed " << spec.seed << ") -> " << data_path << '\n';
  return 0;
}

void print_fit(const FitReport& rep) {
  std::cout << "block " << (rep.block == Block::G ? "G" : "R") << ": loglik " << format_double(rep.loglik)
            << ", iterations " << rep.iterations << ", recentering rounds " << rep.recentering_rounds
            << ", gradient " << rep.gradient_norm << '\n';
  for (Eigen::Index k = 0; k < rep.estimates.size(); ++k)
    std::cout << "  " << rep.parameter_names[static_cast<std::size_t>(k)] << ' ' << rep.estimates[k] << " ("
              << rep.standard_errors[k] << ")\n";
}

int cmd_fit_measurement(const Options& o, Run*& run) {
  Config c = require_config(o);
  if (o.out.empty()) throw Error(ErrorCategory::config, "--out (measurement file) is required");
  static Run r("fit-measurement", o.out + ".manifest.json");
  run = &r;
  if (o.threads) c.fit.threads = *o.threads;
  if (o.quad_order) c.fit.quad_order = *o.quad_order;
  r.manifest().config_hash = sha256_hex(c.canonical + overrides_text(o));
  r.manifest().threads = c.fit.threads;
  const std::string dp = dataset_path(o, c);
  r.input("config", o.config);
  r.input("dataset", dp);
  r.begin();

  const Dataset data = load_dataset(dp, c.schema);
  const MeasurementParams pattern = c.measurement_pattern(data);
  FitReport rg, rr;
  const MeasurementParams phi = fit_measurement(data, pattern, c.fit, &rg, &rr);
  print_fit(rg);
  print_fit(rr);
  {
    auto f = open_output(o.out);
    write_measurement(f, phi, r.id());
  }
  r.output("measurement", o.out);
  r.manifest().statistics["loglik_G"] = rg.loglik;
  r.manifest().statistics["loglik_R"] = rr.loglik;
  r.manifest().statistics["iterations_G"] = rg.iterations;
  r.manifest().statistics["iterations_R"] = rr.iterations;
  return 0;
}

int cmd_fit(const Options& o, Run*& run) {
  Config c = require_config(o);
  if (o.out.empty()) throw Error(ErrorCategory::config, "--out (draws file) is required");
  if (o.measurement.empty()) throw Error(ErrorCategory::config, "--measurement is required");
  static Run r("fit", o.out + ".manifest.json");
  run = &r;
  ChainConfig& cc = c.chain;
  if (o.threads) cc.threads = *o.threads;
  if (o.chains) cc.n_chains = *o.chains;
  if (o.iterations) cc.iterations = *o.iterations;
  if (o.burn_in) cc.burn_in = *o.burn_in;
  if (o.thin) cc.thin = *o.thin;
  cc.seed = resolve_seed(o, c.seed, r.manifest());
  cc.validate();
  r.manifest().config_hash = sha256_hex(c.canonical + overrides_text(o));
  r.manifest().threads = cc.threads;
  const std::string dp = dataset_path(o, c);
  r.input("config", o.config);
  r.input("dataset", dp);
  r.input("measurement", o.measurement);
  r.begin();

  const Dataset data = load_dataset(dp, c.schema);
  const MeasurementParams phi = load_measurement(o.measurement);
  const PosteriorDraws draws = run_chains(data, phi, cc);
  {
    auto f = open_output(o.out);
    write_draws(f, draws, r.id());
    if (!f) throw Error(ErrorCategory::io, "failed writing '" + o.out + "'");
  }
  r.output("draws", o.out);
  auto& st = r.manifest().statistics;
  ars::Stats eta, gamma;
  for (const auto& ch : draws.chains) {
    eta += ch.eta_stats;
    gamma += ch.gamma_stats;
    st["chain" + std::to_string(ch.chain) + "_seconds"] = ch.seconds;
  }
  st["ars_eta_draws"] = static_cast<double>(eta.draws);
  st["ars_eta_acceptance"] = eta.acceptance_rate();
  st["ars_eta_evaluations_per_draw"] = eta.draws ? static_cast<double>(eta.evaluations) / eta.draws : 0.0;
  st["ars_gamma_draws"] = static_cast<double>(gamma.draws);
  st["ars_gamma_acceptance"] = gamma.acceptance_rate();
  st["ars_gamma_evaluations_per_draw"] = gamma.draws ? static_cast<double>(gamma.evaluations) / gamma.draws : 0.0;
  st["stored_draws"] = static_cast<double>(draws.total_draws());
  std::cout << "wrote " << draws.total_draws() << " draws from " << draws.chains.size() << " chain(s) to " << o.out
            << " (seed " << cc.seed << ")\n";
  return 0;
}

int cmd_summarize(const Options& o, Run*& run) {
  if (o.draws.empty()) throw Error(ErrorCategory::config, "--draws is required");
  static Run r("summarize", (o.out.empty() ? o.draws + ".summary" : o.out) + ".manifest.json");
  if (!o.out.empty()) run = &r;
  r.input("draws", o.draws);
  if (run) r.begin();
  const PosteriorDraws draws = load_draws(o.draws);
  const SummaryTable t = summarize(draws);
  write_summary_text(std::cout, t);
  if (!o.out.empty()) {
    {
      auto f = open_output(o.out + ".csv");
      f << "# run " << r.id() << '\n';
      write_summary_csv(f, t);
    }
    {
      auto f = open_output(o.out + ".txt");
      write_summary_text(f, t);
    }
    r.output("summary_csv", o.out + ".csv");
    r.output("summary_text", o.out + ".txt");
  }
  return 0;
}

int cmd_pi_table(const Options& o, Run*& run) {
  const Config c = require_config(o);
  if (o.draws.empty()) throw Error(ErrorCategory::config, "--draws is required");
  static Run r("pi-table", (o.out.empty() ? o.draws + ".pi" : o.out) + ".manifest.json");
  if (!o.out.empty()) run = &r;
  r.manifest().config_hash = sha256_hex(c.canonical + overrides_text(o));
  const std::string dp = dataset_path(o, c);
  r.input("config", o.config);
  r.input("dataset", dp);
  r.input("draws", o.draws);
  if (run) r.begin();

  std::vector<PiSetting> settings;
  if (c.pi_sample_row) settings.push_back({"Sample", {}, {}, false});
  settings.insert(settings.end(), c.pi_settings.begin(), c.pi_settings.end());
  for (const auto& s : o.settings) settings.push_back(parse_pi_setting(s));
  const Dataset data = load_dataset(dp, c.schema);
  const PosteriorDraws draws = load_draws(o.draws);
  const PiTable t = pi_table(draws, data, settings, o.threads.value_or(1));
  write_pi_table_text(std::cout, t);
  if (!o.out.empty()) {
    {
      auto f = open_output(o.out + ".csv");
      f << "# run " << r.id() << '\n';
      write_pi_table_csv(f, t);
    }
    {
      auto f = open_output(o.out + ".txt");
      write_pi_table_text(f, t);
    }
    r.output("pi_csv", o.out + ".csv");
    r.output("pi_text", o.out + ".txt");
  }
  return 0;
}

int cmd_loglik(const Options& o) {
  const Config c = require_config(o);
  if (o.measurement.empty() || o.structural.empty())
    throw Error(ErrorCategory::config, "--measurement and --structural are required");
  const Dataset data = load_dataset(dataset_path(o, c), c.schema);
  const MeasurementParams phi = load_measurement(o.measurement);
  const StructuralParams psi = load_structural(o.structural, data.covariate_names);
  const double ll = full_loglik_oracle(data, phi, psi, o.quad_order.value_or(kDefaultQuadOrder));
  std::cout << format_double(ll) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"zidyad: zero-inflated bivariate latent-variable models for dyadic binary items"};
  app.require_subcommand(0, 1);
  Options o;
  app.add_option("--verify-manifest", o.verify, "Re-hash the inputs and outputs recorded in a manifest and exit");

  const auto common = [&](CLI::App* s) {
    s->add_option("--config", o.config, "Configuration file (INI)");
    s->add_option("--data", o.data, "Dataset CSV (overrides [dataset] path)");
  };
  auto* sim = app.add_subcommand("simulate", "Simulate a dataset from parameter files");
  sim->add_option("--config", o.config, "Configuration file with a [simulate] section")->required();
  sim->add_option("--seed", o.seed, "Random seed");
  sim->add_option("--threads", o.threads, "Worker threads");
  sim->add_option("--out", o.out, "Output directory")->required();

  auto* fm = app.add_subcommand("fit-measurement", "First-step maximum likelihood for both item blocks");
  common(fm);
  fm->add_option("--threads", o.threads, "Worker threads");
  fm->add_option("--quad-order", o.quad_order, "Gauss-Hermite order");
  fm->add_option("--out", o.out, "Measurement-parameter file to write")->required();

  auto* fit = app.add_subcommand("fit", "Second-step MCMC for the structural parameters");
  common(fit);
  fit->add_option("--measurement", o.measurement, "Measurement-parameter file")->required();
  fit->add_option("--seed", o.seed, "Random seed");
  fit->add_option("--threads", o.threads, "Worker threads");
  fit->add_option("--chains", o.chains, "Number of chains");
  fit->add_option("--iterations", o.iterations, "Iterations per chain (including burn-in)");
  fit->add_option("--burn-in", o.burn_in, "Burn-in iterations");
  fit->add_option("--thin", o.thin, "Thinning interval");
  fit->add_option("--out", o.out, "Draws file to write")->required();

  auto* sum = app.add_subcommand("summarize", "Posterior summary with R-hat and ESS");
  sum->add_option("--draws", o.draws, "Draws file")->required();
  sum->add_option("--out", o.out, "Output prefix for .csv and .txt tables");

  auto* pit = app.add_subcommand("pi-table", "Fitted latent-class probabilities and odds ratios");
  common(pit);
  pit->add_option("--draws", o.draws, "Draws file")->required();
  pit->add_option("--setting", o.settings, "Extra setting 'label: col=value[, ...][; group=g][; reference]'");
  pit->add_option("--threads", o.threads, "Worker threads");
  pit->add_option("--out", o.out, "Output prefix for .csv and .txt tables");

  auto* ll = app.add_subcommand("loglik", "Evaluate the full marginal log-likelihood by quadrature");
  common(ll);
  ll->add_option("--measurement", o.measurement, "Measurement-parameter file")->required();
  ll->add_option("--structural", o.structural, "Structural-parameter file")->required();
  ll->add_option("--quad-order", o.quad_order, "Gauss-Hermite order per dimension");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error[usage]: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  if (!o.verify.empty()) {
    try {
      const VerifyResult v = verify_manifest(o.verify);
      for (const auto& m : v.messages) std::cout << m << '\n';
      std::cout << (v.ok ? "verified" : "verification failed") << '\n';
      return v.ok ? 0 : 1;
    } catch (const Error& e) {
      std::cerr << "error[" << to_string(e.category()) << "]: " << e.what() << '\n';
      return 1;
    }
  }
  if (app.get_subcommands().empty()) {
    std::cerr << app.help();
    return 2;
  }

  Run* run = nullptr;
  try {
    int status = 0;
    if (*sim) status = cmd_simulate(o, run);
    else if (*fm) status = cmd_fit_measurement(o, run);
    else if (*fit) status = cmd_fit(o, run);
    else if (*sum) status = cmd_summarize(o, run);
    else if (*pit) status = cmd_pi_table(o, run);
    else if (*ll) status = cmd_loglik(o);
    if (run) run->finish(status);
    return status;
  } catch (const Error& e) {
    std::cerr << "error[" << to_string(e.category()) << "]: " << e.what() << '\n';
    if (run) {
      try {
        run->finish(1, &e);
      } catch (...) {
      }
    }
    return 1;
  } catch (const std::exception& e) {
    const Error wrapped(ErrorCategory::io, e.what());
    std::cerr << "error[io]: " << e.what() << '\n';
    if (run) {
      try {
        run->finish(1, &wrapped);
      } catch (...) {
      }
    }
    return 1;
  }
}
