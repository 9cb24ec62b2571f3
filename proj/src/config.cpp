#include "zidyad/config.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "zidyad/error.hpp"
#include "zidyad/manifest.hpp"

namespace zidyad {

namespace {

namespace pt = boost::property_tree;

[[noreturn]] void config_error(const std::string& m) { throw Error(ErrorCategory::config, m); }

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> k{
      {"dataset", {"path", "covariates", "z_columns", "items_g", "items_r", "missing_token", "add_intercept"}},
      {"measurement", {"anchor_g", "anchor_r", "free_g", "free_r", "quad_order", "max_iter", "grad_tol", "threads"}},
      {"prior", {"sigma2_beta", "sigma2_gamma", "wishart_scale", "wishart_df"}},
      {"chain", {"iterations", "burn_in", "thin", "chains", "seed", "threads", "ars_max_iter"}},
      {"simulate",
       {"n", "seed", "threads", "covariates", "z_columns", "measurement", "structural", "missing_g", "missing_r",
        "linked_column", "linked_extra_g", "linked_extra_r"}},
      {"pi_table", {"sample"}},
  };
  return k;
}

class Section {
 public:
  Section(const pt::ptree* tree, std::string name) : tree_(tree), name_(std::move(name)) {}

  std::optional<std::string> get(const std::string& key) const {
    if (!tree_) return std::nullopt;
    const auto v = tree_->get_optional<std::string>(pt::ptree::path_type(key, '\0'));
    if (!v) return std::nullopt;
    return trim(*v);
  }
  std::string str(const std::string& key, const std::string& def = {}) const { return get(key).value_or(def); }
  double num(const std::string& key, double def) const {
    const auto v = get(key);
    if (!v) return def;
    try {
      return parse_double(*v, name_ + "." + key);
    } catch (const Error& e) {
      config_error(e.what());
    }
  }
  long long integer(const std::string& key, long long def) const {
    const double v = num(key, static_cast<double>(def));
    if (v != static_cast<double>(static_cast<long long>(v))) config_error(name_ + "." + key + " must be an integer");
    return static_cast<long long>(v);
  }
  std::size_t count(const std::string& key, std::size_t def) const {
    const long long v = integer(key, static_cast<long long>(def));
    if (v < 0) config_error(name_ + "." + key + " must be non-negative");
    return static_cast<std::size_t>(v);
  }
  std::optional<std::uint64_t> seed(const std::string& key) const {
    const auto v = get(key);
    if (!v) return std::nullopt;
    try {
      std::size_t pos = 0;
      const auto s = std::stoull(*v, &pos);
      if (pos != v->size()) throw std::invalid_argument("trailing");
      return s;
    } catch (const std::exception&) {
      config_error(name_ + "." + key + " must be an unsigned 64-bit integer");
    }
  }
  bool flag(const std::string& key, bool def) const {
    const auto v = get(key);
    if (!v) return def;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    config_error(name_ + "." + key + " must be true or false");
  }
  std::vector<std::string> list(const std::string& key) const { return split_list(str(key)); }
  std::vector<double> numbers(const std::string& key) const {
    std::vector<double> out;
    for (const auto& s : list(key)) {
      try {
        out.push_back(parse_double(s, name_ + "." + key));
      } catch (const Error& e) {
        config_error(e.what());
      }
    }
    return out;
  }

 private:
  const pt::ptree* tree_;
  std::string name_;
};

std::vector<std::pair<std::string, std::string>> parse_free(const std::string& s, const std::string& key) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& entry : split_list(s)) {
    const auto pos = entry.find(':');
    if (pos == std::string::npos) config_error(key + ": expected item:column, got '" + entry + "'");
    out.emplace_back(trim(entry.substr(0, pos)), trim(entry.substr(pos + 1)));
  }
  return out;
}

std::string resolve(const std::string& path, const std::string& source) {
  if (path.empty() || source.empty()) return path;
  const std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  return (std::filesystem::path(source).parent_path() / p).lexically_normal().string();
}

std::vector<ItemMeasurement> block_pattern(const std::vector<std::string>& names, const std::string& anchor,
                                           const std::vector<std::pair<std::string, std::string>>& free,
                                           const std::vector<std::string>& z_names, const char* block) {
  std::vector<ItemMeasurement> items;
  for (const auto& n : names) items.push_back(make_item(n, z_names.size()));
  const std::string a = anchor.empty() ? names.front() : anchor;
  const auto it = std::find(names.begin(), names.end(), a);
  if (it == names.end()) config_error(std::string("anchor_") + block + " '" + a + "' is not an item of the block");
  items[static_cast<std::size_t>(it - names.begin())].fixed_anchor = true;
  for (const auto& [item, col] : free) {
    const auto ii = std::find(names.begin(), names.end(), item);
    if (ii == names.end()) config_error(std::string("free_") + block + ": unknown item '" + item + "'");
    const auto zc = std::find(z_names.begin(), z_names.end(), col);
    if (zc == z_names.end()) config_error(std::string("free_") + block + ": '" + col + "' is not a z column");
    items[static_cast<std::size_t>(ii - names.begin())].free[static_cast<std::size_t>(zc - z_names.begin())] = 1;
  }
  return items;
}

}  // namespace

PiSetting parse_pi_setting(const std::string& spec) {
  PiSetting s;
  const auto colon = spec.find(':');
  if (colon == std::string::npos) config_error("pi-table setting '" + spec + "' lacks 'label:'");
  s.label = trim(spec.substr(0, colon));
  if (s.label.empty()) config_error("pi-table setting has an empty label");
  const auto parts = split_list(spec.substr(colon + 1), ';');
  if (parts.empty()) config_error("pi-table setting '" + s.label + "' has no overrides");
  for (const auto& o : split_list(parts[0])) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) config_error("pi-table setting '" + s.label + "': expected column=value");
    CovariateOverride ov;
    ov.column = trim(o.substr(0, eq));
    try {
      ov.value = parse_double(o.substr(eq + 1), "override " + ov.column);
    } catch (const Error& e) {
      config_error(e.what());
    }
    s.overrides.push_back(ov);
  }
  for (std::size_t k = 1; k < parts.size(); ++k) {
    if (parts[k] == "reference")
      s.reference = true;
    else if (parts[k].rfind("group=", 0) == 0)
      s.group = trim(parts[k].substr(6));
    else
      config_error("pi-table setting '" + s.label + "': unknown option '" + parts[k] + "'");
  }
  return s;
}

Config parse_config(const std::string& text, const std::string& source) {
  pt::ptree tree;
  try {
    std::istringstream is(text);
    pt::ini_parser::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    config_error((source.empty() ? std::string("config") : source) + ": " + e.message() + " at line " +
                 std::to_string(e.line()));
  }
  Config c;
  c.source = source;

  std::map<std::string, std::map<std::string, std::string>> flat;
  for (const auto& [sec, body] : tree) {
    const auto known = known_keys().find(sec);
    if (known == known_keys().end()) config_error("unknown config section [" + sec + "]");
    if (body.empty() && !body.data().empty()) config_error("key '" + sec + "' outside any section");
    for (const auto& [key, val] : body) {
      const bool setting = sec == "pi_table" && key.rfind("setting", 0) == 0;
      if (!setting && !known->second.count(key)) config_error("unknown key '" + key + "' in [" + sec + "]");
      flat[sec][key] = trim(val.data());
    }
  }
  std::ostringstream canon;
  for (const auto& [sec, kv] : flat)
    for (const auto& [k, v] : kv) canon << sec << '.' << k << '=' << v << '\n';
  c.canonical = canon.str();

  const auto section = [&](const char* name) {
    const auto it = tree.find(name);
    return Section(it == tree.not_found() ? nullptr : &it->second, name);
  };

  const Section ds = section("dataset");
  c.has_dataset = tree.find("dataset") != tree.not_found();
  c.dataset_path = resolve(ds.str("path"), source);
  c.schema.covariates = ds.list("covariates");
  c.schema.z_columns = ds.list("z_columns");
  c.schema.items_g = ds.list("items_g");
  c.schema.items_r = ds.list("items_r");
  c.schema.missing_token = ds.str("missing_token", "NA");
  c.schema.add_intercept = ds.flag("add_intercept", true);

  const Section ms = section("measurement");
  c.anchor_g = ms.str("anchor_g");
  c.anchor_r = ms.str("anchor_r");
  c.free_g = parse_free(ms.str("free_g"), "free_g");
  c.free_r = parse_free(ms.str("free_r"), "free_r");
  c.fit.quad_order = ms.count("quad_order", c.fit.quad_order);
  c.fit.max_iter = static_cast<int>(ms.count("max_iter", static_cast<std::size_t>(c.fit.max_iter)));
  c.fit.grad_tol = ms.num("grad_tol", c.fit.grad_tol);
  c.fit.threads = static_cast<int>(ms.count("threads", 1));

  const Section ps = section("prior");
  c.prior.sigma2_beta = ps.num("sigma2_beta", c.prior.sigma2_beta);
  c.prior.sigma2_gamma = ps.num("sigma2_gamma", c.prior.sigma2_gamma);
  c.prior.wishart_df = ps.num("wishart_df", c.prior.wishart_df);
  if (ps.get("wishart_scale")) {
    const auto v = ps.numbers("wishart_scale");
    if (v.size() == 3)
      c.prior.wishart_scale << v[0], v[1], v[1], v[2];
    else if (v.size() == 4)
      c.prior.wishart_scale << v[0], v[1], v[2], v[3];
    else
      config_error("prior.wishart_scale needs 3 (s11, s12, s22) or 4 values");
  }
  c.prior.validate();

  const Section cs = section("chain");
  c.chain.iterations = cs.count("iterations", c.chain.iterations);
  c.chain.burn_in = cs.count("burn_in", c.chain.burn_in);
  c.chain.thin = cs.count("thin", c.chain.thin);
  c.chain.n_chains = cs.count("chains", c.chain.n_chains);
  c.chain.threads = static_cast<int>(cs.count("threads", 1));
  c.chain.ars_max_iter = static_cast<int>(cs.count("ars_max_iter", static_cast<std::size_t>(c.chain.ars_max_iter)));
  c.chain.prior = c.prior;
  c.seed = cs.seed("seed");

  const Section ss = section("simulate");
  c.has_simulate = tree.find("simulate") != tree.not_found();
  auto& sim = c.simulate;
  sim.n = ss.count("n", 0);
  sim.seed = ss.seed("seed");
  sim.threads = static_cast<int>(ss.count("threads", 1));
  for (const auto& g : ss.list("covariates")) {
    const auto parts = split_list(g, ':');
    if (parts.size() < 2 || parts.size() > 3) config_error("simulate.covariates: expected name:kind[:probability]");
    CovariateGenerator gen;
    gen.name = parts[0];
    gen.kind = parse_covariate_kind(parts[1]);
    if (parts.size() == 3) gen.probability = parse_double(parts[2], "simulate.covariates");
    if (gen.kind == CovariateGenerator::Kind::binary && parts.size() != 3)
      config_error("simulate.covariates: binary covariate '" + gen.name + "' needs a probability");
    sim.covariates.push_back(gen);
  }
  sim.z_columns = ss.list("z_columns");
  sim.measurement_path = resolve(ss.str("measurement"), source);
  sim.structural_path = resolve(ss.str("structural"), source);
  sim.missing_g = ss.numbers("missing_g");
  sim.missing_r = ss.numbers("missing_r");
  sim.linked_column = ss.str("linked_column");
  if (!sim.linked_column.empty()) {
    LinkedMissingness l;
    l.extra_g = ss.num("linked_extra_g", 0.0);
    l.extra_r = ss.num("linked_extra_r", 0.0);
    sim.linked = l;
  }

  const Section pis = section("pi_table");
  c.pi_sample_row = pis.flag("sample", true);
  if (const auto it = tree.find("pi_table"); it != tree.not_found()) {
    std::vector<std::pair<long, std::string>> settings;
    for (const auto& [key, val] : it->second) {
      if (key.rfind("setting", 0) != 0) continue;
      const std::string suffix = key.substr(7);
      if (suffix.empty() || !std::all_of(suffix.begin(), suffix.end(), ::isdigit))
        config_error("pi_table keys must be named setting<N>");
      settings.emplace_back(std::stol(suffix), val.data());
    }
    std::sort(settings.begin(), settings.end());
    for (const auto& [k, spec] : settings) c.pi_settings.push_back(parse_pi_setting(spec));
  }
  return c;
}

Config load_config(const std::string& path) {
  auto f = open_input(path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), path);
}

std::string Config::hash() const { return sha256_hex(canonical); }

MeasurementParams Config::measurement_pattern(const Dataset& data) const {
  MeasurementParams p;
  p.z_names = data.z_names();
  p.items_g = block_pattern(data.y_g.names, anchor_g, free_g, p.z_names, "g");
  p.items_r = block_pattern(data.y_r.names, anchor_r, free_r, p.z_names, "r");
  p.validate();
  return p;
}

}  // namespace zidyad
