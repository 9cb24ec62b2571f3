#include "zidyad/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include <boost/tokenizer.hpp>

#include "zidyad/error.hpp"

namespace zidyad {

namespace {

[[noreturn]] void io_error(const std::string& m) { throw Error(ErrorCategory::io, m); }
[[noreturn]] void schema_error(const std::string& m) { throw Error(ErrorCategory::schema, m); }

std::vector<std::string> parse_csv_line(const std::string& line, const std::string& where) {
  using Tok = boost::tokenizer<boost::escaped_list_separator<char>>;
  std::vector<std::string> out;
  try {
    Tok tok(line, boost::escaped_list_separator<char>('\\', ',', '"'));
    for (const auto& t : tok) out.push_back(trim(t));
  } catch (const boost::escaped_list_error& e) {
    io_error("malformed CSV at " + where + ": " + e.what());
  }
  return out;
}

bool next_line(std::istream& is, std::string& line) {
  if (!std::getline(is, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

std::vector<std::string> words(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> w;
  std::string t;
  while (ss >> t) w.push_back(t);
  return w;
}

void check_name(const std::string& n, const char* what) {
  if (n.empty() || std::any_of(n.begin(), n.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); }))
    schema_error(std::string(what) + " name '" + n + "' is empty or contains whitespace");
}

}  // namespace

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::string cur;
  std::istringstream ss(s);
  while (std::getline(ss, cur, sep)) out.push_back(trim(cur));
  return out;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const std::string& what) {
  const std::string t = trim(s);
  double v = 0.0;
  const char* first = t.data();
  if (!t.empty() && t[0] == '+') ++first;
  const auto res = std::from_chars(first, t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size())
    throw Error(ErrorCategory::io, "cannot parse number '" + t + "' (" + what + ")");
  return v;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) io_error("cannot open '" + path + "' for reading");
  return f;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) io_error("cannot open '" + path + "' for writing");
  return f;
}

Dataset read_dataset(std::istream& is, const DatasetSchema& schema, const std::string& source) {
  if (schema.items_g.empty() || schema.items_r.empty()) schema_error("schema must name items for both blocks");
  std::string line;
  std::size_t line_no = 0;
  do {
    if (!next_line(is, line)) io_error(source + ": empty file");
    ++line_no;
  } while (!line.empty() && line[0] == '#');
  const auto header = parse_csv_line(line, source + " line " + std::to_string(line_no));
  std::map<std::string, std::size_t> col;
  for (std::size_t k = 0; k < header.size(); ++k) {
    if (!col.emplace(header[k], k).second) schema_error(source + ": duplicate column '" + header[k] + "'");
  }
  const auto find = [&](const std::string& name) {
    const auto it = col.find(name);
    if (it == col.end()) schema_error(source + ": column '" + name + "' not found");
    return it->second;
  };
  std::vector<std::size_t> cov_idx, g_idx, r_idx;
  for (const auto& c : schema.covariates) cov_idx.push_back(find(c));
  for (const auto& c : schema.items_g) g_idx.push_back(find(c));
  for (const auto& c : schema.items_r) r_idx.push_back(find(c));

  std::vector<std::string> names;
  if (schema.add_intercept) names.push_back("intercept");
  names.insert(names.end(), schema.covariates.begin(), schema.covariates.end());
  std::vector<std::size_t> z_cols;
  for (const auto& z : schema.z_columns) {
    const auto it = std::find(names.begin(), names.end(), z);
    if (it == names.end()) schema_error("non-equivalence column '" + z + "' is not a covariate");
    z_cols.push_back(static_cast<std::size_t>(it - names.begin()));
  }

  std::vector<double> xs;
  ItemMatrix yg, yr;
  yg.cols = schema.items_g.size();
  yr.cols = schema.items_r.size();
  yg.names = schema.items_g;
  yr.names = schema.items_r;
  std::size_t row = 0;
  while (next_line(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = source + " line " + std::to_string(line_no);
    const auto f = parse_csv_line(line, where);
    if (f.size() != header.size())
      io_error(where + ": expected " + std::to_string(header.size()) + " fields, found " + std::to_string(f.size()));
    if (schema.add_intercept) xs.push_back(1.0);
    for (std::size_t k = 0; k < cov_idx.size(); ++k) {
      const std::string& v = f[cov_idx[k]];
      if (v.empty() || v == schema.missing_token)
        throw Error(ErrorCategory::data, where + " (row " + std::to_string(row + 1) + "): missing covariate '" +
                                             schema.covariates[k] + "'");
      const double x = parse_double(v, where + ", column " + schema.covariates[k]);
      if (!std::isfinite(x)) throw Error(ErrorCategory::data, where + ": non-finite covariate");
      xs.push_back(x);
    }
    for (auto [idx, m] : {std::pair{&g_idx, &yg}, std::pair{&r_idx, &yr}}) {
      for (std::size_t k = 0; k < idx->size(); ++k) {
        const std::string& v = f[(*idx)[k]];
        if (v == schema.missing_token || (v.empty() && schema.missing_token.empty())) {
          m->values.push_back(kMissing);
          continue;
        }
        double d;
        try {
          d = parse_double(v, where);
        } catch (const Error&) {
          throw Error(ErrorCategory::data, where + ": non-binary item '" + m->names[k] + "' value '" + v + "'");
        }
        if (d != 0.0 && d != 1.0)
          throw Error(ErrorCategory::data, where + ": non-binary item '" + m->names[k] + "' value '" + v + "'");
        m->values.push_back(static_cast<std::int8_t>(d));
      }
    }
    ++row;
  }
  if (row == 0) throw Error(ErrorCategory::data, source + ": dataset has no rows");
  yg.rows = yr.rows = row;
  const std::size_t q = names.size();
  Eigen::MatrixXd X(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(q));
  for (std::size_t i = 0; i < row; ++i)
    for (std::size_t r = 0; r < q; ++r) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(r)) = xs[i * q + r];
  for (std::size_t i = 0; i < row; ++i)
    if (yg.all_missing(i) && yr.all_missing(i))
      throw Error(ErrorCategory::data, source + ": row " + std::to_string(i + 1) + " has all items missing in both blocks");
  if (!schema.add_intercept) {
    for (std::size_t i = 0; i < row; ++i)
      if (X(static_cast<Eigen::Index>(i), 0) != 1.0)
        schema_error(source + ": without add_intercept the first covariate must be constant 1");
  }
  return make_dataset(std::move(names), std::move(X), std::move(z_cols), std::move(yg), std::move(yr));
}

Dataset load_dataset(const std::string& path, const DatasetSchema& schema) {
  auto f = open_input(path);
  return read_dataset(f, schema, path);
}

void write_dataset(std::ostream& os, const Dataset& data, const std::string& missing_token, const std::string& run_id) {
  if (!run_id.empty()) os << "# run " << run_id << '\n';
  std::vector<std::string> header(data.covariate_names.begin() + 1, data.covariate_names.end());
  header.insert(header.end(), data.y_g.names.begin(), data.y_g.names.end());
  header.insert(header.end(), data.y_r.names.begin(), data.y_r.names.end());
  for (std::size_t k = 0; k < header.size(); ++k) os << (k ? "," : "") << header[k];
  os << '\n';
  for (std::size_t i = 0; i < data.n(); ++i) {
    bool first = true;
    const auto sep = [&] {
      if (!first) os << ',';
      first = false;
    };
    for (std::size_t r = 1; r < data.q(); ++r) {
      sep();
      os << format_double(data.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(r)));
    }
    for (const ItemMatrix* m : {&data.y_g, &data.y_r})
      for (auto v : m->row(i)) {
        sep();
        if (v == kMissing)
          os << missing_token;
        else
          os << static_cast<int>(v);
      }
    os << '\n';
  }
}

void save_dataset(const std::string& path, const Dataset& data, const std::string& missing_token,
                  const std::string& run_id) {
  auto f = open_output(path);
  write_dataset(f, data, missing_token, run_id);
  if (!f) io_error("failed writing '" + path + "'");
}

DatasetSchema schema_for(const Dataset& data, const std::string& missing_token) {
  DatasetSchema s;
  s.covariates.assign(data.covariate_names.begin() + 1, data.covariate_names.end());
  s.z_columns = data.z_names();
  s.items_g = data.y_g.names;
  s.items_r = data.y_r.names;
  s.missing_token = missing_token;
  return s;
}

void write_latent_state(std::ostream& os, const LatentState& s) {
  os << "dyad,xi_G,xi_R,eta_G,eta_R\n";
  for (std::size_t i = 0; i < s.size(); ++i)
    os << i + 1 << ',' << int(s.xi_g[i]) << ',' << int(s.xi_r[i]) << ',' << format_double(s.eta_g[i]) << ','
       << format_double(s.eta_r[i]) << '\n';
}

LatentState read_latent_state(std::istream& is) {
  std::string line;
  if (!next_line(is, line) || trim(line) != "dyad,xi_G,xi_R,eta_G,eta_R") schema_error("latent-state file header mismatch");
  LatentState s;
  std::size_t ln = 1;
  while (next_line(is, line)) {
    ++ln;
    if (trim(line).empty()) continue;
    const auto f = parse_csv_line(line, "latent-state line " + std::to_string(ln));
    if (f.size() != 5) io_error("latent-state line " + std::to_string(ln) + ": expected 5 fields");
    s.xi_g.push_back(static_cast<std::uint8_t>(parse_double(f[1], "xi_G")));
    s.xi_r.push_back(static_cast<std::uint8_t>(parse_double(f[2], "xi_R")));
    s.eta_g.push_back(parse_double(f[3], "eta_G"));
    s.eta_r.push_back(parse_double(f[4], "eta_R"));
  }
  return s;
}

// Measurement file:
//   format zidyad-measurement 1
//   run <id>                           (optional)
//   z_columns <name>...
//   block G | block R
//   item <name> <anchor 0|1> <tau> <lambda> [<free 0|1> <delta> <zeta>] per Z column
void write_measurement(std::ostream& os, const MeasurementParams& phi, const std::string& run_id) {
  phi.validate();
  os << "format zidyad-measurement 1\n";
  if (!run_id.empty()) os << "run " << run_id << '\n';
  os << "z_columns";
  for (const auto& z : phi.z_names) os << ' ' << z;
  os << '\n';
  for (Block b : {Block::G, Block::R}) {
    os << "block " << (b == Block::G ? "G" : "R") << '\n';
    for (const auto& it : phi.items(b)) {
      check_name(it.name, "item");
      os << "item " << it.name << ' ' << (it.fixed_anchor ? 1 : 0) << ' ' << format_double(it.tau) << ' '
         << format_double(it.lambda);
      for (std::size_t c = 0; c < phi.z_names.size(); ++c)
        os << ' ' << int(it.free[c]) << ' ' << format_double(it.delta[c]) << ' ' << format_double(it.zeta[c]);
      os << '\n';
    }
  }
}

MeasurementParams read_measurement(std::istream& is) {
  std::string line;
  if (!next_line(is, line) || trim(line) != "format zidyad-measurement 1")
    schema_error("not a measurement-parameter file (bad format line)");
  MeasurementParams phi;
  bool have_z = false;
  std::vector<ItemMeasurement>* cur = nullptr;
  std::size_t ln = 1;
  while (next_line(is, line)) {
    ++ln;
    const auto w = words(line);
    if (w.empty() || w[0][0] == '#') continue;
    const std::string where = "measurement file line " + std::to_string(ln);
    if (w[0] == "run") continue;
    if (w[0] == "z_columns") {
      phi.z_names.assign(w.begin() + 1, w.end());
      have_z = true;
    } else if (w[0] == "block") {
      if (w.size() != 2 || (w[1] != "G" && w[1] != "R")) schema_error(where + ": expected 'block G' or 'block R'");
      cur = w[1] == "G" ? &phi.items_g : &phi.items_r;
    } else if (w[0] == "item") {
      if (!cur || !have_z) schema_error(where + ": item before z_columns/block");
      const std::size_t nz = phi.z_names.size();
      if (w.size() != 5 + 3 * nz) schema_error(where + ": wrong field count for item");
      ItemMeasurement it = make_item(w[1], nz);
      it.fixed_anchor = w[2] == "1";
      if (w[2] != "0" && w[2] != "1") schema_error(where + ": anchor flag must be 0 or 1");
      it.tau = parse_double(w[3], where);
      it.lambda = parse_double(w[4], where);
      for (std::size_t c = 0; c < nz; ++c) {
        if (w[5 + 3 * c] != "0" && w[5 + 3 * c] != "1") schema_error(where + ": free flag must be 0 or 1");
        it.free[c] = w[5 + 3 * c] == "1";
        it.delta[c] = parse_double(w[6 + 3 * c], where);
        it.zeta[c] = parse_double(w[7 + 3 * c], where);
      }
      cur->push_back(std::move(it));
    } else {
      schema_error(where + ": unknown record '" + w[0] + "'");
    }
  }
  phi.validate();
  return phi;
}

MeasurementParams load_measurement(const std::string& path) {
  auto f = open_input(path);
  try {
    return read_measurement(f);
  } catch (const Error& e) {
    throw Error(e.category(), path + ": " + e.what());
  }
}

void write_structural(std::ostream& os, const StructuralParams& psi, const std::vector<std::string>& covariates,
                      const std::string& run_id) {
  psi.validate();
  if (psi.q() != covariates.size()) schema_error("structural parameters do not match the covariate list");
  os << "format zidyad-structural 1\n";
  if (!run_id.empty()) os << "run " << run_id << '\n';
  os << "covariates";
  for (const auto& c : covariates) {
    check_name(c, "covariate");
    os << ' ' << c;
  }
  os << '\n';
  const auto names = structural_names(covariates);
  const auto v = psi.flatten();
  for (std::size_t k = 0; k < v.size(); ++k) os << names[k] << ' ' << format_double(v[k]) << '\n';
}

StructuralParams read_structural(std::istream& is, const std::vector<std::string>& covariates) {
  std::string line;
  if (!next_line(is, line) || trim(line) != "format zidyad-structural 1")
    schema_error("not a structural-parameter file (bad format line)");
  std::vector<std::string> cov;
  std::map<std::string, double> values;
  std::size_t ln = 1;
  while (next_line(is, line)) {
    ++ln;
    const auto w = words(line);
    if (w.empty() || w[0][0] == '#' || w[0] == "run") continue;
    if (w[0] == "covariates") {
      cov.assign(w.begin() + 1, w.end());
      continue;
    }
    if (w.size() != 2) schema_error("structural file line " + std::to_string(ln) + ": expected '<name> <value>'");
    if (!values.emplace(w[0], parse_double(w[1], "structural file line " + std::to_string(ln))).second)
      schema_error("structural file: duplicate parameter '" + w[0] + "'");
  }
  if (cov != covariates) schema_error("structural file covariates do not match the dataset");
  const auto names = structural_names(covariates);
  std::vector<double> v;
  for (const auto& n : names) {
    const auto it = values.find(n);
    if (it == values.end()) schema_error("structural file lacks parameter '" + n + "'");
    v.push_back(it->second);
  }
  if (values.size() != names.size()) schema_error("structural file has unknown parameters");
  StructuralParams psi = StructuralParams::unflatten(v, covariates.size());
  psi.validate();
  return psi;
}

StructuralParams load_structural(const std::string& path, const std::vector<std::string>& covariates) {
  auto f = open_input(path);
  try {
    return read_structural(f, covariates);
  } catch (const Error& e) {
    throw Error(e.category(), path + ": " + e.what());
  }
}

// Draws file: '#'-prefixed header records, then CSV with columns chain,draw,<parameters>.
void write_draws(std::ostream& os, const PosteriorDraws& draws, const std::string& run_id) {
  const auto names = structural_names(draws.covariate_names);
  os << "# format zidyad-draws 1\n";
  os << "# run " << (run_id.empty() ? "-" : run_id) << '\n';
  os << "# generator " << draws.generator << '\n';
  os << "# seed " << draws.seed << '\n';
  os << "# isa " << (draws.isa.empty() ? "-" : draws.isa) << '\n';
  os << "# chains " << draws.chains.size() << '\n';
  os << "# covariates";
  for (const auto& c : draws.covariate_names) os << ' ' << c;
  os << '\n';
  os << "# order beta_G[q] beta_R[q] sigma2_G sigma2_R rho_GR gamma_01[q] gamma_10[q] gamma_11[q]\n";
  os << "chain,draw";
  for (const auto& n : names) os << ',' << n;
  os << '\n';
  const std::size_t p = draws.n_params();
  for (const auto& c : draws.chains) {
    for (std::size_t d = 0; d < c.size(); ++d) {
      os << c.chain << ',' << c.iteration[d];
      for (std::size_t k = 0; k < p; ++k) os << ',' << format_double(c.values[d * p + k]);
      os << '\n';
    }
  }
}

PosteriorDraws read_draws(std::istream& is, DrawsHeader* header) {
  PosteriorDraws out;
  std::string line;
  bool format_ok = false, have_cov = false;
  std::size_t n_chains = 0;
  std::size_t ln = 0;
  while (next_line(is, line)) {
    ++ln;
    if (line.empty() || line[0] != '#') break;
    const auto w = words(line.substr(1));
    if (w.empty()) continue;
    if (w[0] == "format") format_ok = w.size() == 3 && w[1] == "zidyad-draws" && w[2] == "1";
    if (w[0] == "run" && header && w.size() > 1) header->run_id = w[1] == "-" ? "" : w[1];
    if (w[0] == "generator" && w.size() > 1) out.generator = w[1];
    if (w[0] == "seed" && w.size() > 1) out.seed = std::stoull(w[1]);
    if (w[0] == "isa" && w.size() > 1) out.isa = w[1] == "-" ? "" : w[1];
    if (w[0] == "chains" && w.size() > 1) n_chains = std::stoul(w[1]);
    if (w[0] == "covariates") {
      out.covariate_names.assign(w.begin() + 1, w.end());
      have_cov = true;
    }
  }
  if (!format_ok) schema_error("not a draws file (missing '# format zidyad-draws 1')");
  if (!have_cov) schema_error("draws file lacks the covariates record");
  const auto names = structural_names(out.covariate_names);
  const auto cols = parse_csv_line(line, "draws header");
  std::vector<std::string> expected{"chain", "draw"};
  expected.insert(expected.end(), names.begin(), names.end());
  if (cols != expected) schema_error("draws file column order does not match the documented parameter ordering");
  const std::size_t p = names.size();
  std::map<std::uint32_t, std::size_t> chain_pos;
  while (next_line(is, line)) {
    ++ln;
    if (trim(line).empty()) continue;
    const std::string where = "draws line " + std::to_string(ln);
    const auto f = parse_csv_line(line, where);
    if (f.size() != p + 2) io_error(where + ": wrong field count");
    const auto chain = static_cast<std::uint32_t>(parse_double(f[0], where));
    auto it = chain_pos.find(chain);
    if (it == chain_pos.end()) {
      it = chain_pos.emplace(chain, out.chains.size()).first;
      out.chains.emplace_back();
      out.chains.back().chain = chain;
    }
    ChainDraws& c = out.chains[it->second];
    c.iteration.push_back(static_cast<std::size_t>(parse_double(f[1], where)));
    for (std::size_t k = 0; k < p; ++k) c.values.push_back(parse_double(f[k + 2], where));
  }
  if (n_chains != out.chains.size()) schema_error("draws file chain count does not match its header");
  out.validate();
  return out;
}

PosteriorDraws load_draws(const std::string& path, DrawsHeader* header) {
  auto f = open_input(path);
  try {
    return read_draws(f, header);
  } catch (const Error& e) {
    throw Error(e.category(), path + ": " + e.what());
  }
}

}  // namespace zidyad
