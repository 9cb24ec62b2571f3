#include "zidyad/manifest.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "zidyad/error.hpp"

#ifndef ZIDYAD_VERSION
#define ZIDYAD_VERSION "0.0.0"
#endif

namespace zidyad {

namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1)
      throw Error(ErrorCategory::io, "SHA-256 initialization failed");
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const char* data, std::size_t n) { EVP_DigestUpdate(ctx_, data, n); }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_, md, &len);
    std::ostringstream os;
    for (unsigned i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return os.str();
  }

 private:
  EVP_MD_CTX* ctx_;
};

nlohmann::json digests_to_json(const std::vector<FileDigest>& v) {
  auto a = nlohmann::json::array();
  for (const auto& d : v) a.push_back({{"role", d.role}, {"path", d.path}, {"sha256", d.sha256}});
  return a;
}

std::vector<FileDigest> digests_from_json(const nlohmann::json& a) {
  std::vector<FileDigest> v;
  for (const auto& d : a) v.push_back({d.at("role"), d.at("path"), d.at("sha256")});
  return v;
}

// Run reference recorded inside an output file, if any.
std::string embedded_run_id(const std::string& path) {
  std::ifstream f(path);
  std::string line;
  for (int k = 0; k < 12 && std::getline(f, line); ++k) {
    std::istringstream ss(line);
    std::string a, b;
    ss >> a;
    if (a == "#") ss >> a;
    if (a == "run" && (ss >> b)) return b;
  }
  return {};
}

}  // namespace

std::string library_version() { return ZIDYAD_VERSION; }

std::string sha256_hex(const std::string& bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string sha256_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCategory::io, "cannot open '" + path + "' for hashing");
  Sha256 h;
  char buf[1 << 16];
  while (f) {
    f.read(buf, sizeof buf);
    h.update(buf, static_cast<std::size_t>(f.gcount()));
  }
  return h.hex();
}

FileDigest digest_file(const std::string& role, const std::string& path) { return {role, path, sha256_file(path)}; }

std::string RunManifest::run_id() const {
  std::ostringstream os;
  os << command << '\n' << config_hash << '\n' << seed << '\n';
  for (const auto& d : inputs) os << d.role << ' ' << d.sha256 << '\n';
  return sha256_hex(os.str()).substr(0, 16);
}

std::string manifest_to_json(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["format"] = "zidyad-manifest 1";
  j["run_id"] = m.run_id();
  j["command"] = m.command;
  j["config_hash"] = m.config_hash;
  j["seed"] = m.seed;
  j["seed_generated"] = m.seed_generated;
  j["versions"] = m.versions;
  j["isa"] = m.isa;
  j["threads"] = m.threads;
  j["inputs"] = digests_to_json(m.inputs);
  j["outputs"] = digests_to_json(m.outputs);
  j["wall_seconds"] = m.wall_seconds;
  j["status"] = m.status;
  j["exit_status"] = m.exit_status;
  if (!m.error_category.empty()) j["error"] = {{"category", m.error_category}, {"message", m.error_message}};
  j["statistics"] = m.statistics;
  return j.dump(2) + "\n";
}

RunManifest manifest_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.value("format", "") != "zidyad-manifest 1") throw Error(ErrorCategory::schema, "not a run manifest");
    RunManifest m;
    m.command = j.at("command");
    m.config_hash = j.at("config_hash");
    m.seed = j.at("seed");
    m.seed_generated = j.value("seed_generated", false);
    m.versions = j.value("versions", std::map<std::string, std::string>{});
    m.isa = j.value("isa", "");
    m.threads = j.value("threads", 1);
    m.inputs = digests_from_json(j.at("inputs"));
    m.outputs = digests_from_json(j.value("outputs", nlohmann::json::array()));
    m.wall_seconds = j.value("wall_seconds", 0.0);
    m.status = j.value("status", "");
    m.exit_status = j.value("exit_status", -1);
    if (j.contains("error")) {
      m.error_category = j["error"].value("category", "");
      m.error_message = j["error"].value("message", "");
    }
    m.statistics = j.value("statistics", std::map<std::string, double>{});
    if (j.value("run_id", "") != m.run_id()) throw Error(ErrorCategory::schema, "manifest run id does not match its contents");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCategory::io, std::string("malformed manifest: ") + e.what());
  }
}

void save_manifest(const std::string& path, const RunManifest& m) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCategory::io, "cannot write manifest '" + path + "'");
  f << manifest_to_json(m);
  if (!f) throw Error(ErrorCategory::io, "failed writing manifest '" + path + "'");
}

RunManifest load_manifest(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCategory::io, "cannot open manifest '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return manifest_from_json(ss.str());
}

VerifyResult verify_manifest(const std::string& path) {
  VerifyResult r;
  const RunManifest m = load_manifest(path);
  const std::string id = m.run_id();
  if (m.status != "ok") {
    r.ok = false;
    r.messages.push_back("run did not finish successfully (status " + m.status + ")");
  }
  const auto check = [&](const FileDigest& d, bool output) {
    std::string now;
    try {
      now = sha256_file(d.path);
    } catch (const Error&) {
      r.ok = false;
      r.messages.push_back(d.role + ": " + d.path + " is missing");
      return;
    }
    if (now != d.sha256) {
      r.ok = false;
      r.messages.push_back(d.role + ": " + d.path + " has changed (digest mismatch)");
      return;
    }
    if (output) {
      const std::string ref = embedded_run_id(d.path);
      if (!ref.empty() && ref != id) {
        r.ok = false;
        r.messages.push_back(d.role + ": " + d.path + " references run " + ref + ", expected " + id);
        return;
      }
    }
    r.messages.push_back(d.role + ": " + d.path + " ok");
  };
  for (const auto& d : m.inputs) check(d, false);
  for (const auto& d : m.outputs) check(d, true);
  return r;
}

}  // namespace zidyad
