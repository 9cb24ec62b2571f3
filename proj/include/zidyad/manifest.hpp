#pragma once

// Run manifests: what was run, on which inputs, and how it ended.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace zidyad {

struct FileDigest {
  std::string role;
  std::string path;
  std::string sha256;
};

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  bool seed_generated = false;
  std::map<std::string, std::string> versions;
  std::string isa;
  int threads = 1;
  std::vector<FileDigest> inputs;   // recorded before any computation
  std::vector<FileDigest> outputs;  // recorded after the outputs are closed
  double wall_seconds = 0.0;
  std::string status = "running";  // running | ok | error
  int exit_status = -1;
  std::string error_category;
  std::string error_message;
  std::map<std::string, double> statistics;

  /// Deterministic identifier derived from the command, config hash, seed and
  /// input digests (not from timing), so reruns reproduce it.
  std::string run_id() const;
};

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::string& path);

FileDigest digest_file(const std::string& role, const std::string& path);

std::string manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(const std::string& text);
void save_manifest(const std::string& path, const RunManifest& m);
RunManifest load_manifest(const std::string& path);

struct VerifyResult {
  bool ok = true;
  std::vector<std::string> messages;
};

/// Re-hashes every recorded input and output and checks that outputs carrying
/// a run reference name this manifest's run id.
VerifyResult verify_manifest(const std::string& path);

std::string library_version();

}  // namespace zidyad
