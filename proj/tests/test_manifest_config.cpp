#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "support.hpp"
#include "zidyad/config.hpp"
#include "zidyad/error.hpp"
#include "zidyad/manifest.hpp"

using namespace zidyad;

TEST(Sha256, KnownDigests) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Manifest, JsonRoundTripAndTamperDetection) {
  RunManifest m;
  m.command = "fit";
  m.config_hash = "cafe";
  m.seed = 12345678901234ull;
  m.versions = {{"zidyad", library_version()}};
  m.isa = "scalar";
  m.threads = 4;
  m.inputs = {{"data", "d.csv", "00ff"}};
  m.status = "ok";
  m.exit_status = 0;
  m.statistics = {{"ars_acceptance", 0.93}};
  const auto text = manifest_to_json(m);
  const auto back = manifest_from_json(text);
  EXPECT_EQ(back.seed, m.seed);
  EXPECT_EQ(back.run_id(), m.run_id());
  EXPECT_EQ(back.statistics.at("ars_acceptance"), 0.93);
  std::string tampered = text;
  tampered.replace(tampered.find("\"cafe\""), 6, "\"beef\"");
  EXPECT_THROW(manifest_from_json(tampered), Error);
}

TEST(Manifest, RunIdIgnoresThreadsAndTiming) {
  RunManifest a;
  a.command = "fit";
  a.seed = 1;
  a.inputs = {{"data", "x", "aa"}};
  RunManifest b = a;
  b.threads = 8;
  b.wall_seconds = 99;
  EXPECT_EQ(a.run_id(), b.run_id());
  b.seed = 2;
  EXPECT_NE(a.run_id(), b.run_id());
  EXPECT_EQ(a.run_id().size(), 16u);
}

TEST(Manifest, VerifyDetectsChanges) {
  const auto dir = zt::temp_dir("verify");
  const auto in = (dir / "in.txt").string(), out = (dir / "out.txt").string(), man = (dir / "m.json").string();
  std::ofstream(in) << "input\n";
  RunManifest m;
  m.command = "fit";
  m.inputs = {digest_file("data", in)};
  std::ofstream(out) << "# run " << m.run_id() << "\nvalues\n";
  m.outputs = {digest_file("draws", out)};
  m.status = "ok";
  save_manifest(man, m);
  EXPECT_TRUE(verify_manifest(man).ok);
  std::ofstream(in) << "changed\n";
  EXPECT_FALSE(verify_manifest(man).ok);
  std::ofstream(in) << "input\n";
  EXPECT_TRUE(verify_manifest(man).ok);
  // An output claiming a different run.
  std::ofstream(out) << "# run 0000000000000000\nvalues\n";
  m.outputs = {digest_file("draws", out)};
  save_manifest(man, m);
  EXPECT_FALSE(verify_manifest(man).ok);
}

TEST(Config, ParsesSectionsAndHashesCanonically) {
  const std::string a =
      "[dataset]\npath = data.csv\ncovariates = female, age\nz_columns = female\nitems_g = g1,g2,g3\n"
      "items_r = r1,r2,r3\n[measurement]\nanchor_g = g2\nfree_g = g3:female\n[prior]\nsigma2_beta = 10\n"
      "wishart_scale = 2, 0.5, 1\n[chain]\niterations = 300\nburn_in = 100\nseed = 5\n"
      "[pi_table]\nsetting1 = Male: female=0\nsetting2 = Female: female=1\n";
  const std::string b = "[chain]\nseed=5\nburn_in=100\niterations=300\n" + a.substr(0, a.find("[chain]")) +
                        a.substr(a.find("[pi_table]"));
  const auto ca = parse_config(a, "/tmp/x/cfg.ini");
  const auto cb = parse_config(b, "/tmp/x/cfg.ini");
  EXPECT_EQ(ca.hash(), cb.hash());
  EXPECT_EQ(ca.dataset_path, "/tmp/x/data.csv");
  EXPECT_EQ(ca.anchor_g, "g2");
  ASSERT_EQ(ca.free_g.size(), 1u);
  EXPECT_EQ(ca.free_g[0], (std::pair<std::string, std::string>{"g3", "female"}));
  EXPECT_EQ(ca.prior.sigma2_beta, 10.0);
  EXPECT_EQ(ca.prior.wishart_scale(0, 1), 0.5);
  EXPECT_EQ(ca.chain.iterations, 300u);
  ASSERT_TRUE(ca.seed.has_value());
  EXPECT_EQ(*ca.seed, 5u);
  EXPECT_EQ(ca.pi_settings.size(), 2u);
  std::string c = a;
  c.insert(c.find("seed = 5\n"), "thin = 2\n");
  EXPECT_NE(parse_config(c).hash(), ca.hash());
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(parse_config("[chain]\nbogus = 1\n"), Error);
  EXPECT_THROW(parse_config("[nosuch]\nx = 1\n"), Error);
  EXPECT_THROW(parse_config("[chain]\niterations = many\n"), Error);
  EXPECT_THROW(parse_config("[prior]\nwishart_scale = 1, 2\n"), Error);
  // Iteration counts may still be overridden on the command line, so their
  // consistency is checked when the chain starts.
  EXPECT_NO_THROW(parse_config("[chain]\niterations = 10\nburn_in = 20\n"));
}

TEST(Config, MeasurementPatternFromData) {
  const auto cfg = parse_config(
      "[dataset]\ncovariates = z\nz_columns = z\nitems_g = g1,g2,g3\nitems_r = r1,r2,r3\n"
      "[measurement]\nfree_r = r3:z\n");
  const auto data = zt::dataset_with_z({0, 1}, 3, 3, {1, 0, 0, 0, 0, 1}, {0, 1, 0, 0, 0, 0});
  const auto pat = cfg.measurement_pattern(data);
  EXPECT_TRUE(pat.items_g[0].fixed_anchor);
  EXPECT_TRUE(pat.items_r[0].fixed_anchor);
  EXPECT_EQ(pat.items_r[2].free, (std::vector<std::uint8_t>{1}));
  const auto bad = parse_config("[dataset]\ncovariates = z\nitems_g = g1\nitems_r = r1\n[measurement]\nanchor_g = nope\n");
  EXPECT_THROW(bad.measurement_pattern(data), Error);
}

TEST(PiSettingSpec, Parses) {
  const auto s = parse_pi_setting("Alone: alone=1, female=0 ; group=living ; reference");
  EXPECT_EQ(s.label, "Alone");
  ASSERT_EQ(s.overrides.size(), 2u);
  EXPECT_EQ(s.overrides[1].column, "female");
  EXPECT_EQ(s.overrides[0].value, 1.0);
  EXPECT_EQ(s.group, "living");
  EXPECT_TRUE(s.reference);
  EXPECT_THROW(parse_pi_setting("no colon here"), Error);
  EXPECT_THROW(parse_pi_setting("x: a=b"), Error);
}
