#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(CELLTRACK_BIN) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::vector<std::uint8_t> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
}

void write_small_config(const fs::path& p, std::uint64_t seed, int frames = 10) {
  std::ofstream out(p);
  out << "threads = 1\n"
      << "synth.width = 224\n"
      << "synth.height = 224\n"
      << "synth.frames = " << frames << "\n"
      << "synth.initial_cells = 10\n"
      << "synth.cell_radius_mean = 5\n"
      << "synth.division_rate = 0.02\n"
      << "synth.seed = " << seed << "\n";
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run("") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("synth") == 2);                       // --out is required
  CHECK(run("pipeline --in /nonexistent --out /tmp/ct_nowhere") == 2);
  CHECK(run("eval --in /nonexistent --gt /nonexistent") == 2);
}

TEST_CASE("config errors exit with 2") {
  celltrack::test::TempDir dir("cli_cfg");
  {
    std::ofstream out(dir.path() / "bad.cfg");
    out << "synth.frames = 0\n";
  }
  CHECK(run("synth --config " + (dir.path() / "bad.cfg").string() + " --out " +
            (dir.path() / "data").string()) == 2);
  {
    std::ofstream out(dir.path() / "unknown.cfg");
    out << "who = knows\n";
  }
  CHECK(run("synth --config " + (dir.path() / "unknown.cfg").string() + " --out " +
            (dir.path() / "data").string()) == 2);
}

TEST_CASE("synth, pipeline, eval and overlay chain") {
  celltrack::test::TempDir dir("cli_chain");
  const fs::path cfg = dir.path() / "run.cfg";
  write_small_config(cfg, 303);
  const std::string data = (dir.path() / "data").string();

  REQUIRE(run("synth --config " + cfg.string() + " --out " + data) == 0);
  CHECK(fs::exists(dir.path() / "data" / "manifest.json"));

  // Same seed twice: byte-identical dataset trees.
  const std::string data2 = (dir.path() / "data2").string();
  REQUIRE(run("synth --config " + cfg.string() + " --out " + data2) == 0);
  CHECK(slurp(dir.path() / "data" / "01" / "t003.tif") ==
        slurp(dir.path() / "data2" / "01" / "t003.tif"));
  CHECK(slurp(dir.path() / "data" / "01_GT" / "TRA" / "man_track.txt") ==
        slurp(dir.path() / "data2" / "01_GT" / "TRA" / "man_track.txt"));

  const std::string res = (dir.path() / "data" / "01_RES").string();
  REQUIRE(run("pipeline --config " + cfg.string() + " --in " + data + " --out " + res) == 0);
  CHECK(fs::exists(fs::path(res) / "res_track.txt"));

  REQUIRE(run("eval --config " + cfg.string() + " --in " + res + " --gt " +
              (dir.path() / "data" / "01_GT").string() + " --out " + (dir.path() / "report").string()) == 0);
  CHECK(fs::exists(dir.path() / "report" / "eval_summary.json"));

  REQUIRE(run("overlay --in " + data + " --out " + (dir.path() / "viz").string()) == 0);
  CHECK(fs::exists(dir.path() / "viz" / "overlay000.ppm"));
}

TEST_CASE("detect, track and fineseg stages chain to the same forest") {
  celltrack::test::TempDir dir("cli_stages");
  const fs::path cfg = dir.path() / "run.cfg";
  write_small_config(cfg, 404, 8);
  const std::string data = (dir.path() / "data").string();
  REQUIRE(run("synth --config " + cfg.string() + " --out " + data) == 0);

  const std::string staged = (dir.path() / "staged").string();
  REQUIRE(run("detect --config " + cfg.string() + " --in " + data + " --out " + staged) == 0);
  CHECK(fs::exists(fs::path(staged) / "detections.txt"));
  REQUIRE(run("track --config " + cfg.string() + " --in " + staged + " --out " + staged) == 0);
  CHECK(fs::exists(fs::path(staged) / "res_track.txt"));
  REQUIRE(run("fineseg --config " + cfg.string() + " --in " + data + " --out " + staged) == 0);
  CHECK(fs::exists(fs::path(staged) / "mask000.tif"));

  const std::string res = (dir.path() / "data" / "01_RES").string();
  REQUIRE(run("pipeline --config " + cfg.string() + " --in " + data + " --out " + res) == 0);
  CHECK(slurp(fs::path(staged) / "res_track.txt") == slurp(fs::path(res) / "res_track.txt"));
  CHECK(slurp(fs::path(staged) / "mask004.tif") == slurp(fs::path(res) / "mask004.tif"));
}
