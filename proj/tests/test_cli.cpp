#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "cli.hpp"
#include "siamnet/dataio.hpp"
#include "siamnet/eval.hpp"
#include "siamnet/network.hpp"

using namespace siamnet;
using namespace siamnet::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("siamnet_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run(std::vector<std::string> args) { return run_cli(args); }

const std::vector<std::string> kToyArch{"--image-height", "48", "--image-width", "16",
                                        "--part-height",  "20", "--part-offsets", "0,14,28",
                                        "--c1-channels",  "4",  "--c3-channels",  "4",
                                        "--feature-dim",  "8"};

// Synthetic dataset plus one split, shared by the tests below.
const fs::path& fixture() {
  static const fs::path dir = [] {
    const fs::path d = scratch("fixture");
    REQUIRE(run({"--out-dir", d.string(), "synth", "--subjects", "8"}) == 0);
    REQUIRE(run({"--out-dir", d.string(), "split", "--manifest", (d / "manifest.csv").string(),
                 "--repeats", "1"}) == 0);
    return d;
  }();
  return dir;
}

int train_toy(const fs::path& out, std::vector<std::string> extra = {}) {
  std::vector<std::string> args{"--out-dir", out.string(), "train", "--manifest",
                                (fixture() / "manifest.csv").string(), "--split",
                                (fixture() / "split_00.csv").string(), "--epochs", "1",
                                "--batch-size", "8"};
  args.insert(args.end(), kToyArch.begin(), kToyArch.end());
  args.insert(args.end(), extra.begin(), extra.end());
  return run(args);
}

}  // namespace

TEST_CASE("split writes one file per repeat, reproducibly") {
  const fs::path a = scratch("split_a"), b = scratch("split_b");
  const std::string manifest = (fixture() / "manifest.csv").string();
  REQUIRE(run({"--out-dir", a.string(), "split", "--manifest", manifest, "--repeats", "3"}) == 0);
  REQUIRE(run({"--out-dir", b.string(), "split", "--manifest", manifest, "--repeats", "3"}) == 0);
  for (const char* f : {"split_00.csv", "split_01.csv", "split_02.csv"}) {
    REQUIRE(fs::exists(a / f));
    CHECK(slurp(a / f) == slurp(b / f));
  }
  CHECK_FALSE(fs::exists(a / "split_03.csv"));
  CHECK_FALSE(slurp(a / "split_00.csv") == slurp(a / "split_01.csv"));
  CHECK(run({"--out-dir", a.string(), "split", "--manifest", manifest, "--protocol", "prid"}) == 2);
}

TEST_CASE("train writes a model, a log and a config echo") {
  const fs::path out = scratch("train");
  REQUIRE(train_toy(out) == 0);
  const NetworkParams m = load_model(out / "model.snet");
  CHECK(m.config.feature_dim == 8);
  CHECK(m.mode == Mode::General);
  std::ifstream log(out / "train_log.csv");
  std::string line;
  std::size_t rows = 0;
  std::getline(log, line);
  while (std::getline(log, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 1);

  const std::string echo = slurp(out / "train_config.toml");
  CHECK(echo.find("alpha=2") != std::string::npos);
  CHECK(echo.find("beta=0.5") != std::string::npos);
  CHECK(echo.find("neg-cost=2") != std::string::npos);
  CHECK(echo.find("epochs=1") != std::string::npos);

  // Replaying the echo reproduces the model byte for byte.
  const fs::path replay = scratch("train_replay");
  REQUIRE(run({"--config", (out / "train_config.toml").string(), "--out-dir", replay.string()}) == 0);
  CHECK(slurp(replay / "model.snet") == slurp(out / "model.snet"));
}

TEST_CASE("default training flags") {
  const fs::path out = scratch("train_defaults");
  // Invalid cost name fails after the echo is written.
  CHECK(run({"--out-dir", out.string(), "train", "--manifest", "none.csv", "--cost", "hinge"}) == 1);
  const std::string echo = slurp(out / "train_config.toml");
  CHECK(echo.find("epochs=180") != std::string::npos);
  CHECK(echo.find("alpha=2") != std::string::npos);
  CHECK(echo.find("neg-cost=2") != std::string::npos);
}

TEST_CASE("eval: duplicate models give the same CMC as one") {
  const fs::path out = scratch("eval");
  REQUIRE(train_toy(out) == 0);
  const std::string model = (out / "model.snet").string();
  const std::string common_manifest = (fixture() / "manifest.csv").string();
  const std::string split = (fixture() / "split_00.csv").string();
  REQUIRE(run({"--out-dir", out.string(), "eval", "--models", model, "--manifest", common_manifest,
               "--split", split, "--out", "one.csv"}) == 0);
  REQUIRE(run({"--out-dir", out.string(), "eval", "--models", model + "," + model, "--manifest",
               common_manifest, "--split", split, "--out", "two.csv", "--scores", "s.csv"}) == 0);
  CHECK(eval::read_cmc_csv(out / "one.csv").rates == eval::read_cmc_csv(out / "two.csv").rates);
  CHECK(fs::exists(out / "s.csv"));
  CHECK(eval::read_cmc_csv(out / "one.csv").rates.back() == 1.0);

  CHECK(run({"--out-dir", out.string(), "eval", "--models", (out / "absent.snet").string(), "--manifest",
             common_manifest, "--split", split}) != 0);
}

TEST_CASE("aggregate averages CMC files") {
  const fs::path out = scratch("aggregate");
  eval::CmcCurve a, b;
  a.rates = {0.2, 1.0};
  b.rates = {0.4, 1.0};
  eval::write_cmc_csv(out / "a.csv", a);
  eval::write_cmc_csv(out / "b.csv", b);
  REQUIRE(run({"--out-dir", out.string(), "aggregate", (out / "a.csv").string(), (out / "b.csv").string()}) ==
          0);
  CHECK(eval::read_cmc_csv(out / "cmc.csv").rates[0] == doctest::Approx(0.3));
}

TEST_CASE("gradcheck exits cleanly with a deterministic report") {
  const fs::path out = scratch("gradcheck");
  CHECK(run({"--out-dir", out.string(), "gradcheck", "--module", "pairwise", "--trials", "3"}) == 0);
  CHECK(run({"--out-dir", out.string(), "gradcheck", "--module", "layers", "--trials", "3"}) == 0);
  CHECK(run({"--out-dir", out.string(), "gradcheck", "--module", "bogus"}) == 1);
}

TEST_CASE("filter grid geometry and hue ordering") {
  const Tensor grid = render_filter_grid(Tensor({64, 3, 7, 7}, 0.5));
  CHECK(grid.shape() == Shape{3, 65, 65});
  CHECK(grid.at(0, 0, 0) == 255.0);

  // Every filter has R=G=B, so every hue is 0 and the order is preserved.
  Tensor gray({4, 3, 2, 2});
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 4; ++i) gray.at(k, c, i / 2, i % 2) = static_cast<double>(4 - k) * i;
  CHECK(hue_order(gray) == std::vector<std::size_t>{0, 1, 2, 3});

  // Pure blue (240) then pure red (0) then green (120).
  Tensor rgb({3, 3, 1, 1});
  rgb.at(0, 2, 0, 0) = 1.0;
  rgb.at(1, 0, 0, 0) = 1.0;
  rgb.at(2, 1, 0, 0) = 1.0;
  Tensor blue({3, 1, 1});
  blue.at(2, 0, 0) = 1.0;
  CHECK(mean_hue(blue) == doctest::Approx(240.0));
  CHECK(hue_order(rgb) == std::vector<std::size_t>{1, 2, 0});
}

TEST_CASE("filters subcommand writes a PNG") {
  const fs::path out = scratch("filters");
  REQUIRE(train_toy(out) == 0);
  REQUIRE(run({"--out-dir", out.string(), "filters", "--model", (out / "model.snet").string()}) == 0);
  const Tensor img = data::read_image_rgb(out / "filters.png");
  CHECK(img.shape() == Shape{3, 17, 17});  // 4 tiles of 7 px on a 2x2 grid
}

TEST_CASE("exit codes") {
  CHECK(run({"--help"}) == 0);
  CHECK(run({}) == 1);
  CHECK(run({"frobnicate"}) == 1);
  CHECK(run({"--out-dir", scratch("codes").string(), "split", "--manifest", "/nonexistent.csv"}) == 2);
}
