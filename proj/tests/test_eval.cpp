#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "siamnet/check.hpp"
#include "siamnet/errors.hpp"
#include "siamnet/eval.hpp"
#include "siamnet/rng.hpp"

using namespace siamnet;
using namespace siamnet::eval;

namespace {

data::PersonImage random_image(Rng& rng, const std::string& id, bool symmetric = false) {
  data::PersonImage img;
  img.subject_id = id;
  img.pixels = Tensor({3, 48, 16});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 48; ++y)
      for (std::size_t x = 0; x < 16; ++x) {
        if (symmetric && x >= 8) {
          img.pixels.at(c, y, x) = img.pixels.at(c, y, 15 - x);
        } else {
          img.pixels.at(c, y, x) = rng.uniform(0, 255);
        }
      }
  return img;
}

std::vector<data::PersonImage> images(Rng& rng, std::size_t n, bool symmetric = false) {
  std::vector<data::PersonImage> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_image(rng, "s" + std::to_string(i), symmetric));
  return out;
}

double cosine(const Tensor& a, const Tensor& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

ScoreTable table_from(const pairwise::Matrix& s, std::vector<std::string> probe,
                      std::vector<std::string> gallery) {
  return {s, std::move(probe), std::move(gallery)};
}

std::vector<std::string> ids(std::size_t n) {
  std::vector<std::string> v;
  for (std::size_t i = 0; i < n; ++i) v.push_back("s" + std::to_string(i));
  return v;
}

}  // namespace

TEST_CASE("single model without mirror fusion is plain cosine") {
  const NetConfig c = check::toy_config();
  const std::vector<NetworkParams> models{init_network(c, Mode::ViewSpecific, 1)};
  Rng rng(2);
  const auto probes = images(rng, 3), gallery = images(rng, 4);
  const ScoreTable t = score_set(models, probes, gallery, false);
  REQUIRE(t.scores.rows() == 3);
  REQUIRE(t.scores.cols() == 4);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto p = data::preprocess(probes[i], {48, 16});
    const Tensor fp = forward_features(models[0], data::crop_parts(p.pixels, c.parts), Branch::A);
    for (std::size_t j = 0; j < 4; ++j) {
      const auto g = data::preprocess(gallery[j], {48, 16});
      const Tensor fg = forward_features(models[0], data::crop_parts(g.pixels, c.parts), Branch::B);
      CHECK(t.scores(i, j) == doctest::Approx(cosine(fp, fg)).epsilon(1e-12));
    }
  }
}

TEST_CASE("mirror fusion and model ensembles scale the table") {
  const NetConfig c = check::toy_config();
  const NetworkParams m = init_network(c, Mode::General, 3);
  Rng rng(4);
  const auto probes = images(rng, 3, true), gallery = images(rng, 5, true);
  const std::vector<NetworkParams> one{m}, two{m, m};
  const ScoreTable plain = score_set(one, probes, gallery, false);
  const ScoreTable fused = score_set(one, probes, gallery, true);
  const ScoreTable pair = score_set(two, probes, gallery, false);
  for (Eigen::Index i = 0; i < 3; ++i)
    for (Eigen::Index j = 0; j < 5; ++j) {
      CHECK(fused.scores(i, j) == doctest::Approx(4 * plain.scores(i, j)).epsilon(1e-12));
      CHECK(pair.scores(i, j) == doctest::Approx(2 * plain.scores(i, j)).epsilon(1e-12));
    }

  // Linearity on asymmetric images: ensemble of two = sum of single tables.
  const NetworkParams m2 = init_network(c, Mode::General, 5);
  const auto p2 = images(rng, 3), g2 = images(rng, 4);
  const std::vector<NetworkParams> a{m}, b{m2}, ab{m, m2};
  const ScoreTable ta = score_set(a, p2, g2, true), tb = score_set(b, p2, g2, true),
                   tab = score_set(ab, p2, g2, true);
  CHECK((tab.scores - ta.scores - tb.scores).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("swapping probe and gallery transposes the table") {
  const NetConfig c = check::toy_config();
  const std::vector<NetworkParams> models{init_network(c, Mode::General, 6)};
  Rng rng(7);
  const auto p = images(rng, 3), g = images(rng, 4);
  const ScoreTable pg = score_set(models, p, g, true);
  const ScoreTable gp = score_set(models, g, p, true);
  CHECK(pg.scores == gp.scores.transpose());
}

TEST_CASE("score_set rejects bad input") {
  const NetConfig c = check::toy_config();
  Rng rng(8);
  const auto p = images(rng, 2);
  std::vector<NetworkParams> none;
  CHECK_THROWS_AS(score_set(none, p, p, false), UsageError);
  NetConfig wide = c;
  wide.feature_dim = 30;
  const std::vector<NetworkParams> mixed{init_network(c, Mode::General, 1), init_network(wide, Mode::General, 1)};
  CHECK_THROWS_AS(score_set(mixed, p, p, false), UsageError);
}

TEST_CASE("CMC of a perfect and of a flat table") {
  const std::size_t g = 6;
  const ScoreTable perfect = table_from(pairwise::Matrix::Identity(g, g), ids(g), ids(g));
  const CmcCurve pc = cmc(perfect);
  for (std::size_t k = 1; k <= g; ++k) CHECK(pc.rank(k) == 1.0);

  const ScoreTable flat = table_from(pairwise::Matrix::Constant(g, g, 0.5), ids(g), ids(g));
  const CmcCurve fc = cmc(flat);
  for (std::size_t k = 1; k < g; ++k) CHECK(fc.rank(k) == 0.0);
  CHECK(fc.rank(g) == 1.0);
  CHECK(match_rank(flat, 0) == g);
}

TEST_CASE("CMC of random scores is about k/G") {
  Rng rng(9);
  const std::size_t g = 10, probes = 1000;
  pairwise::Matrix s(probes, g);
  std::vector<std::string> pid;
  for (std::size_t i = 0; i < probes; ++i) {
    pid.push_back("s" + std::to_string(i % g));
    for (std::size_t j = 0; j < g; ++j) s(i, j) = rng.uniform(-1, 1);
  }
  const CmcCurve curve = cmc(table_from(s, pid, ids(g)));
  CHECK(std::abs(curve.rank(1) - 0.1) < 0.03);
  CHECK(std::abs(curve.rank(5) - 0.5) < 0.05);
  for (std::size_t k = 1; k < g; ++k) CHECK(curve.rank(k) <= curve.rank(k + 1));
  CHECK(curve.rank(g) == 1.0);

  // Strictly increasing transforms leave the ranks alone.
  const CmcCurve shifted = cmc(table_from((3.0 * s.array() + 7.0).exp().matrix(), pid, ids(g)));
  CHECK(shifted.rates == curve.rates);
}

TEST_CASE("match rank with ties and repeated gallery entries") {
  pairwise::Matrix s(1, 4);
  s << 0.5, 0.9, 0.5, 0.1;
  const ScoreTable t = table_from(s, {"a"}, {"a", "b", "c", "d"});
  CHECK(match_rank(t, 0) == 3);  // b beats, c ties
  const ScoreTable twice = table_from(s, {"a"}, {"a", "b", "a", "d"});
  CHECK(match_rank(twice, 0) == 2);
  const ScoreTable missing = table_from(s, {"z"}, {"a", "b", "c", "d"});
  CHECK_THROWS_AS(cmc(missing), ProtocolError);
  CHECK_THROWS_AS(cmc(table_from(s, {"a", "b"}, {"a", "b", "c", "d"})), DimensionError);
}

TEST_CASE("aggregating splits") {
  CmcCurve a, b;
  a.rates = {0.2, 0.6};
  b.rates = {0.4, 0.8};
  const std::vector<CmcCurve> both{a, b};
  const CmcCurve m = aggregate_splits(both);
  CHECK(m.rates[0] == doctest::Approx(0.3));
  CHECK(m.rates[1] == doctest::Approx(0.7));
  CHECK(m.splits.size() == 2);
  CmcCurve shorter;
  shorter.rates = {0.1};
  const std::vector<CmcCurve> bad{a, shorter};
  CHECK_THROWS_AS(aggregate_splits(bad), UsageError);
  CHECK_THROWS_AS(aggregate_splits(std::span<const CmcCurve>{}), UsageError);
}

TEST_CASE("CMC and score CSV files") {
  const auto dir = std::filesystem::temp_directory_path() / "siamnet_test_eval";
  std::filesystem::create_directories(dir);
  CmcCurve a, b;
  a.rates = {0.25, 0.5, 1.0};
  b.rates = {0.125, 0.75, 1.0};
  const std::vector<CmcCurve> both{a, b};
  const CmcCurve m = aggregate_splits(both);
  write_cmc_csv(dir / "cmc.csv", m);
  const CmcCurve r = read_cmc_csv(dir / "cmc.csv");
  CHECK(r.rates == m.rates);
  CHECK(r.splits == m.splits);
  CHECK_THROWS_AS(read_cmc_csv(dir / "absent.csv"), DataError);

  pairwise::Matrix s(2, 2);
  s << 1, 0.5, -0.25, 0.75;
  const ScoreTable t = table_from(s, {"a", "b"}, {"a", "b"});
  write_score_csv(dir / "scores.csv", t);
  CHECK(std::filesystem::file_size(dir / "scores.csv") > 0);
  const SimilarityStats st = similarity_stats(t);
  CHECK(st.positives == 2);
  CHECK(st.positive_mean == doctest::Approx(0.875));
  CHECK(st.negative_mean == doctest::Approx(0.125));
  std::filesystem::remove_all(dir);
}
