#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "siamnet/check.hpp"
#include "siamnet/errors.hpp"
#include "siamnet/network.hpp"
#include "siamnet/pairwise.hpp"
#include "siamnet/rng.hpp"

using namespace siamnet;

namespace {

PartStack random_parts(Rng& rng, const NetConfig& c) {
  PartStack s;
  for (auto& p : s.parts) {
    p = Tensor({c.in_channels, c.parts.part_height, c.image_width});
    for (double& v : p.data()) v = rng.uniform(-1, 1);
  }
  return s;
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

std::vector<double> flatten(const NetworkParams& p) {
  std::vector<double> out;
  p.for_each([&](const std::string&, const Tensor& t) { out.insert(out.end(), t.data().begin(), t.data().end()); });
  return out;
}

}  // namespace

TEST_CASE("default configuration is the full-size network") {
  const NetConfig c;
  CHECK(c.feature_dim == 500);
  CHECK(c.c1_channels == 64);
  CHECK(c.c3_channels == 64);
  CHECK(c.c1_kernel == 7);
  CHECK(c.c3_kernel == 5);
  CHECK(c.part_flat_dim() == 64 * 12 * 12);
  const NetworkParams p = init_network(c, Mode::General, 0);
  CHECK(p.sets.size() == 1);
  CHECK(p.sets[0].c1_filters.shape() == Shape{64, 3, 7, 7});
  CHECK(p.sets[0].c3_filters[2].shape() == Shape{64, 64, 5, 5});
  CHECK(p.sets[0].f5_weights[1].shape() == Shape{500, 64 * 12 * 12});
  CHECK(init_network(c, Mode::ViewSpecific, 0).sets.size() == 2);
}

TEST_CASE("invalid configurations are rejected") {
  NetConfig c = check::toy_config();
  c.parts.part_height = 18;  // not divisible by 4
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = check::toy_config();
  c.parts.offsets = {0, 14, 40};  // past the bottom
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = check::toy_config();
  c.c1_kernel = 4;
  CHECK_THROWS_AS(c.validate(), UsageError);
}

TEST_CASE("initialization is deterministic and bounded") {
  const NetConfig c = check::toy_config();
  const NetworkParams a = init_network(c, Mode::General, 1);
  CHECK(a.sets == init_network(c, Mode::General, 1).sets);
  CHECK_FALSE(a.sets == init_network(c, Mode::General, 2).sets);

  const double bound = std::sqrt(6.0 / (3 * 49 + 8 * 49));
  double max_abs = 0;
  for (double v : a.sets[0].c1_filters.data()) max_abs = std::max(max_abs, std::abs(v));
  CHECK(max_abs <= bound);
  CHECK(max_abs > 0.9 * bound);
  for (double v : a.sets[0].c1_bias.data()) CHECK(v == 0.0);
  for (const auto& b : a.sets[0].f5_bias)
    for (double v : b.data()) CHECK(v == 0.0);

  const NetworkParams vs = init_network(c, Mode::ViewSpecific, 1);
  CHECK_FALSE(vs.sets[0] == vs.sets[1]);
}

TEST_CASE("forward features") {
  const NetConfig c = check::toy_config();
  const NetworkParams p = init_network(c, Mode::General, 3);
  PartStack zero;
  for (auto& t : zero.parts) t = Tensor({3, c.parts.part_height, c.image_width});
  const Tensor f0 = forward_features(p, zero, Branch::A);
  CHECK(f0.size() == c.feature_dim);
  for (double v : f0.data()) CHECK(v == 0.0);

  Rng rng(4);
  const PartStack s = random_parts(rng, c);
  CHECK(forward_features(p, s, Branch::A) == forward_features(p, s, Branch::B));

  PartStack permuted = s;
  std::swap(permuted.parts[0], permuted.parts[2]);
  CHECK_FALSE(forward_features(p, s, Branch::A) == forward_features(p, permuted, Branch::A));

  const NetworkParams vs = init_network(c, Mode::ViewSpecific, 3);
  CHECK_FALSE(forward_features(vs, s, Branch::A) == forward_features(vs, s, Branch::B));

  PartStack bad = s;
  bad.parts[1] = Tensor({3, c.parts.part_height + 4, c.image_width});
  CHECK_THROWS_AS(forward_features(p, bad, Branch::A), DimensionError);
}

TEST_CASE("general mode similarity is symmetric") {
  const NetConfig c = check::toy_config();
  const NetworkParams p = init_network(c, Mode::General, 5);
  Rng rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    const PartStack a = random_parts(rng, c), b = random_parts(rng, c);
    const double ab = cosine(forward_features(p, a, Branch::A), forward_features(p, b, Branch::B));
    const double ba = cosine(forward_features(p, b, Branch::A), forward_features(p, a, Branch::B));
    CHECK(ab == ba);
  }
}

TEST_CASE("backward with zero upstream gradient is zero") {
  const NetConfig c = check::toy_config();
  const NetworkParams p = init_network(c, Mode::General, 7);
  Rng rng(8);
  ForwardCache cache;
  forward_features(p, random_parts(rng, c), Branch::A, &cache);
  const std::vector<double> zero(c.feature_dim, 0.0);
  const ParamGrads g = backward_features(p, cache, zero);
  for (double v : flatten(g)) CHECK(v == 0.0);
}

TEST_CASE("general mode folds both branches into the shared set") {
  const NetConfig c = check::toy_config();
  const NetworkParams p = init_network(c, Mode::General, 9);
  Rng rng(10);
  ForwardCache ca, cb;
  forward_features(p, random_parts(rng, c), Branch::A, &ca);
  forward_features(p, random_parts(rng, c), Branch::B, &cb);
  std::vector<double> ga(c.feature_dim), gb(c.feature_dim);
  for (auto& v : ga) v = rng.normal();
  for (auto& v : gb) v = rng.normal();

  ParamGrads together = zeros_like(p);
  accumulate_backward(p, ca, ga, together);
  accumulate_backward(p, cb, gb, together);
  const std::vector<double> sa = flatten(backward_features(p, ca, ga));
  const std::vector<double> sb = flatten(backward_features(p, cb, gb));
  const std::vector<double> t = flatten(together);
  REQUIRE(t.size() == sa.size());
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(t[i] == doctest::Approx(sa[i] + sb[i]).epsilon(1e-12));
}

TEST_CASE("view-specific backward routes to the branch's own set") {
  const NetConfig c = check::toy_config();
  const NetworkParams p = init_network(c, Mode::ViewSpecific, 11);
  Rng rng(12);
  ForwardCache cb;
  forward_features(p, random_parts(rng, c), Branch::B, &cb);
  std::vector<double> g(c.feature_dim, 1.0);
  const ParamGrads grads = backward_features(p, cb, g);
  for (double v : grads.sets[0].c1_filters.data()) CHECK(v == 0.0);
  CHECK(grads.sets[1].c1_filters.squared_norm() > 0.0);
}

TEST_CASE("stale or foreign caches are rejected") {
  const NetConfig c = check::toy_config();
  NetworkParams p = init_network(c, Mode::General, 13);
  Rng rng(14);
  const std::vector<double> g(c.feature_dim, 1.0);
  ForwardCache empty;
  CHECK_THROWS_AS(backward_features(p, empty, g), UsageError);

  ForwardCache cache;
  forward_features(p, random_parts(rng, c), Branch::A, &cache);
  const NetworkParams other = init_network(c, Mode::General, 13);
  CHECK_THROWS_AS(backward_features(other, cache, g), UsageError);
  ++p.revision;
  CHECK_THROWS_AS(backward_features(p, cache, g), UsageError);
}

TEST_CASE("end-to-end gradient matches finite differences") {
  const check::CheckReport r = check::check_fullnet(2, 21);
  for (const auto& e : r.entries) {
    INFO(e.target << " " << e.max_error);
    CHECK(e.pass());
  }
}

TEST_CASE("model serialization") {
  const NetConfig c = check::toy_config();
  for (Mode mode : {Mode::General, Mode::ViewSpecific}) {
    const NetworkParams p = init_network(c, mode, 15);
    const std::vector<std::byte> bytes = serialize(p);
    CHECK(bytes.size() == serialized_header_size(p) + 8 * p.parameter_count());
    const NetworkParams q = deserialize(bytes);
    CHECK(q.sets == p.sets);
    CHECK(q.mode == mode);
    CHECK(q.config == c);
    CHECK(serialize(q) == bytes);
  }

  const NetworkParams p = init_network(c, Mode::General, 15);
  std::vector<std::byte> bytes = serialize(p);
  CHECK(static_cast<char>(bytes[0]) == 'S');
  CHECK(static_cast<char>(bytes[3]) == 'T');

  auto bad = bytes;
  bad[0] = std::byte{'X'};
  CHECK_THROWS_AS(deserialize(bad), FormatError);
  bad = bytes;
  bad.pop_back();
  CHECK_THROWS_AS(deserialize(bad), FormatError);
  bad = bytes;
  bad.push_back(std::byte{0});
  CHECK_THROWS_AS(deserialize(bad), FormatError);
  bad = bytes;
  bad[4] = std::byte{9};  // version
  CHECK_THROWS_AS(deserialize(bad), FormatError);
  CHECK_THROWS_AS(deserialize(std::span<const std::byte>(bytes.data(), 10)), FormatError);

  const auto path = std::filesystem::temp_directory_path() / "siamnet_test_model.snet";
  save_model(p, path);
  CHECK(std::filesystem::file_size(path) == bytes.size());
  CHECK(load_model(path).sets == p.sets);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_model(path), DataError);
}

TEST_CASE("parameter names and order") {
  const NetworkParams p = init_network(check::toy_config(), Mode::ViewSpecific, 1);
  std::vector<std::string> names;
  p.for_each([&](const std::string& n, const Tensor&) { names.push_back(n); });
  REQUIRE(names.size() == 28);
  CHECK(names[0] == "A.c1_filters");
  CHECK(names[1] == "A.c1_bias");
  CHECK(names[14] == "B.c1_filters");
}
