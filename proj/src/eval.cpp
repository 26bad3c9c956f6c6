#include "siamnet/eval.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "siamnet/errors.hpp"
#include "siamnet/parallel.hpp"

namespace siamnet::eval {

using pairwise::Matrix;

namespace {

struct FeatureSet {
  Matrix original;
  Matrix mirrored;  // empty without mirror fusion
};

FeatureSet features(const NetworkParams& model, std::span<const data::PersonImage> images,
                    Branch branch, bool with_mirror, std::size_t threads) {
  const auto d = static_cast<Eigen::Index>(model.config.feature_dim);
  const data::Geometry geometry{model.config.image_height, model.config.image_width};
  FeatureSet fs;
  fs.original.resize(d, static_cast<Eigen::Index>(images.size()));
  if (with_mirror) fs.mirrored.resize(d, static_cast<Eigen::Index>(images.size()));
  parallel_for(images.size(), threads, [&](std::size_t begin, std::size_t end, std::size_t) {
    for (std::size_t i = begin; i < end; ++i) {
      const data::PersonImage img = data::preprocess(images[i], geometry);
      const auto col = static_cast<Eigen::Index>(i);
      const Tensor f = forward_features(model, data::crop_parts(img.pixels, model.config.parts), branch);
      fs.original.col(col) = Eigen::Map<const Eigen::VectorXd>(f.raw(), d);
      if (with_mirror) {
        const data::PersonImage m = data::mirror(img);
        const Tensor fm = forward_features(model, data::crop_parts(m.pixels, model.config.parts), branch);
        fs.mirrored.col(col) = Eigen::Map<const Eigen::VectorXd>(fm.raw(), d);
      }
    }
  });
  return fs;
}

}  // namespace

ScoreTable score_set(std::span<const NetworkParams> models,
                     std::span<const data::PersonImage> probes,
                     std::span<const data::PersonImage> gallery, bool mirror_fusion,
                     std::size_t threads) {
  if (models.empty()) throw UsageError("score_set: no models given");
  if (gallery.empty()) throw UsageError("score_set: empty gallery");
  if (probes.empty()) throw UsageError("score_set: empty probe set");
  for (const auto& m : models) {
    if (m.config.feature_dim != models[0].config.feature_dim) {
      throw UsageError("score_set: model feature dims differ (" +
                       std::to_string(m.config.feature_dim) + " vs " +
                       std::to_string(models[0].config.feature_dim) + ")");
    }
  }
  ScoreTable table;
  for (const auto& p : probes) table.probe_ids.push_back(p.subject_id);
  for (const auto& g : gallery) table.gallery_ids.push_back(g.subject_id);
  table.scores = Matrix::Zero(static_cast<Eigen::Index>(probes.size()),
                              static_cast<Eigen::Index>(gallery.size()));

  for (const auto& model : models) {
    const FeatureSet fp = features(model, probes, Branch::A, mirror_fusion, threads);
    const FeatureSet fg = features(model, gallery, Branch::B, mirror_fusion, threads);
    Matrix s = pairwise::cosine_similarity(fp.original, fg.original);
    if (mirror_fusion) {
      // (p,g) + (p',g') + ((p,g') + (p',g)): grouping is invariant under
      // swapping the probe and gallery roles.
      const Matrix both_mirrored = pairwise::cosine_similarity(fp.mirrored, fg.mirrored);
      const Matrix gallery_mirrored = pairwise::cosine_similarity(fp.original, fg.mirrored);
      const Matrix probe_mirrored = pairwise::cosine_similarity(fp.mirrored, fg.original);
      s = (s + both_mirrored) + (gallery_mirrored + probe_mirrored);
    }
    table.scores += s;
  }
  return table;
}

std::size_t match_rank(const ScoreTable& table, std::size_t probe) {
  const auto& id = table.probe_ids.at(probe);
  const auto row = table.scores.row(static_cast<Eigen::Index>(probe));
  bool found = false;
  double best = 0.0;
  for (std::size_t j = 0; j < table.gallery_ids.size(); ++j) {
    if (table.gallery_ids[j] != id) continue;
    const double s = row(static_cast<Eigen::Index>(j));
    if (!found || s > best) best = s;
    found = true;
  }
  if (!found) throw ProtocolError("probe subject '" + id + "' is absent from the gallery");
  std::size_t rank = 1;
  for (std::size_t j = 0; j < table.gallery_ids.size(); ++j) {
    if (table.gallery_ids[j] != id && row(static_cast<Eigen::Index>(j)) >= best) ++rank;
  }
  return rank;
}

CmcCurve cmc(const ScoreTable& table) {
  const std::size_t probes = table.probe_ids.size(), g = table.gallery_ids.size();
  if (static_cast<std::size_t>(table.scores.rows()) != probes ||
      static_cast<std::size_t>(table.scores.cols()) != g) {
    throw DimensionError("cmc: score table shape does not match id lists");
  }
  if (probes == 0 || g == 0) throw UsageError("cmc: empty score table");
  std::vector<std::size_t> hits(g + 1, 0);
  for (std::size_t i = 0; i < probes; ++i) ++hits[match_rank(table, i)];
  CmcCurve curve;
  curve.rates.resize(g);
  std::size_t cumulative = 0;
  for (std::size_t k = 1; k <= g; ++k) {
    cumulative += hits[k];
    curve.rates[k - 1] = static_cast<double>(cumulative) / static_cast<double>(probes);
  }
  curve.splits = {curve.rates};
  return curve;
}

CmcCurve aggregate_splits(std::span<const CmcCurve> curves) {
  if (curves.empty()) throw UsageError("aggregate_splits: no curves");
  const std::size_t len = curves[0].rates.size();
  CmcCurve out;
  out.rates.assign(len, 0.0);
  for (const auto& c : curves) {
    if (c.rates.size() != len) {
      throw UsageError("aggregate_splits: mismatched rank domains (" + std::to_string(c.rates.size()) +
                       " vs " + std::to_string(len) + " ranks)");
    }
    for (std::size_t k = 0; k < len; ++k) out.rates[k] += c.rates[k];
    out.splits.push_back(c.rates);
  }
  for (double& r : out.rates) r /= static_cast<double>(curves.size());
  return out;
}

void write_cmc_csv(const std::filesystem::path& path, const CmcCurve& curve) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write CMC file: " + path.string());
  out << "rank,rate_mean";
  for (std::size_t s = 0; s < curve.splits.size(); ++s) out << ",rate_split_" << (s + 1);
  out << '\n' << std::setprecision(12);
  for (std::size_t k = 0; k < curve.rates.size(); ++k) {
    out << (k + 1) << ',' << curve.rates[k];
    for (const auto& split : curve.splits) out << ',' << split.at(k);
    out << '\n';
  }
}

CmcCurve read_cmc_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("CMC file not found: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("rank,rate_mean", 0) != 0) {
    throw DataError("CMC file must start with rank,rate_mean: " + path.string());
  }
  const std::size_t columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  CmcCurve curve;
  curve.splits.resize(columns > 1 ? columns - 1 : 0);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    std::getline(ss, cell, ',');
    curve.rates.push_back(std::stod(cell));
    for (auto& split : curve.splits) {
      if (!std::getline(ss, cell, ',')) throw DataError("CMC file: short row in " + path.string());
      split.push_back(std::stod(cell));
    }
  }
  return curve;
}

void write_score_csv(const std::filesystem::path& path, const ScoreTable& table) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write score table: " + path.string());
  out << "probe";
  for (const auto& g : table.gallery_ids) out << ',' << g;
  out << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < table.probe_ids.size(); ++i) {
    out << table.probe_ids[i];
    for (std::size_t j = 0; j < table.gallery_ids.size(); ++j)
      out << ',' << table.scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    out << '\n';
  }
}

SimilarityStats similarity_stats(const ScoreTable& table) {
  SimilarityStats st;
  double pos = 0.0, neg = 0.0;
  for (std::size_t i = 0; i < table.probe_ids.size(); ++i) {
    for (std::size_t j = 0; j < table.gallery_ids.size(); ++j) {
      const double s = table.scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (table.probe_ids[i] == table.gallery_ids[j]) {
        pos += s;
        ++st.positives;
      } else {
        neg += s;
        ++st.negatives;
      }
    }
  }
  if (st.positives) st.positive_mean = pos / static_cast<double>(st.positives);
  if (st.negatives) st.negative_mean = neg / static_cast<double>(st.negatives);
  return st;
}

}  // namespace siamnet::eval
