#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "siamnet/dataio.hpp"
#include "siamnet/network.hpp"
#include "siamnet/pairwise.hpp"

namespace siamnet::eval {

/// Probe x gallery similarity scores.
struct ScoreTable {
  pairwise::Matrix scores;
  std::vector<std::string> probe_ids;
  std::vector<std::string> gallery_ids;
};

/// Scores every probe against every gallery image. Probes go through branch
/// A and gallery images through branch B. With mirror fusion the four
/// original/mirrored cosine combinations are summed; with several models
/// their tables are summed. Images are cropped with each model's part scheme.
ScoreTable score_set(std::span<const NetworkParams> models,
                     std::span<const data::PersonImage> probes,
                     std::span<const data::PersonImage> gallery, bool mirror_fusion,
                     std::size_t threads = 1);

/// Cumulative match characteristic. `rates[k-1]` is the fraction of probes
/// whose true match is within the top k; `splits` holds per-split curves.
struct CmcCurve {
  std::vector<double> rates;
  std::vector<std::vector<double>> splits;

  double rank(std::size_t k) const { return rates.at(k - 1); }
};

/// Rank of the true match of one probe, 1-based. The true match is placed
/// after every impostor with an equal score. With several true-match
/// entries the best-scoring one counts.
std::size_t match_rank(const ScoreTable& table, std::size_t probe);

CmcCurve cmc(const ScoreTable& table);

/// Per-rank arithmetic mean; every input's split curves are carried along.
CmcCurve aggregate_splits(std::span<const CmcCurve> curves);

/// CSV `rank,rate_mean,rate_split_1,...`.
void write_cmc_csv(const std::filesystem::path& path, const CmcCurve& curve);
CmcCurve read_cmc_csv(const std::filesystem::path& path);

/// Probe-by-gallery CSV; first row holds gallery ids, first column probe ids.
void write_score_csv(const std::filesystem::path& path, const ScoreTable& table);

/// Mean similarity of matching and non-matching probe/gallery pairs.
struct SimilarityStats {
  double positive_mean = 0.0;
  double negative_mean = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};
SimilarityStats similarity_stats(const ScoreTable& table);

}  // namespace siamnet::eval
