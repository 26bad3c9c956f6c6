#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "siamnet/dataio.hpp"
#include "siamnet/network.hpp"
#include "siamnet/pairwise.hpp"

namespace siamnet::train {

enum class CostKind { Deviance, Fisher };

std::string to_string(CostKind k);
CostKind cost_from_string(const std::string& s);
std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);

struct TrainConfig {
  double alpha = 2.0;
  double beta = 0.5;
  double negative_cost = 2.0;
  std::size_t batch_size = 128;
  std::size_t epochs = 180;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 0;
  CostKind cost = CostKind::Deviance;
  Mode mode = Mode::General;
  /// Only F5 is updated when set.
  bool freeze_conv = false;
  std::size_t threads = 1;
  /// Forward caches of a whole batch are kept between the cost and the
  /// backward pass when they fit in this budget; otherwise the forward pass
  /// is recomputed per sample.
  std::size_t cache_budget_mb = 512;

  void validate() const;
};

/// One training image, already cropped into parts.
struct TrainSample {
  PartStack parts;
  pairwise::Label label = 0;
  /// 0 routes through branch A, 1 through branch B (view-specific mode).
  std::size_t view = 0;
};

/// Crops every image and assigns integer labels by subject (sorted id order)
/// and views by camera (`view_a_camera` is view 0, anything else view 1).
std::vector<TrainSample> make_samples(std::span<const data::PersonImage> images,
                                      const PartScheme& scheme, const std::string& view_a_camera);

struct EpochRecord {
  std::size_t epoch = 0;  ///< 1-based
  double train_cost = 0.0;
  std::optional<double> dev_cost;
  double seconds = 0.0;
  std::size_t pairs = 0;  ///< candidate pairs consumed by this epoch's batches
};

using Batch = std::vector<std::size_t>;

/// Deterministic shuffle keyed by (seed, epoch), cut into batches of
/// `batch_size` (a trailing singleton joins the previous batch). Batches
/// without a positive or a negative pair are repaired by swapping samples
/// with neighbouring batches. In view-specific mode pairs must also span both
/// views. Throws DataError when the dataset has a single subject or cannot
/// produce a valid batch.
std::vector<Batch> make_batches(std::span<const pairwise::Label> labels,
                                std::span<const std::size_t> views, std::size_t batch_size,
                                std::uint64_t seed, std::size_t epoch, Mode mode);

struct BatchResult {
  double cost = 0.0;
  std::size_t pairs = 0;
};

/// Cost of one batch; when `grads` is given, the parameter gradient is added
/// into it. Feature extraction is split over `config.threads` workers.
BatchResult batch_cost(const NetworkParams& params, std::span<const TrainSample> samples,
                       std::span<const std::size_t> batch, const TrainConfig& config,
                       ParamGrads* grads = nullptr);

/// v <- momentum v - lr (g + weight_decay p); p <- p + v. Tensors for which
/// `trainable(name)` is false are left untouched. Throws NumericalError on a
/// non-finite gradient.
void sgd_step(NetworkParams& params, const ParamGrads& grads, double learning_rate,
              double momentum, double weight_decay, ParamGrads& velocity,
              const std::function<bool(const std::string&)>& trainable = {});

/// Mean batch cost over a data set (no updates).
double dataset_cost(const NetworkParams& params, std::span<const TrainSample> samples,
                    const TrainConfig& config);

struct TrainResult {
  NetworkParams params;
  std::vector<EpochRecord> history;
};

using EpochCallback = std::function<void(const EpochRecord&, const NetworkParams&)>;

TrainResult train(const TrainConfig& config, NetworkParams initial,
                  std::span<const TrainSample> train_set, std::span<const TrainSample> dev_set = {},
                  const EpochCallback& on_epoch = {});

/// Initializes the network from `config.seed` and trains it.
TrainResult train(const TrainConfig& config, const NetConfig& net,
                  std::span<const TrainSample> train_set, std::span<const TrainSample> dev_set = {},
                  const EpochCallback& on_epoch = {});

/// CSV `epoch,train_cost,dev_cost,seconds`; dev_cost is empty when absent.
void write_epoch_log(const std::filesystem::path& path, std::span<const EpochRecord> history);

}  // namespace siamnet::train
