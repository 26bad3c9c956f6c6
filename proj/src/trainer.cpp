#include "siamnet/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "siamnet/errors.hpp"
#include "siamnet/parallel.hpp"
#include "siamnet/rng.hpp"

namespace siamnet::train {

using pairwise::Label;
using pairwise::Matrix;

std::string to_string(CostKind k) { return k == CostKind::Deviance ? "deviance" : "fisher"; }

CostKind cost_from_string(const std::string& s) {
  if (s == "deviance") return CostKind::Deviance;
  if (s == "fisher") return CostKind::Fisher;
  throw UsageError("unknown cost '" + s + "' (expected deviance or fisher)");
}

std::string to_string(Mode m) { return m == Mode::General ? "general" : "specific"; }

Mode mode_from_string(const std::string& s) {
  if (s == "general") return Mode::General;
  if (s == "specific" || s == "view_specific") return Mode::ViewSpecific;
  throw UsageError("unknown mode '" + s + "' (expected general or specific)");
}

void TrainConfig::validate() const {
  if (batch_size < 2) throw UsageError("batch_size must be >= 2");
  if (epochs < 1) throw UsageError("epochs must be >= 1");
  if (!(alpha > 0.0)) throw UsageError("alpha must be > 0");
  if (!(negative_cost >= 1.0)) throw UsageError("negative cost c must be >= 1");
  if (!(learning_rate >= 0.0) || !(momentum >= 0.0) || !(weight_decay >= 0.0))
    throw UsageError("learning rate, momentum and weight decay must be >= 0");
}

std::vector<TrainSample> make_samples(std::span<const data::PersonImage> images,
                                      const PartScheme& scheme, const std::string& view_a_camera) {
  std::set<std::string> ids;
  for (const auto& img : images) ids.insert(img.subject_id);
  std::map<std::string, Label> label_of;
  Label next = 0;
  for (const auto& id : ids) label_of[id] = next++;

  std::vector<TrainSample> samples;
  samples.reserve(images.size());
  for (const auto& img : images) {
    TrainSample s;
    s.parts = data::crop_parts(img.pixels, scheme);
    s.label = label_of.at(img.subject_id);
    s.view = img.camera_id == view_a_camera ? 0 : 1;
    samples.push_back(std::move(s));
  }
  return samples;
}

// ---- batching ---------------------------------------------------------------

namespace {

bool batch_valid(const Batch& b, std::span<const Label> labels, std::span<const std::size_t> views,
                 Mode mode) {
  bool pos = false, neg = false;
  for (std::size_t i = 0; i < b.size() && !(pos && neg); ++i) {
    for (std::size_t j = i + 1; j < b.size() && !(pos && neg); ++j) {
      if (mode == Mode::ViewSpecific && views[b[i]] == views[b[j]]) continue;
      if (labels[b[i]] == labels[b[j]]) pos = true;
      else neg = true;
    }
  }
  return pos && neg;
}

bool try_repair(std::vector<Batch>& batches, std::size_t bad, std::span<const Label> labels,
                std::span<const std::size_t> views, Mode mode) {
  // Neighbours first, then by increasing distance.
  std::vector<std::size_t> order;
  for (std::size_t dist = 1; dist < batches.size(); ++dist) {
    if (bad + dist < batches.size()) order.push_back(bad + dist);
    if (bad >= dist) order.push_back(bad - dist);
  }
  for (std::size_t other : order) {
    const bool other_was_valid = batch_valid(batches[other], labels, views, mode);
    for (std::size_t i = 0; i < batches[bad].size(); ++i) {
      for (std::size_t j = 0; j < batches[other].size(); ++j) {
        std::swap(batches[bad][i], batches[other][j]);
        if (batch_valid(batches[bad], labels, views, mode) &&
            (!other_was_valid || batch_valid(batches[other], labels, views, mode))) {
          return true;
        }
        std::swap(batches[bad][i], batches[other][j]);
      }
    }
  }
  return false;
}

}  // namespace

std::vector<Batch> make_batches(std::span<const Label> labels, std::span<const std::size_t> views,
                                std::size_t batch_size, std::uint64_t seed, std::size_t epoch,
                                Mode mode) {
  if (batch_size < 2) throw UsageError("batch_size must be >= 2");
  if (mode == Mode::ViewSpecific && views.size() != labels.size()) {
    throw UsageError("view-specific batching needs a view per sample");
  }
  if (std::set<Label>(labels.begin(), labels.end()).size() < 2) {
    throw DataError("unusable dataset: training needs at least 2 subjects");
  }
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng{seed, epoch, 0x6261746368ULL};
  rng.shuffle(std::span<std::size_t>(order));

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  if (batches.size() > 1 && batches.back().size() < 2) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  for (std::size_t b = 0; b < batches.size(); ++b) {
    if (batch_valid(batches[b], labels, views, mode)) continue;
    if (!try_repair(batches, b, labels, views, mode)) {
      throw DataError("unusable dataset: cannot form a batch with both positive and negative pairs"
                      " (batch " + std::to_string(b) + " of " + std::to_string(batches.size()) + ")");
    }
  }
  // A repair can only break batches that were already invalid; sweep once more.
  for (std::size_t b = 0; b < batches.size(); ++b) {
    if (!batch_valid(batches[b], labels, views, mode)) {
      throw DataError("unusable dataset: batch " + std::to_string(b) + " could not be repaired");
    }
  }
  return batches;
}

// ---- batch cost and gradient ------------------------------------------------

namespace {

std::size_t cache_bytes(const NetConfig& c) {
  const std::size_t hw = c.parts.part_height * c.image_width;
  const std::size_t doubles = c.in_channels * hw + c.c1_channels * hw +
                              c.c1_channels * hw / 4 * 3 + c.c3_channels * hw / 4 +
                              c.c3_channels * hw / 16 * 3;
  return kNumParts * doubles * sizeof(double);
}

struct View {
  std::vector<std::size_t> members;  // indices into the batch
  Branch branch;
};

Matrix extract(const NetworkParams& params, std::span<const TrainSample> samples,
               std::span<const std::size_t> batch, const View& view, std::size_t threads,
               std::vector<ForwardCache>* caches) {
  const auto d = static_cast<Eigen::Index>(params.config.feature_dim);
  Matrix X(d, static_cast<Eigen::Index>(view.members.size()));
  if (caches) caches->assign(view.members.size(), ForwardCache{});
  parallel_for(view.members.size(), threads, [&](std::size_t begin, std::size_t end, std::size_t) {
    for (std::size_t k = begin; k < end; ++k) {
      const TrainSample& s = samples[batch[view.members[k]]];
      const Tensor f =
          forward_features(params, s.parts, view.branch, caches ? &(*caches)[k] : nullptr);
      X.col(static_cast<Eigen::Index>(k)) = Eigen::Map<const Eigen::VectorXd>(f.raw(), d);
    }
  });
  return X;
}

void backprop(const NetworkParams& params, std::span<const TrainSample> samples,
              std::span<const std::size_t> batch, const View& view, const Matrix& dX,
              std::vector<ForwardCache>* caches, std::size_t threads, ParamGrads& grads) {
  const std::size_t n = view.members.size();
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, n));
  std::vector<ParamGrads> local;
  if (workers > 1) local.assign(workers, zeros_like(params));
  parallel_for(n, workers, [&](std::size_t begin, std::size_t end, std::size_t w) {
    ParamGrads& target = workers > 1 ? local[w] : grads;
    ForwardCache scratch;
    for (std::size_t k = begin; k < end; ++k) {
      const auto col = dX.col(static_cast<Eigen::Index>(k));
      ForwardCache* cache = caches ? &(*caches)[k] : &scratch;
      if (!caches) forward_features(params, samples[batch[view.members[k]]].parts, view.branch, cache);
      accumulate_backward(params, *cache, std::span<const double>(col.data(), col.size()), target);
      if (caches) *cache = ForwardCache{};  // release activations early
    }
  });
  for (auto& g : local) {
    std::vector<Tensor*> dst;
    grads.for_each([&](const std::string&, Tensor& t) { dst.push_back(&t); });
    std::size_t i = 0;
    g.for_each([&](const std::string&, const Tensor& t) { dst[i++]->add_scaled(t, 1.0); });
  }
}

}  // namespace

BatchResult batch_cost(const NetworkParams& params, std::span<const TrainSample> samples,
                       std::span<const std::size_t> batch, const TrainConfig& config,
                       ParamGrads* grads) {
  const bool keep = grads && batch.size() * cache_bytes(params.config) <=
                                 config.cache_budget_mb * std::size_t{1024} * 1024;
  BatchResult result;

  if (params.mode == Mode::General) {
    View all{std::vector<std::size_t>(batch.size()), Branch::A};
    std::iota(all.members.begin(), all.members.end(), 0);
    std::vector<Label> labels;
    for (std::size_t i : batch) labels.push_back(samples[i].label);
    std::vector<ForwardCache> caches;
    const Matrix X = extract(params, samples, batch, all, config.threads, keep ? &caches : nullptr);
    const pairwise::PairMasks masks = pairwise::build_masks(labels, config.negative_cost);
    const Matrix S = pairwise::cosine_similarity(X, X);
    result.pairs = masks.pair_count();
    if (config.cost == CostKind::Deviance) {
      result.cost = pairwise::deviance_cost(S, masks, config.alpha, config.beta);
      if (grads) {
        const Matrix dX = pairwise::deviance_grad_general(X, S, masks, config.alpha, config.beta);
        backprop(params, samples, batch, all, dX, keep ? &caches : nullptr, config.threads, *grads);
      }
    } else {
      result.cost = pairwise::fisher_cost(S, masks);
      if (grads) {
        const Matrix dX = pairwise::fisher_grad(X, S, masks);
        backprop(params, samples, batch, all, dX, keep ? &caches : nullptr, config.threads, *grads);
      }
    }
    return result;
  }

  View va{{}, Branch::A}, vb{{}, Branch::B};
  std::vector<Label> la, lb;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const TrainSample& s = samples[batch[k]];
    (s.view == 0 ? va : vb).members.push_back(k);
    (s.view == 0 ? la : lb).push_back(s.label);
  }
  std::vector<ForwardCache> ca, cb;
  const Matrix X = extract(params, samples, batch, va, config.threads, keep ? &ca : nullptr);
  const Matrix Y = extract(params, samples, batch, vb, config.threads, keep ? &cb : nullptr);
  const pairwise::PairMasks masks = pairwise::build_masks(la, lb, config.negative_cost);
  const Matrix S = pairwise::cosine_similarity(X, Y);
  result.pairs = masks.pair_count();
  std::pair<Matrix, Matrix> d;
  if (config.cost == CostKind::Deviance) {
    result.cost = pairwise::deviance_cost(S, masks, config.alpha, config.beta);
    if (grads) d = pairwise::deviance_grad_specific(X, Y, S, masks, config.alpha, config.beta);
  } else {
    result.cost = pairwise::fisher_cost(S, masks);
    if (grads) d = pairwise::fisher_grad_specific(X, Y, S, masks);
  }
  if (grads) {
    backprop(params, samples, batch, va, d.first, keep ? &ca : nullptr, config.threads, *grads);
    backprop(params, samples, batch, vb, d.second, keep ? &cb : nullptr, config.threads, *grads);
  }
  return result;
}

void sgd_step(NetworkParams& params, const ParamGrads& grads, double learning_rate,
              double momentum, double weight_decay, ParamGrads& velocity,
              const std::function<bool(const std::string&)>& trainable) {
  std::vector<const Tensor*> g;
  std::vector<Tensor*> v;
  grads.for_each([&](const std::string&, const Tensor& t) { g.push_back(&t); });
  velocity.for_each([&](const std::string&, Tensor& t) { v.push_back(&t); });
  std::size_t count = 0;
  params.for_each([&](const std::string&, const Tensor&) { ++count; });
  if (g.size() != count || v.size() != count) {
    throw UsageError("sgd_step: gradient/velocity layout does not match parameters");
  }
  for (const Tensor* t : g) {
    if (!t->all_finite()) throw NumericalError("sgd_step: non-finite gradient");
  }
  std::size_t i = 0;
  params.for_each([&](const std::string& name, Tensor& p) {
    const Tensor& gi = *g[i];
    Tensor& vi = *v[i];
    ++i;
    if (trainable && !trainable(name)) return;
    if (gi.shape() != p.shape() || vi.shape() != p.shape()) {
      throw DimensionError("sgd_step: shape mismatch at " + name);
    }
    for (std::size_t k = 0; k < p.size(); ++k) {
      vi[k] = momentum * vi[k] - learning_rate * (gi[k] + weight_decay * p[k]);
      p[k] += vi[k];
    }
  });
  ++params.revision;
}

namespace {

std::vector<Label> labels_of(std::span<const TrainSample> s) {
  std::vector<Label> l;
  for (const auto& x : s) l.push_back(x.label);
  return l;
}

std::vector<std::size_t> views_of(std::span<const TrainSample> s) {
  std::vector<std::size_t> v;
  for (const auto& x : s) v.push_back(x.view);
  return v;
}

std::string norm_report(const NetworkParams& params) {
  std::ostringstream os;
  os << std::setprecision(6);
  params.for_each([&](const std::string& name, const Tensor& t) {
    os << ' ' << name << '=' << std::sqrt(t.squared_norm());
  });
  return os.str();
}

}  // namespace

double dataset_cost(const NetworkParams& params, std::span<const TrainSample> samples,
                    const TrainConfig& config) {
  const auto labels = labels_of(samples);
  const auto views = views_of(samples);
  const auto batches = make_batches(labels, views, config.batch_size, config.seed, 0, params.mode);
  double total = 0.0;
  for (const auto& b : batches) total += batch_cost(params, samples, b, config).cost;
  return total / static_cast<double>(batches.size());
}

TrainResult train(const TrainConfig& config, NetworkParams initial,
                  std::span<const TrainSample> train_set, std::span<const TrainSample> dev_set,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (config.mode != initial.mode) throw UsageError("train: config mode differs from network mode");
  TrainResult result{std::move(initial), {}};
  NetworkParams& params = result.params;
  ParamGrads velocity = zeros_like(params);
  const auto labels = labels_of(train_set);
  const auto views = views_of(train_set);
  std::function<bool(const std::string&)> trainable;
  if (config.freeze_conv) {
    trainable = [](const std::string& name) { return name.find("f5_") != std::string::npos; };
  }

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto batches = make_batches(labels, views, config.batch_size, config.seed, epoch, params.mode);
    EpochRecord rec;
    rec.epoch = epoch + 1;
    double total = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      ParamGrads grads = zeros_like(params);
      const BatchResult r = batch_cost(params, train_set, batches[b], config, &grads);
      if (!std::isfinite(r.cost)) {
        throw NumericalError("non-finite cost at epoch " + std::to_string(epoch + 1) + ", batch " +
                             std::to_string(b) + "; parameter norms:" + norm_report(params));
      }
      total += r.cost;
      rec.pairs += r.pairs;
      sgd_step(params, grads, config.learning_rate, config.momentum, config.weight_decay, velocity,
               trainable);
    }
    rec.train_cost = total / static_cast<double>(batches.size());
    if (!dev_set.empty()) rec.dev_cost = dataset_cost(params, dev_set, config);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec, params);
  }
  return result;
}

TrainResult train(const TrainConfig& config, const NetConfig& net,
                  std::span<const TrainSample> train_set, std::span<const TrainSample> dev_set,
                  const EpochCallback& on_epoch) {
  return train(config, init_network(net, config.mode, config.seed), train_set, dev_set, on_epoch);
}

void write_epoch_log(const std::filesystem::path& path, std::span<const EpochRecord> history) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write epoch log: " + path.string());
  out << "epoch,train_cost,dev_cost,seconds\n" << std::setprecision(17);
  for (const auto& r : history) {
    out << r.epoch << ',' << r.train_cost << ',';
    if (r.dev_cost) out << *r.dev_cost;
    out << ',' << std::setprecision(6) << r.seconds << std::setprecision(17) << '\n';
  }
}

}  // namespace siamnet::train
