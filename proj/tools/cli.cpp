#include "cli.hpp"

#include <CLI11.hpp>
#include <fmt/core.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>

#include "siamnet/check.hpp"
#include "siamnet/dataio.hpp"
#include "siamnet/errors.hpp"
#include "siamnet/eval.hpp"
#include "siamnet/parallel.hpp"
#include "siamnet/trainer.hpp"

namespace siamnet::cli {

namespace fs = std::filesystem;

namespace {

struct GlobalOptions {
  std::uint64_t seed = 0;
  std::optional<std::size_t> threads;
  fs::path out_dir = ".";
};

struct SplitOptions {
  fs::path manifest;
  std::string protocol = "viper";
  std::size_t repeats = data::kDefaultRepeats;
};

struct ArchOptions {
  std::size_t image_height = 128;
  std::size_t image_width = 48;
  std::size_t part_height = 48;
  std::vector<std::size_t> part_offsets{0, 40, 80};
  std::size_t c1_channels = 64;
  std::size_t c3_channels = 64;
  std::size_t feature_dim = 500;

  NetConfig net() const {
    if (part_offsets.size() != kNumParts) {
      throw UsageError("--part-offsets needs exactly 3 values, got " +
                       std::to_string(part_offsets.size()));
    }
    NetConfig c;
    c.image_height = image_height;
    c.image_width = image_width;
    c.parts.part_height = part_height;
    std::copy(part_offsets.begin(), part_offsets.end(), c.parts.offsets.begin());
    c.c1_channels = c1_channels;
    c.c3_channels = c3_channels;
    c.feature_dim = feature_dim;
    c.validate();
    return c;
  }
};

struct TrainOptions {
  fs::path manifest;
  fs::path split;
  std::string cost = "deviance";
  std::string mode = "general";
  train::TrainConfig config;
  ArchOptions arch;
  bool train_mirrors = true;
  bool dev_cost = false;
  fs::path model_out = "model.snet";
  fs::path log = "train_log.csv";
};

struct EvalOptions {
  std::vector<fs::path> models;
  fs::path manifest;
  std::vector<fs::path> splits;
  bool mirror_fusion = true;
  fs::path out = "cmc.csv";
  fs::path scores;
};

struct GradcheckOptions {
  std::string module = "all";
  std::size_t trials = 20;
};

struct FiltersOptions {
  fs::path model;
  fs::path out = "filters.png";
  std::string branch = "a";
};

struct SynthOptions {
  data::SyntheticOptions data;
  fs::path manifest = "manifest.csv";
};

struct AggregateOptions {
  std::vector<fs::path> inputs;
  fs::path out = "cmc.csv";
};

fs::path under(const fs::path& dir, const fs::path& p) { return p.is_absolute() ? p : dir / p; }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
}

std::string camera_a(std::span<const data::PersonImage> images) {
  if (images.empty()) throw DataError("no images");
  return std::min_element(images.begin(), images.end(), [](const auto& a, const auto& b) {
           return a.camera_id < b.camera_id;
         })->camera_id;
}

// ---- subcommands -------------------------------------------------------------

void cmd_split(const GlobalOptions& g, const SplitOptions& o) {
  // Splits only need ids; images are not decoded.
  std::vector<data::PersonImage> ids;
  for (const auto& row : data::read_manifest(o.manifest)) {
    data::PersonImage img;
    img.subject_id = row.subject_id;
    img.camera_id = row.camera_id;
    img.index = row.index;
    ids.push_back(std::move(img));
  }
  data::SplitSpec spec;
  spec.protocol = data::protocol_from_string(o.protocol);
  spec.seed = g.seed;
  for (std::size_t r = 0; r < o.repeats; ++r) {
    spec.repeat = r;
    const data::SplitAssignment split = data::make_split(ids, spec);
    const fs::path path = g.out_dir / fmt::format("split_{:02}.csv", r);
    data::write_split(path, split);
    fmt::print("{}: {} train, {} probe, {} gallery subjects\n", path.string(),
               split.subjects(data::Role::Train).size(), split.subjects(data::Role::Probe).size(),
               split.subjects(data::Role::Gallery).size());
  }
}

void cmd_train(const GlobalOptions& g, TrainOptions o) {
  train::TrainConfig config = o.config;
  config.cost = train::cost_from_string(o.cost);
  config.mode = train::mode_from_string(o.mode);
  config.seed = g.seed;
  config.threads = resolve_threads(g.threads);
  config.validate();
  const NetConfig net = o.arch.net();

  const auto images = data::load_manifest(o.manifest, {net.image_height, net.image_width},
                                          config.threads);
  std::vector<data::PersonImage> train_images, dev_images;
  std::string view_a;
  if (o.split.empty()) {
    train_images = images;
    view_a = camera_a(images);
  } else {
    const data::SplitAssignment split = data::read_split(o.split);
    data::SplitSets sets = data::apply_split(images, split);
    train_images = std::move(sets.train);
    dev_images = std::move(sets.probe);
    dev_images.insert(dev_images.end(), sets.gallery.begin(), sets.gallery.end());
    view_a = split.probe_camera;
  }
  if (o.train_mirrors) train_images = data::with_mirrors(train_images);
  const auto train_set = train::make_samples(train_images, net.parts, view_a);
  std::vector<train::TrainSample> dev_set;
  if (o.dev_cost && !dev_images.empty()) dev_set = train::make_samples(dev_images, net.parts, view_a);

  fmt::print("training on {} images ({} dev), {} parameters\n", train_set.size(), dev_set.size(),
             init_network(net, config.mode, config.seed).parameter_count());
  const auto report = [](const train::EpochRecord& r, const NetworkParams&) {
    fmt::print("epoch {:4} cost {:.6f}", r.epoch, r.train_cost);
    if (r.dev_cost) fmt::print(" dev {:.6f}", *r.dev_cost);
    fmt::print(" ({:.1f}s)\n", r.seconds);
    std::fflush(stdout);
  };
  const train::TrainResult result = train::train(config, net, train_set, dev_set, report);
  save_model(result.params, under(g.out_dir, o.model_out));
  train::write_epoch_log(under(g.out_dir, o.log), result.history);
}

void cmd_eval(const GlobalOptions& g, const EvalOptions& o) {
  const std::size_t threads = resolve_threads(g.threads);
  std::vector<NetworkParams> models;
  for (const auto& m : o.models) models.push_back(load_model(m));
  const NetConfig& net = models.front().config;
  const auto images = data::load_manifest(o.manifest, {net.image_height, net.image_width}, threads);

  std::vector<eval::CmcCurve> curves;
  for (std::size_t s = 0; s < o.splits.size(); ++s) {
    const data::SplitSets sets = data::apply_split(images, data::read_split(o.splits[s]));
    const eval::ScoreTable table =
        eval::score_set(models, sets.probe, sets.gallery, o.mirror_fusion, threads);
    if (s == 0 && !o.scores.empty()) eval::write_score_csv(under(g.out_dir, o.scores), table);
    curves.push_back(eval::cmc(table));
    const eval::SimilarityStats st = eval::similarity_stats(table);
    fmt::print("{}: rank-1 {:.4f}, positive mean {:.4f}, negative mean {:.4f}\n",
               o.splits[s].string(), curves.back().rank(1), st.positive_mean, st.negative_mean);
  }
  const eval::CmcCurve mean = eval::aggregate_splits(curves);
  eval::write_cmc_csv(under(g.out_dir, o.out), mean);
  for (std::size_t k : {1, 5, 10, 20}) {
    if (k <= mean.rates.size()) fmt::print("rank-{:<2} {:.4f}\n", k, mean.rank(k));
  }
}

void cmd_gradcheck(const GlobalOptions& g, const GradcheckOptions& o) {
  check::CheckReport report;
  const auto add = [&](const check::CheckReport& r) {
    report.entries.insert(report.entries.end(), r.entries.begin(), r.entries.end());
  };
  const bool all = o.module == "all";
  if (all || o.module == "layers") add(check::check_layers(o.trials, g.seed));
  if (all || o.module == "pairwise") add(check::check_pairwise(o.trials, g.seed));
  if (all || o.module == "fullnet") add(check::check_fullnet(std::max<std::size_t>(1, o.trials / 10), g.seed));
  for (const auto& e : report.entries) {
    fmt::print("{:<28} {:.3e}  (< {:.0e})  {}\n", e.target, e.max_error, e.threshold,
               e.pass() ? "ok" : "FAIL");
  }
  if (!report.all_pass()) {
    const auto& w = report.worst();
    throw NumericalError(fmt::format("gradient check failed; worst: {} at {:.3e}", w.target, w.max_error));
  }
}

void cmd_filters(const GlobalOptions& g, const FiltersOptions& o) {
  const NetworkParams model = load_model(o.model);
  const Branch b = o.branch == "b" ? Branch::B : Branch::A;
  const Tensor grid = render_filter_grid(model.branch(b).c1_filters);
  const fs::path out = under(g.out_dir, o.out);
  data::write_image_rgb(out, grid);
  fmt::print("{}: {}x{} grid image\n", out.string(), grid.dim(2), grid.dim(1));
}

void cmd_synth(const GlobalOptions& g, SynthOptions o) {
  o.data.seed = g.seed;
  const auto images = data::make_synthetic_dataset(o.data);
  const fs::path image_dir = g.out_dir / "images";
  ensure_dir(image_dir);
  std::vector<data::ManifestRow> rows;
  for (const auto& img : images) {
    const std::string name = fmt::format("{}_{}_{}.png", img.subject_id, img.camera_id, img.index);
    data::write_image_rgb(image_dir / name, img.pixels);
    rows.push_back({img.subject_id, img.camera_id, img.index, fs::path("images") / name});
  }
  data::write_manifest(under(g.out_dir, o.manifest), rows);
  fmt::print("{} images of {} subjects\n", images.size(), o.data.subjects);
}

void cmd_aggregate(const GlobalOptions& g, const AggregateOptions& o) {
  std::vector<eval::CmcCurve> curves;
  for (const auto& p : o.inputs) curves.push_back(eval::read_cmc_csv(p));
  const eval::CmcCurve mean = eval::aggregate_splits(curves);
  eval::write_cmc_csv(under(g.out_dir, o.out), mean);
  fmt::print("rank-1 {:.4f} over {} curves\n", mean.rank(1), curves.size());
}

// TOML holding the global options and the chosen subcommand's section, with
// every value as parsed (or its default). Reading it back with --config
// repeats the run.
std::string config_echo(const CLI::App& app, const CLI::App& sub) {
  std::string out;
  const auto quote = [](const std::string& v) {
    char* end = nullptr;
    const bool bare = v == "true" || v == "false" ||
                      (!v.empty() && (std::strtod(v.c_str(), &end), *end == '\0'));
    return bare ? v : "\"" + v + "\"";
  };
  const auto emit = [&](const CLI::App& a) {
    for (const CLI::Option* o : a.get_options()) {
      if (!o->get_configurable() || o->get_name() == "--config") continue;
      std::vector<std::string> values;
      if (o->count() > 0) {
        values = o->reduced_results();
      } else if (!o->get_default_str().empty()) {
        values = {o->get_default_str()};
      } else {
        continue;
      }
      if (o->get_type_size_max() == 0) values = {o->as<bool>() ? "true" : "false"};
      out += o->get_single_name() + "=";
      if (o->get_expected_max() > 1) {
        std::string joined;
        for (const auto& v : values) joined += (joined.empty() ? "" : ", ") + quote(v);
        out += "[" + joined + "]\n";
      } else {
        out += quote(values.front()) + "\n";
      }
    }
  };
  emit(app);
  out += "\n[" + sub.get_name() + "]\n";
  emit(sub);
  return out;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage: return 1;
    case ErrorKind::Data: return 2;
    case ErrorKind::Numerical: return 3;
  }
  return 2;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Siamese CNN for person re-identification"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from a TOML file (e.g. a config echo)");

  GlobalOptions g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads (default: $SIAMNET_THREADS or 1)");
  app.add_option("--out-dir", g.out_dir, "Directory for every output")->capture_default_str();

  SplitOptions split;
  auto* s = app.add_subcommand("split", "Generate evaluation splits");
  s->add_option("--manifest", split.manifest, "Image manifest CSV")->required();
  s->add_option("--protocol", split.protocol, "viper or prid")->capture_default_str();
  s->add_option("--repeats", split.repeats, "Number of splits")->capture_default_str();

  TrainOptions tr;
  auto* t = app.add_subcommand("train", "Train a network");
  t->add_option("--manifest", tr.manifest, "Image manifest CSV")->required();
  t->add_option("--split", tr.split, "Split file; train subjects are used (default: all images)");
  t->add_option("--cost", tr.cost, "deviance or fisher")->capture_default_str();
  t->add_option("--mode", tr.mode, "general or specific")->capture_default_str();
  t->add_option("--neg-cost", tr.config.negative_cost, "Asymmetric negative cost c")->capture_default_str();
  t->add_option("--alpha", tr.config.alpha, "Deviance scale")->capture_default_str();
  t->add_option("--beta", tr.config.beta, "Deviance translation")->capture_default_str();
  t->add_option("--epochs", tr.config.epochs, "Training epochs")->capture_default_str();
  t->add_option("--lr", tr.config.learning_rate, "Learning rate")->capture_default_str();
  t->add_option("--momentum", tr.config.momentum, "SGD momentum")->capture_default_str();
  t->add_option("--weight-decay", tr.config.weight_decay, "L2 weight decay")->capture_default_str();
  t->add_option("--batch-size", tr.config.batch_size, "Mini-batch size")->capture_default_str();
  t->add_option("--cache-mb", tr.config.cache_budget_mb, "Forward cache budget per batch")
      ->capture_default_str();
  t->add_option("--image-height", tr.arch.image_height)->capture_default_str();
  t->add_option("--image-width", tr.arch.image_width)->capture_default_str();
  t->add_option("--part-height", tr.arch.part_height)->capture_default_str();
  t->add_option("--part-offsets", tr.arch.part_offsets)->delimiter(',')->capture_default_str();
  t->add_option("--c1-channels", tr.arch.c1_channels)->capture_default_str();
  t->add_option("--c3-channels", tr.arch.c3_channels)->capture_default_str();
  t->add_option("--feature-dim", tr.arch.feature_dim)->capture_default_str();
  t->add_flag("--train-mirrors,!--no-train-mirrors", tr.train_mirrors, "Add mirrored training images")
      ->default_val(true);
  t->add_flag("--dev-cost", tr.dev_cost, "Log the cost of the held-out split images every epoch")
      ->default_val(false);
  t->add_option("--model-out", tr.model_out, "Model file")->capture_default_str();
  t->add_option("--log", tr.log, "Per-epoch CSV")->capture_default_str();

  EvalOptions ev;
  auto* e = app.add_subcommand("eval", "Evaluate models on probe/gallery splits");
  e->add_option("--models", ev.models, "Model files, fused by sum")->required()->delimiter(',');
  e->add_option("--manifest", ev.manifest, "Image manifest CSV")->required();
  e->add_option("--split", ev.splits, "Split files; the CMC is averaged over them")
      ->required()
      ->delimiter(',');
  e->add_flag("--mirror-fusion,!--no-mirror-fusion", ev.mirror_fusion)->default_val(true);
  e->add_option("--out", ev.out, "CMC CSV")->capture_default_str();
  e->add_option("--scores", ev.scores, "Also dump the first split's score table");

  GradcheckOptions gc;
  auto* c = app.add_subcommand("gradcheck", "Finite-difference and oracle checks");
  c->add_option("--module", gc.module)
      ->check(CLI::IsMember({"layers", "pairwise", "fullnet", "all"}))
      ->capture_default_str();
  c->add_option("--trials", gc.trials)->check(CLI::PositiveNumber)->capture_default_str();

  FiltersOptions fo;
  auto* f = app.add_subcommand("filters", "Render first-layer filters");
  f->add_option("--model", fo.model)->required();
  f->add_option("--out", fo.out)->capture_default_str();
  f->add_option("--branch", fo.branch)->check(CLI::IsMember({"a", "b"}))->capture_default_str();

  SynthOptions sy;
  auto* y = app.add_subcommand("synth", "Write a synthetic two-camera dataset");
  y->add_option("--subjects", sy.data.subjects)->capture_default_str();
  y->add_option("--height", sy.data.geometry.height)->capture_default_str();
  y->add_option("--width", sy.data.geometry.width)->capture_default_str();
  y->add_option("--noise", sy.data.noise_sigma)->capture_default_str();
  y->add_option("--illumination", sy.data.illumination)->capture_default_str();
  y->add_option("--max-shift", sy.data.max_shift)->capture_default_str();
  y->add_option("--manifest", sy.manifest)->capture_default_str();

  AggregateOptions ag;
  auto* a = app.add_subcommand("aggregate", "Average CMC files");
  a->add_option("inputs", ag.inputs, "CMC CSV files")->required();
  a->add_option("--out", ag.out)->capture_default_str();

  for (auto* sub : app.get_subcommands({})) sub->configurable();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 1;
  }

  try {
    ensure_dir(g.out_dir);
    const auto* sub = app.get_subcommands().front();
    {
      std::ofstream echo(g.out_dir / (sub->get_name() + "_config.toml"), std::ios::trunc);
      echo << config_echo(app, *sub);
    }
    if (sub == s) cmd_split(g, split);
    if (sub == t) cmd_train(g, tr);
    if (sub == e) cmd_eval(g, ev);
    if (sub == c) cmd_gradcheck(g, gc);
    if (sub == f) cmd_filters(g, fo);
    if (sub == y) cmd_synth(g, sy);
    if (sub == a) cmd_aggregate(g, ag);
  } catch (const Error& err) {
    fmt::print(stderr, "error: {}\n", err.what());
    return exit_code(err.kind());
  } catch (const std::exception& err) {
    fmt::print(stderr, "error: {}\n", err.what());
    return 2;
  }
  return 0;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"siamnet"};
  for (const auto& s : args) argv.push_back(s.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace siamnet::cli
