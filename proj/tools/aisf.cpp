// aisf: synthesize data, train, evaluate, visualize attention and run the
// query-set ablation.
//
// Exit codes: 0 success, 1 usage error, 2 I/O or file format failure,
// 3 non-finite training loss, 4 configuration or input mismatch.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "aisformer/checkpoint.hpp"
#include "aisformer/errors.hpp"
#include "aisformer/pipeline.hpp"
#include "aisformer/run_config.hpp"
#include "aisformer/training.hpp"

namespace {

using namespace aisf;
namespace fs = std::filesystem;

constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitNonFinite = 3;
constexpr int kExitMismatch = 4;

// Raised for checkpoint/dataset incompatibilities detected by the CLI.
struct MismatchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string flag_name(const std::string& key) {
  std::string s = key;
  for (char& c : s) {
    if (c == '_') c = '-';
  }
  return "--" + s;
}

// Every RunConfig key as a `--key-name VALUE` option plus the query toggles.
struct ConfigFlags {
  std::string config_path;
  std::map<std::string, std::string> values;
  std::vector<std::string> sets;
  bool no_occluder = false;
  bool no_visible = false;
  bool no_invisible = false;

  void attach(CLI::App& app) {
    app.add_option("--config", config_path, "key = value config file; flags override its entries");
    for (const auto& key : RunConfig::keys()) {
      app.add_option_function<std::string>(
          flag_name(key), [this, key](const std::string& v) { values[key] = v; }, "config key " + key);
    }
    app.add_option("--set", sets, "extra key=value override (repeatable)");
    app.add_flag("--no-occluder", no_occluder, "disable the occluder query");
    app.add_flag("--no-visible", no_visible, "disable the visible query");
    app.add_flag("--no-invisible", no_invisible, "disable the invisible embedding");
  }

  RunConfig resolve(RunConfig base = RunConfig{}) const {
    RunConfig cfg = config_path.empty() ? base : load_config_file(config_path, base);
    for (const auto& [k, v] : values) cfg.set(k, v);
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (no_occluder) cfg.model.head.queries.occluder = false;
    if (no_visible) cfg.model.head.queries.visible = false;
    if (no_invisible) cfg.model.head.queries.invisible = false;
    cfg.validate();
    return cfg;
  }
};

struct LoadedData {
  Dataset dataset;
  std::vector<Image8> images;
};

LoadedData load_or_synthesize(const RunConfig& cfg) {
  if (!cfg.dataset.empty()) {
    LoadedData d;
    d.dataset = load_annotations(cfg.dataset);
    d.images = load_images(d.dataset);
    return d;
  }
  SynthDataset s = synth_dataset(cfg.synth);
  return {std::move(s.dataset), std::move(s.images)};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void check_channels(const RunConfig& cfg, const std::vector<Image8>& images) {
  for (const auto& img : images) {
    if (img.channels != cfg.model.image_channels) {
      throw MismatchError("model expects " + std::to_string(cfg.model.image_channels) + "-channel images, got " +
                          std::to_string(img.channels));
    }
  }
}

// Every dataset category must exist in the checkpoint under the same name.
void check_categories(const std::vector<Category>& trained, const std::vector<Category>& data) {
  std::map<std::int64_t, std::string> known;
  for (const auto& c : trained) known[c.id] = c.name;
  for (const auto& c : data) {
    auto it = known.find(c.id);
    if (it == known.end() || it->second != c.name) {
      throw MismatchError("dataset category " + std::to_string(c.id) + " '" + c.name +
                          "' is not among the checkpoint's categories");
    }
  }
}

// --- synth ---

struct SynthArgs {
  std::string out;
  SynthOptions options;
};

int cmd_synth(const SynthArgs& a) {
  const SynthDataset s = synth_dataset(a.options);
  write_synth_dataset(s, a.out);
  std::printf("wrote %zu images with %zu instances to %s\n", s.dataset.images.size(), s.dataset.instance_count(),
              a.out.c_str());
  return 0;
}

// --- train ---

struct TrainArgs {
  ConfigFlags flags;
  std::string out;
  std::string log;
  std::string resume;
  std::size_t stop_after = 0;
  std::size_t print_every = 100;
};

int cmd_train(const TrainArgs& a) {
  std::optional<Checkpoint> resume;
  RunConfig cfg;
  if (!a.resume.empty()) {
    resume = load_checkpoint(a.resume);
    cfg = a.flags.resolve(resume->config);
    if (cfg.to_map() != resume->config.to_map()) {
      // Only the run length may change on resume.
      RunConfig probe = cfg;
      probe.iterations = resume->config.iterations;
      probe.checkpoint_interval = resume->config.checkpoint_interval;
      if (probe.to_map() != resume->config.to_map()) {
        throw MismatchError("resumed run must keep the checkpoint's configuration");
      }
    }
  } else {
    cfg = a.flags.resolve();
  }

  const LoadedData data = load_or_synthesize(cfg);
  check_channels(cfg, data.images);
  const SampleSet set = build_sample_set(data.dataset, data.images, cfg.model.head, cfg.min_visible_fraction);
  std::optional<Trainer> trainer;
  if (resume) {
    check_categories(resume->categories, data.dataset.categories);
    resume->config = cfg;
    trainer.emplace(*resume, set);
  } else {
    trainer.emplace(cfg, set, data.dataset.categories);
  }

  const std::string log_path = a.log.empty() ? a.out + ".loss.csv" : a.log;
  std::ofstream log(log_path, resume ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot write " + log_path);
  if (!resume) log << loss_log_header();

  std::printf("training %s on %zu ROIs from %zu images, %zu parameters\n", cfg.model.head.queries.label().c_str(),
              set.samples.size(), data.dataset.images.size(), trainer->model().parameters().scalar_count());
  std::size_t done_this_run = 0;
  while (trainer->iteration() < cfg.iterations) {
    if (a.stop_after && done_this_run == a.stop_after) break;
    const StepLoss loss = trainer->step();
    ++done_this_run;
    log << loss_log_row(loss);
    if (a.print_every && (loss.iteration % a.print_every == 0 || trainer->iteration() == cfg.iterations)) {
      std::printf("iter %6llu  loss %.6f\n", static_cast<unsigned long long>(loss.iteration), loss.total);
      std::fflush(stdout);
    }
    if (cfg.checkpoint_interval && trainer->iteration() % cfg.checkpoint_interval == 0) {
      save_checkpoint(trainer->checkpoint(), a.out);
    }
  }
  log.flush();
  if (!log) throw IoError("write failed for " + log_path);
  save_checkpoint(trainer->checkpoint(), a.out);
  std::printf("saved %s at iteration %llu\n", a.out.c_str(), static_cast<unsigned long long>(trainer->iteration()));
  return 0;
}

// --- eval ---

struct EvalArgs {
  std::string checkpoint;
  std::string dataset;
  std::optional<std::uint64_t> synth_seed;
  std::optional<std::size_t> synth_images;
  std::string out;
  bool oracle_gt = false;
};

int cmd_eval(const EvalArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  RunConfig cfg = ck.config;
  cfg.dataset = a.dataset;
  if (a.synth_seed) cfg.synth.seed = *a.synth_seed;
  if (a.synth_images) cfg.synth.images = *a.synth_images;
  const LoadedData data = load_or_synthesize(cfg);
  check_categories(ck.categories, data.dataset.categories);
  check_channels(cfg, data.images);

  EvalReport report;
  std::map<std::string, std::string> labels{{"checkpoint", a.checkpoint},
                                             {"queries", cfg.model.head.queries.label()}};
  std::optional<double> iou;
  if (a.oracle_gt) {
    report = evaluate(ground_truth_detections(data.dataset), all_instances(data.dataset));
    labels["detections"] = "ground truth";
  } else {
    const AisformerModel model = model_from_checkpoint(ck);
    const SampleSet set = build_sample_set(data.dataset, data.images, cfg.model.head);
    const ModelEvaluation ev = evaluate_model(model, data.dataset, set);
    report = ev.report;
    iou = ev.mean_amodal_iou;
    labels["detections"] = "model";
    labels["mean_amodal_iou"] = std::to_string(ev.mean_amodal_iou);
  }

  std::map<std::int64_t, std::string> names;
  for (const auto& c : data.dataset.categories) names[c.id] = c.name;
  const std::string table = report_to_table(report, names);
  std::fputs(table.c_str(), stdout);
  if (iou) std::printf("mean amodal IoU (mask resolution): %.4f\n", *iou);
  if (!a.out.empty()) {
    ensure_dir(a.out);
    write_text(fs::path(a.out) / "report.json", report_to_json(report, labels));
    write_text(fs::path(a.out) / "report.txt", table);
  }
  return 0;
}

// --- viz-attention ---

struct VizArgs {
  std::string checkpoint;
  std::string image;
  std::vector<double> box;
  std::string out;
};

int cmd_viz(const VizArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const Image8 image = read_pnm(a.image);
  if (image.channels != ck.config.model.image_channels) {
    throw MismatchError("model expects " + std::to_string(ck.config.model.image_channels) + "-channel images");
  }
  const BoundingBox box{a.box[0], a.box[1], a.box[0] + a.box[2], a.box[1] + a.box[3]};
  const AisformerModel model = model_from_checkpoint(ck);
  AttentionViz viz;
  try {
    viz = visualize_attention(model, image, box);
  } catch (const InputError& e) {
    throw MismatchError(e.what());
  }
  ensure_dir(a.out);
  write_pnm(fs::path(a.out) / (image.channels == 3 ? "roi.ppm" : "roi.pgm"), viz.roi_crop);
  for (const auto& [kind, map] : viz.maps) {
    const fs::path p = fs::path(a.out) / (std::string("attention_") + mask_kind_name(kind) + ".pgm");
    write_pnm(p, map);
    std::printf("wrote %s\n", p.c_str());
  }
  return 0;
}

// --- ablate ---

struct AblateArgs {
  ConfigFlags flags;
  std::string out;
  double train_fraction = 0.8;
};

int cmd_ablate(const AblateArgs& a) {
  const RunConfig cfg = a.flags.resolve();
  const LoadedData data = load_or_synthesize(cfg);
  check_channels(cfg, data.images);
  const auto n_train = static_cast<std::size_t>(a.train_fraction * static_cast<double>(data.dataset.images.size()));
  auto [train, test] = split_dataset(data.dataset, n_train);
  const std::vector<Image8> train_images(data.images.begin(), data.images.begin() + static_cast<std::ptrdiff_t>(n_train));
  const std::vector<Image8> test_images(data.images.begin() + static_cast<std::ptrdiff_t>(n_train), data.images.end());
  const SampleSet train_set = build_sample_set(train, train_images, cfg.model.head, cfg.min_visible_fraction);
  const SampleSet test_set = build_sample_set(test, test_images, cfg.model.head);
  std::printf("ablation: %zu train ROIs, %zu test ROIs, %zu iterations per run\n", train_set.samples.size(),
              test_set.samples.size(), cfg.iterations);

  const auto results = run_ablation(cfg, {&train, &train_set, &test, &test_set}, [](const AblationResult& r) {
    std::printf("Exp #%d (%s): amodal IoU %.4f  AP %.4f\n", r.config.experiment, r.config.flags.label().c_str(),
                r.evaluation.mean_amodal_iou, r.evaluation.report.ap);
    std::fflush(stdout);
  });
  const std::string table = ablation_table(results);
  std::fputs(table.c_str(), stdout);
  if (!a.out.empty()) {
    ensure_dir(a.out);
    write_text(fs::path(a.out) / "ablation.txt", table);
    write_text(fs::path(a.out) / "ablation.json", ablation_json(results));
    write_text(fs::path(a.out) / "config.txt", config_to_text(cfg));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Amodal instance segmentation with transformer mask heads"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "generate a synthetic occluded-shapes dataset");
  s->add_option("--out", synth.out, "output directory")->required();
  s->add_option("--seed", synth.options.seed, "generator seed")->capture_default_str();
  s->add_option("--images", synth.options.images, "number of images")->capture_default_str();
  s->add_option("--width", synth.options.width, "canvas width")->capture_default_str();
  s->add_option("--height", synth.options.height, "canvas height")->capture_default_str();
  s->add_option("--min-shapes", synth.options.min_shapes, "fewest shapes per image")->capture_default_str();
  s->add_option("--max-shapes", synth.options.max_shapes, "most shapes per image")->capture_default_str();

  TrainArgs train;
  auto* t = app.add_subcommand("train", "train on ground-truth ROIs; writes a checkpoint and a CSV loss log");
  train.flags.attach(*t);
  t->add_option("--out", train.out, "checkpoint path")->required();
  t->add_option("--log", train.log, "loss log path (default: <out>.loss.csv)");
  t->add_option("--resume", train.resume, "continue from this checkpoint");
  t->add_option("--stop-after", train.stop_after, "stop after this many steps in this invocation");
  t->add_option("--print-every", train.print_every, "progress line interval (0: silent)")->capture_default_str();

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "mask AP/AR of a checkpoint on ground-truth boxes");
  e->add_option("--checkpoint", eval.checkpoint, "checkpoint path")->required();
  e->add_option("--dataset", eval.dataset, "annotations.json (default: synthesize with the checkpoint's settings)");
  e->add_option("--synth-seed", eval.synth_seed, "seed for the synthesized evaluation set");
  e->add_option("--synth-images", eval.synth_images, "size of the synthesized evaluation set");
  e->add_option("--out", eval.out, "directory for report.json and report.txt");
  e->add_flag("--oracle-gt", eval.oracle_gt, "score the ground-truth masks themselves as detections");

  VizArgs viz;
  auto* v = app.add_subcommand("viz-attention", "write per-query cross-attention maps for one box");
  v->add_option("--checkpoint", viz.checkpoint, "checkpoint path")->required();
  v->add_option("--image", viz.image, "PPM or PGM image")->required();
  v->add_option("--box", viz.box, "box as x y w h in image pixels")->required()->expected(4)->delimiter(',');
  v->add_option("--out", viz.out, "output directory")->required();

  AblateArgs ablate;
  auto* ab = app.add_subcommand("ablate", "train and evaluate the six query-set configurations");
  ablate.flags.attach(*ab);
  ab->add_option("--out", ablate.out, "directory for ablation.txt and ablation.json");
  ab->add_option("--train-fraction", ablate.train_fraction, "fraction of images used for training")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& ok) {
    return app.exit(ok);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kExitUsage;
  }

  try {
    if (s->parsed()) return cmd_synth(synth);
    if (t->parsed()) return cmd_train(train);
    if (e->parsed()) return cmd_eval(eval);
    if (v->parsed()) return cmd_viz(viz);
    if (ab->parsed()) return cmd_ablate(ablate);
  } catch (const NonFiniteLoss& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kExitNonFinite;
  } catch (const MismatchError& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kExitMismatch;
  } catch (const ConfigError& err) {
    std::fprintf(stderr, "config error: %s\n", err.what());
    return kExitMismatch;
  } catch (const IoError& err) {
    std::fprintf(stderr, "io error: %s\n", err.what());
    return kExitIo;
  } catch (const FormatError& err) {
    std::fprintf(stderr, "format error: %s\n", err.what());
    return kExitIo;
  } catch (const ParseError& err) {
    std::fprintf(stderr, "annotation error: %s\n", err.what());
    return kExitIo;
  } catch (const DataError& err) {
    std::fprintf(stderr, "annotation error: %s\n", err.what());
    return kExitIo;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kExitUsage;
  }
  return kExitUsage;
}
