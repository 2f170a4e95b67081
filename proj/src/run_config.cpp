#include "aisformer/run_config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "aisformer/errors.hpp"

namespace aisf {

namespace {

std::string trim(const std::string& s) {
  auto b = std::find_if_not(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
  auto e = std::find_if_not(s.rbegin(), s.rend(), [](unsigned char c) { return std::isspace(c); }).base();
  return b < e ? std::string(b, e) : std::string();
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
}

bool parse_bool(const std::string& key, std::string v) {
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

std::string real_str(double d) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", d);
  return buf;
}

}  // namespace

RunConfig::RunConfig() {
  synth.images = 32;
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = {
      "embed_dim",      "roi_height",     "roi_width",        "heads",           "encoder_layers",
      "decoder_layers", "samples_per_bin", "ffn_hidden",      "decoder_ffn",     "layer_norm",
      "mlp_activation", "occluder",       "visible",          "invisible",       "backbone",
      "image_channels", "learning_rate",  "batch_size",       "iterations",      "seed",
      "checkpoint_interval", "dataset",   "synth_images",     "synth_seed",      "canvas_width",
      "canvas_height",  "synth_min_shapes", "synth_max_shapes", "min_visible_fraction"};
  return k;
}

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  HeadConfig& h = model.head;
  if (key == "embed_dim") h.channels = parse_unsigned(key, v);
  else if (key == "roi_height") h.roi_height = parse_unsigned(key, v);
  else if (key == "roi_width") h.roi_width = parse_unsigned(key, v);
  else if (key == "heads") h.heads = parse_unsigned(key, v);
  else if (key == "encoder_layers") h.encoder_layers = parse_unsigned(key, v);
  else if (key == "decoder_layers") h.decoder_layers = parse_unsigned(key, v);
  else if (key == "samples_per_bin") h.samples_per_bin = parse_unsigned(key, v);
  else if (key == "ffn_hidden") h.ffn_hidden = parse_unsigned(key, v);
  else if (key == "decoder_ffn") h.decoder_ffn = parse_bool(key, v);
  else if (key == "layer_norm") h.layer_norm = parse_bool(key, v);
  else if (key == "mlp_activation") {
    if (v == "relu") h.mlp_activation = ActivationKind::relu;
    else if (v == "sigmoid") h.mlp_activation = ActivationKind::sigmoid;
    else throw ConfigError("config key 'mlp_activation': expected relu or sigmoid, got '" + v + "'");
  }
  else if (key == "occluder") h.queries.occluder = parse_bool(key, v);
  else if (key == "visible") h.queries.visible = parse_bool(key, v);
  else if (key == "invisible") h.queries.invisible = parse_bool(key, v);
  else if (key == "amodal") {
    if (!parse_bool(key, v)) throw ConfigError("the amodal head cannot be disabled");
  }
  else if (key == "backbone") model.backbone = parse_backbone_kind(v);
  else if (key == "image_channels") model.image_channels = parse_unsigned(key, v);
  else if (key == "learning_rate") learning_rate = parse_real(key, v);
  else if (key == "batch_size") batch_size = parse_unsigned(key, v);
  else if (key == "iterations") iterations = parse_unsigned(key, v);
  else if (key == "seed") model.seed = parse_unsigned(key, v);
  else if (key == "checkpoint_interval") checkpoint_interval = parse_unsigned(key, v);
  else if (key == "dataset") dataset = v;
  else if (key == "synth_images") synth.images = parse_unsigned(key, v);
  else if (key == "synth_seed") synth.seed = parse_unsigned(key, v);
  else if (key == "canvas_width") synth.width = parse_unsigned(key, v);
  else if (key == "canvas_height") synth.height = parse_unsigned(key, v);
  else if (key == "synth_min_shapes") synth.min_shapes = parse_unsigned(key, v);
  else if (key == "synth_max_shapes") synth.max_shapes = parse_unsigned(key, v);
  else if (key == "min_visible_fraction") min_visible_fraction = parse_real(key, v);
  else throw ConfigError("unknown config key '" + key + "'");
}

std::map<std::string, std::string> RunConfig::to_map() const {
  const HeadConfig& h = model.head;
  auto b = [](bool x) { return std::string(x ? "true" : "false"); };
  return {
      {"embed_dim", std::to_string(h.channels)},
      {"roi_height", std::to_string(h.roi_height)},
      {"roi_width", std::to_string(h.roi_width)},
      {"heads", std::to_string(h.heads)},
      {"encoder_layers", std::to_string(h.encoder_layers)},
      {"decoder_layers", std::to_string(h.decoder_layers)},
      {"samples_per_bin", std::to_string(h.samples_per_bin)},
      {"ffn_hidden", std::to_string(h.ffn_hidden)},
      {"decoder_ffn", b(h.decoder_ffn)},
      {"layer_norm", b(h.layer_norm)},
      {"mlp_activation", h.mlp_activation == ActivationKind::relu ? "relu" : "sigmoid"},
      {"occluder", b(h.queries.occluder)},
      {"visible", b(h.queries.visible)},
      {"invisible", b(h.queries.invisible)},
      {"backbone", backbone_kind_name(model.backbone)},
      {"image_channels", std::to_string(model.image_channels)},
      {"learning_rate", real_str(learning_rate)},
      {"batch_size", std::to_string(batch_size)},
      {"iterations", std::to_string(iterations)},
      {"seed", std::to_string(model.seed)},
      {"checkpoint_interval", std::to_string(checkpoint_interval)},
      {"dataset", dataset},
      {"synth_images", std::to_string(synth.images)},
      {"synth_seed", std::to_string(synth.seed)},
      {"canvas_width", std::to_string(synth.width)},
      {"canvas_height", std::to_string(synth.height)},
      {"synth_min_shapes", std::to_string(synth.min_shapes)},
      {"synth_max_shapes", std::to_string(synth.max_shapes)},
      {"min_visible_fraction", real_str(min_visible_fraction)},
  };
}

RunConfig RunConfig::from_map(const std::map<std::string, std::string>& values) {
  RunConfig c;
  for (const auto& [k, v] : values) c.set(k, v);
  return c;
}

void RunConfig::validate() const {
  model.head.validate();
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (model.image_channels == 0) throw ConfigError("image_channels must be positive");
  if (min_visible_fraction < 0.0 || min_visible_fraction > 1.0) {
    throw ConfigError("min_visible_fraction must lie in [0, 1]");
  }
}

RunConfig parse_config_text(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(number) + ": expected key = value");
    try {
      base.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(number) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_config_file(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), std::move(base));
}

std::string config_to_text(const RunConfig& config) {
  std::string out;
  for (const auto& [k, v] : config.to_map()) out += k + " = " + v + "\n";
  return out;
}

std::size_t worker_count() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("AISF_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && cap > 0) n = std::min(n, static_cast<std::size_t>(cap));
  }
  return n;
}

}  // namespace aisf
