#include "aisformer/checkpoint.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "aisformer/errors.hpp"

namespace aisf {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'A', 'I', 'S', 'F'};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(const std::string& in, std::size_t& pos) {
  if (in.size() - pos < sizeof(T)) throw FormatError("checkpoint truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

std::string checkpoint_to_bytes(const Checkpoint& ck) {
  nlohmann::json header;
  header["config"] = ck.config.to_map();
  header["iteration"] = ck.iteration;
  header["rng_state"] = ck.rng_state;
  header["categories"] = nlohmann::json::array();
  for (const auto& c : ck.categories) header["categories"].push_back({{"id", c.id}, {"name", c.name}});
  header["tensors"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : ck.parameters) {
    header["tensors"].push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.numel();
  }
  header["value_count"] = offset;
  const std::string text = header.dump();

  std::string out(kMagic, 4);
  put<std::uint32_t>(out, ck.version);
  put<std::uint64_t>(out, text.size());
  out += text;
  out.reserve(out.size() + offset * sizeof(double));
  for (const auto& [name, t] : ck.parameters) {
    for (double v : t.data()) put<double>(out, v);
  }
  return out;
}

Checkpoint checkpoint_from_bytes(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("not an AISF checkpoint");
  std::size_t pos = 4;
  Checkpoint ck;
  ck.version = get<std::uint32_t>(bytes, pos);
  if (ck.version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(ck.version));
  }
  const auto header_len = get<std::uint64_t>(bytes, pos);
  if (bytes.size() - pos < header_len) throw FormatError("checkpoint header truncated");
  const std::size_t data_start = pos + header_len;
  try {
    const auto header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                              bytes.begin() + static_cast<std::ptrdiff_t>(data_start));
    ck.config = RunConfig::from_map(header.at("config").get<std::map<std::string, std::string>>());
    ck.iteration = header.at("iteration").get<std::uint64_t>();
    ck.rng_state = header.at("rng_state").get<std::string>();
    for (const auto& c : header.at("categories")) {
      ck.categories.push_back({c.at("id").get<std::int64_t>(), c.at("name").get<std::string>()});
    }
    const auto value_count = header.at("value_count").get<std::size_t>();
    if ((bytes.size() - data_start) != value_count * sizeof(double)) {
      throw FormatError("checkpoint payload size does not match its header");
    }
    for (const auto& entry : header.at("tensors")) {
      const auto shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::size_t>();
      const std::size_t n = shape_numel(shape);
      if (offset > value_count || value_count - offset < n) throw FormatError("checkpoint tensor out of range");
      std::vector<double> values(n);
      std::memcpy(values.data(), bytes.data() + data_start + offset * sizeof(double), n * sizeof(double));
      ck.parameters.add(entry.at("name").get<std::string>(), Tensor(shape, std::move(values), true));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
  return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  const std::string bytes = checkpoint_to_bytes(ck);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_bytes(buf.str());
}

ParameterSet snapshot_parameters(const ParameterSet& params) {
  ParameterSet out;
  for (const auto& [name, t] : params) out.add(name, Tensor(t.shape(), std::vector<double>(t.data().begin(), t.data().end()), true));
  return out;
}

AisformerModel model_from_checkpoint(const Checkpoint& ck) {
  ck.config.validate();
  AisformerModel model(ck.config.model);
  for (const auto& [name, t] : model.parameters()) {
    if (!ck.parameters.contains(name)) throw FormatError("checkpoint lacks parameter '" + name + "'");
  }
  for (const auto& [name, t] : ck.parameters) {
    if (!model.parameters().contains(name)) throw FormatError("checkpoint has unknown parameter '" + name + "'");
  }
  try {
    model.load_values(ck.parameters);
  } catch (const DimensionError& e) {
    throw FormatError(e.what());
  }
  return model;
}

}  // namespace aisf
