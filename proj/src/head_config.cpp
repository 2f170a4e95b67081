#include "aisformer/head_config.hpp"

#include "aisformer/errors.hpp"

namespace aisf {

const char* mask_kind_name(MaskKind kind) {
  switch (kind) {
    case MaskKind::occluder:
      return "occluder";
    case MaskKind::visible:
      return "visible";
    case MaskKind::amodal:
      return "amodal";
    case MaskKind::invisible:
      return "invisible";
  }
  return "?";
}

std::vector<MaskKind> QueryFlags::query_kinds() const {
  std::vector<MaskKind> kinds;
  if (occluder) kinds.push_back(MaskKind::occluder);
  if (visible) kinds.push_back(MaskKind::visible);
  kinds.push_back(MaskKind::amodal);
  return kinds;
}

std::vector<MaskKind> QueryFlags::mask_kinds() const {
  auto kinds = query_kinds();
  if (invisible) kinds.push_back(MaskKind::invisible);
  return kinds;
}

std::string QueryFlags::label() const {
  std::string s = "amodal";
  if (occluder) s += "+occluder";
  if (visible) s += "+visible";
  if (invisible) s += "+invisible";
  return s;
}

void HeadConfig::validate() const {
  if (channels == 0 || roi_height == 0 || roi_width == 0 || heads == 0 || encoder_layers == 0 ||
      decoder_layers == 0 || samples_per_bin == 0) {
    throw ConfigError("head config dimensions must be positive");
  }
  if (channels % 4 != 0) throw ConfigError("channels must be divisible by 4, got " + std::to_string(channels));
  if (channels % heads != 0) {
    throw ConfigError("channels " + std::to_string(channels) + " not divisible by " + std::to_string(heads) +
                      " heads");
  }
  if (queries.invisible && !queries.visible) {
    throw ConfigError("the invisible embedding is derived from the visible query; enable visible as well");
  }
}

}  // namespace aisf
