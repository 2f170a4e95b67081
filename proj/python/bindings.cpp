#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>

#include "aisformer/checkpoint.hpp"
#include "aisformer/errors.hpp"
#include "aisformer/evaluation.hpp"
#include "aisformer/pipeline.hpp"
#include "aisformer/roi_encoding.hpp"

namespace py = pybind11;
using namespace aisf;

namespace {

using BoolArray = py::array_t<bool, py::array::c_style | py::array::forcecast>;
using RealArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Bitmap bitmap_from(const BoolArray& a) {
  if (a.ndim() != 2) throw DimensionError("mask must be 2-D");
  Bitmap m = Bitmap::zeros(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  const bool* p = a.data();
  for (std::size_t i = 0; i < m.bits.size(); ++i) m.bits[i] = p[i];
  return m;
}

BoolArray bitmap_to(const Bitmap& m) {
  BoolArray out({m.height, m.width});
  bool* p = out.mutable_data();
  for (std::size_t i = 0; i < m.bits.size(); ++i) p[i] = m.bits[i];
  return out;
}

RealArray tensor_to(const Tensor& t) {
  RealArray out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

py::dict rle_to_dict(const RleMask& r) {
  py::dict d;
  d["size"] = py::make_tuple(r.height, r.width);
  d["counts"] = r.counts;
  return d;
}

RleMask rle_from_dict(const py::dict& d) {
  const auto size = d["size"].cast<std::pair<std::size_t, std::size_t>>();
  RleMask r{size.first, size.second, d["counts"].cast<std::vector<std::uint32_t>>()};
  rle_validate(r);
  return r;
}

BoundingBox box_from(const std::vector<double>& xyxy) {
  if (xyxy.size() != 4) throw InputError("box must be [x0, y0, x1, y1]");
  return {xyxy[0], xyxy[1], xyxy[2], xyxy[3]};
}

Image8 image_from(const ByteArray& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw DimensionError("image must be H x W or H x W x C");
  Image8 img;
  img.height = static_cast<std::size_t>(a.shape(0));
  img.width = static_cast<std::size_t>(a.shape(1));
  img.channels = a.ndim() == 3 ? static_cast<std::size_t>(a.shape(2)) : 1;
  img.pixels.assign(a.data(), a.data() + a.size());
  return img;
}

ByteArray image_to(const Image8& img) {
  ByteArray out({img.height, img.width, img.channels});
  std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
  return out;
}

AmodalInstance instance_from(const py::dict& d) {
  AmodalInstance g;
  g.image_id = d["image_id"].cast<std::int64_t>();
  g.category_id = d["category_id"].cast<std::int64_t>();
  g.amodal = bitmap_from(d["amodal"].cast<BoolArray>());
  return g;
}

// A loaded checkpoint ready for inference.
class PyModel {
 public:
  explicit PyModel(const std::filesystem::path& path)
      : checkpoint_(load_checkpoint(path)), model_(model_from_checkpoint(checkpoint_)) {}

  py::dict predict(const ByteArray& image, const std::vector<double>& box) const {
    const Image8 img = image_from(image);
    NoGradGuard guard;
    const HeadOutput out = model_.forward_roi(model_.features(image_to_tensor(img)), box_from(box));
    py::dict d;
    const std::size_t h = out.masks.height(), w = out.masks.width();
    for (MaskKind k : out.masks.kinds) {
      RealArray a({h, w});
      const auto p = out.masks.probabilities(k);
      std::copy(p.begin(), p.end(), a.mutable_data());
      d[mask_kind_name(k)] = a;
    }
    return d;
  }

  py::dict config() const {
    py::dict d;
    for (const auto& [k, v] : checkpoint_.config.to_map()) d[k.c_str()] = v;
    return d;
  }

  std::uint64_t iteration() const { return checkpoint_.iteration; }

 private:
  Checkpoint checkpoint_;
  AisformerModel model_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "aisformer C++ core";

  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def(
      "rle_encode", [](const BoolArray& mask) { return rle_to_dict(rle_encode(bitmap_from(mask))); },
      py::arg("mask"), "Column-major run-length encoding of a 2-D boolean mask.");
  m.def(
      "rle_decode", [](const py::dict& rle) { return bitmap_to(rle_decode(rle_from_dict(rle))); }, py::arg("rle"));
  m.def(
      "mask_iou", [](const py::dict& a, const py::dict& b) { return mask_iou(rle_from_dict(a), rle_from_dict(b)); },
      py::arg("a"), py::arg("b"));

  m.def(
      "positional_encoding",
      [](std::size_t h, std::size_t w, std::size_t c) { return tensor_to(positional_encoding(h, w, c)); },
      py::arg("height"), py::arg("width"), py::arg("channels"), "Sinusoidal 2-D encoding as [channels, h*w].");

  m.def(
      "roi_align",
      [](const RealArray& fm, const std::vector<double>& box, std::size_t out_h, std::size_t out_w,
         std::size_t samples_per_bin) {
        if (fm.ndim() != 3) throw DimensionError("feature map must be C x H x W");
        const Shape shape{static_cast<std::size_t>(fm.shape(0)), static_cast<std::size_t>(fm.shape(1)),
                          static_cast<std::size_t>(fm.shape(2))};
        const Tensor t(shape, std::vector<double>(fm.data(), fm.data() + fm.size()));
        return tensor_to(roi_align(t, box_from(box), out_h, out_w, samples_per_bin).values);
      },
      py::arg("feature_map"), py::arg("box"), py::arg("out_h"), py::arg("out_w"), py::arg("samples_per_bin") = 2);

  m.def(
      "synth_generate",
      [](std::uint64_t seed, std::size_t width, std::size_t height, std::size_t shapes) {
        const SynthScene scene = synth_generate(random_scene_spec(seed, width, height, shapes));
        py::list instances;
        for (const auto& inst : scene.instances) {
          py::dict d;
          d["category_id"] = inst.category_id;
          d["box"] = std::vector<double>{inst.box.x0, inst.box.y0, inst.box.x1, inst.box.y1};
          d["amodal"] = bitmap_to(inst.amodal);
          d["visible"] = bitmap_to(inst.visible);
          d["occluder"] = bitmap_to(inst.occluder);
          d["invisible"] = bitmap_to(inst.invisible);
          instances.append(d);
        }
        return py::make_tuple(image_to(scene.image), instances);
      },
      py::arg("seed"), py::arg("width") = 128, py::arg("height") = 128, py::arg("shapes") = 3,
      "Random occluded-shapes scene: (H x W x 3 uint8 image, list of instance dicts).");

  m.def(
      "evaluate",
      [](const py::list& detections, const py::list& ground_truth) {
        std::vector<Detection> dets;
        for (const auto& item : detections) {
          const auto d = item.cast<py::dict>();
          dets.push_back({d["image_id"].cast<std::int64_t>(), d["category_id"].cast<std::int64_t>(),
                          d["score"].cast<double>(), rle_encode(bitmap_from(d["mask"].cast<BoolArray>()))});
        }
        std::vector<AmodalInstance> gts;
        for (const auto& item : ground_truth) gts.push_back(instance_from(item.cast<py::dict>()));
        const EvalReport r = evaluate(dets, gts);
        py::dict out;
        out["AP"] = r.ap;
        out["AP50"] = r.ap50;
        out["AP75"] = r.ap75;
        out["AR"] = r.ar;
        return out;
      },
      py::arg("detections"), py::arg("ground_truth"),
      "COCO-style mask AP/AR. Detections: dicts with image_id, category_id, score, mask. Ground truth: dicts with "
      "image_id, category_id, amodal.");

  py::class_<PyModel>(m, "Model")
      .def(py::init<const std::filesystem::path&>(), py::arg("checkpoint"))
      .def("predict", &PyModel::predict, py::arg("image"), py::arg("box"),
           "Mask probabilities at mask resolution for one [x0, y0, x1, y1] box.")
      .def_property_readonly("config", &PyModel::config)
      .def_property_readonly("iteration", &PyModel::iteration);
}
