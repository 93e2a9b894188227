#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "c4net/checkpoint.hpp"
#include "c4net/config.hpp"
#include "c4net/dataset.hpp"
#include "c4net/errors.hpp"
#include "c4net/gradcheck.hpp"
#include "c4net/losses.hpp"
#include "c4net/metrics.hpp"
#include "c4net/model.hpp"
#include "c4net/train.hpp"

namespace py = pybind11;
using namespace c4net;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

// (H,W) or (N,1,H,W) -> rank-4 tensor.
Tensor<double> mask_tensor(const DoubleArray& a) {
  std::vector<int> dims;
  for (py::ssize_t i = 0; i < a.ndim(); ++i) dims.push_back(static_cast<int>(a.shape(i)));
  if (dims.size() == 2) dims = {1, 1, dims[0], dims[1]};
  if (dims.size() != 4 || dims[1] != 1) throw ShapeError("expected a (H,W) or (N,1,H,W) array");
  return Tensor<double>(Shape(dims), std::vector<double>(a.data(), a.data() + a.size()));
}

template <typename T>
py::array_t<T> to_array(const std::vector<T>& v, std::vector<py::ssize_t> shape) {
  py::array_t<T> out(shape);
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::array_t<float> image_array(const Image& img) {
  if (img.channels == 1) return to_array(img.data, {img.height, img.width});
  return to_array(img.data, {img.channels, img.height, img.width});
}

Image image_from(const FloatArray& a, bool mask) {
  if (mask ? a.ndim() != 2 : a.ndim() != 3) {
    throw ShapeError(mask ? "mask must be (H,W)" : "image must be (3,H,W)");
  }
  Image img(mask ? 1 : static_cast<int>(a.shape(0)), static_cast<int>(a.shape(mask ? 0 : 1)),
            static_cast<int>(a.shape(mask ? 1 : 2)));
  std::copy(a.data(), a.data() + a.size(), img.data.begin());
  return img;
}

py::dict sample_dict(const ToySample& s) {
  py::dict d;
  d["id"] = s.id;
  d["image"] = image_array(s.image);
  d["mask"] = image_array(s.mask);
  return d;
}

std::vector<ToySample> samples_from(const py::list& items) {
  std::vector<ToySample> out;
  for (const auto& item : items) {
    const auto d = item.cast<py::dict>();
    ToySample s;
    s.id = d["id"].cast<std::string>();
    s.image = image_from(d["image"].cast<FloatArray>(), false);
    s.mask = image_from(d["mask"].cast<FloatArray>(), true);
    out.push_back(std::move(s));
  }
  return out;
}

MaskPair pair_from(const DoubleArray& pred, const DoubleArray& gt, const std::string& id) {
  if (pred.ndim() != 2 || gt.ndim() != 2 || pred.shape(0) != gt.shape(0) || pred.shape(1) != gt.shape(1)) {
    throw ShapeError("prediction and ground truth must be (H,W) arrays of equal shape");
  }
  MaskPair p;
  p.id = id;
  p.height = static_cast<int>(pred.shape(0));
  p.width = static_cast<int>(pred.shape(1));
  p.pred.assign(pred.data(), pred.data() + pred.size());
  for (py::ssize_t i = 0; i < gt.size(); ++i) p.gt.push_back(gt.data()[i] >= 0.5 ? 1 : 0);
  p.validate();
  return p;
}

py::dict report_dict(const MetricsReport& r) {
  py::dict d;
  d["mae"] = r.mae;
  d["mean_f"] = r.mean_f;
  d["e_xi"] = r.e_xi;
  d["mfp"] = r.mfp;
  d["mfn"] = r.mfn;
  std::vector<double> precision, recall, f(r.f_curve.begin(), r.f_curve.end());
  for (const auto& pt : r.pr_curve) {
    precision.push_back(pt.precision);
    recall.push_back(pt.recall);
  }
  d["precision"] = to_array(precision, {kThresholds});
  d["recall"] = to_array(recall, {kThresholds});
  d["f"] = to_array(f, {kThresholds});
  return d;
}

RunConfig config_from(const std::string& text) { return text.empty() ? RunConfig{} : parse_config(text); }

class PyModel {
 public:
  explicit PyModel(const std::string& config_text, std::uint64_t seed) : cfg_(config_from(config_text)) {
    cfg_.model.init_seed = seed;
    model_ = std::make_unique<Model<float>>(cfg_.model);
  }

  py::array_t<float> predict(const FloatArray& images) {
    if (images.ndim() != 4) throw ShapeError("images must be (N,3,H,W)");
    std::vector<int> dims;
    for (py::ssize_t i = 0; i < 4; ++i) dims.push_back(static_cast<int>(images.shape(i)));
    Tensor<float> x(Shape(dims), std::vector<float>(images.data(), images.data() + images.size()));
    const auto y = model_->predict(x, Mode::eval);
    const auto& s = y.shape();
    return to_array(y.values(), {s.n(), s.c(), s.h(), s.w()});
  }

  py::list train(const py::list& train_set, const py::list& val_set, std::uint64_t seed) {
    TrainConfig tc = cfg_.train;
    tc.seed = seed;
    const auto result = c4net::train(*model_, cfg_.loss, tc, samples_from(train_set), samples_from(val_set));
    py::list log;
    for (const auto& e : result.log) {
      py::dict d;
      d["epoch"] = e.epoch;
      d["loss"] = e.loss;
      d["val_mae"] = e.val_mae;
      d["lr_encoder"] = e.lr_encoder;
      d["lr_head"] = e.lr_head;
      log.append(d);
    }
    return log;
  }

  py::dict evaluate(const py::list& samples) { return report_dict(evaluate_model(*model_, samples_from(samples))); }

  void save(const std::string& path) const { save_checkpoint(path, *model_); }
  void load(const std::string& path) { load_checkpoint(path, *model_); }
  std::size_t parameter_count() const { return model_->parameters().trainable_count(); }
  std::string config() const { return format_config(cfg_); }

 private:
  RunConfig cfg_;
  std::unique_ptr<Model<float>> model_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Salient-object network, losses and metrics";

  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def(
      "generate_dataset",
      [](int n, int size, std::uint64_t seed) {
        py::list out;
        for (const auto& s : c4net::generate_dataset(n, size, seed)) out.append(sample_dict(s));
        return out;
      },
      py::arg("n"), py::arg("size") = 64, py::arg("seed") = 0,
      "List of {id, image (3,H,W) float32, mask (H,W) float32} samples.");

  m.def(
      "evaluate",
      [](const std::vector<DoubleArray>& preds, const std::vector<DoubleArray>& gts) {
        if (preds.size() != gts.size()) throw ContractError("evaluate: prediction and mask counts differ");
        std::vector<MaskPair> pairs;
        for (std::size_t i = 0; i < preds.size(); ++i) pairs.push_back(pair_from(preds[i], gts[i], std::to_string(i)));
        return report_dict(c4net::evaluate(pairs));
      },
      py::arg("preds"), py::arg("gts"), "Dataset metrics for lists of (H,W) predictions and binary masks.");

  m.def(
      "weight_map",
      [](const DoubleArray& gt, double lambda_tilde, int window_k) {
        LossConfig cfg;
        cfg.lambda_tilde = lambda_tilde;
        cfg.window_k = window_k;
        const auto w = c4net::weight_map(mask_tensor(gt), cfg);
        const auto& s = w.shape();
        return to_array(w.values(), {s.n(), s.c(), s.h(), s.w()});
      },
      py::arg("gt"), py::arg("lambda_tilde") = 5.0, py::arg("window_k") = 15);

  auto loss = [&m](const char* name, auto fn) {
    m.def(
        name,
        [fn](const DoubleArray& s, const DoubleArray& gt, std::optional<DoubleArray> omega) {
          const LossConfig cfg;
          const auto st = mask_tensor(s);
          const auto gtt = mask_tensor(gt);
          const auto om = omega ? mask_tensor(*omega) : c4net::weight_map(gtt, cfg);
          return fn(st, gtt, om, cfg);
        },
        py::arg("s"), py::arg("gt"), py::arg("omega") = py::none());
  };
  loss("wbce", [](const auto& s, const auto& g, const auto& o, const auto& c) { return wbce(s, g, o, c).item(); });
  loss("wiou", [](const auto& s, const auto& g, const auto& o, const auto&) { return wiou(s, g, o).item(); });
  loss("wel", [](const auto& s, const auto& g, const auto& o, const auto& c) { return wel(s, g, o, c).item(); });

  m.def("gradcheck_units", &gradcheck_units);
  m.def(
      "gradcheck",
      [](const std::string& unit, std::uint64_t seed) {
        const auto r = run_gradcheck(unit, seed);
        py::dict d;
        d["unit"] = r.unit;
        d["max_rel_error"] = r.max_rel_error;
        d["checked"] = r.checked;
        d["kinks"] = r.kinks;
        d["pass"] = r.pass();
        return d;
      },
      py::arg("unit"), py::arg("seed") = 0);

  m.def(
      "normalize_config", [](const std::string& text) { return format_config(parse_config(text)); },
      py::arg("text"), "Parses a key = value config and returns it with every key spelled out.");

  py::class_<PyModel>(m, "Model")
      .def(py::init<const std::string&, std::uint64_t>(), py::arg("config") = "", py::arg("seed") = 0)
      .def("predict", &PyModel::predict, py::arg("images"), "Level-1 masks (N,1,H,W) for images (N,3,H,W).")
      .def("train", &PyModel::train, py::arg("train_set"), py::arg("val_set") = py::list(), py::arg("seed") = 0)
      .def("evaluate", &PyModel::evaluate, py::arg("samples"))
      .def("save", &PyModel::save, py::arg("path"))
      .def("load", &PyModel::load, py::arg("path"))
      .def_property_readonly("parameter_count", &PyModel::parameter_count)
      .def_property_readonly("config", &PyModel::config);
}
