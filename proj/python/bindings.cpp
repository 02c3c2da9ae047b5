#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>
#include <string>
#include <vector>

#include "fusiongan/analysis.hpp"
#include "fusiongan/cli.hpp"
#include "fusiongan/errors.hpp"
#include "fusiongan/layers.hpp"
#include "fusiongan/objective.hpp"
#include "fusiongan/rng.hpp"
#include "fusiongan/taskgen.hpp"
#include "fusiongan/tensor.hpp"

namespace py = pybind11;
using namespace fgan;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<int, py::array::c_style | py::array::forcecast>;

// Arrays of rank below 4 are padded with leading unit dimensions.
Tensor to_tensor(const FloatArray& a, bool requires_grad = false) {
  if (a.ndim() < 1 || a.ndim() > 4) {
    throw DimensionError("expected an array of rank 1 to 4, got rank " + std::to_string(a.ndim()));
  }
  int dims[4] = {1, 1, 1, 1};
  for (py::ssize_t k = 0; k < a.ndim(); ++k) dims[4 - a.ndim() + k] = static_cast<int>(a.shape(k));
  const Shape s{dims[0], dims[1], dims[2], dims[3]};
  if (s.numel() == 0) throw DimensionError("empty array");
  return Tensor::from(s, std::vector<float>(a.data(), a.data() + a.size()), requires_grad);
}

FloatArray to_array(const Tensor& t) {
  const Shape& s = t.shape();
  FloatArray out({s.n, s.c, s.h, s.w});
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

FloatArray grad_array(const Tensor& t) {
  const Shape& s = t.shape();
  FloatArray out({s.n, s.c, s.h, s.w});
  if (t.has_grad()) {
    std::copy(t.grad().begin(), t.grad().end(), out.mutable_data());
  } else {
    std::fill(out.mutable_data(), out.mutable_data() + out.size(), 0.0f);
  }
  return out;
}

std::vector<double> to_vector(const DoubleArray& a) {
  if (a.ndim() != 1) throw DimensionError("expected a vector, got rank " + std::to_string(a.ndim()));
  return {a.data(), a.data() + a.size()};
}

Matrix to_matrix(const DoubleArray& a) {
  if (a.ndim() != 2) throw DimensionError("expected a matrix, got rank " + std::to_string(a.ndim()));
  Matrix m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), m.data.begin());
  return m;
}

DoubleArray vector_array(const std::vector<double>& v) {
  DoubleArray out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(v.size())});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

DoubleArray matrix_array(const Matrix& m) {
  DoubleArray out({m.rows, m.cols});
  std::copy(m.data.begin(), m.data.end(), out.mutable_data());
  return out;
}

LabelMap to_labels(const IntArray& a) {
  if (a.ndim() != 2) throw DimensionError("label map must be 2-D, got rank " + std::to_string(a.ndim()));
  LabelMap m;
  m.height = static_cast<int>(a.shape(0));
  m.width = static_cast<int>(a.shape(1));
  m.labels.assign(a.data(), a.data() + a.size());
  return m;
}

IntArray labels_array(const LabelMap& m) {
  IntArray out({m.height, m.width});
  std::copy(m.labels.begin(), m.labels.end(), out.mutable_data());
  return out;
}

FusionInstance make_instance(const DoubleArray& x, const DoubleArray& y, const DoubleArray& u,
                             const DoubleArray& v, const DoubleArray& c, const DoubleArray& d,
                             const std::string& activation, double alpha) {
  FusionInstance inst;
  inst.x = to_vector(x);
  inst.y = to_vector(y);
  inst.U = to_matrix(u);
  inst.V = to_matrix(v);
  inst.c = to_vector(c);
  inst.d = to_vector(d);
  inst.activation = parse_activation(activation, alpha);
  inst.validate();
  return inst;
}

py::dict instance_dict(const FusionInstance& inst) {
  py::dict out;
  out["x"] = vector_array(inst.x);
  out["y"] = vector_array(inst.y);
  out["U"] = matrix_array(inst.U);
  out["V"] = matrix_array(inst.V);
  out["c"] = vector_array(inst.c);
  out["d"] = vector_array(inst.d);
  out["concat"] = vector_array(inst.concat_signal());
  out["fused"] = vector_array(inst.fused_signal());
  return out;
}

py::dict sweep_dict(const SweepReport& r) {
  py::dict out;
  out["trials"] = r.trials;
  out["applicable"] = r.applicable;
  out["violations"] = r.violations;
  out["min_margin"] = r.min_margin;
  return out;
}

// Scalar loss and its gradients with respect to each input array.
py::tuple loss_with_grads(const Tensor& loss, const std::vector<Tensor>& inputs) {
  backward(loss);
  py::list grads;
  for (const auto& t : inputs) grads.append(grad_array(t));
  return py::make_tuple(static_cast<double>(loss.item()), py::tuple(grads));
}

Tensor optional_bias(const std::optional<FloatArray>& bias) {
  if (!bias) return Tensor();
  const Tensor b = to_tensor(*bias);
  return Tensor::from({1, static_cast<int>(b.numel()), 1, 1}, {b.data().begin(), b.data().end()});
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "fusiongan core bindings";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<CheckpointError>(m, "CheckpointError", base.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());
  py::register_exception<GraphError>(m, "GraphError", base.ptr());
  py::register_exception<ArchitectureError>(m, "ArchitectureError", base.ptr());

  m.def(
      "conv2d",
      [](const FloatArray& input, const FloatArray& weight, const std::optional<FloatArray>& bias,
         int stride, int pad) {
        return to_array(conv2d(to_tensor(input), to_tensor(weight), optional_bias(bias), stride, pad));
      },
      py::arg("input"), py::arg("weight"), py::arg("bias") = py::none(), py::arg("stride") = 1,
      py::arg("pad") = 0, "Cross-correlation of an NCHW input with a (C_out, C_in, kH, kW) weight.");

  m.def(
      "transposed_conv2d",
      [](const FloatArray& input, const FloatArray& weight, const std::optional<FloatArray>& bias,
         int stride, int pad) {
        return to_array(
            transposed_conv2d(to_tensor(input), to_tensor(weight), optional_bias(bias), stride, pad));
      },
      py::arg("input"), py::arg("weight"), py::arg("bias") = py::none(), py::arg("stride") = 1,
      py::arg("pad") = 0, "Adjoint of conv2d; weight is (C_in, C_out, kH, kW).");

  m.def(
      "spectral_normalize",
      [](const FloatArray& weight, std::uint64_t seed, int steps) {
        if (steps < 1) throw ConfigError("steps must be at least 1, got " + std::to_string(steps));
        const Tensor w = to_tensor(weight);
        SpectralState state = init_spectral_state(w, seed);
        Tensor out;
        for (int k = 0; k < steps; ++k) out = spectral_normalize(w, state);
        return py::make_tuple(to_array(out), static_cast<double>(state.sigma_estimate));
      },
      py::arg("weight"), py::arg("seed") = 0, py::arg("steps") = 1,
      "Returns (W / sigma, sigma) after `steps` power-iteration updates.");

  m.def(
      "d_loss",
      [](const FloatArray& real, const FloatArray& fake) {
        const Tensor r = to_tensor(real, true);
        const Tensor f = to_tensor(fake, true);
        return loss_with_grads(d_loss(r, f), {r, f});
      },
      py::arg("logits_real"), py::arg("logits_fake"),
      "Discriminator loss and its gradients: (value, (d/dreal, d/dfake)).");

  m.def(
      "g_loss",
      [](const FloatArray& fake_logits, const FloatArray& y_fake, const FloatArray& y_real,
         double lambda_l1, const std::string& form) {
        const Tensor l = to_tensor(fake_logits, true);
        const Tensor yf = to_tensor(y_fake, true);
        return loss_with_grads(
            g_loss(l, yf, to_tensor(y_real), lambda_l1, parse_generator_loss(form)), {l, yf});
      },
      py::arg("logits_fake"), py::arg("y_fake"), py::arg("y_real"), py::arg("lambda_l1") = 100.0,
      py::arg("form") = "nonsaturating",
      "Generator loss and its gradients: (value, (d/dlogits, d/dy_fake)).");

  m.def(
      "mean_iou",
      [](const IntArray& pred, const IntArray& gt, int class_count) {
        return mean_iou(to_labels(pred), to_labels(gt), class_count);
      },
      py::arg("pred"), py::arg("gt"), py::arg("class_count"));

  m.def(
      "pixel_accuracy",
      [](const IntArray& pred, const IntArray& gt) {
        return pixel_accuracy(to_labels(pred), to_labels(gt));
      },
      py::arg("pred"), py::arg("gt"));

  m.def(
      "depth_metrics",
      [](const FloatArray& pred, const FloatArray& gt) {
        const DepthMetrics r = depth_metrics({pred.data(), static_cast<std::size_t>(pred.size())},
                                             {gt.data(), static_cast<std::size_t>(gt.size())});
        py::dict out;
        out["rel"] = r.rel;
        out["rms"] = r.rms;
        out["log10"] = r.log10;
        return out;
      },
      py::arg("pred"), py::arg("gt"));

  m.def(
      "check_fusion_inequality",
      [](const DoubleArray& x, const DoubleArray& y, const DoubleArray& u, const DoubleArray& v,
         const DoubleArray& c, const DoubleArray& d) {
        const InequalityResult r = check_fusion_inequality(make_instance(x, y, u, v, c, d, "relu", 0.0));
        return py::make_tuple(r.holds, vector_array(r.margin));
      },
      py::arg("x"), py::arg("y"), py::arg("U"), py::arg("V"), py::arg("c"), py::arg("d"),
      "ReLU check fused >= concat; returns (holds, fused - concat).");

  m.def(
      "check_lemma1",
      [](const DoubleArray& x, const DoubleArray& y, const DoubleArray& u, const DoubleArray& v,
         const DoubleArray& c, const DoubleArray& d, const std::string& activation, double alpha) {
        const Lemma1Result r = check_lemma1(make_instance(x, y, u, v, c, d, activation, alpha));
        return py::make_tuple(r.applicable, r.holds, vector_array(r.margin));
      },
      py::arg("x"), py::arg("y"), py::arg("U"), py::arg("V"), py::arg("c"), py::arg("d"),
      py::arg("activation") = "leaky_relu", py::arg("alpha") = 0.2,
      "Returns (applicable, holds, |act(a)| + |act(b)| - |act(a + b)|).");

  m.def(
      "find_leaky_counterexample",
      [](double alpha, std::uint64_t seed, int max_trials) -> py::object {
        Rng rng(seed);
        const auto inst = find_leaky_counterexample(alpha, rng, max_trials);
        if (!inst) return py::none();
        return instance_dict(*inst);
      },
      py::arg("alpha") = 0.2, py::arg("seed") = 0, py::arg("max_trials") = 10000,
      "Random search for an instance with |fused| > |concat|; None when not found.");

  m.def(
      "sweep_fusion_inequality",
      [](int trials, std::uint64_t seed) { return sweep_dict(sweep_fusion_inequality(trials, seed)); },
      py::arg("trials") = 10000, py::arg("seed") = 0);

  m.def(
      "sweep_lemma1",
      [](const std::string& activation, double alpha, int trials, std::uint64_t seed) {
        return sweep_dict(sweep_lemma1(parse_activation(activation, alpha), trials, seed));
      },
      py::arg("activation") = "leaky_relu", py::arg("alpha") = 0.2, py::arg("trials") = 10000,
      py::arg("seed") = 0);

  m.def(
      "generate_sample",
      [](const std::string& task, std::int64_t id, int image_size, std::uint64_t seed) {
        SceneSpec spec;
        spec.image_size = image_size;
        spec.min_shape_size = std::max(2, image_size / 5);
        spec.max_shape_size = std::max(spec.min_shape_size, image_size / 2);
        spec.seed = seed;
        const SamplePair p = generate_sample(spec, parse_task(task), id);
        py::dict out;
        out["x"] = to_array(p.x);
        out["y"] = to_array(p.y);
        out["labels"] = labels_array(p.labels);
        FloatArray depth(std::vector<py::ssize_t>{static_cast<py::ssize_t>(p.depth.size())});
        std::copy(p.depth.begin(), p.depth.end(), depth.mutable_data());
        out["depth"] = depth;
        return out;
      },
      py::arg("task"), py::arg("id"), py::arg("image_size") = 64, py::arg("seed") = 0,
      "One synthetic (x, y) pair with its raw labels and depth.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<const char*> argv{"fusiongan"};
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out;
        std::ostringstream err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command-line tool in-process: (exit code, stdout, stderr).");
}
