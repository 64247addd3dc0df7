#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "toprokit/attention.hpp"
#include "toprokit/entropy_stats.hpp"
#include "toprokit/layer_classifier.hpp"
#include "toprokit/matrix.hpp"
#include "toprokit/policy.hpp"
#include "toprokit/threading.hpp"
#include "toprokit/toy_var.hpp"

namespace py = pybind11;
using namespace toprokit;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix2D to_matrix(const DoubleArray& arr) {
    if (arr.ndim() != 2) {
        throw std::invalid_argument("expected a 2-D array");
    }
    const auto rows = static_cast<std::size_t>(arr.shape(0));
    const auto cols = static_cast<std::size_t>(arr.shape(1));
    std::vector<double> data(arr.data(), arr.data() + rows * cols);
    return Matrix2D(rows, cols, std::move(data));
}

py::array_t<double> from_matrix(const Matrix2D& m) {
    py::array_t<double> out({m.rows(), m.cols()});
    std::copy(m.data().begin(), m.data().end(), out.mutable_data());
    return out;
}

py::array_t<double> from_vector(const std::vector<double>& v) {
    return py::array_t<double>(static_cast<py::ssize_t>(v.size()), v.data());
}

Precision parse_precision(const std::string& s) {
    if (s == "f32") return Precision::f32;
    if (s == "f64") return Precision::f64;
    throw std::invalid_argument("precision must be 'f32' or 'f64'");
}

}  // namespace

PYBIND11_MODULE(_toprokit, m) {
    m.doc() = "Streaming attention entropy kernels and the tri-dimensional pruning policy";

    m.def(
        "naive_attention_entropy",
        [](const DoubleArray& q, const DoubleArray& k, const DoubleArray& v, double scale) {
            AttentionInput in{to_matrix(q), to_matrix(k), to_matrix(v), scale};
            const AttentionResult res = naive_attention_entropy(in);
            return py::make_tuple(from_matrix(res.O), from_vector(res.entropy));
        },
        py::arg("q"), py::arg("k"), py::arg("v"), py::arg("scale") = 0.0,
        "Dense attention with exact per-row entropy; returns (O, entropy).");

    m.def(
        "flash_attention",
        [](const DoubleArray& q, const DoubleArray& k, const DoubleArray& v, std::size_t b_r,
           std::size_t b_c, const std::string& precision, double scale) {
            AttentionInput in{to_matrix(q), to_matrix(k), to_matrix(v), scale};
            const AttentionResult res =
                flash_attention(in, {b_r, b_c}, parse_precision(precision));
            return from_matrix(res.O);
        },
        py::arg("q"), py::arg("k"), py::arg("v"), py::arg("b_r") = 64, py::arg("b_c") = 64,
        py::arg("precision") = "f64", py::arg("scale") = 0.0,
        "Blocked streaming attention; returns O.");

    m.def(
        "flash_attention_entropy",
        [](const DoubleArray& q, const DoubleArray& k, const DoubleArray& v, std::size_t b_r,
           std::size_t b_c, const std::string& precision, double scale) {
            AttentionInput in{to_matrix(q), to_matrix(k), to_matrix(v), scale};
            const AttentionResult res =
                flash_attention_entropy(in, {b_r, b_c}, parse_precision(precision));
            return py::make_tuple(from_matrix(res.O), from_vector(res.entropy));
        },
        py::arg("q"), py::arg("k"), py::arg("v"), py::arg("b_r") = 64, py::arg("b_c") = 64,
        py::arg("precision") = "f64", py::arg("scale") = 0.0,
        "Streaming attention with exact entropy; returns (O, entropy).");

    m.def(
        "row_reduce_xlogx",
        [](const DoubleArray& block) { return from_vector(row_reduce_xlogx(to_matrix(block))); },
        py::arg("block"), "Per-row sum of x*log(x), 0*log(0) = 0.");

    m.def("low_entropy_ratio", &low_entropy_ratio, py::arg("entropies"),
          "Fraction of entries strictly below the mean.");

    m.def(
        "normalize_entropy",
        [](const std::vector<double>& h) { return from_vector(normalize_entropy(h)); },
        py::arg("entropies"), "H_i / sum(H); raises on a zero-sum input.");

    m.def(
        "top2_singular_values",
        [](const DoubleArray& m_in) {
            const Top2Result r = top2_singular_values(to_matrix(m_in));
            return py::make_tuple(r.sigma1, r.sigma2);
        },
        py::arg("m"), "Two largest singular values via power iteration with deflation.");

    m.def(
        "layer_score",
        [](double sigma1, double sigma2, double beta, double epsilon) {
            return layer_score(sigma1, sigma2, beta, epsilon);
        },
        py::arg("sigma1"), py::arg("sigma2"), py::arg("beta") = 1.0,
        py::arg("epsilon") = 1e-12, "Returns (pc_ratio, score).");

    m.def(
        "scale_depth",
        [](const std::vector<double>& rho, double tau, bool at_least) -> py::object {
            PolicyConfig cfg;
            cfg.tau = tau;
            cfg.depth_comparison =
                at_least ? DepthComparison::at_least : DepthComparison::at_most;
            const ScaleDecision dec = scale_depth(rho, cfg);
            if (!dec.depth) return py::none();
            return py::int_(*dec.depth);
        },
        py::arg("rho"), py::arg("tau"), py::arg("at_least") = true,
        "First 1-based scale where the comparison holds, or None.");

    m.def(
        "token_tendency",
        [](std::size_t scale, std::size_t s_max, double score, const std::vector<double>& h) {
            return from_vector(token_tendency(scale, s_max, score, h));
        },
        py::arg("scale"), py::arg("s_max"), py::arg("layer_score"),
        py::arg("normalized_entropy"), "q_i = (s/S_max) * score * H_hat_i.");

    m.def(
        "keep_probability",
        [](const std::vector<double>& tendency, std::size_t scale, std::size_t depth,
           double alpha_min, double alpha_max) {
            PolicyConfig cfg;
            cfg.alpha_min = alpha_min;
            cfg.alpha_max = alpha_max;
            ScaleDecision dec;
            dec.rho_per_scale.assign(std::max(scale, depth), 0.0);
            dec.depth = depth;
            return from_vector(retention(tendency, scale, dec, cfg).keep_probability);
        },
        py::arg("tendency"), py::arg("scale"), py::arg("depth"), py::arg("alpha_min") = 0.2,
        py::arg("alpha_max") = 0.9,
        "Piecewise retention probability for a given pruning start depth.");

    m.def(
        "ssim",
        [](const DoubleArray& x, const DoubleArray& y, double c1, double c2) {
            return ssim(to_matrix(x), to_matrix(y), c1, c2);
        },
        py::arg("x"), py::arg("y"), py::arg("c1") = 1e-4, py::arg("c2") = 1e-4,
        "Global single-window SSIM with population statistics.");

    m.def(
        "read_tprv", [](const std::string& path) { return from_matrix(matrix_from_file(path)); },
        py::arg("path"), "Read a TPRV tensor as a 2-D array.");

    m.def(
        "write_tprv",
        [](const DoubleArray& arr, const std::string& path, const std::string& dtype) {
            if (dtype != "f32" && dtype != "f64") {
                throw std::invalid_argument("dtype must be 'f32' or 'f64'");
            }
            matrix_to_file(to_matrix(arr), path,
                           dtype == "f32" ? TprvDtype::f32 : TprvDtype::f64);
        },
        py::arg("arr"), py::arg("path"), py::arg("dtype") = "f64",
        "Write a 2-D array as a TPRV tensor.");

    m.def("set_thread_count", &set_thread_count, py::arg("n"),
          "Cap kernel worker threads (0 = hardware concurrency).");
}
