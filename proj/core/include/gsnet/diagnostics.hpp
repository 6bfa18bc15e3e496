#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "gsnet/model.hpp"
#include "gsnet/optim.hpp"
#include "gsnet/pgm.hpp"

namespace gsnet {

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double mean_rel_error = 0.0;
  std::size_t worst_index = 0;  // flat coordinate inside the tensor
  std::size_t checked = 0;      // coordinates compared
  // Sampled coordinates whose +-h stencil switched some ReLU. A central
  // difference across a kink is a secant, so these are replaced by other
  // coordinates and counted here instead of scored.
  std::size_t kinks = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;

  double max_rel_error() const;
  bool passed(double tol) const { return max_rel_error() < tol; }
};

inline constexpr double kDefaultFdStep = 1e-5;

// |a - b| / max(|a|, |b|, 1e-8)
double relative_error(double a, double b);

// Central differences of the scalar f around x against reverse-mode gradients.
// Throws InputError when f is not scalar or h <= 0.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           double h = kDefaultFdStep);

// Same check over a parameter list; f closes over the parameters, which are
// perturbed in place and restored. max_coords = 0 checks every coordinate,
// otherwise that many coordinates per tensor are sampled from seed.
// Coordinates whose stencil crosses a ReLU kink are counted, not scored.
GradCheckReport grad_check(const std::function<Tensor()>& f, const ParamList& params, double h = kDefaultFdStep,
                           std::size_t max_coords = 0, std::uint64_t seed = 0);

// Cross-entropy of the full model on (x, labels), checked over every parameter tensor.
GradCheckReport grad_check_model(const GsnetModel& model, const Tensor& x, std::span<const std::size_t> labels,
                                 double h = kDefaultFdStep, std::size_t max_coords = 8, std::uint64_t seed = 0);

inline constexpr double kSingular = -std::numeric_limits<double>::infinity();
inline constexpr double kGramEpsilon = 1e-12;

struct IndependenceReport {
  std::string input;
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool gram = false;            // true when the regularized Gram form was used
  std::vector<double> values;   // one per (sample, channel), sample-major
  double mean = 0.0;            // kSingular if any slice is singular
};

// log|det A| for square A (kSingular when numerically rank deficient),
// otherwise 0.5 * log det(A^T A + eps I).
double slice_log_det(std::span<const double> a, std::size_t rows, std::size_t cols);

IndependenceReport independence_probe(const Tensor& feat, const std::string& input = "");

struct IndependencePair {
  IndependenceReport raw;
  IndependenceReport encoded;
};

// Probes x [B,1,H,W] and the model's fused encoder map for the same input.
IndependencePair compare_independence(const GsnetModel& model, const Tensor& x);

// Min-max normalization to 8 bits; a constant map becomes 128.
GrayImage attention_to_image(const Tensor& weights);
// Writes attention_to_image as 8-bit PGM. The map is read as rows of the last axis.
void export_attention_map(const Tensor& weights, const std::filesystem::path& path);

// Mean |x| over channels of one sample: NCHW by default, NHWC when channels_last.
Tensor channel_energy(const Tensor& x, std::size_t sample = 0, bool channels_last = false);

std::string grad_report_to_json(const GradCheckReport& r);
std::string independence_to_json(const IndependencePair& p);

}  // namespace gsnet
