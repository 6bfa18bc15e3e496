#include "gsnet/diagnostics.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

#include "gsnet/checkpoint.hpp"
#include "gsnet/error.hpp"
#include "gsnet/ops.hpp"
#include "gsnet/random.hpp"

namespace gsnet {

double GradCheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_error);
  return m;
}

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

namespace {

double eval_scalar(const std::function<Tensor()>& f) {
  NoGradGuard guard;
  Tensor y = f();
  if (y.size() != 1) throw InputError("grad_check: function is not scalar, got " + shape_to_string(y.shape()));
  return y.item();
}

// Visiting order: natural when every coordinate is checked, else a seeded shuffle.
std::vector<std::size_t> coord_order(std::size_t n, std::size_t max_coords, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (max_coords == 0 || max_coords >= n) return idx;
  for (std::size_t i = 0; i + 1 < n; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
  return idx;
}

double eval_signed(const std::function<Tensor()>& f, std::uint64_t& signature) {
  ReluSignProbe probe;
  const double v = eval_scalar(f);
  signature = probe.signature();
  return v;
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor()>& f, const ParamList& params, double h, std::size_t max_coords,
                           std::uint64_t seed) {
  if (!(h > 0.0)) throw InputError("grad_check: step must be positive");
  std::vector<bool> previous;
  for (const auto& [name, p] : params) {
    previous.push_back(p.requires_grad());
    Tensor t = p;
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tensor y = f();
  if (y.size() != 1) throw InputError("grad_check: function is not scalar, got " + shape_to_string(y.shape()));
  backward(y);

  std::uint64_t base = 0;
  eval_signed(f, base);

  Rng rng(seed);
  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor p = params[k].second;
    const std::vector<double> analytic(p.grad().begin(), p.grad().end());
    GradCheckEntry entry{params[k].first, 0.0, 0.0, 0, 0, 0};
    const std::size_t want = max_coords == 0 ? p.size() : std::min(max_coords, p.size());
    double total = 0.0;
    for (auto i : coord_order(p.size(), max_coords, rng)) {
      if (entry.checked == want) break;
      double& v = p.data()[i];
      const double saved = v;
      std::uint64_t sig_up = 0, sig_down = 0;
      v = saved + h;
      const double up = eval_signed(f, sig_up);
      v = saved - h;
      const double down = eval_signed(f, sig_down);
      v = saved;
      if (sig_up != base || sig_down != base) {
        ++entry.kinks;
        continue;
      }
      const double err = relative_error((up - down) / (2.0 * h), analytic[i]);
      total += err;
      if (entry.checked == 0 || err > entry.max_rel_error) {
        entry.max_rel_error = err;
        entry.worst_index = i;
      }
      ++entry.checked;
    }
    entry.mean_rel_error = entry.checked ? total / static_cast<double>(entry.checked) : 0.0;
    report.entries.push_back(entry);
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor t = params[k].second;
    t.zero_grad();
    t.set_requires_grad(previous[k]);
  }
  return report;
}

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
  Tensor input = x.clone();
  return grad_check([&] { return f(input); }, ParamList{{"x", input}}, h);
}

GradCheckReport grad_check_model(const GsnetModel& model, const Tensor& x, std::span<const std::size_t> labels,
                                 double h, std::size_t max_coords, std::uint64_t seed) {
  const std::vector<std::size_t> y(labels.begin(), labels.end());
  return grad_check([&] { return cross_entropy(forward(model, x), y); }, model.parameters(), h, max_coords, seed);
}

double slice_log_det(std::span<const double> a, std::size_t rows, std::size_t cols) {
  if (a.size() != rows * cols || rows == 0 || cols == 0) throw DimensionError("slice_log_det: bad slice shape");
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const Mat> m(a.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  if (rows == cols) {
    Eigen::FullPivLU<Mat> lu(m);
    if (!lu.isInvertible()) return kSingular;
    double s = 0.0;
    const auto& u = lu.matrixLU();
    for (Eigen::Index i = 0; i < u.rows(); ++i) s += std::log(std::abs(u(i, i)));
    return s;
  }
  Mat gram = m.transpose() * m;
  gram.diagonal().array() += kGramEpsilon;
  Eigen::LLT<Mat> llt(gram);
  if (llt.info() != Eigen::Success) return kSingular;
  double s = 0.0;
  const Mat l = llt.matrixL();
  // 0.5 * log det(L L^T) = sum log L_ii
  for (Eigen::Index i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
  return s;
}

IndependenceReport independence_probe(const Tensor& feat, const std::string& input) {
  if (feat.rank() != 4) throw DimensionError("independence_probe: expected [B,C,H,W], got " + shape_to_string(feat.shape()));
  IndependenceReport r;
  r.input = input;
  r.rows = feat.dim(2);
  r.cols = feat.dim(3);
  r.gram = r.rows != r.cols;
  const std::size_t slices = feat.dim(0) * feat.dim(1), area = r.rows * r.cols;
  const auto d = feat.data();
  double total = 0.0;
  for (std::size_t s = 0; s < slices; ++s) {
    r.values.push_back(slice_log_det(d.subspan(s * area, area), r.rows, r.cols));
    total += r.values.back();
  }
  r.mean = total / static_cast<double>(slices);
  return r;
}

IndependencePair compare_independence(const GsnetModel& model, const Tensor& x) {
  NoGradGuard guard;
  auto enc = encoder_forward(model, x);
  return {independence_probe(x, "input"), independence_probe(enc.feat_e, "encoder")};
}

GrayImage attention_to_image(const Tensor& weights) {
  if (weights.rank() == 0 || weights.size() == 0) throw InputError("export_attention_map: empty map");
  const auto d = weights.data();
  const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
  if (*lo < 0.0) throw InputError("export_attention_map: weights must be nonnegative");
  GrayImage img;
  img.width = weights.shape().back();
  img.height = weights.size() / img.width;
  img.maxval = 255;
  img.samples.reserve(d.size());
  const double range = *hi - *lo;
  for (double v : d) {
    const double t = range > 0.0 ? (v - *lo) / range : 0.5;
    img.samples.push_back(static_cast<std::uint16_t>(std::lround(t * 255.0)));
  }
  return img;
}

void export_attention_map(const Tensor& weights, const std::filesystem::path& path) {
  write_pgm(path, attention_to_image(weights));
}

Tensor channel_energy(const Tensor& x, std::size_t sample, bool channels_last) {
  if (x.rank() != 4) throw DimensionError("channel_energy: expected rank 4, got " + shape_to_string(x.shape()));
  if (sample >= x.dim(0)) throw InputError("channel_energy: sample index out of range");
  const std::size_t c = channels_last ? x.dim(3) : x.dim(1);
  const std::size_t h = channels_last ? x.dim(1) : x.dim(2);
  const std::size_t w = channels_last ? x.dim(2) : x.dim(3);
  std::vector<double> out(h * w, 0.0);
  const auto d = x.data();
  const std::size_t base = sample * c * h * w;
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t p = 0; p < h * w; ++p) {
      out[p] += std::abs(channels_last ? d[base + p * c + k] : d[base + k * h * w + p]);
    }
  }
  for (auto& v : out) v /= static_cast<double>(c);
  return Tensor::from_data({h, w}, std::move(out));
}

namespace {

nlohmann::ordered_json finite_or_sentinel(double v) {
  if (std::isfinite(v)) return v;
  return v < 0 ? "-inf" : (v > 0 ? "inf" : "nan");
}

nlohmann::ordered_json to_json(const IndependenceReport& r) {
  nlohmann::ordered_json j;
  j["input"] = r.input;
  j["rows"] = r.rows;
  j["cols"] = r.cols;
  j["form"] = r.gram ? "gram" : "direct";
  j["mean"] = finite_or_sentinel(r.mean);
  auto values = nlohmann::ordered_json::array();
  for (double v : r.values) values.push_back(finite_or_sentinel(v));
  j["values"] = std::move(values);
  return j;
}

}  // namespace

std::string grad_report_to_json(const GradCheckReport& r) {
  nlohmann::ordered_json j;
  j["max_rel_error"] = r.max_rel_error();
  auto entries = nlohmann::ordered_json::array();
  for (const auto& e : r.entries) {
    entries.push_back({{"name", e.name},
                       {"max_rel_error", e.max_rel_error},
                       {"mean_rel_error", e.mean_rel_error},
                       {"worst_index", e.worst_index},
                       {"checked", e.checked},
                       {"kinks", e.kinks}});
  }
  j["entries"] = std::move(entries);
  return j.dump(2) + "\n";
}

std::string independence_to_json(const IndependencePair& p) {
  nlohmann::ordered_json j;
  j["raw"] = to_json(p.raw);
  j["encoded"] = to_json(p.encoded);
  return j.dump(2) + "\n";
}

}  // namespace gsnet
