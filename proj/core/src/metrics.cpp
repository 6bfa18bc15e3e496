#include "gsnet/metrics.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

#include "gsnet/error.hpp"

namespace gsnet {

void EvalSet::validate() const {
  if (y.empty()) throw InputError("EvalSet: no samples");
  if (y.size() != y_hat.size()) {
    throw InputError("EvalSet: " + std::to_string(y.size()) + " labels but " + std::to_string(y_hat.size()) +
                     " predictions");
  }
}

namespace {

std::size_t level_index(double v, std::size_t n, const char* what) {
  const double r = std::round(v);
  if (!(r >= 0.0) || r >= static_cast<double>(n)) {
    throw InputError(std::string("EvalSet: ") + what + " level " + std::to_string(v) + " outside [0," +
                     std::to_string(n) + ")");
  }
  return static_cast<std::size_t>(r);
}

double population_variance(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return acc / static_cast<double>(v.size());
}

struct Counts {
  std::vector<double> tp, predicted, actual;
};

Counts per_level(const std::vector<std::vector<std::size_t>>& cm) {
  const std::size_t n = cm.size();
  Counts c{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      c.actual[i] += static_cast<double>(cm[i][j]);
      c.predicted[j] += static_cast<double>(cm[i][j]);
    }
    c.tp[i] = static_cast<double>(cm[i][i]);
  }
  return c;
}

double map_from(const Counts& c) {
  double sum = 0.0;
  for (std::size_t i = 0; i < c.tp.size(); ++i) sum += c.predicted[i] > 0 ? c.tp[i] / c.predicted[i] : 0.0;
  return sum / static_cast<double>(c.tp.size());
}

double recall_from(const Counts& c, RecallMode mode) {
  if (mode == RecallMode::kMicro) {
    double tp = 0.0, total = 0.0;
    for (std::size_t i = 0; i < c.tp.size(); ++i) {
      tp += c.tp[i];
      total += c.actual[i];
    }
    return tp / total;
  }
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t i = 0; i < c.tp.size(); ++i) {
    if (c.actual[i] == 0) continue;
    sum += c.tp[i] / c.actual[i];
    ++present;
  }
  return sum / static_cast<double>(present);
}

double f1_from(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace

double biased_accuracy(const EvalSet& es, double alpha, double beta, double tol) {
  es.validate();
  if (alpha < 0.0 || beta < 0.0) throw InputError("biased_accuracy: alpha and beta must be >= 0");
  std::size_t exact = 0, near = 0;
  for (std::size_t i = 0; i < es.size(); ++i) {
    const double d = std::abs(es.y_hat[i] - es.y[i]);
    if (d == 0.0) ++exact;
    if (d <= tol) ++near;
  }
  const double m = static_cast<double>(es.size());
  return alpha * static_cast<double>(exact) / m + beta * static_cast<double>(near) / m;
}

std::vector<std::vector<std::size_t>> confusion_matrix(const EvalSet& es) {
  es.validate();
  if (es.num_levels == 0) throw InputError("EvalSet: num_levels must be positive");
  std::vector<std::vector<std::size_t>> cm(es.num_levels, std::vector<std::size_t>(es.num_levels, 0));
  for (std::size_t i = 0; i < es.size(); ++i) {
    ++cm[level_index(es.y[i], es.num_levels, "true")][level_index(es.y_hat[i], es.num_levels, "predicted")];
  }
  return cm;
}

double mean_average_precision(const EvalSet& es) { return map_from(per_level(confusion_matrix(es))); }

double recall_rate(const EvalSet& es, RecallMode mode) { return recall_from(per_level(confusion_matrix(es)), mode); }

PrecisionF1 f1_score(const EvalSet& es, RecallMode mode) {
  const auto c = per_level(confusion_matrix(es));
  const double p = map_from(c);
  return {p, f1_from(p, recall_from(c, mode))};
}

std::optional<double> explained_variance(const EvalSet& es) {
  es.validate();
  const double var_y = population_variance(es.y);
  if (var_y == 0.0) return std::nullopt;
  std::vector<double> res(es.size());
  for (std::size_t i = 0; i < es.size(); ++i) res[i] = es.y[i] - es.y_hat[i];
  return 1.0 - population_variance(res) / var_y;
}

double mean_squared_error(const EvalSet& es) {
  es.validate();
  double acc = 0.0;
  for (std::size_t i = 0; i < es.size(); ++i) acc += (es.y[i] - es.y_hat[i]) * (es.y[i] - es.y_hat[i]);
  return acc / static_cast<double>(es.size());
}

std::optional<double> r2_score(const EvalSet& es) {
  es.validate();
  const double var_y = population_variance(es.y);
  if (var_y == 0.0) return std::nullopt;
  return 1.0 - mean_squared_error(es) / var_y;
}

EvalReport evaluate_all(const EvalSet& es, RecallMode mode) {
  EvalReport r;
  r.confusion = confusion_matrix(es);
  const auto c = per_level(r.confusion);
  r.acc = biased_accuracy(es);
  r.map = map_from(c);
  r.recall = recall_from(c, mode);
  r.precision = r.map;
  r.f1 = f1_from(r.precision, r.recall);
  r.evs = explained_variance(es);
  r.mse = mean_squared_error(es);
  r.r2 = r2_score(es);
  return r;
}

std::string report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["acc"] = r.acc;
  j["map"] = r.map;
  j["recall"] = r.recall;
  j["precision"] = r.precision;
  j["f1"] = r.f1;
  j["evs"] = r.evs ? nlohmann::ordered_json(*r.evs) : nlohmann::ordered_json(nullptr);
  j["mse"] = r.mse;
  j["r2"] = r.r2 ? nlohmann::ordered_json(*r.r2) : nlohmann::ordered_json(nullptr);
  j["confusion"] = r.confusion;
  return j.dump(2) + "\n";
}

std::string report_csv_header() { return "acc,map,recall,precision,f1,evs,mse,r2"; }

std::string report_to_csv_row(const EvalReport& r) {
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  auto opt = [&](const std::optional<double>& v) { return v ? num(*v) : std::string(); };
  return num(r.acc) + "," + num(r.map) + "," + num(r.recall) + "," + num(r.precision) + "," + num(r.f1) + "," +
         opt(r.evs) + "," + num(r.mse) + "," + opt(r.r2);
}

}  // namespace gsnet
