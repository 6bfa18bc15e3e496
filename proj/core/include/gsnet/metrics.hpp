#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace gsnet {

// Ground-truth and predicted grain levels. Levels are reals so half-level
// grades are representable; the confusion matrix rounds to the nearest level.
struct EvalSet {
  std::vector<double> y;
  std::vector<double> y_hat;
  std::size_t num_levels = 0;

  std::size_t size() const { return y.size(); }
  // Throws InputError when empty or lengths differ.
  void validate() const;
};

inline constexpr double kAlpha = 0.4;
inline constexpr double kBeta = 0.6;
inline constexpr double kLevelTolerance = 0.5;

enum class RecallMode { kMacro, kMicro };

struct EvalReport {
  double acc = 0.0;
  double map = 0.0;
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  std::optional<double> evs;  // empty when Var{y} == 0
  double mse = 0.0;
  std::optional<double> r2;   // empty when Var{y} == 0
  std::vector<std::vector<std::size_t>> confusion;  // [truth][prediction]
};

// alpha * exact-match rate + beta * rate of |y_hat - y| <= tol.
double biased_accuracy(const EvalSet& es, double alpha = kAlpha, double beta = kBeta, double tol = kLevelTolerance);

// Requires every rounded level in [0, num_levels).
std::vector<std::vector<std::size_t>> confusion_matrix(const EvalSet& es);

// Mean one-vs-rest precision over all levels; a level never predicted scores 0.
double mean_average_precision(const EvalSet& es);

// Macro: mean per-level recall over levels present in y. Micro: pooled TP / (TP + FN).
double recall_rate(const EvalSet& es, RecallMode mode = RecallMode::kMacro);

struct PrecisionF1 {
  double precision = 0.0;
  double f1 = 0.0;
};
PrecisionF1 f1_score(const EvalSet& es, RecallMode mode = RecallMode::kMacro);

std::optional<double> explained_variance(const EvalSet& es);
double mean_squared_error(const EvalSet& es);
std::optional<double> r2_score(const EvalSet& es);

EvalReport evaluate_all(const EvalSet& es, RecallMode mode = RecallMode::kMacro);

// {"acc":..,"map":..,"recall":..,"precision":..,"f1":..,"evs":..,"mse":..,"r2":..,"confusion":[[..]]}
// Undefined EVS/R2 serialize as null.
std::string report_to_json(const EvalReport& r);
// acc,map,recall,precision,f1,evs,mse,r2 (undefined fields left empty).
std::string report_csv_header();
std::string report_to_csv_row(const EvalReport& r);

}  // namespace gsnet
